/* Minimal C client: load, run and analyze a scenario through the C ABI.
 *
 * Build from the workspace root after `cargo build --release`:
 *   cc -o demo crates/ffi/examples/demo.c \
 *      -Icrates/ffi/include target/release/libiodsim_ffi.a -lpthread -ldl -lm
 */
#include "iodsim.h"
#include <stdio.h>

int main(int argc, char **argv) {
    const char *scenario = argc > 1 ? argv[1] : "scenarios/scenario1.json";
    const char *results = argc > 2 ? argv[2] : "results/ffi-demo";

    IodsimScenario *handle = NULL;
    char *diag = NULL;
    IodsimStatus st = iodsim_scenario_load_file(scenario, &handle, &diag);
    if (st != IODSIM_STATUS_OK) {
        fprintf(stderr, "load failed (%d): %s\n", (int)st, diag ? diag : "");
        iodsim_string_free(diag);
        return 1;
    }
    iodsim_string_free(diag);

    IodsimRunStats stats;
    char *err = NULL;
    st = iodsim_scenario_run(handle, results, &stats, &err);
    if (st != IODSIM_STATUS_OK) {
        fprintf(stderr, "run failed (%d): %s\n", (int)st, err ? err : "");
        iodsim_string_free(err);
        iodsim_scenario_free(handle);
        return 1;
    }
    printf("simulated %.0f s in %.3f s wall (%llu events), iodsim %s\n",
           stats.virtual_seconds, stats.wall_seconds,
           (unsigned long long)stats.events_processed, iodsim_version());

    char *csv = NULL;
    if (iodsim_analyze(results, "plr", 1.0, &csv, &err) == IODSIM_STATUS_OK) {
        printf("%s", csv);
    }
    iodsim_string_free(csv);
    iodsim_string_free(err);
    iodsim_scenario_free(handle);
    return 0;
}
