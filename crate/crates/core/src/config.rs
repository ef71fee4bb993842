//! Scenario configuration: parses and semantically validates the JSON
//! scenario file into a [`ScenarioConfig`].
//!
//! Decoding is a single walk over the JSON value with a path-tracking
//! context: missing mandatory keys and broken cross-references become errors
//! with their JSON path, unknown keys become warnings. `parse_scenario`
//! either returns the fully-defaulted config (plus warnings) or a
//! [`ValidationReport`]; malformed JSON surfaces the syntax error position.

use crate::channel::WallLossTable;
use crate::world::{BuildingKind, WallMaterial};
use serde_json::Value;
use std::fmt;
use std::net::Ipv4Addr;
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CURVE_STEP: f64 = 0.001;
pub const DEFAULT_BATTERY_SAMPLING: f64 = 0.1;
pub const DEFAULT_TELEMETRY_PORT: u16 = 80;
pub const DEFAULT_GENERIC_PORT: u16 = 4242;
pub const DEFAULT_GENERIC_PAYLOAD: u32 = 65470;

/// One diagnostic tied to a JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Semantic analysis outcome: the config is accepted iff `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scenario validation failed:\n{0}")]
    Invalid(ValidationReport),
}

// ---------------------------------------------------------------------------
// Typed configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub dry_run: bool,
    pub results_path: String,
    pub log_on_file: bool,
    pub duration: f64,
    pub seed: u64,
    pub static_config: Vec<(String, String)>,
    pub world: WorldConfig,
    pub phy_layers: Vec<PhyLayerConfig>,
    pub mac_layers: Vec<MacLayerConfig>,
    pub net_layers: Vec<NetLayerConfig>,
    pub drones: Vec<DroneConfig>,
    pub zsps: Vec<ZspConfig>,
    pub remotes: Vec<RemoteConfig>,
    pub log_components: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldConfig {
    pub buildings: Vec<BuildingConfig>,
    pub regions_of_interest: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingConfig {
    pub boundaries: [f64; 6],
    pub kind: BuildingKind,
    pub walls: WallMaterial,
    pub floors: u32,
    pub rooms_x: u32,
    pub rooms_y: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossModelConfig {
    Friis,
    LogDistance {
        exponent: f64,
        reference_loss_db: f64,
    },
    OkumuraHata {
        bs_height_m: f64,
        ue_height_m: f64,
    },
    HybridBuildings {
        base: Box<LossModelConfig>,
        walls: WallLossTable,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhyLayerConfig {
    pub kind: String,
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub frequency_hz: f64,
    pub noise_floor_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub loss_model: LossModelConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RatePolicyConfig {
    Fixed(f64),
    SnrTable(Vec<(f64, f64)>),
    Default,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacLayerConfig {
    pub kind: String,
    pub ssid: Option<String>,
    pub rate: RatePolicyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetLayerConfig {
    pub kind: String,
    pub name: String,
    pub address: Ipv4Addr,
    pub mask: Ipv4Addr,
}

/// Constant radio power draw of one net-device, all defaulting to zero so
/// mechanical energy results stay isolated unless a scenario opts in.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RadioPowerConfig {
    pub tx_w: f64,
    pub rx_w: f64,
    pub idle_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetDeviceConfig {
    pub kind: String,
    /// Index into the global layer triples (the protocol-stack matrix).
    pub stack: usize,
    pub radio_power: RadioPowerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlanPointConfig {
    pub position: [f64; 3],
    pub interest: u32,
    pub rest_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobilityModelConfig {
    ConstantPosition {
        position: [f64; 3],
    },
    ConstantAcceleration {
        acceleration: f64,
        max_speed: f64,
        flight_plan: Vec<FlightPlanPointConfig>,
        curve_step: f64,
    },
    ParametricSpeed {
        speed_coefficients: Vec<f64>,
        flight_plan: Vec<FlightPlanPointConfig>,
        curve_step: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplicationConfig {
    TelemetryClient {
        destination: Option<Ipv4Addr>,
        port: u16,
        transmission_interval: f64,
        start_time: f64,
        stop_time: Option<f64>,
        free_data: bool,
    },
    TelemetryServer {
        port: u16,
        start_time: f64,
        stop_time: Option<f64>,
        store_data: bool,
    },
    /// Periodic generic traffic; `reliable` selects the acknowledged
    /// retransmitting contract vs fire-and-forget datagrams.
    PeriodicClient {
        address: Ipv4Addr,
        port: u16,
        payload_size: u32,
        frequency: f64,
        start_time: f64,
        stop_time: Option<f64>,
        reliable: bool,
    },
    StorageClient {
        address: Ipv4Addr,
        port: u16,
        payload_size: u32,
        start_time: f64,
        stop_time: Option<f64>,
    },
    EchoServer {
        port: u16,
        start_time: f64,
        stop_time: Option<f64>,
    },
    Nat {
        internal_net_device: usize,
        external_net_device: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeripheralConfig {
    Generic {
        name: String,
        power_on_w: f64,
        power_idle_w: f64,
        roi_trigger: Option<Vec<usize>>,
    },
    Storage {
        name: String,
        power_on_w: f64,
        power_idle_w: f64,
        capacity_bits: u64,
        initial_remaining_bits: u64,
        roi_trigger: Option<Vec<usize>>,
    },
    Input {
        name: String,
        power_on_w: f64,
        power_idle_w: f64,
        data_rate_bps: f64,
        acquisition_interval: f64,
        has_storage: bool,
        roi_trigger: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicsConfig {
    pub mass_kg: f64,
    pub rotor_disk_area_m2: f64,
    pub drag_coefficient: f64,
    pub air_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub capacity_j: f64,
    pub sampling_interval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneConfig {
    pub net_devices: Vec<NetDeviceConfig>,
    pub mobility: MobilityModelConfig,
    pub applications: Vec<ApplicationConfig>,
    pub mechanics: MechanicsConfig,
    pub battery: BatteryConfig,
    pub peripherals: Vec<PeripheralConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZspConfig {
    pub position: [f64; 3],
    pub net_devices: Vec<NetDeviceConfig>,
    pub applications: Vec<ApplicationConfig>,
    /// ZSPs join the backbone bus unless a scenario detaches them (used for
    /// radio-only ground nodes such as sensor clusters).
    pub backbone: bool,
    /// Radio role: infrastructure (true, the default) or plain client.
    /// Ground sensor nodes served by a relay drone set this to false.
    pub access_point: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub applications: Vec<ApplicationConfig>,
}

// ---------------------------------------------------------------------------
// Decoder with JSON-path diagnostics
// ---------------------------------------------------------------------------

struct Decoder {
    errors: Vec<Issue>,
    warnings: Vec<Issue>,
}

impl Decoder {
    fn new() -> Self {
        Self {
            errors: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn error(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(Issue {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn warn(&mut self, path: &str, message: impl Into<String>) {
        self.warnings.push(Issue {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn object<'v>(
        &mut self,
        value: &'v Value,
        path: &str,
        known_keys: &[&str],
    ) -> Option<&'v serde_json::Map<String, Value>> {
        match value.as_object() {
            Some(map) => {
                for key in map.keys() {
                    if !known_keys.contains(&key.as_str()) {
                        self.warn(&format!("{path}/{key}"), "unknown key ignored");
                    }
                }
                Some(map)
            }
            None => {
                self.error(path, "expected an object");
                None
            }
        }
    }

    fn req<'v>(
        &mut self,
        map: &'v serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Option<&'v Value> {
        let v = map.get(key);
        if v.is_none() {
            self.error(&format!("{path}/{key}"), "mandatory key is missing");
        }
        v
    }

    fn str(&mut self, v: &Value, path: &str) -> Option<String> {
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.error(path, "expected a string");
                None
            }
        }
    }

    fn boolean(&mut self, v: &Value, path: &str) -> Option<bool> {
        match v.as_bool() {
            Some(b) => Some(b),
            None => {
                self.error(path, "expected a boolean");
                None
            }
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(n) if n.is_finite() => Some(n),
            _ => {
                self.error(path, "expected a finite number");
                None
            }
        }
    }

    fn unsigned(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v.as_u64() {
            Some(n) => Some(n),
            None => {
                self.error(path, "expected a non-negative integer");
                None
            }
        }
    }

    fn array<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Vec<Value>> {
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.error(path, "expected an array");
                None
            }
        }
    }

    fn ipv4(&mut self, v: &Value, path: &str) -> Option<Ipv4Addr> {
        let s = self.str(v, path)?;
        match s.parse() {
            Ok(a) => Some(a),
            Err(_) => {
                self.error(path, format!("'{s}' is not an IPv4 address"));
                None
            }
        }
    }

    fn bounds6(&mut self, v: &Value, path: &str) -> Option<[f64; 6]> {
        let arr = self.array(v, path)?;
        if arr.len() != 6 {
            self.error(path, "expected 6 numbers [Px1,Px2,Py1,Py2,Pz1,Pz2]");
            return None;
        }
        let mut out = [0.0; 6];
        for (i, item) in arr.iter().enumerate() {
            out[i] = self.number(item, &format!("{path}/{i}"))?;
        }
        Some(out)
    }

    fn vec3(&mut self, v: &Value, path: &str) -> Option<[f64; 3]> {
        let arr = self.array(v, path)?;
        if arr.len() != 3 {
            self.error(path, "expected 3 numbers [x,y,z]");
            return None;
        }
        let mut out = [0.0; 3];
        for (i, item) in arr.iter().enumerate() {
            out[i] = self.number(item, &format!("{path}/{i}"))?;
        }
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// parse_scenario
// ---------------------------------------------------------------------------

/// Decodes and validates scenario JSON. On success returns the config with
/// all defaults materialized plus any warnings; semantic problems come back
/// as a [`ValidationReport`], malformed JSON as a syntax error.
pub fn parse_scenario(text: &str) -> Result<(ScenarioConfig, Vec<Issue>), ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut d = Decoder::new();
    let config = decode_root(&mut d, &value);
    if d.errors.is_empty() {
        Ok((config.expect("no errors implies a config"), d.warnings))
    } else {
        Err(ParseError::Invalid(ValidationReport {
            errors: d.errors,
            warnings: d.warnings,
        }))
    }
}

const ROOT_KEYS: &[&str] = &[
    "name",
    "dryRun",
    "resultsPath",
    "logOnFile",
    "duration",
    "seed",
    "staticConfig",
    "staticNs3Config",
    "world",
    "phyLayer",
    "macLayer",
    "networkLayer",
    "drones",
    "ZSPs",
    "remotes",
    "logComponents",
];

fn decode_root(d: &mut Decoder, value: &Value) -> Option<ScenarioConfig> {
    let map = d.object(value, "", ROOT_KEYS)?;

    let name = d
        .req(map, "", "name")
        .and_then(|v| d.str(v, "/name"))
        .unwrap_or_default();
    let dry_run = map
        .get("dryRun")
        .and_then(|v| d.boolean(v, "/dryRun"))
        .unwrap_or(false);
    let results_path = d
        .req(map, "", "resultsPath")
        .and_then(|v| d.str(v, "/resultsPath"))
        .unwrap_or_default();
    let log_on_file = d
        .req(map, "", "logOnFile")
        .and_then(|v| d.boolean(v, "/logOnFile"))
        .unwrap_or(false);
    let duration = d
        .req(map, "", "duration")
        .and_then(|v| d.number(v, "/duration"))
        .unwrap_or(0.0);
    if duration <= 0.0 {
        d.error("/duration", "duration must be positive");
    }
    let seed = map
        .get("seed")
        .and_then(|v| d.unsigned(v, "/seed"))
        .unwrap_or(DEFAULT_SEED);

    // `staticNs3Config` is accepted as an alias for fidelity with the
    // original schema name.
    let static_value = match (map.get("staticConfig"), map.get("staticNs3Config")) {
        (Some(v), _) => Some(v),
        (None, Some(v)) => Some(v),
        (None, None) => {
            d.error(
                "/staticConfig",
                "mandatory key is missing (array may be empty)",
            );
            None
        }
    };
    let mut static_config = Vec::new();
    if let Some(v) = static_value {
        if let Some(entries) = d.array(v, "/staticConfig") {
            for (i, entry) in entries.iter().enumerate() {
                let path = format!("/staticConfig/{i}");
                if let Some(obj) = d.object(entry, &path, &["name", "value"]) {
                    let n = d
                        .req(obj, &path, "name")
                        .and_then(|v| d.str(v, &format!("{path}/name")));
                    let val = d
                        .req(obj, &path, "value")
                        .and_then(|v| d.str(v, &format!("{path}/value")));
                    if let (Some(n), Some(val)) = (n, val) {
                        static_config.push((n, val));
                    }
                }
            }
        }
    }

    let world = map
        .get("world")
        .map(|v| decode_world(d, v))
        .unwrap_or_default();
    let region_count = world.regions_of_interest.len();

    let phy_layers = decode_layer_array(d, map, "phyLayer", decode_phy_layer);
    let mac_layers = decode_layer_array(d, map, "macLayer", decode_mac_layer);
    let net_layers = decode_layer_array(d, map, "networkLayer", decode_net_layer);

    if !(phy_layers.len() == mac_layers.len() && mac_layers.len() == net_layers.len()) {
        d.error(
            "/phyLayer",
            format!(
                "layer arrays must form stacks of equal length (phy {}, mac {}, net {})",
                phy_layers.len(),
                mac_layers.len(),
                net_layers.len()
            ),
        );
    }
    let stack_count = phy_layers.len().min(mac_layers.len()).min(net_layers.len());

    let mut drones = Vec::new();
    if let Some(v) = d.req(map, "", "drones") {
        if let Some(arr) = d.array(v, "/drones") {
            if arr.is_empty() {
                d.warn("/drones", "empty drones array: nothing will fly");
            }
            for (i, entry) in arr.iter().enumerate() {
                if let Some(drone) =
                    decode_drone(d, entry, &format!("/drones/{i}"), stack_count, region_count)
                {
                    drones.push(drone);
                }
            }
        }
    }

    let mut zsps = Vec::new();
    if let Some(v) = d.req(map, "", "ZSPs") {
        if let Some(arr) = d.array(v, "/ZSPs") {
            for (i, entry) in arr.iter().enumerate() {
                if let Some(z) = decode_zsp(d, entry, &format!("/ZSPs/{i}"), stack_count) {
                    zsps.push(z);
                }
            }
        }
    }

    let mut remotes = Vec::new();
    if let Some(v) = d.req(map, "", "remotes") {
        if let Some(arr) = d.array(v, "/remotes") {
            for (i, entry) in arr.iter().enumerate() {
                let path = format!("/remotes/{i}");
                if let Some(obj) = d.object(entry, &path, &["applications"]) {
                    let applications = obj
                        .get("applications")
                        .map(|v| {
                            decode_applications(d, v, &format!("{path}/applications"), usize::MAX)
                        })
                        .unwrap_or_default();
                    remotes.push(RemoteConfig { applications });
                }
            }
        }
    }

    let mut log_components = Vec::new();
    if let Some(v) = d.req(map, "", "logComponents") {
        if let Some(arr) = d.array(v, "/logComponents") {
            for (i, entry) in arr.iter().enumerate() {
                if let Some(s) = d.str(entry, &format!("/logComponents/{i}")) {
                    log_components.push(s);
                }
            }
        }
    }

    // cross-checks that need the whole picture
    for (i, drone) in drones.iter().enumerate() {
        for app in &drone.applications {
            if let ApplicationConfig::Nat {
                internal_net_device,
                external_net_device,
            } = app
            {
                for (label, dev) in [
                    ("InternalNetDeviceId", internal_net_device),
                    ("ExternalNetDeviceId", external_net_device),
                ] {
                    if *dev >= drone.net_devices.len() {
                        d.error(
                            &format!("/drones/{i}/applications"),
                            format!("{label} {dev} does not name a net device of this drone"),
                        );
                    }
                }
            }
        }
    }

    if d.errors.is_empty() {
        Some(ScenarioConfig {
            name,
            dry_run,
            results_path,
            log_on_file,
            duration,
            seed,
            static_config,
            world,
            phy_layers,
            mac_layers,
            net_layers,
            drones,
            zsps,
            remotes,
            log_components,
        })
    } else {
        None
    }
}

fn decode_layer_array<T>(
    d: &mut Decoder,
    map: &serde_json::Map<String, Value>,
    key: &str,
    decode: fn(&mut Decoder, &Value, &str) -> Option<T>,
) -> Vec<T> {
    let mut out = Vec::new();
    if let Some(v) = d.req(map, "", key) {
        let path = format!("/{key}");
        if let Some(arr) = d.array(v, &path) {
            if arr.is_empty() {
                d.error(&path, "at least one layer is required");
            }
            for (i, entry) in arr.iter().enumerate() {
                if let Some(layer) = decode(d, entry, &format!("{path}/{i}")) {
                    out.push(layer);
                }
            }
        }
    }
    out
}

fn decode_world(d: &mut Decoder, value: &Value) -> WorldConfig {
    let mut world = WorldConfig::default();
    let Some(map) = d.object(value, "/world", &["buildings", "regionsOfInterest"]) else {
        return world;
    };
    if let Some(v) = map.get("buildings") {
        if let Some(arr) = d.array(v, "/world/buildings") {
            for (i, entry) in arr.iter().enumerate() {
                let path = format!("/world/buildings/{i}");
                let Some(obj) = d.object(
                    entry,
                    &path,
                    &["boundaries", "type", "walls", "floors", "roomsX", "roomsY"],
                ) else {
                    continue;
                };
                let boundaries = d
                    .req(obj, &path, "boundaries")
                    .and_then(|v| d.bounds6(v, &format!("{path}/boundaries")));
                let kind = d.req(obj, &path, "type").and_then(|v| {
                    let p = format!("{path}/type");
                    let s = d.str(v, &p)?;
                    match s.as_str() {
                        "commercial" => Some(BuildingKind::Commercial),
                        "residential" => Some(BuildingKind::Residential),
                        "office" => Some(BuildingKind::Office),
                        other => {
                            d.error(&p, format!("unknown building type '{other}'"));
                            None
                        }
                    }
                });
                let walls = d.req(obj, &path, "walls").and_then(|v| {
                    let p = format!("{path}/walls");
                    let s = d.str(v, &p)?;
                    match s.as_str() {
                        "wood" => Some(WallMaterial::Wood),
                        "concreteWithWindows" => Some(WallMaterial::ConcreteWithWindows),
                        "concreteWithoutWindows" => Some(WallMaterial::ConcreteWithoutWindows),
                        "stoneBlocks" => Some(WallMaterial::StoneBlocks),
                        other => {
                            d.error(&p, format!("unknown wall material '{other}'"));
                            None
                        }
                    }
                });
                let floors = obj
                    .get("floors")
                    .and_then(|v| d.unsigned(v, &format!("{path}/floors")))
                    .unwrap_or(1) as u32;
                let rooms_x = obj
                    .get("roomsX")
                    .and_then(|v| d.unsigned(v, &format!("{path}/roomsX")))
                    .unwrap_or(1) as u32;
                let rooms_y = obj
                    .get("roomsY")
                    .and_then(|v| d.unsigned(v, &format!("{path}/roomsY")))
                    .unwrap_or(1) as u32;
                if floors == 0 || rooms_x == 0 || rooms_y == 0 {
                    d.error(&path, "floors and room counts must be >= 1");
                }
                if let (Some(boundaries), Some(kind), Some(walls)) = (boundaries, kind, walls) {
                    world.buildings.push(BuildingConfig {
                        boundaries,
                        kind,
                        walls,
                        floors,
                        rooms_x,
                        rooms_y,
                    });
                }
            }
        }
    }
    if let Some(v) = map.get("regionsOfInterest") {
        if let Some(arr) = d.array(v, "/world/regionsOfInterest") {
            for (i, entry) in arr.iter().enumerate() {
                if let Some(b) = d.bounds6(entry, &format!("/world/regionsOfInterest/{i}")) {
                    world.regions_of_interest.push(b);
                }
            }
        }
    }
    world
}

fn decode_loss_model(d: &mut Decoder, value: &Value, path: &str) -> Option<LossModelConfig> {
    let map = d.object(
        value,
        path,
        &[
            "type",
            "exponent",
            "referenceLossDb",
            "bsHeightM",
            "ueHeightM",
            "base",
            "wallLosses",
        ],
    )?;
    let kind = d
        .req(map, path, "type")
        .and_then(|v| d.str(v, &format!("{path}/type")))?;
    match kind.as_str() {
        "friis" => Some(LossModelConfig::Friis),
        "logDistance" => {
            let exponent = map
                .get("exponent")
                .and_then(|v| d.number(v, &format!("{path}/exponent")))
                .unwrap_or(3.0);
            let reference_loss_db = map
                .get("referenceLossDb")
                .and_then(|v| d.number(v, &format!("{path}/referenceLossDb")))
                .unwrap_or(46.677);
            Some(LossModelConfig::LogDistance {
                exponent,
                reference_loss_db,
            })
        }
        "okumuraHata" => {
            let bs_height_m = map
                .get("bsHeightM")
                .and_then(|v| d.number(v, &format!("{path}/bsHeightM")))
                .unwrap_or(30.0);
            let ue_height_m = map
                .get("ueHeightM")
                .and_then(|v| d.number(v, &format!("{path}/ueHeightM")))
                .unwrap_or(1.5);
            Some(LossModelConfig::OkumuraHata {
                bs_height_m,
                ue_height_m,
            })
        }
        "hybridBuildings" => {
            let base = map
                .get("base")
                .and_then(|v| decode_loss_model(d, v, &format!("{path}/base")))
                .unwrap_or(LossModelConfig::Friis);
            let mut walls = WallLossTable::default();
            if let Some(v) = map.get("wallLosses") {
                let wpath = format!("{path}/wallLosses");
                if let Some(obj) = d.object(
                    v,
                    &wpath,
                    &[
                        "wood",
                        "concreteWithWindows",
                        "concreteWithoutWindows",
                        "stoneBlocks",
                    ],
                ) {
                    if let Some(x) = obj
                        .get("wood")
                        .and_then(|v| d.number(v, &format!("{wpath}/wood")))
                    {
                        walls.wood_db = x;
                    }
                    if let Some(x) = obj
                        .get("concreteWithWindows")
                        .and_then(|v| d.number(v, &format!("{wpath}/concreteWithWindows")))
                    {
                        walls.concrete_with_windows_db = x;
                    }
                    if let Some(x) = obj
                        .get("concreteWithoutWindows")
                        .and_then(|v| d.number(v, &format!("{wpath}/concreteWithoutWindows")))
                    {
                        walls.concrete_without_windows_db = x;
                    }
                    if let Some(x) = obj
                        .get("stoneBlocks")
                        .and_then(|v| d.number(v, &format!("{wpath}/stoneBlocks")))
                    {
                        walls.stone_blocks_db = x;
                    }
                }
            }
            Some(LossModelConfig::HybridBuildings {
                base: Box::new(base),
                walls,
            })
        }
        other => {
            d.error(
                &format!("{path}/type"),
                format!("unknown propagation loss model '{other}'"),
            );
            None
        }
    }
}

fn decode_phy_layer(d: &mut Decoder, value: &Value, path: &str) -> Option<PhyLayerConfig> {
    let map = d.object(
        value,
        path,
        &[
            "type",
            "txPowerDbm",
            "txGainDbi",
            "rxGainDbi",
            "frequencyHz",
            "noiseFloorDbm",
            "rxSensitivityDbm",
            "propagationLossModel",
        ],
    )?;
    let kind = d
        .req(map, path, "type")
        .and_then(|v| d.str(v, &format!("{path}/type")))?;
    let (f_default, tx_default, noise_default, sens_default) = match kind.as_str() {
        "wifi" => (2.4e9, 20.0, -94.0, -85.0),
        "lte" => (800e6, 23.0, -101.0, -95.0),
        other => {
            d.error(
                &format!("{path}/type"),
                format!("unknown PHY layer type '{other}'"),
            );
            return None;
        }
    };
    let loss_model = d
        .req(map, path, "propagationLossModel")
        .and_then(|v| decode_loss_model(d, v, &format!("{path}/propagationLossModel")))?;
    Some(PhyLayerConfig {
        kind,
        tx_power_dbm: map
            .get("txPowerDbm")
            .and_then(|v| d.number(v, &format!("{path}/txPowerDbm")))
            .unwrap_or(tx_default),
        tx_gain_dbi: map
            .get("txGainDbi")
            .and_then(|v| d.number(v, &format!("{path}/txGainDbi")))
            .unwrap_or(0.0),
        rx_gain_dbi: map
            .get("rxGainDbi")
            .and_then(|v| d.number(v, &format!("{path}/rxGainDbi")))
            .unwrap_or(0.0),
        frequency_hz: map
            .get("frequencyHz")
            .and_then(|v| d.number(v, &format!("{path}/frequencyHz")))
            .unwrap_or(f_default),
        noise_floor_dbm: map
            .get("noiseFloorDbm")
            .and_then(|v| d.number(v, &format!("{path}/noiseFloorDbm")))
            .unwrap_or(noise_default),
        rx_sensitivity_dbm: map
            .get("rxSensitivityDbm")
            .and_then(|v| d.number(v, &format!("{path}/rxSensitivityDbm")))
            .unwrap_or(sens_default),
        loss_model,
    })
}

fn decode_mac_layer(d: &mut Decoder, value: &Value, path: &str) -> Option<MacLayerConfig> {
    let map = d.object(value, path, &["type", "ssid", "dataRate", "snrRateTable"])?;
    let kind = d
        .req(map, path, "type")
        .and_then(|v| d.str(v, &format!("{path}/type")))?;
    if !matches!(kind.as_str(), "wifi" | "lte" | "csma") {
        d.error(
            &format!("{path}/type"),
            format!("unknown MAC layer type '{kind}'"),
        );
        return None;
    }
    let ssid = map
        .get("ssid")
        .and_then(|v| d.str(v, &format!("{path}/ssid")));
    let rate = if let Some(v) = map.get("dataRate") {
        d.number(v, &format!("{path}/dataRate"))
            .map(RatePolicyConfig::Fixed)?
    } else if let Some(v) = map.get("snrRateTable") {
        let tpath = format!("{path}/snrRateTable");
        let rows = d.array(v, &tpath)?;
        let mut table = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let rpath = format!("{tpath}/{i}");
            if let Some(pair) = d.array(row, &rpath) {
                if pair.len() == 2 {
                    let snr = d.number(&pair[0], &format!("{rpath}/0"));
                    let bps = d.number(&pair[1], &format!("{rpath}/1"));
                    if let (Some(snr), Some(bps)) = (snr, bps) {
                        table.push((snr, bps));
                    }
                } else {
                    d.error(&rpath, "expected [minSnrDb, rateBps]");
                }
            }
        }
        if table.is_empty() {
            d.error(&tpath, "rate table must not be empty");
            return None;
        }
        RatePolicyConfig::SnrTable(table)
    } else {
        RatePolicyConfig::Default
    };
    Some(MacLayerConfig { kind, ssid, rate })
}

fn decode_net_layer(d: &mut Decoder, value: &Value, path: &str) -> Option<NetLayerConfig> {
    let map = d.object(value, path, &["type", "name", "address", "mask"])?;
    let kind = d
        .req(map, path, "type")
        .and_then(|v| d.str(v, &format!("{path}/type")))?;
    if kind != "ipv4" {
        d.error(
            &format!("{path}/type"),
            format!("unknown network layer type '{kind}'"),
        );
        return None;
    }
    let address = d
        .req(map, path, "address")
        .and_then(|v| d.ipv4(v, &format!("{path}/address")))?;
    let mask = d
        .req(map, path, "mask")
        .and_then(|v| d.ipv4(v, &format!("{path}/mask")))?;
    let name = map
        .get("name")
        .and_then(|v| d.str(v, &format!("{path}/name")))
        .unwrap_or_else(|| path.trim_start_matches('/').replace('/', ""));
    Some(NetLayerConfig {
        kind,
        name,
        address,
        mask,
    })
}

fn decode_net_devices(
    d: &mut Decoder,
    value: &Value,
    path: &str,
    stack_count: usize,
) -> Vec<NetDeviceConfig> {
    let mut out = Vec::new();
    let Some(arr) = d.array(value, path) else {
        return out;
    };
    for (i, entry) in arr.iter().enumerate() {
        let dpath = format!("{path}/{i}");
        let Some(map) = d.object(
            entry,
            &dpath,
            &["type", "networkLayerId", "radioPower", "bearers"],
        ) else {
            continue;
        };
        if map.contains_key("bearers") {
            // bearer configuration of the original cellular stack; the
            // abstract link layer here has no bearers to configure
            d.warn(
                &format!("{dpath}/bearers"),
                "bearer configuration accepted and ignored",
            );
        }
        let kind = map
            .get("type")
            .and_then(|v| d.str(v, &format!("{dpath}/type")))
            .unwrap_or_else(|| "wifi".to_string());
        let Some(stack) = d
            .req(map, &dpath, "networkLayerId")
            .and_then(|v| d.unsigned(v, &format!("{dpath}/networkLayerId")))
        else {
            continue;
        };
        let stack = stack as usize;
        if stack >= stack_count {
            d.error(
                &dpath,
                format!(
                    "networkLayerId {stack} does not name a configured stack (have {stack_count})"
                ),
            );
            continue;
        }
        let mut radio_power = RadioPowerConfig::default();
        if let Some(v) = map.get("radioPower") {
            let rpath = format!("{dpath}/radioPower");
            if let Some(obj) = d.object(v, &rpath, &["txW", "rxW", "idleW"]) {
                radio_power.tx_w = obj
                    .get("txW")
                    .and_then(|v| d.number(v, &format!("{rpath}/txW")))
                    .unwrap_or(0.0);
                radio_power.rx_w = obj
                    .get("rxW")
                    .and_then(|v| d.number(v, &format!("{rpath}/rxW")))
                    .unwrap_or(0.0);
                radio_power.idle_w = obj
                    .get("idleW")
                    .and_then(|v| d.number(v, &format!("{rpath}/idleW")))
                    .unwrap_or(0.0);
            }
        }
        out.push(NetDeviceConfig {
            kind,
            stack,
            radio_power,
        });
    }
    out
}

fn decode_flight_plan(d: &mut Decoder, value: &Value, path: &str) -> Vec<FlightPlanPointConfig> {
    let mut out = Vec::new();
    let Some(arr) = d.array(value, path) else {
        return out;
    };
    for (i, entry) in arr.iter().enumerate() {
        let ppath = format!("{path}/{i}");
        let Some(map) = d.object(entry, &ppath, &["position", "interest", "restTime"]) else {
            continue;
        };
        let position = d
            .req(map, &ppath, "position")
            .and_then(|v| d.vec3(v, &format!("{ppath}/position")));
        let interest = d
            .req(map, &ppath, "interest")
            .and_then(|v| d.unsigned(v, &format!("{ppath}/interest")))
            .map(|v| v as u32);
        let rest_time = map
            .get("restTime")
            .and_then(|v| d.number(v, &format!("{ppath}/restTime")))
            .unwrap_or(0.0);
        if let (Some(position), Some(interest)) = (position, interest) {
            if interest > 0 && rest_time != 0.0 {
                d.warn(&ppath, "restTime is only meaningful when interest is 0");
            }
            out.push(FlightPlanPointConfig {
                position,
                interest,
                rest_time,
            });
        }
    }
    out
}

fn decode_mobility(d: &mut Decoder, value: &Value, path: &str) -> Option<MobilityModelConfig> {
    let map = d.object(
        value,
        path,
        &[
            "type",
            "position",
            "acceleration",
            "maxSpeed",
            "speedCoefficients",
            "flightPlan",
            "curveStep",
        ],
    )?;
    let kind = d
        .req(map, path, "type")
        .and_then(|v| d.str(v, &format!("{path}/type")))?;
    let curve_step = map
        .get("curveStep")
        .and_then(|v| d.number(v, &format!("{path}/curveStep")))
        .unwrap_or(DEFAULT_CURVE_STEP);
    match kind.as_str() {
        "constantPositionMobilityModel" => {
            let position = d
                .req(map, path, "position")
                .and_then(|v| d.vec3(v, &format!("{path}/position")))?;
            Some(MobilityModelConfig::ConstantPosition { position })
        }
        "constantAccelerationDroneMobilityModel" => {
            let acceleration = d
                .req(map, path, "acceleration")
                .and_then(|v| d.number(v, &format!("{path}/acceleration")))?;
            let max_speed = d
                .req(map, path, "maxSpeed")
                .and_then(|v| d.number(v, &format!("{path}/maxSpeed")))?;
            let flight_plan = d
                .req(map, path, "flightPlan")
                .map(|v| decode_flight_plan(d, v, &format!("{path}/flightPlan")))?;
            if flight_plan.len() < 2 {
                d.error(
                    &format!("{path}/flightPlan"),
                    "a flight plan needs at least 2 points",
                );
            }
            Some(MobilityModelConfig::ConstantAcceleration {
                acceleration,
                max_speed,
                flight_plan,
                curve_step,
            })
        }
        "parametricSpeedDroneMobilityModel" => {
            let coeffs_path = format!("{path}/speedCoefficients");
            let speed_coefficients = d
                .req(map, path, "speedCoefficients")
                .and_then(|v| d.array(v, &coeffs_path))
                .map(|arr| {
                    arr.iter()
                        .enumerate()
                        .filter_map(|(i, v)| d.number(v, &format!("{coeffs_path}/{i}")))
                        .collect::<Vec<f64>>()
                })?;
            let flight_plan = d
                .req(map, path, "flightPlan")
                .map(|v| decode_flight_plan(d, v, &format!("{path}/flightPlan")))?;
            if flight_plan.len() < 2 {
                d.error(
                    &format!("{path}/flightPlan"),
                    "a flight plan needs at least 2 points",
                );
            }
            Some(MobilityModelConfig::ParametricSpeed {
                speed_coefficients,
                flight_plan,
                curve_step,
            })
        }
        other => {
            d.error(
                &format!("{path}/type"),
                format!("unknown mobility model '{other}'"),
            );
            None
        }
    }
}

fn decode_applications(
    d: &mut Decoder,
    value: &Value,
    path: &str,
    net_device_count: usize,
) -> Vec<ApplicationConfig> {
    let mut out = Vec::new();
    let Some(arr) = d.array(value, path) else {
        return out;
    };
    for (i, entry) in arr.iter().enumerate() {
        let apath = format!("{path}/{i}");
        if let Some(app) = decode_application(d, entry, &apath, net_device_count) {
            out.push(app);
        }
    }
    out
}

fn decode_application(
    d: &mut Decoder,
    value: &Value,
    path: &str,
    _net_device_count: usize,
) -> Option<ApplicationConfig> {
    // application parameter names follow the model attribute tables
    let map = d.object(
        value,
        path,
        &[
            "type",
            "DestinationIpv4Address",
            "Port",
            "TransmissionInterval",
            "StartTime",
            "StopTime",
            "FreeData",
            "StoreData",
            "Address",
            "PayloadSize",
            "Frequency",
            "InternalNetDeviceId",
            "ExternalNetDeviceId",
        ],
    )?;
    let kind = d
        .req(map, path, "type")
        .and_then(|v| d.str(v, &format!("{path}/type")))?;
    let start_time = map
        .get("StartTime")
        .and_then(|v| d.number(v, &format!("{path}/StartTime")))
        .unwrap_or(0.0);
    let stop_time = map
        .get("StopTime")
        .and_then(|v| d.number(v, &format!("{path}/StopTime")));
    let port_of = |d: &mut Decoder, map: &serde_json::Map<String, Value>, default: u16| {
        map.get("Port")
            .and_then(|v| d.unsigned(v, &format!("{path}/Port")))
            .map_or(default, |p| p as u16)
    };
    match kind.as_str() {
        "droneClientApplication" | "telemetryClientApplication" => {
            let destination = match map.get("DestinationIpv4Address") {
                Some(v) => {
                    let a = d.ipv4(v, &format!("{path}/DestinationIpv4Address"))?;
                    // the broadcast default means "discover the server"
                    (a != crate::apps::BROADCAST).then_some(a)
                }
                None => None,
            };
            Some(ApplicationConfig::TelemetryClient {
                destination,
                port: port_of(d, map, DEFAULT_TELEMETRY_PORT),
                transmission_interval: map
                    .get("TransmissionInterval")
                    .and_then(|v| d.number(v, &format!("{path}/TransmissionInterval")))
                    .unwrap_or(1.0),
                start_time,
                stop_time,
                free_data: map
                    .get("FreeData")
                    .and_then(|v| d.boolean(v, &format!("{path}/FreeData")))
                    .unwrap_or(false),
            })
        }
        "droneServerApplication" | "telemetryServerApplication" => {
            Some(ApplicationConfig::TelemetryServer {
                port: port_of(d, map, DEFAULT_TELEMETRY_PORT),
                start_time,
                stop_time,
                store_data: map
                    .get("StoreData")
                    .and_then(|v| d.boolean(v, &format!("{path}/StoreData")))
                    .unwrap_or(false),
            })
        }
        "periodicClientApplication"
        | "tcpPeriodicClientApplication"
        | "udpEchoClientApplication" => {
            let reliable = kind != "udpEchoClientApplication";
            Some(ApplicationConfig::PeriodicClient {
                address: map
                    .get("Address")
                    .and_then(|v| d.ipv4(v, &format!("{path}/Address")))
                    .unwrap_or(Ipv4Addr::LOCALHOST),
                port: port_of(d, map, DEFAULT_GENERIC_PORT),
                payload_size: map
                    .get("PayloadSize")
                    .and_then(|v| d.unsigned(v, &format!("{path}/PayloadSize")))
                    .map_or(DEFAULT_GENERIC_PAYLOAD, |v| v as u32),
                frequency: map
                    .get("Frequency")
                    .and_then(|v| d.number(v, &format!("{path}/Frequency")))
                    .unwrap_or(1.0),
                start_time,
                stop_time,
                reliable,
            })
        }
        "storageClientApplication" | "tcpStorageClientApplication" => {
            Some(ApplicationConfig::StorageClient {
                address: map
                    .get("Address")
                    .and_then(|v| d.ipv4(v, &format!("{path}/Address")))
                    .unwrap_or(Ipv4Addr::LOCALHOST),
                port: port_of(d, map, DEFAULT_GENERIC_PORT),
                payload_size: map
                    .get("PayloadSize")
                    .and_then(|v| d.unsigned(v, &format!("{path}/PayloadSize")))
                    .map_or(DEFAULT_GENERIC_PAYLOAD, |v| v as u32),
                start_time,
                stop_time,
            })
        }
        "echoServerApplication" | "tcpEchoServerApplication" | "udpEchoServerApplication" => {
            Some(ApplicationConfig::EchoServer {
                port: port_of(d, map, DEFAULT_GENERIC_PORT),
                start_time,
                stop_time,
            })
        }
        "natApplication" => {
            let internal = d
                .req(map, path, "InternalNetDeviceId")
                .and_then(|v| d.unsigned(v, &format!("{path}/InternalNetDeviceId")))?;
            let external = d
                .req(map, path, "ExternalNetDeviceId")
                .and_then(|v| d.unsigned(v, &format!("{path}/ExternalNetDeviceId")))?;
            Some(ApplicationConfig::Nat {
                internal_net_device: internal as usize,
                external_net_device: external as usize,
            })
        }
        other => {
            d.error(
                &format!("{path}/type"),
                format!("unknown application type '{other}'"),
            );
            None
        }
    }
}

fn decode_roi_trigger(
    d: &mut Decoder,
    map: &serde_json::Map<String, Value>,
    path: &str,
    region_count: usize,
) -> Option<Vec<usize>> {
    let v = map.get("RoITrigger")?;
    let tpath = format!("{path}/RoITrigger");
    let arr = d.array(v, &tpath)?;
    let mut ids = Vec::new();
    for (i, entry) in arr.iter().enumerate() {
        if let Some(id) = d.unsigned(entry, &format!("{tpath}/{i}")) {
            let id = id as usize;
            if id >= region_count {
                d.error(
                    &format!("{tpath}/{i}"),
                    format!("region {id} does not exist (have {region_count})"),
                );
            } else {
                ids.push(id);
            }
        }
    }
    Some(ids)
}

fn decode_peripherals(
    d: &mut Decoder,
    value: &Value,
    path: &str,
    region_count: usize,
) -> Vec<PeripheralConfig> {
    let mut out = Vec::new();
    let Some(arr) = d.array(value, path) else {
        return out;
    };
    let mut storage_seen = false;
    for (i, entry) in arr.iter().enumerate() {
        let ppath = format!("{path}/{i}");
        let Some(map) = d.object(
            entry,
            &ppath,
            &[
                "type",
                "name",
                "PowerConsumption",
                "Capacity",
                "InitialRemainingCapacity",
                "DataRate",
                "DataAcquisitionTimeInterval",
                "HasStorage",
                "RoITrigger",
            ],
        ) else {
            continue;
        };
        let Some(kind) = d
            .req(map, &ppath, "type")
            .and_then(|v| d.str(v, &format!("{ppath}/type")))
        else {
            continue;
        };
        // PowerConsumption: [ON] or [ON, IDLE] watts; OFF always draws 0
        let (power_on_w, power_idle_w) = match map.get("PowerConsumption") {
            Some(v) => {
                let wpath = format!("{ppath}/PowerConsumption");
                match d.array(v, &wpath) {
                    Some(arr) if !arr.is_empty() && arr.len() <= 2 => {
                        let on = d.number(&arr[0], &format!("{wpath}/0")).unwrap_or(0.0);
                        let idle = arr
                            .get(1)
                            .and_then(|v| d.number(v, &format!("{wpath}/1")))
                            .unwrap_or(0.0);
                        (on, idle)
                    }
                    Some(_) => {
                        d.error(&wpath, "expected [onWatts] or [onWatts, idleWatts]");
                        (0.0, 0.0)
                    }
                    None => (0.0, 0.0),
                }
            }
            None => (0.0, 0.0),
        };
        if power_on_w < 0.0 || power_idle_w < 0.0 {
            d.error(&ppath, "power consumption must be non-negative");
        }
        let roi_trigger = decode_roi_trigger(d, map, &ppath, region_count);
        let name = map
            .get("name")
            .and_then(|v| d.str(v, &format!("{ppath}/name")))
            .unwrap_or_else(|| format!("{kind}-{i}"));
        match kind.as_str() {
            "DronePeripheral" => out.push(PeripheralConfig::Generic {
                name,
                power_on_w,
                power_idle_w,
                roi_trigger,
            }),
            "StoragePeripheral" => {
                if storage_seen {
                    d.error(&ppath, "at most one StoragePeripheral per drone");
                    continue;
                }
                storage_seen = true;
                let Some(capacity_bits) = d
                    .req(map, &ppath, "Capacity")
                    .and_then(|v| d.unsigned(v, &format!("{ppath}/Capacity")))
                else {
                    continue;
                };
                let initial_remaining_bits = map
                    .get("InitialRemainingCapacity")
                    .and_then(|v| d.unsigned(v, &format!("{ppath}/InitialRemainingCapacity")))
                    .unwrap_or(capacity_bits);
                if initial_remaining_bits > capacity_bits {
                    d.error(&ppath, "InitialRemainingCapacity exceeds Capacity");
                }
                out.push(PeripheralConfig::Storage {
                    name,
                    power_on_w,
                    power_idle_w,
                    capacity_bits,
                    initial_remaining_bits,
                    roi_trigger,
                });
            }
            "InputPeripheral" => {
                let Some(data_rate_bps) = d
                    .req(map, &ppath, "DataRate")
                    .and_then(|v| d.number(v, &format!("{ppath}/DataRate")))
                else {
                    continue;
                };
                let acquisition_interval = map
                    .get("DataAcquisitionTimeInterval")
                    .and_then(|v| d.number(v, &format!("{ppath}/DataAcquisitionTimeInterval")))
                    .unwrap_or(1.0);
                if acquisition_interval <= 0.0 {
                    d.error(&ppath, "DataAcquisitionTimeInterval must be positive");
                }
                let has_storage = map
                    .get("HasStorage")
                    .and_then(|v| d.boolean(v, &format!("{ppath}/HasStorage")))
                    .unwrap_or(false);
                out.push(PeripheralConfig::Input {
                    name,
                    power_on_w,
                    power_idle_w,
                    data_rate_bps,
                    acquisition_interval,
                    has_storage,
                    roi_trigger,
                });
            }
            other => {
                d.error(
                    &format!("{ppath}/type"),
                    format!("unknown peripheral type '{other}'"),
                );
            }
        }
    }
    out
}

fn decode_drone(
    d: &mut Decoder,
    value: &Value,
    path: &str,
    stack_count: usize,
    region_count: usize,
) -> Option<DroneConfig> {
    let map = d.object(
        value,
        path,
        &[
            "netDevices",
            "mobilityModel",
            "applications",
            "mechanics",
            "battery",
            "peripherals",
        ],
    )?;
    let net_devices = d
        .req(map, path, "netDevices")
        .map(|v| decode_net_devices(d, v, &format!("{path}/netDevices"), stack_count))
        .unwrap_or_default();
    let mobility = d
        .req(map, path, "mobilityModel")
        .and_then(|v| decode_mobility(d, v, &format!("{path}/mobilityModel")))?;
    let applications = d
        .req(map, path, "applications")
        .map(|v| decode_applications(d, v, &format!("{path}/applications"), net_devices.len()))
        .unwrap_or_default();
    let mechanics = d.req(map, path, "mechanics").and_then(|v| {
        let mpath = format!("{path}/mechanics");
        let obj = d.object(
            v,
            &mpath,
            &["mass", "rotorDiskArea", "dragCoefficient", "airDensity"],
        )?;
        let mass_kg = d
            .req(obj, &mpath, "mass")
            .and_then(|v| d.number(v, &format!("{mpath}/mass")))?;
        let rotor_disk_area_m2 = d
            .req(obj, &mpath, "rotorDiskArea")
            .and_then(|v| d.number(v, &format!("{mpath}/rotorDiskArea")))?;
        let drag_coefficient = d
            .req(obj, &mpath, "dragCoefficient")
            .and_then(|v| d.number(v, &format!("{mpath}/dragCoefficient")))?;
        let air_density = obj
            .get("airDensity")
            .and_then(|v| d.number(v, &format!("{mpath}/airDensity")))
            .unwrap_or(crate::entities::DEFAULT_AIR_DENSITY);
        if mass_kg <= 0.0 || rotor_disk_area_m2 <= 0.0 || air_density <= 0.0 {
            d.error(
                &mpath,
                "mass, rotorDiskArea and airDensity must be positive",
            );
        }
        if drag_coefficient < 0.0 {
            d.error(&mpath, "dragCoefficient must be non-negative");
        }
        Some(MechanicsConfig {
            mass_kg,
            rotor_disk_area_m2,
            drag_coefficient,
            air_density,
        })
    })?;
    let battery = d.req(map, path, "battery").and_then(|v| {
        let bpath = format!("{path}/battery");
        let obj = d.object(
            v,
            &bpath,
            &[
                "capacityJ",
                "cellVoltageV",
                "capacitymAh",
                "samplingInterval",
            ],
        )?;
        let capacity_j = if let Some(v) = obj.get("capacityJ") {
            d.number(v, &format!("{bpath}/capacityJ"))?
        } else {
            let volts = d
                .req(obj, &bpath, "cellVoltageV")
                .and_then(|v| d.number(v, &format!("{bpath}/cellVoltageV")))?;
            let mah = d
                .req(obj, &bpath, "capacitymAh")
                .and_then(|v| d.number(v, &format!("{bpath}/capacitymAh")))?;
            volts * mah * 3.6
        };
        if capacity_j <= 0.0 {
            d.error(&bpath, "battery capacity must be positive");
        }
        let sampling_interval = obj
            .get("samplingInterval")
            .and_then(|v| d.number(v, &format!("{bpath}/samplingInterval")))
            .unwrap_or(DEFAULT_BATTERY_SAMPLING);
        if sampling_interval <= 0.0 {
            d.error(&bpath, "samplingInterval must be positive");
        }
        Some(BatteryConfig {
            capacity_j,
            sampling_interval,
        })
    })?;
    let peripherals = map
        .get("peripherals")
        .map(|v| decode_peripherals(d, v, &format!("{path}/peripherals"), region_count))
        .unwrap_or_default();
    if net_devices.is_empty() {
        d.error(
            &format!("{path}/netDevices"),
            "a drone needs at least one net device",
        );
    }
    Some(DroneConfig {
        net_devices,
        mobility,
        applications,
        mechanics,
        battery,
        peripherals,
    })
}

fn decode_zsp(d: &mut Decoder, value: &Value, path: &str, stack_count: usize) -> Option<ZspConfig> {
    let map = d.object(
        value,
        path,
        &[
            "position",
            "mobilityModel",
            "netDevices",
            "applications",
            "backbone",
            "accessPoint",
        ],
    )?;
    let position = if let Some(v) = map.get("position") {
        d.vec3(v, &format!("{path}/position"))?
    } else if let Some(v) = map.get("mobilityModel") {
        // ZSP mobility is customizable; constant position is what the
        // simplified scenario layer supports
        match decode_mobility(d, v, &format!("{path}/mobilityModel"))? {
            MobilityModelConfig::ConstantPosition { position } => position,
            _ => {
                d.error(
                    &format!("{path}/mobilityModel"),
                    "ZSPs support constantPositionMobilityModel only",
                );
                return None;
            }
        }
    } else {
        d.error(&format!("{path}/position"), "mandatory key is missing");
        return None;
    };
    let net_devices = d
        .req(map, path, "netDevices")
        .map(|v| decode_net_devices(d, v, &format!("{path}/netDevices"), stack_count))
        .unwrap_or_default();
    let applications = map
        .get("applications")
        .map(|v| decode_applications(d, v, &format!("{path}/applications"), net_devices.len()))
        .unwrap_or_default();
    let backbone = map
        .get("backbone")
        .and_then(|v| d.boolean(v, &format!("{path}/backbone")))
        .unwrap_or(true);
    let access_point = map
        .get("accessPoint")
        .and_then(|v| d.boolean(v, &format!("{path}/accessPoint")))
        .unwrap_or(true);
    Some(ZspConfig {
        position: [position[0], position[1], position[2]],
        net_devices,
        applications,
        backbone,
        access_point,
    })
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

/// Serializes a config back to JSON with every default materialized and keys
/// in sorted order. Parsing the canonical form yields the same config, and
/// canonicalizing is idempotent.
pub fn canonical_json(cfg: &ScenarioConfig) -> String {
    let value = canonical_value(cfg);
    serde_json::to_string_pretty(&value).expect("canonical config serializes")
}

fn loss_to_value(m: &LossModelConfig) -> Value {
    match m {
        LossModelConfig::Friis => serde_json::json!({ "type": "friis" }),
        LossModelConfig::LogDistance {
            exponent,
            reference_loss_db,
        } => serde_json::json!({
            "type": "logDistance",
            "exponent": exponent,
            "referenceLossDb": reference_loss_db,
        }),
        LossModelConfig::OkumuraHata {
            bs_height_m,
            ue_height_m,
        } => serde_json::json!({
            "type": "okumuraHata",
            "bsHeightM": bs_height_m,
            "ueHeightM": ue_height_m,
        }),
        LossModelConfig::HybridBuildings { base, walls } => serde_json::json!({
            "type": "hybridBuildings",
            "base": loss_to_value(base),
            "wallLosses": {
                "wood": walls.wood_db,
                "concreteWithWindows": walls.concrete_with_windows_db,
                "concreteWithoutWindows": walls.concrete_without_windows_db,
                "stoneBlocks": walls.stone_blocks_db,
            },
        }),
    }
}

fn app_to_value(app: &ApplicationConfig) -> Value {
    match app {
        ApplicationConfig::TelemetryClient {
            destination,
            port,
            transmission_interval,
            start_time,
            stop_time,
            free_data,
        } => {
            let mut v = serde_json::json!({
                "type": "droneClientApplication",
                "DestinationIpv4Address": destination.map_or_else(|| "255.255.255.255".into(), |a| a.to_string()),
                "Port": port,
                "TransmissionInterval": transmission_interval,
                "StartTime": start_time,
                "FreeData": free_data,
            });
            if let Some(stop) = stop_time {
                v["StopTime"] = (*stop).into();
            }
            v
        }
        ApplicationConfig::TelemetryServer {
            port,
            start_time,
            stop_time,
            store_data,
        } => {
            let mut v = serde_json::json!({
                "type": "droneServerApplication",
                "Port": port,
                "StartTime": start_time,
                "StoreData": store_data,
            });
            if let Some(stop) = stop_time {
                v["StopTime"] = (*stop).into();
            }
            v
        }
        ApplicationConfig::PeriodicClient {
            address,
            port,
            payload_size,
            frequency,
            start_time,
            stop_time,
            reliable,
        } => {
            let mut v = serde_json::json!({
                "type": if *reliable { "periodicClientApplication" } else { "udpEchoClientApplication" },
                "Address": address.to_string(),
                "Port": port,
                "PayloadSize": payload_size,
                "Frequency": frequency,
                "StartTime": start_time,
            });
            if let Some(stop) = stop_time {
                v["StopTime"] = (*stop).into();
            }
            v
        }
        ApplicationConfig::StorageClient {
            address,
            port,
            payload_size,
            start_time,
            stop_time,
        } => {
            let mut v = serde_json::json!({
                "type": "storageClientApplication",
                "Address": address.to_string(),
                "Port": port,
                "PayloadSize": payload_size,
                "StartTime": start_time,
            });
            if let Some(stop) = stop_time {
                v["StopTime"] = (*stop).into();
            }
            v
        }
        ApplicationConfig::EchoServer {
            port,
            start_time,
            stop_time,
        } => {
            let mut v = serde_json::json!({
                "type": "echoServerApplication",
                "Port": port,
                "StartTime": start_time,
            });
            if let Some(stop) = stop_time {
                v["StopTime"] = (*stop).into();
            }
            v
        }
        ApplicationConfig::Nat {
            internal_net_device,
            external_net_device,
        } => serde_json::json!({
            "type": "natApplication",
            "InternalNetDeviceId": internal_net_device,
            "ExternalNetDeviceId": external_net_device,
        }),
    }
}

fn mobility_to_value(m: &MobilityModelConfig) -> Value {
    let plan_to_value = |plan: &[FlightPlanPointConfig]| -> Value {
        plan.iter()
            .map(|p| {
                let mut v = serde_json::json!({
                    "position": p.position,
                    "interest": p.interest,
                });
                if p.rest_time != 0.0 {
                    v["restTime"] = p.rest_time.into();
                }
                v
            })
            .collect()
    };
    match m {
        MobilityModelConfig::ConstantPosition { position } => serde_json::json!({
            "type": "constantPositionMobilityModel",
            "position": position,
        }),
        MobilityModelConfig::ConstantAcceleration {
            acceleration,
            max_speed,
            flight_plan,
            curve_step,
        } => serde_json::json!({
            "type": "constantAccelerationDroneMobilityModel",
            "acceleration": acceleration,
            "maxSpeed": max_speed,
            "flightPlan": plan_to_value(flight_plan),
            "curveStep": curve_step,
        }),
        MobilityModelConfig::ParametricSpeed {
            speed_coefficients,
            flight_plan,
            curve_step,
        } => {
            serde_json::json!({
                "type": "parametricSpeedDroneMobilityModel",
                "speedCoefficients": speed_coefficients,
                "flightPlan": plan_to_value(flight_plan),
                "curveStep": curve_step,
            })
        }
    }
}

fn net_devices_to_value(devs: &[NetDeviceConfig]) -> Value {
    devs.iter()
        .map(|dev| {
            let mut v = serde_json::json!({
                "type": dev.kind,
                "networkLayerId": dev.stack,
            });
            if dev.radio_power != RadioPowerConfig::default() {
                v["radioPower"] = serde_json::json!({
                    "txW": dev.radio_power.tx_w,
                    "rxW": dev.radio_power.rx_w,
                    "idleW": dev.radio_power.idle_w,
                });
            }
            v
        })
        .collect()
}

fn peripheral_to_value(p: &PeripheralConfig) -> Value {
    let with_roi = |mut v: Value, roi: &Option<Vec<usize>>| {
        if let Some(ids) = roi {
            v["RoITrigger"] = ids.iter().copied().collect();
        }
        v
    };
    match p {
        PeripheralConfig::Generic {
            name,
            power_on_w,
            power_idle_w,
            roi_trigger,
        } => with_roi(
            serde_json::json!({
                "type": "DronePeripheral",
                "name": name,
                "PowerConsumption": [power_on_w, power_idle_w],
            }),
            roi_trigger,
        ),
        PeripheralConfig::Storage {
            name,
            power_on_w,
            power_idle_w,
            capacity_bits,
            initial_remaining_bits,
            roi_trigger,
        } => with_roi(
            serde_json::json!({
                "type": "StoragePeripheral",
                "name": name,
                "PowerConsumption": [power_on_w, power_idle_w],
                "Capacity": capacity_bits,
                "InitialRemainingCapacity": initial_remaining_bits,
            }),
            roi_trigger,
        ),
        PeripheralConfig::Input {
            name,
            power_on_w,
            power_idle_w,
            data_rate_bps,
            acquisition_interval,
            has_storage,
            roi_trigger,
        } => with_roi(
            serde_json::json!({
                "type": "InputPeripheral",
                "name": name,
                "PowerConsumption": [power_on_w, power_idle_w],
                "DataRate": data_rate_bps,
                "DataAcquisitionTimeInterval": acquisition_interval,
                "HasStorage": has_storage,
            }),
            roi_trigger,
        ),
    }
}

fn canonical_value(cfg: &ScenarioConfig) -> Value {
    serde_json::json!({
        "name": cfg.name,
        "dryRun": cfg.dry_run,
        "resultsPath": cfg.results_path,
        "logOnFile": cfg.log_on_file,
        "duration": cfg.duration,
        "seed": cfg.seed,
        "staticConfig": cfg.static_config.iter().map(|(n, v)| serde_json::json!({"name": n, "value": v})).collect::<Value>(),
        "world": {
            "buildings": cfg.world.buildings.iter().map(|b| serde_json::json!({
                "boundaries": b.boundaries,
                "type": serde_json::to_value(b.kind).unwrap(),
                "walls": serde_json::to_value(b.walls).unwrap(),
                "floors": b.floors,
                "roomsX": b.rooms_x,
                "roomsY": b.rooms_y,
            })).collect::<Value>(),
            "regionsOfInterest": cfg.world.regions_of_interest.iter().map(|r| serde_json::json!(r)).collect::<Value>(),
        },
        "phyLayer": cfg.phy_layers.iter().map(|p| serde_json::json!({
            "type": p.kind,
            "txPowerDbm": p.tx_power_dbm,
            "txGainDbi": p.tx_gain_dbi,
            "rxGainDbi": p.rx_gain_dbi,
            "frequencyHz": p.frequency_hz,
            "noiseFloorDbm": p.noise_floor_dbm,
            "rxSensitivityDbm": p.rx_sensitivity_dbm,
            "propagationLossModel": loss_to_value(&p.loss_model),
        })).collect::<Value>(),
        "macLayer": cfg.mac_layers.iter().map(|m| {
            let mut v = serde_json::json!({ "type": m.kind });
            if let Some(ssid) = &m.ssid {
                v["ssid"] = ssid.clone().into();
            }
            match &m.rate {
                RatePolicyConfig::Fixed(bps) => v["dataRate"] = (*bps).into(),
                RatePolicyConfig::SnrTable(rows) => {
                    v["snrRateTable"] = rows.iter().map(|(s, r)| serde_json::json!([s, r])).collect();
                }
                RatePolicyConfig::Default => {}
            }
            v
        }).collect::<Value>(),
        "networkLayer": cfg.net_layers.iter().map(|n| serde_json::json!({
            "type": n.kind,
            "name": n.name,
            "address": n.address.to_string(),
            "mask": n.mask.to_string(),
        })).collect::<Value>(),
        "drones": cfg.drones.iter().map(|dr| serde_json::json!({
            "netDevices": net_devices_to_value(&dr.net_devices),
            "mobilityModel": mobility_to_value(&dr.mobility),
            "applications": dr.applications.iter().map(app_to_value).collect::<Value>(),
            "mechanics": {
                "mass": dr.mechanics.mass_kg,
                "rotorDiskArea": dr.mechanics.rotor_disk_area_m2,
                "dragCoefficient": dr.mechanics.drag_coefficient,
                "airDensity": dr.mechanics.air_density,
            },
            "battery": {
                "capacityJ": dr.battery.capacity_j,
                "samplingInterval": dr.battery.sampling_interval,
            },
            "peripherals": dr.peripherals.iter().map(peripheral_to_value).collect::<Value>(),
        })).collect::<Value>(),
        "ZSPs": cfg.zsps.iter().map(|z| serde_json::json!({
            "position": z.position,
            "netDevices": net_devices_to_value(&z.net_devices),
            "applications": z.applications.iter().map(app_to_value).collect::<Value>(),
            "backbone": z.backbone,
            "accessPoint": z.access_point,
        })).collect::<Value>(),
        "remotes": cfg.remotes.iter().map(|r| serde_json::json!({
            "applications": r.applications.iter().map(app_to_value).collect::<Value>(),
        })).collect::<Value>(),
        "logComponents": cfg.log_components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        serde_json::json!({
            "name": "minimal",
            "resultsPath": "results",
            "logOnFile": false,
            "duration": 10,
            "staticConfig": [],
            "phyLayer": [{ "type": "wifi", "propagationLossModel": { "type": "friis" } }],
            "macLayer": [{ "type": "wifi" }],
            "networkLayer": [{ "type": "ipv4", "address": "10.0.0.0", "mask": "255.255.255.0" }],
            "drones": [{
                "netDevices": [{ "type": "wifi", "networkLayerId": 0 }],
                "mobilityModel": {
                    "type": "parametricSpeedDroneMobilityModel",
                    "speedCoefficients": [5.0],
                    "flightPlan": [
                        { "position": [0.0, 0.0, 1.0], "interest": 1 },
                        { "position": [50.0, 0.0, 1.0], "interest": 1 }
                    ]
                },
                "applications": [{ "type": "droneClientApplication" }],
                "mechanics": { "mass": 1.0, "rotorDiskArea": 0.18, "dragCoefficient": 0.08 },
                "battery": { "capacityJ": 50000.0 }
            }],
            "ZSPs": [{
                "position": [60.0, 45.0, 0.0],
                "netDevices": [{ "type": "wifi", "networkLayerId": 0 }],
                "applications": [{ "type": "droneServerApplication" }]
            }],
            "remotes": [],
            "logComponents": []
        })
        .to_string()
    }

    #[test]
    fn minimal_scenario_accepted_with_defaults() {
        let (cfg, warnings) = parse_scenario(&minimal()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(cfg.name, "minimal");
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert!(!cfg.dry_run);
        assert_eq!(cfg.duration, 10.0);
        assert_eq!(cfg.drones.len(), 1);
        assert_eq!(cfg.zsps.len(), 1);
        match &cfg.drones[0].applications[0] {
            ApplicationConfig::TelemetryClient {
                port,
                transmission_interval,
                destination,
                ..
            } => {
                assert_eq!(*port, DEFAULT_TELEMETRY_PORT);
                assert_eq!(*transmission_interval, 1.0);
                assert!(destination.is_none()); // broadcast rendezvous
            }
            other => panic!("unexpected app {other:?}"),
        }
        assert_eq!(
            cfg.drones[0].battery.sampling_interval,
            DEFAULT_BATTERY_SAMPLING
        );
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_scenario("{ \"name\": ").unwrap_err();
        match err {
            ParseError::Syntax { line, column, .. } => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn dangling_stack_reference_is_an_error_with_path() {
        let mut v: Value = serde_json::from_str(&minimal()).unwrap();
        v["drones"][0]["netDevices"][0]["networkLayerId"] = 5.into();
        let err = parse_scenario(&v.to_string()).unwrap_err();
        match err {
            ParseError::Invalid(report) => {
                assert!(report
                    .errors
                    .iter()
                    .any(|e| e.path == "/drones/0/netDevices/0" && e.message.contains("5")));
            }
            other => panic!("expected validation failure, got {other}"),
        }
    }

    #[test]
    fn unknown_keys_warn_but_pass() {
        let mut v: Value = serde_json::from_str(&minimal()).unwrap();
        v["futureKnob"] = 1.into();
        let (_, warnings) = parse_scenario(&v.to_string()).unwrap();
        assert!(warnings.iter().any(|w| w.path == "/futureKnob"));
    }

    #[test]
    fn missing_mandatory_keys_collect_errors() {
        let err = parse_scenario("{}").unwrap_err();
        let ParseError::Invalid(report) = err else {
            panic!("expected invalid")
        };
        for key in ["/name", "/resultsPath", "/duration", "/drones"] {
            assert!(
                report.errors.iter().any(|e| e.path == key),
                "missing error for {key}: {report:?}"
            );
        }
    }

    #[test]
    fn broken_roi_reference_is_an_error() {
        let mut v: Value = serde_json::from_str(&minimal()).unwrap();
        v["drones"][0]["peripherals"] = serde_json::json!([{
            "type": "DronePeripheral",
            "PowerConsumption": [12.0],
            "RoITrigger": [3]
        }]);
        let err = parse_scenario(&v.to_string()).unwrap_err();
        let ParseError::Invalid(report) = err else {
            panic!("expected invalid")
        };
        assert!(report.errors.iter().any(|e| e.path.contains("RoITrigger")));
    }

    #[test]
    fn static_ns3_config_alias_accepted() {
        let mut v: Value = serde_json::from_str(&minimal()).unwrap();
        let map = v.as_object_mut().unwrap();
        let entries = map.remove("staticConfig").unwrap();
        map.insert("staticNs3Config".into(), entries);
        map["staticNs3Config"] = serde_json::json!([{ "name": "bus.dataRate", "value": "1e8" }]);
        let (cfg, _) = parse_scenario(&v.to_string()).unwrap();
        assert_eq!(
            cfg.static_config,
            vec![("bus.dataRate".to_string(), "1e8".to_string())]
        );
    }

    #[test]
    fn canonical_form_is_a_fixpoint() {
        let (cfg, _) = parse_scenario(&minimal()).unwrap();
        let canon = canonical_json(&cfg);
        let (cfg2, warnings) = parse_scenario(&canon).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(cfg, cfg2);
        assert_eq!(canonical_json(&cfg2), canon);
    }

    #[test]
    fn layer_arrays_must_align() {
        let mut v: Value = serde_json::from_str(&minimal()).unwrap();
        v["macLayer"] = serde_json::json!([]);
        let err = parse_scenario(&v.to_string()).unwrap_err();
        let ParseError::Invalid(report) = err else {
            panic!("expected invalid")
        };
        assert!(report
            .errors
            .iter()
            .any(|e| e.message.contains("equal length") || e.message.contains("at least one")));
    }
}
