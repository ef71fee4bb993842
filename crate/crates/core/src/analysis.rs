//! KPI extraction: turns a results directory (XML report + progress log)
//! into CSV time series and per-node statistics.
//!
//! Analysis is pure over its inputs: the same results directory always
//! yields byte-identical CSV. Flows that crossed a NAT relay are resolved
//! back to their origin through the relay's table in the report.

use crate::report::{parse_progress_line, PROGRESS_FILE, REPORT_FILE};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kpi {
    Power,
    Rssi,
    Throughput,
    Storage,
    Latency,
    Plr,
    Perf,
}

impl std::str::FromStr for Kpi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" => Ok(Kpi::Power),
            "rssi" => Ok(Kpi::Rssi),
            "throughput" => Ok(Kpi::Throughput),
            "storage" => Ok(Kpi::Storage),
            "latency" => Ok(Kpi::Latency),
            "plr" => Ok(Kpi::Plr),
            "perf" => Ok(Kpi::Perf),
            other => Err(format!(
                "unknown KPI '{other}' (expected power|rssi|throughput|storage|latency|plr|perf)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    /// Aggregation window for the throughput KPI, seconds.
    pub window_s: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self { window_s: 1.0 }
    }
}

pub fn analyze(dir: &Path, kpi: Kpi, opts: &AnalyzeOptions) -> Result<String, AnalysisError> {
    if kpi == Kpi::Perf {
        return perf_csv(dir);
    }
    let doc = load_report(dir)?;
    Ok(match kpi {
        Kpi::Power => power_csv(&doc),
        Kpi::Rssi => rssi_csv(&doc),
        Kpi::Throughput => throughput_csv(&doc, opts.window_s),
        Kpi::Storage => storage_csv(&doc),
        Kpi::Latency => latency_csv(&doc),
        Kpi::Plr => plr_csv(&doc),
        Kpi::Perf => unreachable!(),
    })
}

// ---------------------------------------------------------------------------
// Report model (reader side)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeClass {
    Drone,
    Zsp,
    Remote,
}

#[derive(Debug)]
struct Pkt {
    node: u32,
    tx: bool,
    at: f64,
    app_bytes: u32,
    src: (Ipv4Addr, u16),
    dst: (Ipv4Addr, u16),
    sn: Option<u32>,
    created: Option<f64>,
    rx_power_dbm: Option<f64>,
}

#[derive(Debug, Default)]
struct PowerRow {
    t: f64,
    level: f64,
    vertical: f64,
    drag: f64,
    peripherals: f64,
    radio: f64,
    total: f64,
    remaining: f64,
}

#[derive(Debug, Default)]
struct Report {
    node_class: BTreeMap<u32, NodeClass>,
    node_addrs: HashMap<u32, Vec<Ipv4Addr>>,
    addr_owner: HashMap<Ipv4Addr, u32>,
    power: BTreeMap<u32, Vec<PowerRow>>,
    storage: BTreeMap<u32, Vec<(f64, u64)>>,
    packets: Vec<Pkt>,
    /// (relay node, external port) -> internal flow
    nat: HashMap<(u32, u16), (Ipv4Addr, u16)>,
}

impl Report {
    /// Origin flow of a record source, looking through NAT rewrites.
    fn resolve_origin(&self, src: (Ipv4Addr, u16)) -> (Ipv4Addr, u16) {
        if let Some(&owner) = self.addr_owner.get(&src.0) {
            if let Some(&internal) = self.nat.get(&(owner, src.1)) {
                // one level of rewriting is all the relay applies
                return internal;
            }
        }
        src
    }

    fn is_nat_port(&self, node: u32, port: u16) -> bool {
        self.nat.contains_key(&(node, port))
    }

    fn owns(&self, node: u32, addr: Ipv4Addr) -> bool {
        self.node_addrs
            .get(&node)
            .is_some_and(|v| v.contains(&addr))
    }
}

fn parse_addr_port(s: &str) -> Option<(Ipv4Addr, u16)> {
    let (addr, port) = s.rsplit_once(':')?;
    Some((addr.parse().ok()?, port.parse().ok()?))
}

fn load_report(dir: &Path) -> Result<Report, AnalysisError> {
    let path = dir.join(REPORT_FILE);
    if !path.exists() {
        return Err(AnalysisError::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(&path)?;
    let doc =
        roxmltree::Document::parse(&text).map_err(|e| AnalysisError::Malformed(e.to_string()))?;
    let mut report = Report::default();

    let attr_f64 = |n: roxmltree::Node, name: &str| -> f64 {
        n.attribute(name)
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0)
    };

    for entity in doc.descendants() {
        let class = match entity.tag_name().name() {
            "Drone" => NodeClass::Drone,
            "Zsp" => NodeClass::Zsp,
            "Remote" => NodeClass::Remote,
            _ => continue,
        };
        let Some(id) = entity.attribute("id").and_then(|v| v.parse::<u32>().ok()) else {
            continue;
        };
        report.node_class.insert(id, class);
        for dev in entity
            .descendants()
            .filter(|n| n.tag_name().name() == "NetDevice")
        {
            if let Some(addr) = dev
                .attribute("address")
                .and_then(|a| a.parse::<Ipv4Addr>().ok())
            {
                report.node_addrs.entry(id).or_default().push(addr);
                report.addr_owner.insert(addr, id);
            }
            for p in dev
                .descendants()
                .filter(|n| n.tag_name().name() == "packet")
            {
                let (Some(src), Some(dst)) = (
                    p.attribute("src").and_then(parse_addr_port),
                    p.attribute("dst").and_then(parse_addr_port),
                ) else {
                    continue;
                };
                report.packets.push(Pkt {
                    node: id,
                    tx: p.attribute("direction") == Some("tx"),
                    at: attr_f64(p, "timestamp"),
                    app_bytes: p
                        .attribute("appBytes")
                        .and_then(|v| v.parse().ok())
                        .unwrap_or(0),
                    src,
                    dst,
                    sn: p.attribute("sn").and_then(|v| v.parse().ok()),
                    created: p.attribute("created").and_then(|v| v.parse().ok()),
                    rx_power_dbm: p.attribute("rxPowerDbm").and_then(|v| v.parse().ok()),
                });
            }
        }
        if class == NodeClass::Drone {
            for s in entity.descendants().filter(|n| {
                n.tag_name().name() == "sample"
                    && n.parent()
                        .is_some_and(|p| p.tag_name().name() == "powerTrace")
            }) {
                report.power.entry(id).or_default().push(PowerRow {
                    t: attr_f64(s, "t"),
                    level: attr_f64(s, "level"),
                    vertical: attr_f64(s, "vertical"),
                    drag: attr_f64(s, "drag"),
                    peripherals: attr_f64(s, "peripherals"),
                    radio: attr_f64(s, "radio"),
                    total: attr_f64(s, "total"),
                    remaining: attr_f64(s, "remainingJ"),
                });
            }
            for s in entity.descendants().filter(|n| {
                n.tag_name().name() == "sample"
                    && n.parent()
                        .is_some_and(|p| p.tag_name().name() == "storageTrace")
            }) {
                report.storage.entry(id).or_default().push((
                    attr_f64(s, "t"),
                    s.attribute("occupiedBits")
                        .and_then(|v| v.parse().ok())
                        .unwrap_or(0),
                ));
            }
            for e in entity
                .descendants()
                .filter(|n| n.tag_name().name() == "entry")
            {
                let port = e
                    .attribute("externalPort")
                    .and_then(|v| v.parse::<u16>().ok());
                let addr = e
                    .attribute("internalAddress")
                    .and_then(|v| v.parse::<Ipv4Addr>().ok());
                let iport = e
                    .attribute("internalPort")
                    .and_then(|v| v.parse::<u16>().ok());
                if let (Some(port), Some(addr), Some(iport)) = (port, addr, iport) {
                    report.nat.insert((id, port), (addr, iport));
                }
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// KPI emitters
// ---------------------------------------------------------------------------

fn power_csv(r: &Report) -> String {
    let mut out = String::from(
        "drone,t,level_w,vertical_w,drag_w,peripherals_w,radio_w,total_w,remaining_j\n",
    );
    for (node, rows) in &r.power {
        for row in rows {
            let _ = writeln!(
                out,
                "{node},{},{},{},{},{},{},{},{}",
                row.t,
                row.level,
                row.vertical,
                row.drag,
                row.peripherals,
                row.radio,
                row.total,
                row.remaining
            );
        }
    }
    out
}

fn storage_csv(r: &Report) -> String {
    let mut out = String::from("drone,t,occupied_bits\n");
    for (node, rows) in &r.storage {
        for (t, bits) in rows {
            let _ = writeln!(out, "{node},{t},{bits}");
        }
    }
    out
}

fn rssi_csv(r: &Report) -> String {
    // received power measured at ZSP devices, attributed to the sending drone
    let mut out = String::from("drone,t,zsp,rx_power_dbm\n");
    for p in &r.packets {
        if p.tx {
            continue;
        }
        let Some(rx) = p.rx_power_dbm else { continue };
        if r.node_class.get(&p.node) != Some(&NodeClass::Zsp) {
            continue;
        }
        let Some(&origin_node) = r.addr_owner.get(&p.src.0) else {
            continue;
        };
        if r.node_class.get(&origin_node) != Some(&NodeClass::Drone) {
            continue;
        }
        let _ = writeln!(out, "{origin_node},{},{},{rx}", p.at, p.node);
    }
    out
}

/// Data receptions at the device owning the destination address, i.e. the
/// end of the path. NAT-translated arrivals at the relay are not final.
fn final_rx_records(r: &Report) -> Vec<&Pkt> {
    r.packets
        .iter()
        .filter(|p| {
            !p.tx
                && p.created.is_some()
                && r.owns(p.node, p.dst.0)
                && !r.is_nat_port(p.node, p.dst.1)
        })
        .collect()
}

/// Origin-side transmissions: first-hop generic data sent by the node that
/// owns the source address, excluding NAT-rewritten forwards.
fn origin_tx_records(r: &Report) -> Vec<&Pkt> {
    r.packets
        .iter()
        .filter(|p| {
            p.tx && p.created.is_some()
                && r.owns(p.node, p.src.0)
                && !r.is_nat_port(p.node, p.src.1)
        })
        .collect()
}

type FlowKey = ((Ipv4Addr, u16), (Ipv4Addr, u16));

fn latency_csv(r: &Report) -> String {
    let mut out = String::from("node,origin,sn,created,rx_at,latency_s\n");
    let mut rows: Vec<((Ipv4Addr, u16), u32, f64, f64)> = Vec::new();
    for p in final_rx_records(r) {
        let (Some(sn), Some(created)) = (p.sn, p.created) else {
            continue;
        };
        let origin = r.resolve_origin(p.src);
        rows.push((origin, sn, created, p.at));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    for (origin, sn, created, rx_at) in rows {
        let node = r.addr_owner.get(&origin.0).copied().unwrap_or(u32::MAX);
        let _ = writeln!(
            out,
            "{node},{}:{},{sn},{created},{rx_at},{}",
            origin.0,
            origin.1,
            rx_at - created
        );
    }
    out
}

fn plr_csv(r: &Report) -> String {
    let mut sent: BTreeMap<FlowKey, BTreeSet<u32>> = BTreeMap::new();
    for p in origin_tx_records(r) {
        if let Some(sn) = p.sn {
            sent.entry((r.resolve_origin(p.src), p.dst))
                .or_default()
                .insert(sn);
        }
    }
    let mut delivered: BTreeMap<FlowKey, BTreeSet<u32>> = BTreeMap::new();
    for p in final_rx_records(r) {
        if let Some(sn) = p.sn {
            delivered
                .entry((r.resolve_origin(p.src), p.dst))
                .or_default()
                .insert(sn);
        }
    }
    let mut out = String::from("node,flow,sent,delivered,plr\n");
    for (flow, sns) in &sent {
        let node = r.addr_owner.get(&flow.0 .0).copied().unwrap_or(u32::MAX);
        let got = delivered
            .get(flow)
            .map_or(0, |d| d.iter().filter(|sn| sns.contains(sn)).count());
        let total = sns.len();
        let plr = 1.0 - got as f64 / total as f64;
        let _ = writeln!(
            out,
            "{node},{}:{}>{}:{},{total},{got},{plr}",
            flow.0 .0, flow.0 .1, flow.1 .0, flow.1 .1
        );
    }
    out
}

fn throughput_csv(r: &Report, window_s: f64) -> String {
    let window_s = if window_s > 0.0 { window_s } else { 1.0 };
    // payload bits per (origin node, window); header bytes excluded
    let mut bins: BTreeMap<(u32, u64), u64> = BTreeMap::new();
    for p in final_rx_records(r) {
        let origin = r.resolve_origin(p.src);
        let node = r.addr_owner.get(&origin.0).copied().unwrap_or(u32::MAX);
        let window = (p.at / window_s).floor() as u64;
        let payload_bits = u64::from(p.app_bytes.saturating_sub(12)) * 8;
        *bins.entry((node, window)).or_insert(0) += payload_bits;
    }
    let mut out = String::from("node,window_start,bits,bps\n");
    for ((node, window), bits) in &bins {
        let start = *window as f64 * window_s;
        let _ = writeln!(out, "{node},{start},{bits},{}", *bits as f64 / window_s);
    }
    out
}

fn perf_csv(dir: &Path) -> Result<String, AnalysisError> {
    let path = dir.join(PROGRESS_FILE);
    if !path.exists() {
        return Err(AnalysisError::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut out = String::from("second,events,speedup\n");
    for line in text.lines() {
        if let Some((second, speedup, events)) = parse_progress_line(line) {
            let _ = writeln!(out, "{second},{events},{speedup}");
        }
    }
    Ok(out)
}
