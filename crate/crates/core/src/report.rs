//! Run-time data collection and end-of-run emission: the XML summary,
//! per-device ASCII traces, PCAP captures and the per-second progress log.
//!
//! All output lands under the scenario's results path. Trace and PCAP files
//! follow the `<layer>-<host>-<dev>` naming scheme; files that would hold no
//! records are not created. Capture timestamps are relative to simulation
//! start, so PCAPs begin at 0 seconds.

use crate::energy::PowerBreakdown;
use crate::engine::IntervalMark;
use crate::vec3::Vec3;
use crate::world::{Box3, Building};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

pub const REPORT_FILE: &str = "report.xml";
pub const PROGRESS_FILE: &str = "progress.log";
/// Raw-IP linktype: captured frames are bare IPv4 datagrams.
pub const PCAP_LINKTYPE_RAW_IP: u32 = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::Tx => "tx",
            Direction::Rx => "rx",
        }
    }

    fn trace_tag(self) -> char {
        match self {
            Direction::Tx => 't',
            Direction::Rx => 'r',
        }
    }
}

/// One MAC-level send or receive on a device.
#[derive(Debug, Clone)]
pub struct CapturedPacket {
    pub at: f64,
    pub direction: Direction,
    pub wire_bytes: u32,
    pub app_bytes: u32,
    pub src: (Ipv4Addr, u16),
    pub dst: (Ipv4Addr, u16),
    pub payload_text: String,
    pub sn: Option<u32>,
    pub created_at: Option<f64>,
    pub rx_power_dbm: Option<f64>,
    /// Synthetic IPv4/UDP datagram bytes for the PCAP capture.
    pub frame: Vec<u8>,
}

/// Layer configuration echoed into the report for one device.
#[derive(Debug, Clone)]
pub struct DeviceSummary {
    pub layer_name: String,
    pub dev_index: u32,
    pub address: Ipv4Addr,
    pub phy_desc: String,
    pub mac_desc: String,
    pub net_desc: String,
}

#[derive(Debug, Clone)]
pub struct DeviceRecord {
    pub summary: DeviceSummary,
    pub packets: Vec<CapturedPacket>,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerSample {
    pub at: f64,
    pub breakdown: PowerBreakdown,
    pub remaining_j: f64,
}

#[derive(Debug, Clone)]
pub struct PeripheralSummary {
    pub name: String,
    pub kind: &'static str,
    pub power_on_w: f64,
    pub power_idle_w: f64,
    pub capacity_bits: u64,
    pub bits_acquired: u64,
    pub storage_full_drops: u64,
}

#[derive(Debug, Clone, Default)]
pub struct DroneReport {
    pub node_id: u32,
    pub devices: Vec<DeviceRecord>,
    pub trajectory: Vec<(f64, Vec3)>,
    pub power_trace: Vec<PowerSample>,
    pub storage_trace: Vec<(f64, u64)>,
    pub peripherals: Vec<PeripheralSummary>,
    pub depletion_at: Option<f64>,
    /// NAT relay mappings: external port to internal (address, port).
    pub nat_entries: Vec<(u16, (Ipv4Addr, u16))>,
}

impl DroneReport {
    fn default_with(node_id: u32) -> Self {
        Self {
            node_id,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZspReport {
    pub node_id: u32,
    pub position: Vec3,
    pub devices: Vec<DeviceRecord>,
}

#[derive(Debug, Clone)]
pub struct RemoteReport {
    pub node_id: u32,
    pub devices: Vec<DeviceRecord>,
}

/// Everything the XML report, traces and KPI analysis are derived from.
#[derive(Debug, Default)]
pub struct SimulationReport {
    pub scenario_name: String,
    pub duration_virtual: f64,
    pub duration_real: f64,
    pub buildings: Vec<Building>,
    pub regions: Vec<Box3>,
    pub drones: Vec<DroneReport>,
    pub zsps: Vec<ZspReport>,
    pub remotes: Vec<RemoteReport>,
}

impl SimulationReport {
    pub fn new(scenario_name: &str) -> Self {
        Self {
            scenario_name: scenario_name.to_string(),
            ..Default::default()
        }
    }

    pub fn drone_mut(&mut self, node_id: u32) -> &mut DroneReport {
        let idx = self
            .drones
            .iter()
            .position(|d| d.node_id == node_id)
            .unwrap_or_else(|| {
                self.drones.push(DroneReport::default_with(node_id));
                self.drones.len() - 1
            });
        &mut self.drones[idx]
    }

    /// Serializes the XML summary. `executed_at` is the only
    /// non-deterministic field and is passed in so tests can pin it.
    pub fn to_xml(&self, executed_at: &str) -> String {
        let mut x = XmlWriter::new();
        x.open_with(
            "Simulation",
            &[
                ("scenario", self.scenario_name.clone()),
                ("executedAt", executed_at.to_string()),
            ],
        );
        x.leaf(
            "duration",
            &[
                ("real", fmt_f64(self.duration_real)),
                ("virtual", fmt_f64(self.duration_virtual)),
            ],
        );

        x.open("World");
        x.open("Buildings");
        for (i, b) in self.buildings.iter().enumerate() {
            x.leaf(
                "Building",
                &[
                    ("id", i.to_string()),
                    ("type", format!("{:?}", b.kind).to_lowercase()),
                    ("walls", wall_name(b.walls).to_string()),
                    ("floors", b.floors.to_string()),
                    ("roomsX", b.rooms_x.to_string()),
                    ("roomsY", b.rooms_y.to_string()),
                    ("boundaries", bounds_text(&b.bounds)),
                ],
            );
        }
        x.close("Buildings");
        x.open("InterestRegions");
        for (i, r) in self.regions.iter().enumerate() {
            x.leaf(
                "InterestRegion",
                &[("id", i.to_string()), ("boundaries", bounds_text(r))],
            );
        }
        x.close("InterestRegions");
        x.close("World");

        x.open("Zsps");
        for z in &self.zsps {
            x.open_with("Zsp", &[("id", z.node_id.to_string())]);
            x.leaf(
                "position",
                &[
                    ("x", fmt_f64(z.position.x)),
                    ("y", fmt_f64(z.position.y)),
                    ("z", fmt_f64(z.position.z)),
                ],
            );
            write_devices(&mut x, &z.devices);
            x.close("Zsp");
        }
        x.close("Zsps");

        x.open("Drones");
        for d in &self.drones {
            x.open_with("Drone", &[("id", d.node_id.to_string())]);
            write_devices(&mut x, &d.devices);
            x.open("trajectory");
            for (t, p) in &d.trajectory {
                x.leaf(
                    "point",
                    &[
                        ("t", fmt_f64(*t)),
                        ("x", fmt_f64(p.x)),
                        ("y", fmt_f64(p.y)),
                        ("z", fmt_f64(p.z)),
                    ],
                );
            }
            x.close("trajectory");
            x.open("Peripherals");
            for p in &d.peripherals {
                x.leaf(
                    "Peripheral",
                    &[
                        ("name", p.name.clone()),
                        ("type", p.kind.to_string()),
                        ("onW", fmt_f64(p.power_on_w)),
                        ("idleW", fmt_f64(p.power_idle_w)),
                        ("capacityBits", p.capacity_bits.to_string()),
                        ("bitsAcquired", p.bits_acquired.to_string()),
                        ("storageFullDrops", p.storage_full_drops.to_string()),
                    ],
                );
            }
            x.close("Peripherals");
            x.open("powerTrace");
            for s in &d.power_trace {
                x.leaf(
                    "sample",
                    &[
                        ("t", fmt_f64(s.at)),
                        ("level", fmt_f64(s.breakdown.level_w)),
                        ("vertical", fmt_f64(s.breakdown.vertical_w)),
                        ("drag", fmt_f64(s.breakdown.drag_w)),
                        ("peripherals", fmt_f64(s.breakdown.peripherals_w)),
                        ("radio", fmt_f64(s.breakdown.radio_w)),
                        ("total", fmt_f64(s.breakdown.total_w())),
                        ("remainingJ", fmt_f64(s.remaining_j)),
                    ],
                );
            }
            x.close("powerTrace");
            x.open("storageTrace");
            for (t, occupied) in &d.storage_trace {
                x.leaf(
                    "sample",
                    &[("t", fmt_f64(*t)), ("occupiedBits", occupied.to_string())],
                );
            }
            x.close("storageTrace");
            if !d.nat_entries.is_empty() {
                x.open("natTable");
                for (port, (addr, internal_port)) in &d.nat_entries {
                    x.leaf(
                        "entry",
                        &[
                            ("externalPort", port.to_string()),
                            ("internalAddress", addr.to_string()),
                            ("internalPort", internal_port.to_string()),
                        ],
                    );
                }
                x.close("natTable");
            }
            if let Some(t) = d.depletion_at {
                x.leaf("energyDepletion", &[("t", fmt_f64(t))]);
            }
            x.close("Drone");
        }
        x.close("Drones");

        x.open("Remotes");
        for r in &self.remotes {
            x.open_with("Remote", &[("id", r.node_id.to_string())]);
            write_devices(&mut x, &r.devices);
            x.close("Remote");
        }
        x.close("Remotes");

        x.close("Simulation");
        x.finish()
    }

    /// Writes the XML report, trace files and PCAP captures under `dir`.
    /// Returns the created paths.
    pub fn write_all(&self, dir: &Path, executed_at: &str) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let xml_path = dir.join(REPORT_FILE);
        fs::write(&xml_path, self.to_xml(executed_at))?;
        written.push(xml_path);

        let all_devices = self
            .drones
            .iter()
            .map(|d| (d.node_id, &d.devices))
            .chain(self.zsps.iter().map(|z| (z.node_id, &z.devices)))
            .chain(self.remotes.iter().map(|r| (r.node_id, &r.devices)));
        for (node, devices) in all_devices {
            for dev in devices {
                if dev.packets.is_empty() {
                    continue; // no records, no file
                }
                let stem = format!(
                    "{}-{}-{}",
                    dev.summary.layer_name, node, dev.summary.dev_index
                );
                let trace_path = dir.join(format!("{stem}.tr"));
                let mut trace = String::new();
                for p in &dev.packets {
                    let _ = writeln!(
                        trace,
                        "{} {:.9} {} {}:{} > {}:{}",
                        p.direction.trace_tag(),
                        p.at,
                        p.wire_bytes,
                        p.src.0,
                        p.src.1,
                        p.dst.0,
                        p.dst.1
                    );
                }
                fs::write(&trace_path, trace)?;
                written.push(trace_path);

                let pcap_path = dir.join(format!("{stem}.pcap"));
                let mut pcap = Vec::new();
                write_pcap(
                    &mut pcap,
                    dev.packets.iter().map(|p| (p.at, p.frame.as_slice())),
                )?;
                fs::write(&pcap_path, pcap)?;
                written.push(pcap_path);
            }
        }
        Ok(written)
    }
}

fn write_devices(x: &mut XmlWriter, devices: &[DeviceRecord]) {
    x.open("NetDevices");
    for dev in devices {
        x.open_with(
            "NetDevice",
            &[
                ("id", dev.summary.dev_index.to_string()),
                ("layer", dev.summary.layer_name.clone()),
                ("address", dev.summary.address.to_string()),
            ],
        );
        x.leaf("phy", &[("config", dev.summary.phy_desc.clone())]);
        x.leaf("mac", &[("config", dev.summary.mac_desc.clone())]);
        x.leaf("net", &[("config", dev.summary.net_desc.clone())]);
        x.open("traffic");
        for p in &dev.packets {
            let mut attrs = vec![
                ("direction", p.direction.as_str().to_string()),
                ("timestamp", fmt_f64(p.at)),
                ("lengthBytes", p.wire_bytes.to_string()),
                ("appBytes", p.app_bytes.to_string()),
                ("src", format!("{}:{}", p.src.0, p.src.1)),
                ("dst", format!("{}:{}", p.dst.0, p.dst.1)),
            ];
            if let Some(sn) = p.sn {
                attrs.push(("sn", sn.to_string()));
            }
            if let Some(created) = p.created_at {
                attrs.push(("created", fmt_f64(created)));
            }
            if let Some(rx) = p.rx_power_dbm {
                attrs.push(("rxPowerDbm", fmt_f64(rx)));
            }
            x.text_leaf("packet", &attrs, &p.payload_text);
        }
        x.close("traffic");
        x.close("NetDevice");
    }
    x.close("NetDevices");
}

fn wall_name(w: crate::world::WallMaterial) -> &'static str {
    match w {
        crate::world::WallMaterial::Wood => "wood",
        crate::world::WallMaterial::ConcreteWithWindows => "concreteWithWindows",
        crate::world::WallMaterial::ConcreteWithoutWindows => "concreteWithoutWindows",
        crate::world::WallMaterial::StoneBlocks => "stoneBlocks",
    }
}

fn bounds_text(b: &Box3) -> String {
    b.bounds().map(fmt_f64).join(" ")
}

fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation; deterministic for equal inputs
    format!("{v}")
}

// ---------------------------------------------------------------------------
// Minimal XML emission with escaping
// ---------------------------------------------------------------------------

struct XmlWriter {
    buf: String,
    depth: usize,
}

impl XmlWriter {
    fn new() -> Self {
        Self {
            buf: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            depth: 0,
        }
    }

    fn indent(&mut self) {
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
    }

    fn open(&mut self, tag: &str) {
        self.open_with(tag, &[]);
    }

    fn open_with(&mut self, tag: &str, attrs: &[(&str, String)]) {
        self.indent();
        let _ = write!(self.buf, "<{tag}");
        for (k, v) in attrs {
            let _ = write!(self.buf, " {k}=\"{}\"", escape(v));
        }
        self.buf.push_str(">\n");
        self.depth += 1;
    }

    fn close(&mut self, tag: &str) {
        self.depth -= 1;
        self.indent();
        let _ = writeln!(self.buf, "</{tag}>");
    }

    fn leaf(&mut self, tag: &str, attrs: &[(&str, String)]) {
        self.indent();
        let _ = write!(self.buf, "<{tag}");
        for (k, v) in attrs {
            let _ = write!(self.buf, " {k}=\"{}\"", escape(v));
        }
        self.buf.push_str("/>\n");
    }

    fn text_leaf(&mut self, tag: &str, attrs: &[(&str, String)], text: &str) {
        self.indent();
        let _ = write!(self.buf, "<{tag}");
        for (k, v) in attrs {
            let _ = write!(self.buf, " {k}=\"{}\"", escape(v));
        }
        let _ = writeln!(self.buf, ">{}</{tag}>", escape(text));
    }

    fn finish(self) -> String {
        debug_assert_eq!(self.depth, 0);
        self.buf
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // control characters are not representable in XML 1.0
            c if (c as u32) < 0x20 && c != '\n' && c != '\t' => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// PCAP (classic format, little-endian, microsecond timestamps)
// ---------------------------------------------------------------------------

/// Writes a classic pcap stream: 24-byte global header (magic 0xa1b2c3d4,
/// version 2.4, snaplen 65535, raw-IP linktype) followed by 16-byte record
/// headers with seconds/microseconds relative to simulation start.
pub fn write_pcap<'a>(
    out: &mut impl Write,
    frames: impl Iterator<Item = (f64, &'a [u8])>,
) -> io::Result<()> {
    out.write_all(&0xa1b2c3d4u32.to_le_bytes())?;
    out.write_all(&2u16.to_le_bytes())?; // version major
    out.write_all(&4u16.to_le_bytes())?; // version minor
    out.write_all(&0i32.to_le_bytes())?; // thiszone
    out.write_all(&0u32.to_le_bytes())?; // sigfigs
    out.write_all(&65535u32.to_le_bytes())?; // snaplen
    out.write_all(&PCAP_LINKTYPE_RAW_IP.to_le_bytes())?;
    for (at, frame) in frames {
        let ts_sec = at.floor() as u32;
        let ts_usec = ((at - f64::from(ts_sec)) * 1e6).round() as u32;
        let (ts_sec, ts_usec) = if ts_usec >= 1_000_000 {
            (ts_sec + 1, ts_usec - 1_000_000)
        } else {
            (ts_sec, ts_usec)
        };
        out.write_all(&ts_sec.to_le_bytes())?;
        out.write_all(&ts_usec.to_le_bytes())?;
        out.write_all(&(frame.len() as u32).to_le_bytes())?; // captured
        out.write_all(&(frame.len() as u32).to_le_bytes())?; // original
        out.write_all(frame)?;
    }
    Ok(())
}

/// Builds the synthetic IPv4+UDP datagram captured for one application
/// payload. Checksummed IPv4 header, zero UDP checksum (legal over IPv4).
pub fn ipv4_udp_frame(src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), payload: &[u8]) -> Vec<u8> {
    let udp_len = 8 + payload.len() as u16;
    let total_len = 20 + udp_len;
    let mut frame = Vec::with_capacity(total_len as usize);
    frame.push(0x45); // version 4, IHL 5
    frame.push(0); // DSCP/ECN
    frame.extend_from_slice(&total_len.to_be_bytes());
    frame.extend_from_slice(&[0, 0]); // identification
    frame.extend_from_slice(&[0, 0]); // flags/fragment offset
    frame.push(64); // TTL
    frame.push(17); // UDP
    frame.extend_from_slice(&[0, 0]); // checksum placeholder
    frame.extend_from_slice(&src.0.octets());
    frame.extend_from_slice(&dst.0.octets());
    let checksum = ipv4_checksum(&frame[..20]);
    frame[10..12].copy_from_slice(&checksum.to_be_bytes());
    frame.extend_from_slice(&src.1.to_be_bytes());
    frame.extend_from_slice(&dst.1.to_be_bytes());
    frame.extend_from_slice(&udp_len.to_be_bytes());
    frame.extend_from_slice(&[0, 0]); // UDP checksum 0 = unused
    frame.extend_from_slice(payload);
    frame
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for pair in header.chunks(2) {
        let word = u16::from_be_bytes([pair[0], *pair.get(1).unwrap_or(&0)]);
        sum += u32::from(word);
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Wire overhead our synthetic datagrams add to an application payload.
pub const IPV4_UDP_OVERHEAD: u32 = 28;

// ---------------------------------------------------------------------------
// Progress log
// ---------------------------------------------------------------------------

/// Streams the per-second status report: one line per virtual second with
/// the time instant, the speedup over real time and the events processed in
/// the interval. Wrapped by start/end wall-clock stamps and an elapsed
/// footer.
pub struct ProgressLogger {
    sinks: Vec<Box<dyn Write>>,
    total_events: u64,
}

impl ProgressLogger {
    pub fn new(sinks: Vec<Box<dyn Write>>, started_at: &str) -> Self {
        let mut logger = Self {
            sinks,
            total_events: 0,
        };
        logger.emit(&format!("Simulation started at {started_at}\n"));
        logger
    }

    fn emit(&mut self, line: &str) {
        for sink in &mut self.sinks {
            let _ = sink.write_all(line.as_bytes());
        }
    }

    pub fn on_interval(&mut self, mark: IntervalMark) {
        self.total_events += mark.events;
        let speedup = if mark.wall_interval > 0.0 {
            1.0 / mark.wall_interval
        } else {
            f64::INFINITY
        };
        let line = format!(
            "[t={} s] speedup {:.2}x, events {}\n",
            mark.second + 1,
            speedup,
            mark.events
        );
        self.emit(&line);
    }

    pub fn finish(&mut self, finished_at: &str, wall_seconds: f64) {
        let line = format!(
            "Simulation finished at {finished_at}\nElapsed wall clock: {wall_seconds:.3} s ({} events)\n",
            self.total_events
        );
        self.emit(&line);
        for sink in &mut self.sinks {
            let _ = sink.flush();
        }
    }
}

/// Parses `(second, speedup, events)` back out of a progress-log status
/// line; used by the perf KPI and the bookkeeping checks.
pub fn parse_progress_line(line: &str) -> Option<(u64, f64, u64)> {
    let t = line.strip_prefix("[t=")?;
    let (second, rest) = t.split_once(" s] speedup ")?;
    let (speedup, rest) = rest.split_once("x, events ")?;
    Some((
        second.parse().ok()?,
        speedup.parse().ok()?,
        rest.trim().parse().ok()?,
    ))
}
