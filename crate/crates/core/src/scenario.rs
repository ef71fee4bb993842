//! Scenario building and execution: turns a validated [`ScenarioConfig`]
//! into entities, protocol stacks, links and applications, then drives the
//! event loop.
//!
//! The build follows the configuration flow: static config, world, global
//! PHY/MAC/NET layers, entity creation and registration, net-device
//! attachment with address assignment, mobility, applications, peripherals
//! plus energy, and finally the backbone wiring. Global node ids are dense
//! in creation order (drones, then ZSPs, then remotes). Radio subnets hand
//! out host addresses in the same order; the backbone assigns remotes first,
//! so the first remote is always 200.0.0.1.
//!
//! Routing is deliberately simple: a frame goes straight to the destination
//! device when the destination address sits on a shared subnet, over the
//! backbone bus when both ends are attached to it, and through the serving
//! access point (strongest received power, re-evaluated every gate tick)
//! otherwise. NAT relays rewrite flows between their internal and external
//! devices.

use crate::apps::{
    fill_pattern, GenericHeader, NatTable, TelemetryClient, TelemetryClientConfig,
    TelemetryPayload, TelemetryServer, TelemetrySnapshot, BROADCAST,
};
use crate::channel::{
    path_loss, rx_power_dbm, snr_db, BackboneBus, DropReason, LinkTable, LossModel, RadioParams,
    RatePolicy, RateTable,
};
use crate::config::{
    ApplicationConfig, BatteryConfig, LossModelConfig, MechanicsConfig, MobilityModelConfig,
    PeripheralConfig, RadioPowerConfig, RatePolicyConfig, ScenarioConfig,
};
use crate::energy::{mechanical_power, EnergySource, PowerBreakdown};
use crate::engine::{Engine, IntervalMark, RunStats};
use crate::entities::{Mechanics, Registry};
use crate::mobility::{FlightPlan, InterestPoint, Mission, MobilityError, SpeedProfile};
use crate::peripherals::{
    Peripheral, PeripheralKind, PeripheralSet, PeripheralState, PowerProfile,
};
use crate::report::{
    ipv4_udp_frame, CapturedPacket, DeviceRecord, DeviceSummary, Direction, PeripheralSummary,
    PowerSample, SimulationReport, ZspReport, IPV4_UDP_OVERHEAD,
};
use crate::vec3::Vec3;
use crate::world::{Box3, Building, World};
use std::collections::{HashMap, VecDeque};
use std::net::Ipv4Addr;
use thiserror::Error;

pub const BACKBONE_SUBNET: Ipv4Addr = Ipv4Addr::new(200, 0, 0, 0);
pub const BACKBONE_MASK: Ipv4Addr = Ipv4Addr::new(255, 0, 0, 0);
pub const BACKBONE_LAYER_NAME: &str = "internet";
/// Local port base for generic client applications.
const GENERIC_LOCAL_PORT_BASE: u16 = 20000;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{path}: {source}")]
    Mobility { path: String, source: MobilityError },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// Engine-level knobs taken from the scenario `staticConfig` entries.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// RoI gating and attachment re-evaluation period.
    pub gate_interval: f64,
    /// Trajectory sampling period for the report.
    pub trajectory_interval: f64,
    pub bus_rate_bps: f64,
    pub bus_delay_s: f64,
    /// Retransmission timeout of the reliable byte contract.
    pub rto_s: f64,
    /// Max fragment size honored by generic traffic.
    pub mss_bytes: u32,
    /// Zero-rate window after which a reliable client gives up.
    pub connection_timeout_s: f64,
    /// Turn the SNR margin into a packet error rate instead of the
    /// deterministic sensitivity threshold.
    pub probabilistic_loss: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            gate_interval: 0.1,
            trajectory_interval: 1.0,
            bus_rate_bps: 100e6,
            bus_delay_s: 0.001,
            rto_s: 0.2,
            mss_bytes: 1380,
            connection_timeout_s: 5.0,
            probabilistic_loss: false,
        }
    }
}

impl SimParams {
    /// Applies `name`/`value` overrides; unknown names are reported back.
    pub fn apply_static_config(&mut self, entries: &[(String, String)]) -> Vec<String> {
        let mut unknown = Vec::new();
        for (name, value) in entries {
            let parsed: Option<f64> = value.parse().ok();
            match (name.as_str(), parsed) {
                ("gate.interval", Some(v)) if v > 0.0 => self.gate_interval = v,
                ("trajectory.sampleInterval", Some(v)) if v > 0.0 => self.trajectory_interval = v,
                ("bus.dataRate", Some(v)) if v > 0.0 => self.bus_rate_bps = v,
                ("bus.delay", Some(v)) if v >= 0.0 => self.bus_delay_s = v,
                ("generic.rto", Some(v)) if v > 0.0 => self.rto_s = v,
                ("generic.mss", Some(v)) if v >= 64.0 => self.mss_bytes = v as u32,
                ("generic.connectionTimeout", Some(v)) if v > 0.0 => self.connection_timeout_s = v,
                ("channel.probabilisticLoss", _) => {
                    self.probabilistic_loss = value == "true" || value == "1";
                }
                _ => unknown.push(name.clone()),
            }
        }
        unknown
    }
}

// ---------------------------------------------------------------------------
// Runtime structures
// ---------------------------------------------------------------------------

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DevKey {
    pub node: NodeId,
    pub dev: u32,
}

impl DevKey {
    fn as_u64(self) -> u64 {
        (u64::from(self.node)) << 32 | u64::from(self.dev)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NodeKind {
    Drone(usize),
    Zsp(usize),
    Remote(usize),
}

#[derive(Debug, Clone)]
pub struct Stack {
    pub name: String,
    pub phy_kind: String,
    pub mac_kind: String,
    pub radio: RadioParams,
    pub loss: LossModel,
    pub rate: RatePolicy,
    pub subnet: Ipv4Addr,
    pub mask: Ipv4Addr,
}

impl Stack {
    fn contains(&self, addr: Ipv4Addr) -> bool {
        let m = u32::from(self.mask);
        u32::from(addr) & m == u32::from(self.subnet) & m
    }
}

#[derive(Debug, Clone)]
pub struct Device {
    pub key: DevKey,
    /// None for backbone devices.
    pub stack: Option<usize>,
    pub addr: Ipv4Addr,
    pub radio_power: RadioPowerConfig,
    pub is_ap: bool,
}

struct DroneState {
    node: NodeId,
    mechanics: Mechanics,
    mission: Mission,
    battery: EnergySource,
    peripherals: PeripheralSet,
    roi_triggers: Vec<Option<Vec<usize>>>,
    frozen_position: Option<Vec3>,
}

struct ZspState {
    node: NodeId,
    position: Vec3,
}

struct RemoteState {
    node: NodeId,
}

struct NodeInfo {
    kind: NodeKind,
    devices: Vec<Device>,
}

// ---------------------------------------------------------------------------
// Packets and events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacketKind {
    Telemetry,
    Generic { sn: u32, created_ns: u64 },
    GenericAck { sn: u32 },
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub src: (Ipv4Addr, u16),
    pub dst: (Ipv4Addr, u16),
    pub bytes: Vec<u8>,
    pub kind: PacketKind,
    pub created_at: f64,
}

impl Packet {
    fn wire_bytes(&self) -> u32 {
        self.bytes.len() as u32 + IPV4_UDP_OVERHEAD
    }

    fn payload_text(&self) -> String {
        match self.kind {
            PacketKind::Telemetry => String::from_utf8_lossy(&self.bytes).into_owned(),
            PacketKind::Generic { sn, created_ns } => format!(
                "generic sn={sn} created={} len={}",
                created_ns as f64 / 1e9,
                self.bytes.len()
            ),
            PacketKind::GenericAck { sn } => format!("ack sn={sn}"),
        }
    }

    fn sn(&self) -> Option<u32> {
        match self.kind {
            PacketKind::Generic { sn, .. } | PacketKind::GenericAck { sn } => Some(sn),
            PacketKind::Telemetry => TelemetryPayload::parse(&self.bytes).ok().map(|p| p.sn),
        }
    }

    fn created(&self) -> Option<f64> {
        match self.kind {
            PacketKind::Generic { created_ns, .. } => Some(created_ns as f64 / 1e9),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    packet: Packet,
    from: DevKey,
    to: DevKey,
    rx_power_dbm: Option<f64>,
}

#[derive(Debug)]
pub enum Ev {
    AppStart(usize),
    AppStop(usize),
    AppTick(usize),
    Deliver(Box<Frame>),
    EnergyTick { drone: usize },
    Acquire { drone: usize, peripheral: usize },
    GateTick,
    TrajectoryTick,
    Rto { app: usize, sn: u32 },
    StorageKick { app: usize },
}

// ---------------------------------------------------------------------------
// Applications (runtime side)
// ---------------------------------------------------------------------------

struct PendingMsg {
    sn: u32,
    created_at: f64,
    bytes: Vec<u8>,
    /// Bits of storage this message carries (storage client only).
    info_bits: u64,
}

/// Stop-and-wait acknowledged transport with RTO retransmission, built on
/// top of the link layer. One message in flight at a time; messages queue
/// behind it FIFO.
struct Transport {
    local_port: u16,
    remote: (Ipv4Addr, u16),
    queue: VecDeque<PendingMsg>,
    in_flight: Option<PendingMsg>,
    next_sn: u32,
    pattern: u16,
    zero_rate_since: Option<f64>,
    connection_lost: bool,
}

impl Transport {
    fn new(local_port: u16, remote: (Ipv4Addr, u16)) -> Self {
        Self {
            local_port,
            remote,
            queue: VecDeque::new(),
            in_flight: None,
            next_sn: 0,
            pattern: 0,
            zero_rate_since: None,
            connection_lost: false,
        }
    }
}

enum GenericRole {
    Periodic { payload_bytes: u32, interval: f64 },
    Storage { payload_bytes: u32 },
}

enum AppKind {
    TelemetryClient(TelemetryClient),
    TelemetryServer(TelemetryServer),
    GenericClient {
        transport: Transport,
        role: GenericRole,
        reliable: bool,
    },
    EchoServer {
        port: u16,
    },
    Nat {
        internal_dev: u32,
        external_dev: u32,
        table: NatTable,
    },
}

struct AppState {
    node: NodeId,
    start_time: f64,
    stop_time: Option<f64>,
    running: bool,
    kind: AppKind,
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone)]
pub struct SimStats {
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub drops: HashMap<&'static str, u64>,
    pub nat_inbound_drops: u64,
}

impl SimStats {
    fn record_drop(&mut self, reason: DropReason) {
        *self.drops.entry(reason.as_str()).or_insert(0) += 1;
    }

    pub fn dropped_total(&self) -> u64 {
        self.drops.values().sum()
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

pub struct Simulation {
    pub params: SimParams,
    duration: f64,
    world: World,
    stacks: Vec<Stack>,
    nodes: Vec<NodeInfo>,
    drones: Registry<DroneState>,
    zsps: Registry<ZspState>,
    #[allow(dead_code)]
    remotes: Registry<RemoteState>,
    apps: Vec<AppState>,
    addr_book: HashMap<Ipv4Addr, DevKey>,
    attachments: HashMap<DevKey, DevKey>,
    links: LinkTable,
    bus: BackboneBus,
    rx_busy_until: HashMap<DevKey, f64>,
    tx_busy_until: HashMap<DevKey, f64>,
    log_components: std::collections::HashSet<String>,
    pub debug_log: Vec<String>,
    pub report: SimulationReport,
    pub stats: SimStats,
}

impl Simulation {
    /// Builds the runnable scenario and schedules its bootstrap events.
    pub fn build(cfg: &ScenarioConfig) -> Result<(Self, Engine<Ev>, Vec<String>), BuildError> {
        let mut engine: Engine<Ev> = Engine::new(cfg.seed);
        let mut warnings = Vec::new();

        // static config
        let mut params = SimParams::default();
        for unknown in params.apply_static_config(&cfg.static_config) {
            warnings.push(format!(
                "staticConfig: unknown or invalid entry '{unknown}'"
            ));
        }

        // world
        let mut world = World::new();
        for b in &cfg.world.buildings {
            world.add_building(Building {
                bounds: Box3::from_bounds(b.boundaries).map_err(|e| BuildError::Invalid {
                    path: "/world/buildings".into(),
                    message: e.to_string(),
                })?,
                kind: b.kind,
                walls: b.walls,
                floors: b.floors,
                rooms_x: b.rooms_x,
                rooms_y: b.rooms_y,
            });
        }
        for r in &cfg.world.regions_of_interest {
            world.create_region(Box3::from_bounds(*r).map_err(|e| BuildError::Invalid {
                path: "/world/regionsOfInterest".into(),
                message: e.to_string(),
            })?);
        }

        // global PHY/MAC/NET layers -> protocol stacks
        let mut stacks = Vec::new();
        for (i, ((phy, mac), net)) in cfg
            .phy_layers
            .iter()
            .zip(&cfg.mac_layers)
            .zip(&cfg.net_layers)
            .enumerate()
        {
            let rate = match &mac.rate {
                RatePolicyConfig::Fixed(bps) => RatePolicy::Fixed(*bps),
                RatePolicyConfig::SnrTable(rows) => {
                    RatePolicy::SnrTable(RateTable::new(rows.clone()).map_err(|e| {
                        BuildError::Invalid {
                            path: format!("/macLayer/{i}"),
                            message: e.to_string(),
                        }
                    })?)
                }
                RatePolicyConfig::Default => RatePolicy::SnrTable(RateTable::wifi_default()),
            };
            stacks.push(Stack {
                name: if net.name.is_empty() {
                    format!("net{i}")
                } else {
                    net.name.clone()
                },
                phy_kind: phy.kind.clone(),
                mac_kind: mac.kind.clone(),
                radio: RadioParams {
                    tx_power_dbm: phy.tx_power_dbm,
                    tx_gain_dbi: phy.tx_gain_dbi,
                    rx_gain_dbi: phy.rx_gain_dbi,
                    frequency_hz: phy.frequency_hz,
                    noise_floor_dbm: phy.noise_floor_dbm,
                    rx_sensitivity_dbm: phy.rx_sensitivity_dbm,
                },
                loss: build_loss_model(&phy.loss_model),
                rate,
                subnet: net.address,
                mask: net.mask,
            });
        }

        // entity creation and registration: dense global ids, drones first
        let mut nodes: Vec<NodeInfo> = Vec::new();
        let mut drones: Registry<DroneState> = Registry::new();
        let mut zsps: Registry<ZspState> = Registry::new();
        let mut remotes: Registry<RemoteState> = Registry::new();
        for (i, dcfg) in cfg.drones.iter().enumerate() {
            let node = nodes.len() as NodeId;
            nodes.push(NodeInfo {
                kind: NodeKind::Drone(i),
                devices: Vec::new(),
            });
            drones.register(build_drone(
                node,
                dcfg,
                cfg.duration,
                &format!("/drones/{i}"),
            )?);
        }
        for (i, zcfg) in cfg.zsps.iter().enumerate() {
            let node = nodes.len() as NodeId;
            nodes.push(NodeInfo {
                kind: NodeKind::Zsp(i),
                devices: Vec::new(),
            });
            zsps.register(ZspState {
                node,
                position: zcfg.position.into(),
            });
        }
        for i in 0..cfg.remotes.len() {
            let node = nodes.len() as NodeId;
            nodes.push(NodeInfo {
                kind: NodeKind::Remote(i),
                devices: Vec::new(),
            });
            remotes.register(RemoteState { node });
        }

        // net-device attachment with per-subnet host counters
        let mut addr_book: HashMap<Ipv4Addr, DevKey> = HashMap::new();
        let mut host_counter = vec![1u32; stacks.len()];
        let mut attach_radio = |nodes: &mut Vec<NodeInfo>,
                                addr_book: &mut HashMap<Ipv4Addr, DevKey>,
                                node: NodeId,
                                stack_idx: usize,
                                radio_power: RadioPowerConfig,
                                is_ap: bool| {
            let host = host_counter[stack_idx];
            host_counter[stack_idx] += 1;
            let addr = Ipv4Addr::from(u32::from(stacks[stack_idx].subnet) | host);
            let dev = nodes[node as usize].devices.len() as u32;
            let key = DevKey { node, dev };
            nodes[node as usize].devices.push(Device {
                key,
                stack: Some(stack_idx),
                addr,
                radio_power,
                is_ap,
            });
            addr_book.insert(addr, key);
        };

        // drone devices are marked as access points when a NAT application
        // fronts them: the cluster behind the relay attaches there
        for (i, dcfg) in cfg.drones.iter().enumerate() {
            let node = drones[i].node;
            let nat_internal: Vec<usize> = dcfg
                .applications
                .iter()
                .filter_map(|a| match a {
                    ApplicationConfig::Nat {
                        internal_net_device,
                        ..
                    } => Some(*internal_net_device),
                    _ => None,
                })
                .collect();
            for (j, dev) in dcfg.net_devices.iter().enumerate() {
                attach_radio(
                    &mut nodes,
                    &mut addr_book,
                    node,
                    dev.stack,
                    dev.radio_power,
                    nat_internal.contains(&j),
                );
            }
        }
        for (i, zcfg) in cfg.zsps.iter().enumerate() {
            let node = zsps[i].node;
            for dev in &zcfg.net_devices {
                attach_radio(
                    &mut nodes,
                    &mut addr_book,
                    node,
                    dev.stack,
                    dev.radio_power,
                    zcfg.access_point,
                );
            }
        }

        // backbone wiring: remotes first, then bus-attached ZSPs
        let mut bus = BackboneBus::new(params.bus_rate_bps, params.bus_delay_s);
        let mut bus_host = 1u32;
        let mut attach_bus = |nodes: &mut Vec<NodeInfo>,
                              addr_book: &mut HashMap<Ipv4Addr, DevKey>,
                              bus: &mut BackboneBus,
                              node: NodeId| {
            let addr = Ipv4Addr::from(u32::from(BACKBONE_SUBNET) | bus_host);
            bus_host += 1;
            let dev = nodes[node as usize].devices.len() as u32;
            let key = DevKey { node, dev };
            nodes[node as usize].devices.push(Device {
                key,
                stack: None,
                addr,
                radio_power: RadioPowerConfig::default(),
                is_ap: false,
            });
            addr_book.insert(addr, key);
            bus.attach(node);
        };
        for remote in &remotes {
            attach_bus(&mut nodes, &mut addr_book, &mut bus, remote.node);
        }
        for (i, zcfg) in cfg.zsps.iter().enumerate() {
            if zcfg.backbone {
                attach_bus(&mut nodes, &mut addr_book, &mut bus, zsps[i].node);
            }
        }

        // applications
        let mut apps = Vec::new();
        for (i, dcfg) in cfg.drones.iter().enumerate() {
            for acfg in &dcfg.applications {
                apps.push(build_app(drones[i].node, acfg, apps.len()));
            }
        }
        for (i, zcfg) in cfg.zsps.iter().enumerate() {
            for acfg in &zcfg.applications {
                apps.push(build_app(zsps[i].node, acfg, apps.len()));
            }
        }
        for (i, rcfg) in cfg.remotes.iter().enumerate() {
            for acfg in &rcfg.applications {
                apps.push(build_app(remotes[i].node, acfg, apps.len()));
            }
        }

        // report scaffolding: device records in creation order
        let mut report = SimulationReport::new(&cfg.name);
        report.duration_virtual = cfg.duration;
        report.buildings = world.buildings().to_vec();
        for r in 0..world.region_count() {
            report
                .regions
                .push(world.get_region_coordinates(r).expect("created above"));
        }
        for z in &zsps {
            report.zsps.push(ZspReport {
                node_id: z.node,
                position: z.position,
                devices: device_records(&nodes[z.node as usize], &stacks),
            });
        }
        for d in &drones {
            let records = device_records(&nodes[d.node as usize], &stacks);
            report.drone_mut(d.node).devices = records;
        }
        for r in &remotes {
            report.remotes.push(crate::report::RemoteReport {
                node_id: r.node,
                devices: device_records(&nodes[r.node as usize], &stacks),
            });
        }

        let mut sim = Simulation {
            params,
            duration: cfg.duration,
            world,
            stacks,
            nodes,
            drones,
            zsps,
            remotes,
            apps,
            addr_book,
            attachments: HashMap::new(),
            links: LinkTable::new(),
            bus,
            rx_busy_until: HashMap::new(),
            tx_busy_until: HashMap::new(),
            log_components: cfg.log_components.iter().cloned().collect(),
            debug_log: Vec::new(),
            report,
            stats: SimStats::default(),
        };
        let (n_drones, n_zsps, n_remotes) = (sim.drones.len(), sim.zsps.len(), sim.remotes.len());
        sim.debug(
            "config",
            0.0,
            format!("scenario built: {n_drones} drones, {n_zsps} ZSPs, {n_remotes} remotes"),
        );

        // bootstrap events
        for i in 0..sim.apps.len() {
            let start = sim.apps[i].start_time.max(0.0);
            let stop = sim.apps[i].stop_time;
            engine
                .schedule(start, Ev::AppStart(i))
                .expect("fresh engine");
            if let Some(stop) = stop {
                engine
                    .schedule(stop.max(0.0), Ev::AppStop(i))
                    .expect("fresh engine");
            }
        }
        for (i, d) in sim.drones.iter().enumerate() {
            engine
                .schedule(d.battery.sampling_interval(), Ev::EnergyTick { drone: i })
                .expect("fresh engine");
            for (p, item) in d.peripherals.items().iter().enumerate() {
                if let PeripheralKind::Input {
                    acquisition_interval,
                    ..
                } = item.kind
                {
                    engine
                        .schedule(
                            acquisition_interval,
                            Ev::Acquire {
                                drone: i,
                                peripheral: p,
                            },
                        )
                        .expect("fresh engine");
                }
            }
        }
        engine.schedule(0.0, Ev::GateTick).expect("fresh engine");
        engine
            .schedule(0.0, Ev::TrajectoryTick)
            .expect("fresh engine");
        // storage occupancy baseline
        for i in 0..sim.drones.len() {
            if sim.drones[i].peripherals.has_storage() {
                sim.record_storage(i, 0.0);
            }
        }

        Ok((sim, engine, warnings))
    }

    /// Runs to the configured duration and finalizes the report.
    pub fn run(
        &mut self,
        engine: &mut Engine<Ev>,
        progress: Option<&mut dyn FnMut(IntervalMark)>,
    ) -> Result<RunStats, crate::engine::RunError> {
        let duration = self.duration;
        let stats = engine.run(duration, |eng, ev| self.handle(eng, ev), progress)?;
        self.finalize(&stats);
        Ok(stats)
    }

    fn finalize(&mut self, stats: &RunStats) {
        self.report.duration_real = stats.wall_seconds;
        for i in 0..self.drones.len() {
            let node = self.drones[i].node;
            let depletion = self.drones[i].battery.depleted_at();
            let summaries: Vec<PeripheralSummary> = self.drones[i]
                .peripherals
                .items()
                .iter()
                .map(|p| PeripheralSummary {
                    name: p.name.clone(),
                    kind: match p.kind {
                        PeripheralKind::Generic => "generic",
                        PeripheralKind::Storage { .. } => "storage",
                        PeripheralKind::Input { .. } => "input",
                    },
                    power_on_w: p.power.on_w,
                    power_idle_w: p.power.idle_w,
                    capacity_bits: match p.kind {
                        PeripheralKind::Storage { capacity_bits, .. } => capacity_bits,
                        _ => 0,
                    },
                    bits_acquired: p.bits_acquired,
                    storage_full_drops: p.storage_full_drops,
                })
                .collect();
            let dr = self.report.drone_mut(node);
            dr.peripherals = summaries;
            if dr.depletion_at.is_none() {
                dr.depletion_at = depletion;
            }
        }
        // NAT tables land in the report so flows can be resolved offline
        type NatDump = Vec<(u16, (Ipv4Addr, u16))>;
        let mut nat_dumps: Vec<(NodeId, NatDump)> = Vec::new();
        for app in &self.apps {
            if let AppKind::Nat { table, .. } = &app.kind {
                let entries: Vec<(u16, (Ipv4Addr, u16))> = (0..table.len() as u32)
                    .map(|off| crate::apps::NAT_PORT_BASE + off as u16)
                    .filter_map(|port| table.inbound(port).map(|flow| (port, flow)))
                    .collect();
                nat_dumps.push((app.node, entries));
            }
        }
        for (node, entries) in nat_dumps {
            self.report.drone_mut(node).nat_entries = entries;
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Debug line gated by the scenario's `logComponents`.
    fn debug(&mut self, component: &str, now: f64, message: String) {
        if self.log_components.iter().any(|c| c == component) {
            self.debug_log
                .push(format!("t={now:.3} [{component}] {message}"));
        }
    }

    // -- positions -----------------------------------------------------------

    fn drone_state_at(&self, i: usize, now: f64) -> (Vec3, Vec3) {
        let d = &self.drones[i];
        if let Some(p) = d.frozen_position {
            return (p, Vec3::ZERO);
        }
        let st = d.mission.state_at(now);
        (st.position, st.velocity)
    }

    fn position_at(&self, node: NodeId, now: f64) -> Vec3 {
        match self.nodes[node as usize].kind {
            NodeKind::Drone(i) => self.drone_state_at(i, now).0,
            NodeKind::Zsp(i) => self.zsps[i].position,
            NodeKind::Remote(_) => Vec3::ZERO,
        }
    }

    fn is_depleted(&self, node: NodeId) -> bool {
        match self.nodes[node as usize].kind {
            NodeKind::Drone(i) => self.drones[i].battery.is_depleted(),
            _ => false,
        }
    }

    // -- event dispatch ------------------------------------------------------

    fn handle(&mut self, engine: &mut Engine<Ev>, ev: Ev) {
        match ev {
            Ev::AppStart(i) => self.on_app_start(engine, i),
            Ev::AppStop(i) => self.apps[i].running = false,
            Ev::AppTick(i) => self.on_app_tick(engine, i),
            Ev::Deliver(frame) => self.on_deliver(engine, *frame),
            Ev::EnergyTick { drone } => self.on_energy_tick(engine, drone),
            Ev::Acquire { drone, peripheral } => self.on_acquire(engine, drone, peripheral),
            Ev::GateTick => self.on_gate_tick(engine),
            Ev::TrajectoryTick => self.on_trajectory_tick(engine),
            Ev::Rto { app, sn } => self.on_rto(engine, app, sn),
            Ev::StorageKick { app } => self.on_storage_kick(engine, app),
        }
    }

    fn on_app_start(&mut self, engine: &mut Engine<Ev>, i: usize) {
        self.apps[i].running = true;
        let node = self.apps[i].node;
        self.debug(
            "apps",
            engine.now(),
            format!("application {i} started on node {node}"),
        );
        match self.apps[i].kind {
            AppKind::TelemetryClient(_) | AppKind::GenericClient { .. } => {
                let _ = engine.schedule(0.0, Ev::AppTick(i));
            }
            _ => {}
        }
        if let AppKind::GenericClient {
            role: GenericRole::Storage { .. },
            ..
        } = self.apps[i].kind
        {
            let _ = engine.schedule(0.0, Ev::StorageKick { app: i });
        }
    }

    fn app_expired(&self, i: usize, now: f64) -> bool {
        let app = &self.apps[i];
        !app.running || app.stop_time.is_some_and(|stop| now >= stop)
    }

    fn on_app_tick(&mut self, engine: &mut Engine<Ev>, i: usize) {
        let now = engine.now();
        if self.app_expired(i, now) {
            return;
        }
        let node = self.apps[i].node;
        if self.is_depleted(node) {
            return; // depleted drones stop transmitting
        }
        match &self.apps[i].kind {
            AppKind::TelemetryClient(_) => self.telemetry_client_tick(engine, i, node, now),
            AppKind::GenericClient {
                role:
                    GenericRole::Periodic {
                        payload_bytes,
                        interval,
                    },
                reliable,
                transport,
            } => {
                if transport.connection_lost {
                    return;
                }
                let (payload_bytes, interval, reliable) = (*payload_bytes, *interval, *reliable);
                self.generic_enqueue(engine, i, node, payload_bytes, 0, reliable, now);
                let _ = engine.schedule(interval, Ev::AppTick(i));
            }
            _ => {}
        }
    }

    fn telemetry_client_tick(&mut self, engine: &mut Engine<Ev>, i: usize, node: NodeId, now: f64) {
        let (position, velocity) = match self.nodes[node as usize].kind {
            NodeKind::Drone(d) => self.drone_state_at(d, now),
            NodeKind::Zsp(z) => (self.zsps[z].position, Vec3::ZERO),
            NodeKind::Remote(_) => (Vec3::ZERO, Vec3::ZERO),
        };
        let src_addr = self.primary_addr(node);
        let AppKind::TelemetryClient(client) = &mut self.apps[i].kind else {
            return;
        };
        let snap = TelemetrySnapshot {
            node_id: node,
            position,
            velocity,
        };
        let interval = client.cfg.transmission_interval;
        let free_data = client.cfg.free_data;
        let src_port = client.cfg.port;
        let send = client.on_tick(&snap);
        if let Some(send) = send {
            let bytes = send.payload.to_json().into_bytes();
            let app_len = bytes.len() as u64;
            let packet = Packet {
                src: (src_addr, src_port),
                dst: (send.dst, send.dst_port),
                bytes,
                kind: PacketKind::Telemetry,
                created_at: now,
            };
            self.send_from_node(engine, node, packet, None);
            // FreeData: transmitted telemetry releases storage space
            if free_data {
                if let NodeKind::Drone(d) = self.nodes[node as usize].kind {
                    if self.drones[d].peripherals.free(app_len * 8) {
                        self.record_storage(d, now);
                    }
                }
            }
        }
        let _ = engine.schedule(interval, Ev::AppTick(i));
    }

    /// Queues one generic message of `payload_bytes` (plus 12-byte header)
    /// and pushes the transport forward; unreliable mode fires immediately.
    #[allow(clippy::too_many_arguments)]
    fn generic_enqueue(
        &mut self,
        engine: &mut Engine<Ev>,
        app_idx: usize,
        node: NodeId,
        payload_bytes: u32,
        info_bits: u64,
        reliable: bool,
        now: f64,
    ) {
        let src_addr = self.primary_addr(node);
        let AppKind::GenericClient { transport, .. } = &mut self.apps[app_idx].kind else {
            return;
        };
        let sn = transport.next_sn;
        transport.next_sn += 1;
        let created_ns = (now * 1e9).round() as u64;
        let header = GenericHeader { sn, created_ns };
        let mut bytes = header.encode().to_vec();
        bytes.extend(fill_pattern(&mut transport.pattern, payload_bytes as usize));
        if reliable {
            transport.queue.push_back(PendingMsg {
                sn,
                created_at: now,
                bytes,
                info_bits,
            });
            self.transport_pump(engine, app_idx, node);
        } else {
            let (local_port, remote) = (transport.local_port, transport.remote);
            let packet = Packet {
                src: (src_addr, local_port),
                dst: remote,
                bytes,
                kind: PacketKind::Generic { sn, created_ns },
                created_at: now,
            };
            self.send_from_node(engine, node, packet, None);
        }
    }

    /// Sends the next queued message when nothing is in flight.
    fn transport_pump(&mut self, engine: &mut Engine<Ev>, app_idx: usize, node: NodeId) {
        let now = engine.now();
        let src_addr = self.primary_addr(node);
        let rto = self.params.rto_s;
        let packet;
        let sn;
        {
            let AppKind::GenericClient { transport, .. } = &mut self.apps[app_idx].kind else {
                return;
            };
            if transport.connection_lost || transport.in_flight.is_some() {
                return;
            }
            let Some(msg) = transport.queue.pop_front() else {
                return;
            };
            packet = Packet {
                src: (src_addr, transport.local_port),
                dst: transport.remote,
                bytes: msg.bytes.clone(),
                kind: PacketKind::Generic {
                    sn: msg.sn,
                    created_ns: (msg.created_at * 1e9).round() as u64,
                },
                created_at: msg.created_at,
            };
            sn = msg.sn;
            transport.in_flight = Some(msg);
        }
        self.send_from_node(engine, node, packet, None);
        self.track_zero_rate(app_idx, node, now);
        let _ = engine.schedule(rto, Ev::Rto { app: app_idx, sn });
    }

    /// Reliable clients give up after the link rate stays zero too long.
    fn track_zero_rate(&mut self, app_idx: usize, node: NodeId, now: f64) {
        let rate = self.current_rate_from(node, now);
        let timeout = self.params.connection_timeout_s;
        let mut just_lost = false;
        {
            let AppKind::GenericClient { transport, .. } = &mut self.apps[app_idx].kind else {
                return;
            };
            if rate > 0.0 {
                transport.zero_rate_since = None;
            } else {
                let since = *transport.zero_rate_since.get_or_insert(now);
                if now - since >= timeout && !transport.connection_lost {
                    transport.connection_lost = true;
                    just_lost = true;
                }
            }
        }
        if just_lost {
            self.debug(
                "apps",
                now,
                format!("generic client {app_idx} on node {node} lost its connection"),
            );
        }
    }

    /// Achievable rate toward the serving AP of the node's first radio
    /// device; backbone-only nodes always have the bus rate.
    fn current_rate_from(&self, node: NodeId, now: f64) -> f64 {
        let Some(dev) = self.nodes[node as usize].devices.first() else {
            return 0.0;
        };
        let Some(stack_idx) = dev.stack else {
            return self.bus.rate_bps;
        };
        let Some(&peer) = self.attachments.get(&dev.key) else {
            return 0.0;
        };
        let stack = &self.stacks[stack_idx];
        let tx_pos = self.position_at(node, now);
        let rx_pos = self.position_at(peer.node, now);
        match path_loss(
            &stack.loss,
            stack.radio.frequency_hz,
            tx_pos,
            rx_pos,
            &self.world,
        ) {
            Ok(loss) => {
                let rx = rx_power_dbm(&stack.radio, loss);
                stack.rate.rate_for(snr_db(rx, stack.radio.noise_floor_dbm))
            }
            Err(_) => 0.0,
        }
    }

    fn on_rto(&mut self, engine: &mut Engine<Ev>, app_idx: usize, sn: u32) {
        let now = engine.now();
        if self.app_expired(app_idx, now) {
            return;
        }
        let node = self.apps[app_idx].node;
        if self.is_depleted(node) {
            return;
        }
        let src_addr = self.primary_addr(node);
        let rto = self.params.rto_s;
        let packet;
        {
            let AppKind::GenericClient { transport, .. } = &mut self.apps[app_idx].kind else {
                return;
            };
            if transport.connection_lost {
                return;
            }
            let Some(in_flight) = &transport.in_flight else {
                return;
            };
            if in_flight.sn != sn {
                return; // already acknowledged
            }
            packet = Packet {
                src: (src_addr, transport.local_port),
                dst: transport.remote,
                bytes: in_flight.bytes.clone(),
                kind: PacketKind::Generic {
                    sn,
                    created_ns: (in_flight.created_at * 1e9).round() as u64,
                },
                created_at: in_flight.created_at,
            };
        }
        self.send_from_node(engine, node, packet, None);
        self.track_zero_rate(app_idx, node, now);
        let _ = engine.schedule(rto, Ev::Rto { app: app_idx, sn });
    }

    fn on_storage_kick(&mut self, engine: &mut Engine<Ev>, app_idx: usize) {
        let now = engine.now();
        if self.app_expired(app_idx, now) {
            return;
        }
        let node = self.apps[app_idx].node;
        let interval = self.params.gate_interval;
        if !self.is_depleted(node) {
            self.storage_client_try_send(engine, app_idx, node, now);
        }
        let _ = engine.schedule(interval, Ev::StorageKick { app: app_idx });
    }

    /// While memory is used, transfer it: one chunk per acknowledgement.
    fn storage_client_try_send(
        &mut self,
        engine: &mut Engine<Ev>,
        app_idx: usize,
        node: NodeId,
        now: f64,
    ) {
        let NodeKind::Drone(d) = self.nodes[node as usize].kind else {
            return;
        };
        let occupied = self.drones[d].peripherals.storage_occupied_bits();
        let chunk;
        let reliable_flag;
        {
            let AppKind::GenericClient {
                transport,
                role: GenericRole::Storage { payload_bytes },
                reliable,
            } = &self.apps[app_idx].kind
            else {
                return;
            };
            if occupied == 0 || transport.in_flight.is_some() || !transport.queue.is_empty() {
                return;
            }
            chunk = occupied.min(u64::from(*payload_bytes) * 8);
            reliable_flag = *reliable;
        }
        let chunk_bytes = chunk.div_ceil(8) as u32;
        self.generic_enqueue(
            engine,
            app_idx,
            node,
            chunk_bytes,
            chunk,
            reliable_flag,
            now,
        );
    }

    fn on_energy_tick(&mut self, engine: &mut Engine<Ev>, i: usize) {
        let now = engine.now();
        if self.drones[i].battery.is_depleted() {
            return;
        }
        let (_, velocity) = self.drone_state_at(i, now);
        let node = self.drones[i].node;
        let radio_w = self.radio_draw(node, now);
        let (breakdown, outcome, interval) = {
            let d = &mut self.drones[i];
            let mech = mechanical_power(velocity, &d.mechanics);
            let breakdown: PowerBreakdown = mech.with_loads(d.peripherals.total_power(), radio_w);
            let outcome = d.battery.drain(breakdown.total_w(), now);
            (breakdown, outcome, d.battery.sampling_interval())
        };
        self.report.drone_mut(node).power_trace.push(PowerSample {
            at: now,
            breakdown,
            remaining_j: outcome.remaining_j,
        });
        if outcome.depleted_now {
            self.handle_energy_depletion(i, now);
        } else {
            let _ = engine.schedule(interval, Ev::EnergyTick { drone: i });
        }
    }

    /// Depletion: log the time, freeze the drone in place, force the
    /// peripherals off. Transmission suppression happens in the send paths.
    fn handle_energy_depletion(&mut self, i: usize, now: f64) {
        let position = self.drone_state_at(i, now).0;
        let node = self.drones[i].node;
        {
            let d = &mut self.drones[i];
            d.frozen_position = Some(position);
            d.peripherals.all_off();
        }
        self.report.drone_mut(node).depletion_at = Some(now);
        self.debug("energy", now, format!("drone node {node} depleted"));
    }

    fn radio_draw(&self, node: NodeId, now: f64) -> f64 {
        self.nodes[node as usize]
            .devices
            .iter()
            .map(|dev| {
                let tx_busy = self.tx_busy_until.get(&dev.key).copied().unwrap_or(0.0) > now;
                let rx_busy = self.rx_busy_until.get(&dev.key).copied().unwrap_or(0.0) > now;
                if tx_busy {
                    dev.radio_power.tx_w
                } else if rx_busy {
                    dev.radio_power.rx_w
                } else {
                    dev.radio_power.idle_w
                }
            })
            .sum()
    }

    fn on_acquire(&mut self, engine: &mut Engine<Ev>, i: usize, p: usize) {
        let now = engine.now();
        if self.drones[i].battery.is_depleted() {
            return;
        }
        let interval = match self.drones[i].peripherals.items()[p].kind {
            PeripheralKind::Input {
                acquisition_interval,
                ..
            } => acquisition_interval,
            _ => return,
        };
        let before = self.drones[i].peripherals.storage_occupied_bits();
        self.drones[i].peripherals.acquire_tick(p);
        if self.drones[i].peripherals.storage_occupied_bits() != before {
            self.record_storage(i, now);
        }
        let _ = engine.schedule(
            interval,
            Ev::Acquire {
                drone: i,
                peripheral: p,
            },
        );
    }

    fn record_storage(&mut self, i: usize, now: f64) {
        let occupied = self.drones[i].peripherals.storage_occupied_bits();
        let node = self.drones[i].node;
        self.report
            .drone_mut(node)
            .storage_trace
            .push((now, occupied));
    }

    /// RoI gating and access-point attachment, both sampled on the same
    /// mobility tick.
    fn on_gate_tick(&mut self, engine: &mut Engine<Ev>) {
        let now = engine.now();
        // RoI gating: toggle ON/IDLE at boundary crossings only, so manual
        // overrides survive until the next crossing
        for i in 0..self.drones.len() {
            let (pos, _) = self.drone_state_at(i, now);
            let depleted = self.drones[i].battery.is_depleted();
            for p in 0..self.drones[i].roi_triggers.len() {
                let Some(ids) = self.drones[i].roi_triggers[p].clone() else {
                    continue;
                };
                let inside = self.world.is_in_regions(pos, &ids).unwrap_or(false);
                let d = &mut self.drones[i];
                let last = d.peripherals.items()[p].last_inside;
                if last != Some(inside) {
                    d.peripherals.items_mut()[p].last_inside = Some(inside);
                    if !depleted {
                        let state = if inside {
                            PeripheralState::On
                        } else {
                            PeripheralState::Idle
                        };
                        d.peripherals.set_state(p, state);
                    }
                }
            }
        }
        // attachment: every client radio device serves from the strongest AP
        let mut new_attachments = Vec::new();
        for node_info in &self.nodes {
            for dev in &node_info.devices {
                let Some(stack_idx) = dev.stack else { continue };
                if dev.is_ap {
                    continue;
                }
                let stack = &self.stacks[stack_idx];
                let my_pos = self.position_at(dev.key.node, now);
                let mut best: Option<(f64, DevKey)> = None;
                for other in &self.nodes {
                    for ap in &other.devices {
                        if !ap.is_ap || ap.stack != Some(stack_idx) || ap.key.node == dev.key.node {
                            continue;
                        }
                        let ap_pos = self.position_at(ap.key.node, now);
                        let Ok(loss) = path_loss(
                            &stack.loss,
                            stack.radio.frequency_hz,
                            my_pos,
                            ap_pos,
                            &self.world,
                        ) else {
                            continue;
                        };
                        let rx = rx_power_dbm(&stack.radio, loss);
                        // deterministic tie-break on device identity
                        let better = match best {
                            None => true,
                            Some((best_rx, best_key)) => {
                                rx > best_rx
                                    || (rx == best_rx && ap.key.as_u64() < best_key.as_u64())
                            }
                        };
                        if better {
                            best = Some((rx, ap.key));
                        }
                    }
                }
                if let Some((_, ap_key)) = best {
                    new_attachments.push((dev.key, ap_key));
                }
            }
        }
        for (client, ap) in new_attachments {
            self.attachments.insert(client, ap);
        }
        let _ = engine.schedule(self.params.gate_interval, Ev::GateTick);
    }

    fn on_trajectory_tick(&mut self, engine: &mut Engine<Ev>) {
        let now = engine.now();
        for i in 0..self.drones.len() {
            let (pos, _) = self.drone_state_at(i, now);
            let node = self.drones[i].node;
            self.report.drone_mut(node).trajectory.push((now, pos));
        }
        let _ = engine.schedule(self.params.trajectory_interval, Ev::TrajectoryTick);
    }

    // -- frame movement ------------------------------------------------------

    fn primary_addr(&self, node: NodeId) -> Ipv4Addr {
        self.nodes[node as usize]
            .devices
            .first()
            .map_or(Ipv4Addr::UNSPECIFIED, |d| d.addr)
    }

    fn local_addrs(&self, node: NodeId) -> Vec<Ipv4Addr> {
        self.nodes[node as usize]
            .devices
            .iter()
            .map(|d| d.addr)
            .collect()
    }

    /// First-hop decision for a packet leaving `node`.
    fn send_from_node(
        &mut self,
        engine: &mut Engine<Ev>,
        node: NodeId,
        packet: Packet,
        preferred_dev: Option<u32>,
    ) {
        if self.is_depleted(node) {
            self.stats.record_drop(DropReason::SenderDepleted);
            return;
        }
        let dst = packet.dst.0;

        // local delivery without touching any medium
        if dst != BROADCAST && self.local_addrs(node).contains(&dst) {
            self.deliver_to_apps(engine, node, packet);
            return;
        }

        let wants = |dev: &Device| preferred_dev.is_none_or(|p| dev.key.dev == p);

        // subnet match: direct link to the owner of the destination address
        if dst != BROADCAST {
            let mut direct: Option<(DevKey, DevKey)> = None;
            for dev in self.nodes[node as usize]
                .devices
                .iter()
                .filter(|d| wants(d))
            {
                let Some(stack_idx) = dev.stack else { continue };
                if !self.stacks[stack_idx].contains(dst) {
                    continue;
                }
                if let Some(&target) = self.addr_book.get(&dst) {
                    if dev.is_ap || self.attachments.get(&dev.key) == Some(&target) {
                        direct = Some((dev.key, target));
                    } else if let Some(&ap) = self.attachments.get(&dev.key) {
                        // same subnet but relayed through the serving AP
                        direct = Some((dev.key, ap));
                    }
                    break;
                }
            }
            if let Some((from, to)) = direct {
                self.radio_transmit(engine, from, to, packet);
                return;
            }
            // backbone subnet or any address reachable over the bus
            if self.bus.is_attached(node) {
                if let Some(&target) = self.addr_book.get(&dst) {
                    if self.bus.is_attached(target.node) && self.is_backbone_dev(target) {
                        self.bus_transmit(engine, node, target.node, packet);
                        return;
                    }
                    // radio-network address: forward over the bus to the ZSP
                    // currently serving that device
                    if let Some(&ap) = self.attachments.get(&target).copied().as_ref() {
                        if ap.node == node {
                            // we are the serving AP: radio hop directly
                            self.radio_transmit(engine, ap, target, packet);
                            return;
                        }
                        if self.bus.is_attached(ap.node) {
                            self.bus_transmit(engine, node, ap.node, packet);
                            return;
                        }
                    }
                }
                self.stats.record_drop(DropReason::NoRoute);
                return;
            }
        }

        // foreign destination (or broadcast) from a radio-only node: hand
        // the frame to a serving access point, preferring a bus-connected AP
        let mut candidates: Vec<(u8, DevKey, DevKey)> = Vec::new();
        for dev in self.nodes[node as usize]
            .devices
            .iter()
            .filter(|d| wants(d))
        {
            if dev.stack.is_none() {
                continue;
            }
            if let Some(&ap) = self.attachments.get(&dev.key) {
                let rank = if self.bus.is_attached(ap.node) { 0 } else { 1 };
                candidates.push((rank, dev.key, ap));
            }
        }
        candidates.sort_by_key(|(rank, dev, _)| (*rank, dev.as_u64()));
        if let Some(&(_, dev, ap)) = candidates.first() {
            self.radio_transmit(engine, dev, ap, packet);
        } else {
            self.stats.record_drop(DropReason::NoRoute);
        }
    }

    fn is_backbone_dev(&self, key: DevKey) -> bool {
        self.nodes[key.node as usize].devices[key.dev as usize]
            .stack
            .is_none()
    }

    fn radio_transmit(
        &mut self,
        engine: &mut Engine<Ev>,
        from: DevKey,
        to: DevKey,
        packet: Packet,
    ) {
        let now = engine.now();
        let stack_idx = self.nodes[from.node as usize].devices[from.dev as usize]
            .stack
            .expect("radio device");
        let (frequency, noise, sensitivity) = {
            let r = &self.stacks[stack_idx].radio;
            (r.frequency_hz, r.noise_floor_dbm, r.rx_sensitivity_dbm)
        };
        let tx_pos = self.position_at(from.node, now);
        let rx_pos = self.position_at(to.node, now);
        let loss = match path_loss(
            &self.stacks[stack_idx].loss,
            frequency,
            tx_pos,
            rx_pos,
            &self.world,
        ) {
            Ok(l) => l,
            Err(_) => {
                self.stats.record_drop(DropReason::NoRoute);
                return;
            }
        };
        let rx_dbm = rx_power_dbm(&self.stacks[stack_idx].radio, loss);
        let snr = snr_db(rx_dbm, noise);
        let rate = self.stacks[stack_idx].rate.rate_for(snr);
        self.stats.frames_sent += 1;

        if rate <= 0.0 {
            // nothing modulates; the attempt is still visible at the sender
            self.capture(from, Direction::Tx, now, &packet, None);
            self.stats.record_drop(DropReason::RateZero);
            return;
        }

        let wire = packet.wire_bytes();
        let distance = tx_pos.distance(rx_pos);
        let (tx_start, rx_at) = {
            let link = self.links.link_mut(from.as_u64(), to.as_u64());
            link.transmit(now, wire, rate, distance)
        };
        let tx_end = tx_start + f64::from(wire) * 8.0 / rate;
        let tx_entry = self.tx_busy_until.entry(from).or_insert(0.0);
        *tx_entry = tx_entry.max(tx_end);
        self.capture(from, Direction::Tx, tx_start, &packet, None);

        let delivered = if self.params.probabilistic_loss {
            // SNR margin over sensitivity shapes a per-frame error rate
            let margin = rx_dbm - sensitivity;
            let per = per_from_margin(margin);
            use rand::Rng;
            engine.rng().gen_range(0.0..1.0) >= per
        } else {
            rx_dbm >= sensitivity
        };
        if !delivered {
            let reason = if self.params.probabilistic_loss {
                DropReason::ChannelError
            } else {
                DropReason::SensitivityFloor
            };
            self.stats.record_drop(reason);
            return;
        }
        let entry = self.rx_busy_until.entry(to).or_insert(0.0);
        *entry = entry.max(rx_at);
        let frame = Frame {
            packet,
            from,
            to,
            rx_power_dbm: Some(rx_dbm),
        };
        let _ = engine.schedule(rx_at - now, Ev::Deliver(Box::new(frame)));
    }

    fn bus_transmit(
        &mut self,
        engine: &mut Engine<Ev>,
        from_node: NodeId,
        to_node: NodeId,
        packet: Packet,
    ) {
        let now = engine.now();
        let wire = packet.wire_bytes();
        let Ok((tx_start, rx_at)) = self.bus.transmit(now, from_node, to_node, wire) else {
            self.stats.record_drop(DropReason::NoRoute);
            return;
        };
        self.stats.frames_sent += 1;
        let from = self.backbone_dev(from_node);
        let to = self.backbone_dev(to_node);
        self.capture(from, Direction::Tx, tx_start, &packet, None);
        let frame = Frame {
            packet,
            from,
            to,
            rx_power_dbm: None,
        };
        let _ = engine.schedule(rx_at - now, Ev::Deliver(Box::new(frame)));
    }

    fn backbone_dev(&self, node: NodeId) -> DevKey {
        self.nodes[node as usize]
            .devices
            .iter()
            .find(|d| d.stack.is_none())
            .map(|d| d.key)
            .expect("node is on the backbone")
    }

    fn on_deliver(&mut self, engine: &mut Engine<Ev>, frame: Frame) {
        let now = engine.now();
        // depletion mid-flight kills the frame: nothing is delivered after
        // the sender's depletion time
        if let NodeKind::Drone(i) = self.nodes[frame.from.node as usize].kind {
            if let Some(t) = self.drones[i].battery.depleted_at() {
                if now > t {
                    self.stats.record_drop(DropReason::SenderDepleted);
                    return;
                }
            }
        }
        self.stats.frames_delivered += 1;
        self.capture(
            frame.to,
            Direction::Rx,
            now,
            &frame.packet,
            frame.rx_power_dbm,
        );

        let node = frame.to.node;
        let packet = frame.packet;
        let dst = packet.dst;
        let local = dst.0 == BROADCAST || self.local_addrs(node).contains(&dst.0);

        // NAT relays intercept before local delivery and forwarding
        let nat = self
            .apps
            .iter()
            .position(|a| a.node == node && a.running && matches!(a.kind, AppKind::Nat { .. }));
        if let Some(nat_idx) = nat {
            let (internal_dev, external_dev) = match &self.apps[nat_idx].kind {
                AppKind::Nat {
                    internal_dev,
                    external_dev,
                    ..
                } => (*internal_dev, *external_dev),
                _ => unreachable!(),
            };
            if frame.to.dev == internal_dev && !local {
                // outbound: replace the flow with the relay's own identity
                let external_addr = self.nodes[node as usize].devices[external_dev as usize].addr;
                let mapped = {
                    let AppKind::Nat { table, .. } = &mut self.apps[nat_idx].kind else {
                        unreachable!()
                    };
                    table.outbound(packet.src.0, packet.src.1)
                };
                match mapped {
                    Ok(port) => {
                        let mut rewritten = packet;
                        rewritten.src = (external_addr, port);
                        self.send_from_node(engine, node, rewritten, Some(external_dev));
                    }
                    Err(_) => self.stats.record_drop(DropReason::NoRoute),
                }
                return;
            }
            if frame.to.dev == external_dev && local && dst.0 != BROADCAST {
                let flow = {
                    let AppKind::Nat { table, .. } = &self.apps[nat_idx].kind else {
                        unreachable!()
                    };
                    table.inbound(dst.1)
                };
                if let Some((int_addr, int_port)) = flow {
                    let mut rewritten = packet;
                    rewritten.dst = (int_addr, int_port);
                    self.send_from_node(engine, node, rewritten, Some(internal_dev));
                } else {
                    // unknown external port: the contract is to drop
                    self.stats.nat_inbound_drops += 1;
                }
                return;
            }
        }

        if local {
            self.deliver_to_apps(engine, node, packet);
        } else {
            // plain forwarding (ZSP radio <-> backbone)
            self.send_from_node(engine, node, packet, None);
        }
    }

    fn deliver_to_apps(&mut self, engine: &mut Engine<Ev>, node: NodeId, packet: Packet) {
        let now = engine.now();
        let port = packet.dst.1;
        let Some(app_idx) = self.apps.iter().position(|a| {
            a.node == node
                && a.running
                && match &a.kind {
                    AppKind::TelemetryServer(s) => s.port == port,
                    AppKind::TelemetryClient(c) => c.cfg.port == port,
                    AppKind::EchoServer { port: p } => *p == port,
                    AppKind::GenericClient { transport, .. } => transport.local_port == port,
                    AppKind::Nat { .. } => false,
                }
        }) else {
            return; // nothing listens here; broadcasts die silently
        };

        match &mut self.apps[app_idx].kind {
            AppKind::TelemetryServer(server) => {
                let store = server.store_data;
                let reply = server.on_receive(now, &packet.bytes, packet.src.0, packet.src.1);
                if store {
                    if let NodeKind::Drone(d) = self.nodes[node as usize].kind {
                        if self.drones[d]
                            .peripherals
                            .alloc(packet.bytes.len() as u64 * 8)
                        {
                            self.record_storage(d, now);
                        }
                    }
                }
                if let Some(send) = reply {
                    let bytes = send.payload.to_json().into_bytes();
                    let reply_packet = Packet {
                        src: (packet.dst.0, port),
                        dst: (send.dst, send.dst_port),
                        bytes,
                        kind: PacketKind::Telemetry,
                        created_at: now,
                    };
                    self.send_from_node(engine, node, reply_packet, None);
                }
            }
            AppKind::TelemetryClient(client) => {
                if let Ok(payload) = TelemetryPayload::parse(&packet.bytes) {
                    client.on_receive(&payload, packet.src.0);
                }
            }
            AppKind::EchoServer { .. } => {
                if let PacketKind::Generic { sn, .. } = packet.kind {
                    let ack = Packet {
                        src: (packet.dst.0, port),
                        dst: packet.src,
                        bytes: GenericHeader {
                            sn,
                            created_ns: (now * 1e9).round() as u64,
                        }
                        .encode()
                        .to_vec(),
                        kind: PacketKind::GenericAck { sn },
                        created_at: now,
                    };
                    self.send_from_node(engine, node, ack, None);
                }
            }
            AppKind::GenericClient { transport, .. } => {
                if let PacketKind::GenericAck { sn } = packet.kind {
                    let acked_bits = match &transport.in_flight {
                        Some(m) if m.sn == sn => Some(m.info_bits),
                        _ => None,
                    };
                    if let Some(info_bits) = acked_bits {
                        transport.in_flight = None;
                        transport.zero_rate_since = None;
                        if info_bits > 0 {
                            // acknowledged storage transfer frees memory
                            if let NodeKind::Drone(d) = self.nodes[node as usize].kind {
                                if self.drones[d].peripherals.free(info_bits) {
                                    self.record_storage(d, now);
                                }
                            }
                        }
                        self.transport_pump(engine, app_idx, node);
                        let sends_more = matches!(
                            self.apps[app_idx].kind,
                            AppKind::GenericClient {
                                role: GenericRole::Storage { .. },
                                ..
                            }
                        );
                        if sends_more {
                            self.storage_client_try_send(engine, app_idx, node, now);
                        }
                    }
                }
            }
            AppKind::Nat { .. } => {}
        }
    }

    fn capture(
        &mut self,
        key: DevKey,
        direction: Direction,
        at: f64,
        packet: &Packet,
        rx_power_dbm: Option<f64>,
    ) {
        let frame = ipv4_udp_frame(packet.src, packet.dst, &packet.bytes);
        let record = CapturedPacket {
            at,
            direction,
            wire_bytes: packet.wire_bytes(),
            app_bytes: packet.bytes.len() as u32,
            src: packet.src,
            dst: packet.dst,
            payload_text: packet.payload_text(),
            sn: packet.sn(),
            created_at: packet.created(),
            rx_power_dbm,
            frame,
        };
        let node = key.node;
        match self.nodes[node as usize].kind {
            NodeKind::Drone(_) => {
                let dr = self.report.drone_mut(node);
                if let Some(dev) = dr.devices.get_mut(key.dev as usize) {
                    dev.packets.push(record);
                }
            }
            NodeKind::Zsp(i) => {
                if let Some(dev) = self.report.zsps[i].devices.get_mut(key.dev as usize) {
                    dev.packets.push(record);
                }
            }
            NodeKind::Remote(i) => {
                if let Some(dev) = self.report.remotes[i].devices.get_mut(key.dev as usize) {
                    dev.packets.push(record);
                }
            }
        }
    }
}

/// SNR-margin to packet-error-rate mapping for the optional probabilistic
/// reception mode: 50% at the sensitivity floor, waterfall over a few dB.
fn per_from_margin(margin_db: f64) -> f64 {
    1.0 / (1.0 + (margin_db / 1.5).exp())
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

pub fn build_loss_model(cfg: &LossModelConfig) -> LossModel {
    match cfg {
        LossModelConfig::Friis => LossModel::Friis,
        LossModelConfig::LogDistance {
            exponent,
            reference_loss_db,
        } => LossModel::LogDistance {
            exponent: *exponent,
            ref_loss_db: *reference_loss_db,
        },
        LossModelConfig::OkumuraHata {
            bs_height_m,
            ue_height_m,
        } => LossModel::OkumuraHata {
            bs_height_m: *bs_height_m,
            ue_height_m: *ue_height_m,
        },
        LossModelConfig::HybridBuildings { base, walls } => LossModel::HybridBuildings {
            base: Box::new(build_loss_model(base)),
            walls: *walls,
        },
    }
}

fn build_mechanics(cfg: &MechanicsConfig, path: &str) -> Result<Mechanics, BuildError> {
    Mechanics::new(
        cfg.mass_kg,
        cfg.rotor_disk_area_m2,
        cfg.drag_coefficient,
        cfg.air_density,
    )
    .map_err(|e| BuildError::Invalid {
        path: path.to_string(),
        message: e.to_string(),
    })
}

fn build_battery(cfg: &BatteryConfig) -> EnergySource {
    EnergySource::new(cfg.capacity_j, cfg.sampling_interval)
}

fn build_mission(
    cfg: &MobilityModelConfig,
    duration: f64,
    path: &str,
) -> Result<Mission, BuildError> {
    let (plan, profile, step) = match cfg {
        MobilityModelConfig::ConstantPosition { position } => {
            // a degenerate two-point plan that never moves
            let p: Vec3 = (*position).into();
            let plan = FlightPlan::new(vec![InterestPoint::new(p, 1), InterestPoint::new(p, 1)]);
            (plan, SpeedProfile::Polynomial { coeffs: vec![0.0] }, 0.5)
        }
        MobilityModelConfig::ConstantAcceleration {
            acceleration,
            max_speed,
            flight_plan,
            curve_step,
        } => (
            plan_from_config(flight_plan),
            SpeedProfile::ConstantAcceleration {
                accel: *acceleration,
                max_speed: *max_speed,
            },
            *curve_step,
        ),
        MobilityModelConfig::ParametricSpeed {
            speed_coefficients,
            flight_plan,
            curve_step,
        } => (
            plan_from_config(flight_plan),
            SpeedProfile::Polynomial {
                coeffs: speed_coefficients.clone(),
            },
            *curve_step,
        ),
    };
    Mission::build(&plan, profile, step, duration).map_err(|e| BuildError::Mobility {
        path: path.to_string(),
        source: e,
    })
}

fn plan_from_config(points: &[crate::config::FlightPlanPointConfig]) -> FlightPlan {
    FlightPlan::new(
        points
            .iter()
            .map(|p| InterestPoint {
                position: p.position.into(),
                level: p.interest,
                rest_time: p.rest_time,
            })
            .collect(),
    )
}

fn build_drone(
    node: NodeId,
    cfg: &crate::config::DroneConfig,
    duration: f64,
    path: &str,
) -> Result<DroneState, BuildError> {
    let mechanics = build_mechanics(&cfg.mechanics, &format!("{path}/mechanics"))?;
    let mission = build_mission(&cfg.mobility, duration, &format!("{path}/mobilityModel"))?;
    let battery = build_battery(&cfg.battery);
    let mut peripherals = PeripheralSet::new();
    let mut roi_triggers = Vec::new();
    for p in &cfg.peripherals {
        let (name, power, kind, roi) = match p {
            PeripheralConfig::Generic {
                name,
                power_on_w,
                power_idle_w,
                roi_trigger,
            } => (
                name.clone(),
                PowerProfile {
                    on_w: *power_on_w,
                    idle_w: *power_idle_w,
                },
                PeripheralKind::Generic,
                roi_trigger.clone(),
            ),
            PeripheralConfig::Storage {
                name,
                power_on_w,
                power_idle_w,
                capacity_bits,
                initial_remaining_bits,
                roi_trigger,
            } => (
                name.clone(),
                PowerProfile {
                    on_w: *power_on_w,
                    idle_w: *power_idle_w,
                },
                PeripheralKind::Storage {
                    capacity_bits: *capacity_bits,
                    remaining_bits: *initial_remaining_bits,
                },
                roi_trigger.clone(),
            ),
            PeripheralConfig::Input {
                name,
                power_on_w,
                power_idle_w,
                data_rate_bps,
                acquisition_interval,
                has_storage,
                roi_trigger,
            } => (
                name.clone(),
                PowerProfile {
                    on_w: *power_on_w,
                    idle_w: *power_idle_w,
                },
                PeripheralKind::Input {
                    data_rate_bps: *data_rate_bps,
                    acquisition_interval: *acquisition_interval,
                    has_storage: *has_storage,
                },
                roi_trigger.clone(),
            ),
        };
        let mut peripheral = Peripheral::new(name, power, kind);
        peripheral.roi_trigger = roi.clone();
        peripherals.install(peripheral);
        roi_triggers.push(roi);
    }
    Ok(DroneState {
        node,
        mechanics,
        mission,
        battery,
        peripherals,
        roi_triggers,
        frozen_position: None,
    })
}

fn build_app(node: NodeId, cfg: &ApplicationConfig, app_index: usize) -> AppState {
    let local_port = GENERIC_LOCAL_PORT_BASE.wrapping_add(app_index as u16);
    match cfg {
        ApplicationConfig::TelemetryClient {
            destination,
            port,
            transmission_interval,
            start_time,
            stop_time,
            free_data,
        } => AppState {
            node,
            start_time: *start_time,
            stop_time: *stop_time,
            running: false,
            kind: AppKind::TelemetryClient(TelemetryClient::new(TelemetryClientConfig {
                destination: *destination,
                port: *port,
                transmission_interval: *transmission_interval,
                start_time: *start_time,
                stop_time: stop_time.unwrap_or(f64::INFINITY),
                free_data: *free_data,
            })),
        },
        ApplicationConfig::TelemetryServer {
            port,
            start_time,
            stop_time,
            store_data,
        } => AppState {
            node,
            start_time: *start_time,
            stop_time: *stop_time,
            running: false,
            kind: AppKind::TelemetryServer(TelemetryServer::new(node, *port, *store_data)),
        },
        ApplicationConfig::PeriodicClient {
            address,
            port,
            payload_size,
            frequency,
            start_time,
            stop_time,
            reliable,
        } => AppState {
            node,
            start_time: *start_time,
            stop_time: *stop_time,
            running: false,
            kind: AppKind::GenericClient {
                transport: Transport::new(local_port, (*address, *port)),
                role: GenericRole::Periodic {
                    payload_bytes: *payload_size,
                    interval: 1.0 / frequency.max(1e-9),
                },
                reliable: *reliable,
            },
        },
        ApplicationConfig::StorageClient {
            address,
            port,
            payload_size,
            start_time,
            stop_time,
        } => AppState {
            node,
            start_time: *start_time,
            stop_time: *stop_time,
            running: false,
            kind: AppKind::GenericClient {
                transport: Transport::new(local_port, (*address, *port)),
                role: GenericRole::Storage {
                    payload_bytes: *payload_size,
                },
                reliable: true,
            },
        },
        ApplicationConfig::EchoServer {
            port,
            start_time,
            stop_time,
        } => AppState {
            node,
            start_time: *start_time,
            stop_time: *stop_time,
            running: false,
            kind: AppKind::EchoServer { port: *port },
        },
        ApplicationConfig::Nat {
            internal_net_device,
            external_net_device,
        } => AppState {
            node,
            start_time: 0.0,
            stop_time: None,
            running: false,
            kind: AppKind::Nat {
                internal_dev: *internal_net_device as u32,
                external_dev: *external_net_device as u32,
                table: NatTable::new(),
            },
        },
    }
}

fn device_records(info: &NodeInfo, stacks: &[Stack]) -> Vec<DeviceRecord> {
    info.devices
        .iter()
        .map(|dev| {
            let (layer_name, phy, mac, net) = match dev.stack {
                Some(s) => {
                    let stack = &stacks[s];
                    (
                        stack.name.clone(),
                        format!(
                            "{} f={} Hz tx={} dBm sens={} dBm",
                            stack.phy_kind,
                            stack.radio.frequency_hz,
                            stack.radio.tx_power_dbm,
                            stack.radio.rx_sensitivity_dbm
                        ),
                        stack.mac_kind.clone(),
                        format!("ipv4 {}/{}", stack.subnet, stack.mask),
                    )
                }
                None => (
                    BACKBONE_LAYER_NAME.to_string(),
                    "csma-bus".to_string(),
                    "csma".to_string(),
                    format!("ipv4 {BACKBONE_SUBNET}/{BACKBONE_MASK}"),
                ),
            };
            DeviceRecord {
                summary: DeviceSummary {
                    layer_name,
                    dev_index: dev.key.dev,
                    address: dev.addr,
                    phy_desc: phy,
                    mac_desc: mac,
                    net_desc: net,
                },
                packets: Vec::new(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// One-call execution
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Run(#[from] crate::engine::RunError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct ExecSummary {
    pub stats: RunStats,
    pub sim_stats: SimStats,
    pub warnings: Vec<String>,
    pub files: Vec<std::path::PathBuf>,
}

/// Builds, runs and writes every output file for `cfg` under `results_dir`.
/// Progress lines stream to the progress log file and, unless `quiet`, to
/// standard output.
pub fn execute_to_dir(
    cfg: &ScenarioConfig,
    results_dir: &std::path::Path,
    quiet: bool,
) -> Result<ExecSummary, ExecError> {
    use crate::report::{ProgressLogger, PROGRESS_FILE};
    use std::io::Write as _;

    std::fs::create_dir_all(results_dir)?;
    let (mut sim, mut engine, warnings) = Simulation::build(cfg)?;

    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut sinks: Vec<Box<dyn std::io::Write>> = Vec::new();
    sinks.push(Box::new(std::fs::File::create(
        results_dir.join(PROGRESS_FILE),
    )?));
    if !quiet {
        sinks.push(Box::new(std::io::stdout()));
    }
    let mut progress = ProgressLogger::new(sinks, &started_at);

    let stats = {
        let mut on_interval = |mark: IntervalMark| progress.on_interval(mark);
        sim.run(&mut engine, Some(&mut on_interval))?
    };
    let finished_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    progress.finish(&finished_at, stats.wall_seconds);

    let executed_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut files = sim.report.write_all(results_dir, &executed_at)?;
    files.push(results_dir.join(PROGRESS_FILE));

    if !sim.debug_log.is_empty() {
        if cfg.log_on_file {
            let log_path = results_dir.join("iodsim.log");
            std::fs::write(&log_path, sim.debug_log.join("\n") + "\n")?;
            files.push(log_path);
        } else if !quiet {
            let mut out = std::io::stdout();
            for line in &sim.debug_log {
                let _ = writeln!(out, "{line}");
            }
        }
    }

    Ok(ExecSummary {
        stats,
        sim_stats: sim.stats.clone(),
        warnings,
        files,
    })
}
