//! Application suite: telemetry client/server over unreliable datagrams,
//! generic periodic/echo/storage traffic over a reliable byte contract, and
//! the NAT-style relay.
//!
//! The state machines here are transport-agnostic: handlers return what
//! should be sent and the scenario layer moves the bytes. That keeps the
//! telemetry FSM and the NAT table checkable in isolation.

use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::net::Ipv4Addr;
use thiserror::Error;

pub const BROADCAST: Ipv4Addr = Ipv4Addr::new(255, 255, 255, 255);
/// First NAT external port; allocation proceeds sequentially through the
/// ephemeral range.
pub const NAT_PORT_BASE: u16 = 49152;
/// Bytes of sequence number + creation timestamp in front of generic
/// traffic payloads.
pub const GENERIC_HEADER_BYTES: u32 = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AppError {
    #[error("malformed telemetry payload")]
    MalformedPayload,
    #[error("external port pool exhausted")]
    PortExhaustion,
}

// ---------------------------------------------------------------------------
// Telemetry (unreliable datagrams, JSON/ASCII payload)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TelemetryState {
    New,
    HelloSent,
    Connected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TelemetryCmd {
    Hello,
    HelloAck,
    Update,
    UpdateAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gps {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

/// The UDP payload of the telemetry applications: JSON object with the
/// global node `id`, a per-client sequence number, the packet type, the
/// virtual-world coordinates and the velocity vector in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPayload {
    pub id: u32,
    pub sn: u32,
    pub cmd: TelemetryCmd,
    pub gps: Gps,
    pub vel: [i32; 3],
}

impl TelemetryPayload {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("telemetry payload serializes")
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, AppError> {
        serde_json::from_slice(bytes).map_err(|_| AppError::MalformedPayload)
    }
}

#[derive(Debug, Clone)]
pub struct TelemetryClientConfig {
    /// None means broadcast until the server answers (rendezvous process).
    pub destination: Option<Ipv4Addr>,
    pub port: u16,
    pub transmission_interval: f64,
    pub start_time: f64,
    pub stop_time: f64,
    /// Free the transmitted payload size from the storage peripheral.
    pub free_data: bool,
}

/// Kinematic snapshot the client embeds into HELLO/UPDATE packets.
#[derive(Debug, Clone, Copy)]
pub struct TelemetrySnapshot {
    pub node_id: u32,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// What a telemetry client wants transmitted after a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySend {
    pub dst: Ipv4Addr,
    pub dst_port: u16,
    pub payload: TelemetryPayload,
}

#[derive(Debug)]
pub struct TelemetryClient {
    pub cfg: TelemetryClientConfig,
    state: TelemetryState,
    next_sn: u32,
    /// Server address learned from the HELLO_ACK source (rendezvous).
    learned_server: Option<Ipv4Addr>,
}

impl TelemetryClient {
    pub fn new(cfg: TelemetryClientConfig) -> Self {
        Self {
            cfg,
            state: TelemetryState::New,
            next_sn: 0,
            learned_server: None,
        }
    }

    pub fn state(&self) -> TelemetryState {
        self.state
    }

    fn payload(&mut self, cmd: TelemetryCmd, snap: &TelemetrySnapshot) -> TelemetryPayload {
        let sn = self.next_sn;
        self.next_sn += 1;
        TelemetryPayload {
            id: snap.node_id,
            sn,
            cmd,
            gps: Gps {
                lat: snap.position.x,
                lon: snap.position.y,
                alt: snap.position.z,
            },
            vel: [
                snap.velocity.x.round() as i32,
                snap.velocity.y.round() as i32,
                snap.velocity.z.round() as i32,
            ],
        }
    }

    /// Periodic tick: in NEW sends the first HELLO; in HELLO_SENT retries the
    /// HELLO; in CONNECTED emits a telemetry UPDATE.
    pub fn on_tick(&mut self, snap: &TelemetrySnapshot) -> Option<TelemetrySend> {
        let dst = self
            .learned_server
            .or(self.cfg.destination)
            .unwrap_or(BROADCAST);
        match self.state {
            TelemetryState::New => {
                let payload = self.payload(TelemetryCmd::Hello, snap);
                self.state = TelemetryState::HelloSent;
                Some(TelemetrySend {
                    dst,
                    dst_port: self.cfg.port,
                    payload,
                })
            }
            TelemetryState::HelloSent => {
                // lost packets simply elicit a retry on the next tick
                let payload = self.payload(TelemetryCmd::Hello, snap);
                Some(TelemetrySend {
                    dst,
                    dst_port: self.cfg.port,
                    payload,
                })
            }
            TelemetryState::Connected => {
                let payload = self.payload(TelemetryCmd::Update, snap);
                Some(TelemetrySend {
                    dst,
                    dst_port: self.cfg.port,
                    payload,
                })
            }
        }
    }

    /// Acknowledgement arrived; HELLO_ACK completes the rendezvous.
    pub fn on_receive(&mut self, payload: &TelemetryPayload, from: Ipv4Addr) {
        // UPDATE_ACK confirms reception but drives no transition
        if self.state == TelemetryState::HelloSent && payload.cmd == TelemetryCmd::HelloAck {
            self.state = TelemetryState::Connected;
            self.learned_server = Some(from);
        }
    }
}

/// One reception logged by a server application, the raw material for
/// latency and loss KPIs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxRecord {
    pub at: f64,
    pub from: Ipv4Addr,
    pub from_port: u16,
    pub sn: u32,
    pub created_at: Option<f64>,
    pub app_bytes: u32,
}

#[derive(Debug)]
pub struct TelemetryServer {
    pub port: u16,
    pub store_data: bool,
    pub node_id: u32,
    pub rx_log: Vec<RxRecord>,
    pub malformed: u64,
}

impl TelemetryServer {
    pub fn new(node_id: u32, port: u16, store_data: bool) -> Self {
        Self {
            port,
            store_data,
            node_id,
            rx_log: Vec::new(),
            malformed: 0,
        }
    }

    /// Handles raw datagram bytes; HELLO and UPDATE are acknowledged, garbage
    /// is counted and ignored.
    pub fn on_receive(
        &mut self,
        now: f64,
        bytes: &[u8],
        from: Ipv4Addr,
        from_port: u16,
    ) -> Option<TelemetrySend> {
        let payload = match TelemetryPayload::parse(bytes) {
            Ok(p) => p,
            Err(_) => {
                self.malformed += 1;
                return None;
            }
        };
        self.rx_log.push(RxRecord {
            at: now,
            from,
            from_port,
            sn: payload.sn,
            created_at: None,
            app_bytes: bytes.len() as u32,
        });
        let ack_cmd = match payload.cmd {
            TelemetryCmd::Hello => TelemetryCmd::HelloAck,
            TelemetryCmd::Update => TelemetryCmd::UpdateAck,
            _ => return None,
        };
        // the ack references the request's sequence number
        let ack = TelemetryPayload {
            id: self.node_id,
            sn: payload.sn,
            cmd: ack_cmd,
            gps: Gps {
                lat: 0.0,
                lon: 0.0,
                alt: 0.0,
            },
            vel: [0, 0, 0],
        };
        Some(TelemetrySend {
            dst: from,
            dst_port: from_port,
            payload: ack,
        })
    }
}

// ---------------------------------------------------------------------------
// Generic traffic (12-byte header, reliable or fire-and-forget)
// ---------------------------------------------------------------------------

/// Header carried by every generic-traffic message: information-level
/// sequence number plus the creation timestamp in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenericHeader {
    pub sn: u32,
    pub created_ns: u64,
}

impl GenericHeader {
    pub fn encode(&self) -> [u8; 12] {
        let mut out = [0u8; 12];
        out[..4].copy_from_slice(&self.sn.to_be_bytes());
        out[4..].copy_from_slice(&self.created_ns.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 12 {
            return None;
        }
        Some(Self {
            sn: u32::from_be_bytes(bytes[..4].try_into().ok()?),
            created_ns: u64::from_be_bytes(bytes[4..12].try_into().ok()?),
        })
    }

    pub fn created_seconds(&self) -> f64 {
        self.created_ns as f64 / 1e9
    }
}

/// Payload body: a recurring 16-bit counter incremented over time, spanning
/// packet boundaries.
pub fn fill_pattern(counter: &mut u16, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    while out.len() + 2 <= len {
        out.extend_from_slice(&counter.to_be_bytes());
        *counter = counter.wrapping_add(1);
    }
    if out.len() < len {
        out.push((*counter >> 8) as u8);
        *counter = counter.wrapping_add(1);
    }
    out
}

// ---------------------------------------------------------------------------
// NAT relay
// ---------------------------------------------------------------------------

/// Port-based NAT table for UDP flows: an external port is coupled with the
/// internal source address and port. Injective both ways; mappings are
/// stable for the whole run.
#[derive(Debug, Default)]
pub struct NatTable {
    by_external: HashMap<u16, (Ipv4Addr, u16)>,
    by_internal: HashMap<(Ipv4Addr, u16), u16>,
    next_offset: u32,
    pool_size: u32,
}

impl NatTable {
    pub fn new() -> Self {
        Self::with_pool_size(u32::from(u16::MAX - NAT_PORT_BASE) + 1)
    }

    pub fn with_pool_size(pool_size: u32) -> Self {
        Self {
            by_external: HashMap::new(),
            by_internal: HashMap::new(),
            next_offset: 0,
            pool_size,
        }
    }

    pub fn len(&self) -> usize {
        self.by_external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_external.is_empty()
    }

    /// Maps an internal flow to its external port, allocating sequentially
    /// from the base of the ephemeral range on first sight.
    pub fn outbound(&mut self, src: Ipv4Addr, src_port: u16) -> Result<u16, AppError> {
        if let Some(&port) = self.by_internal.get(&(src, src_port)) {
            return Ok(port);
        }
        if self.next_offset >= self.pool_size {
            return Err(AppError::PortExhaustion);
        }
        let external = NAT_PORT_BASE.wrapping_add(self.next_offset as u16);
        self.next_offset += 1;
        self.by_internal.insert((src, src_port), external);
        self.by_external.insert(external, (src, src_port));
        Ok(external)
    }

    /// Reverse lookup for frames arriving from the external network; unknown
    /// ports are the caller's cue to drop.
    pub fn inbound(&self, external_port: u16) -> Option<(Ipv4Addr, u16)> {
        self.by_external.get(&external_port).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap() -> TelemetrySnapshot {
        TelemetrySnapshot {
            node_id: 3,
            position: Vec3::new(1.5, -2.0, 30.0),
            velocity: Vec3::new(4.6, 0.0, -1.2),
        }
    }

    fn client() -> TelemetryClient {
        TelemetryClient::new(TelemetryClientConfig {
            destination: None,
            port: 80,
            transmission_interval: 1.0,
            start_time: 0.0,
            stop_time: 50.0,
            free_data: false,
        })
    }

    #[test]
    fn fsm_walks_new_hello_connected() {
        let mut c = client();
        assert_eq!(c.state(), TelemetryState::New);
        let first = c.on_tick(&snap()).unwrap();
        assert_eq!(first.payload.cmd, TelemetryCmd::Hello);
        assert_eq!(first.payload.sn, 0);
        assert_eq!(first.dst, BROADCAST);
        assert_eq!(c.state(), TelemetryState::HelloSent);
        // lost ack: retry HELLO, sn keeps increasing
        let retry = c.on_tick(&snap()).unwrap();
        assert_eq!(retry.payload.cmd, TelemetryCmd::Hello);
        assert_eq!(retry.payload.sn, 1);
        // ack arrives, client connects and learns the server address
        let ack = TelemetryPayload {
            id: 9,
            sn: 1,
            cmd: TelemetryCmd::HelloAck,
            gps: Gps {
                lat: 0.0,
                lon: 0.0,
                alt: 0.0,
            },
            vel: [0, 0, 0],
        };
        c.on_receive(&ack, Ipv4Addr::new(10, 0, 0, 4));
        assert_eq!(c.state(), TelemetryState::Connected);
        let update = c.on_tick(&snap()).unwrap();
        assert_eq!(update.payload.cmd, TelemetryCmd::Update);
        assert_eq!(update.dst, Ipv4Addr::new(10, 0, 0, 4));
        // telemetry carries the virtual-world coordinates directly
        assert_eq!(update.payload.gps.lat, 1.5);
        assert_eq!(update.payload.gps.alt, 30.0);
        assert_eq!(update.payload.vel, [5, 0, -1]);
    }

    #[test]
    fn hello_ack_in_new_state_is_ignored() {
        let mut c = client();
        let ack = TelemetryPayload {
            id: 9,
            sn: 0,
            cmd: TelemetryCmd::HelloAck,
            gps: Gps {
                lat: 0.0,
                lon: 0.0,
                alt: 0.0,
            },
            vel: [0, 0, 0],
        };
        c.on_receive(&ack, Ipv4Addr::new(10, 0, 0, 4));
        assert_eq!(c.state(), TelemetryState::New);
    }

    #[test]
    fn payload_roundtrips_and_matches_field_layout() {
        let p = TelemetryPayload {
            id: 42,
            sn: 7,
            cmd: TelemetryCmd::Update,
            gps: Gps {
                lat: 60.0,
                lon: 45.0,
                alt: 20.5,
            },
            vel: [5, -3, 0],
        };
        let json = p.to_json();
        assert!(json.is_ascii());
        // field set and order exactly as documented
        assert_eq!(
            json,
            r#"{"id":42,"sn":7,"cmd":"UPDATE","gps":{"lat":60.0,"lon":45.0,"alt":20.5},"vel":[5,-3,0]}"#
        );
        assert_eq!(TelemetryPayload::parse(json.as_bytes()).unwrap(), p);
    }

    #[test]
    fn server_acks_and_logs() {
        let mut server = TelemetryServer::new(9, 80, false);
        let hello = TelemetryPayload {
            id: 3,
            sn: 0,
            cmd: TelemetryCmd::Hello,
            gps: Gps {
                lat: 0.0,
                lon: 0.0,
                alt: 0.0,
            },
            vel: [0, 0, 0],
        };
        let from = Ipv4Addr::new(10, 0, 0, 1);
        let ack = server
            .on_receive(1.0, hello.to_json().as_bytes(), from, 5000)
            .unwrap();
        assert_eq!(ack.payload.cmd, TelemetryCmd::HelloAck);
        assert_eq!(ack.dst, from);
        assert_eq!(ack.dst_port, 5000);
        let update = TelemetryPayload {
            sn: 7,
            cmd: TelemetryCmd::Update,
            ..hello
        };
        let ack = server
            .on_receive(2.0, update.to_json().as_bytes(), from, 5000)
            .unwrap();
        assert_eq!(ack.payload.cmd, TelemetryCmd::UpdateAck);
        assert_eq!(ack.payload.sn, 7);
        // garbage: no ack, malformed counter moves
        assert!(server.on_receive(3.0, b"{nonsense", from, 5000).is_none());
        assert_eq!(server.malformed, 1);
        assert_eq!(server.rx_log.len(), 2);
    }

    #[test]
    fn generic_header_roundtrip() {
        let h = GenericHeader {
            sn: 1234,
            created_ns: 1_500_000_000,
        };
        let enc = h.encode();
        assert_eq!(enc.len(), 12);
        assert_eq!(GenericHeader::decode(&enc).unwrap(), h);
        assert_eq!(h.created_seconds(), 1.5);
        assert!(GenericHeader::decode(&enc[..11]).is_none());
    }

    #[test]
    fn fill_pattern_increments_across_calls() {
        let mut counter = 0u16;
        let a = fill_pattern(&mut counter, 6);
        assert_eq!(a, vec![0, 0, 0, 1, 0, 2]);
        let b = fill_pattern(&mut counter, 4);
        assert_eq!(b, vec![0, 3, 0, 4]);
    }

    #[test]
    fn nat_sequential_allocation_and_reuse() {
        let mut nat = NatTable::new();
        let a = Ipv4Addr::new(10, 1, 0, 5);
        let p1 = nat.outbound(a, 3000).unwrap();
        assert_eq!(p1, 49152);
        let p2 = nat.outbound(Ipv4Addr::new(10, 1, 0, 6), 3000).unwrap();
        assert_eq!(p2, 49153);
        // same flow maps to the same port
        assert_eq!(nat.outbound(a, 3000).unwrap(), 49152);
        assert_eq!(nat.len(), 2);
        // inbound inverts outbound
        assert_eq!(nat.inbound(49152), Some((a, 3000)));
        assert_eq!(nat.inbound(60000), None);
    }

    #[test]
    fn nat_pool_exhaustion_by_pigeonhole() {
        let mut nat = NatTable::with_pool_size(16384);
        for i in 0..16384u32 {
            let addr = Ipv4Addr::from(0x0a010000u32 + i);
            nat.outbound(addr, 1000).unwrap();
        }
        let overflow = nat.outbound(Ipv4Addr::new(10, 2, 0, 1), 1000);
        assert_eq!(overflow.unwrap_err(), AppError::PortExhaustion);
    }
}
