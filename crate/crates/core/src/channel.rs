//! Abstract link layer: propagation-loss models, link budget, SNR-driven
//! rate selection, FIFO packet transport and the CSMA-like backbone bus.
//!
//! Reception is a deterministic threshold by default: a frame is dropped iff
//! its received power is below the receiver sensitivity at transmit time. An
//! optional probabilistic mode turns the SNR margin into a packet error rate
//! drawn from the engine's seeded source.

use crate::vec3::Vec3;
use crate::world::{WallMaterial, World};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("zero distance between endpoints")]
    ZeroDistance,
    #[error("okumura-hata is only valid between 150 and 1500 MHz (got {0} Hz)")]
    FrequencyOutOfRange(f64),
    #[error("rate table must not be empty")]
    EmptyTable,
    #[error("node {0} is not attached to the backbone bus")]
    NotOnBus(u32),
}

/// Radio front-end parameters of one protocol stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub frequency_hz: f64,
    pub noise_floor_dbm: f64,
    pub rx_sensitivity_dbm: f64,
}

/// Per-crossing wall attenuation in dB, by material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallLossTable {
    pub wood_db: f64,
    pub concrete_with_windows_db: f64,
    pub concrete_without_windows_db: f64,
    pub stone_blocks_db: f64,
}

impl Default for WallLossTable {
    fn default() -> Self {
        Self {
            wood_db: 5.0,
            concrete_with_windows_db: 12.0,
            concrete_without_windows_db: 15.0,
            stone_blocks_db: 20.0,
        }
    }
}

impl WallLossTable {
    pub fn loss_for(&self, material: WallMaterial) -> f64 {
        match material {
            WallMaterial::Wood => self.wood_db,
            WallMaterial::ConcreteWithWindows => self.concrete_with_windows_db,
            WallMaterial::ConcreteWithoutWindows => self.concrete_without_windows_db,
            WallMaterial::StoneBlocks => self.stone_blocks_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossModel {
    Friis,
    LogDistance {
        exponent: f64,
        /// Reference loss at 1 m, dB.
        ref_loss_db: f64,
    },
    /// Urban small/medium-city Okumura-Hata.
    OkumuraHata {
        bs_height_m: f64,
        ue_height_m: f64,
    },
    /// Base model plus per-material wall attenuation for every building
    /// boundary the direct path crosses.
    HybridBuildings {
        base: Box<LossModel>,
        walls: WallLossTable,
    },
}

/// Path loss in dB between `tx` and `rx` for a carrier at `frequency_hz`.
pub fn path_loss(
    model: &LossModel,
    frequency_hz: f64,
    tx: Vec3,
    rx: Vec3,
    world: &World,
) -> Result<f64, ChannelError> {
    let d = tx.distance(rx);
    if d == 0.0 {
        return Err(ChannelError::ZeroDistance);
    }
    match model {
        LossModel::Friis => {
            let lambda = SPEED_OF_LIGHT / frequency_hz;
            Ok(20.0 * (4.0 * std::f64::consts::PI * d / lambda).log10())
        }
        LossModel::LogDistance {
            exponent,
            ref_loss_db,
        } => Ok(ref_loss_db + 10.0 * exponent * d.log10()),
        LossModel::OkumuraHata {
            bs_height_m,
            ue_height_m,
        } => {
            let f_mhz = frequency_hz / 1e6;
            if !(150.0..=1500.0).contains(&f_mhz) {
                return Err(ChannelError::FrequencyOutOfRange(frequency_hz));
            }
            let d_km = d / 1000.0;
            let a_hm = (1.1 * f_mhz.log10() - 0.7) * ue_height_m - (1.56 * f_mhz.log10() - 0.8);
            Ok(
                69.55 + 26.16 * f_mhz.log10() - 13.82 * bs_height_m.log10() - a_hm
                    + (44.9 - 6.55 * bs_height_m.log10()) * d_km.log10(),
            )
        }
        LossModel::HybridBuildings { base, walls } => {
            let mut loss = path_loss(base, frequency_hz, tx, rx, world)?;
            for crossing in world.wall_crossings(tx, rx) {
                loss += f64::from(crossing.crossings) * walls.loss_for(crossing.material);
            }
            Ok(loss)
        }
    }
}

/// Link budget: rx = tx + gains - loss.
pub fn rx_power_dbm(params: &RadioParams, loss_db: f64) -> f64 {
    params.tx_power_dbm + params.tx_gain_dbi + params.rx_gain_dbi - loss_db
}

pub fn snr_db(rx_dbm: f64, noise_floor_dbm: f64) -> f64 {
    rx_dbm - noise_floor_dbm
}

/// Sorted `(min SNR dB, rate bps)` rows, lowest threshold first.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    rows: Vec<(f64, f64)>,
}

impl RateTable {
    pub fn new(mut rows: Vec<(f64, f64)>) -> Result<Self, ChannelError> {
        if rows.is_empty() {
            return Err(ChannelError::EmptyTable);
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { rows })
    }

    /// Wi-Fi-like default spanning 6-60 dB onto 6-150 Mbps.
    pub fn wifi_default() -> Self {
        Self::new(vec![
            (6.0, 6_000_000.0),
            (9.0, 12_000_000.0),
            (14.0, 24_000_000.0),
            (20.0, 36_000_000.0),
            (26.0, 54_000_000.0),
            (34.0, 78_000_000.0),
            (44.0, 108_000_000.0),
            (60.0, 150_000_000.0),
        ])
        .expect("non-empty")
    }

    /// Highest rate whose threshold is satisfied (closed lower bound);
    /// 0 bps below the lowest threshold, meaning the link is down.
    pub fn select_rate(&self, snr_db: f64) -> f64 {
        self.rows
            .iter()
            .rev()
            .find(|(min_snr, _)| snr_db >= *min_snr)
            .map_or(0.0, |&(_, rate)| rate)
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RatePolicy {
    Fixed(f64),
    SnrTable(RateTable),
}

impl RatePolicy {
    pub fn rate_for(&self, snr: f64) -> f64 {
        match self {
            RatePolicy::Fixed(bps) => *bps,
            RatePolicy::SnrTable(table) => table.select_rate(snr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// Received power below the receiver sensitivity.
    SensitivityFloor,
    /// SNR below every rate-table threshold.
    RateZero,
    /// Sender ran out of energy.
    SenderDepleted,
    /// Probabilistic reception mode decided against this frame.
    ChannelError,
    /// No route to the destination address.
    NoRoute,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::SensitivityFloor => "sensitivityFloor",
            DropReason::RateZero => "rateZero",
            DropReason::SenderDepleted => "senderDepleted",
            DropReason::ChannelError => "channelError",
            DropReason::NoRoute => "noRoute",
        }
    }
}

/// A point-to-point radio channel; frames queue FIFO behind each other.
#[derive(Debug, Clone, Copy, Default)]
pub struct Link {
    busy_until: f64,
}

impl Link {
    /// Serializes `wire_bytes` at `rate_bps` behind any in-flight frames and
    /// adds line-of-sight propagation delay over `distance_m`. Returns
    /// `(tx_start, rx_at)`.
    pub fn transmit(
        &mut self,
        now: f64,
        wire_bytes: u32,
        rate_bps: f64,
        distance_m: f64,
    ) -> (f64, f64) {
        let tx_start = now.max(self.busy_until);
        let serialization = f64::from(wire_bytes) * 8.0 / rate_bps;
        let propagation = distance_m / SPEED_OF_LIGHT;
        self.busy_until = tx_start + serialization;
        (tx_start, tx_start + serialization + propagation)
    }
}

/// Keyed store of radio links. The key is the unordered pair of global
/// device identifiers, so both directions share one FIFO queue.
#[derive(Debug, Default)]
pub struct LinkTable {
    links: HashMap<(u64, u64), Link>,
}

impl LinkTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn link_mut(&mut self, a: u64, b: u64) -> &mut Link {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.links.entry(key).or_default()
    }
}

/// Shared fixed-rate, fixed-delay bus interconnecting ZSPs and remotes.
/// All senders serialize FIFO through the single medium.
#[derive(Debug)]
pub struct BackboneBus {
    pub rate_bps: f64,
    pub delay_s: f64,
    busy_until: f64,
    members: HashSet<u32>,
}

impl BackboneBus {
    pub fn new(rate_bps: f64, delay_s: f64) -> Self {
        Self {
            rate_bps,
            delay_s,
            busy_until: 0.0,
            members: HashSet::new(),
        }
    }

    pub fn attach(&mut self, node: u32) {
        self.members.insert(node);
    }

    pub fn is_attached(&self, node: u32) -> bool {
        self.members.contains(&node)
    }

    /// Delivery time of `wire_bytes` from `from` to `to` over the bus.
    /// Returns `(tx_start, rx_at)`.
    pub fn transmit(
        &mut self,
        now: f64,
        from: u32,
        to: u32,
        wire_bytes: u32,
    ) -> Result<(f64, f64), ChannelError> {
        if !self.members.contains(&from) {
            return Err(ChannelError::NotOnBus(from));
        }
        if !self.members.contains(&to) {
            return Err(ChannelError::NotOnBus(to));
        }
        let tx_start = now.max(self.busy_until);
        let serialization = f64::from(wire_bytes) * 8.0 / self.rate_bps;
        self.busy_until = tx_start + serialization;
        Ok((tx_start, tx_start + serialization + self.delay_s))
    }
}
