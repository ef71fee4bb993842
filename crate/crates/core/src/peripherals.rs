//! On-board peripherals: the ON/OFF/IDLE power FSM, the storage device with
//! alloc/free accounting, and input devices that acquire data at a fixed
//! rate, optionally gated by regions of interest.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeripheralState {
    On,
    Off,
    Idle,
}

/// Power draw per FSM state. OFF always draws nothing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerProfile {
    pub on_w: f64,
    pub idle_w: f64,
}

impl PowerProfile {
    pub fn draw(&self, state: PeripheralState) -> f64 {
        match state {
            PeripheralState::On => self.on_w,
            PeripheralState::Idle => self.idle_w,
            PeripheralState::Off => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeripheralKind {
    Generic,
    Storage {
        capacity_bits: u64,
        remaining_bits: u64,
    },
    Input {
        data_rate_bps: f64,
        acquisition_interval: f64,
        has_storage: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Peripheral {
    pub name: String,
    pub power: PowerProfile,
    pub state: PeripheralState,
    /// Regions that must all contain the drone for the peripheral to be ON;
    /// when set, the FSM toggles ON/IDLE at boundary crossings.
    pub roi_trigger: Option<Vec<usize>>,
    pub kind: PeripheralKind,
    /// Set by the RoI gate; None before the first evaluation.
    pub last_inside: Option<bool>,
    /// Acquisitions dropped because the storage had no room.
    pub storage_full_drops: u64,
    /// Total bits this input peripheral acquired.
    pub bits_acquired: u64,
}

impl Peripheral {
    pub fn new(name: String, power: PowerProfile, kind: PeripheralKind) -> Self {
        Self {
            name,
            power,
            state: PeripheralState::On,
            roi_trigger: None,
            kind,
            last_inside: None,
            storage_full_drops: 0,
            bits_acquired: 0,
        }
    }

    pub fn set_state(&mut self, new: PeripheralState) -> PeripheralState {
        std::mem::replace(&mut self.state, new)
    }

    pub fn power_draw(&self) -> f64 {
        self.power.draw(self.state)
    }
}

/// All peripherals of one drone. At most one storage peripheral is installed;
/// input peripherals offload into it.
#[derive(Debug, Default)]
pub struct PeripheralSet {
    items: Vec<Peripheral>,
    storage_idx: Option<usize>,
}

impl PeripheralSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn install(&mut self, peripheral: Peripheral) -> usize {
        if matches!(peripheral.kind, PeripheralKind::Storage { .. }) && self.storage_idx.is_none() {
            self.storage_idx = Some(self.items.len());
        }
        self.items.push(peripheral);
        self.items.len() - 1
    }

    pub fn items(&self) -> &[Peripheral] {
        &self.items
    }

    pub fn items_mut(&mut self) -> &mut [Peripheral] {
        &mut self.items
    }

    pub fn get(&self, idx: usize) -> Option<&Peripheral> {
        self.items.get(idx)
    }

    pub fn has_storage(&self) -> bool {
        self.storage_idx.is_some()
    }

    /// Cumulative instantaneous power of all peripherals, per current state.
    pub fn total_power(&self) -> f64 {
        self.items.iter().map(Peripheral::power_draw).sum()
    }

    pub fn set_state(&mut self, idx: usize, new: PeripheralState) -> Option<PeripheralState> {
        self.items.get_mut(idx).map(|p| p.set_state(new))
    }

    /// Forces every peripheral OFF (energy depletion).
    pub fn all_off(&mut self) {
        for p in &mut self.items {
            p.state = PeripheralState::Off;
        }
    }

    pub fn storage_capacity_bits(&self) -> u64 {
        match self.storage_idx.map(|i| &self.items[i].kind) {
            Some(PeripheralKind::Storage { capacity_bits, .. }) => *capacity_bits,
            _ => 0,
        }
    }

    pub fn storage_remaining_bits(&self) -> u64 {
        match self.storage_idx.map(|i| &self.items[i].kind) {
            Some(PeripheralKind::Storage { remaining_bits, .. }) => *remaining_bits,
            _ => 0,
        }
    }

    /// Bits currently held in storage.
    pub fn storage_occupied_bits(&self) -> u64 {
        self.storage_capacity_bits() - self.storage_remaining_bits()
    }

    /// Requests `amount` bits of storage. All-or-nothing: false when less
    /// than `amount` is free, leaving the state unchanged.
    pub fn alloc(&mut self, amount: u64) -> bool {
        let Some(idx) = self.storage_idx else {
            return false;
        };
        if let PeripheralKind::Storage { remaining_bits, .. } = &mut self.items[idx].kind {
            if amount > *remaining_bits {
                return false;
            }
            *remaining_bits -= amount;
            true
        } else {
            false
        }
    }

    /// Releases `amount` bits. False when freeing more than is in use.
    pub fn free(&mut self, amount: u64) -> bool {
        let Some(idx) = self.storage_idx else {
            return false;
        };
        if let PeripheralKind::Storage {
            capacity_bits,
            remaining_bits,
        } = &mut self.items[idx].kind
        {
            if amount > *capacity_bits - *remaining_bits {
                return false;
            }
            *remaining_bits += amount;
            true
        } else {
            false
        }
    }

    /// One acquisition tick of the input peripheral at `idx`. Returns the
    /// bits acquired (0 unless the peripheral is ON). When the acquisition
    /// does not fit in storage the whole sample is dropped and the
    /// storage-full counter increments.
    pub fn acquire_tick(&mut self, idx: usize) -> u64 {
        let (bits, offload) = match &self.items[idx] {
            Peripheral {
                state: PeripheralState::On,
                kind:
                    PeripheralKind::Input {
                        data_rate_bps,
                        acquisition_interval,
                        has_storage,
                    },
                ..
            } => (
                (data_rate_bps * acquisition_interval).round().max(0.0) as u64,
                *has_storage,
            ),
            _ => return 0,
        };
        if offload && self.has_storage() && !self.alloc(bits) {
            self.items[idx].storage_full_drops += 1;
            return 0;
        }
        self.items[idx].bits_acquired += bits;
        bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn storage(capacity: u64) -> Peripheral {
        Peripheral::new(
            "disk".into(),
            PowerProfile::default(),
            PeripheralKind::Storage {
                capacity_bits: capacity,
                remaining_bits: capacity,
            },
        )
    }

    fn camera(rate: f64, interval: f64) -> Peripheral {
        Peripheral::new(
            "camera".into(),
            PowerProfile {
                on_w: 5.0,
                idle_w: 1.0,
            },
            PeripheralKind::Input {
                data_rate_bps: rate,
                acquisition_interval: interval,
                has_storage: true,
            },
        )
    }

    #[test]
    fn set_state_returns_previous() {
        let mut p = camera(1.0, 1.0);
        assert_eq!(p.set_state(PeripheralState::Off), PeripheralState::On);
        assert_eq!(p.set_state(PeripheralState::On), PeripheralState::Off);
        assert_eq!(p.set_state(PeripheralState::On), PeripheralState::On); // no-op
        assert_eq!(p.power_draw(), 5.0);
        p.set_state(PeripheralState::Idle);
        assert_eq!(p.power_draw(), 1.0);
        p.set_state(PeripheralState::Off);
        assert_eq!(p.power_draw(), 0.0);
    }

    #[test]
    fn alloc_free_contract() {
        let mut set = PeripheralSet::new();
        set.install(storage(100));
        assert!(set.alloc(100));
        assert_eq!(set.storage_remaining_bits(), 0);
        assert!(!set.alloc(1)); // nothing left
        assert_eq!(set.storage_remaining_bits(), 0);
        assert!(set.free(10)); // full disk frees fine
        assert!(set.alloc(10));
        // empty disk: nothing to free
        assert!(set.free(100));
        assert!(!set.free(1));
        // alloc then free restores the initial state
        assert!(set.alloc(30));
        assert!(set.free(30));
        assert_eq!(set.storage_remaining_bits(), 100);
    }

    #[test]
    fn interleaved_alloc_free_matches_counter_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let capacity = 10_000u64;
        let mut set = PeripheralSet::new();
        set.install(storage(capacity));
        let mut oracle_remaining = capacity;
        for _ in 0..5000 {
            let amount = rng.gen_range(0..400u64);
            if rng.gen_bool(0.5) {
                let expect = amount <= oracle_remaining;
                assert_eq!(set.alloc(amount), expect);
                if expect {
                    oracle_remaining -= amount;
                }
            } else {
                let expect = amount <= capacity - oracle_remaining;
                assert_eq!(set.free(amount), expect);
                if expect {
                    oracle_remaining += amount;
                }
            }
            assert_eq!(set.storage_remaining_bits(), oracle_remaining);
        }
    }

    #[test]
    fn acquisition_fills_storage() {
        let mut set = PeripheralSet::new();
        set.install(storage(10_000_000));
        let cam = set.install(camera(2_000_000.0, 1.0));
        let got = set.acquire_tick(cam);
        assert_eq!(got, 2_000_000);
        assert_eq!(set.storage_occupied_bits(), 2_000_000);
        // IDLE acquires nothing
        set.set_state(cam, PeripheralState::Idle);
        assert_eq!(set.acquire_tick(cam), 0);
        assert_eq!(set.storage_occupied_bits(), 2_000_000);
    }

    #[test]
    fn full_storage_drops_whole_sample() {
        let mut set = PeripheralSet::new();
        set.install(storage(1_000_000)); // 1 Mbit left
        let cam = set.install(camera(2_000_000.0, 1.0)); // wants 2 Mbit
        assert_eq!(set.acquire_tick(cam), 0);
        assert_eq!(set.items()[cam].storage_full_drops, 1);
        assert_eq!(set.storage_remaining_bits(), 1_000_000); // unchanged
    }

    #[test]
    fn total_power_sums_states() {
        let mut set = PeripheralSet::new();
        let imu = set.install(Peripheral::new(
            "imu".into(),
            PowerProfile {
                on_w: 12.0,
                idle_w: 0.0,
            },
            PeripheralKind::Generic,
        ));
        let cam = set.install(camera(1.0, 1.0));
        assert_eq!(set.total_power(), 17.0);
        set.set_state(cam, PeripheralState::Idle);
        assert_eq!(set.total_power(), 13.0);
        set.set_state(imu, PeripheralState::Off);
        set.set_state(cam, PeripheralState::Off);
        assert_eq!(set.total_power(), 0.0);
    }
}
