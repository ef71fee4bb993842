//! Rotary-wing mechanical power model and the drone energy reservoir.
//!
//! The mechanical power of a drone flying at velocity `v` decomposes into
//! level, vertical and drag terms:
//!
//! ```text
//! P = P_level + P_vertical + P_drag
//! P_level    = W^2 / (sqrt(2) rho A) * 1 / sqrt(O + sqrt(O^2 + 4 Vh^4))
//! P_vertical = W * vz
//! P_drag     = 1/8 * CD0 * rho * A * O^(3/2)
//! ```
//!
//! with `O = vx^2 + vy^2`, `W = m g` and the hover speed scale
//! `Vh = sqrt(W / (2 rho A))`. At hover the total collapses to `W * Vh`.
//!
//! The energy source is a plain joule reservoir drained on a fixed sampling
//! grid; no electrochemical discharge curve is modeled.

use crate::entities::Mechanics;
use crate::vec3::Vec3;

/// Instantaneous power split used by reports and KPI extraction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerBreakdown {
    pub level_w: f64,
    pub vertical_w: f64,
    pub drag_w: f64,
    pub peripherals_w: f64,
    pub radio_w: f64,
}

impl PowerBreakdown {
    pub fn total_w(&self) -> f64 {
        self.level_w + self.vertical_w + self.drag_w + self.peripherals_w + self.radio_w
    }

    pub fn mechanical_w(&self) -> f64 {
        self.level_w + self.vertical_w + self.drag_w
    }

    pub fn with_loads(mut self, peripherals_w: f64, radio_w: f64) -> Self {
        self.peripherals_w = peripherals_w;
        self.radio_w = radio_w;
        self
    }
}

/// Induced-velocity scale at hover, `sqrt(W / (2 rho A))`.
pub fn hover_speed(mech: &Mechanics) -> f64 {
    (mech.weight() / (2.0 * mech.air_density() * mech.rotor_disk_area())).sqrt()
}

/// Closed-form hover power `W * Vh`, the value `mechanical_power` must
/// reproduce at zero velocity.
pub fn hover_power(mech: &Mechanics) -> f64 {
    mech.weight() * hover_speed(mech)
}

/// Mechanical part of the drone power at velocity `v` (peripheral and radio
/// loads are zero in the returned breakdown).
pub fn mechanical_power(v: Vec3, mech: &Mechanics) -> PowerBreakdown {
    let w = mech.weight();
    let rho = mech.air_density();
    let area = mech.rotor_disk_area();
    let omega = v.horizontal_sq();
    let vh = hover_speed(mech);
    let level_w = w * w
        / (2.0f64.sqrt() * rho * area)
        / (omega + (omega * omega + 4.0 * vh.powi(4)).sqrt()).sqrt();
    let vertical_w = w * v.z;
    let drag_w = 0.125 * mech.drag_coefficient() * rho * area * omega.powf(1.5);
    PowerBreakdown {
        level_w,
        vertical_w,
        drag_w,
        peripherals_w: 0.0,
        radio_w: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrainOutcome {
    pub remaining_j: f64,
    /// True exactly once, on the tick where the reservoir hits zero.
    pub depleted_now: bool,
}

/// Joule reservoir drained on a fixed sampling grid.
#[derive(Debug, Clone)]
pub struct EnergySource {
    initial_j: f64,
    remaining_j: f64,
    sampling_interval: f64,
    depleted_at: Option<f64>,
}

impl EnergySource {
    pub fn new(initial_j: f64, sampling_interval: f64) -> Self {
        Self {
            initial_j: initial_j.max(0.0),
            remaining_j: initial_j.max(0.0),
            sampling_interval,
            depleted_at: None,
        }
    }

    pub fn initial_j(&self) -> f64 {
        self.initial_j
    }

    pub fn remaining_j(&self) -> f64 {
        self.remaining_j
    }

    pub fn sampling_interval(&self) -> f64 {
        self.sampling_interval
    }

    pub fn depleted_at(&self) -> Option<f64> {
        self.depleted_at
    }

    pub fn is_depleted(&self) -> bool {
        self.depleted_at.is_some()
    }

    /// One sampling tick: subtracts `power_w * dt`, clamping at zero. The
    /// depletion flag fires exactly once.
    pub fn drain(&mut self, power_w: f64, now: f64) -> DrainOutcome {
        if self.depleted_at.is_some() {
            return DrainOutcome {
                remaining_j: self.remaining_j,
                depleted_now: false,
            };
        }
        self.remaining_j -= power_w * self.sampling_interval;
        let mut depleted_now = false;
        if self.remaining_j <= 0.0 {
            self.remaining_j = 0.0;
            self.depleted_at = Some(now);
            depleted_now = true;
        }
        DrainOutcome {
            remaining_j: self.remaining_j,
            depleted_now,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::DEFAULT_AIR_DENSITY;
    use rand::{Rng, SeedableRng};

    fn mech(m: f64, a: f64, rho: f64) -> Mechanics {
        Mechanics::new(m, a, 0.08, rho).unwrap()
    }

    #[test]
    fn hover_matches_precomputed_reference() {
        // frozen from an arbitrary-precision evaluation of the power model
        // at m=1 kg, A=0.18 m^2, rho=1.225 kg/m^3, v=0
        let m = mech(1.0, 0.18, DEFAULT_AIR_DENSITY);
        let vh = hover_speed(&m);
        assert!((vh - 4.716449719776908).abs() / 4.716449719776908 < 1e-12);
        let p = mechanical_power(Vec3::ZERO, &m);
        let reference = 46.26837175101147;
        assert!((p.total_w() - reference).abs() / reference < 1e-6);
    }

    #[test]
    fn hover_identity_over_random_mechanics() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4242);
        for _ in 0..1000 {
            let m = mech(
                rng.gen_range(0.2..25.0),
                rng.gen_range(0.02..2.0),
                rng.gen_range(0.9..1.4),
            );
            let p = mechanical_power(Vec3::ZERO, &m).total_w();
            let identity = hover_power(&m);
            assert!(
                (p - identity).abs() / identity < 1e-9,
                "hover identity broke for {m:?}: {p} vs {identity}"
            );
        }
    }

    #[test]
    fn vertical_power_is_weight_times_climb_rate() {
        let m = mech(1.0, 0.18, DEFAULT_AIR_DENSITY);
        let p = mechanical_power(Vec3::new(0.0, 0.0, 2.0), &m);
        assert!((p.vertical_w - 19.62).abs() < 1e-12);
        // climbing at equal |v| costs more than level flight
        let climb = mechanical_power(Vec3::new(0.0, 0.0, 5.0), &m).total_w();
        let level = mechanical_power(Vec3::new(5.0, 0.0, 0.0), &m).total_w();
        assert!(climb > level);
    }

    #[test]
    fn total_power_monotone_in_climb_rate() {
        let m = mech(2.0, 0.3, DEFAULT_AIR_DENSITY);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..50 {
            let vz = -5.0 + 0.3 * k as f64;
            let p = mechanical_power(Vec3::new(3.0, 1.0, vz), &m).total_w();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn induced_power_decreases_with_horizontal_speed() {
        let m = mech(1.5, 0.2, DEFAULT_AIR_DENSITY);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let vx = 0.2 * k as f64;
            let p = mechanical_power(Vec3::new(vx, 0.0, 0.0), &m);
            assert!(p.level_w < prev || k == 0);
            assert!(p.level_w >= 0.0 && p.drag_w >= 0.0);
            prev = p.level_w;
        }
    }

    #[test]
    fn reservoir_depletes_once() {
        let mut src = EnergySource::new(100.0, 1.0);
        let mut depletions = 0;
        for k in 0..20 {
            let out = src.drain(10.0, k as f64);
            if out.depleted_now {
                depletions += 1;
                assert_eq!(k, 9); // 100 J at 10 W over 1 s ticks
            }
        }
        assert_eq!(depletions, 1);
        assert_eq!(src.remaining_j(), 0.0);
        assert_eq!(src.depleted_at(), Some(9.0));
    }

    #[test]
    fn zero_power_never_drains() {
        let mut src = EnergySource::new(50.0, 0.1);
        for k in 0..1000 {
            src.drain(0.0, k as f64 * 0.1);
        }
        assert_eq!(src.remaining_j(), 50.0);
        assert!(!src.is_depleted());
    }

    #[test]
    fn conservation_without_clamp() {
        // remaining equals the scalar replay with the same accumulation order
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let dt = 0.1;
        let mut src = EnergySource::new(1_000_000.0, dt);
        let mut oracle = 1_000_000.0f64;
        for k in 0..10_000 {
            let p: f64 = rng.gen_range(0.0..50.0);
            src.drain(p, k as f64 * dt);
            oracle -= p * dt;
        }
        assert_eq!(src.remaining_j(), oracle);
    }
}
