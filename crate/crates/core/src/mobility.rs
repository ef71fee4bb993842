//! Interest-level Bezier trajectories and the two drone mobility models.

// `!(x > 0.0)` guards intentionally treat NaN as invalid input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//!
//! A flight plan is an ordered list of interest points. Each point carries an
//! interest level `l >= 1` that weights how closely the generated curve
//! approaches it; points with `l == 0` split the plan into contiguous curves
//! with a hovering rest in between. The generator evaluates
//!
//! ```text
//! G(t) = sum_i P_i * sum_{j=0}^{l_i - 1} C(L, Li + j) (1-t)^(L - Li - j) t^(Li + j)
//! ```
//!
//! with `L = (sum l_i) - 1` and `Li = l_0 + ... + l_{i-1}`, so the index
//! `Li + j` enumerates `0..=L` exactly once and the weights form a partition
//! of unity. With all levels equal to 1 this reduces to the classical Bezier
//! curve.

use crate::vec3::Vec3;
use thiserror::Error;

/// Levels above this would push binomial coefficients out of f64 range.
pub const MAX_TOTAL_LEVEL: u64 = 1000;

/// Curves end within this distance of the last interest point.
pub const ENDPOINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("degenerate plan: a curve segment needs at least 2 points")]
    DegeneratePlan,
    #[error("curve step must be in (0, 1]")]
    InvalidStep,
    #[error("total interest level {0} exceeds the binomial-stability cap {MAX_TOTAL_LEVEL}")]
    LevelOverflow(u64),
    #[error("interior interest levels must be >= 1 inside a segment")]
    ZeroLevelInSegment,
    #[error("acceleration and max speed must be positive")]
    NonPositiveKinematics,
    #[error("speed polynomial is negative ({0}) at t={1}")]
    NegativeSpeed(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterestPoint {
    pub position: Vec3,
    /// Interest level; 0 forces a trajectory split with a hover.
    pub level: u32,
    /// Hover duration in seconds, meaningful only when `level == 0`.
    pub rest_time: f64,
}

impl InterestPoint {
    pub fn new(position: Vec3, level: u32) -> Self {
        Self {
            position,
            level,
            rest_time: 0.0,
        }
    }

    pub fn rest(position: Vec3, rest_time: f64) -> Self {
        Self {
            position,
            level: 0,
            rest_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlan {
    pub points: Vec<InterestPoint>,
}

impl FlightPlan {
    pub fn new(points: Vec<InterestPoint>) -> Self {
        Self { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub position: Vec3,
    pub dist_from_prev: f64,
    pub dist_from_start: f64,
}

/// Discretized trajectory with cumulative chord-length distances.
#[derive(Debug, Clone)]
pub struct Curve {
    samples: Vec<CurvePoint>,
    step: f64,
}

impl Curve {
    pub fn samples(&self) -> &[CurvePoint] {
        &self.samples
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn total_length(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.dist_from_start)
    }

    pub fn start(&self) -> Vec3 {
        self.samples[0].position
    }

    pub fn end(&self) -> Vec3 {
        self.samples[self.samples.len() - 1].position
    }

    /// Position and unit tangent at arc length `s`, linearly interpolated
    /// between samples and clamped to the curve ends.
    pub fn point_at_arc(&self, s: f64) -> (Vec3, Vec3) {
        let samples = &self.samples;
        if s <= 0.0 {
            let tangent = self.tangent_of_span(0);
            return (samples[0].position, tangent);
        }
        if s >= self.total_length() {
            let tangent = self.tangent_of_span(samples.len().saturating_sub(2));
            return (self.end(), tangent);
        }
        // first sample with dist_from_start >= s
        let idx = samples.partition_point(|p| p.dist_from_start < s);
        let hi = &samples[idx];
        let lo = &samples[idx - 1];
        let span = hi.dist_from_start - lo.dist_from_start;
        if span == 0.0 {
            return (lo.position, self.tangent_of_span(idx - 1));
        }
        let f = (s - lo.dist_from_start) / span;
        let pos = lo.position + (hi.position - lo.position) * f;
        (pos, (hi.position - lo.position).normalized())
    }

    fn tangent_of_span(&self, lo: usize) -> Vec3 {
        // first non-degenerate span at or after `lo`, searching backwards too
        let n = self.samples.len();
        for i in lo..n.saturating_sub(1) {
            let d = self.samples[i + 1].position - self.samples[i].position;
            if d.norm() > 0.0 {
                return d.normalized();
            }
        }
        for i in (0..lo.min(n.saturating_sub(1))).rev() {
            let d = self.samples[i + 1].position - self.samples[i].position;
            if d.norm() > 0.0 {
                return d.normalized();
            }
        }
        Vec3::ZERO
    }
}

/// Per-point weights of the trajectory generator at parameter `t`: entry `i`
/// is the aggregated Bernstein mass assigned to plan point `i`.
pub fn interest_weights(levels: &[u32], t: f64) -> Result<Vec<f64>, MobilityError> {
    let total: u64 = levels.iter().map(|&l| u64::from(l)).sum();
    if total == 0 || levels.contains(&0) {
        return Err(MobilityError::ZeroLevelInSegment);
    }
    let lambda = total - 1;
    if lambda > MAX_TOTAL_LEVEL {
        return Err(MobilityError::LevelOverflow(lambda));
    }
    let bernstein = bernstein_row(lambda, t);
    let mut weights = Vec::with_capacity(levels.len());
    let mut offset = 0usize;
    for &l in levels {
        let w: f64 = bernstein[offset..offset + l as usize].iter().sum();
        weights.push(w);
        offset += l as usize;
    }
    Ok(weights)
}

/// All Bernstein basis values `C(n,k) (1-t)^(n-k) t^k` for `k = 0..=n`.
fn bernstein_row(n: u64, t: f64) -> Vec<f64> {
    let len = (n + 1) as usize;
    let mut row = vec![0.0f64; len];
    if t <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if t >= 1.0 {
        row[len - 1] = 1.0;
        return row;
    }
    // binomials by the multiplicative recurrence; n <= MAX_TOTAL_LEVEL keeps
    // C(n, n/2) below f64::MAX
    let mut binom = 1.0f64;
    let u = 1.0 - t;
    for (k, slot) in row.iter_mut().enumerate() {
        *slot = binom * u.powi((n as usize - k) as i32) * t.powi(k as i32);
        binom = binom * ((n as usize - k) as f64) / ((k + 1) as f64);
    }
    row
}

/// Samples the trajectory generator over `t = 0, step, 2*step, ..., 1`.
pub fn generate_curve(plan: &FlightPlan, step: f64) -> Result<Curve, MobilityError> {
    if plan.points.len() < 2 {
        return Err(MobilityError::DegeneratePlan);
    }
    if !(step > 0.0 && step <= 1.0) || !step.is_finite() {
        return Err(MobilityError::InvalidStep);
    }
    let levels: Vec<u32> = plan.points.iter().map(|p| p.level).collect();
    let n_steps = (1.0 / step).ceil() as usize;
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut cumulative = 0.0f64;
    let mut prev: Option<Vec3> = None;
    for k in 0..=n_steps {
        let t = if k == n_steps {
            1.0
        } else {
            (k as f64 * step).min(1.0)
        };
        let weights = interest_weights(&levels, t)?;
        let mut pos = Vec3::ZERO;
        for (point, w) in plan.points.iter().zip(&weights) {
            pos = pos + point.position * *w;
        }
        let dist_from_prev = prev.map_or(0.0, |p| pos.distance(p));
        cumulative += dist_from_prev;
        samples.push(CurvePoint {
            position: pos,
            dist_from_prev,
            dist_from_start: cumulative,
        });
        prev = Some(pos);
    }
    Ok(Curve { samples, step })
}

/// One curve segment of a split plan together with the hover that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSegment {
    pub plan: FlightPlan,
    /// Hover duration after this segment ends; 0 when none.
    pub rest_after: f64,
}

/// Splits a plan at its `l == 0` points. Each such point ends one segment and
/// starts the next, promoted to level 1 in both, with its rest time recorded
/// at the junction.
pub fn split_plan(plan: &FlightPlan) -> Result<Vec<PlanSegment>, MobilityError> {
    if plan.points.len() < 2 {
        return Err(MobilityError::DegeneratePlan);
    }
    let mut segments = Vec::new();
    let mut current: Vec<InterestPoint> = Vec::new();
    for (i, point) in plan.points.iter().enumerate() {
        if point.level == 0 {
            let promoted = InterestPoint::new(point.position, 1);
            current.push(promoted);
            if current.len() < 2 {
                return Err(MobilityError::DegeneratePlan);
            }
            segments.push(PlanSegment {
                plan: FlightPlan::new(std::mem::take(&mut current)),
                rest_after: point.rest_time.max(0.0),
            });
            if i + 1 < plan.points.len() {
                current.push(promoted);
            }
        } else {
            current.push(*point);
        }
    }
    match current.len() {
        0 => {} // plan ended on an l == 0 point
        1 => return Err(MobilityError::DegeneratePlan),
        _ => segments.push(PlanSegment {
            plan: FlightPlan::new(current),
            rest_after: 0.0,
        }),
    }
    Ok(segments)
}

/// Kinematic state of a drone at a given instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub arc_length: f64,
    pub segment_index: usize,
    pub resting_until: Option<f64>,
}

/// Arc length and scalar speed under constant acceleration capped at
/// `max_speed`, starting from rest.
fn constant_accel_kinematics(t: f64, accel: f64, max_speed: f64) -> (f64, f64) {
    let t_cap = max_speed / accel;
    if t <= t_cap {
        (0.5 * accel * t * t, accel * t)
    } else {
        (
            max_speed * max_speed / (2.0 * accel) + max_speed * (t - t_cap),
            max_speed,
        )
    }
}

/// Position/velocity on `curve` at `t` seconds after the segment start,
/// under the constant-acceleration model. Clamps to the curve end with zero
/// velocity once the arc length is exhausted.
pub fn constant_accel_position(
    t: f64,
    curve: &Curve,
    accel: f64,
    max_speed: f64,
) -> Result<MobilityState, MobilityError> {
    if !(accel > 0.0) || !(max_speed > 0.0) {
        return Err(MobilityError::NonPositiveKinematics);
    }
    let (s, speed) = constant_accel_kinematics(t.max(0.0), accel, max_speed);
    Ok(state_at_arc(curve, s, speed))
}

/// Evaluates the polynomial `v(t) = sum c_k t^k`.
pub fn polynomial_speed(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Analytic arc length: the antiderivative `sum c_k t^(k+1) / (k+1)`.
pub fn polynomial_arc_length(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * t + c / (k + 1) as f64)
        * t
}

/// Position/velocity on `curve` at `t` seconds after the segment start, with
/// the parametric speed profile `v(t)`.
pub fn parametric_speed_position(
    t: f64,
    curve: &Curve,
    coeffs: &[f64],
) -> Result<MobilityState, MobilityError> {
    let t = t.max(0.0);
    let v = polynomial_speed(coeffs, t);
    if v < -1e-9 {
        return Err(MobilityError::NegativeSpeed(v, t));
    }
    let s = polynomial_arc_length(coeffs, t);
    Ok(state_at_arc(curve, s, v.max(0.0)))
}

fn state_at_arc(curve: &Curve, s: f64, speed: f64) -> MobilityState {
    let total = curve.total_length();
    if s >= total {
        return MobilityState {
            position: curve.end(),
            velocity: Vec3::ZERO,
            arc_length: total,
            segment_index: 0,
            resting_until: None,
        };
    }
    let (position, tangent) = curve.point_at_arc(s);
    MobilityState {
        position,
        velocity: tangent * speed,
        arc_length: s,
        segment_index: 0,
        resting_until: None,
    }
}

/// Speed profile shared by every segment of a mission.
#[derive(Debug, Clone, PartialEq)]
pub enum SpeedProfile {
    ConstantAcceleration { accel: f64, max_speed: f64 },
    Polynomial { coeffs: Vec<f64> },
}

impl SpeedProfile {
    fn validate(&self) -> Result<(), MobilityError> {
        match self {
            SpeedProfile::ConstantAcceleration { accel, max_speed } => {
                if *accel > 0.0 && *max_speed > 0.0 {
                    Ok(())
                } else {
                    Err(MobilityError::NonPositiveKinematics)
                }
            }
            SpeedProfile::Polynomial { .. } => Ok(()),
        }
    }

    /// Seconds needed to cover `length` meters from a standing start, or
    /// `None` when the profile never gets that far within `horizon` seconds.
    fn time_to_cover(&self, length: f64, horizon: f64) -> Option<f64> {
        if length <= 0.0 {
            return Some(0.0);
        }
        match self {
            SpeedProfile::ConstantAcceleration { accel, max_speed } => {
                let s_cap = max_speed * max_speed / (2.0 * accel);
                let t = if length <= s_cap {
                    (2.0 * length / accel).sqrt()
                } else {
                    max_speed / accel + (length - s_cap) / max_speed
                };
                (t <= horizon).then_some(t)
            }
            SpeedProfile::Polynomial { coeffs } => {
                if polynomial_arc_length(coeffs, horizon) < length {
                    return None;
                }
                // s(t) is monotone for v >= 0: bisect
                let (mut lo, mut hi) = (0.0f64, horizon);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if polynomial_arc_length(coeffs, mid) < length {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi))
            }
        }
    }

    fn state_on(&self, curve: &Curve, local_t: f64) -> Result<MobilityState, MobilityError> {
        match self {
            SpeedProfile::ConstantAcceleration { accel, max_speed } => {
                constant_accel_position(local_t, curve, *accel, *max_speed)
            }
            SpeedProfile::Polynomial { coeffs } => {
                parametric_speed_position(local_t, curve, coeffs)
            }
        }
    }
}

struct MissionSegment {
    curve: Curve,
    /// Mission time at which this segment starts moving.
    t_start: f64,
    /// Mission time at which motion along the curve completes (may exceed
    /// the simulation horizon when the profile never covers the curve).
    t_motion_end: f64,
    /// Motion end plus the hover rest; next segment starts here.
    t_end: f64,
}

/// A full multi-segment flight: plan split at `l == 0` points, curves
/// generated per segment, rests honored, speed restarting from zero after
/// every hover.
pub struct Mission {
    segments: Vec<MissionSegment>,
    profile: SpeedProfile,
}

impl Mission {
    pub fn build(
        plan: &FlightPlan,
        profile: SpeedProfile,
        curve_step: f64,
        horizon: f64,
    ) -> Result<Self, MobilityError> {
        profile.validate()?;
        if let SpeedProfile::Polynomial { coeffs } = &profile {
            validate_speed_polynomial(coeffs, horizon)?;
        }
        let mut segments = Vec::new();
        let mut t_cursor = 0.0f64;
        for part in split_plan(plan)? {
            let curve = generate_curve(&part.plan, curve_step)?;
            let motion = profile
                .time_to_cover(curve.total_length(), horizon.max(0.0) - t_cursor)
                .unwrap_or(f64::INFINITY);
            let t_motion_end = t_cursor + motion;
            let t_end = t_motion_end + part.rest_after;
            segments.push(MissionSegment {
                curve,
                t_start: t_cursor,
                t_motion_end,
                t_end,
            });
            t_cursor = t_end;
        }
        Ok(Self { segments, profile })
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.curve.total_length()).sum()
    }

    /// Mission time at which all motion and rests complete.
    pub fn completion_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    pub fn start_position(&self) -> Vec3 {
        self.segments[0].curve.start()
    }

    /// State at mission time `t`. Past the last segment the drone holds the
    /// final position with zero velocity.
    pub fn state_at(&self, t: f64) -> MobilityState {
        let mut travelled_before = 0.0f64;
        for (idx, seg) in self.segments.iter().enumerate() {
            if t < seg.t_motion_end || idx == self.segments.len() - 1 && t >= seg.t_end {
                // moving along (or clamped at the end of) this segment
                let local = (t - seg.t_start).max(0.0);
                let mut state = self
                    .profile
                    .state_on(&seg.curve, local)
                    .unwrap_or_else(|_| state_at_arc(&seg.curve, 0.0, 0.0));
                state.segment_index = idx;
                state.arc_length += travelled_before;
                return state;
            }
            if t < seg.t_end {
                // hovering at the end of this segment
                return MobilityState {
                    position: seg.curve.end(),
                    velocity: Vec3::ZERO,
                    arc_length: travelled_before + seg.curve.total_length(),
                    segment_index: idx,
                    resting_until: Some(seg.t_end),
                };
            }
            travelled_before += seg.curve.total_length();
        }
        // unreachable for non-empty missions; defensive default
        let last = self.segments.len() - 1;
        MobilityState {
            position: self.segments[last].curve.end(),
            velocity: Vec3::ZERO,
            arc_length: travelled_before,
            segment_index: last,
            resting_until: None,
        }
    }
}

/// Checks `v(t) >= -1e-9` on a uniform grid over `[0, horizon]`.
fn validate_speed_polynomial(coeffs: &[f64], horizon: f64) -> Result<(), MobilityError> {
    let steps = 1000;
    for k in 0..=steps {
        let t = horizon * k as f64 / steps as f64;
        let v = polynomial_speed(coeffs, t);
        if v < -1e-9 {
            return Err(MobilityError::NegativeSpeed(v, t));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(points: &[([f64; 3], u32)]) -> FlightPlan {
        FlightPlan::new(
            points
                .iter()
                .map(|&(p, l)| InterestPoint::new(p.into(), l))
                .collect(),
        )
    }

    #[test]
    fn linear_two_point_plan_is_a_straight_line() {
        let p = plan(&[([0.0, 0.0, 0.0], 1), ([10.0, 0.0, 0.0], 1)]);
        let curve = generate_curve(&p, 0.001).unwrap();
        for s in curve.samples() {
            assert!(s.position.y.abs() < 1e-12 && s.position.z.abs() < 1e-12);
        }
        assert!((curve.total_length() - 10.0).abs() < 1e-9);
        // G(t) = (10t, 0, 0): sample at t = 0.25 is x = 2.5
        let quarter = curve.samples()[250].position;
        assert!((quarter.x - 2.5).abs() < 1e-9);
    }

    #[test]
    fn endpoints_are_reached() {
        let p = plan(&[
            ([0.0, 0.0, 0.0], 1),
            ([5.0, 9.0, 2.0], 7),
            ([-3.0, 4.0, 1.0], 3),
            ([10.0, 0.0, 5.0], 2),
        ]);
        let curve = generate_curve(&p, 0.01).unwrap();
        assert!(curve.start().distance(Vec3::new(0.0, 0.0, 0.0)) < ENDPOINT_TOLERANCE);
        assert!(curve.end().distance(Vec3::new(10.0, 0.0, 5.0)) < ENDPOINT_TOLERANCE);
    }

    #[test]
    fn weights_partition_unity() {
        let levels = [1u32, 4, 2, 9, 1];
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let w = interest_weights(&levels, t).unwrap();
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum} at t={t}");
            assert!(w.iter().all(|&x| x >= -1e-12));
        }
    }

    #[test]
    fn level_overflow_guard() {
        let levels = [600u32, 600];
        assert_eq!(
            interest_weights(&levels, 0.5).unwrap_err(),
            MobilityError::LevelOverflow(1199)
        );
    }

    #[test]
    fn raising_interest_level_pulls_curve_closer() {
        // raising one level from 1 to 10 pulls the curve monotonically closer
        let base = [
            ([0.0, 0.0, 0.0], 1u32),
            ([5.0, 8.0, 0.0], 1),
            ([10.0, 0.0, 0.0], 1),
        ];
        let target = Vec3::new(5.0, 8.0, 0.0);
        let mut last = f64::INFINITY;
        for k in 1..=10u32 {
            let mut pts = base;
            pts[1].1 = k;
            let curve = generate_curve(&plan(&pts), 1e-4).unwrap();
            let min_d = curve
                .samples()
                .iter()
                .map(|s| s.position.distance(target))
                .fold(f64::INFINITY, f64::min);
            assert!(min_d < last, "level {k}: {min_d} !< {last}");
            last = min_d;
        }
    }

    #[test]
    fn arc_lengths_monotone() {
        let p = plan(&[
            ([0.0, 0.0, 0.0], 1),
            ([4.0, 4.0, 4.0], 5),
            ([8.0, 0.0, 0.0], 1),
        ]);
        let curve = generate_curve(&p, 0.001).unwrap();
        let mut prev = -1.0;
        for s in curve.samples() {
            assert!(s.dist_from_start >= prev);
            assert!(s.dist_from_prev >= 0.0);
            prev = s.dist_from_start;
        }
        assert_eq!(curve.samples()[0].dist_from_start, 0.0);
        assert_eq!(curve.samples()[0].dist_from_prev, 0.0);
    }

    #[test]
    fn split_without_rest_points_is_identity() {
        let p = plan(&[([0.0, 0.0, 0.0], 1), ([10.0, 0.0, 0.0], 2)]);
        let segs = split_plan(&p).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].rest_after, 0.0);
        assert_eq!(segs[0].plan, p);
    }

    #[test]
    fn rest_point_splits_and_is_shared() {
        let mut pts = vec![
            InterestPoint::new(Vec3::new(0.0, 0.0, 0.0), 1),
            InterestPoint::new(Vec3::new(5.0, 0.0, 0.0), 2),
            InterestPoint::rest(Vec3::new(10.0, 0.0, 0.0), 2.0),
            InterestPoint::new(Vec3::new(15.0, 0.0, 0.0), 2),
            InterestPoint::new(Vec3::new(20.0, 0.0, 0.0), 1),
        ];
        let segs = split_plan(&FlightPlan::new(pts.clone())).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].plan.points.len(), 3);
        assert_eq!(segs[1].plan.points.len(), 3);
        assert_eq!(segs[0].rest_after, 2.0);
        assert_eq!(segs[1].rest_after, 0.0);
        // the junction appears in both, promoted to level 1
        assert_eq!(segs[0].plan.points[2].level, 1);
        assert_eq!(segs[1].plan.points[0].level, 1);
        assert_eq!(segs[0].plan.points[2].position, Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(segs[1].plan.points[0].position, Vec3::new(10.0, 0.0, 0.0));

        // terminal rest point: ends the last segment with its rest recorded
        pts.push(InterestPoint::rest(Vec3::new(25.0, 0.0, 0.0), 1.5));
        let segs = split_plan(&FlightPlan::new(pts)).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].plan.points.len(), 4);
        assert_eq!(segs[1].rest_after, 1.5);
    }

    #[test]
    fn consecutive_rest_points_yield_two_point_segments() {
        let pts = vec![
            InterestPoint::new(Vec3::new(0.0, 0.0, 0.0), 1),
            InterestPoint::rest(Vec3::new(5.0, 0.0, 0.0), 1.0),
            InterestPoint::rest(Vec3::new(10.0, 0.0, 0.0), 1.0),
            InterestPoint::new(Vec3::new(15.0, 0.0, 0.0), 1),
        ];
        // hand oracle: [P0,P1], [P1,P2], [P2,P3] with rests 1, 1, 0
        let segs = split_plan(&FlightPlan::new(pts)).unwrap();
        assert_eq!(segs.len(), 3);
        for seg in &segs {
            assert_eq!(seg.plan.points.len(), 2);
        }
        assert_eq!(segs[0].rest_after, 1.0);
        assert_eq!(segs[1].rest_after, 1.0);
        assert_eq!(segs[2].rest_after, 0.0);
    }

    fn straight_curve(len: f64) -> Curve {
        generate_curve(&plan(&[([0.0, 0.0, 0.0], 1), ([len, 0.0, 0.0], 1)]), 0.001).unwrap()
    }

    #[test]
    fn constant_accel_before_and_after_speed_cap() {
        let curve = straight_curve(1000.0);
        // still accelerating: a=4, vmax=20, t=2 -> s=8, v=8
        let st = constant_accel_position(2.0, &curve, 4.0, 20.0).unwrap();
        assert!((st.arc_length - 8.0).abs() < 1e-9);
        assert!((st.velocity.norm() - 8.0).abs() < 1e-9);
        assert!((st.position.x - 8.0).abs() < 1e-6);
        // capped: a=4, vmax=16, t=10 -> s = 32 + 16*6 = 128
        let st = constant_accel_position(10.0, &curve, 4.0, 16.0).unwrap();
        assert!((st.arc_length - 128.0).abs() < 1e-9);
        assert!((st.velocity.norm() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn constant_accel_clamps_at_curve_end() {
        let curve = straight_curve(10.0);
        let st = constant_accel_position(100.0, &curve, 4.0, 16.0).unwrap();
        assert_eq!(st.position, Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(st.velocity, Vec3::ZERO);
        let st0 = constant_accel_position(0.0, &curve, 4.0, 16.0).unwrap();
        assert_eq!(st0.position, curve.start());
        assert_eq!(st0.velocity.norm(), 0.0);
    }

    #[test]
    fn non_positive_kinematics_rejected() {
        let curve = straight_curve(10.0);
        assert_eq!(
            constant_accel_position(1.0, &curve, 0.0, 16.0).unwrap_err(),
            MobilityError::NonPositiveKinematics
        );
    }

    #[test]
    fn parametric_speed_constant_and_ramp() {
        let curve = straight_curve(1000.0);
        // constant 5 m/s for 4 s -> 20 m
        let st = parametric_speed_position(4.0, &curve, &[5.0]).unwrap();
        assert!((st.arc_length - 20.0).abs() < 1e-9);
        assert!((st.velocity.norm() - 5.0).abs() < 1e-9);
        // v = 2t, t=3 -> s = 9
        let st = parametric_speed_position(3.0, &curve, &[0.0, 2.0]).unwrap();
        assert!((st.arc_length - 9.0).abs() < 1e-9);
        // all-zero profile never moves
        let st = parametric_speed_position(50.0, &curve, &[0.0]).unwrap();
        assert_eq!(st.position, curve.start());
    }

    #[test]
    fn parametric_arc_length_matches_quadrature() {
        // trapezoid oracle for s(t) = integral of v
        let coeffs = [1.0, 0.5, 0.25];
        let t_end = 7.0;
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let a = t_end * i as f64 / n as f64;
            let b = t_end * (i + 1) as f64 / n as f64;
            acc += 0.5 * (polynomial_speed(&coeffs, a) + polynomial_speed(&coeffs, b)) * (b - a);
        }
        let analytic = polynomial_arc_length(&coeffs, t_end);
        assert!((acc - analytic).abs() < 1e-6, "{acc} vs {analytic}");
    }

    #[test]
    fn negative_speed_detected() {
        let curve = straight_curve(100.0);
        let err = parametric_speed_position(2.0, &curve, &[1.0, -2.0]).unwrap_err();
        assert!(matches!(err, MobilityError::NegativeSpeed(..)));
    }

    #[test]
    fn mission_rests_between_segments_and_restarts_from_zero() {
        let pts = vec![
            InterestPoint::new(Vec3::new(0.0, 0.0, 0.0), 1),
            InterestPoint::rest(Vec3::new(10.0, 0.0, 0.0), 2.0),
            InterestPoint::new(Vec3::new(20.0, 0.0, 0.0), 1),
        ];
        let mission = Mission::build(
            &FlightPlan::new(pts),
            SpeedProfile::Polynomial { coeffs: vec![5.0] },
            0.001,
            100.0,
        )
        .unwrap();
        assert_eq!(mission.segment_count(), 2);
        // segment 1: 10 m at 5 m/s = 2 s, rest until 4 s, segment 2 ends at 6 s
        assert!((mission.completion_time() - 6.0).abs() < 1e-6);
        let moving = mission.state_at(1.0);
        assert!((moving.velocity.norm() - 5.0).abs() < 1e-9);
        let resting = mission.state_at(3.0);
        assert_eq!(resting.velocity, Vec3::ZERO);
        assert_eq!(resting.segment_index, 0);
        assert!(resting.resting_until.is_some());
        assert!((resting.position.x - 10.0).abs() < 1e-6);
        let second = mission.state_at(5.0);
        assert_eq!(second.segment_index, 1);
        assert!(second.position.x > 10.0);
        let done = mission.state_at(50.0);
        assert!((done.position.x - 20.0).abs() < 1e-6);
        assert_eq!(done.velocity, Vec3::ZERO);
    }

    #[test]
    fn mission_velocity_matches_position_derivative() {
        // consistency between reported velocity and numerical derivative of
        // position on a 1 ms grid, away from rest/clamp discontinuities
        let pts = vec![
            InterestPoint::new(Vec3::new(0.0, 0.0, 0.0), 1),
            InterestPoint::new(Vec3::new(30.0, 40.0, 10.0), 4),
            InterestPoint::new(Vec3::new(60.0, 0.0, 0.0), 1),
        ];
        let profile = SpeedProfile::ConstantAcceleration {
            accel: 4.0,
            max_speed: 12.0,
        };
        let mission = Mission::build(&FlightPlan::new(pts), profile, 1e-4, 100.0).unwrap();
        let t_done = mission.completion_time();
        let h = 1e-3;
        let mut t = 0.5;
        while t < t_done - 0.5 {
            let before = mission.state_at(t - h).position;
            let after = mission.state_at(t + h).position;
            let numeric = (after - before) * (1.0 / (2.0 * h));
            let reported = mission.state_at(t).velocity;
            let err = (numeric - reported).norm();
            assert!(
                err < 1e-3 * 12.0,
                "t={t}: derivative {numeric:?} vs {reported:?}"
            );
            t += 0.37;
        }
    }
}
