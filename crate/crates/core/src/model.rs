//! Domain types and parameter records shared by every other module.
//!
//! All quantities are SI: metres, seconds, m/s, m/s². The space headway
//! `gap` of a follower is measured front bumper to front bumper, i.e. it
//! includes the predecessor's length, so the net free space is `gap - L`.

use alloc::vec::Vec;

use crate::fmath::{powf, sqrt};

/// Parameter validation failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("equilibrium speed {v_eq} outside the model domain [0, {v_max})")]
    Domain { v_eq: f64, v_max: f64 },
}

fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), ParamError> {
    if cond && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::Invalid {
            name,
            value,
            reason,
        })
    }
}

/// State of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub length: f64,
}

/// Space headway and relative speed `v_{i-1} - v_i` to the predecessor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapState {
    pub gap: f64,
    pub rel_speed: f64,
}

/// Constant-time-gap ACC gains.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CtgParams {
    /// Spacing gain, 1/s².
    pub k1: f64,
    /// Speed gain, 1/s.
    pub k2: f64,
    /// Time gap, s.
    pub tau: f64,
    /// Standstill distance, m.
    pub s0: f64,
}

impl CtgParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.k1 > 0.0, "k1", self.k1, "must be > 0")?;
        check(self.k2 > 0.0, "k2", self.k2, "must be > 0")?;
        check(self.tau > 0.0, "tau", self.tau, "must be > 0")?;
        check(self.s0 >= 0.0, "s0", self.s0, "must be >= 0")
    }
}

/// Variable-time-gap ACC: CTG gains plus the H∞ design weights.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VtgParams {
    pub ctg: CtgParams,
    pub rho_s: f64,
    pub rho_v: f64,
    pub rho_u: f64,
    pub gamma: f64,
    /// Admissible commanded time-gap interval `[lo, hi]`, s.
    #[cfg_attr(feature = "serde", serde(default = "default_tau_bounds"))]
    pub tau_bounds: (f64, f64),
}

/// Default clamp for the commanded time gap.
pub const DEFAULT_TAU_BOUNDS: (f64, f64) = (0.1, 5.0);

#[cfg(feature = "serde")]
fn default_tau_bounds() -> (f64, f64) {
    DEFAULT_TAU_BOUNDS
}

impl VtgParams {
    pub fn new(ctg: CtgParams, rho_s: f64, rho_v: f64, rho_u: f64, gamma: f64) -> Self {
        Self {
            ctg,
            rho_s,
            rho_v,
            rho_u,
            gamma,
            tau_bounds: DEFAULT_TAU_BOUNDS,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.ctg.validate()?;
        check(self.rho_s >= 0.0, "rho_s", self.rho_s, "must be >= 0")?;
        check(self.rho_v >= 0.0, "rho_v", self.rho_v, "must be >= 0")?;
        check(self.rho_u > 0.0, "rho_u", self.rho_u, "must be > 0")?;
        check(self.gamma > 0.0, "gamma", self.gamma, "must be > 0")?;
        let (lo, hi) = self.tau_bounds;
        check(lo > 0.0, "tau_bounds.lo", lo, "must be > 0")?;
        check(lo <= self.ctg.tau, "tau_bounds.lo", lo, "must not exceed tau")?;
        check(hi >= self.ctg.tau, "tau_bounds.hi", hi, "must not be below tau")
    }
}

/// Intelligent driver model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdmParams {
    pub v0: f64,
    pub tau: f64,
    pub s0: f64,
    pub a_max: f64,
    pub b: f64,
    pub delta: f64,
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.v0 > 0.0, "v0", self.v0, "must be > 0")?;
        check(self.tau > 0.0, "tau", self.tau, "must be > 0")?;
        check(self.s0 > 0.0, "s0", self.s0, "must be > 0")?;
        check(self.a_max > 0.0, "a_max", self.a_max, "must be > 0")?;
        check(self.b > 0.0, "b", self.b, "must be > 0")?;
        check(self.delta >= 1.0, "delta", self.delta, "must be >= 1")
    }
}

/// Quadratic-spacing sliding-mode controller parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QsmcParams {
    /// Standstill distance `A`, m.
    pub a: f64,
    /// Linear spacing coefficient `T`, s.
    pub t: f64,
    /// Quadratic spacing coefficient `G`, s²/m.
    pub g: f64,
    /// Sliding-surface gain, 1/s.
    #[cfg_attr(feature = "serde", serde(default = "default_qsmc_lambda"))]
    pub lambda: f64,
}

pub const DEFAULT_QSMC_LAMBDA: f64 = 0.5;

#[cfg(feature = "serde")]
fn default_qsmc_lambda() -> f64 {
    DEFAULT_QSMC_LAMBDA
}

impl QsmcParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.a >= 0.0, "A", self.a, "must be >= 0")?;
        check(self.t >= 0.0, "T", self.t, "must be >= 0")?;
        check(self.g >= 0.0, "G", self.g, "must be >= 0")?;
        check(self.t > 0.0 || self.g > 0.0, "T", self.t, "T and G cannot both vanish")?;
        check(self.lambda > 0.0, "lambda", self.lambda, "must be > 0")
    }

    /// Desired net spacing `A + T v + G v²` (excluding the leader length).
    pub fn desired_net_gap(&self, v: f64) -> f64 {
        self.a + self.t * v + self.g * v * v
    }
}

/// Actuator lag, input dead-time and emergency deceleration floor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActuationParams {
    /// First-order lag time constant, s.
    #[cfg_attr(feature = "serde", serde(default))]
    pub lag: f64,
    /// Input dead-time, s.
    #[cfg_attr(feature = "serde", serde(default))]
    pub delay: f64,
    /// Emergency deceleration, m/s² (negative).
    #[cfg_attr(feature = "serde", serde(default = "default_a_min"))]
    pub a_min: f64,
}

pub const DEFAULT_A_MIN: f64 = -5.0;

#[cfg(feature = "serde")]
fn default_a_min() -> f64 {
    DEFAULT_A_MIN
}

impl Default for ActuationParams {
    fn default() -> Self {
        Self {
            lag: 0.0,
            delay: 0.0,
            a_min: DEFAULT_A_MIN,
        }
    }
}

impl ActuationParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.lag >= 0.0, "lag", self.lag, "must be >= 0")?;
        check(self.delay >= 0.0, "delay", self.delay, "must be >= 0")?;
        check(self.a_min < 0.0, "a_min", self.a_min, "must be < 0")
    }
}

/// Bit flags recorded per trajectory sample.
pub mod flags {
    /// The VTG time-gap command hit its clamp.
    pub const TAU_CLAMPED: u8 = 1;
    /// The emergency-braking override fired.
    pub const FAIL_SAFE: u8 = 1 << 1;
    /// VTG fell back to CTG (no feasible synthesis at this operating point).
    pub const FALLBACK: u8 = 1 << 2;
    /// The vehicle has collided and is frozen.
    pub const COLLIDED: u8 = 1 << 3;
    /// A scripted perturbation overrode the controller.
    pub const PERTURBED: u8 = 1 << 4;
}

/// Uniformly sampled signals of one vehicle.
///
/// Sample `k` is the state at `t0 + k·dt`; `accel[k]` is the realized
/// acceleration applied over `[t_k, t_{k+1})`. For a vehicle without a
/// predecessor `gap` and `lead_speed` hold NaN.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub position: Vec<f64>,
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
    pub gap: Vec<f64>,
    pub time_gap_cmd: Vec<f64>,
    pub lead_speed: Vec<f64>,
    pub flags: Vec<u8>,
}

impl Trajectory {
    pub fn with_capacity(dt: f64, t0: f64, n: usize) -> Self {
        Self {
            dt,
            t0,
            position: Vec::with_capacity(n),
            speed: Vec::with_capacity(n),
            accel: Vec::with_capacity(n),
            gap: Vec::with_capacity(n),
            time_gap_cmd: Vec::with_capacity(n),
            lead_speed: Vec::with_capacity(n),
            flags: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn push(&mut self, position: f64, speed: f64, accel: f64, gap: f64, tau: f64, lead: f64, flags: u8) {
        self.position.push(position);
        self.speed.push(speed);
        self.accel.push(accel);
        self.gap.push(gap);
        self.time_gap_cmd.push(tau);
        self.lead_speed.push(lead);
        self.flags.push(flags);
    }

    /// True when every column has the same length and `dt > 0`.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.dt > 0.0
            && self.position.len() == n
            && self.accel.len() == n
            && self.gap.len() == n
            && self.time_gap_cmd.len() == n
            && self.lead_speed.len() == n
            && self.flags.len() == n
    }
}

/// CTG equilibrium space headway `s0 + L + τ v_eq`.
pub fn equilibrium_gap_ctg(p: &CtgParams, v_eq: f64, leader_length: f64) -> f64 {
    debug_assert!(v_eq >= 0.0);
    p.s0 + leader_length + p.tau * v_eq
}

/// IDM equilibrium net gap `(s0 + τ v) / sqrt(1 - (v/v0)^δ)`.
pub fn equilibrium_gap_idm(p: &IdmParams, v_eq: f64) -> Result<f64, ParamError> {
    if !(v_eq >= 0.0 && v_eq < p.v0) {
        return Err(ParamError::Domain { v_eq, v_max: p.v0 });
    }
    let denom = 1.0 - powf(v_eq / p.v0, p.delta);
    if denom <= 0.0 {
        return Err(ParamError::Domain { v_eq, v_max: p.v0 });
    }
    Ok((p.s0 + p.tau * v_eq) / sqrt(denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctg(tau: f64, s0: f64) -> CtgParams {
        CtgParams {
            k1: 0.23,
            k2: 0.07,
            tau,
            s0,
        }
    }

    #[test]
    fn ctg_gap_ring_spacing() {
        // 274 m shared by 10 vehicles at 20 m/s.
        let p = ctg(0.96770, 3.046);
        let s = equilibrium_gap_ctg(&p, 20.0, 5.0);
        assert!((s - 27.4).abs() < 1e-12);
        assert!((10.0 * s - 274.0).abs() < 1e-10);
    }

    #[test]
    fn ctg_gap_zero_speed_and_direct() {
        let p = ctg(1.5, 2.0);
        assert_eq!(equilibrium_gap_ctg(&p, 0.0, 5.0), 7.0);
        assert_eq!(equilibrium_gap_ctg(&p, 30.0, 5.0), 52.0);
    }

    fn idm() -> IdmParams {
        IdmParams {
            v0: 30.0,
            tau: 1.0,
            s0: 2.0,
            a_max: 1.0,
            b: 1.5,
            delta: 4.0,
        }
    }

    #[test]
    fn idm_gap_values() {
        let p = idm();
        assert_eq!(equilibrium_gap_idm(&p, 0.0).unwrap(), 2.0);
        let s = equilibrium_gap_idm(&p, 15.0).unwrap();
        assert!((s - 17.0 / (1.0 - 0.0625_f64).sqrt()).abs() < 1e-12);
        assert!((s - 17.557).abs() < 1e-3);
    }

    #[test]
    fn idm_gap_domain() {
        let p = idm();
        assert!(matches!(equilibrium_gap_idm(&p, 30.0), Err(ParamError::Domain { .. })));
        assert!(equilibrium_gap_idm(&p, -1.0).is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(ctg(0.0, 2.0).validate().is_err());
        assert!(ctg(1.0, -1.0).validate().is_err());
        let v = VtgParams::new(ctg(1.0, 2.0), 0.1, 0.73, 0.0, 1.0);
        assert!(v.validate().is_err());
        let v = VtgParams::new(ctg(1.0, 2.0), 0.1, 0.73, 0.56, 1.0);
        assert!(v.validate().is_ok());
        let mut bad = ActuationParams::default();
        bad.a_min = 1.0;
        assert!(bad.validate().is_err());
    }
}
