//! Acceleration-command laws and the actuation wrapper.

use alloc::collections::VecDeque;
use alloc::sync::Arc;

use crate::fmath::{exp, powf, round, sqrt};
use crate::linalg::Mat;
use crate::model::{
    equilibrium_gap_ctg, equilibrium_gap_idm, ActuationParams, CtgParams, IdmParams, ParamError, QsmcParams,
    VtgParams,
};
use crate::synthesis::{synthesize, GainSchedule};

/// Below this leader speed VTG hands over to CTG.
pub const V_FLOOR: f64 = 1.0;
/// Guard on the sliding-mode denominator `T + 2Gv`.
pub const QSMC_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("net gap {net_gap} m is not positive (collision state)")]
    Collision { net_gap: f64 },
    #[error("sliding-mode denominator T + 2Gv = {denom:e} below guard")]
    DegeneratePolicy { denom: f64 },
}

/// What a controller sees of its predecessor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// Space headway including the leader length, m.
    pub gap: f64,
    pub speed: f64,
    pub leader_speed: f64,
    pub leader_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Unclamped time-gap correction `u` (VTG only).
    pub u_raw: f64,
    pub u_clamped: bool,
    pub fail_safe_active: bool,
    /// VTG ran its CTG fallback.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub accel_cmd: f64,
    pub time_gap_cmd: f64,
    pub diagnostics: Diagnostics,
}

impl ControlOutput {
    fn plain(accel_cmd: f64, time_gap_cmd: f64) -> Self {
        Self {
            accel_cmd,
            time_gap_cmd,
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Constant-time-gap law `k1(s − s0 − L − τv) + k2(v_l − v)`.
pub fn ctg_accel(p: &CtgParams, input: &ControlInput) -> ControlOutput {
    let spacing = input.gap - p.s0 - input.leader_length - p.tau * input.speed;
    ControlOutput::plain(p.k1 * spacing + p.k2 * (input.leader_speed - input.speed), p.tau)
}

/// Variable-time-gap law with a Riccati solution `riccati` valid at the
/// current leader speed. `None`, or a leader slower than [`V_FLOOR`],
/// selects the CTG fallback.
pub fn vtg_accel(p: &VtgParams, riccati: Option<&Mat<2, 2>>, input: &ControlInput) -> ControlOutput {
    let v_eq = input.leader_speed;
    let pm = match riccati {
        Some(pm) if v_eq >= V_FLOOR => pm,
        _ => {
            let mut out = ctg_accel(&p.ctg, input);
            out.diagnostics.fallback = true;
            return out;
        }
    };
    let c = &p.ctg;
    let x1 = input.gap - (c.s0 + input.leader_length + c.tau * v_eq);
    let x2 = input.speed - v_eq;
    let px2 = pm[(1, 0)] * x1 + pm[(1, 1)] * x2;
    // u = −R2⁻¹ g2ᵀ P x̃ with g2 = [0, −k1 (v_eq + ṽ)]ᵀ.
    let u = c.k1 * input.speed / (p.rho_u * p.rho_u) * px2;
    let (lo, hi) = p.tau_bounds;
    let tau = (c.tau + u).clamp(lo, hi);
    let spacing = input.gap - c.s0 - input.leader_length - tau * input.speed;
    ControlOutput {
        accel_cmd: c.k1 * spacing + c.k2 * (input.leader_speed - input.speed),
        time_gap_cmd: tau,
        diagnostics: Diagnostics {
            u_raw: u,
            u_clamped: tau != c.tau + u,
            ..Diagnostics::default()
        },
    }
}

/// Intelligent driver model on the net gap `s − L`.
pub fn idm_accel(p: &IdmParams, input: &ControlInput) -> Result<ControlOutput, ControlError> {
    let s = input.gap - input.leader_length;
    if !(s > 0.0) {
        return Err(ControlError::Collision { net_gap: s });
    }
    let v = input.speed;
    let dv = v - input.leader_speed;
    let s_star = p.s0 + v * p.tau + v * dv / (2.0 * sqrt(p.a_max * p.b));
    let ratio = s_star / s;
    let a = p.a_max * (1.0 - powf(v / p.v0, p.delta) - ratio * ratio);
    Ok(ControlOutput::plain(a, p.tau))
}

/// Quadratic-spacing sliding-mode law.
pub fn qsmc_accel(p: &QsmcParams, input: &ControlInput) -> Result<ControlOutput, ControlError> {
    let v = input.speed;
    let denom = p.t + 2.0 * p.g * v;
    if !(denom > QSMC_EPS) {
        return Err(ControlError::DegeneratePolicy { denom });
    }
    let s_des = input.leader_length + p.desired_net_gap(v);
    let a = (p.lambda * (input.gap - s_des) + (input.leader_speed - v)) / denom;
    let tau = if v > QSMC_EPS {
        (s_des - input.leader_length - p.a) / v
    } else {
        p.t
    };
    Ok(ControlOutput::plain(a, tau))
}

/// Kinematic deceleration demand `(v² − v_l²)/(2s)`.
pub fn braking_demand(input: &ControlInput) -> f64 {
    (input.speed * input.speed - input.leader_speed * input.leader_speed) / (2.0 * input.gap)
}

/// Emergency override: command `a_min` once the closing demand reaches `|a_min|`.
pub fn apply_fail_safe(a: &ActuationParams, input: &ControlInput, cmd: ControlOutput) -> ControlOutput {
    let fires = if input.gap > 0.0 {
        braking_demand(input) >= -a.a_min
    } else {
        input.speed > input.leader_speed
    };
    if !fires {
        return cmd;
    }
    let mut out = cmd;
    out.accel_cmd = a.a_min;
    out.diagnostics.fail_safe_active = true;
    out
}

/// Input dead-time followed by a first-order lag, discretized exactly
/// under zero-order hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuator {
    fifo: VecDeque<f64>,
    alpha: f64,
    accel: f64,
}

impl Actuator {
    pub fn new(p: &ActuationParams, dt: f64) -> Self {
        let slots = round(p.delay / dt).max(0.0) as usize;
        let mut fifo = VecDeque::with_capacity(slots + 1);
        fifo.extend(core::iter::repeat(0.0).take(slots));
        let alpha = if p.lag > 0.0 { 1.0 - exp(-dt / p.lag) } else { 1.0 };
        Self {
            fifo,
            alpha,
            accel: 0.0,
        }
    }

    /// Number of whole steps of dead-time.
    pub fn delay_steps(&self) -> usize {
        self.fifo.len()
    }

    /// Current realized acceleration.
    pub fn accel(&self) -> f64 {
        self.accel
    }

    /// Advances one step and returns the realized acceleration.
    pub fn step(&mut self, cmd: f64) -> f64 {
        let delayed = if self.fifo.is_empty() {
            cmd
        } else {
            self.fifo.push_back(cmd);
            self.fifo.pop_front().unwrap_or(0.0)
        };
        self.accel += self.alpha * (delayed - self.accel);
        self.accel
    }

    /// Overrides the realized acceleration (scripted perturbations).
    pub fn force(&mut self, accel: f64) {
        self.accel = accel;
    }
}

/// Controller families with their parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum ControllerSpec {
    Ctg(CtgParams),
    Vtg(VtgParams),
    Idm(IdmParams),
    Qsmc(QsmcParams),
}

impl ControllerSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            Self::Ctg(p) => p.validate(),
            Self::Vtg(p) => p.validate(),
            Self::Idm(p) => p.validate(),
            Self::Qsmc(p) => p.validate(),
        }
    }

    /// Equilibrium space headway (including `leader_length`) at `v_eq`.
    pub fn equilibrium_gap(&self, v_eq: f64, leader_length: f64) -> Result<f64, ParamError> {
        match self {
            Self::Ctg(p) => Ok(equilibrium_gap_ctg(p, v_eq, leader_length)),
            Self::Vtg(p) => Ok(equilibrium_gap_ctg(&p.ctg, v_eq, leader_length)),
            Self::Idm(p) => Ok(equilibrium_gap_idm(p, v_eq)? + leader_length),
            Self::Qsmc(p) => Ok(p.desired_net_gap(v_eq) + leader_length),
        }
    }
}

/// Where the VTG controller gets `P(v_eq)` from at run time.
#[derive(Debug, Clone)]
pub enum RiccatiSource {
    /// Interpolated table.
    Schedule(Arc<GainSchedule>),
    /// A fresh Riccati solve every call.
    Exact,
}

impl RiccatiSource {
    pub fn riccati(&self, p: &VtgParams, v_eq: f64) -> Option<Mat<2, 2>> {
        if !(v_eq >= V_FLOOR) {
            return None;
        }
        match self {
            Self::Schedule(s) => Some(s.lookup(v_eq)),
            Self::Exact => synthesize(p, v_eq).ok().map(|r| r.p),
        }
    }
}

/// A controller instance ready to produce commands.
#[derive(Debug, Clone)]
pub enum Controller {
    Ctg(CtgParams),
    Vtg { params: VtgParams, source: RiccatiSource },
    Idm(IdmParams),
    Qsmc(QsmcParams),
}

impl Controller {
    pub fn command(&self, input: &ControlInput) -> Result<ControlOutput, ControlError> {
        match self {
            Self::Ctg(p) => Ok(ctg_accel(p, input)),
            Self::Vtg { params, source } => {
                let pm = source.riccati(params, input.leader_speed);
                Ok(vtg_accel(params, pm.as_ref(), input))
            }
            Self::Idm(p) => idm_accel(p, input),
            Self::Qsmc(p) => qsmc_accel(p, input),
        }
    }
}
