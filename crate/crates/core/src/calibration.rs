//! Controller calibration against recorded trajectories and VTG penalty
//! tuning, both by differential evolution.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::controllers::ControllerSpec;
use crate::de::{minimize, DeConfig, DeError, Executor};
use crate::fmath::sqrt;
use crate::metrics::{safety_report, trajectory_energy, EnergyParams};
use crate::model::{ActuationParams, CtgParams, IdmParams, Trajectory};
use crate::sim::{run, EventKind, InitialState, Leader, LeaderProfile, RiccatiMode, Scenario, SimError, Topology, VehicleSpec};
use crate::stability::{default_width, extract_deviations_recorded, estimate_gain, OutputKind};
use crate::synthesis::synthesize;

/// Objective assigned to candidates that collide, blow up or are infeasible.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("series lengths differ ({sim} vs {obs})")]
    LengthMismatch { sim: usize, obs: usize },
    #[error("observed series is empty")]
    Empty,
    #[error("observed `{0}` series has zero energy; NRMSE is undefined")]
    ZeroEnergy(&'static str),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("calibration failed: every candidate was penalized (best objective {best})")]
    Failed { best: f64 },
    #[error(transparent)]
    De(#[from] DeError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Root-mean-square error normalised by the RMS of the observation.
pub fn nrmse(sim: &[f64], obs: &[f64]) -> Result<f64, CalibrationError> {
    if sim.len() != obs.len() {
        return Err(CalibrationError::LengthMismatch {
            sim: sim.len(),
            obs: obs.len(),
        });
    }
    if obs.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let n = obs.len() as f64;
    let num: f64 = sim.iter().zip(obs).map(|(s, o)| (s - o) * (s - o)).sum();
    let den: f64 = obs.iter().map(|o| o * o).sum();
    if den == 0.0 {
        return Err(CalibrationError::ZeroEnergy("obs"));
    }
    Ok(sqrt(num / n) / sqrt(den / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelKind {
    /// Parameters `(k1, k2, τ)`.
    Ctg,
    /// Parameters `(v0, τ, s0, a_max, b)`.
    Idm,
}

impl ModelKind {
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            Self::Ctg => &["k1", "k2", "tau"],
            Self::Idm => &["v0", "tau", "s0", "a_max", "b"],
        }
    }

    pub fn default_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Ctg => alloc::vec![(0.01, 2.0), (0.01, 2.0), (0.3, 3.0)],
            Self::Idm => alloc::vec![(10.0, 50.0), (0.3, 3.0), (0.5, 5.0), (0.3, 3.0), (0.3, 4.0)],
        }
    }
}

/// NRMSE weights `(γ_a, γ_v, γ_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Weights {
    pub accel: f64,
    pub speed: f64,
    pub gap: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            accel: 1.0,
            speed: 1.0,
            gap: 1.0,
        }
    }
}

/// One recorded leader/follower pair on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPair {
    /// Leader speed (and position, if known).
    pub leader: Trajectory,
    /// Observed follower speed, acceleration and gap.
    pub follower: Trajectory,
    pub leader_length: f64,
    pub follower_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub data: Vec<ObservedPair>,
    pub model: ModelKind,
    pub bounds: Vec<(f64, f64)>,
    pub weights: Weights,
    /// Standstill distance held fixed for CTG.
    pub s0: f64,
    /// Acceleration exponent held fixed for IDM.
    pub idm_delta: f64,
    pub de: DeConfig,
    pub fail_safe: bool,
}

impl CalibrationProblem {
    pub fn new(data: Vec<ObservedPair>, model: ModelKind, s0: f64) -> Self {
        Self {
            data,
            model,
            bounds: model.default_bounds(),
            weights: Weights::default(),
            s0,
            idm_delta: 4.0,
            de: DeConfig::default().with_size(30, 100),
            fail_safe: false,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let w = self.weights;
        if !(w.accel >= 0.0 && w.speed >= 0.0 && w.gap >= 0.0) || w.accel + w.speed + w.gap == 0.0 {
            return Err(CalibrationError::Invalid("weights must be >= 0 and not all zero".into()));
        }
        let names = self.model.parameter_names();
        if self.bounds.len() != names.len() {
            return Err(CalibrationError::Invalid(format!(
                "expected {} bounds, got {}",
                names.len(),
                self.bounds.len()
            )));
        }
        for (name, &(lo, hi)) in names.iter().zip(&self.bounds) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CalibrationError::Invalid(format!("bad bounds for {name}: [{lo}, {hi}]")));
            }
        }
        if self.data.is_empty() {
            return Err(CalibrationError::Empty);
        }
        for pair in &self.data {
            let f = &pair.follower;
            if f.len() < 2 || pair.leader.len() < f.len() {
                return Err(CalibrationError::Invalid("each pair needs >= 2 aligned samples".into()));
            }
            for (weight, series, name) in [(w.accel, &f.accel, "accel"), (w.speed, &f.speed, "speed"), (w.gap, &f.gap, "gap")] {
                if weight > 0.0 && series.iter().all(|v| *v == 0.0) {
                    return Err(CalibrationError::ZeroEnergy(name));
                }
            }
        }
        Ok(())
    }

    pub fn controller(&self, x: &[f64]) -> ControllerSpec {
        match self.model {
            ModelKind::Ctg => ControllerSpec::Ctg(CtgParams {
                k1: x[0],
                k2: x[1],
                tau: x[2],
                s0: self.s0,
            }),
            ModelKind::Idm => ControllerSpec::Idm(IdmParams {
                v0: x[0],
                tau: x[1],
                s0: x[2],
                a_max: x[3],
                b: x[4],
                delta: self.idm_delta,
            }),
        }
    }

    /// Closed-loop replay of `pair` with candidate parameters `x`.
    pub fn simulate(&self, x: &[f64], pair: &ObservedPair) -> Result<(Trajectory, bool), SimError> {
        let scenario = replay_scenario(self.controller(x), pair, self.fail_safe);
        let res = run(&scenario)?;
        let collided = res.collided();
        let tr = res.vehicles.into_iter().nth(1).map(|v| v.trajectory).unwrap_or_default();
        Ok((tr, collided))
    }

    /// Mean over pairs of the weighted NRMSE; [`PENALTY`] on failure.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for pair in &self.data {
            let (tr, collided) = match self.simulate(x, pair) {
                Ok(r) => r,
                Err(_) => return PENALTY,
            };
            if collided {
                return PENALTY;
            }
            let n = pair.follower.len();
            let w = self.weights;
            let mut cost = 0.0;
            for (weight, sim, obs) in [
                (w.accel, &tr.accel, &pair.follower.accel),
                (w.speed, &tr.speed, &pair.follower.speed),
                (w.gap, &tr.gap, &pair.follower.gap),
            ] {
                if weight > 0.0 {
                    match nrmse(&sim[..n], &obs[..n]) {
                        Ok(e) if e.is_finite() => cost += weight * e,
                        _ => return PENALTY,
                    }
                }
            }
            total += cost;
        }
        total / self.data.len() as f64
    }
}

/// Straight-road scenario replaying the recorded leader of `pair` with
/// one follower starting from its observed state.
pub fn replay_scenario(controller: ControllerSpec, pair: &ObservedPair, fail_safe: bool) -> Scenario {
    let f = &pair.follower;
    let mut leader = pair.leader.clone();
    leader.t0 = 0.0;
    let x0 = leader.position.first().copied().unwrap_or(0.0);
    Scenario {
        topology: Topology::Straight,
        dt: f.dt,
        duration: (f.len() - 1) as f64 * f.dt,
        leader: Some(Leader {
            length: pair.leader_length,
            profile: LeaderProfile::Recorded(leader),
            position: x0,
        }),
        vehicles: alloc::vec![VehicleSpec {
            length: pair.follower_length,
            controller,
            actuation: ActuationParams::default(),
            initial: InitialState {
                position: x0 - f.gap[0],
                speed: f.speed[0],
            },
        }],
        events: Vec::new(),
        riccati: RiccatiMode::default(),
        fail_safe,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub best_params: Vec<f64>,
    pub controller: ControllerSpec,
    pub objective: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

pub fn calibrate<E: Executor + ?Sized>(p: &CalibrationProblem, exec: &E) -> Result<CalibrationResult, CalibrationError> {
    p.validate()?;
    let f = |x: &[f64]| p.objective(x);
    let r = minimize(&f, &p.bounds, &p.de, exec)?;
    if !(r.best_value < PENALTY) {
        return Err(CalibrationError::Failed { best: r.best_value });
    }
    Ok(CalibrationResult {
        controller: p.controller(&r.best),
        best_params: r.best,
        objective: r.best_value,
        history: r.history,
        evaluations: r.evaluations,
    })
}

/// Penalty-weight tuning over `Ω = (ρ_s, ρ_v, ρ_u, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningProblem {
    /// Training scenario; every VTG vehicle receives the candidate weights.
    pub scenario: Scenario,
    pub lower: [f64; 4],
    pub upper: [f64; 4],
    pub de: DeConfig,
    pub ttc_threshold: f64,
    /// Equilibrium window for the gain estimate, s.
    pub window: f64,
    pub energy: EnergyParams,
    /// Divide TET by the horizon and E by the leader's index.
    pub normalize: bool,
    /// Toeplitz width; `⌊√N⌋` when absent.
    pub m: Option<usize>,
}

/// Default lower bound on ρ_u.
pub const RHO_U_MIN: f64 = 1e-3;

impl TuningProblem {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            lower: [0.0, 0.0, RHO_U_MIN, 0.0],
            upper: [1.0; 4],
            de: DeConfig::default(),
            ttc_threshold: 4.0,
            window: 60.0,
            energy: EnergyParams::default(),
            normalize: false,
            m: None,
        }
    }

    /// The training scenario with weights `omega` on every VTG vehicle.
    pub fn with_weights(&self, omega: &[f64]) -> Scenario {
        let mut s = self.scenario.clone();
        let apply = |spec: &mut ControllerSpec| {
            if let ControllerSpec::Vtg(p) = spec {
                p.rho_s = omega[0];
                p.rho_v = omega[1];
                p.rho_u = omega[2];
                p.gamma = omega[3];
            }
        };
        for v in s.vehicles.iter_mut() {
            apply(&mut v.controller);
        }
        for e in s.events.iter_mut() {
            if let EventKind::CutIn { vehicle, .. } = &mut e.kind {
                apply(&mut vehicle.controller);
            }
        }
        s
    }

    pub fn evaluate(&self, omega: &[f64]) -> TuningEvaluation {
        let penalized = |reason: &str| TuningEvaluation {
            omega: [omega[0], omega[1], omega[2], omega[3]],
            objective: PENALTY,
            followers: Vec::new(),
            penalty_reason: Some(String::from(reason)),
        };
        let s = self.with_weights(omega);
        let nominal = s.leader.as_ref().map_or(20.0, |l| l.profile.initial_speed()).max(crate::controllers::V_FLOOR);
        for v in &s.vehicles {
            if let ControllerSpec::Vtg(p) = &v.controller {
                if synthesize(p, nominal).is_err() {
                    return penalized("infeasible synthesis");
                }
            }
        }
        let res = match run(&s) {
            Ok(r) => r,
            Err(_) => return penalized("simulation error"),
        };
        if res.collided() {
            return penalized("collision");
        }
        let leader_energy = res
            .vehicle(0)
            .and_then(|l| trajectory_energy(&l.trajectory, &self.energy).energy_index);
        let mut followers = Vec::new();
        for v in &res.vehicles {
            let tr = &v.trajectory;
            if tr.lead_speed.iter().all(|x| x.is_nan()) {
                continue;
            }
            let dev = match extract_deviations_recorded(tr, self.window, OutputKind::Speed, None) {
                Ok(d) => d,
                Err(_) => return penalized("deviation extraction failed"),
            };
            let m = self.m.unwrap_or_else(|| default_width(dev.input.len()));
            let gamma_hat = match estimate_gain(&dev.input, &dev.output, m) {
                Ok(g) => g.gamma_hat,
                Err(_) => return penalized("gain estimate refused"),
            };
            let tet = match safety_report(tr, self.ttc_threshold) {
                Ok(r) => r.time_exposed_ttc,
                Err(_) => return penalized("bad TTC threshold"),
            };
            let energy = match trajectory_energy(tr, &self.energy).energy_index {
                Some(e) => e,
                None => return penalized("zero-distance trajectory"),
            };
            let (tet, energy) = if self.normalize {
                let horizon = tr.end_time() - tr.t0;
                (
                    if horizon > 0.0 { tet / horizon } else { tet },
                    leader_energy.map_or(energy, |le| energy / le),
                )
            } else {
                (tet, energy)
            };
            followers.push(FollowerBreakdown {
                id: v.id,
                gamma_hat,
                tet,
                energy,
            });
        }
        if followers.is_empty() {
            return penalized("no followers");
        }
        let objective = followers.iter().map(|f| f.gamma_hat + f.tet + f.energy).sum::<f64>() / followers.len() as f64;
        TuningEvaluation {
            omega: [omega[0], omega[1], omega[2], omega[3]],
            objective,
            followers,
            penalty_reason: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerBreakdown {
    pub id: usize,
    pub gamma_hat: f64,
    pub tet: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningEvaluation {
    pub omega: [f64; 4],
    pub objective: f64,
    pub followers: Vec<FollowerBreakdown>,
    pub penalty_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub omega_hat: [f64; 4],
    pub objective: f64,
    pub breakdown: TuningEvaluation,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

pub fn tune_penalties<E: Executor + ?Sized>(p: &TuningProblem, exec: &E) -> Result<TuningResult, CalibrationError> {
    for i in 0..4 {
        let (lo, hi) = (p.lower[i], p.upper[i]);
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(CalibrationError::Invalid(format!("bound {i} must lie within [0, 1]")));
        }
    }
    if !(p.lower[2] > 0.0) {
        return Err(CalibrationError::Invalid("rho_u lower bound must be > 0".into()));
    }
    let bounds: Vec<(f64, f64)> = (0..4).map(|i| (p.lower[i], p.upper[i])).collect();
    let f = |x: &[f64]| p.evaluate(x).objective;
    let r = minimize(&f, &bounds, &p.de, exec)?;
    let breakdown = p.evaluate(&r.best);
    Ok(TuningResult {
        omega_hat: breakdown.omega,
        objective: r.best_value,
        breakdown,
        history: r.history,
        evaluations: r.evaluations,
    })
}
