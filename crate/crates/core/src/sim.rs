//! Fixed-step platoon simulation on a straight road or a ring.
//!
//! Integration is semi-implicit Euler: `v⁺ = max(v + a·dt, 0)`, then
//! `x⁺ = x + v⁺·dt`. Vehicles carry stable ids. On a straight road id 0
//! is the kinematic leader and followers are numbered from 1; on a ring
//! every vehicle is controlled and vehicle 0 follows the last one.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllers::{
    apply_fail_safe, ControlError, ControlInput, Controller, ControllerSpec, RiccatiSource, V_FLOOR,
};
use crate::controllers::Actuator;
use crate::fmath::{abs, round, sin};
use crate::model::{flags, ActuationParams, ParamError, Trajectory, VtgParams};
use crate::synthesis::GainSchedule;

/// Minimum net gap on either side of an inserted vehicle, m.
pub const CUT_IN_GUARD: f64 = 0.5;
/// Default ramp rate of speed-step perturbations, m/s².
pub const DEFAULT_STEP_RATE: f64 = 2.0;
/// Default brake-pulse duration, s.
pub const DEFAULT_BRAKE_DURATION: f64 = 3.0;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("controller of vehicle {vehicle} failed at step {step}: {source}")]
    Control {
        step: usize,
        vehicle: usize,
        source: ControlError,
    },
    #[error("non-finite state of vehicle {vehicle} at step {step}")]
    NumericBlowup { step: usize, vehicle: usize },
}

fn invalid(msg: String) -> SimError {
    SimError::InvalidScenario(msg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Topology {
    Straight,
    Ring { length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialState {
    pub position: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleSpec {
    pub length: f64,
    pub controller: ControllerSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub actuation: ActuationParams,
    #[cfg_attr(feature = "serde", serde(default))]
    pub initial: InitialState,
}

/// Acceleration segment of a piecewise leader profile, active on
/// `[start, end)`: `accel + amplitude·sin(2π(t − start)/period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccelSegment {
    pub start: f64,
    pub end: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub accel: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub amplitude: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub period: f64,
}

impl AccelSegment {
    pub fn accel_at(&self, t: f64) -> f64 {
        if t + TIME_EPS < self.start || t + TIME_EPS >= self.end {
            return 0.0;
        }
        let wave = if self.amplitude != 0.0 && self.period > 0.0 {
            self.amplitude * sin(2.0 * core::f64::consts::PI * (t - self.start) / self.period)
        } else {
            0.0
        };
        self.accel + wave
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum LeaderProfile {
    /// Holds a reference speed; speed-step and brake events act on it.
    Constant { speed: f64 },
    Piecewise {
        initial_speed: f64,
        segments: Vec<AccelSegment>,
    },
    /// Replayed leader; its `dt` must equal the scenario's.
    Recorded(Trajectory),
}

impl LeaderProfile {
    pub fn initial_speed(&self) -> f64 {
        match self {
            Self::Constant { speed } => *speed,
            Self::Piecewise { initial_speed, .. } => *initial_speed,
            Self::Recorded(t) => t.speed.first().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Leader {
    pub length: f64,
    pub profile: LeaderProfile,
    #[cfg_attr(feature = "serde", serde(default))]
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum EventKind {
    /// Caps the vehicle's speed at `target`, ramping at `rate`.
    SpeedStep {
        target: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_rate"))]
        rate: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        vehicle: usize,
    },
    /// Forces `−decel` for `duration`.
    BrakePulse {
        decel: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_brake_duration"))]
        duration: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        vehicle: usize,
    },
    /// Inserts `vehicle` between the adjacent pair `(front, front's follower)`.
    CutIn {
        front: usize,
        speed: f64,
        vehicle: VehicleSpec,
    },
}

#[cfg(feature = "serde")]
fn default_rate() -> f64 {
    DEFAULT_STEP_RATE
}

#[cfg(feature = "serde")]
fn default_brake_duration() -> f64 {
    DEFAULT_BRAKE_DURATION
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub time: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: EventKind,
}

/// How VTG vehicles obtain `P(v_eq)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum RiccatiMode {
    Schedule { step: f64, max_speed: f64 },
    Exact,
}

impl Default for RiccatiMode {
    fn default() -> Self {
        Self::Schedule {
            step: 0.1,
            max_speed: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub topology: Topology,
    pub dt: f64,
    pub duration: f64,
    /// Required on a straight road, absent on a ring.
    #[cfg_attr(feature = "serde", serde(default))]
    pub leader: Option<Leader>,
    pub vehicles: Vec<VehicleSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub events: Vec<Event>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub riccati: RiccatiMode,
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub fail_safe: bool,
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl Scenario {
    /// Number of samples per full-length trajectory.
    pub fn steps(&self) -> usize {
        round(self.duration / self.dt) as usize + 1
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(invalid(format!("duration must be >= 0, got {}", self.duration)));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            v.controller.validate()?;
            v.actuation.validate()?;
            if !(v.length > 0.0) {
                return Err(invalid(format!("vehicle {i}: length must be > 0")));
            }
            if !(v.initial.speed >= 0.0) || !v.initial.position.is_finite() {
                return Err(invalid(format!("vehicle {i}: invalid initial state")));
            }
        }
        let followers = self.vehicles.len();
        let (n_ids, first_follower) = match (&self.topology, &self.leader) {
            (Topology::Straight, Some(l)) => {
                if !(l.length > 0.0) {
                    return Err(invalid("leader length must be > 0".into()));
                }
                if let LeaderProfile::Recorded(tr) = &l.profile {
                    if abs(tr.dt - self.dt) > 1e-9 {
                        return Err(invalid(format!("recorded leader dt {} differs from scenario dt {}", tr.dt, self.dt)));
                    }
                    if tr.len() < self.steps() {
                        return Err(invalid(format!(
                            "recorded leader has {} samples, scenario needs {}",
                            tr.len(),
                            self.steps()
                        )));
                    }
                }
                (followers + 1, 1)
            }
            (Topology::Straight, None) => return Err(invalid("straight road needs a leader".into())),
            (Topology::Ring { length }, None) => {
                if !(*length > 0.0) {
                    return Err(invalid("ring length must be > 0".into()));
                }
                if followers == 0 {
                    return Err(invalid("ring needs at least one vehicle".into()));
                }
                (followers, 0)
            }
            (Topology::Ring { .. }, Some(_)) => return Err(invalid("a ring has no kinematic leader".into())),
        };
        for e in &self.events {
            if !(e.time >= 0.0 && e.time <= self.duration + TIME_EPS) {
                return Err(invalid(format!("event time {} outside [0, {}]", e.time, self.duration)));
            }
            match &e.kind {
                EventKind::SpeedStep { target, rate, vehicle } => {
                    self.check_perturbed(*vehicle, n_ids, first_follower)?;
                    if !(*target >= 0.0) || !(*rate > 0.0) {
                        return Err(invalid("speed step needs target >= 0 and rate > 0".into()));
                    }
                }
                EventKind::BrakePulse { decel, duration, vehicle } => {
                    self.check_perturbed(*vehicle, n_ids, first_follower)?;
                    if !(*decel > 0.0) || !(*duration > 0.0) {
                        return Err(invalid("brake pulse needs decel > 0 and duration > 0".into()));
                    }
                }
                EventKind::CutIn { front, speed, vehicle } => {
                    if matches!(self.topology, Topology::Ring { .. }) {
                        return Err(invalid("cut-in is only supported on a straight road".into()));
                    }
                    vehicle.controller.validate()?;
                    vehicle.actuation.validate()?;
                    if !(vehicle.length > 0.0) || !(*speed >= 0.0) {
                        return Err(invalid("cut-in vehicle needs length > 0 and speed >= 0".into()));
                    }
                    let _ = front;
                }
            }
        }
        Ok(())
    }

    fn check_perturbed(&self, vehicle: usize, n_ids: usize, first_follower: usize) -> Result<(), SimError> {
        if vehicle >= n_ids {
            return Err(invalid(format!("event targets unknown vehicle {vehicle}")));
        }
        if vehicle < first_follower {
            if let Some(l) = &self.leader {
                if !matches!(l.profile, LeaderProfile::Constant { .. }) {
                    return Err(invalid("events on a recorded or piecewise leader are not supported".into()));
                }
            }
        }
        Ok(())
    }
}

/// Places every vehicle at its equilibrium gap behind its predecessor,
/// all at `v_eq`. On a ring the gaps must close the loop to 1e-6 m.
pub fn init_equilibrium(s: &Scenario, v_eq: f64) -> Result<Scenario, SimError> {
    let mut out = s.clone();
    match s.topology {
        Topology::Straight => {
            let leader = out
                .leader
                .as_mut()
                .ok_or_else(|| invalid("straight road needs a leader".into()))?;
            if let LeaderProfile::Constant { speed } = &mut leader.profile {
                *speed = v_eq;
            }
            if let LeaderProfile::Piecewise { initial_speed, .. } = &mut leader.profile {
                *initial_speed = v_eq;
            }
            let mut x = leader.position;
            let mut front_len = leader.length;
            for v in out.vehicles.iter_mut() {
                x -= v.controller.equilibrium_gap(v_eq, front_len)?;
                v.initial = InitialState { position: x, speed: v_eq };
                front_len = v.length;
            }
        }
        Topology::Ring { length } => {
            let n = out.vehicles.len();
            if n == 0 {
                return Err(invalid("ring needs at least one vehicle".into()));
            }
            let mut gaps = Vec::with_capacity(n);
            for i in 0..n {
                let front = if i == 0 { n - 1 } else { i - 1 };
                gaps.push(out.vehicles[i].controller.equilibrium_gap(v_eq, out.vehicles[front].length)?);
            }
            let total: f64 = gaps.iter().sum();
            if abs(total - length) > 1e-6 {
                return Err(invalid(format!(
                    "ring length {length} m inconsistent with equilibrium total {total} m (slack {} m per vehicle)",
                    (length - total) / n as f64
                )));
            }
            let mut x = 0.0;
            for i in 0..n {
                if i > 0 {
                    x -= gaps[i];
                }
                out.vehicles[i].initial = InitialState { position: x, speed: v_eq };
            }
        }
    }
    Ok(out)
}

/// Adds independent uniform `±amplitude` offsets to the initial speeds of
/// the controlled vehicles (clamped at 0).
pub fn perturb_initial_speeds(s: &Scenario, amplitude: f64, seed: u64) -> Scenario {
    let mut out = s.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.vehicles.iter_mut() {
        let dv: f64 = if amplitude > 0.0 {
            rng.random_range(-amplitude..=amplitude)
        } else {
            0.0
        };
        v.initial.speed = (v.initial.speed + dv).max(0.0);
    }
    out
}

/// Collision of `follower` into `leader` (stable ids).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    pub time: f64,
    pub follower: usize,
    pub leader: usize,
}

/// Recorded signals of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrace {
    pub id: usize,
    pub length: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub dt: f64,
    /// Ordered by id.
    pub vehicles: Vec<VehicleTrace>,
    /// Road order (front to back) at the end of the run.
    pub final_order: Vec<usize>,
    pub collisions: Vec<Collision>,
    pub clamp_events: usize,
    pub fail_safe_events: usize,
    pub synthesis_fallbacks: usize,
    pub rejected_cut_ins: usize,
}

impl SimResult {
    pub fn vehicle(&self, id: usize) -> Option<&VehicleTrace> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn collided(&self) -> bool {
        !self.collisions.is_empty()
    }
}

/// Placement of a vehicle between two others, if the guard allows it.
///
/// Returns the new front-bumper position: the midpoint of the bumper to
/// bumper free space, leaving `(free − length)/2` on each side.
pub fn insert_cut_in(front_position: f64, front_length: f64, rear_position: f64, length: f64) -> Option<f64> {
    let free = front_position - front_length - rear_position;
    let net = (free - length) / 2.0;
    if !(net > CUT_IN_GUARD) {
        return None;
    }
    Some(front_position - front_length - net)
}

#[derive(Debug, Clone, Copy, Default)]
struct Perturbation {
    cap: Option<(f64, f64)>,
    brake_until: f64,
    brake_decel: f64,
}

impl Perturbation {
    fn apply(&self, t: f64, v: f64, a: f64, dt: f64) -> (f64, bool) {
        if t + TIME_EPS < self.brake_until {
            return (-self.brake_decel, true);
        }
        if let Some((target, rate)) = self.cap {
            let track = ((target - v) / dt).clamp(-rate, rate);
            if track < a {
                return (track, true);
            }
        }
        (a, false)
    }
}

struct Agent {
    id: usize,
    length: f64,
    x: f64,
    v: f64,
    a: f64,
    controller: Option<Controller>,
    actuation: ActuationParams,
    actuator: Actuator,
    pert: Perturbation,
    frozen: bool,
    trace: Trajectory,
}

fn make_controller(
    spec: &ControllerSpec,
    mode: RiccatiMode,
    cache: &mut Vec<(VtgParams, Option<Arc<GainSchedule>>)>,
) -> Controller {
    match spec {
        ControllerSpec::Ctg(p) => Controller::Ctg(*p),
        ControllerSpec::Idm(p) => Controller::Idm(*p),
        ControllerSpec::Qsmc(p) => Controller::Qsmc(*p),
        ControllerSpec::Vtg(p) => {
            let source = match mode {
                RiccatiMode::Exact => RiccatiSource::Exact,
                RiccatiMode::Schedule { step, max_speed } => {
                    let sched = match cache.iter().find(|(q, _)| q == p) {
                        Some((_, s)) => s.clone(),
                        None => {
                            let s = match GainSchedule::uniform(p, V_FLOOR, max_speed.max(V_FLOOR), step) {
                                Ok(s) => Some(Arc::new(s)),
                                Err(e) => {
                                    log::debug!("gain schedule unavailable ({e}); solving per step");
                                    None
                                }
                            };
                            cache.push((*p, s.clone()));
                            s
                        }
                    };
                    sched.map_or(RiccatiSource::Exact, RiccatiSource::Schedule)
                }
            };
            Controller::Vtg { params: *p, source }
        }
    }
}

/// Runs a scenario to completion.
pub fn run(s: &Scenario) -> Result<SimResult, SimError> {
    s.validate()?;
    let dt = s.dt;
    let n = s.steps();
    let ring_length = match s.topology {
        Topology::Ring { length } => Some(length),
        Topology::Straight => None,
    };
    let mut cache = Vec::new();
    let mut agents: Vec<Agent> = Vec::with_capacity(s.vehicles.len() + 2);
    let leader_profile = s.leader.as_ref().map(|l| l.profile.clone());
    if let Some(l) = &s.leader {
        let x0 = match &l.profile {
            LeaderProfile::Recorded(tr) if !tr.position.is_empty() => tr.position[0],
            _ => l.position,
        };
        agents.push(Agent {
            id: 0,
            length: l.length,
            x: x0,
            v: l.profile.initial_speed(),
            a: 0.0,
            controller: None,
            actuation: ActuationParams::default(),
            actuator: Actuator::new(&ActuationParams::default(), dt),
            pert: Perturbation::default(),
            frozen: false,
            trace: Trajectory::with_capacity(dt, 0.0, n),
        });
    }
    for v in &s.vehicles {
        agents.push(Agent {
            id: agents.len(),
            length: v.length,
            x: v.initial.position,
            v: v.initial.speed,
            a: 0.0,
            controller: Some(make_controller(&v.controller, s.riccati, &mut cache)),
            actuation: v.actuation,
            actuator: Actuator::new(&v.actuation, dt),
            pert: Perturbation::default(),
            frozen: false,
            trace: Trajectory::with_capacity(dt, 0.0, n),
        });
    }
    // Road order as indices into `agents`, front to back.
    let mut order: Vec<usize> = (0..agents.len()).collect();
    let mut leader_ref = leader_profile.as_ref().map(|p| (p.initial_speed(), DEFAULT_STEP_RATE));

    let mut events: Vec<&Event> = s.events.iter().collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_event = 0;

    let mut res = SimResult {
        dt,
        vehicles: Vec::new(),
        final_order: Vec::new(),
        collisions: Vec::new(),
        clamp_events: 0,
        fail_safe_events: 0,
        synthesis_fallbacks: 0,
        rejected_cut_ins: 0,
    };

    let gap_of = |agents: &[Agent], order: &[usize], pos: usize| -> Option<(usize, f64)> {
        let me = order[pos];
        if pos == 0 {
            let l = ring_length?;
            let front = order[order.len() - 1];
            return Some((front, agents[front].x - agents[me].x + l));
        }
        let front = order[pos - 1];
        Some((front, agents[front].x - agents[me].x))
    };

    // Initial overlap is a configuration error, not a collision.
    for pos in 0..order.len() {
        if let Some((front, gap)) = gap_of(&agents, &order, pos) {
            if ring_length.is_some() && order.len() == 1 {
                continue;
            }
            if !(gap - agents[front].length > 0.0) {
                return Err(invalid(format!(
                    "vehicle {} starts overlapping vehicle {}",
                    agents[order[pos]].id, agents[front].id
                )));
            }
        }
    }

    let mut accels = Vec::with_capacity(agents.len());
    let mut taus = Vec::with_capacity(agents.len());
    let mut fl = Vec::with_capacity(agents.len());
    for k in 0..n {
        let t = k as f64 * dt;
        while next_event < events.len() && events[next_event].time <= t + TIME_EPS {
            let e = events[next_event];
            next_event += 1;
            match &e.kind {
                EventKind::SpeedStep { target, rate, vehicle } => {
                    if agents[*vehicle].controller.is_none() {
                        leader_ref = Some((*target, *rate));
                    } else {
                        agents[*vehicle].pert.cap = Some((*target, *rate));
                    }
                }
                EventKind::BrakePulse { decel, duration, vehicle } => {
                    let p = &mut agents[*vehicle].pert;
                    p.brake_until = e.time + duration;
                    p.brake_decel = *decel;
                }
                EventKind::CutIn { front, speed, vehicle } => {
                    let pos = order.iter().position(|&i| agents[i].id == *front);
                    let placed = pos.and_then(|p| {
                        let f = &agents[order[p]];
                        let rear_x = order.get(p + 1).map(|&r| agents[r].x);
                        match rear_x {
                            Some(rx) => insert_cut_in(f.x, f.length, rx, vehicle.length).map(|x| (p, x)),
                            None => None,
                        }
                    });
                    match placed {
                        Some((p, x)) => {
                            let id = agents.len();
                            agents.push(Agent {
                                id,
                                length: vehicle.length,
                                x,
                                v: *speed,
                                a: 0.0,
                                controller: Some(make_controller(&vehicle.controller, s.riccati, &mut cache)),
                                actuation: vehicle.actuation,
                                actuator: Actuator::new(&vehicle.actuation, dt),
                                pert: Perturbation::default(),
                                frozen: false,
                                trace: Trajectory::with_capacity(dt, t, n - k),
                            });
                            order.insert(p + 1, id);
                        }
                        None => {
                            log::warn!("cut-in behind vehicle {front} at t = {t} rejected");
                            res.rejected_cut_ins += 1;
                        }
                    }
                }
            }
        }

        accels.clear();
        taus.clear();
        fl.clear();
        for pos in 0..order.len() {
            let i = order[pos];
            let ag = &agents[i];
            let mut f = 0u8;
            if ag.frozen {
                accels.push(0.0);
                taus.push(f64::NAN);
                fl.push(flags::COLLIDED);
                continue;
            }
            let (a, tau) = match &ag.controller {
                None => {
                    let a = leader_accel(leader_profile.as_ref(), leader_ref, &ag.pert, t, k, ag.v, dt);
                    if a.1 {
                        f |= flags::PERTURBED;
                    }
                    (a.0, f64::NAN)
                }
                Some(ctrl) => {
                    let (front, gap) = gap_of(&agents, &order, pos).ok_or_else(|| invalid("follower without predecessor".into()))?;
                    let input = ControlInput {
                        gap,
                        speed: ag.v,
                        leader_speed: agents[front].v,
                        leader_length: agents[front].length,
                    };
                    let mut out = ctrl.command(&input).map_err(|source| SimError::Control {
                        step: k,
                        vehicle: ag.id,
                        source,
                    })?;
                    if s.fail_safe {
                        out = apply_fail_safe(&ag.actuation, &input, out);
                    }
                    let d = out.diagnostics;
                    if d.u_clamped {
                        f |= flags::TAU_CLAMPED;
                        res.clamp_events += 1;
                    }
                    if d.fail_safe_active {
                        f |= flags::FAIL_SAFE;
                        res.fail_safe_events += 1;
                    }
                    if d.fallback {
                        f |= flags::FALLBACK;
                        res.synthesis_fallbacks += 1;
                    }
                    let realized = agents[i].actuator.step(out.accel_cmd);
                    let (a, perturbed) = agents[i].pert.apply(t, agents[i].v, realized, dt);
                    if perturbed {
                        f |= flags::PERTURBED;
                        agents[i].actuator.force(a);
                    }
                    (a, out.time_gap_cmd)
                }
            };
            accels.push(a);
            taus.push(tau);
            fl.push(f);
        }

        for pos in 0..order.len() {
            let i = order[pos];
            let (gap, lead) = match gap_of(&agents, &order, pos) {
                Some((front, gap)) => (gap, agents[front].v),
                None => (f64::NAN, f64::NAN),
            };
            let (x, v) = (agents[i].x, agents[i].v);
            let ag = &mut agents[i];
            ag.a = accels[pos];
            ag.trace.push(x, v, accels[pos], gap, taus[pos], lead, fl[pos]);
        }

        if k + 1 == n {
            break;
        }

        for pos in 0..order.len() {
            let i = order[pos];
            let ag = &mut agents[i];
            if ag.frozen {
                continue;
            }
            if ag.controller.is_none() {
                if let Some(LeaderProfile::Recorded(tr)) = leader_profile.as_ref() {
                    ag.v = tr.speed[k + 1];
                    ag.x = if tr.position.is_empty() { ag.x + ag.v * dt } else { tr.position[k + 1] };
                    continue;
                }
            }
            ag.v = (ag.v + ag.a * dt).max(0.0);
            ag.x += ag.v * dt;
            if !ag.v.is_finite() || !ag.x.is_finite() {
                return Err(SimError::NumericBlowup { step: k, vehicle: ag.id });
            }
        }

        let t_next = (k + 1) as f64 * dt;
        for pos in 0..order.len() {
            let i = order[pos];
            if agents[i].frozen || agents[i].controller.is_none() {
                continue;
            }
            if let Some((front, gap)) = gap_of(&agents, &order, pos) {
                if front != i && gap - agents[front].length <= 0.0 {
                    let ag = &mut agents[i];
                    ag.frozen = true;
                    ag.v = 0.0;
                    ag.a = 0.0;
                    res.collisions.push(Collision {
                        time: t_next,
                        follower: ag.id,
                        leader: agents[front].id,
                    });
                }
            }
        }
    }

    res.final_order = order.iter().map(|&i| agents[i].id).collect();
    res.vehicles = agents
        .into_iter()
        .map(|a| VehicleTrace {
            id: a.id,
            length: a.length,
            trajectory: a.trace,
        })
        .collect();
    Ok(res)
}

/// Kinematic leader acceleration at step `k`; the flag marks a brake pulse.
fn leader_accel(
    profile: Option<&LeaderProfile>,
    reference: Option<(f64, f64)>,
    pert: &Perturbation,
    t: f64,
    k: usize,
    v: f64,
    dt: f64,
) -> (f64, bool) {
    if t + TIME_EPS < pert.brake_until {
        return (-pert.brake_decel, true);
    }
    match profile {
        Some(LeaderProfile::Constant { .. }) => {
            let (target, rate) = reference.unwrap_or((v, DEFAULT_STEP_RATE));
            (((target - v) / dt).clamp(-rate, rate), false)
        }
        Some(LeaderProfile::Piecewise { segments, .. }) => (segments.iter().map(|s| s.accel_at(t)).sum(), false),
        Some(LeaderProfile::Recorded(tr)) => {
            let a = match tr.accel.get(k) {
                Some(a) => *a,
                _ => tr.speed.get(k + 1).map_or(0.0, |next| (next - tr.speed[k]) / dt),
            };
            (a, false)
        }
        None => (0.0, false),
    }
}
