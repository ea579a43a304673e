//! Safety, energy and step-response indices.

use alloc::vec::Vec;

use crate::fmath::{abs, sin};
use crate::model::Trajectory;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectories are not aligned: {0}")]
    Misaligned(&'static str),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("step magnitude is zero")]
    ZeroStep,
}

/// Time to collision `s / (v − v_l)`, defined only while closing in.
pub fn ttc(gap: f64, speed: f64, leader_speed: f64) -> Option<f64> {
    let closing = speed - leader_speed;
    (closing > 0.0 && gap.is_finite()).then(|| gap / closing)
}

/// Deceleration rate to avoid a crash, `(v − v_l)² / (2s)` while closing in.
pub fn drac(gap: f64, speed: f64, leader_speed: f64) -> f64 {
    let closing = speed - leader_speed;
    if closing > 0.0 && gap > 0.0 {
        closing * closing / (2.0 * gap)
    } else {
        0.0
    }
}

/// Index offset of `follower` into `leader` and the overlap length.
fn align(follower: &Trajectory, leader: &Trajectory) -> Result<(usize, usize), MetricsError> {
    if abs(follower.dt - leader.dt) > 1e-9 {
        return Err(MetricsError::Misaligned("different sample intervals"));
    }
    let shift = (follower.t0 - leader.t0) / leader.dt;
    let offset = libm::round(shift);
    if abs(shift - offset) > 1e-6 || offset < 0.0 {
        return Err(MetricsError::Misaligned("follower does not start on the leader's sample grid"));
    }
    let offset = offset as usize;
    let n = follower.len().min(leader.len().saturating_sub(offset));
    Ok((offset, n))
}

/// TTC per follower sample against an explicit leader trajectory.
pub fn ttc_series(follower: &Trajectory, leader: &Trajectory) -> Result<Vec<Option<f64>>, MetricsError> {
    let (off, n) = align(follower, leader)?;
    Ok((0..n)
        .map(|k| {
            let gap = leader.position[off + k] - follower.position[k];
            ttc(gap, follower.speed[k], leader.speed[off + k])
        })
        .collect())
}

/// TTC per sample from the follower's own gap and predecessor-speed columns.
pub fn ttc_series_recorded(follower: &Trajectory) -> Vec<Option<f64>> {
    (0..follower.len())
        .map(|k| ttc(follower.gap[k], follower.speed[k], follower.lead_speed[k]))
        .collect()
}

/// DRAC per follower sample against an explicit leader trajectory.
pub fn drac_series(follower: &Trajectory, leader: &Trajectory) -> Result<Vec<f64>, MetricsError> {
    let (off, n) = align(follower, leader)?;
    Ok((0..n)
        .map(|k| {
            let gap = leader.position[off + k] - follower.position[k];
            drac(gap, follower.speed[k], leader.speed[off + k])
        })
        .collect())
}

pub fn drac_series_recorded(follower: &Trajectory) -> Vec<f64> {
    (0..follower.len())
        .map(|k| drac(follower.gap[k], follower.speed[k], follower.lead_speed[k]))
        .collect()
}

/// `dt` times the number of samples with `0 < TTC < threshold`.
pub fn time_exposed_ttc(series: &[Option<f64>], threshold: f64, dt: f64) -> Result<f64, MetricsError> {
    if !(threshold > 0.0) {
        return Err(MetricsError::BadThreshold(threshold));
    }
    let count = series
        .iter()
        .filter(|t| matches!(t, Some(v) if *v > 0.0 && *v < threshold))
        .count();
    Ok(dt * count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyReport {
    /// Absent when TTC is undefined at every sample.
    pub min_ttc: Option<f64>,
    pub time_exposed_ttc: f64,
    pub max_drac: f64,
    pub ttc_threshold: f64,
}

/// Safety indices of one follower from its recorded gap and predecessor speed.
pub fn safety_report(follower: &Trajectory, ttc_threshold: f64) -> Result<SafetyReport, MetricsError> {
    let series = ttc_series_recorded(follower);
    let min_ttc = series.iter().flatten().copied().reduce(f64::min);
    Ok(SafetyReport {
        min_ttc,
        time_exposed_ttc: time_exposed_ttc(&series, ttc_threshold, follower.dt)?,
        max_drac: drac_series_recorded(follower).into_iter().fold(0.0, f64::max),
        ttc_threshold,
    })
}

/// Road-load constants of the tractive power model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyParams {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub mass: f64,
    /// Road angle, rad.
    pub grade: f64,
    pub g: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            f0: 213.0,
            f1: 0.0861,
            f2: 0.0027,
            mass: 1500.0,
            grade: 0.0,
            g: 9.81,
        }
    }
}

/// Tractive power in kW, clipped at zero.
pub fn tractive_power(v: f64, a: f64, p: &EnergyParams) -> f64 {
    let force = p.f0 + p.f1 * v + p.f2 * v * v + 1.03 * p.mass * a + p.mass * p.g * sin(p.grade);
    (1e-3 * v * force).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub power: Vec<f64>,
    /// `∫P / (0.036 ∫v)`; absent for a zero-distance trajectory.
    pub energy_index: Option<f64>,
}

fn trapezoid(y: &[f64], dt: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    dt * (inner + 0.5 * (y[0] + y[y.len() - 1]))
}

pub fn tractive_energy(speed: &[f64], accel: &[f64], dt: f64, p: &EnergyParams) -> EnergyReport {
    let power: Vec<f64> = speed.iter().zip(accel).map(|(&v, &a)| tractive_power(v, a, p)).collect();
    let distance = trapezoid(speed, dt);
    let energy_index = (distance > 0.0).then(|| trapezoid(&power, dt) / (0.036 * distance));
    EnergyReport { power, energy_index }
}

pub fn trajectory_energy(tr: &Trajectory, p: &EnergyParams) -> EnergyReport {
    tractive_energy(&tr.speed, &tr.accel, tr.dt, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponse {
    pub rise_time: Option<f64>,
    pub settling_time: Option<f64>,
}

/// Rise (10 % to 90 %) and settling (±1 % of the step) times of a speed
/// response whose first sample is the step instant. Crossings are located
/// by linear interpolation between samples.
pub fn step_response_times(speed: &[f64], v_start: f64, v_final: f64, dt: f64) -> Result<StepResponse, MetricsError> {
    let delta = v_final - v_start;
    if delta == 0.0 {
        return Err(MetricsError::ZeroStep);
    }
    let y: Vec<f64> = speed.iter().map(|v| (v - v_start) / delta).collect();
    let crossing = |level: f64| -> Option<f64> {
        let k = y.iter().position(|&v| v >= level)?;
        if k == 0 {
            return Some(0.0);
        }
        let (a, b) = (y[k - 1], y[k]);
        Some(dt * ((k - 1) as f64 + (level - a) / (b - a)))
    };
    let rise_time = match (crossing(0.1), crossing(0.9)) {
        (Some(t10), Some(t90)) => Some(t90 - t10),
        _ => None,
    };

    let band = 0.01;
    let err: Vec<f64> = y.iter().map(|v| v - 1.0).collect();
    let settling_time = match err.iter().rposition(|e| abs(*e) > band) {
        None => Some(0.0),
        Some(k) if k + 1 == err.len() => None,
        Some(k) => {
            let edge = if err[k] > 0.0 { band } else { -band };
            let (a, b) = (err[k], err[k + 1]);
            Some(dt * (k as f64 + (edge - a) / (b - a)))
        }
    };
    Ok(StepResponse {
        rise_time,
        settling_time,
    })
}
