//! Data-driven L2-gain estimation from input/output records.
//!
//! With `T_m(s)` the zero-padded Toeplitz matrix of `m` down-shifted
//! copies of `s`, the Grams `U = T_mᵀ(u)T_m(u)/N` and `Y = T_mᵀ(y)T_m(y)/N`
//! give `γ̂² = λ_max(Y, U)`, the smallest γ² with `Y − γ²U ⪯ 0`.

use alloc::vec::Vec;

use crate::fmath::{abs, floor, sqrt};
use crate::linalg::{cholesky, solve_lower, symmetric_eigenvalues, DMatrix, LinalgError};
use crate::model::Trajectory;

/// Condition number of `U` above which a ridge is added.
pub const MAX_INPUT_COND: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error("window width m = {m} must satisfy 1 <= m < {n}")]
    BadWidth { m: usize, n: usize },
    #[error("input and output lengths differ ({input} vs {output})")]
    LengthMismatch { input: usize, output: usize },
    #[error("misaligned sampling: {0}")]
    Misaligned(&'static str),
    #[error("input is not persistently excited (rank {rank} of {m}, min eig {min_eig:e})")]
    NotExcited { rank: usize, m: usize, min_eig: f64 },
    #[error("window length must be a positive multiple of dt")]
    BadWindow,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OutputKind {
    Speed,
    Gap,
}

/// Spacing policy used to define gap deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalPolicy {
    pub s0: f64,
    pub leader_length: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSignals {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub dt: f64,
    /// Equilibrium speed of each window.
    pub v_eq: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Deviations about per-window median leader speeds.
///
/// `leader_speed`, `speed` and `gap` are aligned sample by sample; `gap`
/// is only read for [`OutputKind::Gap`].
pub fn deviations(
    leader_speed: &[f64],
    speed: &[f64],
    gap: Option<&[f64]>,
    dt: f64,
    window: f64,
    kind: OutputKind,
    policy: Option<NominalPolicy>,
) -> Result<DeviationSignals, StabilityError> {
    if leader_speed.len() != speed.len() {
        return Err(StabilityError::LengthMismatch {
            input: leader_speed.len(),
            output: speed.len(),
        });
    }
    let w = libm::round(window / dt);
    if !(w >= 1.0) || abs(w * dt - window) > 1e-6 * window.max(1.0) {
        return Err(StabilityError::BadWindow);
    }
    let w = w as usize;
    let n = leader_speed.len();
    let mut input = Vec::with_capacity(n);
    let mut output = Vec::with_capacity(n);
    let mut v_eq = Vec::new();
    let mut scratch = Vec::with_capacity(w);
    for start in (0..n).step_by(w) {
        let end = (start + w).min(n);
        scratch.clear();
        scratch.extend_from_slice(&leader_speed[start..end]);
        let ve = median(&mut scratch);
        v_eq.push(ve);
        for k in start..end {
            input.push(leader_speed[k] - ve);
            let y = match kind {
                OutputKind::Speed => speed[k] - ve,
                OutputKind::Gap => {
                    let g = gap.ok_or(StabilityError::Misaligned("gap output requested without a gap series"))?;
                    let p = policy.ok_or(StabilityError::Misaligned("gap output requested without a nominal policy"))?;
                    g[k] - (p.s0 + p.leader_length + p.tau * ve)
                }
            };
            output.push(y);
        }
    }
    Ok(DeviationSignals { input, output, dt, v_eq })
}

/// Deviations of `follower` driven by `leader`, both on one time grid.
pub fn extract_deviations(
    leader: &Trajectory,
    follower: &Trajectory,
    window: f64,
    kind: OutputKind,
    policy: Option<NominalPolicy>,
) -> Result<DeviationSignals, StabilityError> {
    if abs(leader.dt - follower.dt) > 1e-9 {
        return Err(StabilityError::Misaligned("different sample intervals"));
    }
    let shift = (follower.t0 - leader.t0) / leader.dt;
    let off = libm::round(shift);
    if abs(shift - off) > 1e-6 || off < 0.0 {
        return Err(StabilityError::Misaligned("follower samples fall between leader samples"));
    }
    let off = off as usize;
    let n = follower.len().min(leader.len().saturating_sub(off));
    deviations(
        &leader.speed[off..off + n],
        &follower.speed[..n],
        Some(&follower.gap[..n]),
        follower.dt,
        window,
        kind,
        policy,
    )
}

/// Deviations using the follower's recorded predecessor-speed column.
pub fn extract_deviations_recorded(
    follower: &Trajectory,
    window: f64,
    kind: OutputKind,
    policy: Option<NominalPolicy>,
) -> Result<DeviationSignals, StabilityError> {
    deviations(&follower.lead_speed, &follower.speed, Some(&follower.gap), follower.dt, window, kind, policy)
}

/// `(N + m − 1) × m` zero-padded Toeplitz matrix.
pub fn toeplitz(signal: &[f64], m: usize) -> Result<DMatrix, StabilityError> {
    let n = signal.len();
    if m == 0 || m >= n {
        return Err(StabilityError::BadWidth { m, n });
    }
    Ok(DMatrix::from_fn(n + m - 1, m, |r, c| {
        if r >= c && r - c < n {
            signal[r - c]
        } else {
            0.0
        }
    }))
}

/// `T_mᵀT_m / N` through the autocorrelation `(1/N) Σ s(t) s(t+k)`.
pub fn toeplitz_gram(signal: &[f64], m: usize) -> Result<DMatrix, StabilityError> {
    let n = signal.len();
    if m == 0 || m >= n {
        return Err(StabilityError::BadWidth { m, n });
    }
    let r: Vec<f64> = (0..m)
        .map(|lag| signal[..n - lag].iter().zip(&signal[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect();
    Ok(DMatrix::from_fn(m, m, |i, j| r[i.abs_diff(j)]))
}

/// Gram of the `N − m + 1` fully populated rows, normalised by their count.
///
/// Unlike the zero-padded Gram this has the rank of the signal's
/// stationary autocorrelation (1 for a constant, 2 for a sinusoid).
pub fn excitation_gram(signal: &[f64], m: usize) -> Result<DMatrix, StabilityError> {
    let n = signal.len();
    if m == 0 || m >= n {
        return Err(StabilityError::BadWidth { m, n });
    }
    let rows = n - m + 1;
    // Entry (i, j) sums s[a + r]·s[b + r] over the rows with a = m−1−i,
    // b = m−1−j; stepping down a diagonal slides both windows by one.
    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        let (a, b) = (m - 1, m - 1 - j);
        let mut acc: f64 = (0..rows).map(|r| signal[a + r] * signal[b + r]).sum();
        g[(0, j)] = acc;
        for step in 1..(m - j) {
            let (a, b) = (a - step, b - step);
            acc += signal[a] * signal[b] - signal[a + rows] * signal[b + rows];
            g[(step, j + step)] = acc;
        }
    }
    let scale = 1.0 / rows as f64;
    for i in 0..m {
        for j in i..m {
            let v = g[(i, j)] * scale;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationReport {
    pub persistently_excited: bool,
    pub numeric_rank: usize,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Numeric rank with threshold `m·λ_max·1e-12`.
pub fn check_excitation(gram: &DMatrix) -> Result<ExcitationReport, StabilityError> {
    let m = gram.rows();
    let values = symmetric_eigenvalues(gram)?;
    let max_eig = values.last().copied().unwrap_or(0.0);
    let min_eig = values.first().copied().unwrap_or(0.0);
    let eps = m as f64 * max_eig * 1e-12;
    let numeric_rank = values.iter().filter(|&&l| l > eps).count();
    Ok(ExcitationReport {
        persistently_excited: numeric_rank == m && max_eig > 0.0,
        numeric_rank,
        min_eig,
        max_eig,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    pub gamma_hat: f64,
    pub m: usize,
    pub n_d: usize,
    /// Smallest eigenvalue of the padded input Gram.
    pub min_eig_input_gram: f64,
    pub persistently_excited: bool,
    /// Ridge added to the input Gram, if any.
    pub ridge: Option<f64>,
}

/// Default width `⌊√N⌋`.
pub fn default_width(n: usize) -> usize {
    floor(sqrt(n as f64)) as usize
}

/// L2-gain estimate of the map `input → output`.
pub fn estimate_gain(input: &[f64], output: &[f64], m: usize) -> Result<GainEstimate, StabilityError> {
    if input.len() != output.len() {
        return Err(StabilityError::LengthMismatch {
            input: input.len(),
            output: output.len(),
        });
    }
    let n = input.len();
    let exc = check_excitation(&excitation_gram(input, m)?)?;
    if !exc.persistently_excited {
        return Err(StabilityError::NotExcited {
            rank: exc.numeric_rank,
            m,
            min_eig: exc.min_eig,
        });
    }
    let mut u = toeplitz_gram(input, m)?;
    let y = toeplitz_gram(output, m)?;
    let ue = symmetric_eigenvalues(&u)?;
    let lo = ue[0];
    let hi = ue[m - 1];
    let mut ridge = None;
    if !(lo > 0.0) || hi / lo > MAX_INPUT_COND {
        let delta = 1e-10 * u.trace() / m as f64;
        for i in 0..m {
            u[(i, i)] += delta;
        }
        ridge = Some(delta);
    }
    let l = cholesky(&u)?;
    let z = solve_lower(&l, &y)?;
    let w = solve_lower(&l, &z.transpose())?;
    let sym = DMatrix::from_fn(m, m, |i, j| 0.5 * (w[(i, j)] + w[(j, i)]));
    let top = symmetric_eigenvalues(&sym)?.last().copied().unwrap_or(0.0);
    Ok(GainEstimate {
        gamma_hat: sqrt(top.max(0.0)),
        m,
        n_d: n,
        min_eig_input_gram: lo,
        persistently_excited: true,
        ridge,
    })
}

/// Estimate on extracted deviations with the default width.
pub fn estimate_deviation_gain(d: &DeviationSignals, m: Option<usize>) -> Result<GainEstimate, StabilityError> {
    let m = m.unwrap_or_else(|| default_width(d.input.len()));
    estimate_gain(&d.input, &d.output, m)
}
