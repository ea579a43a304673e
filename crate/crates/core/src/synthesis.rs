//! H∞ state-feedback synthesis for the variable-time-gap controller.
//!
//! The deviation dynamics `x = [s̃, ṽ]` are linearized around a leader
//! speed `v_eq`; the disturbance is the leader speed deviation and the
//! control is the time-gap correction `u`. The stabilizing solution of
//!
//! `PA + AᵀP + P(B1B1ᵀ/γ² − B2B2ᵀ/R2)P + CᵀC = 0`
//!
//! is read off the stable invariant subspace of the 4×4 Hamiltonian.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::fmath::{abs, sqrt};
use crate::linalg::{eigenvalues, null_vector, DMatrix, LinalgError, Mat};
use crate::model::VtgParams;

/// Condition-number limit on the subspace basis block `X1`.
pub const MAX_BASIS_COND: f64 = 1e12;
/// Lower limit on accepted eigenvalues of `P`.
pub const MIN_EIG_TOL: f64 = -1e-10;
/// Relative residual tolerance for an accepted solution.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("operating point v_eq = {v_eq} m/s is not admissible (need v_eq > 0)")]
    InfeasibleOperatingPoint { v_eq: f64 },
    #[error("gamma = {gamma} is infeasible: Hamiltonian has eigenvalues on the imaginary axis (min |Re| = {min_abs_re:e})")]
    InfeasibleGamma { gamma: f64, min_abs_re: f64 },
    #[error("stable subspace is degenerate (cond(X1) = {cond:e})")]
    DegenerateSubspace { cond: f64 },
    #[error("Riccati solution is indefinite (min eig {min_eig:e})")]
    IndefiniteSolution { min_eig: f64 },
    #[error("Riccati residual {residual:e} exceeds tolerance {tolerance:e}")]
    Inaccurate { residual: f64, tolerance: f64 },
    #[error("infeasible gain-schedule grid points: {speeds:?}")]
    InfeasibleGrid { speeds: Vec<f64> },
    #[error("invalid gain-schedule grid: {0}")]
    InvalidGrid(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Linearized deviation dynamics at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedPlant {
    pub a: Mat<2, 2>,
    pub b1: Mat<2, 1>,
    pub b2: Mat<2, 1>,
    pub c: Mat<3, 2>,
    pub r2: f64,
}

impl LinearizedPlant {
    /// `B1B1ᵀ/γ² − B2B2ᵀ/R2`.
    pub fn coupling(&self, gamma: f64) -> Mat<2, 2> {
        (self.b1 * self.b1.transpose()).scale(1.0 / (gamma * gamma))
            - (self.b2 * self.b2.transpose()).scale(1.0 / self.r2)
    }

    pub fn ctc(&self) -> Mat<2, 2> {
        self.c.transpose() * self.c
    }

    /// State feedback `K = R2⁻¹ B2ᵀ P`, so that `u = −K x`.
    pub fn feedback_gain(&self, p: &Mat<2, 2>) -> Mat<1, 2> {
        (self.b2.transpose() * *p).scale(1.0 / self.r2)
    }

    /// Riccati residual `PA + AᵀP + P S P + CᵀC`.
    pub fn care_residual(&self, gamma: f64, p: &Mat<2, 2>) -> Mat<2, 2> {
        let s = self.coupling(gamma);
        *p * self.a + self.a.transpose() * *p + *p * s * *p + self.ctc()
    }

    /// Hamiltonian `[[A, S], [−CᵀC, −Aᵀ]]`.
    pub fn hamiltonian(&self, gamma: f64) -> DMatrix {
        let s = self.coupling(gamma);
        let q = self.ctc();
        DMatrix::from_fn(4, 4, |i, j| match (i < 2, j < 2) {
            (true, true) => self.a[(i, j)],
            (true, false) => s[(i, j - 2)],
            (false, true) => -q[(i - 2, j)],
            (false, false) => -self.a[(j - 2, i - 2)],
        })
    }

    /// Largest singular value of the closed-loop `w → z` response at `ω`
    /// under `u = −Kx`, with `z = [ρs s̃, ρv ṽ, ρu u]`.
    pub fn closed_loop_gain_at(&self, p: &Mat<2, 2>, omega: f64) -> f64 {
        let k = self.feedback_gain(p);
        let acl = self.a - self.b2 * k;
        let rho_u = sqrt(self.r2);
        let ccl = Mat::new([
            [self.c[(0, 0)], self.c[(0, 1)]],
            [self.c[(1, 0)], self.c[(1, 1)]],
            [-rho_u * k[(0, 0)], -rho_u * k[(0, 1)]],
        ]);
        // (jωI − Acl)⁻¹ B1 via the 2×2 adjugate.
        let jw = Complex64::new(0.0, omega);
        let m00 = jw - acl[(0, 0)];
        let m01 = Complex64::new(-acl[(0, 1)], 0.0);
        let m10 = Complex64::new(-acl[(1, 0)], 0.0);
        let m11 = jw - acl[(1, 1)];
        let det = m00 * m11 - m01 * m10;
        let (b0, b1) = (self.b1[(0, 0)], self.b1[(1, 0)]);
        let x0 = (m11 * b0 - m01 * b1) / det;
        let x1 = (m00 * b1 - m10 * b0) / det;
        let mut sq = 0.0;
        for r in 0..3 {
            let z = x0 * ccl[(r, 0)] + x1 * ccl[(r, 1)];
            sq += z.norm_sqr();
        }
        sqrt(sq)
    }

    /// Peak closed-loop gain over `n` log-spaced frequencies in `[lo, hi]`.
    pub fn closed_loop_peak_gain(&self, p: &Mat<2, 2>, lo: f64, hi: f64, n: usize) -> f64 {
        log_grid(lo, hi, n)
            .map(|w| self.closed_loop_gain_at(p, w))
            .fold(0.0, f64::max)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    (0..n).map(move |k| {
        let f = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
        libm::pow(10.0, a + (b - a) * f)
    })
}

/// Linearized plant at leader speed `v_eq`.
pub fn build_plant(p: &VtgParams, v_eq: f64) -> Result<LinearizedPlant, SynthesisError> {
    if !(v_eq > 0.0) || !v_eq.is_finite() {
        return Err(SynthesisError::InfeasibleOperatingPoint { v_eq });
    }
    let (k1, k2, tau) = (p.ctg.k1, p.ctg.k2, p.ctg.tau);
    Ok(LinearizedPlant {
        a: Mat::new([[0.0, -1.0], [k1, -(k1 * tau + k2)]]),
        b1: Mat::new([[1.0], [k2]]),
        b2: Mat::new([[0.0], [-k1 * v_eq]]),
        c: Mat::new([[p.rho_s, 0.0], [0.0, p.rho_v], [0.0, 0.0]]),
        r2: p.rho_u * p.rho_u,
    })
}

/// Dichotomy check of the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub dichotomic: bool,
    pub hamiltonian_eigs: Vec<Complex64>,
    pub min_abs_re: f64,
    /// Band half-width around the imaginary axis.
    pub tolerance: f64,
}

pub fn check_feasibility(plant: &LinearizedPlant, gamma: f64) -> FeasibilityReport {
    let h = plant.hamiltonian(gamma);
    let eigs = if gamma > 0.0 && h.as_slice().iter().all(|v| v.is_finite()) {
        eigenvalues(&h).ok()
    } else {
        None
    };
    match eigs {
        Some(eigs) => {
            let radius = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
            let min_abs_re = eigs.iter().map(|l| abs(l.re)).fold(f64::INFINITY, f64::min);
            let tolerance = 1e-9 * radius.max(1.0);
            FeasibilityReport {
                dichotomic: min_abs_re > tolerance,
                hamiltonian_eigs: eigs,
                min_abs_re,
                tolerance,
            }
        }
        None => FeasibilityReport {
            dichotomic: false,
            hamiltonian_eigs: Vec::new(),
            min_abs_re: 0.0,
            tolerance: 0.0,
        },
    }
}

/// Stabilizing Riccati solution at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisResult {
    pub p: Mat<2, 2>,
    pub gamma: f64,
    /// Frobenius norm of the Riccati residual.
    pub residual_norm: f64,
    pub min_eig_p: f64,
    pub hamiltonian_min_abs_re: f64,
    /// Whether a Newton correction was applied.
    pub refined: bool,
}

pub fn solve_care(plant: &LinearizedPlant, gamma: f64) -> Result<SynthesisResult, SynthesisError> {
    let report = check_feasibility(plant, gamma);
    if !report.dichotomic {
        return Err(SynthesisError::InfeasibleGamma {
            gamma,
            min_abs_re: report.min_abs_re,
        });
    }
    let h = plant.hamiltonian(gamma);
    let stable: Vec<Complex64> = report
        .hamiltonian_eigs
        .iter()
        .copied()
        .filter(|l| l.re < 0.0)
        .collect();
    if stable.len() != 2 {
        return Err(SynthesisError::DegenerateSubspace { cond: f64::INFINITY });
    }

    let mut basis: Vec<[f64; 4]> = Vec::with_capacity(2);
    let imag_tol = 1e-12 * report.hamiltonian_eigs.iter().map(|l| l.norm()).fold(1.0, f64::max);
    if abs(stable[0].im) > imag_tol {
        // Complex pair: the real and imaginary parts of one eigenvector
        // span the same real subspace as the pair.
        let lambda = if stable[0].im > 0.0 { stable[0] } else { stable[1] };
        let v = null_vector(&h, lambda)?;
        basis.push([v[0].re, v[1].re, v[2].re, v[3].re]);
        basis.push([v[0].im, v[1].im, v[2].im, v[3].im]);
    } else {
        for l in &stable {
            let v = null_vector(&h, Complex64::new(l.re, 0.0))?;
            basis.push([v[0].re, v[1].re, v[2].re, v[3].re]);
        }
    }
    let x1 = Mat::new([[basis[0][0], basis[1][0]], [basis[0][1], basis[1][1]]]);
    let x2 = Mat::new([[basis[0][2], basis[1][2]], [basis[0][3], basis[1][3]]]);
    let cond = cond2(&x1);
    if !(cond <= MAX_BASIS_COND) {
        return Err(SynthesisError::DegenerateSubspace { cond });
    }
    let x1_inv = x1
        .inverse()
        .ok_or(SynthesisError::DegenerateSubspace { cond: f64::INFINITY })?;
    let mut p = (x2 * x1_inv).symmetrize();

    let tolerance = RESIDUAL_TOL * plant.ctc().norm().max(1.0);
    let mut residual = plant.care_residual(gamma, &p).norm();
    let mut refined = false;
    if !(residual <= tolerance) {
        if let Some(delta) = newton_correction(plant, gamma, &p) {
            let candidate = (p + delta).symmetrize();
            let r = plant.care_residual(gamma, &candidate).norm();
            if r < residual {
                p = candidate;
                residual = r;
                refined = true;
            }
        }
    }
    if !(residual <= tolerance) {
        return Err(SynthesisError::Inaccurate { residual, tolerance });
    }
    let min_eig = p.symmetric_eigenvalues()[0];
    if min_eig < MIN_EIG_TOL {
        return Err(SynthesisError::IndefiniteSolution { min_eig });
    }
    Ok(SynthesisResult {
        p,
        gamma,
        residual_norm: residual,
        min_eig_p: min_eig,
        hamiltonian_min_abs_re: report.min_abs_re,
        refined,
    })
}

/// Convenience: build the plant and solve at `v_eq`.
pub fn synthesize(params: &VtgParams, v_eq: f64) -> Result<SynthesisResult, SynthesisError> {
    let plant = build_plant(params, v_eq)?;
    solve_care(&plant, params.gamma)
}

/// 2-norm condition number of a 2×2 matrix.
fn cond2(m: &Mat<2, 2>) -> f64 {
    let [lo, hi] = (m.transpose() * *m).symmetric_eigenvalues();
    if lo <= 0.0 {
        return f64::INFINITY;
    }
    sqrt(hi / lo)
}

/// One Newton step: solves `AclᵀΔ + ΔAcl = −Res(P)` with `Acl = A + S P`.
fn newton_correction(plant: &LinearizedPlant, gamma: f64, p: &Mat<2, 2>) -> Option<Mat<2, 2>> {
    let acl = plant.a + plant.coupling(gamma) * *p;
    let rhs = -plant.care_residual(gamma, p);
    let basis = [
        Mat::new([[1.0, 0.0], [0.0, 0.0]]),
        Mat::new([[0.0, 1.0], [1.0, 0.0]]),
        Mat::new([[0.0, 0.0], [0.0, 1.0]]),
    ];
    let pick = |m: &Mat<2, 2>| [m[(0, 0)], m[(0, 1)], m[(1, 1)]];
    let mut sys = [[0.0; 3]; 3];
    for (col, e) in basis.iter().enumerate() {
        let image = acl.transpose() * *e + *e * acl;
        for (row, v) in pick(&image).into_iter().enumerate() {
            sys[row][col] = v;
        }
    }
    let d = solve3(sys, pick(&rhs))?;
    Some(Mat::new([[d[0], d[1]], [d[1], d[2]]]))
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for k in 0..3 {
        let piv = (k..3).max_by(|&i, &j| abs(a[i][k]).total_cmp(&abs(a[j][k])))?;
        if a[piv][k] == 0.0 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in (k + 1)..3 {
            let f = a[i][k] / a[k][k];
            for j in k..3 {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut s = b[i];
        for j in (i + 1)..3 {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Riccati solutions tabulated over leader speed.
///
/// Lookups interpolate `P` entrywise between grid points and clamp
/// outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    grid: Vec<f64>,
    results: Vec<SynthesisResult>,
}

impl GainSchedule {
    pub fn build(params: &VtgParams, grid: &[f64]) -> Result<Self, SynthesisError> {
        if grid.is_empty() {
            return Err(SynthesisError::InvalidGrid("empty grid"));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SynthesisError::InvalidGrid("grid must be strictly ascending"));
        }
        let mut results = Vec::with_capacity(grid.len());
        let mut bad = Vec::new();
        for &v in grid {
            match synthesize(params, v) {
                Ok(r) => results.push(r),
                Err(SynthesisError::InfeasibleOperatingPoint { .. })
                | Err(SynthesisError::InfeasibleGamma { .. })
                | Err(SynthesisError::DegenerateSubspace { .. })
                | Err(SynthesisError::IndefiniteSolution { .. })
                | Err(SynthesisError::Inaccurate { .. }) => bad.push(v),
                Err(e) => return Err(e),
            }
        }
        if !bad.is_empty() {
            return Err(SynthesisError::InfeasibleGrid { speeds: bad });
        }
        Ok(Self {
            grid: grid.to_vec(),
            results,
        })
    }

    /// Grid `lo, lo + step, ..., hi` (the last point is `hi`).
    pub fn uniform(params: &VtgParams, lo: f64, hi: f64, step: f64) -> Result<Self, SynthesisError> {
        if !(step > 0.0) || !(hi >= lo) || !(lo > 0.0) {
            return Err(SynthesisError::InvalidGrid("need 0 < lo <= hi and step > 0"));
        }
        let n = libm::round((hi - lo) / step) as usize;
        let grid: Vec<f64> = (0..=n).map(|k| if k == n { hi } else { lo + k as f64 * step }).collect();
        Self::build(params, &grid)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn results(&self) -> &[SynthesisResult] {
        &self.results
    }

    pub fn lookup(&self, v: f64) -> Mat<2, 2> {
        let g = &self.grid;
        if v <= g[0] {
            return self.results[0].p;
        }
        let last = g.len() - 1;
        if v >= g[last] {
            return self.results[last].p;
        }
        let hi = g.partition_point(|&x| x <= v);
        let lo = hi - 1;
        let w = (v - g[lo]) / (g[hi] - g[lo]);
        self.results[lo].p.scale(1.0 - w) + self.results[hi].p.scale(w)
    }
}
