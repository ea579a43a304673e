use alloc::vec::Vec;

use super::{DMatrix, LinalgError};
use crate::fmath::{abs, copysign, hypot, sqrt};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix,
}

/// Cyclic Jacobi eigen-solver. Only the upper triangle is trusted.
pub fn symmetric_eigen(a: &DMatrix) -> Result<SymmetricEigen, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut m = DMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let mut v = DMatrix::identity(n);
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= 1e-30 * diag || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            iterations: MAX_SWEEPS,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Ascending eigenvalues of a symmetric matrix by Householder
/// tridiagonalization and implicit QL. Only the upper triangle is trusted.
pub fn symmetric_eigenvalues(a: &DMatrix) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = DMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let (mut d, mut e) = tridiagonalize(&mut m);
    tql(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Householder reduction working on the lower triangle; returns the
/// diagonal and the subdiagonal (`e[i]` couples `i − 1` and `i`).
fn tridiagonalize(a: &mut DMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut d = alloc::vec![0.0; n];
    let mut e = alloc::vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        if l == 0 {
            e[i] = a[(i, l)];
            continue;
        }
        let scale: f64 = (0..=l).map(|k| abs(a[(i, k)])).sum();
        if scale == 0.0 {
            e[i] = a[(i, l)];
            continue;
        }
        let mut h = 0.0;
        for k in 0..=l {
            a[(i, k)] /= scale;
            h += a[(i, k)] * a[(i, k)];
        }
        let f = a[(i, l)];
        let g = if f >= 0.0 { -sqrt(h) } else { sqrt(h) };
        e[i] = scale * g;
        h -= f * g;
        a[(i, l)] = f - g;
        let mut f = 0.0;
        for j in 0..=l {
            let mut g = 0.0;
            for k in 0..=j {
                g += a[(j, k)] * a[(i, k)];
            }
            for k in (j + 1)..=l {
                g += a[(k, j)] * a[(i, k)];
            }
            e[j] = g / h;
            f += e[j] * a[(i, j)];
        }
        let hh = f / (h + h);
        for j in 0..=l {
            let f = a[(i, j)];
            let g = e[j] - hh * f;
            e[j] = g;
            for k in 0..=j {
                a[(j, k)] -= f * e[k] + g * a[(i, k)];
            }
        }
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[(i, i)];
    }
    (d, e)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
fn tql(d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    const MAX_ITER: usize = 60;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = abs(d[m]) + abs(d[m + 1]);
                if abs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(LinalgError::NoConvergence { iterations: MAX_ITER });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + copysign(r, g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Lower Cholesky factor `L` with `L Lᵀ = a`.
pub fn cholesky(a: &DMatrix) -> Result<DMatrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = sqrt(d);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix, b: &DMatrix) -> Result<DMatrix, LinalgError> {
    if !l.is_square() || l.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch("solve_lower"));
    }
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            let d = l[(i, i)];
            if abs(d) == 0.0 {
                return Err(LinalgError::NotPositiveDefinite { index: i, pivot: d });
            }
            x[(i, c)] = s / d;
        }
    }
    Ok(x)
}
