//! General real eigenvalues: balancing, Hessenberg reduction and the
//! shifted double-step Francis QR iteration.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use super::{DMatrix, LinalgError};
use crate::fmath::{abs, copysign, sqrt};

const MAX_ITERS_PER_ROOT: usize = 60;

/// All eigenvalues of a real square matrix, in no particular order.
pub fn eigenvalues(a: &DMatrix) -> Result<Vec<Complex64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

fn balance(a: &mut DMatrix) {
    const RADIX: f64 = 2.0;
    const SQRDX: f64 = RADIX * RADIX;
    let n = a.rows();
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += abs(a[(j, i)]);
                    r += abs(a[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut g = r / RADIX;
            let mut f = 1.0;
            while c < g {
                f *= RADIX;
                c *= SQRDX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= SQRDX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Reduction to upper Hessenberg form by stabilised elementary similarities.
fn hessenberg(a: &mut DMatrix) {
    let n = a.rows();
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0;
        let mut piv = m;
        for j in m..n {
            if abs(a[(j, m - 1)]) > abs(x) {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..n {
                let t = a[(piv, j)];
                a[(piv, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, piv)];
                a[(j, piv)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        a[(i, j)] -= y * a[(m, j)];
                    }
                    for j in 0..n {
                        a[(j, m)] += y * a[(j, i)];
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = 0.0;
        }
    }
}

fn hqr(a: &mut DMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.rows();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += abs(a[(i, j)]);
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            let mut l = nu;
            while l > 0 {
                let mut s = abs(a[(l - 1, l - 1)]) + abs(a[(l, l)]);
                if s == 0.0 {
                    s = anorm;
                }
                if abs(a[(l, l - 1)]) + s == s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(nu - 1, nu - 1)];
            let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nu - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = sqrt(abs(q));
                x += t;
                if q >= 0.0 {
                    z = p + copysign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != 0.0 {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITERS_PER_ROOT {
                return Err(LinalgError::NoConvergence { iterations: its });
            }
            if its > 0 && its % 10 == 0 {
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = abs(a[(nu, nu - 1)]) + abs(a[(nu - 1, nu - 2)]);
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            loop {
                let z = a[(m, m)];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - r - s;
                r = a[(m + 2, m + 1)];
                let s = abs(p) + abs(q) + abs(r);
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = abs(a[(m, m - 1)]) * (abs(q) + abs(r));
                let v = abs(p) * (abs(a[(m - 1, m - 1)]) + abs(z) + abs(a[(m + 1, m + 1)]));
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = 0.0;
                    if k != nu - 1 {
                        r = a[(k + 2, k - 1)];
                    }
                    x = abs(p) + abs(q) + abs(r);
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = copysign(sqrt(p * p + q * q + r * r), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        p = a[(k, j)] + q * a[(k + 1, j)];
                        if k != nu - 1 {
                            p += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= p * z;
                        }
                        a[(k + 1, j)] -= p * y;
                        a[(k, j)] -= p * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k != nu - 1 {
                            p += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= p * r;
                        }
                        a[(i, k + 1)] -= p * q;
                        a[(i, k)] -= p;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex64::new(re, im))
        .collect())
}

/// Unit-norm vector spanning (approximately) the null space of `a - λI`.
///
/// Uses complete-pivoting elimination; the smallest trailing pivot is
/// treated as zero and the remaining unknowns are back-substituted.
pub fn null_vector(a: &DMatrix, lambda: Complex64) -> Result<Vec<Complex64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut m: Vec<Complex64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let v = Complex64::new(a[(i, j)], 0.0);
            if i == j {
                v - lambda
            } else {
                v
            }
        })
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = a.max_abs().max(lambda.norm()).max(1.0);
    let mut free = n - 1;
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, -1.0);
        for i in k..n {
            for j in k..n {
                let v = m[i * n + j].norm();
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if pi != k {
            for j in 0..n {
                m.swap(pi * n + j, k * n + j);
            }
        }
        if pj != k {
            for i in 0..n {
                m.swap(i * n + pj, i * n + k);
            }
            perm.swap(pj, k);
        }
        if best <= scale * 1e-14 || k == n - 1 {
            free = k;
            break;
        }
        let pivot = m[k * n + k];
        for i in (k + 1)..n {
            let f = m[i * n + k] / pivot;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let u = m[k * n + j];
                m[i * n + j] -= f * u;
            }
        }
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    y[free] = Complex64::new(1.0, 0.0);
    for i in (0..free).rev() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (i + 1)..=free {
            acc += m[i * n + j] * y[j];
        }
        y[i] = -acc / m[i * n + i];
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for (j, &pj) in perm.iter().enumerate() {
        x[pj] = y[j];
    }
    let norm = sqrt(x.iter().map(|v| v.norm_sqr()).sum());
    for v in x.iter_mut() {
        *v /= norm;
    }
    Ok(x)
}
