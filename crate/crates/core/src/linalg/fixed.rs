use core::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use super::DMatrix;

/// Fixed-size matrix for the plant-sized objects (2×2, 2×1, 3×2, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat<const R: usize, const C: usize>(pub [[f64; C]; R]);

impl<const R: usize, const C: usize> Default for Mat<R, C> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const R: usize, const C: usize> Mat<R, C> {
    pub const fn new(rows: [[f64; C]; R]) -> Self {
        Self(rows)
    }

    pub const fn zeros() -> Self {
        Self([[0.0; C]; R])
    }

    pub fn transpose(&self) -> Mat<C, R> {
        let mut out = Mat::<C, R>::zeros();
        for i in 0..R {
            for j in 0..C {
                out.0[j][i] = self.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(crate::fmath::abs(*v)))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        crate::fmath::sqrt(self.0.iter().flatten().map(|v| v * v).sum())
    }

    pub fn to_dmatrix(&self) -> DMatrix {
        DMatrix::from_fn(R, C, |i, j| self.0[i][j])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl<const N: usize> Mat<N, N> {
    pub fn identity() -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            out.0[i][i] = 1.0;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let mut out = *self;
        for i in 0..N {
            for j in 0..N {
                out.0[i][j] = 0.5 * (self.0[i][j] + self.0[j][i]);
            }
        }
        out
    }
}

impl Mat<2, 2> {
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Self([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    /// Eigenvalues of a symmetric 2×2 matrix in ascending order.
    pub fn symmetric_eigenvalues(&self) -> [f64; 2] {
        let m = &self.0;
        let mean = 0.5 * (m[0][0] + m[1][1]);
        let half = 0.5 * (m[0][0] - m[1][1]);
        let r = crate::fmath::hypot(half, 0.5 * (m[0][1] + m[1][0]));
        [mean - r, mean + r]
    }
}

impl<const R: usize, const C: usize> Index<(usize, usize)> for Mat<R, C> {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl<const R: usize, const C: usize> IndexMut<(usize, usize)> for Mat<R, C> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl<const R: usize, const C: usize> Add for Mat<R, C> {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        for i in 0..R {
            for j in 0..C {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl<const R: usize, const C: usize> Sub for Mat<R, C> {
    type Output = Self;

    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..R {
            for j in 0..C {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
        self
    }
}

impl<const R: usize, const C: usize> Neg for Mat<R, C> {
    type Output = Self;

    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const R: usize, const K: usize, const C: usize> Mul<Mat<K, C>> for Mat<R, K> {
    type Output = Mat<R, C>;

    fn mul(self, rhs: Mat<K, C>) -> Mat<R, C> {
        let mut out = Mat::<R, C>::zeros();
        for i in 0..R {
            for j in 0..C {
                let mut acc = 0.0;
                for k in 0..K {
                    acc += self.0[i][k] * rhs.0[k][j];
                }
                out.0[i][j] = acc;
            }
        }
        out
    }
}
