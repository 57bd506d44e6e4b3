//! Small dense linear algebra: vector helpers and a Cholesky factorization.
//!
//! Problem sizes here are at most a few hundred unknowns, so a plain
//! row-oriented factorization is sufficient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::Scalar;

#[inline]
pub fn dot<S: Scalar>(a: ArrayView1<S>, b: ArrayView1<S>) -> S {
    a.dot(&b)
}

#[inline]
pub fn norm<S: Scalar>(a: ArrayView1<S>) -> S {
    a.dot(&a).sqrt()
}

pub fn max_abs<S: Scalar>(a: ArrayView1<S>) -> S {
    a.iter().fold(S::zero(), |m, v| m.max(v.abs()))
}

pub fn is_finite<S: Scalar>(a: ArrayView1<S>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry<S: Scalar>(m: ArrayView2<S>) -> S {
    let n = m.nrows();
    let mut worst = S::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    lower: Array2<S>,
}

impl<S: Scalar> Cholesky<S> {
    pub fn new(a: ArrayView2<S>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "cholesky (square matrix)",
                expected: n,
                actual: a.ncols(),
            });
        }
        // Pivots at round-off level relative to the largest diagonal entry
        // mean the matrix is singular in working precision.
        let scale = (0..n).map(|i| a[[i, i]].abs()).fold(S::zero(), S::max);
        let floor = S::epsilon() * S::lit(n as f64) * scale;
        let mut l = Array2::<S>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > floor) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { context: "cholesky" });
            }
            let d = diag.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, S> {
        self.lower.view()
    }

    /// `log det A`.
    pub fn log_det(&self) -> S {
        let two = S::lit(2.0);
        self.lower.diag().iter().map(|d| two * d.ln()).sum()
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: ArrayView1<S>) -> Array1<S> {
        let n = self.dim();
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lower[[i, k]] * z[k];
            }
            z[i] = s / self.lower[[i, i]];
        }
        z
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<S>) -> Array1<S> {
        let n = self.dim();
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[[k, i]] * x[k];
            }
            x[i] = s / self.lower[[i, i]];
        }
        x
    }

    /// Explicit inverse `A⁻¹`, symmetrized.
    pub fn inverse(&self) -> Array2<S> {
        let n = self.dim();
        let mut inv = Array2::<S>::zeros((n, n));
        let mut e = Array1::<S>::zeros(n);
        for j in 0..n {
            e.fill(S::zero());
            e[j] = S::one();
            let col = self.solve(e.view());
            inv.column_mut(j).assign(&col);
        }
        let half = S::lit(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let m = half * (inv[[i, j]] + inv[[j, i]]);
                inv[[i, j]] = m;
                inv[[j, i]] = m;
            }
        }
        inv
    }
}
