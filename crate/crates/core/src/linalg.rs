//! Small dense kernels: Cholesky factorization and triangular solves.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric positive-definite matrix; only the lower triangle is read.
    pub fn new(a: ArrayView2<'_, T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::shape(format!("cholesky of {}x{} matrix", n, a.ncols())));
        }
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d = d - l[[j, k]] * l[[j, k]];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    row: j,
                    pivot: to_f64(d),
                    condition: diag_condition(&l, j),
                });
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s = s - l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &Array2<T> {
        &self.l
    }

    /// `log |A|`.
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        self.l.diag().iter().map(|d| d.ln()).sum::<T>() * two
    }

    /// Squared ratio of the extreme diagonal entries of `L`; a cheap lower bound on cond(A).
    pub fn condition_estimate(&self) -> f64 {
        diag_condition(&self.l, self.dim())
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s = s - self.l[[i, k]] * z[k];
            }
            z[i] = s / self.l[[i, i]];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let mut x = z.to_owned();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.l[[k, i]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let z = self.solve_lower(b);
        self.solve_upper(z.view())
    }

    /// Solves `L Z = B` column by column.
    pub fn solve_lower_mat(&self, b: ArrayView2<'_, T>) -> Array2<T> {
        let n = self.dim();
        let mut z = b.to_owned();
        for i in 0..n {
            let (done, mut rest) = z.view_mut().split_at(Axis(0), i);
            let mut row = rest.row_mut(0);
            for k in 0..i {
                let lik = self.l[[i, k]];
                if lik != T::zero() {
                    row.scaled_add(-lik, &done.row(k));
                }
            }
            let inv = T::one() / self.l[[i, i]];
            row.mapv_inplace(|v| v * inv);
        }
        z
    }

    /// Solves `A X = B`.
    pub fn solve_mat(&self, b: ArrayView2<'_, T>) -> Array2<T> {
        let n = self.dim();
        let mut x = self.solve_lower_mat(b);
        for i in (0..n).rev() {
            let (mut head, tail) = x.view_mut().split_at(Axis(0), i + 1);
            let mut row = head.row_mut(i);
            for k in (i + 1)..n {
                let lki = self.l[[k, i]];
                if lki != T::zero() {
                    row.scaled_add(-lki, &tail.row(k - i - 1));
                }
            }
            let inv = T::one() / self.l[[i, i]];
            row.mapv_inplace(|v| v * inv);
        }
        x
    }

    /// Explicit inverse `A⁻¹`, symmetrized.
    pub fn inverse(&self) -> Array2<T> {
        let n = self.dim();
        let linv = self.solve_lower_mat(Array2::<T>::eye(n).view());
        let mut inv = linv.t().dot(&linv);
        symmetrize(&mut inv);
        inv
    }
}

fn diag_condition<T: Real>(l: &Array2<T>, upto: usize) -> f64 {
    let diag: Vec<f64> = (0..upto).map(|i| to_f64(l[[i, i]])).collect();
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if diag.is_empty() || min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

/// Replaces `S` with `(S + Sᵀ) / 2`.
pub fn symmetrize<T: Real>(s: &mut Array2<T>) {
    let n = s.nrows();
    let half = T::one() / (T::one() + T::one());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (s[[i, j]] + s[[j, i]]) * half;
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
}

/// Gathers the listed columns of `a`.
pub fn select_columns<T: Real>(a: ArrayView2<'_, T>, cols: &[usize]) -> Array2<T> {
    a.select(Axis(1), cols)
}

pub fn norm_sq<T: Real>(v: ArrayView1<'_, T>) -> T {
    v.iter().map(|&x| x * x).sum()
}
