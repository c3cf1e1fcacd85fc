//! Sparse Bayesian learning with a non-zero prior mean.
//!
//! The signal prior is `x̃ ~ N(x_e, P⁻¹)` with one precision per real
//! coefficient. Hyperparameters `p` and the noise variance `σ²` are chosen by
//! type-II maximum likelihood using fixed-point updates, the posterior mean is
//! the signal estimate, and an energy threshold turns it into DOAs.
//!
//! Pruned coefficients carry `p_n = +∞`: they contribute nothing to the prior
//! covariance and their posterior mean is pinned to `x_{e,n}`.

mod posterior;
mod solver;
mod threshold;

pub use posterior::{log_marginal, posterior, posterior_stats, PosteriorStats};
pub use solver::{
    final_estimate, run_modified_rvm, update_p, update_sigma2, RvmSolver, RvmState, SolverConfig,
    SolveRoute, SparseEstimate, UpdateRule,
};
pub use threshold::{estimate_doas, primary_index, threshold_signals};

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Real-embedded sparse regression problem `ỹ = Ã x̃ + ñ` with prior mean `x_e`.
#[derive(Debug, Clone)]
pub struct SparseProblem<'a, T> {
    a: ArrayView2<'a, T>,
    y: Array1<T>,
    x_e: Array1<T>,
}

impl<'a, T: Real> SparseProblem<'a, T> {
    pub fn new(a: ArrayView2<'a, T>, y: Array1<T>, x_e: Array1<T>) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::shape(format!(
                "dictionary has {} rows but measurement has length {}",
                a.nrows(),
                y.len()
            )));
        }
        if a.ncols() != x_e.len() {
            return Err(Error::shape(format!(
                "dictionary has {} columns but prior mean has length {}",
                a.ncols(),
                x_e.len()
            )));
        }
        if x_e.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("measurement and prior mean must be finite"));
        }
        Ok(Self { a, y, x_e })
    }

    /// Problem with a zero prior mean (classical sparse Bayesian learning).
    pub fn zero_mean(a: ArrayView2<'a, T>, y: Array1<T>) -> Result<Self> {
        let n = a.ncols();
        Self::new(a, y, Array1::zeros(n))
    }

    pub fn dictionary(&self) -> ArrayView2<'a, T> {
        self.a
    }

    pub fn measurement(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn prior_mean(&self) -> ArrayView1<'_, T> {
        self.x_e.view()
    }

    /// `2M`.
    pub fn measurement_dim(&self) -> usize {
        self.a.nrows()
    }

    /// `2N`.
    pub fn signal_dim(&self) -> usize {
        self.a.ncols()
    }

    /// `ỹ − Ã x_e`.
    pub fn prior_residual(&self) -> Array1<T> {
        &self.y - &self.a.dot(&self.x_e)
    }
}
