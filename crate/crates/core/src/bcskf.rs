//! Sparse-signal Kalman tracking.
//!
//! Each snapshot the previous estimate is shifted along the grid by the
//! expected DOA change, the sparse Bayesian solver re-estimates `p` and `σ²`
//! with the shifted estimate as its prior mean, and a Kalman update with
//! process noise `P⁻¹` folds in the new measurement.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::array_model::AngularGrid;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};
use crate::scalar::Real;
use crate::sparse_bayes::{RvmSolver, RvmState, SolverConfig, SparseEstimate, SparseProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Support shifted past either end of the grid saturates at the end index.
    #[default]
    Clamp,
    /// Support shifted past either end of the grid is removed.
    Drop,
}

/// Constant-rate DOA motion expressed in grid steps per snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShiftModel {
    pub delta_indices: isize,
    pub boundary: BoundaryPolicy,
}

impl ShiftModel {
    pub fn new(delta_indices: isize) -> Self {
        Self {
            delta_indices,
            boundary: BoundaryPolicy::Clamp,
        }
    }

    pub fn with_boundary(self, boundary: BoundaryPolicy) -> Self {
        Self { boundary, ..self }
    }

    /// Shift for a DOA rate in degrees per snapshot; the rate must be a whole number of grid steps.
    pub fn from_rate<T: Real>(rate_deg: T, grid: &AngularGrid<T>) -> Result<Self> {
        let steps = crate::scalar::to_f64(rate_deg / grid.spacing());
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "DOA rate {rate_deg}°/snapshot is not a multiple of the {}° grid spacing",
                grid.spacing()
            )));
        }
        Ok(Self::new(rounded as isize))
    }

    /// Applies the shift to both halves of a stacked `[ℛ; ℐ]` signal.
    /// Returns the shifted signal and whether any non-zero entry hit a grid end.
    pub fn apply<T: Real>(&self, x: ArrayView1<'_, T>) -> Result<(Array1<T>, bool)> {
        if x.len() % 2 != 0 {
            return Err(Error::shape(format!("stacked signal has odd length {}", x.len())));
        }
        let n = x.len() / 2;
        if self.delta_indices.unsigned_abs() >= n.max(1) {
            return Err(Error::invalid(format!(
                "shift of {} indices exceeds grid size {n}",
                self.delta_indices
            )));
        }
        let mut out = Array1::zeros(x.len());
        let mut clamped = false;
        for (i, &v) in x.iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            let (dest, hit) = self.destination(i, n);
            clamped |= hit;
            if let Some(d) = dest {
                out[d] = out[d] + v;
            }
        }
        Ok((out, clamped))
    }

    /// `F Σ Fᵀ` for the same index map as [`ShiftModel::apply`].
    pub fn apply_covariance<T: Real>(&self, sigma: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let len = sigma.nrows();
        if sigma.ncols() != len || len % 2 != 0 {
            return Err(Error::shape(format!("covariance of shape {:?}", sigma.dim())));
        }
        let n = len / 2;
        if self.delta_indices.unsigned_abs() >= n.max(1) {
            return Err(Error::invalid(format!(
                "shift of {} indices exceeds grid size {n}",
                self.delta_indices
            )));
        }
        let dest: Vec<Option<usize>> = (0..len).map(|i| self.destination(i, n).0).collect();
        let mut out = Array2::zeros((len, len));
        for (row, di) in sigma.outer_iter().zip(&dest) {
            let Some(di) = *di else { continue };
            if row.iter().all(|v| *v == T::zero()) {
                continue;
            }
            for (&v, dj) in row.iter().zip(&dest) {
                if let Some(dj) = *dj {
                    out[[di, dj]] = out[[di, dj]] + v;
                }
            }
        }
        Ok(out)
    }

    /// Stacked index `i` after the shift (`None` if dropped), and whether it hit a grid end.
    fn destination(&self, i: usize, n: usize) -> (Option<usize>, bool) {
        let base = (i / n) * n;
        let target = (i % n) as isize + self.delta_indices;
        let clamped = target.clamp(0, n as isize - 1);
        let hit = clamped != target;
        let dest = match self.boundary {
            BoundaryPolicy::Drop if hit => None,
            _ => Some(base + clamped as usize),
        };
        (dest, hit)
    }
}

/// How the prediction step carries `Σ_{k−1}` forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariancePropagation {
    /// `Σ_{k|k−1} = F Σ_{k−1} Fᵀ + P_k⁻¹`, moving the covariance with the support.
    #[default]
    Shifted,
    /// `Σ_{k|k−1} = Σ_{k−1} + P_k⁻¹`, covariance left at the old indices.
    Static,
}

/// Filter estimate after snapshot `k`.
#[derive(Debug, Clone)]
pub struct TrackState<T> {
    /// `x̃_{k|k}`.
    pub x: Array1<T>,
    /// `Σ_{k|k}`.
    pub sigma: Array2<T>,
    /// Number of snapshots absorbed so far.
    pub k: usize,
    pub sigma2: T,
    pub p: Array1<T>,
}

impl<T: Real> TrackState<T> {
    /// Empty state: zero signal, zero covariance. The first update then
    /// reduces to the static sparse Bayesian estimate.
    pub fn empty(signal_dim: usize, sigma2: T, p_init: T) -> Self {
        Self {
            x: Array1::zeros(signal_dim),
            sigma: Array2::zeros((signal_dim, signal_dim)),
            k: 0,
            sigma2,
            p: Array1::from_elem(signal_dim, p_init),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prediction<T> {
    /// `x̃_{k|k−1}`.
    pub x: Array1<T>,
    /// `Σ_{k|k−1}`.
    pub sigma: Array2<T>,
    /// `ỹ_{k|k−1} = Ã x̃_{k|k−1}`.
    pub y: Array1<T>,
    pub clamped: bool,
}

/// Shift prediction. `prior_variances` holds `1/p_n` (zero where pruned).
pub fn predict<T: Real>(
    state: &TrackState<T>,
    shift: &ShiftModel,
    covariance: CovariancePropagation,
    prior_variances: ArrayView1<'_, T>,
    a: ArrayView2<'_, T>,
) -> Result<Prediction<T>> {
    let n = state.x.len();
    if prior_variances.len() != n || a.ncols() != n || state.sigma.dim() != (n, n) {
        return Err(Error::shape("prediction inputs disagree on signal dimension"));
    }
    let (x, clamped) = shift.apply(state.x.view())?;
    let mut sigma = match covariance {
        CovariancePropagation::Shifted => shift.apply_covariance(state.sigma.view())?,
        CovariancePropagation::Static => state.sigma.clone(),
    };
    for (i, &v) in prior_variances.iter().enumerate() {
        sigma[[i, i]] = sigma[[i, i]] + v;
    }
    let y = a.dot(&x);
    Ok(Prediction { x, sigma, y, clamped })
}

/// `ỹ_{e,k} = ỹ_k − ỹ_{k|k−1}`.
pub fn innovation<T: Real>(y: ArrayView1<'_, T>, y_pred: ArrayView1<'_, T>) -> Result<Array1<T>> {
    if y.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "measurement length {} vs prediction length {}",
            y.len(),
            y_pred.len()
        )));
    }
    Ok(&y - &y_pred)
}

#[derive(Debug, Clone)]
pub struct KalmanUpdate<T> {
    pub x: Array1<T>,
    pub sigma: Array2<T>,
    pub gain: Array2<T>,
}

/// `K = Σ Ãᵀ (σ²I + Ã Σ Ãᵀ)⁻¹`, `x = x_pred + K ỹ_e`, `Σ_new = (I − KÃ) Σ`.
pub fn kalman_update<T: Real>(
    a: ArrayView2<'_, T>,
    x_pred: ArrayView1<'_, T>,
    sigma_pred: ArrayView2<'_, T>,
    y_e: ArrayView1<'_, T>,
    sigma2: T,
) -> Result<KalmanUpdate<T>> {
    let (two_m, n) = a.dim();
    if x_pred.len() != n || sigma_pred.dim() != (n, n) || y_e.len() != two_m {
        return Err(Error::shape("kalman update inputs disagree on dimensions"));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    // Σ Ãᵀ (n × 2M)
    let sa = sigma_pred.dot(&a.t());
    let mut s = a.dot(&sa);
    symmetrize(&mut s);
    for i in 0..two_m {
        s[[i, i]] = s[[i, i]] + sigma2;
    }
    let chol = Cholesky::new(s.view())?;
    // K = (S⁻¹ (ΣÃᵀ)ᵀ)ᵀ
    let gain = chol.solve_mat(sa.t()).reversed_axes();
    let x = &x_pred + &gain.dot(&y_e);
    let mut sigma = &sigma_pred - &gain.dot(&sa.t());
    symmetrize(&mut sigma);
    Ok(KalmanUpdate { x, sigma, gain })
}

#[derive(Debug, Clone)]
pub struct TrackerConfig<T> {
    pub solver: SolverConfig<T>,
    pub shift: ShiftModel,
    /// Start each snapshot's noise-variance search from the previous estimate.
    pub warm_start_sigma2: bool,
    pub covariance: CovariancePropagation,
    /// Zero the carried signal outside the thresholded support after each update.
    pub sparse_state: bool,
}

impl<T: Real> TrackerConfig<T> {
    pub fn new(solver: SolverConfig<T>, shift: ShiftModel) -> Self {
        Self {
            solver,
            shift,
            warm_start_sigma2: true,
            covariance: CovariancePropagation::default(),
            sparse_state: true,
        }
    }
}

/// Output of one tracked snapshot.
#[derive(Debug, Clone)]
pub struct TrackStep<T> {
    /// Thresholded readout of `x̃_{k|k}` with the snapshot's hyperparameters.
    pub estimate: SparseEstimate<T>,
    pub solver: RvmState<T>,
    pub clamped: bool,
}

/// One prediction/re-optimization/update cycle.
pub fn track_snapshot<T: Real>(
    state: &TrackState<T>,
    a: ArrayView2<'_, T>,
    grid: &AngularGrid<T>,
    y: ArrayView1<'_, T>,
    config: &TrackerConfig<T>,
) -> Result<(TrackState<T>, TrackStep<T>)> {
    let (x_prior, _) = config.shift.apply(state.x.view())?;
    let problem = SparseProblem::new(a, y.to_owned(), x_prior)?;
    let sigma2_start = if config.warm_start_sigma2 && state.k > 0 {
        state.sigma2
    } else {
        config.solver.sigma2_init
    };
    let p_start = Array1::from_elem(problem.signal_dim(), config.solver.p_init);
    let rvm = RvmSolver::with_initial(&problem, config.solver.clone(), p_start, sigma2_start)?.run()?;

    let pred = predict(
        state,
        &config.shift,
        config.covariance,
        rvm.prior_variances().view(),
        a,
    )?;
    let y_e = innovation(y, pred.y.view())?;
    let update = kalman_update(a, pred.x.view(), pred.sigma.view(), y_e.view(), rvm.sigma2)?;

    let estimate = SparseEstimate::from_signal(&update.x, grid, config.solver.threshold_eta, &rvm)?;
    let mut x = update.x;
    if config.sparse_state {
        let n = x.len() / 2;
        let mut keep = vec![false; n];
        for &i in &estimate.kept_indices {
            keep[i] = true;
        }
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| !**k) {
            x[i] = T::zero();
            x[n + i] = T::zero();
        }
    }
    let next = TrackState {
        x,
        sigma: update.sigma,
        k: state.k + 1,
        sigma2: rvm.sigma2,
        p: rvm.p.clone(),
    };
    Ok((
        next,
        TrackStep {
            estimate,
            solver: rvm,
            clamped: pred.clamped,
        },
    ))
}

/// Stateful wrapper around [`track_snapshot`].
#[derive(Debug, Clone)]
pub struct Tracker<'a, T> {
    a: ArrayView2<'a, T>,
    grid: &'a AngularGrid<T>,
    config: TrackerConfig<T>,
    state: TrackState<T>,
}

impl<'a, T: Real> Tracker<'a, T> {
    pub fn new(a: ArrayView2<'a, T>, grid: &'a AngularGrid<T>, config: TrackerConfig<T>) -> Result<Self> {
        if a.ncols() != 2 * grid.len() {
            return Err(Error::shape(format!(
                "dictionary has {} columns, grid needs {}",
                a.ncols(),
                2 * grid.len()
            )));
        }
        config.solver.validate()?;
        let state = TrackState::empty(a.ncols(), config.solver.sigma2_init, config.solver.p_init);
        Ok(Self { a, grid, config, state })
    }

    pub fn state(&self) -> &TrackState<T> {
        &self.state
    }

    pub fn step(&mut self, y: ArrayView1<'_, T>) -> Result<TrackStep<T>> {
        let (next, out) = track_snapshot(&self.state, self.a, self.grid, y, &self.config)?;
        self.state = next;
        Ok(out)
    }
}
