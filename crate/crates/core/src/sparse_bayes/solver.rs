//! Fixed-point evidence maximization.

use ndarray::Array1;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::posterior::{posterior_stats, PosteriorStats};
use super::threshold::{estimate_doas, primary_index, threshold_signals};
use super::SparseProblem;
use crate::array_model::{complexify_vector, AngularGrid};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Form of the precision update denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `γ_n / (μ_n² + x_{e,n}² − x_{e,n} μ_n)`.
    #[default]
    HalfCross,
    /// `γ_n / (μ_n − x_{e,n})²`, the stationary point of the exact evidence.
    Exact,
}

/// Which factorization computes the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveRoute {
    /// Coefficient route while the active set fits in `2M`, measurement route otherwise.
    #[default]
    Auto,
    Coefficient,
    Measurement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub max_iters: usize,
    /// Converged once `max |Δp_n| / p_n` over the active set drops below this.
    pub tol: T,
    pub p_init: T,
    pub sigma2_init: T,
    /// Lower bound on the noise-variance estimate.
    pub sigma2_floor: T,
    /// Precisions above this are pruned.
    pub p_cap: T,
    /// Guard on the precision-update denominator.
    pub denom_eps: T,
    /// Energy fraction kept by thresholding.
    pub threshold_eta: T,
    pub update_rule: UpdateRule,
    /// When false, `σ²` stays at its starting value.
    pub estimate_sigma2: bool,
    pub route: SolveRoute,
    /// Gamma hyperprior scale/shape parameters `β₁…β₄`. Held at the flat limit;
    /// the updates do not read them.
    pub hyperprior: [T; 4],
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: lit(1e-3),
            p_init: lit(0.01),
            sigma2_init: lit(0.1),
            sigma2_floor: lit(1e-10),
            p_cap: lit(1e12),
            denom_eps: lit(1e-24),
            threshold_eta: lit(0.9),
            update_rule: UpdateRule::HalfCross,
            estimate_sigma2: true,
            route: SolveRoute::Auto,
            hyperprior: [T::zero(); 4],
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("p_init", self.p_init),
            ("sigma2_init", self.sigma2_init),
            ("sigma2_floor", self.sigma2_floor),
            ("p_cap", self.p_cap),
            ("denom_eps", self.denom_eps),
            ("threshold_eta", self.threshold_eta),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.tol < T::one()) {
            return Err(Error::invalid("tol must be < 1"));
        }
        if self.threshold_eta > T::one() {
            return Err(Error::invalid("threshold_eta must be ≤ 1"));
        }
        if !(self.p_init < self.p_cap) {
            return Err(Error::invalid("p_init must be below p_cap"));
        }
        Ok(())
    }
}

/// Solver state after an iteration.
#[derive(Debug, Clone)]
pub struct RvmState<T> {
    /// Precisions; `+∞` marks a pruned coefficient.
    pub p: Array1<T>,
    pub sigma2: T,
    /// Posterior mean for the current `(p, σ²)`.
    pub mu: Array1<T>,
    pub sigma_diag: Array1<T>,
    /// `γ_n = 1 − p_n Σ_nn`, zero on pruned entries.
    pub gamma: Array1<T>,
    pub residual_sq: T,
    pub log_evidence: T,
    pub iterations: usize,
    pub converged: bool,
    /// Log-evidence after every iteration, starting with the initial point.
    pub evidence_trace: Vec<T>,
}

impl<T: Real> RvmState<T> {
    fn from_stats(stats: PosteriorStats<T>, p: Array1<T>, sigma2: T) -> Self {
        let gamma = p
            .iter()
            .zip(stats.sigma_diag.iter())
            .map(|(&pn, &s)| if pn.is_finite() { T::one() - pn * s } else { T::zero() })
            .collect();
        Self {
            p,
            sigma2,
            mu: stats.mu,
            sigma_diag: stats.sigma_diag,
            gamma,
            residual_sq: stats.residual_sq,
            log_evidence: stats.log_evidence,
            iterations: 0,
            converged: false,
            evidence_trace: vec![stats.log_evidence],
        }
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.p[n].is_finite()
    }

    pub fn active_count(&self) -> usize {
        self.p.iter().filter(|v| v.is_finite()).count()
    }

    /// Prior variances `1/p_n`, zero on pruned entries.
    pub fn prior_variances(&self) -> Array1<T> {
        self.p.mapv(|v| if v.is_finite() { v.recip() } else { T::zero() })
    }

    /// Largest drop in log-evidence between consecutive iterations (0 if monotone).
    pub fn max_evidence_drop(&self) -> T {
        self.evidence_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(T::zero(), T::max)
    }
}

/// New precisions from the current posterior; entries leaving the active set become `+∞`.
pub fn update_p<T: Real>(state: &RvmState<T>, x_e: &Array1<T>, config: &SolverConfig<T>) -> Array1<T> {
    let mut out = state.p.clone();
    for n in 0..out.len() {
        if !state.p[n].is_finite() {
            continue;
        }
        let g = state.gamma[n];
        let (mu, xe) = (state.mu[n], x_e[n]);
        let denom = match config.update_rule {
            UpdateRule::HalfCross => mu * mu + xe * xe - xe * mu,
            UpdateRule::Exact => (mu - xe) * (mu - xe),
        };
        let next = g / denom.max(config.denom_eps);
        out[n] = if g > T::zero() && next <= config.p_cap {
            next
        } else {
            T::infinity()
        };
    }
    out
}

/// `σ² ← ‖ỹ − Ãμ‖² / (2M − Σγ)`, floored at `sigma2_floor`.
pub fn update_sigma2<T: Real>(
    state: &RvmState<T>,
    problem: &SparseProblem<'_, T>,
    config: &SolverConfig<T>,
) -> Result<T> {
    let dof = lit::<T>(problem.measurement_dim() as f64) - state.gamma.sum();
    if !(dof > T::zero()) {
        return Err(Error::OverParameterized(crate::scalar::to_f64(dof)));
    }
    Ok((state.residual_sq / dof).max(config.sigma2_floor))
}

/// Iterative evidence maximization for one problem.
#[derive(Debug)]
pub struct RvmSolver<'p, 'a, T> {
    problem: &'p SparseProblem<'a, T>,
    config: SolverConfig<T>,
    state: RvmState<T>,
}

impl<'p, 'a, T: Real> RvmSolver<'p, 'a, T> {
    pub fn new(problem: &'p SparseProblem<'a, T>, config: SolverConfig<T>) -> Result<Self> {
        let p = Array1::from_elem(problem.signal_dim(), config.p_init);
        let sigma2 = config.sigma2_init;
        Self::with_initial(problem, config, p, sigma2)
    }

    /// Starts from explicit hyperparameters (warm start).
    pub fn with_initial(
        problem: &'p SparseProblem<'a, T>,
        config: SolverConfig<T>,
        p: Array1<T>,
        sigma2: T,
    ) -> Result<Self> {
        config.validate()?;
        let stats = posterior_stats(problem, &p, sigma2, config.route, false)?;
        let state = RvmState::from_stats(stats, p, sigma2);
        Ok(Self {
            problem,
            config,
            state,
        })
    }

    pub fn state(&self) -> &RvmState<T> {
        &self.state
    }

    pub fn into_state(self) -> RvmState<T> {
        self.state
    }

    /// One round of `(p, σ²)` updates followed by a posterior refresh.
    /// Returns whether the convergence test passed.
    pub fn step(&mut self) -> Result<bool> {
        let x_e = self.problem.prior_mean().to_owned();
        let p_new = update_p(&self.state, &x_e, &self.config);
        let sigma2_new = if self.config.estimate_sigma2 {
            update_sigma2(&self.state, self.problem, &self.config)?
        } else {
            self.state.sigma2
        };

        let mut max_rel = T::zero();
        let mut pruned = false;
        for (&old, &new) in self.state.p.iter().zip(p_new.iter()) {
            if !old.is_finite() {
                continue;
            }
            if !new.is_finite() {
                pruned = true;
            } else {
                max_rel = max_rel.max(((new - old) / old).abs());
            }
        }

        let stats = posterior_stats(self.problem, &p_new, sigma2_new, self.config.route, false)?;
        let mut trace = std::mem::take(&mut self.state.evidence_trace);
        trace.push(stats.log_evidence);
        let iterations = self.state.iterations + 1;
        self.state = RvmState::from_stats(stats, p_new, sigma2_new);
        self.state.evidence_trace = trace;
        self.state.iterations = iterations;
        self.state.converged = !pruned && max_rel < self.config.tol;
        Ok(self.state.converged)
    }

    /// Iterates until convergence or `max_iters`.
    pub fn run(mut self) -> Result<RvmState<T>> {
        while self.state.iterations < self.config.max_iters {
            if self.step()? {
                break;
            }
        }
        Ok(self.state)
    }
}

/// Final signal estimate and DOA readout.
#[derive(Debug, Clone)]
pub struct SparseEstimate<T> {
    /// `x_n = x̃_n + j x̃_{N+n}`.
    pub x_opt: Array1<Complex<T>>,
    /// Indices surviving the energy threshold, most significant first.
    pub kept_indices: Vec<usize>,
    /// Grid angles of the kept indices, ascending.
    pub doas: Vec<T>,
    /// Grid angle of the strongest kept index.
    pub primary_doa: Option<T>,
    pub sigma2_opt: T,
    pub p_opt: Array1<T>,
    pub log_evidence: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> SparseEstimate<T> {
    /// Thresholds a stacked real signal and reads out DOAs.
    pub fn from_signal(
        x_tilde: &Array1<T>,
        grid: &AngularGrid<T>,
        eta: T,
        state: &RvmState<T>,
    ) -> Result<Self> {
        let x_opt = complexify_vector(x_tilde.view())?;
        if x_opt.len() != grid.len() {
            return Err(Error::shape(format!(
                "signal has {} angles, grid has {}",
                x_opt.len(),
                grid.len()
            )));
        }
        let kept_indices = threshold_signals(x_opt.view(), eta)?;
        let doas = estimate_doas(&kept_indices, grid);
        let primary_doa = primary_index(x_opt.view(), &kept_indices).map(|i| grid.angle(i));
        Ok(Self {
            x_opt,
            kept_indices,
            doas,
            primary_doa,
            sigma2_opt: state.sigma2,
            p_opt: state.p.clone(),
            log_evidence: state.log_evidence,
            iterations: state.iterations,
            converged: state.converged,
        })
    }

    /// `L̃`.
    pub fn num_kept(&self) -> usize {
        self.kept_indices.len()
    }
}

/// `x̃_opt = (ÃᵀÃ/σ² + P)⁻¹ (Ãᵀỹ/σ² + P x_e)` at the state's hyperparameters.
pub fn final_estimate<T: Real>(state: &RvmState<T>, problem: &SparseProblem<'_, T>) -> Result<Array1<T>> {
    Ok(posterior_stats(problem, &state.p, state.sigma2, SolveRoute::Auto, false)?.mu)
}

/// Runs the solver to convergence and thresholds the resulting estimate.
pub fn run_modified_rvm<T: Real>(
    problem: &SparseProblem<'_, T>,
    grid: &AngularGrid<T>,
    config: &SolverConfig<T>,
) -> Result<(RvmState<T>, SparseEstimate<T>)> {
    let state = RvmSolver::new(problem, config.clone())?.run()?;
    let estimate = SparseEstimate::from_signal(&state.mu, grid, config.threshold_eta, &state)?;
    Ok((state, estimate))
}
