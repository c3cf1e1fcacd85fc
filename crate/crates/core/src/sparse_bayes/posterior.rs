//! Posterior moments and log-evidence for fixed hyperparameters.
//!
//! Two algebraically equivalent routes are available. The coefficient route
//! factors `H = σ⁻²ÃᵀÃ + P` over the active set; the measurement route factors
//! `C = σ²I + ÃP⁻¹Ãᵀ` (size `2M`) and recovers the same moments through the
//! Woodbury identity. The cheaper one is picked by active-set size.

use ndarray::{Array1, Array2, Axis};

use super::{SolveRoute, SparseProblem};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, select_columns, symmetrize, Cholesky};
use crate::scalar::{lit, Real};

/// Posterior summary for one `(p, σ²)`.
#[derive(Debug, Clone)]
pub struct PosteriorStats<T> {
    /// Posterior mean `μ` (length `2N`); pruned entries equal `x_e`.
    pub mu: Array1<T>,
    /// `diag Σ`; zero on pruned entries.
    pub sigma_diag: Array1<T>,
    /// `‖ỹ − Ãμ‖²`.
    pub residual_sq: T,
    /// `log N(ỹ; Ã x_e, σ²I + ÃP⁻¹Ãᵀ)`.
    pub log_evidence: T,
    /// Full `Σ` restricted to `active` rows/columns, when requested.
    pub active_covariance: Option<Array2<T>>,
    pub active: Vec<usize>,
}

fn active_indices<T: Real>(p: &Array1<T>) -> Result<Vec<usize>> {
    let mut active = Vec::with_capacity(p.len());
    for (i, &v) in p.iter().enumerate() {
        if v.is_finite() {
            if !(v > T::zero()) {
                return Err(Error::invalid(format!("precision p[{i}] = {v} must be positive")));
            }
            active.push(i);
        } else if v.is_nan() || v < T::zero() {
            return Err(Error::invalid(format!("precision p[{i}] = {v} is not valid")));
        }
    }
    Ok(active)
}

/// Computes posterior mean, variances and log-evidence.
pub fn posterior_stats<T: Real>(
    problem: &SparseProblem<'_, T>,
    p: &Array1<T>,
    sigma2: T,
    route: SolveRoute,
    want_covariance: bool,
) -> Result<PosteriorStats<T>> {
    if p.len() != problem.signal_dim() {
        return Err(Error::shape(format!(
            "precision vector has length {}, expected {}",
            p.len(),
            problem.signal_dim()
        )));
    }
    if !(sigma2 > T::zero()) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("noise variance {sigma2} must be positive")));
    }
    let active = active_indices(p)?;
    let route = match route {
        SolveRoute::Auto if active.len() <= problem.measurement_dim() => SolveRoute::Coefficient,
        SolveRoute::Auto => SolveRoute::Measurement,
        r => r,
    };
    match route {
        SolveRoute::Measurement => measurement_route(problem, p, sigma2, active, want_covariance),
        _ => coefficient_route(problem, p, sigma2, active, want_covariance),
    }
}

fn log_two_pi<T: Real>() -> T {
    lit::<T>(2.0 * std::f64::consts::PI).ln()
}

fn coefficient_route<T: Real>(
    problem: &SparseProblem<'_, T>,
    p: &Array1<T>,
    sigma2: T,
    active: Vec<usize>,
    want_covariance: bool,
) -> Result<PosteriorStats<T>> {
    let two_m = problem.measurement_dim();
    let half = lit::<T>(0.5);
    let beta = sigma2.recip();
    let z = problem.prior_residual();
    let aa = select_columns(problem.dictionary(), &active);

    let mut h = aa.t().dot(&aa) * beta;
    for (k, &i) in active.iter().enumerate() {
        h[[k, k]] = h[[k, k]] + p[i];
    }
    let chol = Cholesky::new(h.view())?;
    let rhs = aa.t().dot(&z) * beta;
    let w = chol.solve(rhs.view());
    let inv = chol.inverse();

    let fit = aa.dot(&w);
    let residual_sq = norm_sq((&z - &fit).view());
    let prior_quad: T = active.iter().zip(w.iter()).map(|(&i, &wk)| p[i] * wk * wk).sum();
    let log_p: T = active.iter().map(|&i| p[i].ln()).sum();
    let log_det_c = lit::<T>(two_m as f64) * sigma2.ln() + chol.log_det() - log_p;
    let quad = residual_sq * beta + prior_quad;
    let log_evidence = -half * (lit::<T>(two_m as f64) * log_two_pi::<T>() + log_det_c + quad);

    let mut mu = problem.prior_mean().to_owned();
    let mut sigma_diag = Array1::zeros(p.len());
    for (k, &i) in active.iter().enumerate() {
        mu[i] = mu[i] + w[k];
        sigma_diag[i] = inv[[k, k]];
    }
    Ok(PosteriorStats {
        mu,
        sigma_diag,
        residual_sq,
        log_evidence,
        active_covariance: want_covariance.then_some(inv),
        active,
    })
}

fn measurement_route<T: Real>(
    problem: &SparseProblem<'_, T>,
    p: &Array1<T>,
    sigma2: T,
    active: Vec<usize>,
    want_covariance: bool,
) -> Result<PosteriorStats<T>> {
    let two_m = problem.measurement_dim();
    let half = lit::<T>(0.5);
    let z = problem.prior_residual();
    let aa = select_columns(problem.dictionary(), &active);
    let d: Array1<T> = active.iter().map(|&i| p[i].recip()).collect();

    // C = σ²I + A_a D A_aᵀ
    let ad = &aa * &d;
    let mut c = ad.dot(&aa.t());
    for i in 0..two_m {
        c[[i, i]] = c[[i, i]] + sigma2;
    }
    let chol = Cholesky::new(c.view())?;
    let lz = chol.solve_lower(z.view());
    let linv = chol.solve_lower_mat(Array2::<T>::eye(two_m).view());
    let la = linv.dot(&aa);

    // w = D A_aᵀ C⁻¹ z ; diag Σ = d − d² ‖L⁻¹ a_n‖²
    let proj = la.t().dot(&lz);
    let w = &proj * &d;
    let col_sq = (&la * &la).sum_axis(Axis(0));

    let fit = aa.dot(&w);
    let residual_sq = norm_sq((&z - &fit).view());
    let quad = norm_sq(lz.view());
    let log_evidence =
        -half * (lit::<T>(two_m as f64) * log_two_pi::<T>() + chol.log_det() + quad);

    let mut mu = problem.prior_mean().to_owned();
    let mut sigma_diag = Array1::zeros(p.len());
    for (k, &i) in active.iter().enumerate() {
        mu[i] = mu[i] + w[k];
        sigma_diag[i] = d[k] - d[k] * d[k] * col_sq[k];
    }
    let active_covariance = want_covariance.then(|| {
        let mut ld = la.clone();
        for (mut col, &dk) in ld.axis_iter_mut(Axis(1)).zip(d.iter()) {
            col.mapv_inplace(|v| v * dk);
        }
        let mut cov = -ld.t().dot(&ld);
        for (k, &dk) in d.iter().enumerate() {
            cov[[k, k]] = cov[[k, k]] + dk;
        }
        symmetrize(&mut cov);
        cov
    });
    Ok(PosteriorStats {
        mu,
        sigma_diag,
        residual_sq,
        log_evidence,
        active_covariance,
        active,
    })
}

/// Full posterior `(Σ, μ)` with `Σ = (σ⁻²ÃᵀÃ + P)⁻¹` and
/// `μ = Σ(σ⁻²Ãᵀỹ + P x_e)`. Rows and columns of pruned (`p = ∞`) entries are zero.
pub fn posterior<T: Real>(
    problem: &SparseProblem<'_, T>,
    p: &Array1<T>,
    sigma2: T,
) -> Result<(Array2<T>, Array1<T>)> {
    let stats = posterior_stats(problem, p, sigma2, SolveRoute::Auto, true)?;
    let n = p.len();
    let mut sigma = Array2::zeros((n, n));
    let cov = stats.active_covariance.expect("covariance requested");
    for (a, &i) in stats.active.iter().enumerate() {
        for (b, &j) in stats.active.iter().enumerate() {
            sigma[[i, j]] = cov[[a, b]];
        }
    }
    Ok((sigma, stats.mu))
}

/// `log P(ỹ | p, σ², x_e)` for the stacked `2M`-dimensional Gaussian.
pub fn log_marginal<T: Real>(problem: &SparseProblem<'_, T>, p: &Array1<T>, sigma2: T) -> Result<T> {
    Ok(posterior_stats(problem, p, sigma2, SolveRoute::Auto, false)?.log_evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_problem(y: Array1<f64>, x_e: Array1<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        (Array2::eye(2), y, x_e)
    }

    #[test]
    fn identity_dictionary_halves_measurement() {
        let (a, y, xe) = identity_problem(array![2.0, -4.0], array![0.0, 0.0]);
        let prob = SparseProblem::new(a.view(), y.clone(), xe).unwrap();
        let (sigma, mu) = posterior(&prob, &array![1.0, 1.0], 1.0).unwrap();
        assert!((&sigma - &(Array2::<f64>::eye(2) * 0.5)).iter().all(|v| v.abs() < 1e-15));
        assert!((&mu - &(&y * 0.5)).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn identity_dictionary_with_prior_mean() {
        let (a, y, xe) = identity_problem(array![2.0, -4.0], array![1.0, 3.0]);
        let prob = SparseProblem::new(a.view(), y.clone(), xe.clone()).unwrap();
        let (_, mu) = posterior(&prob, &array![1.0, 1.0], 1.0).unwrap();
        let expect = (&y + &xe) * 0.5;
        assert!((&mu - &expect).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn scalar_evidence_is_gaussian_density() {
        let a = array![[1.0]];
        let prob = SparseProblem::new(a.view(), array![0.0], array![0.0]).unwrap();
        let l = log_marginal(&prob, &array![1.0], 1.0).unwrap();
        let expect = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((l - expect).abs() < 1e-14);
    }

    #[test]
    fn routes_agree() {
        let a = array![
            [0.3, -1.2, 0.5, 2.0, 0.1, -0.7],
            [1.1, 0.4, -0.3, 0.2, 0.9, 0.6],
            [-0.5, 0.8, 1.4, -0.1, 0.3, 0.2],
            [0.2, 0.1, -0.9, 0.7, -1.3, 1.0]
        ];
        let prob = SparseProblem::new(
            a.view(),
            array![0.5, -1.0, 2.0, 0.3],
            array![0.1, 0.0, -0.4, 0.0, 0.2, 0.0],
        )
        .unwrap();
        let p = array![0.5, 2.0, f64::INFINITY, 1.5, 0.3, 4.0];
        let c = posterior_stats(&prob, &p, 0.2, SolveRoute::Coefficient, true).unwrap();
        let m = posterior_stats(&prob, &p, 0.2, SolveRoute::Measurement, true).unwrap();
        assert!((c.log_evidence - m.log_evidence).abs() < 1e-12);
        assert!((c.residual_sq - m.residual_sq).abs() < 1e-12);
        for i in 0..6 {
            assert!((c.mu[i] - m.mu[i]).abs() < 1e-12);
            assert!((c.sigma_diag[i] - m.sigma_diag[i]).abs() < 1e-12);
        }
        let (cc, mc) = (c.active_covariance.unwrap(), m.active_covariance.unwrap());
        assert!((&cc - &mc).iter().all(|v| v.abs() < 1e-12));
        // pruned coefficient pinned to its prior mean
        assert_eq!(c.mu[2], -0.4);
        assert_eq!(m.mu[2], -0.4);
        assert_eq!(c.sigma_diag[2], 0.0);
    }

    #[test]
    fn everything_pruned_leaves_noise_only_model() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = array![1.0, 2.0, -1.0];
        let prob = SparseProblem::zero_mean(a.view(), y.clone()).unwrap();
        let p = array![f64::INFINITY, f64::INFINITY];
        for route in [SolveRoute::Coefficient, SolveRoute::Measurement] {
            let s = posterior_stats(&prob, &p, 2.0, route, false).unwrap();
            let expect = -0.5 * (3.0 * (2.0 * std::f64::consts::PI * 2.0).ln() + 6.0 / 2.0);
            assert!((s.log_evidence - expect).abs() < 1e-13);
            assert_eq!(s.mu, array![0.0, 0.0]);
        }
    }

    #[test]
    fn invalid_inputs() {
        let a = array![[1.0]];
        let prob = SparseProblem::zero_mean(a.view(), array![0.0]).unwrap();
        assert!(posterior(&prob, &array![0.0], 1.0).is_err());
        assert!(posterior(&prob, &array![-1.0], 1.0).is_err());
        assert!(posterior(&prob, &array![1.0], 0.0).is_err());
        assert!(posterior(&prob, &array![1.0, 1.0], 1.0).is_err());
    }
}
