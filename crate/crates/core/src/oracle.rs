//! Naive dense reference implementations for cross-checking the production
//! solver and filter. Everything here goes through `nalgebra` and shares no
//! numerical code with the rest of the crate.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::sparse_bayes::SparseProblem;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge within {0} subdivisions")]
    Quadrature(usize),
}

pub type OracleResult<T> = std::result::Result<T, OracleError>;

fn to_matrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_vector(v: ArrayView1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

fn from_matrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn from_vector(v: &DVector<f64>) -> Array1<f64> {
    v.iter().copied().collect()
}

fn check_precisions(p: &Array1<f64>, n: usize) -> OracleResult<()> {
    if p.len() != n {
        return Err(OracleError::Shape(format!("{} precisions for {n} coefficients", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(OracleError::InvalidArgument("precisions must be finite and positive".into()));
    }
    Ok(())
}

/// `log N(ỹ; Ã x_e, σ²I + Ã P⁻¹ Ãᵀ)` by dense Cholesky.
pub fn log_marginal_direct(problem: &SparseProblem<'_, f64>, p: &Array1<f64>, sigma2: f64) -> OracleResult<f64> {
    let a = to_matrix(problem.dictionary());
    let y = to_vector(problem.measurement());
    let xe = to_vector(problem.prior_mean());
    check_precisions(p, a.ncols())?;
    let m = a.nrows();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|v| 1.0 / v)));
    let c = DMatrix::<f64>::identity(m, m) * sigma2 + &a * d * a.transpose();
    let r = y - &a * xe;
    gaussian_log_density(&r, c)
}

/// `log N(r; 0, C)`.
fn gaussian_log_density(r: &DVector<f64>, c: DMatrix<f64>) -> OracleResult<f64> {
    let m = r.len() as f64;
    let chol = c.cholesky().ok_or(OracleError::NotPositiveDefinite)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(r));
    let out = -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + log_det + quad);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(OracleError::NonFinite("log density".into()))
    }
}

/// Solves `(σ⁻²ÃᵀÃ + P) μ = σ⁻²Ãᵀỹ + P x_e` by LU; returns `(Σ, μ)`.
pub fn posterior_dense(
    problem: &SparseProblem<'_, f64>,
    p: &Array1<f64>,
    sigma2: f64,
) -> OracleResult<(Array2<f64>, Array1<f64>)> {
    let a = to_matrix(problem.dictionary());
    let y = to_vector(problem.measurement());
    let xe = to_vector(problem.prior_mean());
    check_precisions(p, a.ncols())?;
    let pd = DMatrix::from_diagonal(&to_vector(p.view()));
    let h = a.transpose() * &a / sigma2 + &pd;
    let rhs = a.transpose() * y / sigma2 + &pd * xe;
    let lu = h.lu();
    let mu = lu.solve(&rhs).ok_or(OracleError::Singular)?;
    let sigma = lu.try_inverse().ok_or(OracleError::Singular)?;
    Ok((from_matrix(&sigma), from_vector(&mu)))
}

/// `(σ²I + Ã P⁻¹ Ãᵀ)⁻¹` two ways: explicit inverse and the Woodbury form
/// `σ⁻²I − σ⁻⁴ Ã (P + σ⁻²ÃᵀÃ)⁻¹ Ãᵀ`.
pub fn woodbury_pair(
    a: ArrayView2<'_, f64>,
    p: &Array1<f64>,
    sigma2: f64,
) -> OracleResult<(Array2<f64>, Array2<f64>)> {
    let a = to_matrix(a);
    check_precisions(p, a.ncols())?;
    let m = a.nrows();
    let eye = DMatrix::<f64>::identity(m, m);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|v| 1.0 / v)));
    let direct = (&eye * sigma2 + &a * d * a.transpose())
        .try_inverse()
        .ok_or(OracleError::Singular)?;
    let inner = (DMatrix::from_diagonal(&to_vector(p.view())) + a.transpose() * &a / sigma2)
        .try_inverse()
        .ok_or(OracleError::Singular)?;
    let woodbury = &eye / sigma2 - &a * inner * a.transpose() / (sigma2 * sigma2);
    Ok((from_matrix(&direct), from_matrix(&woodbury)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FiniteDiffScheme {
    #[default]
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffSpec {
    /// Step relative to `max(|x_i|, 1)`.
    pub step: f64,
    pub scheme: FiniteDiffScheme,
}

impl Default for FiniteDiffSpec {
    fn default() -> Self {
        Self {
            step: 1e-6,
            scheme: FiniteDiffScheme::Central,
        }
    }
}

/// Central-difference gradient of `f` at `at`.
pub fn finite_diff_gradient<F>(f: F, at: &[f64], spec: FiniteDiffSpec) -> OracleResult<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(spec.step > 0.0) {
        return Err(OracleError::InvalidArgument("finite-difference step must be positive".into()));
    }
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let h = spec.step * at[i].abs().max(1.0);
        x[i] = at[i] + h;
        let up = f(&x);
        x[i] = at[i] - h;
        let down = f(&x);
        x[i] = at[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(OracleError::NonFinite(format!("f near coordinate {i}")));
        }
        let g = match spec.scheme {
            FiniteDiffScheme::Central => (up - down) / (2.0 * h),
        };
        grad.push(g);
    }
    Ok(grad)
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Evidence `∫ N(ỹ; ã x, σ²I) N(x; x_e, 1/p) dx` for a single-column
/// dictionary, by adaptive Simpson quadrature over `x_e ± 10/√p`.
pub fn evidence_quadrature_1d(problem: &SparseProblem<'_, f64>, p: f64, sigma2: f64) -> OracleResult<f64> {
    let a = problem.dictionary();
    if a.ncols() != 1 {
        return Err(OracleError::Shape(format!("expected one column, got {}", a.ncols())));
    }
    if !(p > 0.0) || !(sigma2 > 0.0) {
        return Err(OracleError::InvalidArgument("p and σ² must be positive".into()));
    }
    let col: Vec<f64> = a.column(0).to_vec();
    let y = problem.measurement().to_vec();
    let xe = problem.prior_mean()[0];
    let m = y.len() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let integrand = |x: f64| {
        let r2: f64 = y.iter().zip(&col).map(|(yi, ai)| (yi - ai * x).powi(2)).sum();
        let like = (-0.5 * r2 / sigma2).exp() / (two_pi * sigma2).powf(m / 2.0);
        let prior = (p / two_pi).sqrt() * (-0.5 * p * (x - xe).powi(2)).exp();
        like * prior
    };
    let half = 10.0 / p.sqrt();
    let (lo, hi) = (xe - half, xe + half);
    let mid = 0.5 * (lo + hi);
    let (flo, fmid, fhi) = (integrand(lo), integrand(mid), integrand(hi));
    let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    let mut budget = 200_000usize;
    let value = simpson(&integrand, lo, hi, flo, fmid, fhi, whole, 1e-15, 50, &mut budget)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(OracleError::NonFinite("quadrature".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    budget: &mut usize,
) -> OracleResult<f64> {
    if *budget == 0 {
        return Err(OracleError::Quadrature(200_000));
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, budget)?
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, budget)?)
}

/// Output of the textbook filter.
#[derive(Debug, Clone)]
pub struct DenseKalman {
    pub x: Array1<f64>,
    pub sigma: Array2<f64>,
    pub gain: Array2<f64>,
}

/// Textbook Kalman measurement update for `ỹ = Ã x + n`, `n ~ N(0, σ²I)`.
/// Forms the innovation from `y` itself.
pub fn kalman_update_dense(
    a: ArrayView2<'_, f64>,
    x_pred: ArrayView1<'_, f64>,
    sigma_pred: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    sigma2: f64,
) -> OracleResult<DenseKalman> {
    let h = to_matrix(a);
    let x = to_vector(x_pred);
    let p = to_matrix(sigma_pred);
    let z = to_vector(y);
    if h.ncols() != x.len() || p.shape() != (x.len(), x.len()) || h.nrows() != z.len() {
        return Err(OracleError::Shape("kalman inputs".into()));
    }
    let m = h.nrows();
    let s = &h * &p * h.transpose() + DMatrix::<f64>::identity(m, m) * sigma2;
    let s_inv = s.try_inverse().ok_or(OracleError::Singular)?;
    let k = &p * h.transpose() * s_inv;
    let x_new = &x + &k * (z - &h * &x);
    let n = x.len();
    let p_new = (DMatrix::<f64>::identity(n, n) - &k * &h) * &p;
    Ok(DenseKalman {
        x: from_vector(&x_new),
        sigma: from_matrix(&p_new),
        gain: from_matrix(&k),
    })
}

/// Settings for [`classical_rvm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalRvmSettings {
    pub iterations: usize,
    pub p_init: f64,
    pub sigma2_init: f64,
    pub sigma2_floor: f64,
    pub p_cap: f64,
    pub denom_eps: f64,
}

/// State after one classical iteration. Pruned precisions are `∞`.
#[derive(Debug, Clone)]
pub struct ClassicalIterate {
    pub p: Vec<f64>,
    pub sigma2: f64,
    pub mu: Vec<f64>,
}

/// Zero-mean relevance vector machine with `p ← γ/μ²` and
/// `σ² ← ‖ỹ − Ãμ‖² / (2M − Σγ)`. Returns the posterior mean and
/// hyperparameters after every iteration, starting with the initial posterior.
pub fn classical_rvm(
    a: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: ClassicalRvmSettings,
) -> OracleResult<Vec<ClassicalIterate>> {
    let phi = to_matrix(a);
    let t = to_vector(y);
    let (m, n) = phi.shape();
    let mut alpha = vec![settings.p_init; n];
    let mut beta_inv = settings.sigma2_init;
    let mut out = Vec::with_capacity(settings.iterations + 1);
    for it in 0..=settings.iterations {
        let keep: Vec<usize> = (0..n).filter(|&i| alpha[i].is_finite()).collect();
        let mut mean = vec![0.0; n];
        let mut diag = vec![0.0; n];
        if !keep.is_empty() {
            let sub = DMatrix::from_fn(m, keep.len(), |r, c| phi[(r, keep[c])]);
            let mut prec = sub.transpose() * &sub / beta_inv;
            for (c, &i) in keep.iter().enumerate() {
                prec[(c, c)] += alpha[i];
            }
            let cov = prec.try_inverse().ok_or(OracleError::Singular)?;
            let w = &cov * sub.transpose() * &t / beta_inv;
            for (c, &i) in keep.iter().enumerate() {
                mean[i] = w[c];
                diag[i] = cov[(c, c)];
            }
        }
        out.push(ClassicalIterate {
            p: alpha.clone(),
            sigma2: beta_inv,
            mu: mean.clone(),
        });
        if it == settings.iterations {
            break;
        }
        let gamma: Vec<f64> = (0..n)
            .map(|i| if alpha[i].is_finite() { 1.0 - alpha[i] * diag[i] } else { 0.0 })
            .collect();
        let fit = &phi * DVector::from_vec(mean.clone());
        let err = (&t - fit).norm_squared();
        let dof = m as f64 - gamma.iter().sum::<f64>();
        if dof <= 0.0 {
            return Err(OracleError::InvalidArgument("more effective parameters than measurements".into()));
        }
        for i in 0..n {
            if !alpha[i].is_finite() {
                continue;
            }
            let next = gamma[i] / (mean[i] * mean[i]).max(settings.denom_eps);
            alpha[i] = if gamma[i] > 0.0 && next <= settings.p_cap { next } else { f64::INFINITY };
        }
        beta_inv = (err / dof).max(settings.sigma2_floor);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_problem(a: f64, y: f64, xe: f64) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        (array![[a]], array![y], array![xe])
    }

    #[test]
    fn unit_gaussian_convolution() {
        let (a, y, xe) = scalar_problem(1.0, 0.0, 0.0);
        let prob = SparseProblem::new(a.view(), y, xe).unwrap();
        let direct = log_marginal_direct(&prob, &array![1.0], 1.0).unwrap();
        let expected = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert!((direct.exp() - expected).abs() < 1e-14);
        let quad = evidence_quadrature_1d(&prob, 1.0, 1.0).unwrap();
        assert!((quad - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn shifted_prior_mean_translates_density() {
        let c = 0.7;
        let (a, _, _) = scalar_problem(1.0, 0.0, 0.0);
        let base = SparseProblem::new(a.view(), array![0.3], array![0.0]).unwrap();
        let moved = SparseProblem::new(a.view(), array![0.3 + c], array![c]).unwrap();
        let e0 = evidence_quadrature_1d(&base, 2.0, 0.5).unwrap();
        let e1 = evidence_quadrature_1d(&moved, 2.0, 0.5).unwrap();
        assert!((e0 - e1).abs() / e0 < 1e-9);
    }

    #[test]
    fn quadrature_matches_closed_form_on_multirow_column() {
        let a = array![[0.8], [-0.3], [1.1]];
        let prob = SparseProblem::new(a.view(), array![0.5, 0.1, -0.4], array![0.2]).unwrap();
        let direct = log_marginal_direct(&prob, &array![3.0], 0.6).unwrap().exp();
        let quad = evidence_quadrature_1d(&prob, 3.0, 0.6).unwrap();
        assert!((quad - direct).abs() / direct < 1e-6);
    }

    #[test]
    fn large_noise_limit() {
        let a = array![[1.0, 0.5], [0.2, -1.0]];
        let y = array![0.3, -0.2];
        let prob = SparseProblem::new(a.view(), y.clone(), array![0.1, 0.0]).unwrap();
        let s2 = 1e6;
        let direct = log_marginal_direct(&prob, &array![1.0, 2.0], s2).unwrap();
        let r = &y - &a.dot(&array![0.1, 0.0]);
        let noise_only = -0.5 * (2.0 * (2.0 * std::f64::consts::PI * s2).ln() + r.dot(&r) / s2);
        assert!((direct - noise_only).abs() < 1e-3);
    }

    #[test]
    fn gradient_of_squared_norm() {
        let x0 = [0.3, -1.2, 2.0];
        let g = finite_diff_gradient(|x| x.iter().map(|v| v * v).sum(), &x0, FiniteDiffSpec::default()).unwrap();
        for (gi, xi) in g.iter().zip(x0) {
            assert!((gi - 2.0 * xi).abs() < 1e-6);
        }
        let flat = finite_diff_gradient(|_| 4.0, &x0, FiniteDiffSpec::default()).unwrap();
        assert!(flat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_rejects_non_finite() {
        let err = finite_diff_gradient(|x| x[0].ln(), &[0.0], FiniteDiffSpec::default()).unwrap_err();
        assert!(matches!(err, OracleError::NonFinite(_)));
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_section_max(|x| -(x - 1.3).powi(2), -5.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-8);
    }

    #[test]
    fn woodbury_forms_agree() {
        let a = array![[1.0, 0.5, -0.2], [0.2, -1.0, 0.7]];
        let (d, w) = woodbury_pair(a.view(), &array![1.0, 2.0, 0.5], 0.3).unwrap();
        for (x, y) in d.iter().zip(w.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_kalman_zero_innovation() {
        let a = array![[1.0, 0.0], [0.5, 1.0]];
        let x = array![0.2, -0.1];
        let y = a.dot(&x);
        let s = array![[1.0, 0.1], [0.1, 0.5]];
        let out = kalman_update_dense(a.view(), x.view(), s.view(), y.view(), 0.2).unwrap();
        for (u, v) in out.x.iter().zip(x.iter()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_positive_precision() {
        let (a, y, xe) = scalar_problem(1.0, 0.0, 0.0);
        let prob = SparseProblem::new(a.view(), y, xe).unwrap();
        assert!(log_marginal_direct(&prob, &array![0.0], 1.0).is_err());
        assert!(posterior_dense(&prob, &array![f64::INFINITY], 1.0).is_err());
    }
}
