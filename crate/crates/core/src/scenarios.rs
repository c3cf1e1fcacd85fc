//! Seeded Monte Carlo experiments comparing per-snapshot sparse Bayesian
//! estimation (zero prior mean every snapshot) with the Kalman tracker.

use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{
    build_dictionary, realify_dictionary, synthesize_snapshot, AngularGrid, ArrayGeometry,
};
use crate::bcskf::{BoundaryPolicy, CovariancePropagation, ShiftModel, Tracker, TrackerConfig};
use crate::error::{Error, Result};
use crate::sparse_bayes::{run_modified_rvm, SolverConfig, SparseProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialDoa {
    Fixed(f64),
    /// Uniform over grid angles that keep the whole track inside `[0°, 180°]`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Amplitude {
    Fixed(Complex<f64>),
    /// `+1` or `−1` with equal probability, drawn once per trial.
    RandomSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Independent zero-mean estimate at every snapshot.
    Baseline,
    /// Shifted-prior estimate fed through the Kalman tracker.
    Modified,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Modified => "modified",
        }
    }
}

/// Where both methods take the noise variance from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// `σ²` held at the scenario's `noise_var`.
    #[default]
    Known,
    /// `σ²` re-estimated by the solver, starting from `solver.sigma2_init`.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub initial_doa: InitialDoa,
    /// Degrees per snapshot (signed).
    pub doa_rate_deg: f64,
    pub num_snapshots: usize,
    pub amplitude: Amplitude,
    /// Variance of each real noise component.
    pub noise_var: f64,
    pub num_sensors: usize,
    pub spacing_wavelengths: f64,
    pub grid_spacing_deg: f64,
    pub num_trials: usize,
    pub base_seed: u64,
    pub method: Method,
    pub solver: SolverConfig<f64>,
    pub noise_model: NoiseModel,
    pub warm_start_sigma2: bool,
    pub covariance: CovariancePropagation,
    pub boundary: BoundaryPolicy,
    pub sparse_state: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "endfire".into(),
            initial_doa: InitialDoa::Fixed(20.0),
            doa_rate_deg: -1.0,
            num_snapshots: 20,
            amplitude: Amplitude::Fixed(Complex::new(1.0, 0.0)),
            noise_var: 0.4,
            num_sensors: 20,
            spacing_wavelengths: 0.5,
            grid_spacing_deg: 1.0,
            num_trials: 100,
            base_seed: 1,
            method: Method::Modified,
            solver: SolverConfig::default(),
            noise_model: NoiseModel::Known,
            warm_start_sigma2: true,
            covariance: CovariancePropagation::Shifted,
            boundary: BoundaryPolicy::Drop,
            sparse_state: true,
        }
    }
}

/// Dictionary and geometry shared by every trial of a scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub geometry: ArrayGeometry<f64>,
    pub grid: AngularGrid<f64>,
    pub dictionary: Array2<f64>,
    pub shift: ShiftModel,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_trials == 0 {
            return Err(Error::invalid("num_trials must be at least 1"));
        }
        if self.num_snapshots == 0 {
            return Err(Error::invalid("num_snapshots must be at least 1"));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::invalid("noise_var must be non-negative"));
        }
        self.solver.validate()?;
        let grid = AngularGrid::uniform(self.grid_spacing_deg)?;
        ShiftModel::from_rate(self.doa_rate_deg, &grid)?;
        let span = self.doa_rate_deg * (self.num_snapshots as f64 - 1.0);
        match self.initial_doa {
            InitialDoa::Fixed(theta) => {
                if grid.index_of(theta).is_none() || !(0.0..=180.0).contains(&theta) {
                    return Err(Error::OffGrid(theta));
                }
            }
            InitialDoa::Random => {
                if span.abs() > 180.0 {
                    return Err(Error::invalid("track longer than the angular range"));
                }
            }
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let geometry = ArrayGeometry::uniform(self.num_sensors, self.spacing_wavelengths)?;
        let grid = AngularGrid::uniform(self.grid_spacing_deg)?;
        let dictionary = realify_dictionary(build_dictionary(&geometry, &grid)?.view());
        let shift = ShiftModel::from_rate(self.doa_rate_deg, &grid)?.with_boundary(self.boundary);
        Ok(Setup {
            geometry,
            grid,
            dictionary,
            shift,
        })
    }

    /// Solver settings after applying the noise model.
    pub fn effective_solver(&self) -> SolverConfig<f64> {
        let mut solver = self.solver.clone();
        if self.noise_model == NoiseModel::Known {
            solver.sigma2_init = self.noise_var.max(solver.sigma2_floor);
            solver.estimate_sigma2 = false;
        }
        solver
    }

    /// Seed of trial `q`.
    pub fn trial_seed(&self, q: usize) -> u64 {
        self.base_seed.wrapping_add(q as u64)
    }
}

/// Simulated measurements of one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub seed: u64,
    pub amplitude: Complex<f64>,
    pub true_doas: Vec<f64>,
    /// Real-embedded snapshots `ỹ_k`.
    pub measurements: Vec<ndarray::Array1<f64>>,
}

/// Draws the true track and its noisy snapshots. Depends only on the scenario and `seed`.
pub fn generate_trial(spec: &ScenarioSpec, setup: &Setup, seed: u64) -> Result<TrialData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &setup.grid;
    let steps = setup.shift.delta_indices;
    let k_last = spec.num_snapshots as isize - 1;
    let start_index = match spec.initial_doa {
        InitialDoa::Fixed(theta) => grid.index_of(theta).ok_or(Error::OffGrid(theta))? as isize,
        InitialDoa::Random => {
            let last = grid.len() as isize - 1;
            let (lo, hi) = if steps >= 0 {
                (0, last - steps * k_last)
            } else {
                (-steps * k_last, last)
            };
            if lo > hi {
                return Err(Error::invalid("no start angle keeps the track on the grid"));
            }
            rng.random_range(lo as i64..=hi as i64) as isize
        }
    };
    let amplitude = match spec.amplitude {
        Amplitude::Fixed(a) => a,
        Amplitude::RandomSign => {
            if rng.random_bool(0.5) {
                Complex::new(1.0, 0.0)
            } else {
                Complex::new(-1.0, 0.0)
            }
        }
    };
    let mut true_doas = Vec::with_capacity(spec.num_snapshots);
    let mut measurements = Vec::with_capacity(spec.num_snapshots);
    let last = grid.len() as isize - 1;
    for k in 0..spec.num_snapshots {
        let idx = (start_index + steps * k as isize).clamp(0, last) as usize;
        let theta = grid.angle(idx);
        let snap = synthesize_snapshot(
            &setup.geometry,
            grid,
            &[(theta, amplitude)],
            spec.noise_var,
            k,
            &mut rng,
        )?;
        true_doas.push(theta);
        measurements.push(snap.realify());
    }
    Ok(TrialData {
        seed,
        amplitude,
        true_doas,
        measurements,
    })
}

/// One row of the per-snapshot log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub trial: usize,
    pub k: usize,
    pub true_doa_deg: f64,
    /// `None` when nothing survived thresholding or the solver failed.
    pub est_doa_deg: Option<f64>,
    pub num_kept: usize,
    pub iters: usize,
    pub solver_time_s: f64,
}

/// Runs `method` over one trial's measurements.
pub fn run_method(
    spec: &ScenarioSpec,
    setup: &Setup,
    data: &TrialData,
    trial: usize,
    method: Method,
) -> Result<Vec<SnapshotRecord>> {
    let a = setup.dictionary.view();
    let solver = spec.effective_solver();
    let mut records = Vec::with_capacity(data.measurements.len());
    let mut tracker = match method {
        Method::Modified => {
            let mut cfg = TrackerConfig::new(solver.clone(), setup.shift);
            cfg.warm_start_sigma2 = spec.warm_start_sigma2;
            cfg.covariance = spec.covariance;
            cfg.sparse_state = spec.sparse_state;
            Some(Tracker::new(a, &setup.grid, cfg)?)
        }
        Method::Baseline => None,
    };
    for (k, (y, &truth)) in data.measurements.iter().zip(&data.true_doas).enumerate() {
        let started = Instant::now();
        let outcome = match tracker.as_mut() {
            Some(t) => t.step(y.view()).map(|s| s.estimate),
            None => SparseProblem::zero_mean(a, y.clone())
                .and_then(|prob| run_modified_rvm(&prob, &setup.grid, &solver))
                .map(|(_, est)| est),
        };
        let solver_time_s = started.elapsed().as_secs_f64();
        let record = match outcome {
            Ok(est) => SnapshotRecord {
                trial,
                k,
                true_doa_deg: truth,
                est_doa_deg: est.primary_doa,
                num_kept: est.num_kept(),
                iters: est.iterations,
                solver_time_s,
            },
            Err(_) => SnapshotRecord {
                trial,
                k,
                true_doa_deg: truth,
                est_doa_deg: None,
                num_kept: 0,
                iters: 0,
                solver_time_s,
            },
        };
        records.push(record);
    }
    Ok(records)
}

/// Synthesizes trial `seed` and runs `method` on it.
pub fn run_trial(spec: &ScenarioSpec, setup: &Setup, trial: usize, method: Method) -> Result<Vec<SnapshotRecord>> {
    let data = generate_trial(spec, setup, spec.trial_seed(trial))?;
    run_method(spec, setup, &data, trial, method)
}

/// Error assigned to a snapshot with no estimate: distance to the farthest grid angle.
pub fn miss_penalty(truth: f64, grid_min: f64, grid_max: f64) -> f64 {
    (truth - grid_min).abs().max((grid_max - truth).abs())
}

/// `sqrt(Σ_q |θ_q − θ̂_q|² / Q)`; misses are scored with [`miss_penalty`].
pub fn rmse(true_doas: &[f64], est_doas: &[Option<f64>], grid_min: f64, grid_max: f64) -> Result<f64> {
    if true_doas.len() != est_doas.len() {
        return Err(Error::shape(format!(
            "{} true DOAs vs {} estimates",
            true_doas.len(),
            est_doas.len()
        )));
    }
    if true_doas.is_empty() {
        return Err(Error::invalid("rmse needs at least one trial"));
    }
    let sum: f64 = true_doas
        .iter()
        .zip(est_doas)
        .map(|(&t, e)| match e {
            Some(e) => (t - e).powi(2),
            None => miss_penalty(t, grid_min, grid_max).powi(2),
        })
        .sum();
    Ok((sum / true_doas.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub method: Method,
    /// Trial-major, snapshot-minor.
    pub records: Vec<SnapshotRecord>,
    pub trial_seeds: Vec<u64>,
    /// RMSE across trials at each snapshot.
    pub rmse_series: Vec<f64>,
    /// Mean of `rmse_series`.
    pub mean_rmse_deg: f64,
    /// Mean solver time per snapshot.
    pub mean_time_s: f64,
}

impl RunResult {
    fn aggregate(spec: &ScenarioSpec, setup: &Setup, method: Method, per_trial: Vec<Vec<SnapshotRecord>>) -> Result<Self> {
        let k_count = spec.num_snapshots;
        let (gmin, gmax) = (setup.grid.angle(0), setup.grid.angle(setup.grid.len() - 1));
        let mut rmse_series = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let truth: Vec<f64> = per_trial.iter().map(|t| t[k].true_doa_deg).collect();
            let est: Vec<Option<f64>> = per_trial.iter().map(|t| t[k].est_doa_deg).collect();
            rmse_series.push(rmse(&truth, &est, gmin, gmax)?);
        }
        let records: Vec<SnapshotRecord> = per_trial.into_iter().flatten().collect();
        let mean_rmse_deg = rmse_series.iter().sum::<f64>() / k_count as f64;
        let mean_time_s = records.iter().map(|r| r.solver_time_s).sum::<f64>() / records.len() as f64;
        Ok(Self {
            name: spec.name.clone(),
            method,
            records,
            trial_seeds: (0..spec.num_trials).map(|q| spec.trial_seed(q)).collect(),
            rmse_series,
            mean_rmse_deg,
            mean_time_s,
        })
    }
}

fn in_pool<R: Send>(threads: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

/// Runs `spec.method` over all trials. `threads = None` uses the global pool.
pub fn run_monte_carlo(spec: &ScenarioSpec, threads: Option<usize>) -> Result<RunResult> {
    let setup = spec.setup()?;
    let per_trial = in_pool(threads, || {
        (0..spec.num_trials)
            .into_par_iter()
            .map(|q| run_trial(spec, &setup, q, spec.method))
            .collect::<Result<Vec<_>>>()
    })??;
    RunResult::aggregate(spec, &setup, spec.method, per_trial)
}

/// Baseline and tracker results on identical measurement sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: RunResult,
    pub modified: RunResult,
}

impl Comparison {
    pub fn rmse_series(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.baseline
            .rmse_series
            .iter()
            .zip(&self.modified.rmse_series)
            .enumerate()
            .map(|(k, (&b, &m))| (k, b, m))
    }
}

/// Runs both methods on each trial's measurements.
pub fn compare_methods(spec: &ScenarioSpec, threads: Option<usize>) -> Result<Comparison> {
    let setup = spec.setup()?;
    let pairs = in_pool(threads, || {
        (0..spec.num_trials)
            .into_par_iter()
            .map(|q| {
                let data = generate_trial(spec, &setup, spec.trial_seed(q))?;
                let b = run_method(spec, &setup, &data, q, Method::Baseline)?;
                let m = run_method(spec, &setup, &data, q, Method::Modified)?;
                Ok((b, m))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let (b, m): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(Comparison {
        baseline: RunResult::aggregate(spec, &setup, Method::Baseline, b)?,
        modified: RunResult::aggregate(spec, &setup, Method::Modified, m)?,
    })
}
