//! Scenario files, measurement CSV files, result bundles and the command
//! implementations behind the `doa-bcskf` binary.
//!
//! Scenario files are JSON objects; every key is optional and defaults to the
//! value printed by [`ScenarioFile::defaults_json`]. Unknown keys are rejected.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array1;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::array_model::{
    build_dictionary, complexify_vector, realify_dictionary, AngularGrid, ArrayGeometry, ComplexSnapshot,
};
use crate::bcskf::{BoundaryPolicy, CovariancePropagation, Tracker, TrackerConfig};
use crate::error::{Error, Result};
use crate::scenarios::{
    compare_methods, generate_trial, run_monte_carlo, Amplitude, InitialDoa, Method, NoiseModel, RunResult,
    ScenarioSpec, SnapshotRecord,
};
use crate::sparse_bayes::{run_modified_rvm, SolveRoute, SolverConfig, SparseProblem, UpdateRule};

/// Version stamp written into every summary.
pub const ARTIFACT_VERSION: &str = "1";

pub const MEASUREMENT_HEADER: [&str; 4] = ["k", "sensor", "re", "im"];
pub const RECORDS_HEADER: [&str; 7] = [
    "trial",
    "k",
    "true_doa_deg",
    "est_doa_deg",
    "num_kept",
    "iters",
    "solver_ms",
];
pub const RMSE_SERIES_HEADER: [&str; 3] = ["k", "rmse_baseline", "rmse_modified"];
pub const TRACK_HEADER: [&str; 6] = ["k", "est_doa_deg", "num_kept", "iters", "sigma2", "boundary"];

/// Scenario files shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 3] = [
    ("endfire", include_str!("../scenarios/endfire.json")),
    ("non_endfire", include_str!("../scenarios/non_endfire.json")),
    ("random_init", include_str!("../scenarios/random_init.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomTag {
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomSignTag {
    RandomPm1,
}

/// `initial_doa_deg`: a grid angle or `"random"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialDoaField {
    Degrees(f64),
    Tag(RandomTag),
}

/// `amplitude`: a real number, `[re, im]` or `"random_pm1"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmplitudeField {
    Real(f64),
    Complex([f64; 2]),
    Tag(RandomSignTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Baseline,
    Modified,
    #[default]
    Both,
}

impl MethodSelection {
    pub fn name(self) -> &'static str {
        match self {
            MethodSelection::Baseline => "baseline",
            MethodSelection::Modified => "modified",
            MethodSelection::Both => "both",
        }
    }
}

impl fmt::Display for MethodSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "modified" => Ok(Self::Modified),
            "both" => Ok(Self::Both),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected baseline, modified or both)"
            ))),
        }
    }
}

/// Solver settings as they appear in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverFile {
    pub max_iters: usize,
    pub tol: f64,
    pub p_init: f64,
    /// Starting noise variance; only used with `noise_model: "estimated"`.
    pub sigma2_init: f64,
    pub sigma2_floor: f64,
    pub p_cap: f64,
    pub denom_eps: f64,
    pub threshold_eta: f64,
    pub update_rule: UpdateRule,
    pub route: SolveRoute,
}

impl Default for SolverFile {
    fn default() -> Self {
        let c = SolverConfig::<f64>::default();
        Self {
            max_iters: c.max_iters,
            tol: c.tol,
            p_init: c.p_init,
            sigma2_init: c.sigma2_init,
            sigma2_floor: c.sigma2_floor,
            p_cap: c.p_cap,
            denom_eps: c.denom_eps,
            threshold_eta: c.threshold_eta,
            update_rule: c.update_rule,
            route: c.route,
        }
    }
}

impl SolverFile {
    pub fn to_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            p_init: self.p_init,
            sigma2_init: self.sigma2_init,
            sigma2_floor: self.sigma2_floor,
            p_cap: self.p_cap,
            denom_eps: self.denom_eps,
            threshold_eta: self.threshold_eta,
            update_rule: self.update_rule,
            route: self.route,
            ..SolverConfig::default()
        }
    }
}

/// Thresholds evaluated by `bench --check` on top of `modified < baseline`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckFile {
    pub max_modified_rmse_deg: Option<f64>,
    /// Required `baseline / modified` mean-RMSE ratio.
    pub min_baseline_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub initial_doa_deg: InitialDoaField,
    pub doa_rate_deg: f64,
    pub num_snapshots: usize,
    pub amplitude: AmplitudeField,
    /// Variance of each real noise component.
    pub noise_var: f64,
    pub num_sensors: usize,
    pub spacing_wavelengths: f64,
    pub grid_spacing_deg: f64,
    pub num_trials: usize,
    /// Trial `q` uses seed `seed + q`.
    pub seed: u64,
    pub method: MethodSelection,
    pub noise_model: NoiseModel,
    pub warm_start_sigma2: bool,
    pub covariance: CovariancePropagation,
    pub boundary: BoundaryPolicy,
    pub sparse_state: bool,
    pub solver: SolverFile,
    pub check: CheckFile,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let spec = ScenarioSpec::default();
        Self {
            name: spec.name,
            initial_doa_deg: InitialDoaField::Degrees(20.0),
            doa_rate_deg: spec.doa_rate_deg,
            num_snapshots: spec.num_snapshots,
            amplitude: AmplitudeField::Real(1.0),
            noise_var: spec.noise_var,
            num_sensors: spec.num_sensors,
            spacing_wavelengths: spec.spacing_wavelengths,
            grid_spacing_deg: spec.grid_spacing_deg,
            num_trials: spec.num_trials,
            seed: spec.base_seed,
            method: MethodSelection::Both,
            noise_model: spec.noise_model,
            warm_start_sigma2: spec.warm_start_sigma2,
            covariance: spec.covariance,
            boundary: spec.boundary,
            sparse_state: spec.sparse_state,
            solver: SolverFile::default(),
            check: CheckFile::default(),
            output_dir: None,
        }
    }
}

/// Command-line values that replace scenario-file fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub snapshots: Option<usize>,
    pub method: Option<MethodSelection>,
    pub eta: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ScenarioFile {
    /// Parses and validates a scenario document. `origin` labels diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
        })?;
        file.validate()
            .map_err(|e| Error::Parse(format!("{origin}: {e}")))?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// A shipped scenario by name (`endfire`, `non_endfire`, `random_init`).
    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::invalid(format!("no bundled scenario named {name:?}")))?;
        Self::parse(text, name)
    }

    pub fn defaults_json() -> String {
        serde_json::to_string_pretty(&Self::default()).expect("defaults serialize")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(q) = o.trials {
            self.num_trials = q;
        }
        if let Some(k) = o.snapshots {
            self.num_snapshots = k;
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(eta) = o.eta {
            self.solver.threshold_eta = eta;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_modified_rmse_deg", self.check.max_modified_rmse_deg),
            ("min_baseline_ratio", self.check.min_baseline_ratio),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!("check.{name} must be positive")));
                }
            }
        }
        self.to_spec(Method::Modified).validate()
    }

    /// The scenario as run by one method.
    pub fn to_spec(&self, method: Method) -> ScenarioSpec {
        ScenarioSpec {
            name: self.name.clone(),
            initial_doa: match self.initial_doa_deg {
                InitialDoaField::Degrees(d) => InitialDoa::Fixed(d),
                InitialDoaField::Tag(RandomTag::Random) => InitialDoa::Random,
            },
            doa_rate_deg: self.doa_rate_deg,
            num_snapshots: self.num_snapshots,
            amplitude: match self.amplitude {
                AmplitudeField::Real(re) => Amplitude::Fixed(Complex::new(re, 0.0)),
                AmplitudeField::Complex([re, im]) => Amplitude::Fixed(Complex::new(re, im)),
                AmplitudeField::Tag(RandomSignTag::RandomPm1) => Amplitude::RandomSign,
            },
            noise_var: self.noise_var,
            num_sensors: self.num_sensors,
            spacing_wavelengths: self.spacing_wavelengths,
            grid_spacing_deg: self.grid_spacing_deg,
            num_trials: self.num_trials,
            base_seed: self.seed,
            method,
            solver: self.solver.to_config(),
            noise_model: self.noise_model,
            warm_start_sigma2: self.warm_start_sigma2,
            covariance: self.covariance,
            boundary: self.boundary,
            sparse_state: self.sparse_state,
        }
    }

    fn tracker_method(&self) -> Method {
        match self.method {
            MethodSelection::Baseline => Method::Baseline,
            _ => Method::Modified,
        }
    }
}

fn csv_err(origin: &str, line: u64, column: usize, name: &str, msg: impl fmt::Display) -> Error {
    Error::Parse(format!("{origin}:{line}:{column}: {name}: {msg}"))
}

/// Parses a measurement CSV (`k,sensor,re,im`). Rows must list snapshots
/// `0, 1, …` in order, each with sensors `0..M` in order.
pub fn parse_measurements<R: Read>(reader: R, origin: &str) -> Result<Vec<ComplexSnapshot<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("{origin}: {e}")))?.clone();
    if headers.iter().ne(MEASUREMENT_HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "{origin}:1:1: header must be exactly {}, got {}",
            MEASUREMENT_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut snapshots: Vec<Vec<Complex<f64>>> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse(format!("{origin}:{line}: {e}"))
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let index = |i: usize| -> Result<usize> {
            field(i)
                .parse::<usize>()
                .map_err(|e| csv_err(origin, line, i + 1, MEASUREMENT_HEADER[i], e))
        };
        let value = |i: usize| -> Result<f64> {
            let v = field(i)
                .parse::<f64>()
                .map_err(|e| csv_err(origin, line, i + 1, MEASUREMENT_HEADER[i], e))?;
            if !v.is_finite() {
                return Err(csv_err(origin, line, i + 1, MEASUREMENT_HEADER[i], "not finite"));
            }
            Ok(v)
        };
        let (k, sensor, re, im) = (index(0)?, index(1)?, value(2)?, value(3)?);
        if k == snapshots.len() {
            snapshots.push(Vec::new());
        } else if k + 1 != snapshots.len() {
            return Err(csv_err(
                origin,
                line,
                1,
                "k",
                format!("expected {} or {}, got {k}", snapshots.len().saturating_sub(1), snapshots.len()),
            ));
        }
        let current = snapshots.last_mut().expect("pushed above");
        if sensor != current.len() {
            return Err(csv_err(
                origin,
                line,
                2,
                "sensor",
                format!("expected {}, got {sensor}", current.len()),
            ));
        }
        current.push(Complex::new(re, im));
    }
    if snapshots.is_empty() {
        return Err(Error::Parse(format!("{origin}: no measurements")));
    }
    let m = snapshots[0].len();
    if let Some((k, s)) = snapshots.iter().enumerate().find(|(_, s)| s.len() != m) {
        return Err(Error::Parse(format!(
            "{origin}: snapshot {k} has {} sensors, snapshot 0 has {m}",
            s.len()
        )));
    }
    Ok(snapshots
        .into_iter()
        .enumerate()
        .map(|(k, s)| ComplexSnapshot::new(k, Array1::from(s)))
        .collect())
}

pub fn read_measurements(path: &Path) -> Result<Vec<ComplexSnapshot<f64>>> {
    let file = fs::File::open(path)?;
    parse_measurements(file, &path.display().to_string())
}

pub fn write_measurements<W: Write>(writer: W, snapshots: &[ComplexSnapshot<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MEASUREMENT_HEADER)?;
    for (k, snap) in snapshots.iter().enumerate() {
        for (m, z) in snap.data.iter().enumerate() {
            w.write_record([k.to_string(), m.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Snapshots of trial 0 of the scenario (seed `file.seed`).
pub fn cmd_synth(file: &ScenarioFile) -> Result<Vec<ComplexSnapshot<f64>>> {
    let spec = file.to_spec(file.tracker_method());
    let setup = spec.setup()?;
    let data = generate_trial(&spec, &setup, spec.base_seed)?;
    data.measurements
        .iter()
        .enumerate()
        .map(|(k, y)| Ok(ComplexSnapshot::new(k, complexify_vector(y.view())?)))
        .collect()
}

struct Model {
    grid: AngularGrid<f64>,
    dictionary: ndarray::Array2<f64>,
}

fn model_for(file: &ScenarioFile, num_sensors: usize) -> Result<Model> {
    let geometry = ArrayGeometry::uniform(num_sensors, file.spacing_wavelengths)?;
    let grid = AngularGrid::uniform(file.grid_spacing_deg)?;
    let dictionary = realify_dictionary(build_dictionary(&geometry, &grid)?.view());
    Ok(Model { grid, dictionary })
}

/// Single-snapshot estimate as emitted by `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub doas: Vec<f64>,
    pub primary_doa: Option<f64>,
    pub num_kept: usize,
    /// Complex amplitudes at `doas`, as `[re, im]`.
    pub amplitudes: Vec<[f64; 2]>,
    pub sigma2_opt: f64,
    pub log_evidence: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Zero-mean estimate from one snapshot. The array size comes from the data.
pub fn cmd_estimate(file: &ScenarioFile, snapshot: &ComplexSnapshot<f64>) -> Result<EstimateReport> {
    if snapshot.data.is_empty() {
        return Err(Error::invalid("empty measurement"));
    }
    let model = model_for(file, snapshot.data.len())?;
    let solver = file.to_spec(Method::Baseline).effective_solver();
    let problem = SparseProblem::zero_mean(model.dictionary.view(), snapshot.realify())?;
    let (_, est) = run_modified_rvm(&problem, &model.grid, &solver)?;
    let mut by_angle: Vec<usize> = est.kept_indices.clone();
    by_angle.sort_unstable();
    Ok(EstimateReport {
        doas: est.doas.clone(),
        primary_doa: est.primary_doa,
        num_kept: est.num_kept(),
        amplitudes: by_angle.iter().map(|&i| [est.x_opt[i].re, est.x_opt[i].im]).collect(),
        sigma2_opt: est.sigma2_opt,
        log_evidence: est.log_evidence,
        iterations: est.iterations,
        converged: est.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub k: usize,
    pub est_doa_deg: Option<f64>,
    pub num_kept: usize,
    pub iters: usize,
    pub sigma2: f64,
    /// The shift pushed support onto or past a grid end.
    pub boundary: bool,
}

/// Runs the tracker over every snapshot, using the file's rate and tracker options.
pub fn cmd_track(file: &ScenarioFile, snapshots: &[ComplexSnapshot<f64>]) -> Result<Vec<TrackRow>> {
    let first = snapshots.first().ok_or_else(|| Error::invalid("no snapshots"))?;
    let model = model_for(file, first.data.len())?;
    let spec = file.to_spec(Method::Modified);
    let shift = crate::bcskf::ShiftModel::from_rate(file.doa_rate_deg, &model.grid)?.with_boundary(file.boundary);
    let mut cfg = TrackerConfig::new(spec.effective_solver(), shift);
    cfg.warm_start_sigma2 = file.warm_start_sigma2;
    cfg.covariance = file.covariance;
    cfg.sparse_state = file.sparse_state;
    let mut tracker = Tracker::new(model.dictionary.view(), &model.grid, cfg)?;
    snapshots
        .iter()
        .enumerate()
        .map(|(k, snap)| {
            if snap.data.len() != first.data.len() {
                return Err(Error::shape(format!("snapshot {k} has {} sensors", snap.data.len())));
            }
            let step = tracker.step(snap.realify().view())?;
            Ok(TrackRow {
                k,
                est_doa_deg: step.estimate.primary_doa,
                num_kept: step.estimate.num_kept(),
                iters: step.estimate.iterations,
                sigma2: step.estimate.sigma2_opt,
                boundary: step.clamped,
            })
        })
        .collect()
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_track_csv<W: Write>(writer: W, rows: &[TrackRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACK_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            opt_field(r.est_doa_deg),
            r.num_kept.to_string(),
            r.iters.to_string(),
            r.sigma2.to_string(),
            u8::from(r.boundary).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `records.csv`; a miss leaves `est_doa_deg` empty.
pub fn write_records<W: Write>(writer: W, records: &[SnapshotRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORDS_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.k.to_string(),
            r.true_doa_deg.to_string(),
            opt_field(r.est_doa_deg),
            r.num_kept.to_string(),
            r.iters.to_string(),
            format!("{:.6}", r.solver_time_s * 1e3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `rmse_series.csv`; a method that was not run leaves its column empty.
pub fn write_rmse_series<W: Write>(
    writer: W,
    baseline: Option<&[f64]>,
    modified: Option<&[f64]>,
) -> Result<()> {
    let len = baseline.or(modified).map_or(0, <[f64]>::len);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RMSE_SERIES_HEADER)?;
    for k in 0..len {
        w.write_record([
            k.to_string(),
            opt_field(baseline.map(|s| s[k])),
            opt_field(modified.map(|s| s[k])),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub artifact_version: String,
    pub method: Method,
    pub scenario: String,
    pub seed: u64,
    pub num_trials: usize,
    pub mean_rmse_deg: f64,
    pub mean_time_s: f64,
    pub rmse_series: Vec<f64>,
    pub config: ScenarioFile,
}

impl MethodSummary {
    fn new(run: &RunResult, file: &ScenarioFile) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.into(),
            method: run.method,
            scenario: run.name.clone(),
            seed: file.seed,
            num_trials: file.num_trials,
            mean_rmse_deg: run.mean_rmse_deg,
            mean_time_s: run.mean_time_s,
            rmse_series: run.rmse_series.clone(),
            config: file.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub violations: Vec<String>,
}

impl CheckReport {
    pub fn evaluate(check: &CheckFile, baseline_rmse: f64, modified_rmse: f64) -> Self {
        let mut violations = Vec::new();
        if !(modified_rmse < baseline_rmse) {
            violations.push(format!(
                "modified mean RMSE {modified_rmse:.4}° is not below baseline {baseline_rmse:.4}°"
            ));
        }
        if let Some(max) = check.max_modified_rmse_deg {
            if !(modified_rmse < max) {
                violations.push(format!("modified mean RMSE {modified_rmse:.4}° ≥ {max}°"));
            }
        }
        if let Some(ratio) = check.min_baseline_ratio {
            if !(baseline_rmse > ratio * modified_rmse) {
                violations.push(format!(
                    "baseline/modified ratio {:.3} ≤ {ratio}",
                    baseline_rmse / modified_rmse
                ));
            }
        }
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }
}

/// Top-level `summary.json` of a two-method bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub artifact_version: String,
    pub method: MethodSelection,
    pub seed: u64,
    pub baseline: MethodSummary,
    pub modified: MethodSummary,
    pub check: CheckReport,
    pub config: ScenarioFile,
}

/// What `bench` produced.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub out_dir: PathBuf,
    pub baseline: Option<RunResult>,
    pub modified: Option<RunResult>,
    pub check: Option<CheckReport>,
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_method_dir(dir: &Path, run: &RunResult, file: &ScenarioFile) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records(create(&dir.join("records.csv"))?, &run.records)?;
    let summary = MethodSummary::new(run, file);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Runs the scenario and writes its result bundle to `out_dir`.
///
/// One method: `records.csv`, `summary.json` and `rmse_series.csv` in
/// `out_dir`. Both methods: `baseline/` and `modified/` each hold
/// `records.csv` and `summary.json`; `out_dir` holds `rmse_series.csv` and a
/// combined `summary.json`. `threads = None` uses rayon's global pool.
pub fn cmd_bench(file: &ScenarioFile, out_dir: &Path, threads: Option<usize>) -> Result<BenchReport> {
    file.validate()?;
    fs::create_dir_all(out_dir)?;
    let (baseline, modified) = match file.method {
        MethodSelection::Both => {
            let cmp = compare_methods(&file.to_spec(Method::Modified), threads)?;
            (Some(cmp.baseline), Some(cmp.modified))
        }
        MethodSelection::Baseline => (Some(run_monte_carlo(&file.to_spec(Method::Baseline), threads)?), None),
        MethodSelection::Modified => (None, Some(run_monte_carlo(&file.to_spec(Method::Modified), threads)?)),
    };
    write_rmse_series(
        create(&out_dir.join("rmse_series.csv"))?,
        baseline.as_ref().map(|r| r.rmse_series.as_slice()),
        modified.as_ref().map(|r| r.rmse_series.as_slice()),
    )?;
    let check = match (&baseline, &modified) {
        (Some(b), Some(m)) => {
            write_method_dir(&out_dir.join("baseline"), b, file)?;
            write_method_dir(&out_dir.join("modified"), m, file)?;
            let check = CheckReport::evaluate(&file.check, b.mean_rmse_deg, m.mean_rmse_deg);
            let summary = ComparisonSummary {
                artifact_version: ARTIFACT_VERSION.into(),
                method: MethodSelection::Both,
                seed: file.seed,
                baseline: MethodSummary::new(b, file),
                modified: MethodSummary::new(m, file),
                check: check.clone(),
                config: file.clone(),
            };
            fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            Some(check)
        }
        (Some(run), None) | (None, Some(run)) => {
            write_records(create(&out_dir.join("records.csv"))?, &run.records)?;
            let summary = MethodSummary::new(run, file);
            fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            None
        }
        (None, None) => unreachable!("at least one method runs"),
    };
    Ok(BenchReport {
        out_dir: out_dir.to_path_buf(),
        baseline,
        modified,
        check,
    })
}
