//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! Criteria 1–4 reproduce Monte Carlo results and are reported without
//! failing the run unless `ACCEPTANCE_STRICT=1`. Criteria 5–9 always fail the
//! run when they fail.

use std::path::Path;
use std::time::{Duration, Instant};

use doa_bcskf::array_model::{build_dictionary, realify_dictionary, synthesize_snapshot_seeded, AngularGrid, ArrayGeometry};
use doa_bcskf::bcskf::{innovation, kalman_update};
use doa_bcskf::io::{cmd_bench, BenchReport, MethodSelection, ScenarioFile};
use doa_bcskf::oracle::{
    classical_rvm, finite_diff_gradient, kalman_update_dense, log_marginal_direct, posterior_dense, woodbury_pair,
    ClassicalRvmSettings, FiniteDiffSpec,
};
use doa_bcskf::sparse_bayes::{
    log_marginal, posterior, posterior_stats, run_modified_rvm, RvmSolver, SolveRoute, SolverConfig, SparseProblem,
    UpdateRule,
};
use ndarray::{Array1, Array2};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    id: usize,
    passed: bool,
    enforced: bool,
    detail: String,
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn bench(name: &str, trials: usize, dir: &Path, threads: Option<usize>) -> BenchReport {
    let mut file = ScenarioFile::bundled(name).expect("bundled scenario");
    file.num_trials = trials;
    file.method = MethodSelection::Both;
    cmd_bench(&file, dir, threads).expect("bench runs")
}

fn means(r: &BenchReport) -> (f64, f64) {
    (
        r.baseline.as_ref().unwrap().mean_rmse_deg,
        r.modified.as_ref().unwrap().mean_rmse_deg,
    )
}

fn criteria_1_to_4(tmp: &Path) -> Vec<Outcome> {
    let started = Instant::now();
    let endfire = bench("endfire", 25, &tmp.join("endfire"), None);
    let elapsed = started.elapsed();
    let (b, m) = means(&endfire);
    let c1 = Outcome {
        id: 1,
        passed: m < 3.0 && b > 2.0 * m && elapsed < Duration::from_secs(180),
        enforced: false,
        detail: format!(
            "endfire Q=25: modified {m:.3}° (< 3.0), baseline {b:.3}° (ratio {:.2}, > 2), {:.1} s (< 180)",
            b / m,
            elapsed.as_secs_f64()
        ),
    };

    let non = bench("non_endfire", 25, &tmp.join("non_endfire"), None);
    let (b2, m2) = means(&non);
    let c2 = Outcome {
        id: 2,
        passed: m2 < 1.5 && m2 < b2,
        enforced: false,
        detail: format!("non-endfire Q=25: modified {m2:.3}° (< 1.5), baseline {b2:.3}°"),
    };

    let random = bench("random_init", 25, &tmp.join("random_init"), None);
    let (b3, m3) = means(&random);
    let c3 = Outcome {
        id: 3,
        passed: m3 < b3,
        enforced: false,
        detail: format!("random start Q=25: modified {m3:.3}°, baseline {b3:.3}°"),
    };

    let tb = endfire.baseline.as_ref().unwrap().mean_time_s;
    let tm = endfire.modified.as_ref().unwrap().mean_time_s;
    let c4 = Outcome {
        id: 4,
        passed: tm <= 3.0 * tb,
        enforced: false,
        detail: format!(
            "per-snapshot time modified {:.2} ms vs baseline {:.2} ms (ratio {:.2}, ≤ 3)",
            tm * 1e3,
            tb * 1e3,
            tm / tb
        ),
    };
    vec![c1, c2, c3, c4]
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut post, mut lml, mut wood, mut kf) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let m2 = 2 * rng.random_range(1..=8);
        let n2 = 2 * rng.random_range(1..=8);
        let a = normal_matrix(&mut rng, m2, n2);
        let y = normal_vector(&mut rng, m2);
        let xe = normal_vector(&mut rng, n2);
        let p = Array1::from_shape_fn(n2, |_| rng.random_range(-2.0f64..2.0).exp());
        let sigma2 = rng.random_range(-2.0f64..1.0).exp();
        let problem = SparseProblem::new(a.view(), y.clone(), xe).unwrap();

        let (sd, md) = posterior_dense(&problem, &p, sigma2).unwrap();
        let (sp, mp) = posterior(&problem, &p, sigma2).unwrap();
        post = post.max(max_abs_diff(sp.iter().copied(), sd.iter().copied()));
        post = post.max(max_abs_diff(mp.iter().copied(), md.iter().copied()));
        for route in [SolveRoute::Coefficient, SolveRoute::Measurement] {
            let st = posterior_stats(&problem, &p, sigma2, route, true).unwrap();
            post = post.max(max_abs_diff(st.mu.iter().copied(), md.iter().copied()));
            let cov = st.active_covariance.unwrap();
            let d = max_abs_diff(cov.iter().copied(), sd.iter().copied());
            if route == SolveRoute::Measurement {
                wood = wood.max(d);
            }
            post = post.max(d);
            lml = lml.max(rel(st.log_evidence, log_marginal_direct(&problem, &p, sigma2).unwrap()));
        }
        lml = lml.max(rel(
            log_marginal(&problem, &p, sigma2).unwrap(),
            log_marginal_direct(&problem, &p, sigma2).unwrap(),
        ));
        let (direct, w) = woodbury_pair(a.view(), &p, sigma2).unwrap();
        let scale = direct.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        wood = wood.max(max_abs_diff(direct.iter().copied(), w.iter().copied()) / scale);

        let b = normal_matrix(&mut rng, n2, n2);
        let mut sigma_pred = b.dot(&b.t()) * 0.3;
        for i in 0..n2 {
            sigma_pred[[i, i]] += 0.1;
        }
        let x_pred = normal_vector(&mut rng, n2);
        let y_e = innovation(y.view(), a.dot(&x_pred).view()).unwrap();
        let fast = kalman_update(a.view(), x_pred.view(), sigma_pred.view(), y_e.view(), sigma2).unwrap();
        let dense = kalman_update_dense(a.view(), x_pred.view(), sigma_pred.view(), y.view(), sigma2).unwrap();
        kf = kf.max(max_abs_diff(fast.x.iter().copied(), dense.x.iter().copied()));
        kf = kf.max(max_abs_diff(fast.sigma.iter().copied(), dense.sigma.iter().copied()));
        kf = kf.max(max_abs_diff(fast.gain.iter().copied(), dense.gain.iter().copied()));
    }
    let elapsed = started.elapsed().as_secs_f64();
    Outcome {
        id: 5,
        passed: post <= 1e-10 && lml <= 1e-8 && wood <= 1e-8 && kf <= 1e-9 && elapsed < 60.0,
        enforced: true,
        detail: format!(
            "200 instances: posterior {post:.1e}, log-evidence rel {lml:.1e}, Woodbury {wood:.1e}, Kalman {kf:.1e}, {elapsed:.2} s"
        ),
    }
}

/// Iterates `σ² ← ‖ỹ − Ãμ‖² / (2M − Σγ)` with `p` fixed.
fn sigma2_fixed_point(problem: &SparseProblem<'_, f64>, p: &Array1<f64>, start: f64) -> f64 {
    let mut s2 = start;
    for _ in 0..100_000 {
        let st = posterior_stats(problem, p, s2, SolveRoute::Auto, false).unwrap();
        let gamma: f64 = p
            .iter()
            .zip(st.sigma_diag.iter())
            .filter(|(pn, _)| pn.is_finite())
            .map(|(pn, s)| 1.0 - pn * s)
            .sum();
        let next = st.residual_sq / (problem.measurement_dim() as f64 - gamma);
        if rel(next, s2) < 1e-15 {
            return next;
        }
        s2 = next;
    }
    s2
}

/// Largest `|∂L/∂log p_n|` over active `n`, relative to `|L|`.
fn p_gradient(problem: &SparseProblem<'_, f64>, p: &Array1<f64>, sigma2: f64) -> f64 {
    let l = log_marginal(problem, p, sigma2).unwrap();
    let mut worst = 0.0f64;
    for n in (0..p.len()).filter(|&n| p[n].is_finite()) {
        let f = |t: &[f64]| {
            let mut q = p.clone();
            q[n] = p[n] * t[0].exp();
            log_marginal(problem, &q, sigma2).unwrap()
        };
        let g = finite_diff_gradient(f, &[0.0], FiniteDiffSpec::default()).unwrap()[0];
        worst = worst.max(g.abs() / l.abs());
    }
    worst
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let instances = 40;
    let (mut sigma_worst, mut exact_worst) = (0.0f64, 0.0f64);
    let mut half_cross = Vec::new();
    let mut unconverged = 0;
    for _ in 0..instances {
        let m2 = 2 * rng.random_range(5..=8);
        let n2 = 2 * rng.random_range(1..=4);
        let a = normal_matrix(&mut rng, m2, n2);
        let x = normal_vector(&mut rng, n2);
        let noise = normal_vector(&mut rng, m2) * 0.5;
        let y = a.dot(&x) + noise;
        let xe = &x + &(normal_vector(&mut rng, n2) * 0.3);
        let problem = SparseProblem::new(a.view(), y, xe).unwrap();

        let cfg = SolverConfig {
            max_iters: 20_000,
            tol: 1e-12,
            update_rule: UpdateRule::Exact,
            ..SolverConfig::default()
        };
        let joint = RvmSolver::new(&problem, cfg.clone()).unwrap().run().unwrap();
        let s2 = sigma2_fixed_point(&problem, &joint.p, joint.sigma2);
        let l = log_marginal(&problem, &joint.p, s2).unwrap();
        let g = finite_diff_gradient(
            |t| log_marginal(&problem, &joint.p, t[0]).unwrap(),
            &[s2],
            FiniteDiffSpec { step: 1e-6 * s2.min(1.0), ..FiniteDiffSpec::default() },
        )
        .unwrap()[0];
        sigma_worst = sigma_worst.max(g.abs() / l.abs());

        for rule in [UpdateRule::Exact, UpdateRule::HalfCross] {
            let fixed = SolverConfig {
                estimate_sigma2: false,
                update_rule: rule,
                ..cfg.clone()
            };
            let p0 = Array1::from_elem(n2, fixed.p_init);
            let st = RvmSolver::with_initial(&problem, fixed, p0, s2).unwrap().run().unwrap();
            let worst = p_gradient(&problem, &st.p, s2);
            match rule {
                UpdateRule::Exact => {
                    if !st.converged {
                        unconverged += 1;
                    }
                    exact_worst = exact_worst.max(worst);
                }
                UpdateRule::HalfCross => half_cross.push(worst),
            }
        }
    }
    half_cross.sort_by(f64::total_cmp);
    println!(
        "      half-cross rule |∂L/∂log p|/|L| at its fixed point: median {:.2e}, max {:.2e} over {instances} instances",
        half_cross[half_cross.len() / 2],
        half_cross[half_cross.len() - 1]
    );
    Outcome {
        id: 6,
        passed: sigma_worst < 1e-4 && exact_worst < 1e-4,
        enforced: true,
        detail: format!(
            "{instances} instances: |∂L/∂σ²|/|L| ≤ {sigma_worst:.1e}, exact-mode |∂L/∂log p|/|L| ≤ {exact_worst:.1e} ({unconverged} hit the iteration cap)"
        ),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let iterations = 40;
    let mut worst = 0.0f64;
    let mut mismatched_support = 0;
    for _ in 0..50 {
        let m = rng.random_range(2..=8);
        let m2 = 2 * m;
        let n2 = 2 * rng.random_range(1..=m);
        let a = normal_matrix(&mut rng, m2, n2);
        let y = normal_vector(&mut rng, m2);
        let cfg = SolverConfig {
            max_iters: iterations,
            sigma2_init: rng.random_range(0.05..2.0),
            p_init: rng.random_range(0.01..1.0),
            ..SolverConfig::default()
        };
        let settings = ClassicalRvmSettings {
            iterations,
            p_init: cfg.p_init,
            sigma2_init: cfg.sigma2_init,
            sigma2_floor: cfg.sigma2_floor,
            p_cap: cfg.p_cap,
            denom_eps: cfg.denom_eps,
        };
        let reference = classical_rvm(a.view(), y.view(), settings).unwrap();
        let data_var = y.dot(&y) / m2 as f64;
        let problem = SparseProblem::zero_mean(a.view(), y).unwrap();
        let mut solver = RvmSolver::new(&problem, cfg).unwrap();
        for (it, r) in reference.iter().enumerate() {
            if it > 0 {
                solver.step().unwrap();
            }
            let s = solver.state();
            worst = worst.max((s.sigma2 - r.sigma2).abs() / s.sigma2.max(data_var));
            for (pn, qn) in s.p.iter().zip(&r.p) {
                if pn.is_finite() != qn.is_finite() {
                    mismatched_support += 1;
                } else if pn.is_finite() {
                    worst = worst.max((pn.recip() - qn.recip()).abs());
                }
            }
            let scale = r.mu.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            worst = worst.max(max_abs_diff(s.mu.iter().copied(), r.mu.iter().copied()) / scale);
        }
    }
    Outcome {
        id: 7,
        passed: worst <= 1e-10 && mismatched_support == 0,
        enforced: true,
        detail: format!(
            "50 instances × {iterations} iterations: worst deviation {worst:.1e} (1/p absolute, σ² and μ scaled), {mismatched_support} pruning mismatches"
        ),
    }
}

fn criterion_8() -> Outcome {
    let geom = ArrayGeometry::uniform(20, 0.5).unwrap();
    let grid = AngularGrid::uniform(1.0).unwrap();
    let a = realify_dictionary(build_dictionary(&geom, &grid).unwrap().view());
    let cfg = SolverConfig {
        estimate_sigma2: false,
        sigma2_init: 1e-10,
        ..SolverConfig::default()
    };
    let amp = Complex::from_polar(1.3, 0.7);
    let mut failures = Vec::new();
    let mut worst_amp = 0.0f64;
    for theta in (10..=170).step_by(10).map(f64::from) {
        let snap = synthesize_snapshot_seeded(&geom, &grid, &[(theta, amp)], 0.0, 0).unwrap();
        let problem = SparseProblem::zero_mean(a.view(), snap.realify()).unwrap();
        let (_, est) = run_modified_rvm(&problem, &grid, &cfg).unwrap();
        let idx = grid.index_of(theta).unwrap();
        let err = (est.x_opt[idx] - amp).norm();
        worst_amp = worst_amp.max(err);
        if est.primary_doa != Some(theta) || err >= 1e-3 {
            failures.push(format!("{theta}°→{:?} (|Δa| {err:.1e})", est.primary_doa));
        }
    }
    Outcome {
        id: 8,
        passed: failures.is_empty(),
        enforced: true,
        detail: format!(
            "10°…170° every 10°: worst amplitude error {worst_amp:.1e}{}; 0° and 180° share one steering vector at λ/2 and are not separable",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {}", failures.join(", "))
            }
        ),
    }
}

fn records_without_timing(dir: &Path) -> String {
    ["baseline", "modified"]
        .iter()
        .map(|m| {
            std::fs::read_to_string(dir.join(m).join("records.csv"))
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_owned() + "\n")
                .collect::<String>()
        })
        .collect()
}

fn criterion_9(tmp: &Path) -> Outcome {
    let runs = [(Some(1), "t1"), (Some(2), "t2"), (None, "global")];
    let texts: Vec<String> = runs
        .iter()
        .map(|(threads, name)| {
            let dir = tmp.join("determinism").join(name);
            bench("random_init", 8, &dir, *threads);
            records_without_timing(&dir)
        })
        .collect();
    let identical = texts.windows(2).all(|w| w[0] == w[1]);
    Outcome {
        id: 9,
        passed: identical && !texts[0].is_empty(),
        enforced: true,
        detail: format!(
            "random_init Q=8 with 1 thread, 2 threads and the global pool: records {}",
            if identical { "byte-identical" } else { "differ" }
        ),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let tmp = tempfile::tempdir().unwrap();
    let mut outcomes = criteria_1_to_4(tmp.path());
    outcomes.push(criterion_5());
    outcomes.push(criterion_6());
    outcomes.push(criterion_7());
    outcomes.push(criterion_8());
    outcomes.push(criterion_9(tmp.path()));
    outcomes.sort_by_key(|o| o.id);
    let mut fatal = 0;
    for o in &outcomes {
        println!(
            "criterion {}: {} {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.passed && (o.enforced || strict) {
            fatal += 1;
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} of {} criteria pass", outcomes.len() - failed, outcomes.len());
    if fatal > 0 {
        std::process::exit(1);
    }
}
