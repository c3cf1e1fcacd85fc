use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use doa_bcskf::io::{
    cmd_bench, cmd_estimate, cmd_synth, cmd_track, read_measurements, write_measurements, write_track_csv,
    MethodSelection, Overrides, ScenarioFile, BUNDLED_SCENARIOS,
};

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "doa-bcskf", version, about = "Sparse Bayesian DOA estimation and tracking on a ULA")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario: endfire, non_endfire or random_init.
    #[arg(long, global = true, value_name = "NAME")]
    scenario: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long, global = true, value_name = "Q")]
    trials: Option<usize>,
    #[arg(long, global = true, value_name = "K")]
    snapshots: Option<usize>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Energy fraction kept by thresholding.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Output file (synth, estimate, track) or directory (bench).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Exit with status 2 when bench results violate the scenario's check.
    #[arg(long, global = true)]
    check: bool,
    /// Print the default scenario file and exit.
    #[arg(long)]
    print_defaults: bool,
    /// Worker threads for bench.
    #[arg(long, global = true, env = "DOA_BCSKF_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Baseline,
    Modified,
    Both,
}

impl From<MethodArg> for MethodSelection {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Baseline => MethodSelection::Baseline,
            MethodArg::Modified => MethodSelection::Modified,
            MethodArg::Both => MethodSelection::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trial and write its snapshots as k,sensor,re,im CSV.
    Synth,
    /// Estimate DOAs from one snapshot (JSON).
    Estimate {
        /// Measurement CSV; without it, snapshot 0 is simulated from the scenario.
        input: Option<PathBuf>,
        /// Snapshot to use when the file holds several.
        #[arg(long)]
        snapshot: Option<usize>,
    },
    /// Track over every snapshot of a measurement file (CSV).
    Track { input: PathBuf },
    /// Run the Monte Carlo comparison and write a result bundle.
    Bench,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_scenario(cli: &Cli) -> Result<ScenarioFile> {
    let mut file = match (&cli.config, &cli.scenario) {
        (Some(path), _) => ScenarioFile::load(path)?,
        (None, Some(name)) => ScenarioFile::bundled(name).with_context(|| {
            let names: Vec<_> = BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect();
            format!("bundled scenarios: {}", names.join(", "))
        })?,
        (None, None) => ScenarioFile::default(),
    };
    file.apply(&Overrides {
        seed: cli.seed,
        trials: cli.trials,
        snapshots: cli.snapshots,
        method: cli.method.map(Into::into),
        eta: cli.eta,
        out: cli.out.clone(),
    });
    file.validate()?;
    Ok(file)
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = io::BufWriter::new(
                fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?,
            );
            write(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.print_defaults {
        let _ = writeln!(io::stdout(), "{}", ScenarioFile::defaults_json());
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = &cli.command else {
        bail!("no command given (try --help)");
    };
    let file = load_scenario(&cli)?;
    let out = cli.out.as_deref();
    match command {
        Command::Synth => {
            let snaps = cmd_synth(&file)?;
            emit(out, |w| Ok(write_measurements(w, &snaps)?))?;
        }
        Command::Estimate { input, snapshot } => {
            let snaps = match input {
                Some(path) => read_measurements(path)?,
                None => cmd_synth(&file)?,
            };
            let snap = match (snapshot, snaps.len()) {
                (Some(k), n) if *k < n => &snaps[*k],
                (Some(k), n) => bail!("snapshot {k} requested, input has {n}"),
                (None, _) if input.is_none() => &snaps[0],
                (None, 1) => &snaps[0],
                (None, n) => bail!("input has {n} snapshots; pick one with --snapshot"),
            };
            let report = cmd_estimate(&file, snap)?;
            emit(out, |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)?;
                Ok(())
            })?;
        }
        Command::Track { input } => {
            let snaps = read_measurements(input)?;
            let rows = cmd_track(&file, &snaps)?;
            emit(out, |w| Ok(write_track_csv(w, &rows)?))?;
        }
        Command::Bench => {
            if cli.check && file.method != MethodSelection::Both {
                bail!("--check needs --method both");
            }
            let dir = file
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("results").join(&file.name));
            let report = cmd_bench(&file, &dir, cli.threads.map(|t| t as usize))?;
            for run in report.baseline.iter().chain(&report.modified) {
                println!(
                    "{:<9} mean RMSE {:8.4}°  mean time {:.4} s",
                    run.method.name(),
                    run.mean_rmse_deg,
                    run.mean_time_s
                );
            }
            println!("wrote {}", report.out_dir.display());
            if cli.check {
                let check = report.check.expect("both methods ran");
                if !check.passed {
                    for v in &check.violations {
                        eprintln!("check failed: {v}");
                    }
                    return Ok(ExitCode::from(EXIT_CHECK));
                }
                println!("check passed");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
