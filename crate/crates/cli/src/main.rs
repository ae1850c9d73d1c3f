//! Batch front door for distributed-delay model experiments.
//!
//! Commands: `simulate | analyze | counterexample | sweep | verify`.
//! Each run is driven by a single TOML config (see [`config`]); the CLI
//! only selects the command, the config path, the output directory, the
//! sweep parallelism, and the verify filter. Exit codes: 0 success,
//! 1 runtime failure, 2 configuration error.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::ExperimentConfig;
use dde_stability::{
    acceptance, analysis, counterexample, integrate, tail_statistics, CounterexampleSpec,
    IntegrateOptions, Regime, StabilityReport, Trajectory,
};

const CONFIG_EXIT: u8 = 2;
const RUNTIME_EXIT: u8 = 1;

#[derive(Parser)]
#[command(
    name = "dde-stability",
    version,
    about = "Distributed-delay population models: simulation and stability analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured model; writes trajectory.csv, manifest.json, tail.json
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Stability report for the configured model; writes report.json
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Construct and validate a prescribed attracting band; writes
    /// schedule.json, trajectory.csv, validation.json
    Counterexample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Threshold comparison across a parameter grid; writes sweep.csv
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Parallelism degree for grid points (defaults to all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the verification suite and print a pass/fail table
    Verify {
        /// Only run criteria whose id or name matches this substring
        #[arg(long)]
        filter: Option<String>,
    },
}

/// Error carrying its exit code: 2 for configuration problems, 1 for
/// runtime failures.
struct AppError {
    exit: u8,
    err: anyhow::Error,
}

type AppResult<T> = Result<T, AppError>;

fn cfg_err<E: Into<anyhow::Error>>(e: E) -> AppError {
    AppError {
        exit: CONFIG_EXIT,
        err: e.into(),
    }
}

fn run_err<E: Into<anyhow::Error>>(e: E) -> AppError {
    AppError {
        exit: RUNTIME_EXIT,
        err: e.into(),
    }
}

/// Map library errors onto exit codes: everything the user could have
/// prevented in the config is 2, numerical trouble during the run is 1.
fn lib_err(e: dde_stability::Error) -> AppError {
    use dde_stability::Error::*;
    let exit = match &e {
        NegativeInput { .. }
        | InvalidParameters { .. }
        | EmptyInterval { .. }
        | NoEquilibrium
        | AmbiguousEquilibrium { .. }
        | InvalidMeasure { .. }
        | InvalidHistory { .. }
        | StepTooLarge { .. }
        | InvalidRun { .. }
        | InfeasibleTargets { .. } => CONFIG_EXIT,
        SchwarzianSingular { .. }
        | HistoryGap { .. }
        | Diverged { .. }
        | PositivityLost { .. }
        | TailWindow { .. } => RUNTIME_EXIT,
    };
    AppError {
        exit,
        err: e.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError { exit, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit)
        }
    }
}

fn dispatch(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Simulate { config, output_dir } => cmd_simulate(&config, output_dir),
        Command::Analyze { config, output_dir } => cmd_analyze(&config, output_dir),
        Command::Counterexample { config, output_dir } => cmd_counterexample(&config, output_dir),
        Command::Sweep {
            config,
            output_dir,
            jobs,
        } => cmd_sweep(&config, output_dir, jobs),
        Command::Verify { filter } => cmd_verify(filter.as_deref()),
    }
}

/// Parse the config and hash its canonical form before any command-line
/// overrides, so the hash identifies the experiment, not the destination.
fn load_config(path: &Path, output_dir: Option<PathBuf>) -> AppResult<(ExperimentConfig, String)> {
    let mut cfg = ExperimentConfig::from_path(path).map_err(cfg_err)?;
    let hash = cfg.hash().map_err(cfg_err)?;
    if let Some(dir) = output_dir {
        cfg.output.dir = dir;
    }
    Ok((cfg, hash))
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> AppResult<()> {
    fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("cannot create output dir {}", cfg.output.dir.display()))
        .map_err(run_err)
}

fn write_json(path: &Path, value: &serde_json::Value) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(run_err)?;
    fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(run_err)
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory, stride: usize) -> AppResult<()> {
    let file = fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(run_err)?;
    let mut out = std::io::BufWriter::new(file);
    traj.write_csv(stride, &mut out).map_err(run_err)?;
    out.flush().map_err(run_err)
}

fn cmd_simulate(config_path: &Path, output_dir: Option<PathBuf>) -> AppResult<()> {
    let (cfg, hash) = load_config(config_path, output_dir)?;
    let model = cfg.model_instance().map_err(cfg_err)?;
    let history = cfg.initial_history().map_err(cfg_err)?;
    let horizon = cfg.run.horizon.unwrap_or_else(|| model.default_horizon());
    let opts = IntegrateOptions {
        step: cfg.run.step,
        ..IntegrateOptions::default()
    };
    ensure_out_dir(&cfg)?;

    let traj = integrate(&model, &history, horizon, &opts).map_err(lib_err)?;
    let stride = cfg.output.stride.unwrap_or(1);
    write_trajectory_csv(&cfg.output.dir.join("trajectory.csv"), &traj, stride)?;

    let equilibrium = model.f.equilibrium();
    let conv_tol = 1e-4 * equilibrium.unwrap_or(1.0).max(1.0);
    let tail = match tail_statistics(&traj, 0.25, conv_tol) {
        Ok(t) => json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "config_hash": hash,
            "window_fraction": 0.25,
            "convergence_tol": conv_tol,
            "statistics": t,
            "equilibrium": equilibrium,
            "limit_minus_equilibrium": match (t.limit_est, equilibrium) {
                (Some(l), Some(k)) => Some(l - k),
                _ => None,
            },
        }),
        Err(e) => json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "config_hash": hash,
            "window_fraction": 0.25,
            "convergence_tol": conv_tol,
            "statistics": null,
            "skipped_reason": e.to_string(),
        }),
    };
    write_json(&cfg.output.dir.join("tail.json"), &tail)?;

    let manifest = json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
        "config": cfg,
        "horizon": horizon,
        "step_requested": cfg.run.step,
        "memory_length": model.measure.memory_length(),
        "fading_memory": model.measure.fading_memory(),
        "stats": traj.stats(),
        "end_time": traj.end_time(),
    });
    write_json(&cfg.output.dir.join("manifest.json"), &manifest)?;
    println!(
        "simulate: {} steps to t = {}, outputs in {}",
        traj.stats().steps,
        traj.end_time(),
        cfg.output.dir.display()
    );
    Ok(())
}

fn report_for(cfg: &ExperimentConfig) -> AppResult<StabilityReport> {
    use config::ModelConfig::*;
    match &cfg.model {
        Nicholson { p, delta, a } => analysis::nicholson_report(*p, *delta, *a).map_err(lib_err),
        MackeyGlass { a, b, gamma } => {
            analysis::mackey_glass_report(*a, *b, *gamma).map_err(lib_err)
        }
    }
}

fn cmd_analyze(config_path: &Path, output_dir: Option<PathBuf>) -> AppResult<()> {
    let (cfg, hash) = load_config(config_path, output_dir)?;
    let report = report_for(&cfg)?;
    ensure_out_dir(&cfg)?;
    let payload = json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
        "model": cfg.model,
        "report": report,
    });
    write_json(&cfg.output.dir.join("report.json"), &payload)?;
    println!(
        "analyze: regime {:?}, report in {}",
        report.regime,
        cfg.output.dir.display()
    );
    Ok(())
}

fn cmd_counterexample(config_path: &Path, output_dir: Option<PathBuf>) -> AppResult<()> {
    let (cfg, hash) = load_config(config_path, output_dir)?;
    let ce = cfg
        .counterexample
        .clone()
        .ok_or_else(|| cfg_err(anyhow!("config is missing the [counterexample] block")))?;
    let spec = CounterexampleSpec {
        f: cfg.model.reproduction().map_err(cfg_err)?,
        r: ce.r,
        target_low: ce.target_low,
        target_high: ce.target_high,
    };
    let cycles = ce.cycles.unwrap_or(10);
    let built = counterexample::construct(&spec, cycles).map_err(lib_err)?;
    let outcome = counterexample::validate(&spec, cycles).map_err(lib_err)?;
    ensure_out_dir(&cfg)?;

    write_json(
        &cfg.output.dir.join("schedule.json"),
        &json!({
            "switch_times": built.schedule.switch_times(),
            "frozen_samples": built.schedule.samples(),
            "predicted": built.predicted,
        }),
    )?;
    let stride = cfg.output.stride.unwrap_or(1);
    write_trajectory_csv(
        &cfg.output.dir.join("trajectory.csv"),
        &outcome.trajectory,
        stride,
    )?;

    let band_tol = 1e-3;
    let pass = (outcome.inf_est - ce.target_low).abs() < band_tol
        && (outcome.sup_est - ce.target_high).abs() < band_tol
        && outcome.inf_est >= ce.target_low - band_tol
        && outcome.sup_est <= ce.target_high + band_tol
        && outcome.max_abs_dev_from_prediction < 1e-6;
    write_json(
        &cfg.output.dir.join("validation.json"),
        &json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "config_hash": hash,
            "targets": { "low": ce.target_low, "high": ce.target_high },
            "cycles": cycles,
            "inf_est": outcome.inf_est,
            "sup_est": outcome.sup_est,
            "max_abs_dev_from_prediction": outcome.max_abs_dev_from_prediction,
            "band_tolerance": band_tol,
            "pass": pass,
        }),
    )?;
    println!(
        "counterexample: inf {}, sup {}, prediction dev {:.3e}, {}",
        outcome.inf_est,
        outcome.sup_est,
        outcome.max_abs_dev_from_prediction,
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(run_err(anyhow!(
            "validation failed: band [{}, {}] vs targets [{}, {}]",
            outcome.inf_est,
            outcome.sup_est,
            ce.target_low,
            ce.target_high
        )))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_sweep(
    config_path: &Path,
    output_dir: Option<PathBuf>,
    jobs: Option<usize>,
) -> AppResult<()> {
    let (cfg, _hash) = load_config(config_path, output_dir)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| cfg_err(anyhow!("config is missing the [sweep] block")))?;
    let grid = sweep.grid().map_err(cfg_err)?;
    // Validate the parameter name up front so a typo is a config error.
    cfg.model
        .with_parameter(&sweep.parameter, grid[0])
        .map_err(cfg_err)?;

    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .ok();
    }
    let rows: Vec<Result<String, dde_stability::Error>> = grid
        .par_iter()
        .map(|&value| {
            let model = cfg
                .model
                .with_parameter(&sweep.parameter, value)
                .expect("validated above");
            let report = match &model {
                config::ModelConfig::Nicholson { p, delta, a } => {
                    analysis::nicholson_report(*p, *delta, *a)?
                }
                config::ModelConfig::MackeyGlass { a, b, gamma } => {
                    analysis::mackey_glass_report(*a, *b, *gamma)?
                }
            };
            let regime = match report.regime {
                Regime::Extinction => "extinction",
                Regime::DelayIndependentGlobal => "delay_independent_global",
                Regime::DelayDependent => "delay_dependent",
            };
            let th = &report.thresholds;
            Ok(format!(
                "{},{},{},{},{},{},{},{},{},{}",
                value,
                regime,
                fmt_opt(report.equilibrium),
                fmt_opt(report.attracting_interval.map(|i| i.0)),
                fmt_opt(report.attracting_interval.map(|i| i.1)),
                fmt_opt(th.get("tau_l").copied()),
                fmt_opt(th.get("tau_l_star").copied()),
                fmt_opt(th.get("tau_comparison").copied()),
                fmt_opt(th.get("tau_l_star_alt").copied()),
                fmt_opt(report.hopf_delays.first().copied()),
            ))
        })
        .collect();

    ensure_out_dir(&cfg)?;
    let path = cfg.output.dir.join("sweep.csv");
    let mut out = String::new();
    out.push_str(&format!(
        "{},regime,equilibrium,attracting_lo,attracting_hi,tau_l,tau_l_star,tau_comparison,tau_l_star_alt,hopf_tau0\n",
        sweep.parameter
    ));
    for row in rows {
        out.push_str(&row.map_err(lib_err)?);
        out.push('\n');
    }
    fs::write(&path, out)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(run_err)?;
    println!("sweep: {} rows in {}", grid.len(), path.display());
    Ok(())
}

fn cmd_verify(filter: Option<&str>) -> AppResult<()> {
    let outcomes = acceptance::run_all(filter);
    if outcomes.is_empty() {
        return Err(cfg_err(anyhow!(
            "no verification criterion matches filter {:?}",
            filter.unwrap_or("")
        )));
    }
    let mut failed = 0usize;
    for o in &outcomes {
        println!(
            "criterion {:02}  {:<55}  {}  {}",
            o.id,
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    }
    println!(
        "verify: {}/{} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(run_err(anyhow!("{failed} criteria failed")))
    }
}
