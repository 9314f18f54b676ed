//! Command-line front end.
//!
//! Every command reads a [`RunConfig`] (preset, then file, then flag
//! overrides), runs inside a worker pool of the requested size, and writes a
//! CSV table plus a JSON [`ResultRecord`] into the output directory. Output
//! bytes never depend on the worker count.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checks::{run_suite, OracleSuite, SuiteOptions};
use crate::config::{RunConfig, SequenceKind, SweepParam};
use crate::dtc::{boundary_slope, build_phase_diagram};
use crate::ensemble::{calibrate_concentration, fit_decay, run_ensemble, with_workers, EnsembleSpec};
use crate::io::{
    ingest_experiment, output_paths, write_boundary_csv, write_experiment_csv, write_phase_csv, write_sweep_csv,
    write_trace_csv, Payload, ResultRecord, SweepRow,
};
use crate::units::to_mhz;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "spinlab", version, about = "Disordered dipolar spin ensemble simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `[ensemble] master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Named base configuration (small-j, large-j) under the file.
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble-averaged coherence trace.
    Simulate {
        /// `time_us,coherence[,err]` file copied next to the outputs.
        #[arg(long)]
        experiment: Option<PathBuf>,
    },
    /// One simulation per value of `[analysis.sweep]`.
    Sweep,
    /// Subharmonic intensity over the τ–ε grid and its boundary.
    DtcPhase,
    /// Engine-versus-reference checks.
    Oracle {
        #[arg(value_parser = ["two-spin", "three-spin", "aht", "convergence"])]
        suite: String,
    },
    /// Concentration matching `[analysis] target_slope_per_us2`.
    Calibrate,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } => EXIT_CONFIG,
        _ => EXIT_SIMULATION,
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), cli.preset.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.master_seed = seed;
    }
    cfg.normalized()
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn workers(cli: &Cli) -> Result<usize> {
    match cli.workers {
        Some(0) => Err(Error::config("--workers", "must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn sequence_kind(cfg: &RunConfig) -> SequenceKind {
    cfg.sequence.as_ref().and_then(|s| s.kind).expect("normalized config")
}

/// Parses arguments, runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let n = workers(cli)?;
    match &cli.command {
        Command::Oracle { suite } => {
            let suite = OracleSuite::parse(suite).map_err(|e| Error::config("suite", e.to_string()))?;
            let mut opts = SuiteOptions::default();
            if cli.config.is_some() || cli.preset.is_some() {
                opts.ensemble = load(cli)?.resolve()?.ensemble;
            }
            if let Some(seed) = cli.seed {
                opts.seed = seed;
                opts.ensemble.master_seed = seed;
            }
            let report = with_workers(n, || run_suite(suite, &opts))??;
            println!("oracle {}", suite.name());
            for line in &report.lines {
                println!("  {line}");
            }
            Ok(if report.passed() { EXIT_OK } else { EXIT_ORACLE })
        }
        cmd => {
            let cfg = load(cli)?;
            let dir = out_dir(cli, &cfg);
            with_workers(n, || match cmd {
                Command::Simulate { experiment } => simulate(&cfg, &dir, experiment.as_deref()),
                Command::Sweep => sweep(&cfg, &dir),
                Command::DtcPhase => dtc_phase(&cfg, &dir),
                Command::Calibrate => calibrate(&cfg, &dir),
                Command::Oracle { .. } => unreachable!(),
            })??;
            Ok(EXIT_OK)
        }
    }
}

fn reject_dtc(cfg: &RunConfig, command: &str) -> Result<()> {
    if sequence_kind(cfg) == SequenceKind::DtcFloquet {
        return Err(Error::config(
            "sequence.kind",
            format!("dtc_floquet runs through dtc-phase, not {command}"),
        ));
    }
    Ok(())
}

/// `simulate`: trace CSV and JSON record.
pub fn simulate(cfg: &RunConfig, dir: &Path, experiment: Option<&Path>) -> Result<ResultRecord> {
    reject_dtc(cfg, "simulate")?;
    let run = cfg.resolve()?;
    let stats = run_ensemble(&run.ensemble, &run.sequence, &run.time_grid)?;
    let fit = match fit_decay(&stats.times, &stats.mean, run.fit_model) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("decay fit skipped: {e}");
            None
        }
    };
    let (csv_path, json_path) = output_paths(dir, "simulate");
    write_trace_csv(&csv_path, &stats)?;
    let mut record = ResultRecord::new(cfg, Payload::Trace { stats, fit })?;
    if let Some(p) = experiment {
        let series = ingest_experiment(p)?;
        write_experiment_csv(&dir.join("experiment.csv"), &series)?;
        record.experiment = Some(series);
    }
    record.write(&json_path)?;
    log::info!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(record)
}

/// `sweep`: one row per grid value.
pub fn sweep(cfg: &RunConfig, dir: &Path) -> Result<ResultRecord> {
    reject_dtc(cfg, "sweep")?;
    let sw = cfg
        .analysis
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("analysis.sweep", "sweep needs `param` and `values`"))?;
    let param = SweepParam::parse(&sw.param)?;
    let mut rows = Vec::with_capacity(sw.values.len());
    for &value in &sw.values {
        let run = param.apply(cfg, value)?.resolve()?;
        let stats = run_ensemble(&run.ensemble, &run.sequence, &run.time_grid)?;
        let last = stats.len() - 1;
        rows.push(SweepRow {
            value,
            final_coherence: stats.mean[last],
            final_stderr: stats.stderr_at(last),
            fit: fit_decay(&stats.times, &stats.mean, run.fit_model).ok(),
        });
        log::info!("{} = {value}: final coherence {}", param.column(), stats.mean[last]);
    }
    let (csv_path, json_path) = output_paths(dir, "sweep");
    write_sweep_csv(&csv_path, param.column(), &rows)?;
    let record = ResultRecord::new(
        cfg,
        Payload::Sweep {
            param: param.column().to_string(),
            rows,
        },
    )?;
    record.write(&json_path)?;
    Ok(record)
}

/// `dtc-phase`: long-format intensity matrix, boundary, and record.
pub fn dtc_phase(cfg: &RunConfig, dir: &Path) -> Result<ResultRecord> {
    if sequence_kind(cfg) != SequenceKind::DtcFloquet {
        return Err(Error::config("sequence.kind", "dtc-phase needs a dtc_floquet sequence"));
    }
    let run = cfg.resolve()?;
    let diagram = build_phase_diagram(&run.ensemble, &run.tau_grid, &run.eps_grid, &run.protocol)?;
    let slope = boundary_slope(&diagram).ok();
    write_phase_csv(&dir.join("phase.csv"), &diagram)?;
    write_boundary_csv(&dir.join("boundary.csv"), &diagram)?;
    let record = ResultRecord::new(
        cfg,
        Payload::PhaseDiagram {
            diagram,
            boundary_slope: slope,
        },
    )?;
    record.write(&dir.join("dtc_phase.json"))?;
    Ok(record)
}

/// `calibrate`: bisection on concentration.
pub fn calibrate(cfg: &RunConfig, dir: &Path) -> Result<ResultRecord> {
    let run = cfg.resolve()?;
    let target = cfg
        .analysis
        .target_slope_per_us2
        .ok_or_else(|| Error::config("analysis.target_slope_per_us2", "calibrate needs a target slope"))?;
    let [lo, hi] = cfg.analysis.ppm_range;
    let ppm = calibrate_concentration(target, (lo, hi), &run.ensemble)?;
    let j = EnsembleSpec { ppm, ..run.ensemble }.mean_j()?;
    println!("ppm = {ppm}");
    let record = ResultRecord::new(
        cfg,
        Payload::Calibration {
            target_slope_per_us2: target,
            ppm,
            mean_j_mhz: to_mhz(j),
        },
    )?;
    record.write(&dir.join("calibrate.json"))?;
    Ok(record)
}
