//! Command-line front end: run reproduction scenarios, evaluate closed-form
//! predictions, run custom Monte-Carlo campaigns, and fit calibration data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shelvesim::detectors::Scheme;
use shelvesim::experiments::{registry, run_scenario, ScenarioCtx};
use shelvesim::io::{
    self, exit_codes, load_calibration, load_observed_histogram, parse_config, Cell, OutputFormat,
    RunConfig, Table,
};
use shelvesim::montecarlo::{analyze_point, measure_paired_errors, SimConfig};
use shelvesim::stats::DetectionParams;
use shelvesim::theory;

const OUT_DIR_ENV: &str = "SHELVESIM_OUT";

#[derive(Parser)]
#[command(
    name = "shelvesim",
    version,
    about = "Fluorescence state-detection simulator and error calculator"
)]
struct Cli {
    /// RNG seed (default 0xCAFE, or the config file's value).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $SHELVESIM_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for emitted tables.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named scenario and write its tables.
    Run {
        /// Scenario name; see `list-scenarios`.
        scenario: Option<String>,
    },
    /// List all registered scenarios.
    ListScenarios,
    /// Evaluate the closed-form predictions for one parameter set.
    Predict {
        /// Override the detection time, microseconds.
        #[arg(long)]
        detect_time_us: Option<f64>,
        /// Override the photon threshold.
        #[arg(long)]
        threshold: Option<u32>,
        /// Override the depumping decay time, microseconds.
        #[arg(long)]
        decay_time_us: Option<f64>,
        /// Override the spin-flip infidelity.
        #[arg(long)]
        spinflip_error: Option<f64>,
    },
    /// Run a custom Monte-Carlo campaign over all schemes.
    Simulate {
        /// Shots per point (per state for error estimates).
        #[arg(long, default_value_t = 10_000)]
        shots: u64,
        /// True bright-state amplitude for the amplitude estimate.
        #[arg(long, default_value_t = 0.5)]
        true_amplitude: f64,
        /// Detection-power offset in dB applied to the simulated physics.
        #[arg(long, default_value_t = 0.0)]
        power_offset_db: f64,
    },
    /// Validate a calibration file; optionally fit an observed histogram.
    FitCalibration {
        /// CSV with header `k,bright_count,dark_count`.
        calibration: PathBuf,
        /// Optional observed histogram CSV with header `k,count`.
        #[arg(long)]
        observed: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum AppError {
    Config(String),
    Runtime(String),
    Io(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => exit_codes::CONFIG,
            AppError::Runtime(_) => exit_codes::RUNTIME,
            AppError::Io(_) => exit_codes::IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Runtime(m) | AppError::Io(m) => m,
        }
    }
}

impl From<io::ConfigError> for AppError {
    fn from(e: io::ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<io::CalibrationError> for AppError {
    fn from(e: io::CalibrationError) -> Self {
        match e {
            io::CalibrationError::Io(_) => AppError::Io(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<io::TableError> for AppError {
    fn from(e: io::TableError) -> Self {
        match e {
            io::TableError::Io(_) => AppError::Io(e.to_string()),
            io::TableError::Encode(_) => AppError::Runtime(e.to_string()),
        }
    }
}

impl From<shelvesim::experiments::ExperimentError> for AppError {
    fn from(e: shelvesim::experiments::ExperimentError) -> Self {
        match e {
            shelvesim::experiments::ExperimentError::UnknownScenario(_) => {
                AppError::Config(e.to_string())
            }
            _ => AppError::Runtime(e.to_string()),
        }
    }
}

impl From<shelvesim::stats::StatsError> for AppError {
    fn from(e: shelvesim::stats::StatsError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Resolved {
    config: RunConfig,
    params: DetectionParams,
    seed: u64,
    format: OutputFormat,
    out_dir: PathBuf,
    /// True when the user named an output directory (flag, config, or env).
    out_dir_explicit: bool,
}

fn resolve(cli: &Cli) -> Result<Resolved, AppError> {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Io(format!("cannot read config {path:?}: {e}")))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    let params = config.params.to_detection_params()?;
    let seed = cli.seed.unwrap_or(config.run.seed);
    let format = cli.format.unwrap_or(config.run.format);
    let explicit = cli
        .out
        .clone()
        .or_else(|| config.run.out_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var(OUT_DIR_ENV).ok().map(PathBuf::from));
    let out_dir_explicit = explicit.is_some();
    let out_dir = explicit.unwrap_or_else(|| PathBuf::from("out"));
    Ok(Resolved {
        config,
        params,
        seed,
        format,
        out_dir,
        out_dir_explicit,
    })
}

fn run(cli: Cli) -> Result<(), AppError> {
    let resolved = resolve(&cli)?;
    match &cli.command {
        Command::Run { scenario } => cmd_run(&resolved, scenario.as_deref()),
        Command::ListScenarios => {
            for def in registry() {
                println!("{:<18} {}", def.name, def.description);
            }
            Ok(())
        }
        Command::Predict {
            detect_time_us,
            threshold,
            decay_time_us,
            spinflip_error,
        } => cmd_predict(
            &resolved,
            *detect_time_us,
            *threshold,
            *decay_time_us,
            *spinflip_error,
        ),
        Command::Simulate {
            shots,
            true_amplitude,
            power_offset_db,
        } => cmd_simulate(&resolved, *shots, *true_amplitude, *power_offset_db),
        Command::FitCalibration {
            calibration,
            observed,
        } => cmd_fit_calibration(&resolved, calibration, observed.as_deref()),
    }
}

fn cmd_run(resolved: &Resolved, scenario: Option<&str>) -> Result<(), AppError> {
    let name = scenario
        .map(str::to_string)
        .or_else(|| resolved.config.run.scenario.clone())
        .ok_or_else(|| {
            AppError::Config("no scenario given on the command line or in the config".into())
        })?;
    let ctx = ScenarioCtx {
        params: resolved.params,
        seed: resolved.seed,
    };
    let tables = run_scenario(&name, &ctx)?;
    std::fs::create_dir_all(&resolved.out_dir)
        .map_err(|e| AppError::Io(format!("cannot create {:?}: {e}", resolved.out_dir)))?;
    for table in &tables {
        let path = table.write_to(&resolved.out_dir, &name, resolved.format)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_predict(
    resolved: &Resolved,
    detect_time_us: Option<f64>,
    threshold: Option<u32>,
    decay_time_us: Option<f64>,
    spinflip_error: Option<f64>,
) -> Result<(), AppError> {
    let mut section = resolved.config.params.clone();
    if let Some(v) = detect_time_us {
        section.detect_time_us = v;
    }
    if let Some(v) = threshold {
        section.threshold = v as i64;
    }
    if let Some(v) = decay_time_us {
        section.decay_time_us = v;
    }
    if let Some(v) = spinflip_error {
        section.spinflip_error = v;
    }
    let params = section.to_detection_params()?;

    let th = theory::threshold_avg_error(&params);
    let pi = theory::pi_avg_error(&params);
    let mut table = Table::new("predict", vec!["quantity", "value"]);
    let mut push = |name: &str, value: f64| {
        table.push_row(vec![name.into(), Cell::Float(value)]);
    };
    push("mean_bright_counts", shelvesim::mean_bright(&params));
    push("mean_dark_counts", shelvesim::mean_dark(&params));
    push("threshold_err_bright", th.err_bright);
    push("threshold_err_dark", th.err_dark);
    push("threshold_avg_error", th.avg_error);
    push("threshold_bias", th.bias);
    push("pi_err_bright", pi.err_bright);
    push("pi_err_dark", pi.err_dark);
    push("pi_avg_error", pi.avg_error);
    push("pi_bias", pi.bias);
    push("pi_retained_fraction", pi.retained_fraction);
    push("pi_band_halfwidth_1000", pi.conf_halfwidth);
    emit(resolved, &table, "predict")
}

fn cmd_simulate(
    resolved: &Resolved,
    shots: u64,
    true_amplitude: f64,
    power_offset_db: f64,
) -> Result<(), AppError> {
    if shots == 0 {
        return Err(AppError::Config("--shots must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&true_amplitude) {
        return Err(AppError::Config(
            "--true-amplitude must lie in [0, 1]".into(),
        ));
    }
    resolved
        .params
        .validate_subbins()
        .map_err(|e| AppError::Config(e.to_string()))?;
    let mut cfg = SimConfig::new(resolved.params, shots, resolved.seed);
    cfg.power_offset_db = power_offset_db;

    let estimates = analyze_point(&cfg, true_amplitude, 0);
    let errors = measure_paired_errors(&cfg, 1);
    let mut table = Table::new(
        "simulate",
        vec![
            "scheme",
            "amplitude",
            "retained_fraction",
            "err_bright",
            "err_dark",
            "avg_error",
        ],
    );
    for scheme in Scheme::ALL {
        let est = estimates[&scheme];
        let err = errors.get(&scheme);
        table.push_row(vec![
            scheme.name().into(),
            Cell::Float(est.amplitude),
            Cell::Float(est.retained_fraction),
            err.map(|e| Cell::Float(e.err_bright)).unwrap_or("".into()),
            err.map(|e| Cell::Float(e.err_dark)).unwrap_or("".into()),
            err.map(|e| Cell::Float(e.avg_error())).unwrap_or("".into()),
        ]);
    }
    emit(resolved, &table, "simulate")
}

fn cmd_fit_calibration(
    resolved: &Resolved,
    calibration: &Path,
    observed: Option<&Path>,
) -> Result<(), AppError> {
    let file = load_calibration(calibration)?;
    let mut table = Table::new("calibration", vec!["quantity", "value"]);
    table.push_row(vec![
        "bright_mean_counts".into(),
        Cell::Float(file.pair.bright_hist.mean()),
    ]);
    table.push_row(vec![
        "dark_mean_counts".into(),
        Cell::Float(file.pair.dark_hist.mean()),
    ]);
    table.push_row(vec![
        "bright_total_shots".into(),
        Cell::Int(file.bright_total as i64),
    ]);
    table.push_row(vec![
        "dark_total_shots".into(),
        Cell::Int(file.dark_total as i64),
    ]);
    table.push_row(vec![
        "support_max".into(),
        Cell::Int(file.pair.bright_hist.support_max() as i64),
    ]);
    if let Some(path) = observed {
        let hist = load_observed_histogram(path)?;
        let amplitude = shelvesim::fit_distribution(&hist, &file.pair)
            .map_err(|e| AppError::Runtime(e.to_string()))?;
        table.push_row(vec!["fitted_amplitude".into(), Cell::Float(amplitude)]);
    }
    emit(resolved, &table, "fit_calibration")
}

/// Print a table to stdout; also write it when an output directory was
/// explicitly requested.
fn emit(resolved: &Resolved, table: &Table, prefix: &str) -> Result<(), AppError> {
    print!("{}", table.render(resolved.format)?);
    if resolved.out_dir_explicit {
        std::fs::create_dir_all(&resolved.out_dir)
            .map_err(|e| AppError::Io(format!("cannot create {:?}: {e}", resolved.out_dir)))?;
        let path = table.write_to(&resolved.out_dir, prefix, resolved.format)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
