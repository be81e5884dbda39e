//! `oblab`: run quasi-posterior diagnostics, sweep a parameter axis, and
//! summarize sweep output.
//!
//! Exit codes: 0 success, 1 a diagnostic check failed (a report is still
//! written when possible), 2 configuration or usage error.

mod diagnostics;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use oblab_core::scenarios::{ScenarioConfig, ScenarioId};

use diagnostics::{report_to_csv, run_diagnostics, CliError};
use sweep::Axis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "oblab", version, about = "quasi-posterior diagnostics on gridded model spaces")]
struct Cli {
    /// Directory where output files are written.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (falls back to the OBLAB_THREADS environment
    /// variable, then to all cores). Results are identical either way.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format for single-run reports.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Parser, Debug, Default, Clone)]
struct ConfigArgs {
    /// TOML file with the scenario configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name (see list-scenarios). Overrides the config file.
    #[arg(long)]
    scenario: Option<String>,
    /// Sample size.
    #[arg(long)]
    n: Option<usize>,
    /// RNG seed for the dataset.
    #[arg(long)]
    seed: Option<u64>,
    /// Inverse-temperature rule, e.g. "n", "sqrt(n)", "0.5*n", "100".
    #[arg(long)]
    lambda_rule: Option<String>,
    /// Grid cells per free axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Scenario-specific numeric override, repeatable: --set theta0=0.3
    #[arg(long = "set", value_parser = parse_kv)]
    set: Vec<(String, f64)>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write a diagnostics report.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print the resolved configuration and exit without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Re-run a scenario across one axis and write sweep.csv.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Axis to vary: n, lambda, seed, or resolution.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Replications per axis value (seeds seed, seed+1, ...).
        #[arg(long, default_value = "1")]
        seeds: u64,
    },
    /// Summarize a sweep.csv into summary.txt and series_*.csv files.
    Report {
        /// Path to a sweep CSV produced by the sweep command.
        #[arg(long)]
        input: PathBuf,
    },
    /// List the built-in scenarios with their default settings.
    ListScenarios,
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad value in '{s}': {e}"))?;
    Ok((k.to_string(), v))
}

fn resolve_config(args: &ConfigArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            toml::from_str::<ScenarioConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let name = args.scenario.as_deref().ok_or_else(|| {
                CliError::Config("either --config or --scenario is required".into())
            })?;
            let id = ScenarioId::parse(name).map_err(|e| CliError::Config(e.to_string()))?;
            ScenarioConfig::new(id, 1000, 0)
        }
    };
    if let Some(name) = &args.scenario {
        cfg.scenario_id = ScenarioId::parse(name).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rule) = &args.lambda_rule {
        cfg.lambda_rule = Some(rule.clone());
    }
    if let Some(res) = args.resolution {
        cfg.grid_resolution = res;
    }
    for (k, v) in &args.set {
        cfg.overrides.insert(k.clone(), *v);
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_run(out: &Path, format: Format, args: &ConfigArgs, dry_run: bool) -> Result<bool, CliError> {
    let cfg = resolve_config(args)?;
    if dry_run {
        let text = toml::to_string_pretty(&cfg)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        print!("{text}");
        return Ok(true);
    }
    let start = Instant::now();
    let report = run_diagnostics(&cfg)?;
    let elapsed = start.elapsed().as_millis();
    let (name, body) = match format {
        Format::Json => (
            "report.json",
            serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Check(format!("cannot serialize report: {e}")))?
                + "\n",
        ),
        Format::Csv => ("report.csv", report_to_csv(&report)),
    };
    let path = write_file(out, name, &body)?;
    eprintln!(
        "wrote {} ({} ms, checks {})",
        path.display(),
        elapsed,
        if report.checks_passed { "passed" } else { "FAILED" }
    );
    Ok(report.checks_passed)
}

fn cmd_sweep(out: &Path, args: &ConfigArgs, axis: &str, values: &str, seeds: u64) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let axis = Axis::parse(axis)?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad axis value '{v}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    let csv = sweep::run_sweep(&cfg, axis, &values, seeds)?;
    let path = write_file(out, "sweep.csv", &csv)?;
    eprintln!("wrote {} (axis {}, {} values)", path.display(), axis.name(), values.len());
    Ok(())
}

fn cmd_report(out: &Path, input: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let summary = sweep::summarize(&text)?;
    for (name, body) in sweep::summary_files(&summary) {
        let path = write_file(out, name, &body)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_list_scenarios() {
    for id in ScenarioId::all() {
        println!("{}\tdefault lambda rule: {}", id.name(), id.default_lambda_rule());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("OBLAB_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(k) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("configuration error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.cmd {
        Cmd::Run { cfg, dry_run } => cmd_run(&cli.out, cli.format, cfg, *dry_run),
        Cmd::Sweep { cfg, axis, values, seeds } => {
            cmd_sweep(&cli.out, cfg, axis, values, *seeds).map(|_| true)
        }
        Cmd::Report { input } => cmd_report(&cli.out, input).map(|_| true),
        Cmd::ListScenarios => {
            cmd_list_scenarios();
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Check(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
