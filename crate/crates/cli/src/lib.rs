//! Command-line driver: single episodes, parallel sweeps and aggregation of
//! the resulting run logs.
//!
//! Exit codes are part of the interface: 0 on success, 1 for usage or
//! configuration errors, 2 for runtime failures (a stalled stream, I/O).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use raal_core::metrics::read_log_dir;
use raal_core::{
    parse_config, summarize, validate_config, write_csv, Experiment, Method, Preset, ResolvedConfig, RunLog,
    ScenarioKind,
};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "raal",
    version,
    about = "Robot-assisted stream-based active learning simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file (TOML with dotted sections) applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Base parameter set: `paper` or `desk`.
    #[arg(long, default_value = "paper")]
    pub preset: Preset,

    /// Directory for run logs; overrides `run.output_dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its run log.
    Run {
        #[command(flatten)]
        config: ConfigArgs,

        #[arg(long)]
        method: Method,

        /// Defaults to `stream.scenario`.
        #[arg(long)]
        scenario: Option<ScenarioKind>,

        /// Defaults to the first of `run.seeds`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every method and seed for one or all scenarios, in parallel.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,

        /// Method name or `all`; repeatable. Defaults to `run.methods`.
        #[arg(long)]
        method: Vec<String>,

        /// Scenario name or `all`. Defaults to `stream.scenario`.
        #[arg(long)]
        scenario: Option<String>,

        /// Repeatable. Defaults to `run.seeds`.
        #[arg(long)]
        seed: Vec<u64>,

        /// Maximum episodes running at once. Defaults to the core count.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Aggregate the run logs in a directory into a summary table.
    Report {
        #[arg(long, default_value = "runs")]
        output_dir: PathBuf,

        /// Cost-to-target aims at this fraction of Standard AL's final mean
        /// accuracy.
        #[arg(long, default_value_t = 0.95)]
        target_fraction: f64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Config(raal_core::Error),

    #[error(transparent)]
    Runtime(raal_core::Error),

    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Output { .. } => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Preset plus optional file, with the output directory override applied.
pub fn load_config(args: &ConfigArgs) -> CliResult<ResolvedConfig> {
    let mut resolved = match &args.config {
        Some(path) => validate_config(path, args.preset),
        None => parse_config("", args.preset),
    }
    .map_err(CliError::Config)?;
    if let Some(dir) = &args.output_dir {
        resolved.config.run.output_dir = dir.clone();
        resolved.overrides.push("run.output_dir (command line)".into());
    }
    Ok(resolved)
}

/// File stem of a run log: `{scenario}_{method}_seed{seed}`.
pub fn log_stem(scenario: ScenarioKind, method: Method, seed: u64) -> String {
    format!("{scenario}_{method}_seed{seed}")
}

fn parse_methods(names: &[String], default: &[Method]) -> CliResult<Vec<Method>> {
    if names.is_empty() {
        return Ok(default.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let add: Vec<Method> = if n.eq_ignore_ascii_case("all") {
            Method::ALL.to_vec()
        } else {
            vec![n
                .parse()
                .map_err(|e: raal_core::Error| CliError::Usage(e.to_string()))?]
        };
        for m in add {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    Ok(out)
}

fn parse_scenarios(name: Option<&str>, default: ScenarioKind) -> CliResult<Vec<ScenarioKind>> {
    match name {
        None => Ok(vec![default]),
        Some(n) if n.eq_ignore_ascii_case("all") => Ok(ScenarioKind::ALL.to_vec()),
        Some(n) => Ok(vec![n
            .parse()
            .map_err(|e: raal_core::Error| CliError::Usage(e.to_string()))?]),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes the run log CSV and its `.meta.toml` sidecar. Returns the CSV
/// path.
pub fn write_run(dir: &Path, resolved: &ResolvedConfig, log: &RunLog) -> CliResult<PathBuf> {
    let stem = log_stem(log.scenario, log.method, log.seed);
    let csv = dir.join(format!("{stem}.csv"));
    write_csv(std::slice::from_ref(log), &csv).map_err(CliError::Runtime)?;
    let meta_path = dir.join(format!("{stem}.meta.toml"));
    let meta = format!(
        "# method: {}\n# scenario: {}\n# seed: {}\n{}",
        log.method,
        log.scenario,
        log.seed,
        resolved.metadata()
    );
    std::fs::write(&meta_path, meta).map_err(|source| CliError::Output {
        path: meta_path,
        source,
    })?;
    Ok(csv)
}

fn report_run(out: &mut dyn Write, path: &Path, log: &RunLog) -> CliResult<()> {
    let r = &log.final_record;
    writeln!(
        out,
        "{}: {} rounds, n(D) {}, human cost {}, test accuracy {:.4}",
        path.display(),
        log.records.len(),
        r.n_d,
        r.human_cost,
        r.test_accuracy
    )
    .map_err(|source| CliError::Output {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

/// Executes a parsed command, writing progress and tables to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            method,
            scenario,
            seed,
        } => {
            let resolved = load_config(&config)?;
            let c = &resolved.config;
            let scenario = scenario.unwrap_or(c.stream.scenario);
            let seed = seed.or_else(|| c.run.seeds.first().copied()).unwrap_or(1);
            let dir = c.run.output_dir.clone();
            let exp = Experiment::new(c.clone()).map_err(CliError::Config)?;
            let log = exp.run_episode(scenario, method, seed).map_err(CliError::Runtime)?;
            create_dir(&dir)?;
            let path = write_run(&dir, &resolved, &log)?;
            report_run(out, &path, &log)
        }
        Command::Sweep {
            config,
            method,
            scenario,
            seed,
            jobs,
        } => {
            let resolved = load_config(&config)?;
            let c = &resolved.config;
            let methods = parse_methods(&method, &c.run.methods)?;
            let scenarios = parse_scenarios(scenario.as_deref(), c.stream.scenario)?;
            let seeds = if seed.is_empty() { c.run.seeds.clone() } else { seed };
            if methods.is_empty() || seeds.is_empty() {
                return Err(CliError::Usage("sweep needs at least one method and one seed".into()));
            }
            if jobs == Some(0) {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {jobs:?} workers: {e}")))?;
            let dir = c.run.output_dir.clone();
            let exp = Experiment::new(c.clone()).map_err(CliError::Config)?;
            create_dir(&dir)?;
            for s in scenarios {
                let logs = pool
                    .install(|| exp.run_comparison(s, &methods, &seeds))
                    .map_err(CliError::Runtime)?;
                for log in &logs {
                    let path = write_run(&dir, &resolved, log)?;
                    report_run(out, &path, log)?;
                }
            }
            Ok(())
        }
        Command::Report {
            output_dir,
            target_fraction,
        } => {
            if !(target_fraction > 0.0 && target_fraction <= 1.0) {
                return Err(CliError::Usage(format!(
                    "--target-fraction must lie in (0, 1], got {target_fraction}"
                )));
            }
            let (rows, files) = read_log_dir(&output_dir).map_err(CliError::Runtime)?;
            let summary = summarize(rows, target_fraction);
            let path = output_dir.join("summary.csv");
            summary.write_csv(&path).map_err(CliError::Runtime)?;
            write!(
                out,
                "{} run logs from {}\n{}summary written to {}\n",
                files.len(),
                output_dir.display(),
                summary.to_text(),
                path.display()
            )
            .map_err(|source| CliError::Output {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}
