//! `netbellman run`: solve a model, verify its equilibrium, write the data.
//!
//! Exit status 0 on success, 2 for configuration errors, 3 for solver or I/O
//! errors and 4 when a verification fails. Errors are reported as one JSON
//! object on standard error.

mod config;
mod run;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use config::{FileConfig, Format, Model, RunConfig, Sweep};
use run::{point_dir, solve_point, sweep_csv, PointOutput};

const THREADS_VAR: &str = "NETBELLMAN_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Solver(netbellman::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Verification(String),
}

impl From<netbellman::Error> for CliError {
    fn from(e: netbellman::Error) -> Self {
        match e {
            netbellman::Error::InvalidParameter { .. } | netbellman::Error::InvalidLoss(_) => {
                CliError::Config(e.to_string())
            }
            e => CliError::Solver(e),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
            CliError::Verification(_) => "verification",
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    exit_code: u8,
    message: String,
}

#[derive(Parser)]
#[command(
    name = "netbellman",
    version,
    about = "Equilibria of production chains, hierarchies, cities and networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model, verify the equilibrium and write its data files.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// NAME=START:STOP:COUNT, COUNT evenly spaced values including both ends.
    #[arg(long, value_parser = Sweep::parse)]
    sweep: Option<Sweep>,
    /// Seed of the sampled assumption checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Output formats, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<Format>,
    #[command(flatten)]
    params: ParamArgs,
}

/// Model parameters. Each applies only to the models that accept it.
#[derive(Args)]
struct ParamArgs {
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eta_span: Option<f64>,
    /// Producers in the equal-split failure chain.
    #[arg(long = "N")]
    n: Option<f64>,
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    wage: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Satellites per city.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    population: Option<f64>,
    #[arg(long)]
    g_scale: Option<f64>,
    #[arg(long)]
    g_exponent: Option<f64>,
    /// Solve the network without the small linear cost term.
    #[arg(long)]
    unregularized: bool,
    #[arg(long)]
    linear: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

impl ParamArgs {
    fn values(&self) -> BTreeMap<String, f64> {
        let named = [
            ("tau", self.tau),
            ("kappa", self.kappa),
            ("eta_span", self.eta_span),
            ("N", self.n),
            ("exponent", self.exponent),
            ("m0", self.m0),
            ("wage", self.wage),
            ("gamma", self.gamma),
            ("k", self.k),
            ("population", self.population),
            ("g_scale", self.g_scale),
            ("g_exponent", self.g_exponent),
            ("regularized", self.unregularized.then_some(0.0)),
            ("linear", self.linear),
            ("scale", self.scale),
            ("beta", self.beta),
        ];
        named
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }
}

fn load(args: RunArgs) -> Result<RunConfig, CliError> {
    let mut file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    file.model = args.model.or(file.model);
    file.parameters.extend(args.params.values());
    file.grid_size = args.grid_size.or(file.grid_size);
    file.tol = args.tol.or(file.tol);
    file.max_iter = args.max_iter.or(file.max_iter);
    file.sweep = args.sweep.or(file.sweep);
    file.seed = args.seed.or(file.seed);
    let mut output = file.output.take().unwrap_or_default();
    if let Some(dir) = args.out {
        output.dir = dir;
    }
    if !args.format.is_empty() {
        output.formats = args.format;
    }
    file.output = Some(output);
    RunConfig::resolve(file)
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_VAR} must be a positive integer, got `{v}`"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(e.to_string()))
}

/// Writes through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn write_point(cfg: &RunConfig, dir: &Path, out: &PointOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, contents) in &out.files {
        if Format::of_file(name).is_some_and(|f| cfg.wants(f)) {
            write_atomic(&dir.join(name), contents)?;
        }
    }
    Ok(())
}

fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    let pool = pool()?;
    let points = cfg.points();
    let outputs: Vec<PointOutput> = pool.install(|| {
        points
            .par_iter()
            .map(|p| solve_point(cfg, p))
            .collect::<Result<_, _>>()
    })?;
    let root = &cfg.output.dir;
    match &cfg.sweep {
        None => write_point(cfg, root, &outputs[0])?,
        Some(sweep) => {
            // the failure model's per-point record is a row of the combined table
            if cfg.model != Model::Failure {
                pool.install(|| {
                    sweep
                        .values
                        .par_iter()
                        .zip(&outputs)
                        .try_for_each(|(&v, out)| {
                            write_point(cfg, &root.join(point_dir(&sweep.name, v)), out)
                        })
                })?;
            }
            if cfg.wants(Format::Csv) {
                fs::create_dir_all(root)
                    .map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
                let csv = sweep_csv(cfg.model, &sweep.name, &sweep.values, &outputs);
                write_atomic(&root.join(format!("{}_sweep.csv", cfg.model.name())), &csv)?;
            }
        }
    }
    let failures: Vec<String> = points
        .iter()
        .zip(&outputs)
        .filter_map(|(p, o)| {
            o.violation.as_ref().map(|v| match &cfg.sweep {
                Some(s) => format!("{}: {v}", point_dir(&s.name, p[&s.name])),
                None => v.clone(),
            })
        })
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

fn report(e: &CliError) -> ExitCode {
    let body = ErrorReport {
        error: e.kind(),
        exit_code: e.code(),
        message: e.to_string(),
    };
    eprintln!("{}", serde_json::to_string(&body).expect("serializable"));
    ExitCode::from(e.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Config(e.render().to_string().trim().to_string())),
    };
    let Command::Run(args) = cli.command;
    match load(args).and_then(|cfg| execute(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
