//! Run configuration: a JSON document, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Chain,
    Failure,
    Hierarchy,
    City,
    Network,
    Core,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Chain => "chain",
            Model::Failure => "failure",
            Model::Hierarchy => "hierarchy",
            Model::City => "city",
            Model::Network => "network",
            Model::Core => "core",
        }
    }

    /// Accepted parameters with their defaults; `None` marks a required one.
    pub fn parameters(self) -> &'static [(&'static str, Option<f64>)] {
        match self {
            Model::Chain => &[("kappa", Some(1.0)), ("eta_span", Some(0.5)), ("tau", None)],
            Model::Failure => &[
                ("kappa", Some(1.0)),
                ("eta_span", Some(0.5)),
                ("tau", None),
                ("N", Some(50.0)),
            ],
            Model::Hierarchy => &[
                ("exponent", Some(1.2)),
                ("tau", None),
                ("m0", Some(1.0)),
                ("wage", Some(1.0)),
            ],
            Model::City => &[
                ("gamma", Some(1.2)),
                ("tau", None),
                ("k", Some(2.0)),
                ("population", Some(1.0)),
            ],
            Model::Network => &[
                ("exponent", Some(1.5)),
                ("g_scale", Some(1e-4)),
                ("g_exponent", Some(1.5)),
                ("tau", None),
                ("regularized", Some(1.0)),
            ],
            Model::Core => &[
                ("linear", Some(1.0)),
                ("scale", Some(1.0)),
                ("exponent", Some(2.0)),
                ("beta", Some(2.0)),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dot,
}

impl Format {
    pub fn of_file(name: &str) -> Option<Self> {
        match name.rsplit('.').next()? {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            "dot" => Some(Format::Dot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `NAME=START:STOP:COUNT`, `COUNT` evenly spaced values with both ends included.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (name, range) = s.split_once('=').ok_or("expected NAME=START:STOP:COUNT")?;
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err("expected NAME=START:STOP:COUNT".into());
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        let (start, stop) = (num(start)?, num(stop)?);
        let count: usize = count
            .trim()
            .parse()
            .map_err(|e| format!("`{count}`: {e}"))?;
        if count == 0 || !start.is_finite() || !stop.is_finite() {
            return Err("sweep needs finite bounds and COUNT >= 1".into());
        }
        let values = if count == 1 {
            vec![start]
        } else {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i + 1 == count {
                        stop
                    } else {
                        start + i as f64 * step
                    }
                })
                .collect()
        };
        Ok(Self {
            name: name.trim().to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

/// Settings file. Every field may instead come from a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<Model>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub grid_size: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub output: Option<Output>,
    pub sweep: Option<Sweep>,
    pub seed: Option<u64>,
}

/// Validated configuration with every parameter of the model resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: Model,
    pub parameters: BTreeMap<String, f64>,
    pub grid_size: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub output: Output,
    pub sweep: Option<Sweep>,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 42;

impl RunConfig {
    pub fn resolve(file: FileConfig) -> Result<Self, CliError> {
        let model = file.model.ok_or_else(|| {
            CliError::Config("no model given (--model or `model` in the config)".into())
        })?;
        let accepted = model.parameters();
        let known = |name: &str| accepted.iter().any(|(n, _)| *n == name);
        for name in file.parameters.keys() {
            if !known(name) {
                return Err(CliError::Config(format!(
                    "model `{}` has no parameter `{name}`",
                    model.name()
                )));
            }
        }
        if let Some(sweep) = &file.sweep {
            if !known(&sweep.name) {
                return Err(CliError::Config(format!(
                    "cannot sweep `{}`: model `{}` has no such parameter",
                    sweep.name,
                    model.name()
                )));
            }
            if sweep.values.is_empty() {
                return Err(CliError::Config("sweep has no values".into()));
            }
        }
        let mut parameters = BTreeMap::new();
        for &(name, default) in accepted {
            let swept = file.sweep.as_ref().is_some_and(|s| s.name == name);
            match file.parameters.get(name).copied().or(default) {
                Some(v) => {
                    parameters.insert(name.to_string(), v);
                }
                None if swept => {}
                None => {
                    return Err(CliError::Config(format!(
                        "model `{}` needs parameter `{name}`",
                        model.name()
                    )))
                }
            }
        }
        if let Some(n) = file.grid_size {
            if n < 11 {
                return Err(CliError::Config(format!(
                    "grid_size must be >= 11, got {n}"
                )));
            }
        }
        if let Some(tol) = file.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::Config(format!("tol must be > 0, got {tol}")));
            }
        }
        if file.max_iter == Some(0) {
            return Err(CliError::Config("max_iter must be >= 1".into()));
        }
        let output = file.output.unwrap_or_default();
        if output.formats.is_empty() {
            return Err(CliError::Config("no output format selected".into()));
        }
        Ok(Self {
            model,
            parameters,
            grid_size: file.grid_size,
            tol: file.tol,
            max_iter: file.max_iter,
            output,
            sweep: file.sweep,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    /// Parameter sets to solve, in sweep order.
    pub fn points(&self) -> Vec<BTreeMap<String, f64>> {
        match &self.sweep {
            None => vec![self.parameters.clone()],
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let mut p = self.parameters.clone();
                    p.insert(s.name.clone(), v);
                    p
                })
                .collect(),
        }
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }
}
