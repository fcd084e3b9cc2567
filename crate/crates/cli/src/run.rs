//! Solving one parameter point and rendering its output files.

use std::collections::BTreeMap;
use std::sync::Arc;

use netbellman::chain::{
    failure_prices, solve_chain_with, verify_equilibrium, ChainEquilibrium, ChainSpec,
};
use netbellman::dp::{envelope_residual, extract_policy, VfiOptions};
use netbellman::export::{fmt_f64, xy_csv};
use netbellman::hierarchy::{solve_hierarchy_with, verify_pyramid, HierarchySpec};
use netbellman::network::{
    solve_network_with, verify_network_equilibrium, Assembly, NetworkOptions, NetworkSpec,
};
use netbellman::presets::{Instance, Preset};
use netbellman::report::{EquilibriumReport, Verdict};
use netbellman::spatial::{solve_city, verify_city_equilibrium, CitySpec};
use netbellman::PowerLoss;
use serde::Serialize;

use crate::config::{Model, RunConfig};
use crate::CliError;

/// Samples drawn for the order-interval assumption checks.
const ASSUMPTION_SAMPLES: usize = 200;
/// Node count for the city verification grid when none is configured.
const CITY_GRID: usize = 1001;
/// Networks draw at most this many nodes in the DOT output.
const DOT_NODES: usize = 2000;

/// Files and summary row of one solved point.
#[derive(Debug, Clone)]
pub struct PointOutput {
    pub files: Vec<(String, String)>,
    /// Row of the combined sweep CSV, without the swept value.
    pub row: Vec<f64>,
    /// Set when the equilibrium or assumption checks failed.
    pub violation: Option<String>,
}

/// Column names after the swept parameter in the combined CSV.
pub fn summary_header(model: Model) -> &'static [&'static str] {
    match model {
        Model::Chain | Model::Core => &["final_price", "firms", "iterations"],
        Model::Failure => &["optimal", "hypothetical"],
        Model::Hierarchy => &["layers", "top_span", "tail"],
        Model::City => &["theta", "top_size", "value", "rank_size_slope"],
        Model::Network => &["final_price", "layers", "firms_above_1e-4", "kbar"],
    }
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn vfi_options(cfg: &RunConfig) -> VfiOptions {
    let mut o = VfiOptions::default();
    if let Some(n) = cfg.grid_size {
        o = o.with_grid_size(n);
    }
    if let Some(t) = cfg.tol {
        o = o.with_tol(t);
    }
    if let Some(m) = cfg.max_iter {
        o = o.with_max_iter(m);
    }
    o
}

fn network_options(cfg: &RunConfig) -> NetworkOptions {
    let mut o = NetworkOptions::default();
    if let Some(n) = cfg.grid_size {
        o = o.with_grid_size(n);
    }
    if let Some(t) = cfg.tol {
        o = o.with_tol(t);
    }
    if let Some(m) = cfg.max_iter {
        o = o.with_max_iter(m);
    }
    o
}

fn count(p: &BTreeMap<String, f64>, name: &str) -> Result<u32, CliError> {
    let v = p[name];
    if v.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&v) {
        return Err(CliError::Config(format!(
            "{name} must be a positive integer, got {v}"
        )));
    }
    Ok(v as u32)
}

/// Describes a failed report, or `None` when it passed or is degenerate.
fn violation(report: &EquilibriumReport) -> Option<String> {
    (report.verdict == Verdict::Fail).then(|| {
        format!(
            "p(0) = {:e}, no-entry max = {:e}, profit max = {:e}",
            report.p0, report.no_entry_max, report.profit_max
        )
    })
}

struct Checked {
    files: Vec<(String, String)>,
    violation: Option<String>,
}

/// Equilibrium report plus the sampled assumption checks for `instance`.
fn check(instance: Instance, report: &EquilibriumReport, seed: u64) -> Result<Checked, CliError> {
    let preset = Preset {
        name: "run",
        instance,
    };
    let assumptions = preset.check_assumptions(ASSUMPTION_SAMPLES, seed)?;
    let mut violation = violation(report);
    if !assumptions.all_passed() {
        let msg = "sampled order-interval assumptions failed".to_string();
        violation = Some(violation.map_or(msg.clone(), |v| format!("{v}; {msg}")));
    }
    Ok(Checked {
        files: vec![
            ("verification.json".into(), json(report)),
            ("assumptions.json".into(), json(&assumptions)),
        ],
        violation,
    })
}

fn chain_files(name: &str, eq: &ChainEquilibrium, spec: &ChainSpec) -> Vec<(String, String)> {
    vec![
        (format!("{name}.json"), json(&eq.export(spec))),
        ("price.csv".into(), eq.price_csv()),
    ]
}

fn chain_point(cfg: &RunConfig, spec: ChainSpec, name: &str) -> Result<PointOutput, CliError> {
    let eq = solve_chain_with(&spec, &vfi_options(cfg))?;
    let report = verify_equilibrium(&eq, &spec);
    let mut files = chain_files(name, &eq, &spec);
    if name == "core" {
        let policy = extract_policy(spec.cost(), &eq.price)?;
        #[derive(Serialize)]
        struct Residuals {
            euler: f64,
            envelope: f64,
            grid_step: f64,
        }
        files.push((
            "residuals.json".into(),
            json(&Residuals {
                euler: eq.allocation.euler_residual(spec.cost()),
                envelope: envelope_residual(spec.cost(), &eq.price, &policy),
                grid_step: eq.price.grid().step(),
            }),
        ));
        files.push((
            "policy.csv".into(),
            xy_csv(("x", "a"), policy.nodes(), policy.values()),
        ));
    }
    let row = vec![eq.price.eval(1.0), eq.firms() as f64, eq.iterations as f64];
    let checked = check(Instance::Chain(spec), &report, cfg.seed)?;
    files.extend(checked.files);
    Ok(PointOutput {
        files,
        row,
        violation: checked.violation,
    })
}

pub fn solve_point(cfg: &RunConfig, p: &BTreeMap<String, f64>) -> Result<PointOutput, CliError> {
    match cfg.model {
        Model::Chain => chain_point(
            cfg,
            ChainSpec::cobb_douglas(p["kappa"], p["eta_span"], p["tau"])?,
            "chain",
        ),
        Model::Core => {
            let loss = PowerLoss::new(p["linear"], p["scale"], p["exponent"])?;
            let beta = p["beta"];
            if !(beta.is_finite() && beta > 1.0) {
                return Err(CliError::Config(format!("beta must be > 1, got {beta}")));
            }
            chain_point(cfg, ChainSpec::new(Arc::new(loss), beta - 1.0)?, "core")
        }
        Model::Failure => {
            let f = failure_prices(p["kappa"], p["eta_span"], p["tau"], count(p, "N")?)?;
            #[derive(Serialize)]
            struct Record {
                tau: f64,
                n: u32,
                optimal: f64,
                hypothetical: f64,
                ratio: f64,
            }
            let record = Record {
                tau: f.tau,
                n: count(p, "N")?,
                optimal: f.optimal,
                hypothetical: f.hypothetical,
                ratio: f.ratio(),
            };
            Ok(PointOutput {
                files: vec![("failure.json".into(), json(&record))],
                row: vec![f.optimal, f.hypothetical],
                violation: None,
            })
        }
        Model::Hierarchy => {
            let spec =
                HierarchySpec::power(p["exponent"], p["tau"], p["m0"])?.with_wage(p["wage"])?;
            let pyramid = solve_hierarchy_with(&spec, &vfi_options(cfg))?;
            let report = verify_pyramid(&pyramid, &spec)?;
            let mut files = vec![
                ("hierarchy.json".into(), json(&pyramid.export())),
                ("hierarchy.dot".into(), pyramid.to_dot()),
            ];
            if let Some(w) = &pyramid.value_fn {
                files.push(("cost.csv".into(), xy_csv(("m", "C"), w.nodes(), w.values())));
            }
            let row = vec![
                pyramid.layers.len() as f64,
                pyramid.layers.first().map_or(0.0, |l| l.z_i),
                pyramid.tail,
            ];
            // an empty pyramid has no operator to check
            let violation = if spec.loss_spec().is_some() {
                let checked = check(Instance::Hierarchy(spec), &report, cfg.seed)?;
                files.extend(checked.files);
                checked.violation
            } else {
                files.push(("verification.json".into(), json(&report)));
                violation(&report)
            };
            Ok(PointOutput {
                files,
                row,
                violation,
            })
        }
        Model::City => {
            let spec = CitySpec::with_k(p["gamma"], p["tau"], count(p, "k")?)?
                .with_population(p["population"])?;
            let city = solve_city(&spec)?;
            let report = verify_city_equilibrium(&spec, &city, cfg.grid_size.unwrap_or(CITY_GRID))?;
            let mut files = vec![
                ("city.json".into(), json(&city)),
                ("city.dot".into(), city.to_dot(DOT_NODES)),
            ];
            if city.ranksize.is_some() {
                files.push(("ranksize.csv".into(), city.ranksize_csv()));
            }
            let row = vec![
                city.theta,
                city.layers.first().map_or(0.0, |l| l.size),
                city.value,
                city.ranksize.map_or(f64::NAN, |f| f.slope),
            ];
            let checked = check(Instance::City(spec), &report, cfg.seed)?;
            files.extend(checked.files);
            Ok(PointOutput {
                files,
                row,
                violation: checked.violation,
            })
        }
        Model::Network => {
            let assembly = Assembly::power(p["g_scale"], p["g_exponent"])?;
            let mut spec = NetworkSpec::power(p["exponent"], assembly, p["tau"])?;
            let regularized = p["regularized"];
            if regularized == 0.0 {
                spec = spec.unregularized()?;
            } else if regularized != 1.0 {
                return Err(CliError::Config(format!(
                    "regularized must be 0 or 1, got {regularized}"
                )));
            }
            let tree = solve_network_with(&spec, &network_options(cfg))?;
            let report = verify_network_equilibrium(&tree, &spec)?;
            let mut files = vec![
                ("network.json".into(), json(&tree.export())),
                (
                    "price.csv".into(),
                    xy_csv(("s", "p"), tree.price.nodes(), tree.price.values()),
                ),
                ("network.dot".into(), tree.to_dot()),
            ];
            let row = vec![
                tree.price.eval(1.0),
                tree.layers.len() as f64,
                tree.firms_above(1e-4),
                tree.kbar as f64,
            ];
            let checked = check(Instance::Network(spec), &report, cfg.seed)?;
            files.extend(checked.files);
            Ok(PointOutput {
                files,
                row,
                violation: checked.violation,
            })
        }
    }
}

/// Directory name of a sweep point, e.g. `tau=0.05`.
pub fn point_dir(name: &str, value: f64) -> String {
    format!("{name}={value}")
}

/// Combined sweep table in parameter order.
pub fn sweep_csv(model: Model, name: &str, values: &[f64], outputs: &[PointOutput]) -> String {
    let mut out = std::iter::once(name)
        .chain(summary_header(model).iter().copied())
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for (v, o) in values.iter().zip(outputs) {
        let cells: Vec<String> = std::iter::once(*v)
            .chain(o.row.iter().copied())
            .map(fmt_f64)
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
