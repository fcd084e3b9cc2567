//! Knowledge hierarchies.
//!
//! Layer `i` receives the problem mass `m_i` left unsolved below it, learns
//! to solve `z_i` of it at cost `c(z_i) = w f^{-1}(z_i)` and passes the rest
//! up. Communication costs act as the wedge `tau`, so the layers follow the
//! optimal path of the negative-discount problem with `l = c`,
//! `beta = 1 + tau` and `xhat = m0`.

use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::dp::{euler_path, solve_value_function, AllocationPath, VfiOptions};
use crate::error::{invalid, Result};
use crate::grid::{Grid, GridFunction};
use crate::loss::{Loss, LossSpec, PowerLoss};
use crate::report::{scan_no_entry, EquilibriumReport, Tolerances};

#[derive(Debug, Clone)]
pub struct HierarchySpec {
    cost: Arc<dyn Loss>,
    tau: f64,
    wage: f64,
    m0: f64,
    layer_cut: f64,
}

impl HierarchySpec {
    /// Wage 1 and layer cut `1e-3 m0` by default.
    pub fn new(cost: Arc<dyn Loss>, tau: f64, m0: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid("tau", format!("must be > 0, got {tau}")));
        }
        if !(m0.is_finite() && m0 >= 0.0) {
            return Err(invalid("m0", format!("must be >= 0, got {m0}")));
        }
        // validates the cost shape even when there is nothing to solve
        LossSpec::new(cost.clone(), 1.0 + tau, if m0 > 0.0 { m0 } else { 1.0 })?;
        Ok(Self {
            cost,
            tau,
            wage: 1.0,
            m0,
            layer_cut: 1e-3 * m0,
        })
    }

    /// `c(z) = z^exponent`.
    pub fn power(exponent: f64, tau: f64, m0: f64) -> Result<Self> {
        Self::new(Arc::new(PowerLoss::new(0.0, 1.0, exponent)?), tau, m0)
    }

    pub fn with_wage(mut self, wage: f64) -> Result<Self> {
        if !(wage.is_finite() && wage > 0.0) {
            return Err(invalid("wage", format!("must be > 0, got {wage}")));
        }
        self.wage = wage;
        Ok(self)
    }

    pub fn with_layer_cut(mut self, layer_cut: f64) -> Result<Self> {
        if !(layer_cut.is_finite() && layer_cut > 0.0) {
            return Err(invalid(
                "layer_cut",
                format!("must be > 0, got {layer_cut}"),
            ));
        }
        self.layer_cut = layer_cut;
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn wage(&self) -> f64 {
        self.wage
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn layer_cut(&self) -> f64 {
        self.layer_cut
    }

    /// The underlying problem; `None` when `m0 = 0`.
    pub fn loss_spec(&self) -> Option<LossSpec> {
        (self.m0 > 0.0)
            .then(|| LossSpec::new(self.cost.clone(), 1.0 + self.tau, self.m0).expect("validated"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Layer {
    pub i: usize,
    /// Problem mass reaching the layer.
    pub m_i: f64,
    /// Problems the layer learns to solve.
    pub z_i: f64,
    /// Employees, `c(z_i) / wage`.
    pub n_i: f64,
}

#[derive(Debug, Clone)]
pub struct Pyramid {
    pub tau: f64,
    pub layers: Vec<Layer>,
    /// Problem mass above the last reported layer.
    pub tail: f64,
    /// The price of passing on problem mass `m`; `None` for an empty pyramid.
    pub value_fn: Option<GridFunction>,
    pub path: Option<AllocationPath>,
}

impl Pyramid {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Layers whose incoming mass is at least `threshold`.
    pub fn layers_above(&self, threshold: f64) -> usize {
        self.layers.iter().filter(|l| l.m_i >= threshold).count()
    }

    /// `max_i |p'(m_i) - c'(z_i)|`, with `p'` from the interpolant's slopes.
    pub fn envelope_residual(&self, spec: &HierarchySpec) -> f64 {
        let Some(p) = &self.value_fn else { return 0.0 };
        let h = 1e-6 * spec.m0;
        self.layers
            .iter()
            .filter(|l| l.m_i > 2.0 * h && l.m_i < spec.m0 - 2.0 * h)
            .map(|l| {
                let dp = (p.eval(l.m_i + h) - p.eval(l.m_i - h)) / (2.0 * h);
                (dp - spec.cost.deriv(l.z_i)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn export(&self) -> PyramidExport {
        PyramidExport {
            tau: self.tau,
            layers: self.layers.clone(),
            tail: self.tail,
        }
    }

    /// Graphviz digraph, one node per layer from the top down, `width`
    /// proportional to the employee count.
    pub fn to_dot(&self) -> String {
        let nmax = self.layers.iter().map(|l| l.n_i).fold(0.0, f64::max);
        let mut out = String::from("digraph pyramid {\n  rankdir=TB;\n  node [shape=box];\n");
        for l in self.layers.iter().rev() {
            let width = if nmax > 0.0 {
                0.2 + 4.0 * l.n_i / nmax
            } else {
                0.2
            };
            let _ =
                writeln!(
                out,
                "  layer{} [label=\"layer {}\\nm={:.6} z={:.6} n={:.6}\", width={:.4}, n_i={}];",
                l.i, l.i, l.m_i, l.z_i, l.n_i, width, crate::export::fmt_f64(l.n_i)
            );
        }
        for pair in self.layers.windows(2).rev() {
            let _ = writeln!(out, "  layer{} -> layer{};", pair[1].i, pair[0].i);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PyramidExport {
    pub tau: f64,
    pub layers: Vec<Layer>,
    pub tail: f64,
}

pub fn solve_hierarchy(spec: &HierarchySpec) -> Result<Pyramid> {
    solve_hierarchy_with(spec, &VfiOptions::default())
}

pub fn solve_hierarchy_with(spec: &HierarchySpec, opts: &VfiOptions) -> Result<Pyramid> {
    let Some(loss) = spec.loss_spec() else {
        return Ok(Pyramid {
            tau: spec.tau,
            layers: Vec::new(),
            tail: 0.0,
            value_fn: None,
            path: None,
        });
    };
    let sol = solve_value_function(&loss, opts)?;
    // the interpolated policy loses accuracy where c' is not Lipschitz at 0,
    // so layers come from the Euler recursion, which is exact along the path
    let path = euler_path(&loss, spec.layer_cut)?;
    let layers = path
        .actions
        .iter()
        .zip(&path.states)
        .enumerate()
        .map(|(i, (&z, &m))| Layer {
            i,
            m_i: m,
            z_i: z,
            n_i: loss.value(z) / spec.wage,
        })
        .collect();
    Ok(Pyramid {
        tau: spec.tau,
        layers,
        tail: path.truncation_residual,
        value_fn: Some(sol.value),
        path: Some(path),
    })
}

/// `p(0) = 0`, no layer can be undercut by a team handling node-aligned
/// problem masses, and `p(m_i) = c(z_i) + (1 + tau) p(m_{i+1})` on every layer.
pub fn verify_pyramid(pyramid: &Pyramid, spec: &HierarchySpec) -> Result<EquilibriumReport> {
    let Some(price) = &pyramid.value_fn else {
        let grid = Arc::new(Grid::uniform(1.0, 11)?);
        let zero = GridFunction::linear(grid, vec![0.0; 11]);
        return Ok(EquilibriumReport::assemble(
            &zero,
            (0.0, None),
            vec![],
            vec![],
            Tolerances::default(),
        ));
    };
    let beta = 1.0 + spec.tau;
    let table: Vec<f64> = price.nodes().iter().map(|&m| spec.cost.value(m)).collect();
    let scan = scan_no_entry(price, &table, beta, 1, |_| 0.0);
    let profits = pyramid
        .layers
        .iter()
        .map(|l| price.eval(l.m_i) - spec.cost.value(l.z_i) - beta * price.eval(l.m_i - l.z_i))
        .collect();
    let mut boundaries: Vec<f64> = pyramid.layers.iter().map(|l| l.m_i).collect();
    boundaries.push(pyramid.tail);
    Ok(EquilibriumReport::assemble(
        price,
        scan,
        profits,
        boundaries,
        Tolerances::default(),
    ))
}
