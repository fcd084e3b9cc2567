//! Supplier networks.
//!
//! A firm selling stage `s` performs `v = s - t` itself and buys the stage `t`
//! from `k` identical suppliers, each delivering `t / k`. It pays an assembly
//! cost `g(k)` and the wedge `tau` on purchases, so prices solve
//!
//! `p(s) = min_{0 <= t <= s, 1 <= k <= kbar} c(s - t) + g(k) + (1 + tau) k p(t / k)`.
//!
//! With `k = 1` forced this is the chain.

use std::fmt;
use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::general::{apply, Action, ActionSet, Aggregator};
use crate::grid::{Grid, GridFunction, Interpolation};
use crate::loss::{Loss, LossSpec, PowerLoss};
use crate::report::{scan_no_entry, EquilibriumReport, Tolerances};
use crate::search::golden_section;

/// Slope of the linear term added to the cost by default.
pub const REGULARIZATION: f64 = 1e-6;
/// Largest supplier bound [`k_bound`] accepts.
pub const MAX_SUPPLIER_BOUND: u32 = 1_000_000;
/// Supplier counts whose values lie within this of the minimum tie; the
/// smallest wins.
pub const TIE_TOL: f64 = 1e-12;

const REFINE_TOL: f64 = 1e-10;
const MAX_LAYERS: usize = 10_000;

type AssemblyFn = Arc<dyn Fn(u32) -> f64 + Send + Sync>;

/// Assembly cost `g(k)` of combining `k` suppliers.
#[derive(Clone)]
pub struct Assembly {
    label: String,
    g: AssemblyFn,
}

impl Assembly {
    /// Requires `g(1) = 0` and `g(2) > 0`; `g(k) = inf` rules `k` out.
    pub fn new(
        label: impl Into<String>,
        g: impl Fn(u32) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if g(1) != 0.0 {
            return Err(invalid("assembly", format!("g(1) must be 0, got {}", g(1))));
        }
        if g(2).is_nan() || g(2) <= 0.0 {
            return Err(invalid(
                "assembly",
                format!("g must be increasing, got g(2) = {}", g(2)),
            ));
        }
        Ok(Self {
            label: label.into(),
            g: Arc::new(g),
        })
    }

    /// `scale (k - 1)^exponent`.
    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(
                "assembly_scale",
                format!("must be > 0, got {scale}"),
            ));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(invalid(
                "assembly_exponent",
                format!("must be > 0, got {exponent}"),
            ));
        }
        Self::new(format!("{scale} (k - 1)^{exponent}"), move |k| {
            scale * (k as f64 - 1.0).powf(exponent)
        })
    }

    /// Only one supplier is ever affordable: the chain.
    pub fn single_supplier() -> Self {
        Self {
            label: "single supplier".into(),
            g: Arc::new(|k| if k <= 1 { 0.0 } else { f64::INFINITY }),
        }
    }

    #[inline]
    pub fn eval(&self, k: u32) -> f64 {
        (self.g)(k)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for Assembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Assembly")
            .field("label", &self.label)
            .finish()
    }
}

/// `c(v) + eps v`.
#[derive(Debug)]
struct Regularized {
    inner: Arc<dyn Loss>,
    eps: f64,
}

impl Loss for Regularized {
    fn value(&self, a: f64) -> f64 {
        self.inner.value(a) + self.eps * a.max(0.0)
    }

    fn deriv(&self, a: f64) -> f64 {
        self.inner.deriv(a) + self.eps
    }

    fn deriv_inverse(&self, slope: f64, upper: f64) -> f64 {
        self.inner.deriv_inverse(slope - self.eps, upper)
    }
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    raw_cost: Arc<dyn Loss>,
    cost: LossSpec,
    assembly: Assembly,
    tau: f64,
    regularized: bool,
    depth_cut: usize,
    mass_cut: f64,
    max_nodes: usize,
}

impl NetworkSpec {
    /// Regularized by default; expands the tree to depth 12 or `1e4` nodes and
    /// stops the rollout once a supplier's stage falls below `1e-6`.
    pub fn new(cost: Arc<dyn Loss>, assembly: Assembly, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid("tau", format!("must be > 0, got {tau}")));
        }
        let mut spec = Self {
            cost: LossSpec::new(cost.clone(), 1.0 + tau, 1.0)?,
            raw_cost: cost,
            assembly,
            tau,
            regularized: false,
            depth_cut: 12,
            mass_cut: 1e-6,
            max_nodes: 10_000,
        };
        spec.set_regularized(true)?;
        Ok(spec)
    }

    /// `c(v) = v^exponent` with assembly `g`.
    pub fn power(exponent: f64, assembly: Assembly, tau: f64) -> Result<Self> {
        Self::new(Arc::new(PowerLoss::new(0.0, 1.0, exponent)?), assembly, tau)
    }

    fn set_regularized(&mut self, on: bool) -> Result<()> {
        let cost: Arc<dyn Loss> = if on {
            Arc::new(Regularized {
                inner: self.raw_cost.clone(),
                eps: REGULARIZATION,
            })
        } else {
            self.raw_cost.clone()
        };
        self.cost = LossSpec::new(cost, 1.0 + self.tau, 1.0)?;
        self.regularized = on;
        Ok(())
    }

    /// Drops the linear regularization. With `c'(0) = 0` the fixed point is
    /// then not known to be unique.
    pub fn unregularized(mut self) -> Result<Self> {
        self.set_regularized(false)?;
        Ok(self)
    }

    pub fn with_depth_cut(mut self, depth_cut: usize) -> Self {
        self.depth_cut = depth_cut;
        self
    }

    pub fn with_max_nodes(mut self, max_nodes: usize) -> Self {
        self.max_nodes = max_nodes;
        self
    }

    pub fn with_mass_cut(mut self, mass_cut: f64) -> Result<Self> {
        if !(mass_cut.is_finite() && mass_cut > 0.0) {
            return Err(invalid("mass_cut", format!("must be > 0, got {mass_cut}")));
        }
        self.mass_cut = mass_cut;
        Ok(self)
    }

    /// The cost actually used, regularization included.
    pub fn cost(&self) -> &LossSpec {
        &self.cost
    }

    pub fn assembly(&self) -> &Assembly {
        &self.assembly
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        1.0 + self.tau
    }

    pub fn is_regularized(&self) -> bool {
        self.regularized
    }

    pub fn depth_cut(&self) -> usize {
        self.depth_cut
    }

    pub fn mass_cut(&self) -> f64 {
        self.mass_cut
    }

    pub fn max_nodes(&self) -> usize {
        self.max_nodes
    }

    /// `c'(0) > 0`, under which the fixed point is unique.
    pub fn uniqueness_certified(&self) -> bool {
        self.cost.deriv(0.0) > 0.0
    }
}

/// Smallest `kbar` with `g(kbar + 1) > c(1)`: more suppliers cost more in
/// assembly alone than doing everything in-house.
pub fn k_bound(spec: &NetworkSpec) -> Result<u32> {
    let cap = spec.cost.value(spec.cost.xhat());
    (1..=MAX_SUPPLIER_BOUND)
        .find(|&k| spec.assembly.eval(k + 1) > cap)
        .ok_or(Error::UnboundedSuppliers {
            limit: MAX_SUPPLIER_BOUND,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkOptions {
    pub grid_size: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub interpolation: Interpolation,
}

impl Default for NetworkOptions {
    /// 2001 nodes, piecewise-linear prices, sup-norm tolerance `1e-10`.
    fn default() -> Self {
        Self {
            grid_size: 2001,
            tol: 1e-10,
            max_iter: 10_000,
            interpolation: Interpolation::Linear,
        }
    }
}

impl NetworkOptions {
    pub fn with_grid_size(mut self, grid_size: usize) -> Self {
        self.grid_size = grid_size;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.grid_size < 11 {
            return Err(invalid(
                "grid_size",
                format!("must be at least 11, got {}", self.grid_size),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid("tol", format!("must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Optimal purchase at one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkChoice {
    /// Stage bought in total.
    pub t: f64,
    pub k: u32,
    pub value: f64,
}

struct Candidate {
    k: u32,
    lower: f64,
    lo: f64,
    hi: f64,
    t: f64,
    value: f64,
}

/// The network Bellman operator on a uniform grid.
///
/// For each `k` the scan visits `t = k s_j`, where `p(t / k)` is a node value
/// and, at a node `s_i`, `s_i - k s_j = s_{i - kj}` is a node too. That makes
/// the scan over all `k` cost `O(i log kbar)` at node `i`. Supplier counts
/// with `g(k)` above the best scanned value are skipped outright, since the
/// other terms are non-negative. For the rest, convexity of the objective in
/// `t` gives a lower bound from the scanned neighbours, and golden-section
/// refinement runs in order of that bound until it exceeds the best value.
#[derive(Debug, Clone)]
pub struct NetworkOperator {
    cost: LossSpec,
    beta: f64,
    kbar: u32,
    gtab: Vec<f64>,
    ctab: Vec<f64>,
    grid: Arc<Grid>,
}

impl NetworkOperator {
    pub fn new(spec: &NetworkSpec, grid: Arc<Grid>) -> Result<Self> {
        let kbar = k_bound(spec)?;
        let gtab = (0..=kbar)
            .map(|k| {
                if k == 0 {
                    f64::INFINITY
                } else {
                    spec.assembly.eval(k)
                }
            })
            .collect();
        let ctab = grid.nodes().iter().map(|&s| spec.cost.value(s)).collect();
        Ok(Self {
            cost: spec.cost.clone(),
            beta: spec.beta(),
            kbar,
            gtab,
            ctab,
            grid,
        })
    }

    pub fn kbar(&self) -> u32 {
        self.kbar
    }

    /// `psi = c`, with slopes when `interpolation` is Hermite.
    pub fn upper_bound(&self, interpolation: Interpolation) -> GridFunction {
        match interpolation {
            Interpolation::Linear => GridFunction::linear(self.grid.clone(), self.ctab.clone()),
            Interpolation::Hermite => GridFunction::from_fn_with_slope(
                self.grid.clone(),
                |s| self.cost.value(s),
                |s| self.cost.deriv(s),
            ),
        }
    }

    /// `phi(s) = c'(0) s`.
    pub fn lower_bound(&self, interpolation: Interpolation) -> GridFunction {
        let d0 = self.cost.deriv(0.0);
        match interpolation {
            Interpolation::Linear => GridFunction::from_fn(self.grid.clone(), |s| d0 * s),
            Interpolation::Hermite => {
                GridFunction::from_fn_with_slope(self.grid.clone(), |s| d0 * s, |_| d0)
            }
        }
    }

    /// `min` over `(t, k)` at stage `s`, given prices `w`.
    pub fn choose(&self, s: f64, w: &GridFunction) -> NetworkChoice {
        let nodes = self.grid.nodes();
        let wv = w.values();
        let i = self.grid.floor_index(s);
        let on_node = nodes[i] == s;
        let c0 = self.cost.value(0.0);
        let mut upper = f64::INFINITY;
        let mut cands: Vec<Candidate> = Vec::new();
        let mut ts: Vec<f64> = Vec::new();
        let mut fs: Vec<f64> = Vec::new();
        for k in 1..=self.kbar {
            let gk = self.gtab[k as usize];
            if gk > upper + TIE_TOL {
                break;
            }
            let kf = k as f64;
            let ku = k as usize;
            let bk = self.beta * kf;
            let jmax = if on_node {
                i / ku
            } else {
                let mut j = self.grid.floor_index(s / kf);
                while j > 0 && kf * nodes[j] > s {
                    j -= 1;
                }
                j
            };
            ts.clear();
            fs.clear();
            for j in 0..=jmax {
                let c = if on_node {
                    self.ctab[i - ku * j]
                } else {
                    self.cost.value(s - kf * nodes[j])
                };
                ts.push(kf * nodes[j]);
                fs.push(c + gk + bk * wv[j]);
            }
            if ts[jmax] < s {
                ts.push(s);
                fs.push(c0 + gk + bk * w.eval(s / kf));
            }
            let mut b = 0;
            for (j, &f) in fs.iter().enumerate() {
                if f < fs[b] {
                    b = j;
                }
            }
            let last = fs.len() - 1;
            let lower = if b > 0 && b < last {
                let (hl, hr) = (ts[b] - ts[b - 1], ts[b + 1] - ts[b]);
                let left = fs[b] - (fs[b + 1] - fs[b]) * hl / hr;
                let right = fs[b] - (fs[b - 1] - fs[b]) * hr / hl;
                left.min(right).min(fs[b])
            } else {
                f64::NEG_INFINITY
            };
            upper = upper.min(fs[b]);
            cands.push(Candidate {
                k,
                lower,
                lo: ts[b.saturating_sub(1)],
                hi: ts[(b + 1).min(last)],
                t: ts[b],
                value: fs[b],
            });
        }
        cands.sort_by(|a, b| a.lower.total_cmp(&b.lower).then(a.k.cmp(&b.k)));
        let mut best = f64::INFINITY;
        let mut refined: Vec<(u32, f64, f64)> = Vec::with_capacity(cands.len());
        for c in &cands {
            if c.lower > best + TIE_TOL {
                break;
            }
            let (t, v) = if c.hi > c.lo {
                self.refine(s, c, w)
            } else {
                (c.t, c.value)
            };
            best = best.min(v);
            refined.push((c.k, t, v));
        }
        refined.sort_by_key(|r| r.0);
        let (k, t, value) = refined
            .into_iter()
            .find(|r| r.2 <= best + TIE_TOL)
            .expect("k = 1 is always a candidate");
        NetworkChoice { t, k, value }
    }

    /// Minimum over `[c.lo, c.hi]` for supplier count `c.k`. With linear
    /// prices each cell of `t / k` makes the objective `c(s - t)` plus a linear
    /// term, minimized where `c'(s - t)` equals the scaled cell slope; Hermite
    /// prices fall back to golden-section search.
    fn refine(&self, s: f64, c: &Candidate, w: &GridFunction) -> (f64, f64) {
        let kf = c.k as f64;
        let bk = self.beta * kf;
        let gk = self.gtab[c.k as usize];
        let f = |t: f64| self.cost.value(s - t) + gk + bk * w.eval(t / kf);
        let (mut t, mut v) = (c.t, c.value);
        let mut consider = |tc: f64, vc: f64| {
            if vc < v - 1e-15 * v.abs() {
                t = tc;
                v = vc;
            }
        };
        match w.interpolation() {
            Interpolation::Linear => {
                let nodes = self.grid.nodes();
                let wv = w.values();
                for (lo, hi) in [(c.lo, c.t), (c.t, c.hi)] {
                    if hi <= lo {
                        continue;
                    }
                    let j = self.grid.cell(0.5 * (lo + hi) / kf);
                    let slope = (wv[j + 1] - wv[j]) / (nodes[j + 1] - nodes[j]);
                    let own = self.cost.deriv_inverse(self.beta * slope, s - lo);
                    let tc = (s - own).clamp(lo, hi);
                    consider(tc, f(tc));
                }
            }
            Interpolation::Hermite => {
                let (tg, vg) = golden_section(f, c.lo, c.hi, REFINE_TOL * self.grid.xmax());
                consider(tg, vg);
            }
        }
        (t, v)
    }
}

impl Aggregator for NetworkOperator {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn feasible(&self, s: f64) -> ActionSet {
        ActionSet {
            lo: 0.0,
            hi: s,
            ints: (1..=self.kbar).collect(),
        }
    }

    fn next_state(&self, _s: f64, a: Action) -> f64 {
        a.cont / a.int as f64
    }

    fn aggregate(&self, s: f64, a: Action, continuation: f64) -> f64 {
        self.cost.value(s - a.cont)
            + self.gtab[a.int as usize]
            + self.beta * a.int as f64 * continuation
    }

    fn state_derivative(&self, s: f64, a: Action) -> Option<f64> {
        Some(self.cost.deriv((s - a.cont).max(0.0)))
    }

    fn minimize(&self, s: f64, w: &GridFunction) -> (Action, f64) {
        let c = self.choose(s, w);
        (
            Action {
                cont: c.t,
                int: c.k,
            },
            c.value,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkLayer {
    pub i: usize,
    /// Stage sold by each firm on the layer.
    pub b_i: f64,
    /// Stages each firm performs itself.
    pub v_i: f64,
    /// Suppliers per firm.
    pub k_i: u32,
    /// `prod_{j < i} k_j`.
    pub firm_count: f64,
    /// Assembly plus transaction costs, `g(k_i) + tau k_i p(b_{i+1})`.
    pub size_metric: f64,
    /// `p(b_i) - c(v_i) - g(k_i) - (1 + tau) k_i p(b_{i+1})`.
    pub profit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub size_metric: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkTree {
    pub tau: f64,
    pub kbar: u32,
    pub layers: Vec<NetworkLayer>,
    /// Explicit firms, whole layers only, within the depth and node caps.
    pub nodes: Vec<TreeNode>,
    /// Stage left per supplier below the last layer; 0 when the rollout ended
    /// with a firm buying nothing.
    pub tail: f64,
    pub price: GridFunction,
    /// `||T p - p||` on the grid.
    pub residual: f64,
    pub iterations: usize,
    pub certified: bool,
}

impl NetworkTree {
    /// Firms whose own stage range `v_i` is at least `threshold`.
    pub fn firms_above(&self, threshold: f64) -> f64 {
        self.layers
            .iter()
            .filter(|l| l.v_i >= threshold)
            .map(|l| l.firm_count)
            .sum()
    }

    pub fn export(&self) -> NetworkExport {
        NetworkExport {
            tau: self.tau,
            kbar: self.kbar,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    i: l.i,
                    b_i: l.b_i,
                    v_i: l.v_i,
                    k_i: l.k_i,
                    firm_count: l.firm_count,
                })
                .collect(),
            nodes: self.nodes.clone(),
            tail: self.tail,
            residual: self.residual,
        }
    }

    /// Graphviz digraph of the expanded firms, final producer at the root,
    /// node width proportional to the size metric.
    pub fn to_dot(&self) -> String {
        let smax = self.nodes.iter().map(|n| n.size_metric).fold(0.0, f64::max);
        let mut out =
            String::from("digraph network {\n  rankdir=TB;\n  node [shape=circle, label=\"\"];\n");
        for n in &self.nodes {
            let width = if smax > 0.0 {
                0.05 + 0.6 * n.size_metric / smax
            } else {
                0.05
            };
            let _ = writeln!(out, "  f{} [width={:.4}, depth={}];", n.id, width, n.depth);
        }
        for n in &self.nodes {
            if let Some(p) = n.parent {
                let _ = writeln!(out, "  f{} -> f{};", n.id, p);
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerRecord {
    pub i: usize,
    pub b_i: f64,
    pub v_i: f64,
    pub k_i: u32,
    pub firm_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkExport {
    pub tau: f64,
    pub kbar: u32,
    pub layers: Vec<LayerRecord>,
    pub nodes: Vec<TreeNode>,
    pub tail: f64,
    pub residual: f64,
}

pub fn solve_network(spec: &NetworkSpec) -> Result<NetworkTree> {
    solve_network_with(spec, &NetworkOptions::default())
}

/// Value iteration from `psi = c`, then a rollout from `b_0 = 1`.
pub fn solve_network_with(spec: &NetworkSpec, opts: &NetworkOptions) -> Result<NetworkTree> {
    opts.validate()?;
    let grid = Arc::new(Grid::uniform(spec.cost.xhat(), opts.grid_size)?);
    let op = NetworkOperator::new(spec, grid)?;
    let mut w = op.upper_bound(opts.interpolation);
    let mut solved = None;
    let mut change = f64::INFINITY;
    for n in 0..opts.max_iter {
        let next = apply(&op, &w);
        change = next.sup_distance(&w);
        if change <= opts.tol {
            solved = Some(n);
            break;
        }
        w = next;
    }
    let Some(iterations) = solved else {
        return Err(Error::NotConverged {
            iterations: opts.max_iter,
            last_change: change,
        });
    };
    let (layers, tail) = rollout(spec, &op, &w)?;
    let nodes = expand(&layers, spec.depth_cut, spec.max_nodes);
    Ok(NetworkTree {
        tau: spec.tau,
        kbar: op.kbar,
        layers,
        nodes,
        tail,
        price: w,
        residual: change,
        iterations,
        certified: spec.uniqueness_certified(),
    })
}

fn rollout(
    spec: &NetworkSpec,
    op: &NetworkOperator,
    price: &GridFunction,
) -> Result<(Vec<NetworkLayer>, f64)> {
    let mut layers = Vec::new();
    let mut b = spec.cost.xhat();
    let mut count = 1.0;
    loop {
        if b < spec.mass_cut {
            return Ok((layers, b));
        }
        if layers.len() >= MAX_LAYERS {
            return Err(Error::TruncationLimit {
                what: "network rollout layers",
                limit: MAX_LAYERS,
            });
        }
        let ch = op.choose(b, price);
        let next = ch.t / ch.k as f64;
        if next >= b {
            return Err(invalid(
                "grid_size",
                format!("rollout stalls at stage {b}; refine the grid"),
            ));
        }
        let v = b - ch.t;
        let layer = layer_at(spec, price, layers.len(), b, v, ch.k, count);
        layers.push(layer);
        if ch.t <= 0.0 {
            return Ok((layers, 0.0));
        }
        b = next;
        count *= ch.k as f64;
    }
}

fn layer_at(
    spec: &NetworkSpec,
    price: &GridFunction,
    i: usize,
    b: f64,
    v: f64,
    k: u32,
    count: f64,
) -> NetworkLayer {
    let kf = k as f64;
    let g = spec.assembly.eval(k);
    let downstream = if b - v > 0.0 {
        price.eval((b - v) / kf)
    } else {
        0.0
    };
    NetworkLayer {
        i,
        b_i: b,
        v_i: v,
        k_i: k,
        firm_count: count,
        size_metric: g + spec.tau * kf * downstream,
        profit: price.eval(b) - spec.cost.value(v) - g - spec.beta() * kf * downstream,
    }
}

fn expand(layers: &[NetworkLayer], depth_cut: usize, max_nodes: usize) -> Vec<TreeNode> {
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for (depth, l) in layers.iter().enumerate().take(depth_cut) {
        let parents = if depth == 0 {
            vec![None]
        } else {
            frontier.iter().map(|&p| Some(p)).collect()
        };
        let children = if depth == 0 {
            1
        } else {
            layers[depth - 1].k_i as usize
        };
        if nodes.len() + parents.len() * children > max_nodes {
            break;
        }
        let mut next = Vec::with_capacity(parents.len() * children);
        for parent in parents {
            let reps = if depth == 0 { 1 } else { children };
            for _ in 0..reps {
                let id = nodes.len();
                nodes.push(TreeNode {
                    id,
                    parent,
                    depth,
                    size_metric: l.size_metric,
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    nodes
}

/// Profits of the tree's layers recomputed against `price`.
pub fn network_profits(
    spec: &NetworkSpec,
    price: &GridFunction,
    layers: &[NetworkLayer],
) -> Vec<f64> {
    layers
        .iter()
        .map(|l| layer_at(spec, price, l.i, l.b_i, l.v_i, l.k_i, l.firm_count).profit)
        .collect()
}

/// `p(0) = 0`, no profitable entry over node-aligned `(s, t, k)` with
/// `k <= kbar`, and zero profit on every layer.
pub fn verify_network_equilibrium(
    tree: &NetworkTree,
    spec: &NetworkSpec,
) -> Result<EquilibriumReport> {
    verify_network_with(tree, spec, Tolerances::default())
}

pub fn verify_network_with(
    tree: &NetworkTree,
    spec: &NetworkSpec,
    tolerances: Tolerances,
) -> Result<EquilibriumReport> {
    let kbar = k_bound(spec)?;
    let table: Vec<f64> = tree
        .price
        .nodes()
        .iter()
        .map(|&s| spec.cost.value(s))
        .collect();
    let scan = scan_no_entry(&tree.price, &table, spec.beta(), kbar, |k| {
        spec.assembly.eval(k)
    });
    let profits = network_profits(spec, &tree.price, &tree.layers);
    let mut boundaries: Vec<f64> = tree.layers.iter().map(|l| l.b_i).collect();
    if !tree.layers.is_empty() {
        boundaries.push(tree.tail);
    }
    Ok(EquilibriumReport::assemble(
        &tree.price,
        scan,
        profits,
        boundaries,
        tolerances,
    ))
}
