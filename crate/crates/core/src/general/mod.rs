//! Aggregator-based Bellman operators on an order interval `[phi, psi]`.
//!
//! An [`Aggregator`] supplies the lifetime loss `L(x, a, w)` and the feasible
//! actions at each state. When `L` is isotone and concave in `w`, the operator
//! maps the interval into itself with `T psi <= psi` and
//! `T phi >= phi + eps (psi - phi)`, and iteration from any start in the
//! interval converges with error at most `(1 - eps)^n ||psi - phi||`.

mod assumptions;
mod brute;
mod loss_agg;

pub use assumptions::{check_assumptions, AssumptionCheck, AssumptionReport, Witness};
pub use brute::{brute_force_value, brute_force_value_with_budget, BRUTE_FORCE_BUDGET};
pub use loss_agg::LossAggregator;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::par::map_indices;
use crate::search::golden_section;

/// Smallest admissible estimate of the A5 constant.
pub const EPSILON_FLOOR: f64 = 1e-6;

const REFINE_TOL: f64 = 1e-10;

/// A point in the action space: a continuous component and an integer one.
/// Purely continuous problems use `int = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Action {
    pub cont: f64,
    pub int: u32,
}

/// Feasible actions at a state: `[lo, hi] x ints`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    pub lo: f64,
    pub hi: f64,
    pub ints: Vec<u32>,
}

impl ActionSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            ints: vec![1],
        }
    }
}

/// Lifetime loss of a deterministic problem whose continuation enters through
/// a single successor state: `L(x, a, w) = aggregate(x, a, w(next_state(x, a)))`.
pub trait Aggregator: Sync {
    /// State grid `[0, x_max]`.
    fn grid(&self) -> &Arc<Grid>;

    fn feasible(&self, x: f64) -> ActionSet;

    fn next_state(&self, x: f64, a: Action) -> f64;

    /// `L` given the continuation value at the successor state. Must be
    /// non-decreasing in `continuation`.
    fn aggregate(&self, x: f64, a: Action, continuation: f64) -> f64;

    fn eval(&self, x: f64, a: Action, w: &GridFunction) -> f64 {
        self.aggregate(x, a, w.eval(self.next_state(x, a)))
    }

    /// `dL/dx` at the optimum, when known in closed form. Enables Hermite
    /// interpolation of the operator output.
    fn state_derivative(&self, _x: f64, _a: Action) -> Option<f64> {
        None
    }

    /// `min_{a in G(x)} L(x, a, w)`.
    fn minimize(&self, x: f64, w: &GridFunction) -> (Action, f64) {
        scan_and_refine(self, x, &self.feasible(x), w)
    }
}

/// Exact over the integer factor; over the interval, a scan of the grid nodes
/// inside it followed by golden-section search around the best one. Ties keep
/// the smallest integer and the smallest continuous component.
pub fn scan_and_refine<A: Aggregator + ?Sized>(
    agg: &A,
    x: f64,
    set: &ActionSet,
    w: &GridFunction,
) -> (Action, f64) {
    let grid = agg.grid();
    let mut cands = vec![set.lo];
    if set.hi > set.lo {
        let first = grid.floor_index(set.lo) + 1;
        cands.extend(
            grid.nodes()[first.min(grid.len())..]
                .iter()
                .copied()
                .take_while(|&s| s < set.hi),
        );
        cands.push(set.hi);
    }
    let mut best = (
        Action {
            cont: set.lo,
            int: set.ints[0],
        },
        f64::INFINITY,
    );
    for &k in &set.ints {
        let f = |c: f64| agg.eval(x, Action { cont: c, int: k }, w);
        let (mut bi, mut bv) = (0, f64::INFINITY);
        for (i, &c) in cands.iter().enumerate() {
            let v = f(c);
            if v < bv {
                bi = i;
                bv = v;
            }
        }
        let mut bc = cands[bi];
        if cands.len() > 1 {
            let lo = cands[bi.saturating_sub(1)];
            let hi = cands[(bi + 1).min(cands.len() - 1)];
            let (cg, vg) = golden_section(f, lo, hi, REFINE_TOL * grid.xmax());
            if vg < bv - 1e-15 * bv.abs() {
                bc = cg;
                bv = vg;
            }
        }
        if bv < best.1 {
            best = (Action { cont: bc, int: k }, bv);
        }
    }
    best
}

/// Optimal action and value at every node.
pub fn node_choices<A: Aggregator + ?Sized>(agg: &A, w: &GridFunction) -> Vec<(Action, f64)> {
    let nodes = agg.grid().nodes();
    map_indices(nodes.len(), |i| agg.minimize(nodes[i], w))
}

/// `Tw` on the aggregator's grid. Hermite input yields Hermite output when
/// the aggregator provides state derivatives.
pub fn apply<A: Aggregator + ?Sized>(agg: &A, w: &GridFunction) -> GridFunction {
    let grid = agg.grid().clone();
    let choices = node_choices(agg, w);
    let values: Vec<f64> = choices.iter().map(|c| c.1).collect();
    if w.slopes().is_some() {
        let slopes: Option<Vec<f64>> = grid
            .nodes()
            .iter()
            .zip(&choices)
            .map(|(&x, c)| agg.state_derivative(x, c.0))
            .collect();
        if let Some(slopes) = slopes {
            return GridFunction::hermite(grid, values, slopes);
        }
    }
    GridFunction::linear(grid, values)
}

/// Lower and upper ends of the order interval with a valid A5 constant.
#[derive(Debug, Clone)]
pub struct BoundPair {
    pub phi: GridFunction,
    pub psi: GridFunction,
    pub epsilon: f64,
}

impl BoundPair {
    pub fn new(phi: GridFunction, psi: GridFunction, epsilon: f64) -> Result<Self> {
        if phi.len() != psi.len() {
            return Err(invalid("bounds", "phi and psi live on different grids"));
        }
        if let Some(j) = (0..phi.len()).find(|&j| phi.values()[j] > psi.values()[j] + 1e-12) {
            return Err(invalid("bounds", format!("phi > psi at node {j}")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(
                "epsilon",
                format!("must lie in (0, 1], got {epsilon}"),
            ));
        }
        Ok(Self { phi, psi, epsilon })
    }

    /// Bounds with `epsilon` estimated from one application of `T` to `phi`.
    pub fn estimate<A: Aggregator + ?Sized>(
        agg: &A,
        phi: GridFunction,
        psi: GridFunction,
    ) -> Result<Self> {
        let eps = estimate_epsilon(agg, &phi, &psi);
        if eps.is_nan() || eps < EPSILON_FLOOR {
            return Err(invalid(
                "epsilon",
                format!("estimated A5 constant {eps:e} is below the floor {EPSILON_FLOOR:e}"),
            ));
        }
        Self::new(phi, psi, eps.min(1.0))
    }

    /// Tries `phi` first; if its A5 constant is below the floor, falls back to
    /// `phi = c psi` for `c = 1/2, 1/4, ...`.
    pub fn auto<A: Aggregator + ?Sized>(
        agg: &A,
        phi: GridFunction,
        psi: GridFunction,
    ) -> Result<Self> {
        match Self::estimate(agg, phi, psi.clone()) {
            Ok(b) => Ok(b),
            Err(first) => {
                let mut c = 0.5;
                while c > 1e-6 {
                    let scaled = scale(&psi, c);
                    if let Ok(b) = Self::estimate(agg, scaled, psi.clone()) {
                        return Ok(b);
                    }
                    c *= 0.5;
                }
                Err(first)
            }
        }
    }

    /// `||psi - phi||`.
    pub fn width(&self) -> f64 {
        self.psi.sup_distance(&self.phi)
    }
}

fn scale(f: &GridFunction, c: f64) -> GridFunction {
    let values = f.values().iter().map(|v| c * v).collect();
    match f.slopes() {
        Some(d) => {
            GridFunction::hermite(f.grid().clone(), values, d.iter().map(|v| c * v).collect())
        }
        None => GridFunction::linear(f.grid().clone(), values),
    }
}

/// `min_x (T phi - phi)(x) / (psi - phi)(x)` over nodes where the interval is
/// non-degenerate. The ratio at `x = 0` is 0/0; its limit is approximated by
/// the first node with positive width.
pub fn estimate_epsilon<A: Aggregator + ?Sized>(
    agg: &A,
    phi: &GridFunction,
    psi: &GridFunction,
) -> f64 {
    let tphi = apply(agg, phi);
    let scale = psi.sup_norm().max(phi.sup_norm()).max(1e-300);
    (0..phi.len())
        .filter_map(|j| {
            let width = psi.values()[j] - phi.values()[j];
            (width > 1e-13 * scale).then(|| (tphi.values()[j] - phi.values()[j]) / width)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Geometric error certificate `||T^n w - w*|| <= alpha^n M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    /// `1 - epsilon`.
    pub alpha: f64,
    /// `||psi - phi||`.
    pub m: f64,
    /// Iterations actually performed.
    pub iterations: usize,
    /// `alpha^iterations * M`.
    pub error_bound: f64,
}

impl Certificate {
    pub fn new(bounds: &BoundPair, iterations: usize) -> Self {
        let alpha = 1.0 - bounds.epsilon;
        let m = bounds.width();
        Self {
            alpha,
            m,
            iterations,
            error_bound: alpha.powi(iterations.min(i32::MAX as usize) as i32) * m,
        }
    }

    /// Iterations after which the bound drops below `tol`:
    /// `ceil(ln(tol / M) / ln(alpha))`.
    pub fn iterations_for(&self, tol: f64) -> usize {
        if self.m <= tol {
            return 0;
        }
        if self.alpha <= 0.0 {
            return 1;
        }
        ((tol / self.m).ln() / self.alpha.ln()).ceil() as usize
    }
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub value: GridFunction,
    pub last_change: f64,
    pub certificate: Certificate,
}

/// Iterates `T` from `start` until the successive change is at most `tol`.
///
/// Returns the last iterate `T^n start` with `n` the number of applications
/// that changed it by more than `tol`; a start already at the fixed point
/// comes back with `n = 0`.
pub fn iterate_to_fixed_point<A: Aggregator + ?Sized>(
    agg: &A,
    bounds: &BoundPair,
    start: &GridFunction,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let mut w = start.clone();
    let mut last_change = f64::INFINITY;
    for n in 0..max_iter {
        let next = apply(agg, &w);
        last_change = next.sup_distance(&w);
        if last_change <= tol {
            return Ok(FixedPoint {
                value: w,
                last_change,
                certificate: Certificate::new(bounds, n),
            });
        }
        w = next;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        last_change,
    })
}

#[cfg(test)]
mod tests;
