//! Scalar negative-discount dynamic program.
//!
//! Minimizes `sum_t beta^t l(a_t)` subject to `sum_t a_t = xhat`, `a_t >= 0`,
//! with `beta > 1`. The Bellman operator
//!
//! ```text
//! (Tw)(x) = min_{0 <= a <= x} { l(a) + beta * w(x - a) }
//! ```
//!
//! is not a contraction, but it is an isotone concave self-map of the order
//! interval `[phi, psi]` with `phi(x) = l'(0) x` and `psi = l`, and iteration
//! from `psi` converges to the value function. When `l'(0) > 0` convergence is
//! reached after at most `ceil(xhat / eta) + 1` sweeps.

mod operator;
mod path;

pub use operator::{bellman_apply, BellmanOperator, NodeChoice};
pub use path::{euler_path, rollout_path, AllocationPath};

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::loss::LossSpec;
use crate::search::bisect;

/// Largest state at which finishing all remaining tasks in one step is optimal:
/// `eta = max { 0 <= x <= xhat : l'(x) <= beta l'(0) }`.
pub fn eta_threshold(loss: &LossSpec) -> f64 {
    let d0 = loss.deriv(0.0);
    if d0 <= 0.0 {
        return 0.0;
    }
    let target = loss.beta() * d0;
    let xhat = loss.xhat();
    if loss.deriv(xhat) <= target {
        return xhat;
    }
    bisect(|x| loss.deriv(x) - target, 0.0, xhat, 1e-15 * xhat).unwrap_or(0.0)
}

/// Iteration count after which value-function iteration is exact when `eta > 0`.
pub fn finite_iteration_cap(loss: &LossSpec) -> Option<usize> {
    let eta = eta_threshold(loss);
    if eta > 0.0 {
        let ratio = (loss.xhat() / eta).ceil();
        (ratio < 1e15).then(|| ratio as usize + 1)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfiOptions {
    pub grid_size: usize,
    /// Stop once the sup-norm change between successive iterates is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for VfiOptions {
    fn default() -> Self {
        Self {
            grid_size: 1001,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

impl VfiOptions {
    pub fn with_grid_size(mut self, n: usize) -> Self {
        self.grid_size = n;
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

    pub(crate) fn validate(&self) -> Result<()> {
        if self.grid_size < 11 {
            return Err(invalid(
                "grid_size",
                format!("must be at least 11, got {}", self.grid_size),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid(
                "tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ValueSolution {
    /// Converged value function, Hermite-interpolated with envelope slopes.
    pub value: GridFunction,
    pub iterations: usize,
    pub last_change: f64,
}

/// Iterates the Bellman operator from `psi = l` until the sup-norm change is
/// at most `opts.tol`.
///
/// When `l'(0) > 0` the iteration count is capped at `ceil(xhat / eta) + 1`;
/// failing to converge by then is reported as an error rather than silently
/// continuing.
pub fn solve_value_function(loss: &LossSpec, opts: &VfiOptions) -> Result<ValueSolution> {
    opts.validate()?;
    let grid = Arc::new(Grid::uniform(loss.xhat(), opts.grid_size)?);
    let op = BellmanOperator::new(loss, grid.clone());
    let start = op.upper_bound();
    iterate(&op, start, opts)
}

/// Value-function iteration from an arbitrary start in the order interval.
pub fn iterate(
    op: &BellmanOperator<'_>,
    start: GridFunction,
    opts: &VfiOptions,
) -> Result<ValueSolution> {
    opts.validate()?;
    let cap = finite_iteration_cap(op.loss());
    let limit = cap.map_or(opts.max_iter, |c| c.min(opts.max_iter));
    let mut w = start;
    let mut last_change = f64::INFINITY;
    for it in 1..=limit {
        let next = op.apply(&w)?;
        last_change = next.sup_distance(&w);
        w = next;
        if last_change <= opts.tol {
            return Ok(ValueSolution {
                value: w,
                iterations: it,
                last_change,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: limit,
        last_change,
    })
}

/// Greedy policy `pi*(x) = argmin_a { l(a) + beta w*(x - a) }` at every node.
///
/// Ties resolve to the smallest action.
pub fn extract_policy(loss: &LossSpec, wstar: &GridFunction) -> Result<GridFunction> {
    let op = BellmanOperator::new(loss, wstar.grid().clone());
    op.check_member(wstar)?;
    let actions = op.choices(wstar).into_iter().map(|c| c.action).collect();
    Ok(GridFunction::linear(wstar.grid().clone(), actions))
}

/// Max over interior nodes of `|W'(x) - l'(pi*(x))|`, with `W'` a central
/// difference. Nodes within two grid steps of `eta` are skipped: the second
/// derivative of `W` jumps there and the difference quotient spikes.
pub fn envelope_residual(loss: &LossSpec, wstar: &GridFunction, policy: &GridFunction) -> f64 {
    let eta = eta_threshold(loss);
    let h = wstar.grid().step();
    let nodes = wstar.nodes();
    let skip_eta = eta > 0.0 && eta < loss.xhat();
    (1..nodes.len() - 1)
        .filter(|&j| !(skip_eta && (nodes[j] - eta).abs() <= 2.0 * h))
        .map(|j| (wstar.central_difference(j) - loss.deriv(policy.values()[j])).abs())
        .fold(0.0, f64::max)
}

/// Rollout that re-solves the Bellman minimization at every visited state
/// against `wstar`, instead of interpolating a node policy.
pub fn greedy_rollout(
    loss: &LossSpec,
    wstar: &GridFunction,
    residual_tol: f64,
) -> Result<AllocationPath> {
    let op = BellmanOperator::new(loss, wstar.grid().clone());
    op.check_member(wstar)?;
    path::rollout_with(loss, residual_tol, |x| op.choose_at(x, wstar).action)
}
