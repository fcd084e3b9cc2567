use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::loss::LossSpec;
use crate::search::bisect;

use super::eta_threshold;

const MAX_STEPS: usize = 1_000_000;
/// Below this fraction of `xhat` a policy that allocates nothing ends the path
/// as truncated instead of failing: the optimal steps there are below what the
/// refinement resolves.
const STALL_FRACTION: f64 = 1e-6;

/// An optimal allocation `a_0, a_1, ...` with the residual task mass before
/// each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationPath {
    pub actions: Vec<f64>,
    /// `x_0 = xhat`, `x_{t+1} = x_t - a_t`; one longer than `actions`.
    pub states: Vec<f64>,
    /// `sum_t beta^t l(a_t)` over the recorded actions.
    pub total_loss: f64,
    /// Mass left unallocated when the path was truncated; 0 for complete paths.
    pub truncation_residual: f64,
}

impl AllocationPath {
    pub(crate) fn from_actions(
        loss: &LossSpec,
        actions: Vec<f64>,
        truncation_residual: f64,
    ) -> Self {
        let mut states = Vec::with_capacity(actions.len() + 1);
        let mut x = loss.xhat();
        states.push(x);
        for &a in &actions {
            x = (x - a).max(0.0);
            states.push(x);
        }
        Self {
            total_loss: discounted_total(loss, &actions),
            actions,
            states,
            truncation_residual,
        }
    }

    /// Moves trailing actions below `min_action` into the truncation residual.
    pub fn fold_tail(&self, loss: &LossSpec, min_action: f64) -> Self {
        let keep = self
            .actions
            .iter()
            .take_while(|&&a| a >= min_action)
            .count();
        if keep == self.actions.len() {
            return self.clone();
        }
        let folded: f64 = self.actions[keep..].iter().sum();
        Self::from_actions(
            loss,
            self.actions[..keep].to_vec(),
            self.truncation_residual + folded,
        )
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncation_residual > 0.0
    }

    /// `sum_t a_t + truncation_residual`, which should equal `xhat`.
    pub fn accounted_mass(&self) -> f64 {
        self.actions.iter().sum::<f64>() + self.truncation_residual
    }

    /// Whether `a_{t+1} <= a_t + tol` for every step.
    pub fn is_decreasing(&self, tol: f64) -> bool {
        self.actions.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// `max_t |l'(a_{t+1}) - max{l'(a_t) / beta, l'(0)}|`. A complete path also
    /// checks its terminal step against `a_{T+1} = 0`.
    pub fn euler_residual(&self, loss: &LossSpec) -> f64 {
        let d0 = loss.deriv(0.0);
        let residual =
            |a: f64, next: f64| (loss.deriv(next) - (loss.deriv(a) / loss.beta()).max(d0)).abs();
        let interior = self
            .actions
            .windows(2)
            .map(|w| residual(w[0], w[1]))
            .fold(0.0, f64::max);
        match self.actions.last() {
            Some(&last) if !self.is_truncated() => interior.max(residual(last, 0.0)),
            _ => interior,
        }
    }
}

fn discounted_total(loss: &LossSpec, actions: &[f64]) -> f64 {
    let mut disc = 1.0;
    let mut total = 0.0;
    for &a in actions {
        total += disc * loss.value(a);
        disc *= loss.beta();
    }
    total
}

/// Follows `x_{t+1} = x_t - pi*(x_t)` from `xhat`, with `pi*` interpolated
/// from `policy`.
///
/// Once `x_t <= eta` the remainder is completed in one step, so paths with
/// `l'(0) > 0` terminate exactly. With `l'(0) = 0` the path is infinite, and
/// with a tiny `eta` it is very long; either way it is cut once the residual
/// drops below `residual_tol` while still above `eta`.
pub fn rollout_path(
    loss: &LossSpec,
    policy: &GridFunction,
    residual_tol: f64,
) -> Result<AllocationPath> {
    rollout_with(loss, residual_tol, |x| policy.eval(x))
}

/// Rollout driven by an arbitrary policy evaluator.
pub(crate) fn rollout_with(
    loss: &LossSpec,
    residual_tol: f64,
    mut policy: impl FnMut(f64) -> f64,
) -> Result<AllocationPath> {
    if !(residual_tol.is_finite() && residual_tol > 0.0) {
        return Err(invalid(
            "residual_tol",
            format!("must be positive, got {residual_tol}"),
        ));
    }
    let eta = eta_threshold(loss);
    let slack = 1e-8 * loss.xhat();
    let mut x = loss.xhat();
    let mut actions: Vec<f64> = Vec::new();
    let mut truncation = 0.0;
    while x > 0.0 {
        if actions.len() >= MAX_STEPS {
            return Err(Error::NotConverged {
                iterations: MAX_STEPS,
                last_change: x,
            });
        }
        if x > eta && x < residual_tol {
            truncation = x;
            break;
        }
        let a = if x <= eta { x } else { policy(x).clamp(0.0, x) };
        if a <= 0.0 && x <= STALL_FRACTION * loss.xhat() {
            truncation = x;
            break;
        }
        if a <= 0.0 {
            return Err(invalid(
                "policy",
                format!("allocates nothing at residual {x}; the grid is too coarse"),
            ));
        }
        if let Some(&prev) = actions.last() {
            if a > prev + slack {
                return Err(Error::IncreasingActions {
                    step: actions.len(),
                    previous: prev,
                    next: a,
                });
            }
        }
        actions.push(a);
        x = if a >= x { 0.0 } else { x - a };
    }
    Ok(AllocationPath::from_actions(loss, actions, truncation))
}

/// Actions generated by the Euler equation from `a0`, stopping at a zero
/// action, once the running sum passes `cap`, or when the terms fall below
/// `floor`.
fn euler_sequence(loss: &LossSpec, a0: f64, cap: f64, floor: f64) -> Vec<f64> {
    let d0 = loss.deriv(0.0);
    let beta = loss.beta();
    let mut seq = vec![a0];
    let mut sum = a0;
    let mut a = a0;
    while sum <= cap && seq.len() < MAX_STEPS {
        let slope = loss.deriv(a) / beta;
        if slope <= d0 {
            break;
        }
        let next = loss.deriv_inverse(slope, a);
        if next <= floor {
            break;
        }
        seq.push(next);
        sum += next;
        a = next;
    }
    seq
}

/// Builds the optimal path directly from `l'(a_{t+1}) = max{l'(a_t)/beta, l'(0)}`.
///
/// The first action solves `g(a0) = xhat`, where `g(a0)` is the total mass
/// allocated by the Euler recursion started at `a0`; `g` is continuous and
/// strictly increasing, so bisection applies. With `l'(0) = 0` the path is cut
/// once the unallocated remainder falls below `tol`.
pub fn euler_path(loss: &LossSpec, tol: f64) -> Result<AllocationPath> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let xhat = loss.xhat();
    let floor = 1e-18 * xhat;
    let g = |a0: f64| {
        euler_sequence(loss, a0, 2.0 * xhat, floor)
            .iter()
            .sum::<f64>()
            - xhat
    };
    let a0 = bisect(g, 0.0, xhat, 1e-16 * xhat)?;
    let full = euler_sequence(loss, a0, f64::INFINITY, floor);
    if loss.deriv(0.0) > 0.0 {
        return Ok(AllocationPath::from_actions(loss, full, 0.0));
    }
    let mut actions = Vec::new();
    let mut remaining = xhat;
    for a in full {
        if remaining < tol {
            break;
        }
        actions.push(a);
        remaining -= a;
    }
    Ok(AllocationPath::from_actions(
        loss,
        actions,
        remaining.max(0.0),
    ))
}
