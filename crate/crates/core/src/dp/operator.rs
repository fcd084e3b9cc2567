use std::sync::Arc;

use crate::error::Result;
use crate::grid::{Grid, GridFunction};
use crate::loss::LossSpec;
use crate::par::map_indices;
use crate::search::golden_section;

/// Relative bracket width for the continuous refinement around the best node.
const REFINE_TOL: f64 = 1e-10;

/// Optimal choice at one grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeChoice {
    /// Tasks completed now, `a* = x - y*`.
    pub action: f64,
    /// Tasks carried forward, `y*`.
    pub continuation: f64,
    /// `(Tw)(x)`.
    pub value: f64,
    /// Envelope slope `l'(a*)`.
    pub slope: f64,
}

/// Bellman operator of a [`LossSpec`] on a fixed uniform grid.
///
/// The minimization is written over the continuation state `y = x - a`. On a
/// uniform grid `x_i - s_j = s_{i-j}`, so a table of `l` at the nodes makes the
/// node scan two loads and a multiply-add. The best node is then refined by
/// golden-section search on its two neighbouring cells.
#[derive(Debug, Clone)]
pub struct BellmanOperator<'a> {
    loss: &'a LossSpec,
    grid: Arc<Grid>,
    ltab: Vec<f64>,
    lower: GridFunction,
    upper: GridFunction,
}

impl<'a> BellmanOperator<'a> {
    pub fn new(loss: &'a LossSpec, grid: Arc<Grid>) -> Self {
        let ltab: Vec<f64> = grid.nodes().iter().map(|&s| loss.value(s)).collect();
        let d0 = loss.deriv(0.0);
        let lower = GridFunction::from_fn_with_slope(grid.clone(), |x| d0 * x, |_| d0);
        let upper = GridFunction::hermite(
            grid.clone(),
            ltab.clone(),
            grid.nodes().iter().map(|&s| loss.deriv(s)).collect(),
        );
        Self {
            loss,
            grid,
            ltab,
            lower,
            upper,
        }
    }

    pub fn loss(&self) -> &LossSpec {
        self.loss
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `phi(x) = l'(0) x`.
    pub fn lower_bound(&self) -> GridFunction {
        self.lower.clone()
    }

    /// `psi = l`, with slopes `l'`.
    pub fn upper_bound(&self) -> GridFunction {
        self.upper.clone()
    }

    fn member_tol(&self) -> f64 {
        1e-9 * (1.0 + self.upper.sup_norm())
    }

    /// Errors unless `phi <= w <= psi` at every node.
    pub fn check_member(&self, w: &GridFunction) -> Result<()> {
        w.check_between(&self.lower, &self.upper, self.member_tol())
    }

    /// `Tw`. Keeps the interpolation kind of `w`: Hermite input yields Hermite
    /// output with envelope slopes, linear input yields linear output.
    pub fn apply(&self, w: &GridFunction) -> Result<GridFunction> {
        self.check_member(w)?;
        let choices = self.choices(w);
        let values = choices.iter().map(|c| c.value).collect();
        Ok(match w.slopes() {
            Some(_) => GridFunction::hermite(
                self.grid.clone(),
                values,
                choices.iter().map(|c| c.slope).collect(),
            ),
            None => GridFunction::linear(self.grid.clone(), values),
        })
    }

    /// Optimal choice at every node, without the membership check.
    pub fn choices(&self, w: &GridFunction) -> Vec<NodeChoice> {
        map_indices(self.grid.len(), |i| self.choose_at_node(i, w))
    }

    fn choose_at_node(&self, i: usize, w: &GridFunction) -> NodeChoice {
        let x = self.grid.node(i);
        if i == 0 {
            return NodeChoice {
                action: 0.0,
                continuation: 0.0,
                value: 0.0,
                slope: self.loss.deriv(0.0),
            };
        }
        let beta = self.loss.beta();
        let wv = w.values();
        // scan by action index k = i - j, smallest action first so ties keep it
        let mut best_k = 0;
        let mut best = f64::INFINITY;
        for k in 0..=i {
            let f = self.ltab[k] + beta * wv[i - k];
            if f < best {
                best = f;
                best_k = k;
            }
        }
        let j = i - best_k;
        let mut y = self.grid.node(j);
        let lo = self.grid.node(j.saturating_sub(1));
        let hi = self.grid.node((j + 1).min(i)).min(x);
        let objective = |y: f64| self.loss.value(x - y) + beta * w.eval(y);
        let (yg, fg) = golden_section(objective, lo, hi, REFINE_TOL * self.grid.xmax());
        if fg < best - 1e-15 * best.abs() {
            best = fg;
            y = yg;
        }
        let action = (x - y).max(0.0);
        NodeChoice {
            action,
            continuation: y,
            value: best,
            slope: self.loss.deriv(action),
        }
    }

    /// Greedy choice at an arbitrary state `x`, minimizing against the
    /// interpolant of `w` over all of `[0, x]`.
    pub fn choose_at(&self, x: f64, w: &GridFunction) -> NodeChoice {
        let beta = self.loss.beta();
        let objective = |y: f64| self.loss.value(x - y) + beta * w.eval(y);
        let mut best_y = 0.0;
        let mut best = objective(0.0);
        let top = self.grid.floor_index(x);
        for j in 1..=top {
            let f = objective(self.grid.node(j));
            if f < best {
                best = f;
                best_y = self.grid.node(j);
            }
        }
        let f_end = objective(x);
        if f_end < best {
            best = f_end;
            best_y = x;
        }
        let j = self.grid.floor_index(best_y);
        let lo = self.grid.node(j.saturating_sub(1)).min(x);
        let hi = self.grid.node((j + 1).min(self.grid.len() - 1)).min(x);
        let (yg, fg) = golden_section(objective, lo, hi, REFINE_TOL * self.grid.xmax());
        if fg < best - 1e-15 * best.abs() {
            best = fg;
            best_y = yg;
        }
        let action = (x - best_y).max(0.0);
        NodeChoice {
            action,
            continuation: best_y,
            value: best,
            slope: self.loss.deriv(action),
        }
    }
}

/// One application of the Bellman operator on the grid of `w`.
///
/// Errors with [`crate::Error::OutsideOrderInterval`] when `w` is not between
/// `phi` and `psi`.
pub fn bellman_apply(loss: &LossSpec, w: &GridFunction) -> Result<GridFunction> {
    BellmanOperator::new(loss, w.grid().clone()).apply(w)
}
