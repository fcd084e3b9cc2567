use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::grid::{Grid, GridFunction};
use crate::loss::{Loss, LossSpec};

use super::{Action, ActionSet, Aggregator};

/// The scalar allocation problem as an aggregator over the continuation
/// state: `L(x, y, w) = l(x - y) + beta w(y)` with `0 <= y <= x`.
#[derive(Debug, Clone)]
pub struct LossAggregator {
    loss: Arc<dyn Loss>,
    beta: f64,
    grid: Arc<Grid>,
}

impl LossAggregator {
    pub fn new(spec: &LossSpec, grid_size: usize) -> Result<Self> {
        Ok(Self {
            loss: spec.loss().clone(),
            beta: spec.beta(),
            grid: Arc::new(Grid::uniform(spec.xhat(), grid_size)?),
        })
    }

    /// Any positive `beta`, including `beta <= 1`, for negative controls.
    pub fn with_beta(loss: Arc<dyn Loss>, beta: f64, xhat: f64, grid_size: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self {
            loss,
            beta,
            grid: Arc::new(Grid::uniform(xhat, grid_size)?),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `phi(x) = l'(0) x`.
    pub fn phi(&self) -> GridFunction {
        let d0 = self.loss.deriv(0.0);
        GridFunction::from_fn_with_slope(self.grid.clone(), |x| d0 * x, |_| d0)
    }

    /// `psi = l`.
    pub fn psi(&self) -> GridFunction {
        GridFunction::from_fn_with_slope(
            self.grid.clone(),
            |x| self.loss.value(x),
            |x| self.loss.deriv(x),
        )
    }
}

impl Aggregator for LossAggregator {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn feasible(&self, x: f64) -> ActionSet {
        ActionSet::interval(0.0, x)
    }

    fn next_state(&self, _x: f64, a: Action) -> f64 {
        a.cont
    }

    fn aggregate(&self, x: f64, a: Action, continuation: f64) -> f64 {
        self.loss.value(x - a.cont) + self.beta * continuation
    }

    fn state_derivative(&self, x: f64, a: Action) -> Option<f64> {
        Some(self.loss.deriv((x - a.cont).max(0.0)))
    }
}
