use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::par::map_indices;

use super::{Action, Aggregator};

/// Largest number of complete plans [`brute_force_value`] will enumerate.
pub const BRUTE_FORCE_BUDGET: u64 = 100_000_000;

struct Search<'a, A: ?Sized> {
    agg: &'a A,
    terminal: &'a GridFunction,
    horizon: usize,
    step: f64,
    paths: AtomicU64,
    budget: u64,
}

impl<A: Aggregator + ?Sized> Search<'_, A> {
    fn actions(&self, x: f64) -> Vec<Action> {
        let set = self.agg.feasible(x);
        let mut conts = Vec::new();
        let mut c = set.lo;
        let mut m = 0u64;
        while c <= set.hi + 1e-12 * self.step {
            conts.push(c.min(set.hi));
            m += 1;
            c = set.lo + m as f64 * self.step;
        }
        if set.hi - conts[conts.len() - 1] > 1e-9 * self.step {
            conts.push(set.hi);
        }
        set.ints
            .iter()
            .flat_map(|&int| conts.iter().map(move |&cont| Action { cont, int }))
            .collect()
    }

    /// Minimum over all plans from `x` with `depth` periods already used.
    fn best(&self, x: f64, depth: usize) -> Result<f64> {
        if depth == self.horizon {
            let n = self.paths.fetch_add(1, Ordering::Relaxed) + 1;
            if n > self.budget {
                return Err(Error::BudgetExceeded {
                    paths: n as u128,
                    limit: self.budget as u128,
                });
            }
            return Ok(self.terminal.eval(x));
        }
        let mut best = f64::INFINITY;
        for a in self.actions(x) {
            let next = self.agg.next_state(x, a);
            let v = self.agg.aggregate(x, a, self.best(next, depth + 1)?);
            best = best.min(v);
        }
        Ok(best)
    }
}

/// Minimum of `T_{a_0} T_{a_1} ... T_{a_{H-1}} terminal (x0)` over every plan
/// of `horizon` actions drawn from a lattice of `action_grid` points on
/// `[0, x_max]` (plus each interval's upper end).
///
/// Plans are enumerated exhaustively; inner minima are folded into their
/// parent, which is exact because `L` is non-decreasing in the continuation.
pub fn brute_force_value<A: Aggregator + ?Sized>(
    agg: &A,
    terminal: &GridFunction,
    x0: f64,
    horizon: usize,
    action_grid: usize,
) -> Result<f64> {
    brute_force_value_with_budget(agg, terminal, x0, horizon, action_grid, BRUTE_FORCE_BUDGET)
}

/// [`brute_force_value`] with an explicit limit on enumerated plans.
pub fn brute_force_value_with_budget<A: Aggregator + ?Sized>(
    agg: &A,
    terminal: &GridFunction,
    x0: f64,
    horizon: usize,
    action_grid: usize,
    budget: u64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    if action_grid < 2 {
        return Err(invalid(
            "action_grid",
            format!("need at least 2 points, got {action_grid}"),
        ));
    }
    let search = Search {
        agg,
        terminal,
        horizon,
        step: agg.grid().xmax() / (action_grid - 1) as f64,
        paths: AtomicU64::new(0),
        budget,
    };
    let first = search.actions(x0);
    let values = map_indices(first.len(), |i| {
        let a = first[i];
        let next = agg.next_state(x0, a);
        search.best(next, 1).map(|cont| agg.aggregate(x0, a, cont))
    });
    values
        .into_iter()
        .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}
