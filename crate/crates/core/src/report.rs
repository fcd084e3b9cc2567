//! Equilibrium verification shared by the chain and network models.
//!
//! A price function `p` on `[0, 1]` together with a firm sequence is an
//! equilibrium when `p(0) = 0`, no entrant can profit from buying any stage
//! `t <= s` from `k` suppliers and selling at `p(s)`, and every active firm
//! earns zero profit.

use serde::Serialize;

use crate::grid::GridFunction;
use crate::par::map_indices;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub p0: f64,
    pub no_entry: f64,
    pub profit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            p0: 1e-12,
            no_entry: 1e-5,
            profit: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// No production takes place: an empty equilibrium candidate.
    Degenerate,
}

/// The most profitable entry opportunity found by the scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryWitness {
    /// Stage sold.
    pub s: f64,
    /// Stage bought in total from suppliers.
    pub t: f64,
    /// Number of suppliers.
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// `|p(0)|`.
    pub p0: f64,
    /// `max p(s) - c(s - t) - g(k) - beta k p(t / k)` over scanned triples.
    pub no_entry_max: f64,
    pub no_entry_witness: Option<EntryWitness>,
    /// `max_i |pi_i|` over active firms.
    pub profit_max: f64,
    pub profits: Vec<f64>,
    pub boundaries: Vec<f64>,
    pub verdict: Verdict,
    pub tolerances: Tolerances,
}

impl EquilibriumReport {
    pub(crate) fn assemble(
        price: &GridFunction,
        scan: (f64, Option<EntryWitness>),
        profits: Vec<f64>,
        boundaries: Vec<f64>,
        tolerances: Tolerances,
    ) -> Self {
        let p0 = price.values()[0].abs();
        let profit_max = profits.iter().map(|p| p.abs()).fold(0.0, f64::max);
        let empty = profits.is_empty() || price.sup_norm() == 0.0;
        let verdict = if empty {
            Verdict::Degenerate
        } else if p0 <= tolerances.p0
            && scan.0 <= tolerances.no_entry
            && profit_max <= tolerances.profit
        {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            p0,
            no_entry_max: scan.0,
            no_entry_witness: scan.1,
            profit_max,
            profits,
            boundaries,
            verdict,
            tolerances,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// No-entry scan over grid nodes `s_i`, supplier counts `k <= kmax` and
/// per-supplier stages `t / k = s_j` with `k s_j <= s_i`.
///
/// On a uniform grid `s_i - k s_j = s_{i - kj}`, so `cost_table[m] = c(s_m)`
/// gives exact costs and `p(t / k)` is read at a node. For `k = 1` this covers
/// every ordered node pair. Once `p(s_i) - g(k)` cannot beat the best value at
/// a node, larger `k` are skipped, which assumes `g` increasing over its finite
/// values; `g(k) = inf` marks `k` as unavailable.
pub fn scan_no_entry(
    price: &GridFunction,
    cost_table: &[f64],
    beta: f64,
    kmax: u32,
    assembly: impl Fn(u32) -> f64 + Sync,
) -> (f64, Option<EntryWitness>) {
    let p = price.values();
    let nodes = price.nodes();
    assert_eq!(cost_table.len(), p.len(), "one cost per node");
    let per_node = map_indices(p.len(), |i| {
        let mut best = f64::NEG_INFINITY;
        let mut arg = (0usize, 1u32);
        for k in 1..=kmax {
            let gk = assembly(k);
            if gk == f64::INFINITY {
                continue;
            }
            if p[i] - gk <= best {
                break;
            }
            let kf = k as f64;
            let ku = k as usize;
            for j in 0..=i / ku {
                let v = p[i] - cost_table[i - ku * j] - gk - beta * kf * p[j];
                if v > best {
                    best = v;
                    arg = (j, k);
                }
            }
        }
        (best, arg)
    });
    let mut best = f64::NEG_INFINITY;
    let mut witness = None;
    for (i, (v, (j, k))) in per_node.into_iter().enumerate() {
        if v > best {
            best = v;
            witness = Some(EntryWitness {
                s: nodes[i],
                t: k as f64 * nodes[j],
                k,
            });
        }
    }
    (best, witness)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::Grid;

    #[test]
    fn scan_detects_a_raised_node() {
        let grid = Arc::new(Grid::uniform(1.0, 11).unwrap());
        let cost: Vec<f64> = grid.nodes().to_vec();
        // with linear cost, p = c is never beaten by entry when beta > 1
        let p = GridFunction::linear(grid.clone(), cost.clone());
        let (v, w) = scan_no_entry(&p, &cost, 1.5, 1, |_| 0.0);
        assert!(v.abs() < 1e-15);
        assert_eq!(w.unwrap().k, 1);
        let mut raised = cost.clone();
        raised[6] += 0.01;
        let p = GridFunction::linear(grid, raised);
        let (v, w) = scan_no_entry(&p, &cost, 1.5, 1, |_| 0.0);
        assert!((v - 0.01).abs() < 1e-12);
        assert_eq!(w.unwrap().s, 0.6);
    }

    #[test]
    fn verdicts() {
        let grid = Arc::new(Grid::uniform(1.0, 3).unwrap());
        let zero = GridFunction::linear(grid.clone(), vec![0.0; 3]);
        let t = Tolerances::default();
        let r = EquilibriumReport::assemble(&zero, (0.0, None), vec![], vec![], t);
        assert_eq!(r.verdict, Verdict::Degenerate);
        let p = GridFunction::linear(grid, vec![0.0, 0.25, 1.0]);
        let r = EquilibriumReport::assemble(&p, (0.0, None), vec![1e-7], vec![1.0, 0.0], t);
        assert!(r.passed());
        let r = EquilibriumReport::assemble(&p, (1e-3, None), vec![1e-7], vec![1.0, 0.0], t);
        assert_eq!(r.verdict, Verdict::Fail);
    }
}
