//! City hierarchies.
//!
//! A city of population `s` hosts `v = s - t` people and delegates the rest to
//! `k` satellite cities of size `t / k` each, paying a tax `tau` on what it
//! delegates. With hosting cost `c(s) = s^gamma` the hierarchy is geometric:
//! `v_i = theta^i (1 - k theta)` with `theta = (1 + tau)^(1 / (1 - gamma))`,
//! which requires `theta < 1 / k`.

use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::general::{Action, ActionSet, Aggregator};
use crate::grid::{Grid, GridFunction};
use crate::loss::{Loss, PowerLoss};
use crate::report::{scan_no_entry, EquilibriumReport, Tolerances};
use crate::search::{bisect, golden_section};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CitySpec {
    pub gamma: f64,
    pub tau: f64,
    pub k: u32,
    pub population: f64,
    /// Layers stop once the population left to place drops below this.
    pub layer_cut: f64,
}

impl CitySpec {
    /// `k = 2`, unit population, layer cut `1e-6`.
    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        Self::with_k(gamma, tau, 2)
    }

    pub fn with_k(gamma: f64, tau: f64, k: u32) -> Result<Self> {
        let spec = Self {
            gamma,
            tau,
            k,
            population: 1.0,
            layer_cut: 1e-6,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_population(mut self, population: f64) -> Result<Self> {
        self.layer_cut *= population / self.population;
        self.population = population;
        self.validate()?;
        Ok(self)
    }

    pub fn with_layer_cut(mut self, layer_cut: f64) -> Result<Self> {
        self.layer_cut = layer_cut;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(invalid("gamma", format!("must be > 1, got {}", self.gamma)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(invalid(
                "population",
                format!("must be > 0, got {}", self.population),
            ));
        }
        if !(self.layer_cut.is_finite() && self.layer_cut > 0.0) {
            return Err(invalid(
                "layer_cut",
                format!("must be > 0, got {}", self.layer_cut),
            ));
        }
        Ok(())
    }

    /// `(1 + tau)^(1 / (1 - gamma))`.
    pub fn theta(&self) -> f64 {
        (1.0 + self.tau).powf(1.0 / (1.0 - self.gamma))
    }

    /// Smallest tax rate with `theta < 1 / k`: `k^(gamma - 1) - 1`.
    pub fn min_tau(&self) -> f64 {
        (self.k as f64).powf(self.gamma - 1.0) - 1.0
    }

    pub fn check_feasible(&self) -> Result<()> {
        let theta = self.theta();
        let bound = 1.0 / self.k as f64;
        // the tau test catches the boundary exactly, where theta may round below 1/k
        if self.tau <= self.min_tau() || theta >= bound {
            return Err(Error::InfeasibleCity {
                theta,
                bound,
                min_tau: self.min_tau(),
            });
        }
        Ok(())
    }

    fn cost(&self) -> PowerLoss {
        PowerLoss::new(0.0, 1.0, self.gamma).expect("validated")
    }

    /// `W(s) = (1 - k theta)^(gamma - 1) s^gamma`.
    pub fn closed_form_value(&self, s: f64) -> f64 {
        (1.0 - self.k as f64 * self.theta()).powf(self.gamma - 1.0) * s.max(0.0).powf(self.gamma)
    }

    /// `v_i = theta^i (1 - k theta) population`.
    pub fn closed_form_size(&self, i: usize) -> f64 {
        let theta = self.theta();
        theta.powi(i as i32) * (1.0 - self.k as f64 * theta) * self.population
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CityLayer {
    pub i: usize,
    /// Population of each city on the layer.
    pub size: f64,
    /// `k^i`.
    pub count: f64,
    /// Rank of the layer's cities, `k^i`.
    pub rank: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSizeFit {
    /// Slope of `ln rank` on `ln size`; `ln k / ln theta`, negative.
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CityHierarchy {
    pub gamma: f64,
    pub tau: f64,
    pub k: u32,
    pub theta: f64,
    pub layers: Vec<CityLayer>,
    /// Population placed below the last reported layer.
    pub tail: f64,
    /// `W(population)`, summed along the hierarchy.
    pub value: f64,
    pub ranksize: Option<RankSizeFit>,
}

/// Cap on the number of explicitly summed terms of a geometric-like series.
const SERIES_TERMS: usize = 10_000;

/// `sum_{i>=0} t_i` for positive terms with `t_{i+1} = r_i t_i` and an
/// asymptotically constant ratio below 1. Summation stops once a term is
/// negligible and the remainder is closed from the last ratio.
fn series(first: f64, mut ratio: impl FnMut(usize) -> f64) -> f64 {
    let mut sum = first;
    let mut t = first;
    let mut q = 0.0;
    for i in 0..SERIES_TERMS {
        q = ratio(i);
        t *= q;
        sum += t;
        if t <= 1e-17 * sum {
            break;
        }
    }
    if q < 1.0 {
        sum += t * q / (1.0 - q);
    }
    sum
}

/// Cap on reported layers. Near `theta = 1 / k` the cut is reached only after
/// very many layers; the rest is reported as tail.
const MAX_LAYERS: usize = 512;

/// Solves the `k`-weighted Euler recursion `c'(v_i) = (1 + tau) c'(v_{i+1})`
/// with `sum_i k^i v_i = population`, the top city size found by bisection.
pub fn solve_city(spec: &CitySpec) -> Result<CityHierarchy> {
    spec.validate()?;
    spec.check_feasible()?;
    let cost = spec.cost();
    let beta = 1.0 + spec.tau;
    let k = spec.k as f64;
    // v_{i+1} from v_i; the power cost makes this a fixed ratio, but the
    // recursion is run through the inverse marginal cost
    let step = |v: f64| cost.deriv_inverse(cost.deriv(v) / beta, v);
    let mass = |v0: f64| {
        if v0 <= 0.0 {
            return 0.0;
        }
        let mut v = v0;
        series(v0, |_| {
            let next = step(v);
            let q = k * next / v;
            v = next;
            q
        })
    };
    let pop = spec.population;
    let v0 = bisect(|v0| mass(v0) - pop, 0.0, pop, 1e-16 * pop)?;
    let value = {
        let mut v = v0;
        series(cost.value(v0), |_| {
            let next = step(v);
            let q = beta * k * cost.value(next) / cost.value(v);
            v = next;
            q
        })
    };

    let mut layers = Vec::new();
    let mut placed = 0.0;
    let mut size = v0;
    let mut count: f64 = 1.0;
    while pop - placed >= spec.layer_cut
        && size > 0.0
        && layers.len() < MAX_LAYERS
        && count.is_finite()
    {
        let i = layers.len();
        layers.push(CityLayer {
            i,
            size,
            count,
            rank: count,
        });
        placed += count * size;
        size = step(size);
        count *= k;
    }
    let mut h = CityHierarchy {
        gamma: spec.gamma,
        tau: spec.tau,
        k: spec.k,
        theta: spec.theta(),
        layers,
        tail: (pop - placed).max(0.0),
        value,
        ranksize: None,
    };
    h.ranksize = ranksize_fit(&h).ok();
    Ok(h)
}

/// Least-squares line through `(ln size_i, ln rank_i)`.
pub fn ranksize_fit(h: &CityHierarchy) -> Result<RankSizeFit> {
    if h.layers.len() < 3 {
        return Err(Error::TooFewLayers {
            needed: 3,
            got: h.layers.len(),
        });
    }
    let xs: Vec<f64> = h.layers.iter().map(|l| l.size.ln()).collect();
    let ys: Vec<f64> = h.layers.iter().map(|l| l.rank.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(RankSizeFit {
        slope,
        intercept,
        max_residual,
    })
}

/// `max_s |p(s) - min_t [c(s - t) + (1 + tau) k p(t / k)]|` and the envelope
/// gap `max_s |p'(s) - c'(s - t*)|` for the closed-form `p = W` on an
/// `n`-node grid. The minimization over `t` scans the grid and refines by
/// golden-section search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CityVerification {
    pub bellman_residual: f64,
    pub envelope_residual: f64,
}

pub fn verify_city(spec: &CitySpec, n: usize) -> Result<CityVerification> {
    spec.check_feasible()?;
    let agg = CityAggregator::new(spec, n)?;
    let grid = agg.grid().clone();
    let cost = spec.cost();
    let mut bellman: f64 = 0.0;
    let mut envelope: f64 = 0.0;
    for &s in grid.nodes().iter().skip(1) {
        let f = |t: f64| {
            agg.aggregate(
                s,
                Action {
                    cont: t,
                    int: spec.k,
                },
                spec.closed_form_value(t / spec.k as f64),
            )
        };
        let j = grid
            .nodes()
            .iter()
            .take_while(|&&t| t <= s)
            .enumerate()
            .map(|(j, &t)| (j, f(t)))
            .fold(
                (0, f64::INFINITY),
                |acc, v| if v.1 < acc.1 { v } else { acc },
            )
            .0;
        let lo = grid.node(j.saturating_sub(1));
        let hi = grid.node((j + 1).min(grid.len() - 1)).min(s);
        let (t, m) = golden_section(f, lo, hi, 1e-13 * spec.population);
        bellman = bellman.max((spec.closed_form_value(s) - m).abs());
        let exact_slope = spec.gamma * spec.closed_form_value(s) / s;
        envelope = envelope.max((exact_slope - cost.deriv(s - t)).abs());
    }
    Ok(CityVerification {
        bellman_residual: bellman,
        envelope_residual: envelope,
    })
}

/// Equilibrium check of the closed-form price `W` on an `n`-node grid: `W(0)`,
/// no profitable entry with `k` satellites over node-aligned pairs, and zero
/// profit `W(b_i) - c(v_i) - (1 + tau) k W(b_{i+1})` down the hierarchy with
/// `b_0 = population` and `b_{i+1} = (b_i - v_i) / k`.
pub fn verify_city_equilibrium(
    spec: &CitySpec,
    h: &CityHierarchy,
    n: usize,
) -> Result<EquilibriumReport> {
    spec.check_feasible()?;
    let grid = Arc::new(Grid::uniform(spec.population, n)?);
    let price = GridFunction::from_fn(grid, |s| spec.closed_form_value(s));
    let cost = spec.cost();
    let table: Vec<f64> = price.nodes().iter().map(|&s| cost.value(s)).collect();
    let beta = 1.0 + spec.tau;
    let k = spec.k;
    let scan = scan_no_entry(&price, &table, beta, k, |j| {
        if j == k {
            0.0
        } else {
            f64::INFINITY
        }
    });
    let mut b = spec.population;
    let mut boundaries = vec![b];
    let mut profits = Vec::with_capacity(h.layers.len());
    for l in &h.layers {
        let next = (b - l.size) / k as f64;
        profits.push(
            spec.closed_form_value(b)
                - cost.value(l.size)
                - beta * k as f64 * spec.closed_form_value(next),
        );
        b = next;
        boundaries.push(b);
    }
    Ok(EquilibriumReport::assemble(
        &price,
        scan,
        profits,
        boundaries,
        Tolerances::default(),
    ))
}

/// The city problem as an aggregator with a fixed branching factor:
/// `L(s, t, w) = c(s - t) + (1 + tau) k w(t / k)`.
#[derive(Debug, Clone)]
pub struct CityAggregator {
    cost: PowerLoss,
    beta: f64,
    k: u32,
    grid: Arc<Grid>,
}

impl CityAggregator {
    pub fn new(spec: &CitySpec, n: usize) -> Result<Self> {
        Ok(Self {
            cost: spec.cost(),
            beta: 1.0 + spec.tau,
            k: spec.k,
            grid: Arc::new(Grid::uniform(spec.population, n)?),
        })
    }

    pub fn psi(&self) -> GridFunction {
        GridFunction::from_fn_with_slope(
            self.grid.clone(),
            |s| self.cost.value(s),
            |s| self.cost.deriv(s),
        )
    }

    pub fn phi(&self) -> GridFunction {
        GridFunction::from_fn_with_slope(self.grid.clone(), |_| 0.0, |_| 0.0)
    }
}

impl Aggregator for CityAggregator {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn feasible(&self, s: f64) -> ActionSet {
        ActionSet {
            lo: 0.0,
            hi: s,
            ints: vec![self.k],
        }
    }

    fn next_state(&self, _s: f64, a: Action) -> f64 {
        a.cont / a.int as f64
    }

    fn aggregate(&self, s: f64, a: Action, continuation: f64) -> f64 {
        self.cost.value(s - a.cont) + self.beta * a.int as f64 * continuation
    }

    fn state_derivative(&self, s: f64, a: Action) -> Option<f64> {
        Some(self.cost.deriv((s - a.cont).max(0.0)))
    }
}

impl CityHierarchy {
    /// `(ln rank, ln size)` rows.
    pub fn ranksize_csv(&self) -> String {
        crate::export::rows_csv(
            &["ln_rank", "ln_size"],
            self.layers.iter().map(|l| vec![l.rank.ln(), l.size.ln()]),
        )
    }

    pub fn to_dot(&self, max_nodes: usize) -> String {
        let mut out = String::from("digraph cities {\n  node [shape=circle];\n");
        let mut id = 0usize;
        let mut prev_layer: Vec<usize> = Vec::new();
        for l in &self.layers {
            let count = l.count as usize;
            if id + count > max_nodes {
                break;
            }
            let mut this_layer = Vec::with_capacity(count);
            for c in 0..count {
                let _ = writeln!(out, "  c{id} [label=\"{:.4e}\", layer={}];", l.size, l.i);
                if !prev_layer.is_empty() {
                    let _ = writeln!(out, "  c{} -> c{id};", prev_layer[c / self.k as usize]);
                }
                this_layer.push(id);
                id += 1;
            }
            prev_layer = this_layer;
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::general::{iterate_to_fixed_point, BoundPair};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn closed_form_example() {
        let spec = CitySpec::new(1.2, 0.2).unwrap();
        let h = solve_city(&spec).unwrap();
        assert_relative_eq!(h.theta, 0.401_877_572, epsilon = 1e-9);
        assert_relative_eq!(h.layers[0].size, 1.0 - 2.0 * h.theta, epsilon = 1e-12);
        assert_abs_diff_eq!(h.layers[0].size, 0.19624, epsilon = 1e-5);
        assert_relative_eq!(h.value, spec.closed_form_value(1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(h.value, 0.72204, epsilon = 1e-5);
        let fit = h.ranksize.unwrap();
        assert_relative_eq!(fit.slope, 2f64.ln() / h.theta.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(fit.slope.abs(), 0.76036, epsilon = 1e-5);
        assert!(fit.max_residual <= 1e-9);
        let placed: f64 = h.layers.iter().map(|l| l.count * l.size).sum::<f64>() + h.tail;
        assert_abs_diff_eq!(placed, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_tax() {
        let spec = CitySpec::new(1.2, 0.14).unwrap();
        match solve_city(&spec) {
            Err(Error::InfeasibleCity { min_tau, .. }) => {
                assert_abs_diff_eq!(min_tau, 0.1487, epsilon = 1e-4)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slope_approaches_one_near_the_bound() {
        let h = solve_city(&CitySpec::new(1.2, 0.1488).unwrap()).unwrap();
        assert_abs_diff_eq!(h.ranksize.unwrap().slope, -1.0, epsilon = 1e-3);
    }

    #[test]
    fn single_branch_is_the_chain() {
        let spec = CitySpec::with_k(1.5, 0.2, 1).unwrap();
        let h = solve_city(&spec).unwrap();
        let cf = crate::chain::coase_closed_form(1.0, 1.0 / 1.5, 0.2).unwrap();
        assert_relative_eq!(h.theta, cf.theta, epsilon = 1e-14);
        assert_relative_eq!(h.value, cf.price(1.0), epsilon = 1e-10);
        for l in h.layers.iter().take(10) {
            assert_relative_eq!(l.size, cf.firm_size(l.i), max_relative = 1e-10);
        }
    }

    #[test]
    fn general_branching_matches_closed_form() {
        let spec = CitySpec::with_k(1.5, 1.0, 3).unwrap();
        let h = solve_city(&spec).unwrap();
        assert_relative_eq!(h.layers[0].size, spec.closed_form_size(0), epsilon = 1e-12);
        assert_relative_eq!(h.value, spec.closed_form_value(1.0), epsilon = 1e-10);
        assert_relative_eq!(
            h.ranksize.unwrap().slope,
            3f64.ln() / h.theta.ln(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn closed_form_solves_the_city_bellman_equation() {
        let v = verify_city(&CitySpec::new(1.2, 0.2).unwrap(), 1001).unwrap();
        assert!(v.bellman_residual < 1e-10, "{v:?}");
        assert!(v.envelope_residual < 1e-5, "{v:?}");
    }

    #[test]
    fn value_iteration_reproduces_closed_form() {
        // quadratic cost, so the cubic interpolant is exact near 0
        let spec = CitySpec::new(2.0, 1.5).unwrap();
        let agg = CityAggregator::new(&spec, 401).unwrap();
        let bounds = BoundPair::auto(&agg, agg.phi(), agg.psi()).unwrap();
        let fp = iterate_to_fixed_point(&agg, &bounds, &bounds.psi, 1e-9, 1_000).unwrap();
        for (&s, &w) in fp.value.nodes().iter().zip(fp.value.values()) {
            assert_abs_diff_eq!(w, spec.closed_form_value(s), epsilon = 1e-7);
        }
    }

    #[test]
    fn closed_form_city_is_an_equilibrium() {
        let spec = CitySpec::new(1.2, 0.2).unwrap();
        let h = solve_city(&spec).unwrap();
        let report = verify_city_equilibrium(&spec, &h, 1001).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.profit_max < 1e-12);
    }

    #[test]
    fn too_few_layers() {
        let spec = CitySpec::new(1.2, 0.2)
            .unwrap()
            .with_layer_cut(0.7)
            .unwrap();
        let h = solve_city(&spec).unwrap();
        assert!(h.layers.len() < 3);
        assert!(matches!(ranksize_fit(&h), Err(Error::TooFewLayers { .. })));
    }
}
