//! Coasian production chains.
//!
//! Firm `i` buys the good at stage `b_{i+1}` from its supplier, performs
//! `v_i = b_i - b_{i+1}` tasks at cost `c(v_i)` and sells stage `b_i` at price
//! `p(b_i)`. Purchases carry a wedge `tau`, so the competitive price solves the
//! negative-discount problem with `l = c` and `beta = 1 + tau`, and the firm
//! boundaries follow its optimal path.

use std::sync::Arc;

use serde::Serialize;

use crate::dp::{greedy_rollout, solve_value_function, AllocationPath, VfiOptions};
use crate::error::{invalid, Result};
use crate::grid::{Grid, GridFunction};
use crate::loss::{Loss, LossSpec, PowerLoss};
use crate::report::{scan_no_entry, EquilibriumReport, Tolerances};

/// Firms below this size are reported as part of the tail.
pub const ACTIVE_FIRM_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ChainSpec {
    cost: LossSpec,
    tau: f64,
    cobb_douglas: Option<(f64, f64)>,
}

impl ChainSpec {
    pub fn new(cost: Arc<dyn Loss>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self {
            cost: LossSpec::new(cost, 1.0 + tau, 1.0)?,
            tau,
            cobb_douglas: None,
        })
    }

    /// `c(v) = kappa v^(1/eta_span)`.
    pub fn cobb_douglas(kappa: f64, eta_span: f64, tau: f64) -> Result<Self> {
        let cost = PowerLoss::span_of_control(kappa, eta_span)?;
        let mut spec = Self::new(Arc::new(cost), tau)?;
        spec.cobb_douglas = Some((kappa, eta_span));
        Ok(spec)
    }

    pub fn cost(&self) -> &LossSpec {
        &self.cost
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `(kappa, eta_span)` for the Cobb-Douglas family.
    pub fn cobb_douglas_params(&self) -> Option<(f64, f64)> {
        self.cobb_douglas
    }

    pub fn closed_form(&self) -> Option<CoaseClosedForm> {
        self.cobb_douglas
            .and_then(|(kappa, eta)| coase_closed_form(kappa, eta, self.tau).ok())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(invalid("tau", format!("must be > 0, got {tau}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ChainEquilibrium {
    pub tau: f64,
    pub price: GridFunction,
    /// Firm sizes `v_i`, most downstream first.
    pub allocation: AllocationPath,
    /// `b_0 = 1, b_{i+1} = b_i - v_i`; one longer than the firm list.
    pub boundaries: Vec<f64>,
    pub profits: Vec<f64>,
    pub iterations: usize,
}

impl ChainEquilibrium {
    pub fn firms(&self) -> usize {
        self.allocation.len()
    }

    /// `p(1) = sum_i (1 + tau)^i c(v_i)`, summed along the allocation.
    pub fn final_price_by_summation(&self) -> f64 {
        self.allocation.total_loss
    }
}

pub fn solve_chain(spec: &ChainSpec) -> Result<ChainEquilibrium> {
    solve_chain_with(spec, &VfiOptions::default())
}

pub fn solve_chain_with(spec: &ChainSpec, opts: &VfiOptions) -> Result<ChainEquilibrium> {
    let cost = &spec.cost;
    let sol = solve_value_function(cost, opts)?;
    let path = greedy_rollout(cost, &sol.value, ACTIVE_FIRM_CUTOFF * cost.xhat())?
        .fold_tail(cost, ACTIVE_FIRM_CUTOFF);
    let boundaries = path.states.clone();
    let profits = chain_profits(cost, &sol.value, &path);
    Ok(ChainEquilibrium {
        tau: spec.tau,
        price: sol.value,
        allocation: path,
        boundaries,
        profits,
        iterations: sol.iterations,
    })
}

/// `pi_i = p(b_i) - c(v_i) - (1 + tau) p(b_{i+1})`.
pub(crate) fn chain_profits(
    cost: &LossSpec,
    price: &GridFunction,
    path: &AllocationPath,
) -> Vec<f64> {
    path.actions
        .iter()
        .zip(path.states.windows(2))
        .map(|(&v, b)| price.eval(b[0]) - cost.value(v) - cost.beta() * price.eval(b[1]))
        .collect()
}

/// Checks `p(0) = 0`, the no-entry condition over all ordered node pairs, and
/// zero profit of every active firm.
pub fn verify_equilibrium(eq: &ChainEquilibrium, spec: &ChainSpec) -> EquilibriumReport {
    verify_with(eq, spec, Tolerances::default())
}

pub fn verify_with(
    eq: &ChainEquilibrium,
    spec: &ChainSpec,
    tolerances: Tolerances,
) -> EquilibriumReport {
    let cost = &spec.cost;
    let table: Vec<f64> = eq.price.nodes().iter().map(|&s| cost.value(s)).collect();
    let scan = scan_no_entry(&eq.price, &table, cost.beta(), 1, |_| 0.0);
    let profits = chain_profits(cost, &eq.price, &eq.allocation);
    EquilibriumReport::assemble(&eq.price, scan, profits, eq.boundaries.clone(), tolerances)
}

/// Closed-form chain for `c(v) = kappa v^(1/eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoaseClosedForm {
    pub kappa: f64,
    pub eta_span: f64,
    pub tau: f64,
    /// `(1 + tau)^(eta / (eta - 1))`.
    pub theta: f64,
}

impl CoaseClosedForm {
    /// `p(x) = kappa (1 - theta)^((1 - eta) / eta) x^(1 / eta)`.
    pub fn price(&self, x: f64) -> f64 {
        let e = self.eta_span;
        self.kappa * (1.0 - self.theta).powf((1.0 - e) / e) * x.max(0.0).powf(1.0 / e)
    }

    /// `v_i = theta^i (1 - theta)`.
    pub fn firm_size(&self, i: usize) -> f64 {
        self.theta.powi(i as i32) * (1.0 - self.theta)
    }

    pub fn allocation(&self, firms: usize) -> Vec<f64> {
        (0..firms).map(|i| self.firm_size(i)).collect()
    }

    pub fn price_on(&self, grid: Arc<Grid>) -> GridFunction {
        GridFunction::from_fn(grid, |x| self.price(x))
    }
}

pub fn coase_closed_form(kappa: f64, eta_span: f64, tau: f64) -> Result<CoaseClosedForm> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    if !(eta_span > 0.0 && eta_span < 1.0) {
        return Err(invalid(
            "eta_span",
            format!("must lie in (0, 1), got {eta_span}"),
        ));
    }
    check_tau(tau)?;
    Ok(CoaseClosedForm {
        kappa,
        eta_span,
        tau,
        theta: (1.0 + tau).powf(eta_span / (eta_span - 1.0)),
    })
}

/// Final-good price under optimal chain organization and under a fixed
/// equal split into `n` producers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailurePrices {
    pub tau: f64,
    pub optimal: f64,
    pub hypothetical: f64,
}

impl FailurePrices {
    pub fn ratio(&self) -> f64 {
        self.hypothetical / self.optimal
    }
}

/// `optimal = kappa (1 - theta)^((1 - eta) / eta)` and
/// `hypothetical = kappa sum_{i=0}^{n-1} (1 + tau)^i (1/n)^(1/eta)`.
///
/// The geometric sum is evaluated in log space, so large `n tau` overflows
/// only when the price itself is not representable. At `tau = 0` the optimal
/// price is its limit 0.
pub fn failure_prices(kappa: f64, eta_span: f64, tau: f64, n: u32) -> Result<FailurePrices> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    if !(eta_span > 0.0 && eta_span < 1.0) {
        return Err(invalid(
            "eta_span",
            format!("must lie in (0, 1), got {eta_span}"),
        ));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(invalid("tau", format!("must be >= 0, got {tau}")));
    }
    if n == 0 {
        return Err(invalid("N", "need at least one producer"));
    }
    let nf = n as f64;
    let ln_share = -(nf.ln()) / eta_span;
    let (optimal, ln_sum) = if tau == 0.0 {
        (0.0, nf.ln())
    } else {
        let cf = coase_closed_form(kappa, eta_span, tau)?;
        let z = nf * tau.ln_1p();
        // ln((e^z - 1) / tau), stable for small and large z
        let ln_expm1 = if z > 30.0 {
            z + (-(-z).exp_m1()).ln()
        } else {
            z.exp_m1().ln()
        };
        (cf.price(1.0), ln_expm1 - tau.ln())
    };
    Ok(FailurePrices {
        tau,
        optimal,
        hypothetical: kappa * (ln_sum + ln_share).exp(),
    })
}

/// Chain export record: `{tau, theta, firms, price_nodes, price_values}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainExport {
    pub tau: f64,
    pub theta: Option<f64>,
    pub firms: Vec<FirmRecord>,
    pub tail: f64,
    pub price_nodes: Vec<f64>,
    pub price_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirmRecord {
    pub i: usize,
    pub b_i: f64,
    pub v_i: f64,
    pub profit: f64,
}

impl ChainEquilibrium {
    pub fn export(&self, spec: &ChainSpec) -> ChainExport {
        ChainExport {
            tau: self.tau,
            theta: spec.closed_form().map(|c| c.theta),
            firms: self
                .allocation
                .actions
                .iter()
                .enumerate()
                .map(|(i, &v)| FirmRecord {
                    i,
                    b_i: self.boundaries[i],
                    v_i: v,
                    profit: self.profits[i],
                })
                .collect(),
            tail: self.allocation.truncation_residual,
            price_nodes: self.price.nodes().to_vec(),
            price_values: self.price.values().to_vec(),
        }
    }

    /// `x,p` rows at full precision.
    pub fn price_csv(&self) -> String {
        crate::export::xy_csv(("x", "p"), self.price.nodes(), self.price.values())
    }
}
