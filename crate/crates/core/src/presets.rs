//! Bundled model instances used by the test suites and the CLI.

use std::sync::Arc;

use crate::chain::{solve_chain, verify_equilibrium, ChainSpec};
use crate::error::Result;
use crate::general::{check_assumptions, Aggregator, AssumptionReport, BoundPair, LossAggregator};
use crate::grid::{GridFunction, Interpolation};
use crate::hierarchy::{solve_hierarchy, verify_pyramid, HierarchySpec};
use crate::loss::{LossSpec, PowerLoss};
use crate::network::{
    solve_network, verify_network_equilibrium, Assembly, NetworkOperator, NetworkOptions,
    NetworkSpec,
};
use crate::report::EquilibriumReport;
use crate::spatial::{solve_city, verify_city_equilibrium, CityAggregator, CitySpec};

/// Grid for assumption checks on one-dimensional problems.
const CHECK_GRID: usize = 1001;

#[derive(Debug, Clone)]
pub enum Instance {
    Chain(ChainSpec),
    Hierarchy(HierarchySpec),
    City(CitySpec),
    Network(NetworkSpec),
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub instance: Instance,
}

/// `c(v) = v^1.5` with `g(k) = 1e-4 (k - 1)^1.5`, regularized.
pub fn reference_network(tau: f64) -> Result<NetworkSpec> {
    NetworkSpec::power(1.5, Assembly::power(1e-4, 1.5)?, tau)
}

/// Every bundled instance: the `a + a^2` problem with `beta = 2` (a chain
/// with `tau = 1`), Cobb-Douglas chains, the `z^1.2` hierarchy, the `k = 2`
/// city and the supplier network at two wedges.
pub fn bundled() -> Result<Vec<Preset>> {
    let chain = |name, tau| -> Result<Preset> {
        Ok(Preset {
            name,
            instance: Instance::Chain(ChainSpec::cobb_douglas(1.0, 0.5, tau)?),
        })
    };
    Ok(vec![
        Preset {
            name: "core-quadratic",
            instance: Instance::Chain(ChainSpec::new(
                Arc::new(PowerLoss::new(1.0, 1.0, 2.0)?),
                1.0,
            )?),
        },
        chain("chain-tau-0.05", 0.05)?,
        chain("chain-tau-0.2", 0.2)?,
        chain("chain-tau-0.5", 0.5)?,
        Preset {
            name: "hierarchy",
            instance: Instance::Hierarchy(HierarchySpec::power(1.2, 0.2, 1.0)?),
        },
        Preset {
            name: "city",
            instance: Instance::City(CitySpec::new(1.2, 0.2)?),
        },
        Preset {
            name: "network-tau-0.2",
            instance: Instance::Network(reference_network(0.2)?),
        },
        Preset {
            name: "network-tau-0.05",
            instance: Instance::Network(reference_network(0.05)?),
        },
    ])
}

fn linear_bounds(
    agg: &dyn Aggregator,
    d0: f64,
    upper: impl Fn(f64) -> f64,
) -> (GridFunction, GridFunction) {
    let grid = agg.grid().clone();
    (
        GridFunction::from_fn(grid.clone(), |x| d0 * x),
        GridFunction::from_fn(grid, upper),
    )
}

fn check(
    agg: &dyn Aggregator,
    bounds: (GridFunction, GridFunction),
    samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let bounds = BoundPair::auto(agg, bounds.0, bounds.1)?;
    Ok(check_assumptions(agg, &bounds, samples, seed))
}

fn check_loss(spec: &LossSpec, samples: usize, seed: u64) -> Result<AssumptionReport> {
    let agg = LossAggregator::new(spec, CHECK_GRID)?;
    let b = linear_bounds(&agg, spec.deriv(0.0), |x| spec.value(x));
    check(&agg, b, samples, seed)
}

impl Preset {
    /// Samples the order-interval assumptions on piecewise-linear bounds.
    pub fn check_assumptions(&self, samples: usize, seed: u64) -> Result<AssumptionReport> {
        match &self.instance {
            Instance::Chain(spec) => check_loss(spec.cost(), samples, seed),
            Instance::Hierarchy(spec) => match spec.loss_spec() {
                Some(loss) => check_loss(&loss, samples, seed),
                None => Err(crate::error::invalid(
                    "m0",
                    "an empty hierarchy has no operator",
                )),
            },
            Instance::City(spec) => {
                let agg = CityAggregator::new(spec, CHECK_GRID)?;
                let b = (agg.phi().to_linear(), agg.psi().to_linear());
                check(&agg, b, samples, seed)
            }
            Instance::Network(spec) => {
                let grid = Arc::new(crate::grid::Grid::uniform(
                    1.0,
                    NetworkOptions::default().grid_size,
                )?);
                let op = NetworkOperator::new(spec, grid)?;
                let b = (
                    op.lower_bound(Interpolation::Linear),
                    op.upper_bound(Interpolation::Linear),
                );
                check(&op, b, samples, seed)
            }
        }
    }

    /// Solves the instance and verifies its equilibrium conditions.
    pub fn verify(&self) -> Result<EquilibriumReport> {
        match &self.instance {
            Instance::Chain(spec) => Ok(verify_equilibrium(&solve_chain(spec)?, spec)),
            Instance::Hierarchy(spec) => verify_pyramid(&solve_hierarchy(spec)?, spec),
            Instance::City(spec) => verify_city_equilibrium(spec, &solve_city(spec)?, CHECK_GRID),
            Instance::Network(spec) => verify_network_equilibrium(&solve_network(spec)?, spec),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let presets = bundled().unwrap();
        let mut names: Vec<_> = presets.iter().map(|p| p.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), presets.len());
    }

    #[test]
    fn core_preset_passes() {
        let core = bundled()
            .unwrap()
            .into_iter()
            .find(|p| p.name == "core-quadratic")
            .unwrap();
        assert!(core.check_assumptions(50, 7).unwrap().all_passed());
        assert!(core.verify().unwrap().passed());
    }
}
