use std::sync::Arc;

use approx::assert_abs_diff_eq;

use super::*;
use crate::dp::{solve_value_function, VfiOptions};
use crate::loss::{LossSpec, PowerLoss};

fn quad_linear() -> LossSpec {
    LossSpec::power(PowerLoss::new(1.0, 1.0, 2.0).unwrap(), 2.0, 1.0).unwrap()
}

fn square() -> LossSpec {
    LossSpec::power(PowerLoss::new(0.0, 1.0, 2.0).unwrap(), 1.2, 1.0).unwrap()
}

#[test]
fn estimated_epsilon_dominates_the_analytic_constant() {
    let agg = LossAggregator::new(&quad_linear(), 201).unwrap();
    let eps = estimate_epsilon(&agg, &agg.phi(), &agg.psi());
    assert!(eps >= 0.25);
    assert_abs_diff_eq!(eps, 0.75, epsilon = 1e-2);
}

#[test]
fn assumptions_hold_for_the_core_problem() {
    let agg = LossAggregator::new(&quad_linear(), 201).unwrap();
    let bounds = BoundPair::new(agg.phi(), agg.psi(), 0.25).unwrap();
    let report = check_assumptions(&agg, &bounds, 50, 42);
    assert!(report.all_passed(), "{report:?}");
    let estimated = BoundPair::estimate(&agg, agg.phi(), agg.psi()).unwrap();
    assert!(check_assumptions(&agg, &estimated, 50, 42).all_passed());
}

#[test]
fn patient_discounting_fails_a5() {
    let spec = quad_linear();
    let agg = LossAggregator::with_beta(spec.loss().clone(), 0.9, 1.0, 201).unwrap();
    assert!(estimate_epsilon(&agg, &agg.phi(), &agg.psi()) < 0.0);
    let bounds = BoundPair::new(agg.phi(), agg.psi(), EPSILON_FLOOR).unwrap();
    let report = check_assumptions(&agg, &bounds, 50, 42);
    assert!(!report.a5_lower.passed);
    assert!(report.a4_upper.passed);
    assert!(!report.all_passed());
}

#[test]
fn degenerate_interval_fails_a5_off_the_fixed_point() {
    let agg = LossAggregator::new(&quad_linear(), 101).unwrap();
    let bounds = BoundPair::new(agg.psi(), agg.psi(), 1.0).unwrap();
    let report = check_assumptions(&agg, &bounds, 10, 42);
    assert!(report.a4_upper.passed);
    assert!(!report.a5_lower.passed);
}

#[test]
fn auto_bounds_fall_back_to_scaled_upper_bound() {
    let agg = LossAggregator::new(&square(), 201).unwrap();
    assert!(BoundPair::estimate(&agg, agg.phi(), agg.psi()).is_err());
    let bounds = BoundPair::auto(&agg, agg.phi(), agg.psi()).unwrap();
    assert!(bounds.epsilon >= EPSILON_FLOOR);
    assert!(bounds.phi.values()[200] > 0.0);
    assert!(check_assumptions(&agg, &bounds, 50, 42).all_passed());
}

#[test]
fn fixed_point_matches_the_scalar_solver() {
    let spec = square();
    let agg = LossAggregator::new(&spec, 1001).unwrap();
    let bounds = BoundPair::auto(&agg, agg.phi(), agg.psi()).unwrap();
    let fp = iterate_to_fixed_point(&agg, &bounds, &bounds.psi, 1e-11, 10_000).unwrap();
    let dp = solve_value_function(&spec, &VfiOptions::default().with_tol(1e-11)).unwrap();
    assert!(fp.value.sup_distance(&dp.value) <= 1e-8);
    assert!(fp.certificate.iterations > 0);
}

#[test]
fn certificate_arithmetic() {
    let grid = Arc::new(crate::grid::Grid::uniform(1.0, 3).unwrap());
    let phi = GridFunction::linear(grid.clone(), vec![0.0, 0.0, 0.0]);
    let psi = GridFunction::linear(grid, vec![0.0, 0.5, 1.0]);
    let bounds = BoundPair::new(phi, psi, 0.25).unwrap();
    let cert = Certificate::new(&bounds, 0);
    assert_eq!(cert.m, 1.0);
    assert_eq!(cert.iterations_for(1e-8), 65);
    assert_abs_diff_eq!(Certificate::new(&bounds, 2).error_bound, 0.5625);
}

#[test]
fn start_at_fixed_point_returns_immediately() {
    let agg = LossAggregator::new(&quad_linear(), 201).unwrap();
    let bounds = BoundPair::new(agg.phi(), agg.psi(), 0.25).unwrap();
    let fp = iterate_to_fixed_point(&agg, &bounds, &bounds.psi, 1e-12, 100).unwrap();
    let again = iterate_to_fixed_point(&agg, &bounds, &fp.value, 1e-12, 100).unwrap();
    assert_eq!(again.certificate.iterations, 0);
    assert_eq!(again.value, fp.value);
    assert!(matches!(
        iterate_to_fixed_point(&agg, &bounds, &bounds.psi, 1e-12, 1),
        Err(Error::NotConverged { .. })
    ));
}

#[test]
fn brute_force_examples() {
    let agg = LossAggregator::new(&quad_linear(), 201).unwrap();
    let phi = agg.phi();
    let v = brute_force_value(&agg, &phi, 1.0, 4, 200).unwrap();
    assert_abs_diff_eq!(v, 23.0 / 12.0, epsilon = 2e-3);
    assert_eq!(brute_force_value(&agg, &phi, 0.0, 3, 50).unwrap(), 0.0);
    let one = brute_force_value(&agg, &phi, 1.0, 1, 1001).unwrap();
    assert_abs_diff_eq!(one, 1.75, epsilon = 1e-6);
}

#[test]
fn brute_force_budget_is_enforced() {
    let agg = LossAggregator::new(&quad_linear(), 201).unwrap();
    assert!(matches!(
        brute_force_value_with_budget(&agg, &agg.phi(), 1.0, 4, 100, 10_000),
        Err(Error::BudgetExceeded { .. })
    ));
}
