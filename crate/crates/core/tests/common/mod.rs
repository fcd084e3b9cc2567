//! Random instances and invariant checks shared by the property suite and the
//! acceptance run.

#![allow(dead_code)]

use std::sync::Arc;

use netbellman::dp::{
    extract_policy, greedy_rollout, solve_value_function, BellmanOperator, VfiOptions,
};
use netbellman::general::apply;
use netbellman::network::{Assembly, NetworkOperator, NetworkSpec};
use netbellman::{Grid, GridFunction, Interpolation, LossSpec, PowerLoss};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

pub const CASES: u32 = 64;

/// `CASES` cases from a fixed seed, without failure persistence.
pub fn config() -> Config {
    Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(42),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn runner() -> TestRunner {
    TestRunner::new(config())
}

/// `l(a) = linear * a + scale * a^exponent` with discount `beta` on `[0, xhat]`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub linear: f64,
    pub scale: f64,
    pub exponent: f64,
    pub beta: f64,
    pub xhat: f64,
}

impl Problem {
    pub fn spec(&self) -> LossSpec {
        let loss = PowerLoss::new(self.linear, self.scale, self.exponent).unwrap();
        LossSpec::power(loss, self.beta, self.xhat).unwrap()
    }

    fn tol(&self, spec: &LossSpec) -> f64 {
        1e-9 * (1.0 + spec.value(self.xhat))
    }
}

pub fn problems() -> impl Strategy<Value = Problem> {
    (
        0.05..1.0f64,
        0.5..3.0f64,
        1.5..3.0f64,
        1.05..3.0f64,
        0.5..2.0f64,
    )
        .prop_map(|(linear, scale, exponent, beta, xhat)| Problem {
            linear,
            scale,
            exponent,
            beta,
            xhat,
        })
}

/// Kinks `(position as a fraction of xhat, raw weight)`.
pub type Knots = Vec<(f64, f64)>;

pub fn knots() -> impl Strategy<Value = Knots> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..5)
}

/// `u = phi + sum_m w_m h((x - a_m)^+)` with `h(z) = l(z) - l'(0) z`.
///
/// `h` is convex, increasing and below `psi - phi`, so `u` is an increasing
/// convex member of the order interval whenever the weights sum to at most 1.
/// Weights are divided by `norm`, which the caller keeps `>= max(1, sum)`.
pub fn member(
    spec: &LossSpec,
    grid: &Arc<Grid>,
    knots: &Knots,
    norm: f64,
    hermite: bool,
) -> GridFunction {
    let d0 = spec.deriv(0.0);
    let xhat = spec.xhat();
    let value = |x: f64| {
        d0 * x
            + knots
                .iter()
                .map(|&(f, w)| {
                    let z = (x - f * xhat).max(0.0);
                    w / norm * (spec.value(z) - d0 * z)
                })
                .sum::<f64>()
    };
    let slope = |x: f64| {
        d0 + knots
            .iter()
            .map(|&(f, w)| w / norm * (spec.deriv((x - f * xhat).max(0.0)) - d0))
            .sum::<f64>()
    };
    if hermite {
        GridFunction::from_fn_with_slope(grid.clone(), value, slope)
    } else {
        GridFunction::from_fn(grid.clone(), value)
    }
}

fn norm(knots: &Knots) -> f64 {
    knots.iter().map(|k| k.1).sum::<f64>().max(1.0)
}

fn fail(msg: String) -> Result<(), TestCaseError> {
    Err(TestCaseError::fail(msg))
}

const PROPERTY_GRID: usize = 101;

/// `u <= v` implies `Tu <= Tv`. `v` adds `extra` to each weight of `u`.
pub fn isotonicity(p: &Problem, knots: &Knots, extra: &[f64]) -> Result<(), TestCaseError> {
    let spec = p.spec();
    let grid = Arc::new(Grid::uniform(p.xhat, PROPERTY_GRID).unwrap());
    let bigger: Knots = knots
        .iter()
        .zip(extra.iter().cycle())
        .map(|(&(f, w), e)| (f, w + e))
        .collect();
    let n = norm(&bigger);
    let u = member(&spec, &grid, knots, n, false);
    let v = member(&spec, &grid, &bigger, n, false);
    let op = BellmanOperator::new(&spec, grid);
    let (tu, tv) = (op.apply(&u).unwrap(), op.apply(&v).unwrap());
    let tol = p.tol(&spec);
    for (j, (a, b)) in tu.values().iter().zip(tv.values()).enumerate() {
        if *a > b + tol {
            return fail(format!("node {j}: Tu = {a} > Tv = {b}"));
        }
    }
    Ok(())
}

/// `T(lambda u + (1 - lambda) v) >= lambda Tu + (1 - lambda) Tv`.
pub fn concavity(p: &Problem, ku: &Knots, kv: &Knots, lambda: f64) -> Result<(), TestCaseError> {
    let spec = p.spec();
    let grid = Arc::new(Grid::uniform(p.xhat, PROPERTY_GRID).unwrap());
    let u = member(&spec, &grid, ku, norm(ku), false);
    let v = member(&spec, &grid, kv, norm(kv), false);
    let op = BellmanOperator::new(&spec, grid);
    let mixed = op.apply(&u.mix(&v, lambda)).unwrap();
    let chord = op.apply(&u).unwrap().mix(&op.apply(&v).unwrap(), lambda);
    let tol = p.tol(&spec);
    for (j, (m, c)) in mixed.values().iter().zip(chord.values()).enumerate() {
        if *m < c - tol {
            return fail(format!("node {j}: T(mix) = {m} < mix(T) = {c}"));
        }
    }
    Ok(())
}

/// `phi <= u <= psi` implies `phi <= Tu <= psi`.
pub fn preserves_interval(p: &Problem, knots: &Knots, hermite: bool) -> Result<(), TestCaseError> {
    let spec = p.spec();
    let grid = Arc::new(Grid::uniform(p.xhat, PROPERTY_GRID).unwrap());
    let u = member(&spec, &grid, knots, norm(knots), hermite);
    let op = BellmanOperator::new(&spec, grid);
    let tu = op.apply(&u).unwrap();
    tu.check_between(&op.lower_bound(), &op.upper_bound(), p.tol(&spec))
        .or_else(|e| fail(e.to_string()))
}

const SOLVE_GRID: usize = 201;

/// Optimal actions never increase along the path.
pub fn decreasing_actions(p: &Problem) -> Result<(), TestCaseError> {
    let spec = p.spec();
    let w = solve_value_function(&spec, &VfiOptions::default().with_grid_size(SOLVE_GRID))
        .unwrap()
        .value;
    let path = greedy_rollout(&spec, &w, 1e-12).map_err(|e| TestCaseError::fail(e.to_string()))?;
    if !path.is_decreasing(1e-9 * p.xhat) {
        return fail(format!("actions {:?}", path.actions));
    }
    Ok(())
}

/// `pi*(x)` and `x - pi*(x)` are both nondecreasing in `x`.
pub fn monotone_policy(p: &Problem) -> Result<(), TestCaseError> {
    let spec = p.spec();
    let w = solve_value_function(&spec, &VfiOptions::default().with_grid_size(SOLVE_GRID))
        .unwrap()
        .value;
    let policy = extract_policy(&spec, &w).unwrap();
    let tol = 1e-7 * p.xhat;
    let (x, a) = (policy.nodes(), policy.values());
    for j in 1..x.len() {
        if a[j] < a[j - 1] - tol {
            return fail(format!(
                "action falls at x = {}: {} -> {}",
                x[j],
                a[j - 1],
                a[j]
            ));
        }
        if x[j] - a[j] < x[j - 1] - a[j - 1] - tol {
            return fail(format!("continuation falls at x = {}", x[j]));
        }
    }
    Ok(())
}

/// The supplier-network operator is isotone too: `u <= v` between its bounds
/// implies `Tu <= Tv`.
pub fn network_isotonicity(tau: f64, lo: f64, hi: f64) -> Result<(), TestCaseError> {
    let spec = NetworkSpec::power(1.5, Assembly::power(1e-3, 1.5).unwrap(), tau).unwrap();
    let op = NetworkOperator::new(&spec, Arc::new(Grid::uniform(1.0, 41).unwrap())).unwrap();
    let (lower, upper) = (
        op.lower_bound(Interpolation::Linear),
        op.upper_bound(Interpolation::Linear),
    );
    let (u, v) = (upper.mix(&lower, lo), upper.mix(&lower, hi));
    let (tu, tv) = (apply(&op, &u), apply(&op, &v));
    for (j, (a, b)) in tu.values().iter().zip(tv.values()).enumerate() {
        if *a > b + 1e-12 {
            return fail(format!("node {j}: Tu = {a} > Tv = {b}"));
        }
    }
    Ok(())
}
