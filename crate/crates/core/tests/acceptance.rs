//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use netbellman::chain::{coase_closed_form, failure_prices, solve_chain, ChainSpec};
use netbellman::dp::{
    envelope_residual, eta_threshold, euler_path, extract_policy, finite_iteration_cap,
    greedy_rollout, iterate, solve_value_function, BellmanOperator, VfiOptions,
};
use netbellman::general::{
    brute_force_value, check_assumptions, BoundPair, LossAggregator, EPSILON_FLOOR,
};
use netbellman::hierarchy::{solve_hierarchy, HierarchySpec};
use netbellman::network::{
    solve_network, solve_network_with, verify_network_equilibrium, Assembly, NetworkOptions,
    NetworkSpec, NetworkTree, REGULARIZATION,
};
use netbellman::presets::{bundled, reference_network};
use netbellman::spatial::{solve_city, verify_city, CitySpec};
use netbellman::{Error, Grid, GridFunction, Interpolation, Loss, LossSpec, PowerLoss};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = fn() -> Result<Outcome, Error>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn quadratic() -> LossSpec {
    LossSpec::power(PowerLoss::new(1.0, 1.0, 2.0).unwrap(), 2.0, 1.0).unwrap()
}

fn chain_closed_form() -> Result<Outcome, Error> {
    let mut pass = true;
    let mut parts = vec![];
    for tau in [0.05, 0.2, 0.5] {
        let spec = ChainSpec::cobb_douglas(1.0, 0.5, tau)?;
        let start = Instant::now();
        let eq = solve_chain(&spec)?;
        let elapsed = start.elapsed();
        let cf = coase_closed_form(1.0, 0.5, tau)?;
        let gap = eq.price.sup_distance(&cf.price_on(eq.price.grid().clone()));
        let rel = (0..10)
            .map(|i| match eq.allocation.actions.get(i) {
                Some(&v) => (v - cf.firm_size(i)).abs() / cf.firm_size(i),
                None => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        pass &= gap <= 1e-4 && rel <= 1e-3 && elapsed <= Duration::from_secs(2);
        parts.push(format!(
            "tau={tau}: gap {gap:.1e}, rel {rel:.1e}, {}",
            secs(elapsed)
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn brute_force_oracle() -> Result<Outcome, Error> {
    let spec = quadratic();
    let w = solve_value_function(&spec, &VfiOptions::default())?.value;
    let agg = LossAggregator::new(&spec, 1001)?;
    let brute = brute_force_value(&agg, &agg.phi(), 1.0, 4, 200)?;
    let w1 = w.eval(1.0);
    let path = greedy_rollout(&spec, &w, 1e-12)?;
    let target = [5.0 / 6.0, 1.0 / 6.0];
    let path_ok = path.actions.len() == 2
        && path
            .actions
            .iter()
            .zip(target)
            .all(|(a, b)| (a - b).abs() <= 1e-3);
    let pass = (w1 - brute).abs() <= 2e-3 && (w1 - 23.0 / 12.0).abs() <= 2e-3 && path_ok;
    Ok(Outcome::new(
        pass,
        format!(
            "W(1) {w1:.6}, brute force {brute:.6}, path {:?}",
            path.actions
        ),
    ))
}

/// Start, `T^k` of which must agree with `T^k psi` below `k eta`.
fn random_start(spec: &LossSpec, grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridFunction {
    let knots: common::Knots = (0..rng.gen_range(1..5))
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let norm = knots.iter().map(|k| k.1).sum::<f64>().max(1.0);
    common::member(spec, grid, &knots, norm, true)
}

fn finite_convergence() -> Result<Outcome, Error> {
    let instances = [
        ("a+a^2", quadratic()),
        (
            "0.3a+2a^3",
            LossSpec::power(PowerLoss::new(0.3, 2.0, 3.0)?, 1.5, 2.0)?,
        ),
        (
            "0.1a+a^1.5",
            LossSpec::power(PowerLoss::new(0.1, 1.0, 1.5)?, 1.2, 1.0)?,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let opts = VfiOptions::default();
    let mut pass = true;
    let mut parts = vec![];
    for (name, spec) in &instances {
        let eta = eta_threshold(spec);
        let cap = finite_iteration_cap(spec).expect("l'(0) > 0");
        let grid = Arc::new(Grid::uniform(spec.xhat(), opts.grid_size)?);
        let op = BellmanOperator::new(spec, grid.clone());
        let mut worst_gap: f64 = 0.0;
        let mut worst_iters = 0;
        for _ in 0..5 {
            let start = random_start(spec, &grid, &mut rng);
            let (mut a, mut b) = (op.upper_bound(), start.clone());
            // past convergence both sequences sit on the fixed point
            for k in 1..=cap {
                let (next_a, next_b) = (op.apply(&a)?, op.apply(&b)?);
                let settled = next_a.sup_distance(&a).max(next_b.sup_distance(&b)) <= opts.tol;
                (a, b) = (next_a, next_b);
                let limit = k as f64 * eta;
                let gap = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x <= limit)
                    .map(|(j, _)| (a.values()[j] - b.values()[j]).abs())
                    .fold(0.0, f64::max);
                worst_gap = worst_gap.max(gap);
                if settled {
                    break;
                }
            }
            worst_iters = worst_iters.max(iterate(&op, start, &opts)?.iterations);
        }
        worst_iters = worst_iters.max(iterate(&op, op.upper_bound(), &opts)?.iterations);
        pass &= worst_gap <= 1e-8 && worst_iters <= cap;
        parts.push(format!(
            "{name}: gap {worst_gap:.1e}, iterations {worst_iters}/{cap}"
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn assumption_suite() -> Result<Outcome, Error> {
    let mut pass = true;
    let mut failed = vec![];
    let presets = bundled()?;
    for p in &presets {
        let report = p.check_assumptions(200, 42)?;
        let ok = [
            &report.a2_monotone,
            &report.a3_concave,
            &report.a4_upper,
            &report.a5_lower,
        ]
        .iter()
        .all(|c| c.passed);
        if !ok {
            failed.push(p.name);
        }
        pass &= ok;
    }
    let loss: Arc<dyn Loss> = Arc::new(PowerLoss::new(1.0, 1.0, 2.0)?);
    let agg = LossAggregator::with_beta(loss, 0.9, 1.0, 201)?;
    let bounds = BoundPair::new(agg.phi(), agg.psi(), EPSILON_FLOOR)?;
    let control = check_assumptions(&agg, &bounds, 200, 42);
    pass &= !control.a5_lower.passed;
    Ok(Outcome::new(
        pass,
        format!(
            "{} presets, failing {:?}; beta=0.9 control A5 passed={}",
            presets.len(),
            failed,
            control.a5_lower.passed
        ),
    ))
}

fn equilibrium_verification() -> Result<Outcome, Error> {
    let mut pass = true;
    let mut parts = vec![];
    for p in bundled()? {
        let r = p.verify()?;
        let ok = r.p0 <= 1e-12 && r.no_entry_max <= 1e-5 && r.profit_max <= 1e-5;
        pass &= ok;
        parts.push(format!("{} {}", p.name, if ok { "ok" } else { "violated" }));
    }
    let spec = reference_network(0.2)?;
    let tree = solve_network_with(&spec, &NetworkOptions::default().with_grid_size(1001))?;
    let start = Instant::now();
    verify_network_equilibrium(&tree, &spec)?;
    let scan = start.elapsed();
    pass &= scan <= Duration::from_secs(5);
    parts.push(format!("N=1001 network scan {}", secs(scan)));
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn residuals() -> Result<Outcome, Error> {
    let mut euler: f64 = 0.0;
    let mut envelope_ok = true;
    let mut worst_ratio: f64 = 0.0;
    let opts = VfiOptions::default();
    let mut losses = vec![quadratic()];
    for tau in [0.05, 0.2, 0.5] {
        losses.push(ChainSpec::cobb_douglas(1.0, 0.5, tau)?.cost().clone());
    }
    for spec in &losses {
        let w = solve_value_function(spec, &opts)?.value;
        euler = euler.max(greedy_rollout(spec, &w, 1e-12)?.euler_residual(spec));
        let policy = extract_policy(spec, &w)?;
        let h = w.grid().step();
        let en = envelope_residual(spec, &w, &policy);
        envelope_ok &= en <= 10.0 * h;
        worst_ratio = worst_ratio.max(en / h);
    }
    let hspec = HierarchySpec::power(1.2, 0.2, 1.0)?;
    let pyramid = solve_hierarchy(&hspec)?;
    let hloss = hspec.loss_spec().expect("nonempty");
    euler = euler.max(euler_path(&hloss, 1e-6)?.euler_residual(&hloss));
    let hen = pyramid.envelope_residual(&hspec);
    let h = pyramid
        .value_fn
        .as_ref()
        .map_or(f64::NAN, |w| w.grid().step());
    envelope_ok &= hen <= 10.0 * h;
    worst_ratio = worst_ratio.max(hen / h);
    Ok(Outcome::new(
        euler <= 1e-6 && envelope_ok,
        format!("Euler {euler:.1e}, envelope at most {worst_ratio:.2} grid steps"),
    ))
}

fn failure_chain() -> Result<Outcome, Error> {
    let ratios: Vec<f64> = (1..=10)
        .map(|i| failure_prices(1.0, 0.5, 0.01 * i as f64, 50).map(|f| f.ratio()))
        .collect::<Result<_, _>>()?;
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let at_tenth = ratios[9];
    Ok(Outcome::new(
        at_tenth > 5.0 && increasing,
        format!(
            "ratio at tau=0.1 {at_tenth:.3}, increasing {increasing}, ratios {:.3?}",
            ratios
        ),
    ))
}

fn city() -> Result<Outcome, Error> {
    let spec = CitySpec::new(1.2, 0.2)?;
    let city = solve_city(&spec)?;
    let theta_cf = 1.2f64.powf(1.0 / (1.0 - 1.2));
    let theta_err = (city.theta - theta_cf).abs();
    let v0_err = (city.layers[0].size - (1.0 - 2.0 * theta_cf)).abs();
    let w_err = (city.value - (1.0 - 2.0 * theta_cf).powf(0.2)).abs();
    let fit = city.ranksize.expect("enough layers");
    let slope = -(0.5f64.ln()) / theta_cf.ln();
    let slope_err = (fit.slope - slope).abs();
    let check = verify_city(&spec, 1001)?;
    let min_tau = 2f64.powf(1.2 - 1.0) - 1.0;
    let infeasible = [0.01, 0.1, 0.14, min_tau].into_iter().all(|tau| {
        matches!(
            solve_city(&CitySpec::new(1.2, tau).unwrap()),
            Err(Error::InfeasibleCity { .. })
        )
    });
    let pass = theta_err <= 1e-9
        && v0_err <= 1e-9
        && w_err <= 1e-9
        && slope_err <= 1e-9
        && fit.max_residual <= 1e-9
        && infeasible
        && check.bellman_residual <= 1e-9;
    Ok(Outcome::new(
        pass,
        format!(
            "theta {:.1e}, v0 {v0_err:.1e}, W(1) {w_err:.1e}, slope {:.5} ({slope_err:.1e}), residual {:.1e}, infeasible below {min_tau:.4}: {infeasible}",
            theta_err, fit.slope, fit.max_residual
        ),
    ))
}

fn timed_network(tau: f64) -> Result<(NetworkTree, Duration), Error> {
    let start = Instant::now();
    let tree = solve_network(&reference_network(tau)?)?;
    Ok((tree, start.elapsed()))
}

fn network() -> Result<Outcome, Error> {
    let (high, t_high) = timed_network(0.2)?;
    let (low, t_low) = timed_network(0.05)?;
    let profit = high
        .layers
        .iter()
        .chain(&low.layers)
        .map(|l| l.profit.abs())
        .fold(0.0, f64::max);
    let (n_low, n_high) = (low.firms_above(1e-4), high.firms_above(1e-4));
    let cost: Arc<dyn Loss> = Arc::new(PowerLoss::new(REGULARIZATION, 1.0, 1.5)?);
    let chain = netbellman::chain::solve_chain(&ChainSpec::new(cost, 0.2)?)?;
    let snake = solve_network_with(
        &NetworkSpec::power(1.5, Assembly::single_supplier(), 0.2)?,
        &NetworkOptions::default()
            .with_grid_size(1001)
            .with_interpolation(Interpolation::Hermite),
    )?;
    let snake_gap = snake.price.sup_distance(&chain.price);
    let residual = high.residual.max(low.residual);
    let limit = Duration::from_secs(30);
    let pass = residual <= 1e-8
        && profit <= 1e-5
        && n_low > n_high
        && snake_gap <= 1e-8
        && t_high <= limit
        && t_low <= limit;
    Ok(Outcome::new(
        pass,
        format!(
            "residual {residual:.1e}, profit {profit:.1e}, firms above 1e-4 {n_low} vs {n_high}, k=1 gap {snake_gap:.1e}, kbar {}, {} and {}",
            high.kbar,
            secs(t_high),
            secs(t_low)
        ),
    ))
}

fn property_suites() -> Result<Outcome, Error> {
    type Check = Box<dyn Fn(&mut proptest::test_runner::TestRunner) -> Result<(), String>>;
    fn run<S: Strategy>(
        runner: &mut proptest::test_runner::TestRunner,
        strategy: S,
        test: impl Fn(S::Value) -> Result<(), TestCaseError>,
    ) -> Result<(), String> {
        runner.run(&strategy, test).map_err(|e| e.to_string())
    }
    let suites: Vec<(&str, Check)> = vec![
        (
            "isotonicity",
            Box::new(|r| {
                let s = (
                    common::problems(),
                    common::knots(),
                    prop::collection::vec(0.0..1.0f64, 1..5),
                );
                run(r, s, |(p, k, e)| common::isotonicity(&p, &k, &e))
            }),
        ),
        (
            "concavity",
            Box::new(|r| {
                let s = (
                    common::problems(),
                    common::knots(),
                    common::knots(),
                    0.0..1.0f64,
                );
                run(r, s, |(p, ku, kv, l)| common::concavity(&p, &ku, &kv, l))
            }),
        ),
        (
            "interval",
            Box::new(|r| {
                let s = (common::problems(), common::knots(), any::<bool>());
                run(r, s, |(p, k, h)| common::preserves_interval(&p, &k, h))
            }),
        ),
        (
            "decreasing-actions",
            Box::new(|r| run(r, common::problems(), |p| common::decreasing_actions(&p))),
        ),
        (
            "monotone-policy",
            Box::new(|r| run(r, common::problems(), |p| common::monotone_policy(&p))),
        ),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (name, check) in &suites {
        let result = check(&mut common::runner());
        pass &= result.is_ok();
        parts.push(match result {
            Ok(()) => format!("{name} {} cases", common::CASES),
            Err(e) => format!("{name} violated: {e}"),
        });
    }
    Ok(Outcome::new(pass && common::CASES >= 50, parts.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("chain closed form", chain_closed_form),
        ("brute-force oracle", brute_force_oracle),
        ("finite-time convergence", finite_convergence),
        ("assumption suite", assumption_suite),
        ("equilibrium verification", equilibrium_verification),
        ("Euler and envelope residuals", residuals),
        ("failure chain", failure_chain),
        ("city hierarchy", city),
        ("supplier network", network),
        ("property suites", property_suites),
    ];
    let mut failures = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = criterion().unwrap_or_else(Outcome::error);
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} {name} [{}]: {}",
            i + 1,
            secs(start.elapsed()),
            outcome.detail
        );
        failures += usize::from(!outcome.pass);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
