use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::grid::GridFunction;

use super::{apply, Action, Aggregator, BoundPair};

/// Checked points per random function pair in the A2 and A3 checks.
const POINTS_PER_SAMPLE: usize = 8;

/// The point at which a check was worst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub x: f64,
    pub action: Option<Action>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    /// Largest observed violation; non-positive values mean slack.
    pub worst_violation: f64,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub evaluations: usize,
}

impl AssumptionCheck {
    fn new(tolerance: f64) -> Self {
        Self {
            passed: true,
            worst_violation: f64::NEG_INFINITY,
            tolerance,
            witness: None,
            evaluations: 0,
        }
    }

    fn record(&mut self, violation: f64, witness: Witness) {
        self.evaluations += 1;
        if violation > self.worst_violation || violation.is_nan() {
            self.worst_violation = violation;
            self.witness = Some(witness);
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.worst_violation <= self.tolerance;
        self
    }
}

/// Sampled verification of the order-interval assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub seed: u64,
    pub samples: usize,
    pub epsilon: f64,
    /// Continuity: bounded variation of `L` under small action perturbations.
    pub a1_continuity: AssumptionCheck,
    /// `u <= v` implies `L(x, a, u) <= L(x, a, v)`.
    pub a2_monotone: AssumptionCheck,
    /// `lambda L(u) + (1 - lambda) L(v) <= L(lambda u + (1 - lambda) v)`.
    pub a3_concave: AssumptionCheck,
    /// `T psi <= psi`.
    pub a4_upper: AssumptionCheck,
    /// `T phi >= phi + eps (psi - phi)`.
    pub a5_lower: AssumptionCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        [
            &self.a1_continuity,
            &self.a2_monotone,
            &self.a3_concave,
            &self.a4_upper,
            &self.a5_lower,
        ]
        .iter()
        .all(|c| c.passed)
    }
}

fn random_member(rng: &mut ChaCha8Rng, lower: &GridFunction, upper: &GridFunction) -> GridFunction {
    let values = lower
        .values()
        .iter()
        .zip(upper.values())
        .map(|(lo, hi)| lo + rng.gen::<f64>() * (hi - lo))
        .collect();
    GridFunction::linear(lower.grid().clone(), values)
}

fn random_point<A: Aggregator + ?Sized>(agg: &A, rng: &mut ChaCha8Rng) -> (f64, Action) {
    let nodes = agg.grid().nodes();
    let x = nodes[rng.gen_range(1..nodes.len())];
    let set = agg.feasible(x);
    let int = set.ints[rng.gen_range(0..set.ints.len())];
    let cont = set.lo + rng.gen::<f64>() * (set.hi - set.lo);
    (x, Action { cont, int })
}

/// Samples A1-A5 with a seeded generator. Each of the `samples` draws produces
/// a random pair of members of `[phi, psi]` and checks several random
/// state-action points against it.
pub fn check_assumptions<A: Aggregator + ?Sized>(
    agg: &A,
    bounds: &BoundPair,
    samples: usize,
    seed: u64,
) -> AssumptionReport {
    let samples = samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (phi, psi) = (&bounds.phi, &bounds.psi);
    let scale = 1.0 + psi.sup_norm();
    let tol = 1e-9 * scale;

    let mut a1 = AssumptionCheck::new(1e-4 * scale);
    let xmax = agg.grid().xmax();
    for _ in 0..samples {
        let (x, a) = random_point(agg, &mut rng);
        let set = agg.feasible(x);
        let delta = 1e-7 * xmax;
        let moved = Action {
            cont: (a.cont + delta).min(set.hi),
            ..a
        };
        let jump = (agg.eval(x, moved, psi) - agg.eval(x, a, psi)).abs();
        a1.record(
            if jump.is_finite() {
                jump
            } else {
                f64::INFINITY
            },
            Witness {
                x,
                action: Some(a),
                lambda: None,
            },
        );
    }

    let mut a2 = AssumptionCheck::new(tol);
    for _ in 0..samples {
        let u = random_member(&mut rng, phi, psi);
        let v = random_member(&mut rng, &u, psi);
        for _ in 0..POINTS_PER_SAMPLE {
            let (x, a) = random_point(agg, &mut rng);
            a2.record(
                agg.eval(x, a, &u) - agg.eval(x, a, &v),
                Witness {
                    x,
                    action: Some(a),
                    lambda: None,
                },
            );
        }
    }

    let mut a3 = AssumptionCheck::new(tol);
    for _ in 0..samples {
        let u = random_member(&mut rng, phi, psi);
        let v = random_member(&mut rng, phi, psi);
        let lambda: f64 = rng.gen();
        let mixed = u.mix(&v, lambda);
        for _ in 0..POINTS_PER_SAMPLE {
            let (x, a) = random_point(agg, &mut rng);
            let combo = lambda * agg.eval(x, a, &u) + (1.0 - lambda) * agg.eval(x, a, &v);
            a3.record(
                combo - agg.eval(x, a, &mixed),
                Witness {
                    x,
                    action: Some(a),
                    lambda: Some(lambda),
                },
            );
        }
    }

    let nodes = agg.grid().nodes();
    let mut a4 = AssumptionCheck::new(tol);
    let tpsi = apply(agg, psi);
    for (j, &x) in nodes.iter().enumerate() {
        a4.record(
            tpsi.values()[j] - psi.values()[j],
            Witness {
                x,
                action: None,
                lambda: None,
            },
        );
    }

    let mut a5 = AssumptionCheck::new(tol);
    let tphi = apply(agg, phi);
    let eps = bounds.epsilon;
    for (j, &x) in nodes.iter().enumerate() {
        let target = phi.values()[j] + eps * (psi.values()[j] - phi.values()[j]);
        a5.record(
            target - tphi.values()[j],
            Witness {
                x,
                action: None,
                lambda: None,
            },
        );
    }

    AssumptionReport {
        seed,
        samples,
        epsilon: eps,
        a1_continuity: a1.finish(),
        a2_monotone: a2.finish(),
        a3_concave: a3.finish(),
        a4_upper: a4.finish(),
        a5_lower: a5.finish(),
    }
}
