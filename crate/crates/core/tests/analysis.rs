mod common;

use common::random_problem;
use onebit_core::analysis::{
    consistency_check, convergence_monitor, expected_t_ave, hamming_distance, rate_epsilon, recovery_bound,
    recovery_bound_with_hamming, t_ave, t_ave_via_operator, BoundInputs, MonitorInequality,
};
use onebit_core::dither::{generate, DitherSpec};
use onebit_core::quantizer::sample;
use onebit_core::rng::{stream, Domain};
use onebit_core::solvers::{run, Hooks, MultiplierRule, Reference, SolverConfig};
use onebit_core::{DitherScheme, ObservationMask};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn t_ave_paths_agree(n1 in 1usize..8, n2 in 1usize..8, m in 1usize..4, seed in any::<u64>()) {
        let (x, p) = random_problem(n1, n2, m, 0.7, seed);
        let a = t_ave(&x, &p).unwrap();
        let b = t_ave_via_operator(&x, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn hamming_is_a_metric(seed in any::<u64>(), len in 1usize..64) {
        let mut rng = stream(seed, Domain::MonteCarlo, 0);
        let mut draw = || -> Vec<i8> { (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect() };
        let (a, b, c) = (draw(), draw(), draw());
        let d = |u: &[i8], v: &[i8]| hamming_distance(u, v).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-15);
        if a != b {
            prop_assert!(d(&a, &b) > 0.0);
        }
    }

    #[test]
    fn truth_is_consistent(n1 in 1usize..8, n2 in 1usize..8, m in 1usize..4, seed in any::<u64>()) {
        let (x, p) = random_problem(n1, n2, m, 0.5, seed);
        prop_assert_eq!(consistency_check(&x, &p).unwrap(), (true, 0.0));
    }
}

#[test]
fn t_ave_monte_carlo_matches_closed_form() {
    let mut rng = stream(21, Domain::Factors, 0);
    let x = common::low_rank(6, 5, 2, &mut rng);
    let alpha = x.max_abs();
    let mask = ObservationMask::full(6, 5).unwrap();
    let batches: Vec<f64> = (0..200u64)
        .map(|b| {
            let spec = DitherSpec::new(DitherScheme::Uniform { amplitude: alpha }, 50, b).unwrap();
            let p = sample(&x, &mask, &generate(&spec, &mask).unwrap()).unwrap();
            t_ave(&x, &p).unwrap()
        })
        .collect();
    let n = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / n;
    let var = batches.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let want = expected_t_ave(&x, alpha).unwrap();
    assert!(!want.outside_regime);
    assert!((mean - want.value).abs() <= 3.0 * se, "{mean} vs {} (se {se})", want.value);
}

#[test]
fn bounds_shrink_with_samples_and_grow_with_misses() {
    let base = BoundInputs { n1: 50, n2: 40, rank: 3, alpha: 2.0, m: 1, m_prime: 500, failure_prob: 0.05 };
    let more = BoundInputs { m: 4, ..base };
    assert!(recovery_bound(&more).unwrap().fro_bound < recovery_bound(&base).unwrap().fro_bound);
    let h0 = recovery_bound_with_hamming(&base, 0.0).unwrap();
    let h1 = recovery_bound_with_hamming(&base, 0.01).unwrap();
    assert_eq!(h0, recovery_bound(&base).unwrap().fro_bound);
    assert!(h1 > h0);
}

#[test]
fn rate_relation_has_slope_minus_two_fifths() {
    let e1 = rate_epsilon(100, 100, 5, 3.0, 1e4).unwrap();
    let e2 = rate_epsilon(100, 100, 5, 3.0, 1e5).unwrap();
    assert!(((e2 / e1).log10() + 0.4).abs() < 1e-12);
}

fn monitored(rule: MultiplierRule, m: usize, delta: f64, seed: u64) -> onebit_core::solvers::SolverTrace {
    let (_, p) = random_problem(15, 12, m, 0.5, seed);
    let (n1, n2) = p.dims();
    let cfg = SolverConfig { delta, ..SolverConfig::experiment_default(n1, n2, p.m_prime(), 0.5) }.with_max_iters(200);
    let tight = cfg.clone().with_tol(1e-10).with_max_iters(4000);
    let r = run(&p, &tight, rule.clone(), &mut Hooks::default()).unwrap();
    let reference = Reference { x: r.x, y: r.y };
    let mut hooks = Hooks { reference: Some(&reference), ..Hooks::default() };
    run(&p, &cfg, rule, &mut hooks).unwrap().trace
}

#[test]
fn accumulated_update_obeys_descent_inequalities_at_small_step() {
    // larger steps on instances this small overshoot: the right-hand side
    // of the descent inequality goes negative within a few iterations
    let trace = monitored(MultiplierRule::Accumulated, 1, 0.25, 31);
    for ineq in [MonitorInequality::AccumulatedDescent, MonitorInequality::PrimalBridge] {
        let rep = convergence_monitor(&trace, ineq).unwrap();
        assert_eq!(rep.violation_count(), 0, "{}", ineq.name());
    }
    assert!(convergence_monitor(&trace, MonitorInequality::ProjectedDescent).is_err());
}

#[test]
fn projected_update_obeys_descent_inside_step_bound() {
    let trace = monitored(MultiplierRule::Projected, 2, 0.5, 32);
    assert!(!trace.step_bound_exceeded);
    let rep = convergence_monitor(&trace, MonitorInequality::ProjectedDescent).unwrap();
    assert_eq!(rep.violation_count(), 0);
}


// `|X_k - X*|^2 <= |A*|^2 |y_{k-1} - y*|^2` with `|A*|^2 = m`; the `1/m`
// form of the bridge coincides with it only for a single sequence.
#[test]
fn primal_gap_is_bounded_by_operator_norm() {
    for m in [1, 2, 4] {
        let trace = monitored(MultiplierRule::Accumulated, m, 0.25, 40 + m as u64);
        for rec in &trace.records {
            let r = rec.reference.unwrap();
            assert!(r.x_sq <= m as f64 * r.y_prev_sq * (1.0 + 1e-9) + 1e-12);
        }
    }
}
