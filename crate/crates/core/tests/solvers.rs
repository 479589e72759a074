mod common;

use common::{dist_sq, gaussian_matrix, random_problem};
use onebit_core::analysis::sketch_descent_expectation;
use onebit_core::rng::{stream, Domain};
use onebit_core::solvers::{
    bregman_adaptive, make_sketch, mle_baseline, neg_log_likelihood, nll_gradient, obsvt1, obsvt1_noisy, obsvt2,
    randomized_obsvt, run, Hooks, MleConfig, MultiplierRule, NoiseModel, SketchKind, SolverConfig,
};
use onebit_core::svd::{nuclear_norm, singular_values, svt_shrink};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shrinkage_is_nonexpansive(seed in any::<u64>(), n1 in 1usize..9, n2 in 1usize..9, theta in 0.0f64..4.0) {
        let mut rng = stream(seed, Domain::MonteCarlo, 0);
        let a = gaussian_matrix(n1, n2, &mut rng);
        let b = gaussian_matrix(n1, n2, &mut rng);
        let lhs = svt_shrink(&a, theta).unwrap().sub(&svt_shrink(&b, theta).unwrap()).unwrap().frobenius_norm();
        let rhs = a.sub(&b).unwrap().frobenius_norm();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn shrinkage_lowers_nuclear_norm(seed in any::<u64>(), n1 in 1usize..9, n2 in 1usize..9, theta in 0.0f64..4.0) {
        let mut rng = stream(seed, Domain::MonteCarlo, 1);
        let a = gaussian_matrix(n1, n2, &mut rng);
        let shrunk = nuclear_norm(&svt_shrink(&a, theta).unwrap()).unwrap();
        prop_assert!(shrunk <= nuclear_norm(&a).unwrap() * (1.0 + 1e-12) + 1e-12);
    }
}

fn small_cfg(p: &onebit_core::OneBitProblem) -> SolverConfig {
    let (n1, n2) = p.dims();
    SolverConfig::experiment_default(n1, n2, p.m_prime(), 0.5).with_max_iters(150)
}

#[test]
fn solvers_are_deterministic() {
    let (_, p) = random_problem(12, 10, 2, 0.5, 3);
    let cfg = small_cfg(&p).with_sketch_size(20).with_seed(9);
    let a = obsvt2(&p, &cfg).unwrap();
    let b = obsvt2(&p, &cfg).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.trace.records.len(), b.trace.records.len());
    let r1 = randomized_obsvt(&p, &cfg).unwrap();
    let r2 = randomized_obsvt(&p, &cfg).unwrap();
    assert_eq!(r1.x, r2.x);
    assert_eq!(r1.y, r2.y);
    let blocks: Vec<_> = r1.trace.records.iter().map(|r| r.block).collect();
    assert!(blocks.iter().all(|b| b.is_some_and(|b| b < 2)));
}

// The gate feeds only (t - A(X))^+ into the projected update, so with a zero
// allowance the iterates are those of the accumulated update.
#[test]
fn zero_noise_allowance_reproduces_accumulated_solver() {
    let (_, p) = random_problem(8, 9, 1, 0.6, 5);
    let cfg = small_cfg(&p).with_max_iters(60);
    let plain = obsvt2(&p, &cfg).unwrap();
    let gated = obsvt1_noisy(&p, &cfg.clone().with_sigma_z(vec![0.0; p.stacked_len()])).unwrap();
    assert_eq!(plain.x, gated.x);
    assert_eq!(plain.y, gated.y);
}

#[test]
fn identity_sketch_reproduces_accumulated_solver() {
    let (_, p) = random_problem(9, 7, 1, 0.5, 6);
    let cfg = small_cfg(&p).with_max_iters(80);
    let plain = obsvt2(&p, &cfg).unwrap();
    let mut hooks = Hooks { sketch_kind: SketchKind::Identity, ..Hooks::default() };
    let rule = MultiplierRule::Sketched { s: p.m_prime(), kind: SketchKind::Identity };
    let sk = run(&p, &cfg, rule, &mut hooks).unwrap();
    assert!(plain.x.sub(&sk.x).unwrap().max_abs() <= 1e-9 * (1.0 + plain.x.max_abs()));
}

#[test]
fn multipliers_stay_nonnegative() {
    let (_, p) = random_problem(10, 10, 3, 0.4, 8);
    // inside the projected update's convergence region delta < 2/m
    let cfg = SolverConfig { delta: 0.5, ..small_cfg(&p) };
    for out in [obsvt1(&p, &cfg).unwrap(), obsvt2(&p, &cfg).unwrap()] {
        assert!(out.y.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn gaussian_sketch_has_full_row_rank() {
    for seed in 0..5 {
        let sk = make_sketch(2, 30, 8, seed).unwrap();
        let sv = singular_values(&sk.to_dense()).unwrap();
        assert_eq!(sv.len(), 8);
        assert!(sv[7] > 1e-6, "smallest singular value {}", sv[7]);
    }
}

#[test]
fn sketched_step_descends_in_expectation() {
    let (_, p) = random_problem(12, 12, 1, 0.5, 11);
    let base = small_cfg(&p);
    let reference = obsvt2(&p, &base.clone().with_max_iters(4000).with_tol(1e-10)).unwrap();
    let early = obsvt2(&p, &base.clone().with_max_iters(5)).unwrap();
    let s = p.m_prime() / 2;
    let cfg = base.with_sketch_size(s).with_seed(4);
    let (mean, se) = sketch_descent_expectation(&p, &cfg, &early.y, &reference.y, 200).unwrap();
    assert!(mean >= 0.0, "mean decrease {mean} (se {se})");
}

#[test]
fn bregman_targets_dominate_base_and_grow() {
    let (_, p) = random_problem(10, 10, 2, 0.5, 12);
    let cfg = small_cfg(&p).with_max_iters(100);
    let out = bregman_adaptive(&p, &cfg, 1e-6, 4).unwrap();
    let base = p.target_vector();
    assert!(out.targets.len() >= 2);
    for t in &out.targets {
        assert!(t.iter().zip(&base).all(|(a, b)| a >= b));
    }
    assert_eq!(out.inner_traces.len(), out.targets.len() - 1 + usize::from(out.targets.len() == 1));
}

#[test]
fn likelihood_gradient_matches_central_differences() {
    let (_, p) = random_problem(3, 3, 1, 1.0, 13);
    let noise = NoiseModel::Gaussian { std: 0.7 };
    let mut rng = stream(13, Domain::MonteCarlo, 2);
    let x = gaussian_matrix(3, 3, &mut rng);
    let g = nll_gradient(&p, noise, &x).unwrap();
    let h = 1e-6;
    for i in 0..3 {
        for j in 0..3 {
            let mut up = x.clone();
            up.set(i, j, x.get(i, j) + h);
            let mut dn = x.clone();
            dn.set(i, j, x.get(i, j) - h);
            let fd = (neg_log_likelihood(&p, noise, &up).unwrap() - neg_log_likelihood(&p, noise, &dn).unwrap()) / (2.0 * h);
            let an = g.get(i, j);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "({i},{j}): fd {fd} vs {an}");
        }
    }
}

#[test]
fn likelihood_baseline_improves_on_zero() {
    let (x, p) = random_problem(15, 15, 1, 0.8, 14);
    let noise = NoiseModel::Gaussian { std: 0.3 };
    let cfg = MleConfig { lambda: 0.1, ..MleConfig::default_for(15, 15, p.m_prime()) };
    let (xh, _) = mle_baseline(&p, noise, &cfg).unwrap();
    let zero = onebit_core::DenseMatrix::zeros(15, 15);
    assert!(neg_log_likelihood(&p, noise, &xh).unwrap() < neg_log_likelihood(&p, noise, &zero).unwrap());
    assert!(dist_sq(xh.as_slice(), x.as_slice()) < x.frobenius_norm_sq());
}
