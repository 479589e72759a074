use alloc::vec;
use alloc::vec::Vec;

use super::sketch::{self, SketchKind};
use super::{
    dist_sq, norm2_sq, Control, Hooks, IterationRecord, ReferenceDistances, SolverConfig,
    SolverTrace, StopReason, DIVERGENCE_LIMIT,
};
use crate::error::{param_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::problem::OneBitProblem;
use crate::quantizer::one_bit;
use crate::rng::{self, Domain};
use crate::svd::SvdStrategy;
use rand_distr::{Distribution, StandardNormal};

/// Multiplier update applied after each shrinkage step.
#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierRule {
    /// `y = (y + delta (t - A(X)))^+`
    Projected,
    /// `y = (y + delta g)^+` with
    /// `g_i = (t_i - sigma_i - A(X)_i)^+ * [A(X)_i <= t_i]`, gated per coordinate.
    NoiseGated { sigma_z: Vec<f64> },
    /// `y = y + delta (t - A(X))^+`
    Accumulated,
    /// One random block per iteration:
    /// `y_blk += delta w G^T (G (t - A(X))_blk^+)^+`.
    Sketched { s: usize, kind: SketchKind },
}

impl MultiplierRule {
    fn name(&self) -> &'static str {
        match self {
            Self::Projected => "obsvt1",
            Self::NoiseGated { .. } => "obsvt1-noisy",
            Self::Accumulated => "obsvt2",
            Self::Sketched { .. } => "rand-obsvt",
        }
    }
}

/// Final iterate, final multiplier and trace.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub trace: SolverTrace,
}

/// OB-SVT-I.
pub fn obsvt1(p: &OneBitProblem, cfg: &SolverConfig) -> Result<SolveOutput> {
    run(p, cfg, MultiplierRule::Projected, &mut Hooks::default())
}

/// OB-SVT-I with the noise allowance `cfg.sigma_z`.
pub fn obsvt1_noisy(p: &OneBitProblem, cfg: &SolverConfig) -> Result<SolveOutput> {
    let sigma_z = cfg
        .sigma_z
        .clone()
        .ok_or_else(|| param_err!("noisy OB-SVT-I needs sigma_z"))?;
    run(p, cfg, MultiplierRule::NoiseGated { sigma_z }, &mut Hooks::default())
}

/// OB-SVT-II.
pub fn obsvt2(p: &OneBitProblem, cfg: &SolverConfig) -> Result<SolveOutput> {
    run(p, cfg, MultiplierRule::Accumulated, &mut Hooks::default())
}

/// Randomized OB-SVT with a fresh gaussian block sketch every iteration.
pub fn randomized_obsvt(p: &OneBitProblem, cfg: &SolverConfig) -> Result<SolveOutput> {
    let s = cfg
        .sketch_size
        .ok_or_else(|| param_err!("randomized OB-SVT needs sketch_size"))?;
    run(
        p,
        cfg,
        MultiplierRule::Sketched {
            s,
            kind: SketchKind::Gaussian,
        },
        &mut Hooks::default(),
    )
}

/// Run the shared loop with an explicit rule and instrumentation.
pub fn run(
    p: &OneBitProblem,
    cfg: &SolverConfig,
    rule: MultiplierRule,
    hooks: &mut Hooks<'_>,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let len = p.stacked_len();
    let mp = p.m_prime();
    match &rule {
        MultiplierRule::NoiseGated { sigma_z } => {
            if sigma_z.len() != len {
                return Err(param_err!(
                    "sigma_z has length {} but m*m' = {len}",
                    sigma_z.len()
                ));
            }
            if sigma_z.iter().any(|&s| !(s >= 0.0)) {
                return Err(param_err!("sigma_z must be elementwise >= 0"));
            }
        }
        MultiplierRule::Sketched { s, kind } => {
            if *kind == SketchKind::Gaussian && (*s >= mp || *s == 0) {
                return Err(param_err!("sketch size {s} must be in 1..m' = {mp}"));
            }
        }
        _ => {}
    }
    if let Some(r) = hooks.reference {
        if r.y.len() != len || r.x.dims() != p.dims() {
            return Err(param_err!("reference does not match the problem"));
        }
    }

    let (n1, n2) = p.dims();
    let t = p.target_vector();
    let t1: Option<Vec<f64>> = match &rule {
        MultiplierRule::NoiseGated { sigma_z } => {
            Some(t.iter().zip(sigma_z).map(|(a, b)| a - b).collect())
        }
        _ => None,
    };
    let mut svd = SvdStrategy::default();
    let mut y = vec![0.0; len];
    let mut ax = vec![0.0; len];
    let mut x_prev = DenseMatrix::zeros(n1, n2);
    let mut x = x_prev.clone();
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIters;
    let start = hooks.clock.now_secs();

    for k in 1..=cfg.max_iters {
        let y_prev_sq = hooks.reference.map(|r| dist_sq(&y, &r.y));
        let shrunk = svd.shrink(&p.apply_a_adjoint(&y)?, cfg.theta)?;
        x = shrunk.matrix;
        p.apply_a_into(&x, &mut ax);

        let mut res_sq = 0.0;
        let mut res_inf = 0.0_f64;
        for (ti, ai) in t.iter().zip(&ax) {
            let r = (ti - ai).max(0.0);
            res_sq += r * r;
            res_inf = res_inf.max(r);
        }

        let mut block = None;
        match &rule {
            MultiplierRule::Projected => {
                for ((yi, ti), ai) in y.iter_mut().zip(&t).zip(&ax) {
                    *yi = (*yi + cfg.delta * (ti - ai)).max(0.0);
                }
            }
            MultiplierRule::NoiseGated { .. } => {
                let t1 = t1.as_deref().expect("set above");
                for (i, yi) in y.iter_mut().enumerate() {
                    let g = if ax[i] <= t[i] {
                        (t1[i] - ax[i]).max(0.0)
                    } else {
                        0.0
                    };
                    *yi = (*yi + cfg.delta * g).max(0.0);
                }
            }
            MultiplierRule::Accumulated => {
                for ((yi, ti), ai) in y.iter_mut().zip(&t).zip(&ax) {
                    *yi += cfg.delta * (ti - ai).max(0.0);
                }
            }
            MultiplierRule::Sketched { s, kind } => {
                let mut r = rng::stream(cfg.seed, Domain::Sketch, k as u64);
                block = Some(sketched_update(p, &t, &ax, &mut y, cfg.delta, *s, *kind, &mut r));
            }
        }

        let y_norm = libm::sqrt(norm2_sq(&y));
        if !(y_norm <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                iteration: k,
                norm: y_norm,
                delta: cfg.delta,
            });
        }

        let x_norm = x.frobenius_norm();
        let rel_change = if k == 1 {
            f64::INFINITY
        } else if x_norm > 0.0 {
            x.sub(&x_prev)?.frobenius_norm() / x_norm
        } else if x_prev.frobenius_norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };

        let reference = hooks.reference.map(|r| ReferenceDistances {
            y_prev_sq: y_prev_sq.expect("computed with reference"),
            y_sq: dist_sq(&y, &r.y),
            x_sq: x.sub(&r.x).map(|d| d.frobenius_norm_sq()).unwrap_or(f64::NAN),
        });

        let rec = IterationRecord {
            iteration: k,
            rel_change,
            residual_norm: libm::sqrt(res_sq),
            residual_inf: res_inf,
            multiplier_norm: y_norm,
            rank: shrunk.rank,
            elapsed_secs: hooks.clock.now_secs() - start,
            block,
            reference,
        };
        let observer_stop = match hooks.observer.as_mut() {
            Some(obs) => obs(&rec, &x) == Control::Stop,
            None => false,
        };
        records.push(rec);

        if observer_stop {
            stop = StopReason::Observer;
            break;
        }
        if res_inf == 0.0 {
            stop = StopReason::Feasible;
            break;
        }
        if x_norm > 0.0 && rel_change <= cfg.tol {
            stop = StopReason::RelativeChange;
            break;
        }
        core::mem::swap(&mut x_prev, &mut x);
        x.clone_from(&x_prev);
    }

    let final_hamming = sign_mismatch(p, &x);
    Ok(SolveOutput {
        x,
        y,
        trace: SolverTrace {
            solver: rule.name(),
            records,
            stop,
            delta: cfg.delta,
            m: p.m(),
            step_bound_exceeded: cfg.delta >= 2.0 / p.m() as f64,
            final_hamming,
        },
    })
}

/// One sketched multiplier step on a random block; returns the block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sketched_update<R: rand::Rng + ?Sized>(
    p: &OneBitProblem,
    t: &[f64],
    ax: &[f64],
    y: &mut [f64],
    delta: f64,
    s: usize,
    kind: SketchKind,
    rng: &mut R,
) -> usize {
    let mp = p.m_prime();
    let block = rng.random_range(0..p.m());
    let range = block * mp..(block + 1) * mp;
    let resid: Vec<f64> = t[range.clone()]
        .iter()
        .zip(&ax[range.clone()])
        .map(|(ti, ai)| (ti - ai).max(0.0))
        .collect();
    let out = &mut y[range];
    match kind {
        SketchKind::Identity => {
            let w = delta * p.m() as f64;
            for (o, r) in out.iter_mut().zip(&resid) {
                *o += w * r;
            }
        }
        SketchKind::Gaussian => {
            // rows of G are drawn in the same order as `sketch::draw`, one
            // at a time, so the s x m' block is never materialized
            let w = delta * sketch::gaussian_step_weight(p.m(), mp);
            let mut row = vec![0.0; mp];
            for _ in 0..s {
                for g in row.iter_mut() {
                    *g = StandardNormal.sample(&mut *rng);
                }
                let u: f64 = row.iter().zip(&resid).map(|(g, r)| g * r).sum();
                if u > 0.0 {
                    let c = w * u;
                    for (o, g) in out.iter_mut().zip(&row) {
                        *o += c * g;
                    }
                }
            }
        }
    }
    block
}

/// Fraction of stacked entries whose resampled sign differs from the record.
pub(crate) fn sign_mismatch(p: &OneBitProblem, x: &DenseMatrix) -> f64 {
    let mp = p.m_prime();
    let vals = x.as_slice();
    let signs = p.signs().as_slice();
    let dithers = p.dithers().as_slice();
    let bad = (0..p.stacked_len())
        .filter(|&i| one_bit(vals[p.mask().flat_index(i % mp)], dithers[i]) != signs[i])
        .count();
    bad as f64 / p.stacked_len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::ObservationMask;
    use crate::problem::{DitherScheme, DitherStack};
    use crate::quantizer::sample;

    #[test]
    fn streamed_sketch_matches_materialized_block() {
        let x = DenseMatrix::from_fn(4, 5, |i, j| (i as f64) - 0.7 * j as f64);
        let mask = ObservationMask::full(4, 5).unwrap();
        let d = DitherStack::new(2, 20, (0..40).map(|k| 0.3 * (k % 7) as f64 - 0.5).collect(), DitherScheme::Adaptive, 0)
            .unwrap();
        let p = sample(&x, &mask, &d).unwrap();
        let t = p.target_vector();
        let ax = vec![-1.0; 40];
        let mut y = vec![0.5; 40];
        let mut r1 = rng::stream(3, Domain::Sketch, 0);
        let block = sketched_update(&p, &t, &ax, &mut y, 0.7, 6, SketchKind::Gaussian, &mut r1);

        let mut r2 = rng::stream(3, Domain::Sketch, 0);
        let sk = sketch::draw(2, 20, 6, SketchKind::Gaussian, &mut r2);
        assert_eq!(sk.block, block);
        let range = block * 20..(block + 1) * 20;
        let resid: Vec<f64> = t[range.clone()].iter().zip(&ax[range.clone()]).map(|(a, b)| (a - b).max(0.0)).collect();
        let u: Vec<f64> = sk.apply_block(&resid).into_iter().map(|v| v.max(0.0)).collect();
        let mut want = vec![0.5; 40];
        sk.add_transpose_block(&u, 0.7 * sk.step_weight(), &mut want[range]);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    fn scalar_problem(c: f64, tau: f64) -> OneBitProblem {
        let x = DenseMatrix::from_row_major(1, 1, vec![c]).unwrap();
        let mask = ObservationMask::full(1, 1).unwrap();
        let d = DitherStack::new(1, 1, vec![tau], DitherScheme::Adaptive, 0).unwrap();
        sample(&x, &mask, &d).unwrap()
    }

    #[test]
    fn scalar_obsvt1_reaches_constraint() {
        // min x^2/2 s.t. x >= 0.4: Uzawa with theta = 0 converges to x = 0.4
        let p = scalar_problem(1.0, 0.4);
        let cfg = SolverConfig::new(0.0, 0.5).with_max_iters(2000).with_tol(1e-12);
        let out = obsvt1(&p, &cfg).unwrap();
        let xv = out.x.get(0, 0);
        assert!(xv >= 0.4 - 1e-9, "x = {xv}");
        assert!((xv - 0.4).abs() < 1e-6);
        assert!((out.y[0] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn scalar_closed_form_iteration() {
        // theta = 0, one cell: x_k = y_{k-1}, y_k = (y_{k-1} + d (tau - x_k))^+
        let p = scalar_problem(2.0, 1.0);
        let cfg = SolverConfig::new(0.0, 0.3).with_max_iters(5).with_tol(1e-30);
        let out = obsvt1(&p, &cfg).unwrap();
        let mut y = 0.0_f64;
        let mut x = 0.0;
        for _ in 0..out.trace.iterations() {
            x = y;
            y = (y + 0.3 * (1.0 - x)).max(0.0);
        }
        assert!((out.x.get(0, 0) - x).abs() < 1e-14);
        assert!((out.y[0] - y).abs() < 1e-14);
    }

    #[test]
    fn zero_target_stops_at_zero() {
        let p = scalar_problem(1.0, 0.0);
        let cfg = SolverConfig::new(10.0, 1.0);
        let out = obsvt1(&p, &cfg).unwrap();
        assert_eq!(out.x.get(0, 0), 0.0);
        assert_eq!(out.trace.stop, StopReason::Feasible);
        assert_eq!(out.trace.iterations(), 1);
    }

    #[test]
    fn obsvt2_feasible_start_is_stationary() {
        let p = scalar_problem(1.0, -0.5);
        let out = obsvt2(&p, &SolverConfig::new(0.0, 1.0)).unwrap();
        assert_eq!(out.trace.stop, StopReason::Feasible);
        assert_eq!(out.y, vec![0.0]);
    }

    #[test]
    fn divergence_is_reported() {
        // two opposing constraints on one cell; an oversized step overshoots
        // each way and the multiplier grows geometrically
        let x = DenseMatrix::from_row_major(1, 1, vec![1.0]).unwrap();
        let mask = ObservationMask::full(1, 1).unwrap();
        let d = DitherStack::new(2, 1, vec![0.5, 1.5], DitherScheme::Adaptive, 0).unwrap();
        let p = sample(&x, &mask, &d).unwrap();
        let cfg = SolverConfig::new(0.0, 1e3).with_max_iters(50).with_tol(1e-30);
        let err = obsvt1(&p, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        let p = scalar_problem(1.0, 0.5);
        assert!(obsvt1(&p, &SolverConfig::new(-1.0, 1.0)).is_err());
        assert!(obsvt1(&p, &SolverConfig::new(1.0, 0.0)).is_err());
        assert!(obsvt1(&p, &SolverConfig::new(1.0, 1.0).with_max_iters(0)).is_err());
        assert!(obsvt1_noisy(&p, &SolverConfig::new(1.0, 1.0)).is_err());
        assert!(randomized_obsvt(&p, &SolverConfig::new(1.0, 1.0)).is_err());
        let bad = SolverConfig::new(1.0, 1.0).with_sigma_z(vec![-1.0]);
        assert!(obsvt1_noisy(&p, &bad).is_err());
    }
}
