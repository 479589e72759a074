//! Nuclear-norm regularized maximum likelihood by proximal gradient descent,
//! the comparison baseline. One sign per observed cell, probit link.

use alloc::vec::Vec;

use super::{Clock, Control, Hooks, IterationRecord, SolverTrace, StopReason};
use crate::error::{param_err, Result};
use crate::matrix::DenseMatrix;
use crate::problem::OneBitProblem;
use crate::svd::SvdStrategy;

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// Pre-quantization noise assumed by the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { std: f64 },
}

impl NoiseModel {
    fn std(&self) -> f64 {
        match *self {
            Self::Gaussian { std } => std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleConfig {
    /// Weight of the nuclear-norm penalty.
    pub lambda: f64,
    /// Gradient step; `None` uses `1/L = std^2`.
    pub step: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl MleConfig {
    /// `lambda = 2 sqrt(m' / min(n1, n2))`, about the spectral norm of the
    /// score at the truth.
    pub fn default_for(n1: usize, n2: usize, m_prime: usize) -> Self {
        Self {
            lambda: 2.0 * libm::sqrt(m_prime as f64 / n1.min(n2) as f64),
            step: None,
            max_iters: 500,
            tol: 1e-4,
        }
    }
}

fn std_normal_pdf(u: f64) -> f64 {
    libm::exp(-0.5 * u * u) / libm::sqrt(2.0 * PI)
}

/// `log Phi(u)`, accurate deep in the lower tail.
pub fn log_normal_cdf(u: f64) -> f64 {
    if u > -30.0 {
        libm::log(0.5 * libm::erfc(-u * FRAC_1_SQRT_2))
    } else {
        // Phi(u) ~ phi(u)/(-u) (1 - 1/u^2 + 3/u^4)
        let u2 = u * u;
        -0.5 * u2 - libm::log(-u) - 0.5 * libm::log(2.0 * PI) + libm::log1p(-1.0 / u2 + 3.0 / (u2 * u2))
    }
}

/// `phi(u) / Phi(u)`.
pub fn inverse_mills(u: f64) -> f64 {
    if u > -30.0 {
        std_normal_pdf(u) / (0.5 * libm::erfc(-u * FRAC_1_SQRT_2))
    } else {
        let u2 = u * u;
        -u / (1.0 - 1.0 / u2 + 3.0 / (u2 * u2))
    }
}

fn check_single_sequence(p: &OneBitProblem) -> Result<()> {
    if p.m() != 1 {
        return Err(param_err!(
            "the likelihood baseline takes a single dither sequence, got m = {}",
            p.m()
        ));
    }
    Ok(())
}

/// `-sum_k log Phi(s_k (X_k - tau_k) / std)` over observed cells.
pub fn neg_log_likelihood(p: &OneBitProblem, noise: NoiseModel, x: &DenseMatrix) -> Result<f64> {
    check_single_sequence(p)?;
    let sd = noise.std();
    let obs = crate::mask::project_mask(x, p.mask())?;
    Ok(obs
        .iter()
        .zip(p.signs().as_slice())
        .zip(p.dithers().as_slice())
        .map(|((&xv, &s), &tau)| -log_normal_cdf(f64::from(s) * (xv - tau) / sd))
        .sum())
}

/// Gradient of [`neg_log_likelihood`].
pub fn nll_gradient(p: &OneBitProblem, noise: NoiseModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_single_sequence(p)?;
    let sd = noise.std();
    let obs = crate::mask::project_mask(x, p.mask())?;
    let (n1, n2) = x.dims();
    let mut g = DenseMatrix::zeros(n1, n2);
    let dst = g.as_mut_slice();
    for (k, ((&xv, &s), &tau)) in obs
        .iter()
        .zip(p.signs().as_slice())
        .zip(p.dithers().as_slice())
        .enumerate()
    {
        let s = f64::from(s);
        let u = s * (xv - tau) / sd;
        dst[p.mask().flat_index(k)] = -s / sd * inverse_mills(u);
    }
    Ok(g)
}

/// Proximal gradient on the penalized likelihood, starting from zero.
pub fn mle_baseline(
    p: &OneBitProblem,
    noise: NoiseModel,
    cfg: &MleConfig,
) -> Result<(DenseMatrix, SolverTrace)> {
    mle_baseline_with(p, noise, cfg, &mut Hooks::default())
}

/// [`mle_baseline`] with instrumentation. The trace column
/// `multiplier_norm` holds the gradient norm for this solver.
pub fn mle_baseline_with(
    p: &OneBitProblem,
    noise: NoiseModel,
    cfg: &MleConfig,
    hooks: &mut Hooks<'_>,
) -> Result<(DenseMatrix, SolverTrace)> {
    check_single_sequence(p)?;
    let sd = noise.std();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(param_err!("noise std must be > 0, got {sd}"));
    }
    if !(cfg.lambda >= 0.0) || cfg.max_iters == 0 || !(cfg.tol > 0.0) {
        return Err(param_err!("invalid likelihood solver configuration"));
    }
    let step = cfg.step.unwrap_or(sd * sd);
    if !(step > 0.0) {
        return Err(param_err!("gradient step must be > 0, got {step}"));
    }
    let (n1, n2) = p.dims();
    let clock: &dyn Clock = hooks.clock;
    let start = clock.now_secs();
    let mut svd = SvdStrategy::default();
    let mut x = DenseMatrix::zeros(n1, n2);
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIters;

    for k in 1..=cfg.max_iters {
        let g = nll_gradient(p, noise, &x)?;
        let mut z = x.clone();
        for (zi, gi) in z.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *zi -= step * gi;
        }
        let shrunk = svd.shrink(&z, step * cfg.lambda)?;
        let x_new = shrunk.matrix;
        let norm = x_new.frobenius_norm();
        let rel_change = if norm > 0.0 {
            x_new.sub(&x)?.frobenius_norm() / norm
        } else {
            0.0
        };
        let resid = crate::quantizer::residual_plus(p, &x_new)?;
        let rec = IterationRecord {
            iteration: k,
            rel_change,
            residual_norm: libm::sqrt(super::norm2_sq(&resid)),
            residual_inf: resid.iter().fold(0.0_f64, |a, &b| a.max(b)),
            multiplier_norm: g.frobenius_norm(),
            rank: shrunk.rank,
            elapsed_secs: clock.now_secs() - start,
            block: None,
            reference: None,
        };
        x = x_new;
        let observer_stop = match hooks.observer.as_mut() {
            Some(obs) => obs(&rec, &x) == Control::Stop,
            None => false,
        };
        records.push(rec);
        if observer_stop {
            stop = StopReason::Observer;
            break;
        }
        if k > 1 && rel_change <= cfg.tol {
            stop = StopReason::RelativeChange;
            break;
        }
    }

    let final_hamming = super::obsvt::sign_mismatch(p, &x);
    Ok((
        x,
        SolverTrace {
            solver: "mle",
            records,
            stop,
            delta: step,
            m: 1,
            step_bound_exceeded: false,
            final_hamming,
        },
    ))
}
