//! Error metrics, consistency, recovery bounds and convergence monitors.

use alloc::vec::Vec;

use crate::error::{dim_err, param_err, Result};
use crate::matrix::DenseMatrix;
use crate::problem::OneBitProblem;
use crate::quantizer::one_bit;
use crate::rng::{stream, Domain};
use crate::solvers::obsvt::sketched_update;
use crate::solvers::{SketchKind, SolverConfig, SolverTrace};
use crate::svd::svt_shrink;

/// `|x_hat - x_true|_F / |x_true|_F`.
pub fn relative_error(x_hat: &DenseMatrix, x_true: &DenseMatrix) -> Result<f64> {
    let denom = x_true.frobenius_norm();
    if denom == 0.0 {
        return Err(param_err!("relative error against a zero matrix"));
    }
    Ok(x_hat.sub(x_true)?.frobenius_norm() / denom)
}

/// Fraction of positions where the two sign vectors disagree.
pub fn hamming_distance(a: &[i8], b: &[i8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dim_err!("sign vectors of length {} and {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(dim_err!("empty sign vectors"));
    }
    let bad = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(bad as f64 / a.len() as f64)
}

/// Mean absolute gap between observed entries and their dithers, summed
/// directly over `(l, k)`.
pub fn t_ave(x: &DenseMatrix, p: &OneBitProblem) -> Result<f64> {
    p.mask().check_matrix(x)?;
    let mp = p.m_prime();
    let vals = x.as_slice();
    let d = p.dithers().as_slice();
    let mut sum = 0.0;
    for l in 0..p.m() {
        for k in 0..mp {
            sum += (vals[p.mask().flat_index(k)] - d[l * mp + k]).abs();
        }
    }
    Ok(sum / p.stacked_len() as f64)
}

/// Same quantity as [`t_ave`], computed as `|A(x) - t|_1 / (m m')`.
pub fn t_ave_via_operator(x: &DenseMatrix, p: &OneBitProblem) -> Result<f64> {
    let ax = p.apply_a(x)?;
    let t = p.target_vector();
    let l1: f64 = ax.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum();
    Ok(l1 / p.stacked_len() as f64)
}

/// Closed-form mean of [`t_ave`] under uniform dithers on `[-alpha, alpha]`
/// and a uniformly drawn cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedTAve {
    pub value: f64,
    /// `|x|_max > alpha`; the closed form no longer applies.
    pub outside_regime: bool,
}

pub fn expected_t_ave(x: &DenseMatrix, alpha: f64) -> Result<ExpectedTAve> {
    if !(alpha > 0.0) {
        return Err(param_err!("alpha must be > 0, got {alpha}"));
    }
    let cells = (x.rows() * x.cols()) as f64;
    Ok(ExpectedTAve {
        value: alpha / 2.0 + x.frobenius_norm_sq() / (2.0 * alpha * cells),
        outside_regime: x.max_abs() > alpha,
    })
}

/// Whether `x_hat` reproduces every recorded sign, and the fraction it misses.
pub fn consistency_check(x_hat: &DenseMatrix, p: &OneBitProblem) -> Result<(bool, f64)> {
    p.mask().check_matrix(x_hat)?;
    let mp = p.m_prime();
    let vals = x_hat.as_slice();
    let d = p.dithers().as_slice();
    let resampled: Vec<i8> = (0..p.stacked_len())
        .map(|i| one_bit(vals[p.mask().flat_index(i % mp)], d[i]))
        .collect();
    let h = hamming_distance(&resampled, p.signs().as_slice())?;
    Ok((h == 0.0, h))
}

/// Inputs shared by the recovery-bound calculators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    /// Uniform dither amplitude, also the max-norm bound on the truth.
    pub alpha: f64,
    pub m: usize,
    pub m_prime: usize,
    pub failure_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryBound {
    /// Deviation level solved from `failure_prob = 2 exp(-eps^2 m m' / (4 alpha^2))`.
    pub epsilon: f64,
    /// `4 sqrt(eps alpha n1 n2)`.
    pub fro_bound: f64,
    /// `m m' >= sqrt(r) max(n1, n2)`, with the hidden constant taken as 1.
    pub samples_ok: bool,
}

/// Frobenius error bound for a consistent reconstruction.
pub fn recovery_bound(inp: &BoundInputs) -> Result<RecoveryBound> {
    let BoundInputs {
        n1,
        n2,
        rank,
        alpha,
        m,
        m_prime,
        failure_prob,
    } = *inp;
    if n1 == 0 || n2 == 0 || rank == 0 || m == 0 || m_prime == 0 || !(alpha > 0.0) {
        return Err(param_err!("bound inputs must be positive"));
    }
    if !(failure_prob > 0.0 && failure_prob < 1.0) {
        return Err(param_err!("failure_prob must be in (0, 1), got {failure_prob}"));
    }
    let samples = (m * m_prime) as f64;
    let epsilon = libm::sqrt(4.0 * alpha * alpha * libm::log(2.0 / failure_prob) / samples);
    let cells = (n1 * n2) as f64;
    Ok(RecoveryBound {
        epsilon,
        fro_bound: 4.0 * libm::sqrt(epsilon * alpha * cells),
        samples_ok: samples >= libm::sqrt(rank as f64) * n1.max(n2) as f64,
    })
}

/// Bound for a reconstruction that misses a fraction `hamming` of the signs:
/// the consistent bound plus `2 alpha sqrt(2 n1 n2 hamming)`.
pub fn recovery_bound_with_hamming(inp: &BoundInputs, hamming: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&hamming) {
        return Err(param_err!("hamming must be in [0, 1], got {hamming}"));
    }
    let base = recovery_bound(inp)?;
    let cells = (inp.n1 * inp.n2) as f64;
    if hamming == 0.0 {
        return Ok(base.fro_bound);
    }
    Ok(base.fro_bound + 2.0 * inp.alpha * libm::sqrt(2.0 * cells * hamming))
}

/// Deviation level from the sample-rate relation
/// `m m' = 2 alpha^{5/2} (n1 + n2) r / eps^{5/2}`.
pub fn rate_epsilon(n1: usize, n2: usize, rank: usize, alpha: f64, samples: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(samples > 0.0) || rank == 0 {
        return Err(param_err!("rate inputs must be positive"));
    }
    let num = 2.0 * libm::pow(alpha, 2.5) * (n1 + n2) as f64 * rank as f64;
    Ok(libm::pow(num / samples, 0.4))
}

/// `|z|_F^2 <= |x_final - x_true|_F^2 / 2`.
pub fn noise_admissible(z: &DenseMatrix, x_final: &DenseMatrix, x_true: &DenseMatrix) -> Result<bool> {
    z.check_same_dims(x_true)?;
    let gap = x_final.sub(x_true)?.frobenius_norm_sq();
    Ok(z.frobenius_norm_sq() <= 0.5 * gap)
}

/// Per-iteration inequality checked by [`convergence_monitor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorInequality {
    /// `|y_k - y*|^2 <= |y_{k-1} - y*|^2 - (2 delta - delta^2 m) |X_k - X*|^2`
    /// (projected multiplier update).
    ProjectedDescent,
    /// `|y_k - y*|^2 <= |y_{k-1} - y*|^2 - m delta^2 |X_k - X*|^2`
    /// (accumulated multiplier update).
    AccumulatedDescent,
    /// `|X_k - X*|^2 <= |y_{k-1} - y*|^2 / m`.
    PrimalBridge,
}

impl MonitorInequality {
    pub fn name(self) -> &'static str {
        match self {
            Self::ProjectedDescent => "projected-descent",
            Self::AccumulatedDescent => "accumulated-descent",
            Self::PrimalBridge => "primal-bridge",
        }
    }

    fn accepts(self, solver: &str) -> bool {
        match self {
            Self::ProjectedDescent => solver == "obsvt1",
            Self::AccumulatedDescent => solver == "obsvt2",
            Self::PrimalBridge => matches!(solver, "obsvt1" | "obsvt2"),
        }
    }
}

/// Evaluation of one inequality at one iteration. `slack = rhs - lhs`; a
/// violation has negative slack beyond the rounding allowance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub iteration: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub inequality: MonitorInequality,
    pub solver: &'static str,
    pub rows: Vec<MonitorRow>,
    /// The reference is a tight-tolerance rerun of the same solver, not the
    /// exact optimum.
    pub reference_note: &'static str,
    /// Run used a step outside the projected update's convergence region.
    pub step_bound_exceeded: bool,
}

impl ViolationReport {
    pub fn violations(&self) -> impl Iterator<Item = &MonitorRow> {
        self.rows.iter().filter(|r| r.violated)
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }
}

/// Relative allowance for rounding when comparing the two sides.
pub const MONITOR_RTOL: f64 = 1e-9;

/// Check an inequality at every iteration of a trace recorded with a
/// reference solution (see `Hooks::reference`).
pub fn convergence_monitor(trace: &SolverTrace, inequality: MonitorInequality) -> Result<ViolationReport> {
    if !inequality.accepts(trace.solver) {
        return Err(param_err!(
            "inequality {} does not apply to solver {}",
            inequality.name(),
            trace.solver
        ));
    }
    let m = trace.m as f64;
    let d = trace.delta;
    let mut rows = Vec::with_capacity(trace.records.len());
    for rec in &trace.records {
        let r = rec
            .reference
            .ok_or_else(|| param_err!("trace iteration {} has no reference distances", rec.iteration))?;
        let (lhs, rhs) = match inequality {
            MonitorInequality::ProjectedDescent => {
                (r.y_sq, r.y_prev_sq - (2.0 * d - d * d * m) * r.x_sq)
            }
            MonitorInequality::AccumulatedDescent => (r.y_sq, r.y_prev_sq - m * d * d * r.x_sq),
            MonitorInequality::PrimalBridge => (r.x_sq, r.y_prev_sq / m),
        };
        let slack = rhs - lhs;
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        rows.push(MonitorRow {
            iteration: rec.iteration,
            lhs,
            rhs,
            slack,
            violated: slack < -MONITOR_RTOL * scale,
        });
    }
    Ok(ViolationReport {
        inequality,
        solver: trace.solver,
        rows,
        reference_note: "reference = same solver at tol 1e-10 and 10x max_iters",
        step_bound_exceeded: trace.step_bound_exceeded,
    })
}

/// Mean and standard error of the one-step multiplier distance decrease
/// `|y_prev - y*|^2 - |y_next - y*|^2` of the randomized solver, over `draws`
/// fresh sketches from the fixed state `y_prev`. The expected decrease is
/// nonnegative when the sketched step is a descent step in expectation.
pub fn sketch_descent_expectation(
    p: &OneBitProblem,
    cfg: &SolverConfig,
    y_prev: &[f64],
    y_ref: &[f64],
    draws: usize,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let s = cfg
        .sketch_size
        .ok_or_else(|| param_err!("sketch expectation needs sketch_size"))?;
    if s == 0 || s >= p.m_prime() {
        return Err(param_err!("sketch size {s} must be in 1..m' = {}", p.m_prime()));
    }
    let len = p.stacked_len();
    if y_prev.len() != len || y_ref.len() != len {
        return Err(dim_err!("multipliers must have length m*m' = {len}"));
    }
    if draws < 2 {
        return Err(param_err!("need at least two draws"));
    }
    let x = svt_shrink(&p.apply_a_adjoint(y_prev)?, cfg.theta)?;
    let ax = p.apply_a(&x)?;
    let t = p.target_vector();
    let before: f64 = y_prev.iter().zip(y_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut rng = stream(cfg.seed, Domain::MonteCarlo, 0);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut y = y_prev.to_vec();
    for i in 0..draws {
        y.copy_from_slice(y_prev);
        sketched_update(p, &t, &ax, &mut y, cfg.delta, s, SketchKind::Gaussian, &mut rng);
        let after: f64 = y.iter().zip(y_ref).map(|(a, b)| (a - b) * (a - b)).sum();
        let dec = before - after;
        let delta = dec - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (dec - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok((mean, libm::sqrt(var / draws as f64)))
}
