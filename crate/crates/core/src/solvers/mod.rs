//! Singular value thresholding solvers for the one-bit polyhedron.
//!
//! All OB-SVT variants share one loop: `X = D_theta(A*(y))`, then a
//! multiplier update that differs per variant. The multiplier starts at zero.

mod bregman;
mod mle;
pub(crate) mod obsvt;
mod sketch;

use alloc::vec::Vec;

pub use bregman::{bregman_adaptive, BregmanOutput};
pub use mle::{
    inverse_mills, log_normal_cdf, mle_baseline, mle_baseline_with, neg_log_likelihood,
    nll_gradient, MleConfig, NoiseModel,
};
pub use obsvt::{
    obsvt1, obsvt1_noisy, obsvt2, randomized_obsvt, run, MultiplierRule, SolveOutput,
};
pub use sketch::{make_sketch, SketchDescriptor, SketchKind};

use crate::error::{param_err, Result};
use crate::matrix::DenseMatrix;

/// Abort threshold for the multiplier norm.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Solver parameters. `theta` is the shrinkage threshold, `delta` the
/// constant step size.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub theta: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub sketch_size: Option<usize>,
    pub sigma_z: Option<Vec<f64>>,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(theta: f64, delta: f64) -> Self {
        Self {
            theta,
            delta,
            max_iters: 500,
            tol: 1e-4,
            sketch_size: None,
            sigma_z: None,
            seed: 0,
        }
    }

    /// `theta = alpha * sqrt(n1 n2)` and `delta = 1.2 n1 n2 / m'`.
    pub fn experiment_default(n1: usize, n2: usize, m_prime: usize, alpha: f64) -> Self {
        let cells = (n1 * n2) as f64;
        Self::new(alpha * libm::sqrt(cells), 1.2 * cells / m_prime as f64)
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sketch_size(mut self, s: usize) -> Self {
        self.sketch_size = Some(s);
        self
    }

    pub fn with_sigma_z(mut self, sigma_z: Vec<f64>) -> Self {
        self.sigma_z = Some(sigma_z);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(param_err!("theta must be >= 0, got {}", self.theta));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(param_err!("delta must be > 0, got {}", self.delta));
        }
        if self.max_iters == 0 {
            return Err(param_err!("max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(param_err!("tol must be > 0, got {}", self.tol));
        }
        Ok(())
    }
}

/// Why a solver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative Frobenius change of the iterate fell to `tol`.
    RelativeChange,
    /// The iterate satisfies every one-bit constraint.
    Feasible,
    MaxIters,
    /// An observer asked the solver to stop.
    Observer,
}

/// One row of a solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `|X_k - X_{k-1}|_F / |X_k|_F`; infinite on the first iteration.
    pub rel_change: f64,
    /// `|(t - A(X_k))^+|_2`.
    pub residual_norm: f64,
    /// `|(t - A(X_k))^+|_inf`.
    pub residual_inf: f64,
    /// `|y_k|_2` after the update.
    pub multiplier_norm: f64,
    pub rank: usize,
    pub elapsed_secs: f64,
    /// Sketch block used by the randomized solver.
    pub block: Option<usize>,
    /// Distances to a reference solution, when one was supplied.
    pub reference: Option<ReferenceDistances>,
}

/// Squared distances to a reference `(X_ref, y_ref)` at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDistances {
    /// `|y_{k-1} - y_ref|^2`
    pub y_prev_sq: f64,
    /// `|y_k - y_ref|^2`
    pub y_sq: f64,
    /// `|X_k - X_ref|_F^2`
    pub x_sq: f64,
}

/// Per-iteration log of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub solver: &'static str,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub delta: f64,
    pub m: usize,
    /// `delta >= 2/m`, outside the OB-SVT-I convergence region. Logged only.
    pub step_bound_exceeded: bool,
    /// Fraction of recorded signs the final iterate reproduces incorrectly.
    pub final_hamming: f64,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::RelativeChange | StopReason::Feasible)
    }
}

/// Source of wall-clock time; the core has no clock of its own.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin.
    fn now_secs(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

/// Converged solution used by the convergence monitors.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

/// Observer verdict after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Optional instrumentation for a solver run.
pub struct Hooks<'a> {
    pub clock: &'a dyn Clock,
    pub reference: Option<&'a Reference>,
    #[allow(clippy::type_complexity)]
    pub observer: Option<&'a mut dyn FnMut(&IterationRecord, &DenseMatrix) -> Control>,
    /// Replace the gaussian sketch of the randomized solver.
    pub sketch_kind: SketchKind,
}

impl Default for Hooks<'_> {
    fn default() -> Self {
        Self {
            clock: &NoClock,
            reference: None,
            observer: None,
            sketch_kind: SketchKind::Gaussian,
        }
    }
}

pub(crate) fn norm2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
