use alloc::boxed::Box;
use alloc::vec::Vec;

use super::obsvt::{run, MultiplierRule};
use super::{dist_sq, Hooks, SolverConfig, SolverTrace};
use crate::error::{param_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::problem::{DitherScheme, DitherStack, OneBitProblem};

/// Result of the adaptive-threshold outer loop.
#[derive(Debug, Clone)]
pub struct BregmanOutput {
    pub x: DenseMatrix,
    /// `t^(1), t^(2), ...`; the first entry is the recorded target `t`.
    pub targets: Vec<Vec<f64>>,
    /// One OB-SVT-II trace per inner solve.
    pub inner_traces: Vec<SolverTrace>,
    /// Final adaptive dither stack `Gamma^(k) = R ⊙ t^(k)`.
    pub dithers: DitherStack,
}

/// Adaptive thresholding by Bregman iteration.
///
/// `t^(k+1) = t + (t^(k) - A(X^(k)))^+`, then `X^(k+1)` is the OB-SVT-II
/// solution for the targets `t^(k+1)`. The recorded signs stay fixed, so
/// each new target corresponds to the dither stack `R ⊙ t^(k+1)`. Stops when
/// `|t^(k+1) - t^(k)|_2 <= epsilon` or after `outer_max` inner solves.
pub fn bregman_adaptive(
    p: &OneBitProblem,
    cfg: &SolverConfig,
    epsilon: f64,
    outer_max: usize,
) -> Result<BregmanOutput> {
    if !(epsilon > 0.0) {
        return Err(param_err!("epsilon must be > 0, got {epsilon}"));
    }
    if outer_max == 0 {
        return Err(param_err!("outer_max must be >= 1"));
    }
    let t_base = p.target_vector();
    let signs = p.signs().as_slice();
    let mut problem = p.clone();
    let mut t_cur = t_base.clone();
    let mut targets = alloc::vec![t_cur.clone()];
    let mut inner_traces = Vec::new();

    let mut out = solve_inner(&problem, cfg, 1)?;
    inner_traces.push(out.trace);
    let mut x = out.x;

    for outer in 1..=outer_max {
        let ax = problem.apply_a(&x)?;
        let t_next: Vec<f64> = t_base
            .iter()
            .zip(&t_cur)
            .zip(&ax)
            .map(|((b, t), a)| b + (t - a).max(0.0))
            .collect();
        let step = libm::sqrt(dist_sq(&t_next, &t_cur));
        targets.push(t_next.clone());
        if step <= epsilon || outer == outer_max {
            break;
        }
        let gamma: Vec<f64> = signs
            .iter()
            .zip(&t_next)
            .map(|(&s, &t)| f64::from(s) * t)
            .collect();
        let dithers = DitherStack::new(
            p.m(),
            p.m_prime(),
            gamma,
            DitherScheme::Adaptive,
            p.dithers().seed(),
        )?;
        problem = p.with_dithers(dithers)?;
        out = solve_inner(&problem, cfg, outer + 1)?;
        inner_traces.push(out.trace);
        x = out.x;
        t_cur = t_next;
    }

    Ok(BregmanOutput {
        x,
        targets,
        inner_traces,
        dithers: problem.dithers().clone(),
    })
}

fn solve_inner(
    p: &OneBitProblem,
    cfg: &SolverConfig,
    outer: usize,
) -> Result<super::SolveOutput> {
    run(p, cfg, MultiplierRule::Accumulated, &mut Hooks::default()).map_err(|e| Error::Outer {
        outer,
        source: Box::new(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::ObservationMask;
    use crate::quantizer::sample;

    #[test]
    fn feasible_first_pass_stops_immediately() {
        let x = DenseMatrix::from_row_major(1, 1, vec![1.0]).unwrap();
        let mask = ObservationMask::full(1, 1).unwrap();
        let d = DitherStack::new(1, 1, vec![-0.5], DitherScheme::Adaptive, 0).unwrap();
        let p = sample(&x, &mask, &d).unwrap();
        let out = bregman_adaptive(&p, &SolverConfig::new(0.0, 1.0), 1e-9, 10).unwrap();
        assert_eq!(out.targets.len(), 2);
        assert_eq!(out.targets[0], out.targets[1]);
        assert_eq!(out.inner_traces.len(), 1);
    }

    #[test]
    fn parameter_checks() {
        let x = DenseMatrix::from_row_major(1, 1, vec![1.0]).unwrap();
        let mask = ObservationMask::full(1, 1).unwrap();
        let d = DitherStack::new(1, 1, vec![0.5], DitherScheme::Adaptive, 0).unwrap();
        let p = sample(&x, &mask, &d).unwrap();
        let cfg = SolverConfig::new(0.0, 1.0);
        assert!(bregman_adaptive(&p, &cfg, 0.0, 3).is_err());
        assert!(bregman_adaptive(&p, &cfg, 1.0, 0).is_err());
        let bad = SolverConfig::new(0.0, -1.0);
        assert!(matches!(
            bregman_adaptive(&p, &bad, 1.0, 3),
            Err(Error::Outer { outer: 1, .. })
        ));
    }
}
