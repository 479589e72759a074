//! Wall-clock to a fixed error target, OB-SVT-II against the likelihood
//! baseline. Only the ratio between solvers is meaningful across machines.

use anyhow::{bail, Context, Result};
use serde::Serialize;

use onebit_core::instance::make_instance;
use onebit_core::rng::derive_seed;
use onebit_core::solvers::{mle_baseline_with, run, Control, Hooks, IterationRecord, MultiplierRule, NoiseModel};
use onebit_core::DenseMatrix;

use crate::clock::StdClock;
use crate::config::{ExperimentConfig, SolverName};
use crate::experiment::{instance_spec, mle_config, solver_config};
use crate::stats::median;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub rep: usize,
    pub solver: String,
    pub reached: bool,
    /// Seconds until the first iterate within the target; empty if unreached.
    pub secs: Option<f64>,
    pub iterations: usize,
    pub nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub n: usize,
    pub obsvt2_median_secs: Option<f64>,
    pub mle_median_secs: Option<f64>,
    /// `mle / obsvt2`; above 1 means OB-SVT-II is faster.
    pub ratio: Option<f64>,
    pub obsvt2_reached: usize,
    pub mle_reached: usize,
}

/// Stop at the first iterate with `nmse <= target`, or when the budget runs out.
fn target_observer<'a>(
    x_true: &'a DenseMatrix,
    target: f64,
    budget: f64,
    hit: &'a mut Option<(f64, usize, f64)>,
    last: &'a mut f64,
) -> impl FnMut(&IterationRecord, &DenseMatrix) -> Control + 'a {
    let denom = x_true.frobenius_norm_sq();
    move |rec, x| {
        let nmse = x.sub(x_true).map(|d| d.frobenius_norm_sq() / denom).unwrap_or(f64::INFINITY);
        *last = nmse;
        if nmse <= target {
            *hit = Some((rec.elapsed_secs, rec.iteration, nmse));
            Control::Stop
        } else if rec.elapsed_secs > budget {
            Control::Stop
        } else {
            Control::Continue
        }
    }
}

pub fn bench(cfg: &ExperimentConfig) -> Result<(Vec<BenchRow>, Vec<BenchSummary>)> {
    cfg.validate()?;
    let b = cfg.bench.as_ref().context("config has no [bench] section")?;
    let fraction = cfg.sweep.fractions[0];
    let dither = cfg.sweep.dithers[0].0;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n in &b.sizes {
        let mut local = cfg.clone();
        local.matrix.n1 = n;
        local.matrix.n2 = n;
        for rep in 0..cfg.repetitions {
            let seed = derive_seed(derive_seed(cfg.seed, n as u64), rep as u64);
            let inst = make_instance(&instance_spec(&local, fraction, 1, dither), seed)?;
            let p = &inst.problem;
            for solver in [SolverName::Obsvt2, SolverName::Mle] {
                let clock = StdClock::new();
                let mut hit = None;
                let mut last = f64::NAN;
                let mut obs = target_observer(&inst.x_true, b.nmse_target, b.budget_secs, &mut hit, &mut last);
                let mut hooks = Hooks {
                    clock: &clock,
                    observer: Some(&mut obs),
                    ..Hooks::default()
                };
                let iterations = match solver {
                    SolverName::Obsvt2 => {
                        let sc = solver_config(&local, p, seed);
                        run(p, &sc, MultiplierRule::Accumulated, &mut hooks)?.trace.iterations()
                    }
                    SolverName::Mle => {
                        let noise = NoiseModel::Gaussian {
                            std: local.mle_noise_std(),
                        };
                        mle_baseline_with(p, noise, &mle_config(&local, p), &mut hooks)?.1.iterations()
                    }
                    _ => unreachable!(),
                };
                drop(hooks);
                drop(obs);
                rows.push(BenchRow {
                    n,
                    rep,
                    solver: solver.to_string(),
                    reached: hit.is_some(),
                    secs: hit.map(|h| h.0),
                    iterations: hit.map(|h| h.1).unwrap_or(iterations),
                    nmse: hit.map(|h| h.2).unwrap_or(last),
                });
            }
        }
        let secs = |name: &str| -> Vec<f64> {
            rows.iter()
                .filter(|r| r.n == n && r.solver == name)
                .filter_map(|r| r.secs)
                .collect()
        };
        let (o, m) = (secs("obsvt2"), secs("mle"));
        // an unreached run counts as slower than any reached one
        let med = |v: &[f64]| if v.len() == cfg.repetitions { median(v) } else { None };
        let (om, mm) = (med(&o), med(&m));
        summary.push(BenchSummary {
            n,
            obsvt2_median_secs: om,
            mle_median_secs: mm,
            ratio: om.zip(mm).map(|(a, b)| b / a),
            obsvt2_reached: o.len(),
            mle_reached: m.len(),
        });
    }
    if rows.is_empty() {
        bail!("bench produced no rows");
    }
    Ok((rows, summary))
}
