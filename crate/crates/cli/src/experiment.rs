//! Grid runner: instances x repetitions x solvers, one CSV row per run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use onebit_core::analysis::{
    consistency_check, noise_admissible, recovery_bound, recovery_bound_with_hamming,
    relative_error, BoundInputs,
};
use onebit_core::instance::{make_instance, DitherFamily, Instance, InstanceSpec};
use onebit_core::quantizer::sigma_z_default;
use onebit_core::rng::derive_seed;
use onebit_core::solvers::{
    bregman_adaptive, mle_baseline_with, run, Hooks, MleConfig, MultiplierRule, NoiseModel,
    SketchKind, SolverConfig, SolverTrace,
};
use onebit_core::{DenseMatrix, OneBitProblem};

use crate::clock::StdClock;
use crate::config::{DitherName, ExperimentConfig, NoiseConfig, SolverName};
use crate::formats::stop_label;

/// Recorded on every row so results stay interpretable on their own.
pub const SIGMA_Z_RULE: &str = "3*noise_std";
pub const DR_RULE: &str = "max_abs_observed";
pub const TIE_RULE: &str = "x>=tau->+1";

/// A solver plus its sketch ratio, when it has one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub solver: SolverName,
    pub sketch_ratio: Option<f64>,
}

impl Variant {
    pub fn label(&self) -> String {
        match self.sketch_ratio {
            Some(b) => format!("{}@{b}", self.solver),
            None => self.solver.to_string(),
        }
    }
}

pub fn variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    let mut out = Vec::new();
    for &solver in &cfg.solver.solvers {
        if solver == SolverName::RandObsvt {
            for &b in &cfg.sweep.sketch_ratios {
                out.push(Variant {
                    solver,
                    sketch_ratio: Some(b),
                });
            }
        } else {
            out.push(Variant {
                solver,
                sketch_ratio: None,
            });
        }
    }
    out
}

/// One instance of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub fraction_index: usize,
    pub fraction: f64,
    pub m: usize,
    pub dither: DitherName,
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for (fi, &fraction) in cfg.sweep.fractions.iter().enumerate() {
        for &m in &cfg.sweep.m {
            for &dither in &cfg.sweep.dithers {
                out.push(GridPoint {
                    index: out.len(),
                    fraction_index: fi,
                    fraction,
                    m,
                    dither,
                });
            }
        }
    }
    out
}

/// Instance seed. Keyed by fraction and repetition only, so the sweeps over
/// `m` and dither family reuse the same matrix, mask and noise.
pub fn instance_seed(cfg: &ExperimentConfig, g: &GridPoint, rep: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, g.fraction_index as u64), rep as u64)
}

pub fn instance_spec(cfg: &ExperimentConfig, fraction: f64, m: usize, dither: DitherFamily) -> InstanceSpec {
    InstanceSpec {
        n1: cfg.matrix.n1,
        n2: cfg.matrix.n2,
        rank: cfg.matrix.rank,
        factors: cfg.matrix.factors.into(),
        fraction,
        noise: cfg.noise.into(),
        dither,
        m,
    }
}

/// Result of one solver run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x: DenseMatrix,
    pub trace: SolverTrace,
    /// Total iterations, summed over inner solves for the adaptive solver.
    pub iterations: usize,
    pub elapsed_secs: f64,
}

/// Solver configuration resolved for one problem.
pub fn solver_config(cfg: &ExperimentConfig, p: &OneBitProblem, seed: u64) -> SolverConfig {
    let (n1, n2) = p.dims();
    let mut sc = SolverConfig::experiment_default(n1, n2, p.m_prime(), cfg.solver.alpha)
        .with_max_iters(cfg.solver.max_iters)
        .with_tol(cfg.solver.tol)
        .with_seed(seed);
    if let Some(d) = cfg.solver.delta {
        sc.delta = d;
    }
    sc
}

pub fn mle_config(cfg: &ExperimentConfig, p: &OneBitProblem) -> MleConfig {
    let (n1, n2) = p.dims();
    let mut mc = MleConfig::default_for(n1, n2, p.m_prime());
    mc.lambda *= cfg.solver.mle_lambda_scale;
    mc.max_iters = cfg.solver.mle_max_iters;
    mc.tol = cfg.solver.tol;
    mc
}

/// Run one solver variant on a problem.
pub fn solve(cfg: &ExperimentConfig, p: &OneBitProblem, v: Variant, seed: u64) -> Result<RunOutput> {
    let sc = solver_config(cfg, p, seed);
    let clock = StdClock::new();
    let mut hooks = Hooks {
        clock: &clock,
        ..Hooks::default()
    };
    let (x, trace, iterations) = match v.solver {
        SolverName::Obsvt1 | SolverName::Obsvt2 | SolverName::Obsvt1Noisy | SolverName::RandObsvt => {
            let rule = match v.solver {
                SolverName::Obsvt1 => MultiplierRule::Projected,
                SolverName::Obsvt2 => MultiplierRule::Accumulated,
                SolverName::Obsvt1Noisy => MultiplierRule::NoiseGated {
                    sigma_z: sigma_z_default(p, cfg.noise_std().unwrap_or(0.0), cfg.solver.sigma_factor)?,
                },
                _ => {
                    let beta = v.sketch_ratio.context("sketched solver without a ratio")?;
                    sketch_rule(p.m_prime(), beta)
                }
            };
            let out = run(p, &sc, rule, &mut hooks)?;
            let it = out.trace.iterations();
            (out.x, out.trace, it)
        }
        SolverName::Bregman => {
            let out = bregman_adaptive(p, &sc, cfg.solver.bregman_epsilon, cfg.solver.bregman_outer_max)?;
            let it = out.inner_traces.iter().map(|t| t.iterations()).sum();
            let trace = out.inner_traces.last().cloned().context("no inner solve")?;
            (out.x, trace, it)
        }
        SolverName::Mle => {
            let noise = NoiseModel::Gaussian {
                std: cfg.mle_noise_std(),
            };
            let (x, trace) = mle_baseline_with(p, noise, &mle_config(cfg, p), &mut hooks)?;
            let it = trace.iterations();
            (x, trace, it)
        }
    };
    Ok(RunOutput {
        x,
        trace,
        iterations,
        elapsed_secs: clock.now(),
    })
}

/// Gaussian sketch of size `round(beta m')`; a ratio that rounds to `m'`
/// uses the identity sketch instead.
pub fn sketch_rule(m_prime: usize, beta: f64) -> MultiplierRule {
    let s = ((beta * m_prime as f64).round() as usize).clamp(1, m_prime);
    if s >= m_prime {
        MultiplierRule::Sketched {
            s: m_prime,
            kind: SketchKind::Identity,
        }
    } else {
        MultiplierRule::Sketched {
            s,
            kind: SketchKind::Gaussian,
        }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub experiment: String,
    pub grid: usize,
    pub rep: usize,
    pub seed: u64,
    pub solver: String,
    pub sketch_ratio: Option<f64>,
    pub fraction: f64,
    pub m: usize,
    pub dither: String,
    pub noise: String,
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub m_prime: usize,
    pub theta: f64,
    pub delta: f64,
    pub iterations: Option<usize>,
    pub stop: Option<String>,
    pub rel_error: Option<f64>,
    pub hamming: Option<f64>,
    pub consistent: Option<bool>,
    pub step_bound_exceeded: Option<bool>,
    /// `exact` for noiseless uniform-dither runs; `indicative` otherwise.
    pub bound_regime: String,
    pub bound_alpha: f64,
    pub bound_epsilon: Option<f64>,
    pub fro_error: Option<f64>,
    pub fro_bound: Option<f64>,
    pub hamming_bound: Option<f64>,
    pub samples_ok: Option<bool>,
    pub noise_admissible: Option<bool>,
    pub error: String,
    pub sigma_z_rule: String,
    pub dr_rule: String,
    pub tie_rule: String,
}

/// Wall-clock of a run; kept out of `results.csv` so that file is
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TimingRow {
    pub config_hash: String,
    pub grid: usize,
    pub rep: usize,
    pub solver: String,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

impl ExperimentOutput {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.error.is_empty()).count()
    }
}

/// Failure probability used for the recovery bounds on every row.
pub const BOUND_FAILURE_PROB: f64 = 0.05;

fn evaluate(
    cfg: &ExperimentConfig,
    hash: &str,
    g: &GridPoint,
    rep: usize,
    v: Variant,
    inst: &Result<Instance>,
) -> (ResultRow, TimingRow) {
    let seed = instance_seed(cfg, g, rep);
    let mut row = ResultRow {
        config_hash: hash.to_string(),
        experiment: cfg.name.clone(),
        grid: g.index,
        rep,
        seed,
        solver: v.solver.to_string(),
        sketch_ratio: v.sketch_ratio,
        fraction: g.fraction,
        m: g.m,
        dither: g.dither.to_string(),
        noise: cfg.noise.to_string(),
        n1: cfg.matrix.n1,
        n2: cfg.matrix.n2,
        rank: cfg.matrix.rank,
        m_prime: 0,
        theta: 0.0,
        delta: 0.0,
        iterations: None,
        stop: None,
        rel_error: None,
        hamming: None,
        consistent: None,
        step_bound_exceeded: None,
        bound_regime: String::new(),
        bound_alpha: 0.0,
        bound_epsilon: None,
        fro_error: None,
        fro_bound: None,
        hamming_bound: None,
        samples_ok: None,
        noise_admissible: None,
        error: String::new(),
        sigma_z_rule: SIGMA_Z_RULE.into(),
        dr_rule: DR_RULE.into(),
        tie_rule: TIE_RULE.into(),
    };
    let mut timing = TimingRow {
        config_hash: hash.to_string(),
        grid: g.index,
        rep,
        solver: v.label(),
        elapsed_secs: f64::NAN,
    };
    let inst = match inst {
        Ok(i) => i,
        Err(e) => {
            row.error = format!("instance: {e:#}");
            return (row, timing);
        }
    };
    let p = &inst.problem;
    let sc = solver_config(cfg, p, seed);
    row.m_prime = p.m_prime();
    row.theta = sc.theta;
    row.delta = sc.delta;
    row.bound_alpha = inst.dynamic_range;
    row.bound_regime = if matches!(g.dither.0, DitherFamily::Uniform) && cfg.noise == NoiseConfig::None {
        "exact".into()
    } else {
        "indicative".into()
    };
    match solve(cfg, p, v, seed).and_then(|out| {
        let fill = |row: &mut ResultRow| -> Result<()> {
            row.iterations = Some(out.iterations);
            row.stop = Some(stop_label(out.trace.stop).into());
            row.step_bound_exceeded = Some(out.trace.step_bound_exceeded);
            row.rel_error = Some(relative_error(&out.x, &inst.x_true)?);
            row.fro_error = Some(out.x.sub(&inst.x_true)?.frobenius_norm());
            let (ok, h) = consistency_check(&out.x, p)?;
            row.consistent = Some(ok);
            row.hamming = Some(h);
            let inp = BoundInputs {
                n1: cfg.matrix.n1,
                n2: cfg.matrix.n2,
                rank: cfg.matrix.rank,
                alpha: inst.dynamic_range,
                m: p.m(),
                m_prime: p.m_prime(),
                failure_prob: BOUND_FAILURE_PROB,
            };
            let b = recovery_bound(&inp)?;
            row.bound_epsilon = Some(b.epsilon);
            row.fro_bound = Some(b.fro_bound);
            row.samples_ok = Some(b.samples_ok);
            row.hamming_bound = Some(recovery_bound_with_hamming(&inp, h)?);
            if let Some(z) = &inst.z {
                row.noise_admissible = Some(noise_admissible(z, &out.x, &inst.x_true)?);
            }
            Ok(())
        };
        fill(&mut row)?;
        Ok(out.elapsed_secs)
    }) {
        Ok(t) => timing.elapsed_secs = t,
        Err(e) => row.error = format!("{e:#}"),
    }
    (row, timing)
}

/// Run the whole grid. Runs execute in parallel; rows come back in grid,
/// repetition, solver order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let points = grid(cfg);
    let vars = variants(cfg);
    let jobs: Vec<(usize, usize)> = points
        .iter()
        .flat_map(|g| (0..cfg.repetitions).map(move |rep| (g.index, rep)))
        .collect();
    let mut results: Vec<(usize, usize, Vec<(ResultRow, TimingRow)>)> = jobs
        .par_iter()
        .map(|&(gi, rep)| {
            let g = &points[gi];
            let spec = instance_spec(cfg, g.fraction, g.m, g.dither.0);
            let inst = make_instance(&spec, instance_seed(cfg, g, rep)).map_err(anyhow::Error::from);
            let rows = vars
                .par_iter()
                .map(|&v| evaluate(cfg, &hash, g, rep, v, &inst))
                .collect();
            (gi, rep, rows)
        })
        .collect();
    results.sort_by_key(|(g, r, _)| (*g, *r));
    let (rows, timings) = results.into_iter().flat_map(|(_, _, r)| r).unzip();
    Ok(ExperimentOutput { rows, timings })
}

/// Write `results.csv` and `timing.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("results.csv"))?));
    for r in &out.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("timing.csv"))?));
    for r in &out.timings {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| Ok(row?)).collect()
}
