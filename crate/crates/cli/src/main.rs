use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use onebit_cli::bench::bench;
use onebit_cli::config::{ExperimentConfig, SolverName};
use onebit_cli::experiment::{
    grid, instance_seed, instance_spec, run_experiment, solve, write_outputs, Variant,
};
use onebit_cli::formats::{
    read_problem_dir, read_trace_csv, write_matrix_bin, write_matrix_csv, write_problem_dir,
    write_trace_csv, write_violation_csv,
};
use onebit_cli::plots::emit_plots;
use onebit_core::analysis::{convergence_monitor, relative_error, MonitorInequality};
use onebit_core::instance::make_instance;
use onebit_core::solvers::{run, Hooks, MultiplierRule, Reference};

#[derive(Parser)]
#[command(name = "onebit", version, about = "One-bit matrix completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample instances from a config and dump them as problem directories.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one solver on a problem directory.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        solver: SolverName,
        /// Take solver parameters from this config instead of the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also run a tight-tolerance reference and record distances to it
        /// in the trace, for `check`.
        #[arg(long)]
        monitor: bool,
    },
    /// Run a full experiment grid.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time OB-SVT-II and the likelihood baseline to an error target.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the convergence inequalities on a trace recorded with --monitor.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Errors before any run starts are configuration errors (exit 1).
struct ConfigError(anyhow::Error);

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(config).map_err(ConfigError)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Run(e)
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, Failure> {
    match cmd {
        Command::Simulate { config, seed, out } => {
            let cfg = load(&config, seed)?;
            simulate(&cfg, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve {
            problem,
            solver,
            config,
            seed,
            out,
            monitor,
        } => {
            let files = read_problem_dir(&problem).map_err(Failure::Config)?;
            let (n1, n2) = files.problem.dims();
            let mut cfg = match &config {
                Some(c) => load(c, seed)?,
                None => ExperimentConfig::for_problem(n1, n2, solver, files.meta.noise_std, seed.unwrap_or(0)),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            solve_cmd(&cfg, &files, solver, &out, monitor)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let res = run_experiment(&cfg)?;
            write_outputs(&dir, &res)?;
            if res.rows.iter().any(|r| r.error.is_empty()) {
                emit_plots(&res.rows, &dir, &cfg.name)?;
            }
            let failed = res.failures();
            println!(
                "{} runs, {} failed; results in {}",
                res.rows.len(),
                failed,
                dir.display()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Bench { config, seed, out } => {
            let cfg = load(&config, seed)?;
            if cfg.bench.is_none() {
                return Err(Failure::Config(anyhow::anyhow!("config has no [bench] section")));
            }
            let (rows, summary) = bench(&cfg)?;
            fs::create_dir_all(&out).context("creating output directory")?;
            let mut w = csv::Writer::from_path(out.join("bench.csv")).context("bench.csv")?;
            for r in &rows {
                w.serialize(r).context("bench.csv")?;
            }
            w.flush().context("bench.csv")?;
            let mut w = csv::Writer::from_path(out.join("bench_summary.csv")).context("bench_summary.csv")?;
            for s in &summary {
                w.serialize(s).context("bench_summary.csv")?;
                println!(
                    "n={:<5} obsvt2 {:>10} s  mle {:>10} s  ratio {}",
                    s.n,
                    fmt_opt(s.obsvt2_median_secs),
                    fmt_opt(s.mle_median_secs),
                    fmt_opt(s.ratio)
                );
            }
            w.flush().context("bench_summary.csv")?;
            let unreached = rows.iter().filter(|r| !r.reached).count();
            Ok(if unreached == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Check { trace, out } => {
            let t = read_trace_csv(&trace).map_err(Failure::Config)?;
            let dir = out.unwrap_or_else(|| trace.parent().unwrap_or(Path::new(".")).to_path_buf());
            fs::create_dir_all(&dir).context("creating output directory")?;
            let mut total = 0;
            for ineq in [
                MonitorInequality::ProjectedDescent,
                MonitorInequality::AccumulatedDescent,
                MonitorInequality::PrimalBridge,
            ] {
                let Ok(report) = convergence_monitor(&t, ineq) else {
                    continue;
                };
                let path = dir.join(format!("violations_{}.csv", ineq.name()));
                write_violation_csv(&path, &report)?;
                let n = report.violation_count();
                total += n;
                println!("{}: {n} violations over {} iterations", ineq.name(), report.rows.len());
            }
            if t.step_bound_exceeded {
                println!("note: step size outside the projected update's convergence region");
            }
            Ok(if total == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "unreached".into())
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    for g in grid(cfg) {
        for rep in 0..cfg.repetitions {
            let inst = make_instance(&instance_spec(cfg, g.fraction, g.m, g.dither.0), instance_seed(cfg, &g, rep))?;
            let dir = out.join(format!("g{}_r{}", g.index, rep));
            write_problem_dir(&dir, &inst.problem, Some(&inst.x_true), inst.z.as_ref(), cfg.noise_std())?;
        }
    }
    println!("wrote problems under {}", out.display());
    Ok(())
}

fn solve_cmd(
    cfg: &ExperimentConfig,
    files: &onebit_cli::formats::ProblemFiles,
    solver: SolverName,
    out: &Path,
    monitor: bool,
) -> Result<()> {
    let p = &files.problem;
    fs::create_dir_all(out)?;
    let variant = Variant {
        solver,
        sketch_ratio: (solver == SolverName::RandObsvt).then(|| cfg.sweep.sketch_ratios.first().copied().unwrap_or(0.5)),
    };
    let (x, trace) = if monitor {
        let rule = match solver {
            SolverName::Obsvt1 => MultiplierRule::Projected,
            SolverName::Obsvt2 => MultiplierRule::Accumulated,
            _ => bail!("--monitor supports obsvt1 and obsvt2"),
        };
        let sc = onebit_cli::experiment::solver_config(cfg, p, cfg.seed);
        let tight = sc.clone().with_tol(1e-10).with_max_iters(sc.max_iters * 10);
        let r = run(p, &tight, rule.clone(), &mut Hooks::default())?;
        let reference = Reference { x: r.x, y: r.y };
        let clock = onebit_cli::clock::StdClock::new();
        let mut hooks = Hooks {
            clock: &clock,
            reference: Some(&reference),
            ..Hooks::default()
        };
        let o = run(p, &sc, rule, &mut hooks)?;
        (o.x, o.trace)
    } else {
        let o = solve(cfg, p, variant, cfg.seed)?;
        (o.x, o.trace)
    };
    write_matrix_csv(&out.join("x_hat.csv"), &x)?;
    write_matrix_bin(&out.join("x_hat.bin"), &x)?;
    write_trace_csv(&out.join("trace.csv"), &trace)?;
    print!(
        "{}: {} iterations, stop {:?}, hamming {}",
        trace.solver,
        trace.iterations(),
        trace.stop,
        trace.final_hamming
    );
    if let Some(xt) = &files.x_true {
        print!(", relative error {}", relative_error(&x, xt)?);
    }
    println!();
    Ok(())
}
