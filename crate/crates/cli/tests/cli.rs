use std::fs;
use std::path::Path;
use std::process::Command;

use onebit_cli::formats::{read_problem_dir, read_trace_csv};
use onebit_cli::plots::{emit_plots, read_summary, summarize};
use onebit_cli::experiment::read_results;

const SMALL: &str = r#"
name = "small"
seed = 17
repetitions = 2

[matrix]
n1 = 12
n2 = 10
rank = 2

[sweep]
fractions = [0.4, 0.8]
m = [1, 2]
sketch_ratios = [0.5]

[solver]
solvers = ["obsvt1", "obsvt2", "rand-obsvt"]
alpha = 0.5
delta = 0.5
max_iters = 60
"#;

fn onebit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_onebit")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn experiment_output_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = onebit(&["experiment", "--config", &cfg, "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("results.csv")).unwrap());
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());
    let rows = read_results(&a.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2 * 3);
    assert!(rows.iter().all(|r| r.error.is_empty() && r.rel_error.is_some()));

    let c = dir.path().join("c");
    assert!(onebit(&["experiment", "--config", &cfg, "--seed", "18", "--out", s(&c)]).status.success());
    assert_ne!(ra, fs::read(c.join("results.csv")).unwrap());
}

#[test]
fn exit_codes_separate_config_errors_from_run_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &SMALL.replace("rank = 2", "rank = 2\nbogus = 1"));
    assert_eq!(onebit(&["experiment", "--config", &bad, "--out", s(dir.path())]).status.code(), Some(1));
    let missing = dir.path().join("nope.toml");
    assert_eq!(onebit(&["experiment", "--config", s(&missing), "--out", s(dir.path())]).status.code(), Some(1));

    // a step far outside the stable range makes the projected update diverge
    let diverging = SMALL.replace("delta = 0.5", "delta = 1e9").replace("max_iters = 60", "max_iters = 200");
    let cfg = write(dir.path(), "div.toml", &diverging);
    let out = dir.path().join("div");
    let o = onebit(&["experiment", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert!(rows.iter().any(|r| !r.error.is_empty()));
}

#[test]
fn simulate_solve_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let probs = dir.path().join("p");
    let o = onebit(&["simulate", "--config", &cfg, "--out", s(&probs)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = probs.join("g0_r0");
    let files = read_problem_dir(&first).unwrap();
    assert!(files.x_true.is_some());

    let sol = dir.path().join("s");
    let o = onebit(&["solve", "--problem", s(&first), "--solver", "obsvt2", "--config", &cfg, "--monitor", "--out", s(&sol)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read_trace_csv(&sol.join("trace.csv")).unwrap();
    assert!(trace.records.iter().all(|r| r.reference.is_some()));

    let chk = dir.path().join("c");
    let o = onebit(&["check", "--trace", s(&sol.join("trace.csv")), "--out", s(&chk)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(chk.join("violations_accumulated-descent.csv").exists());

    let o = onebit(&["solve", "--problem", s(&first), "--solver", "mle", "--monitor", "--out", s(&sol)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn summary_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("e");
    assert!(onebit(&["experiment", "--config", &cfg, "--out", s(&out)]).status.success());
    let rows = read_results(&out.join("results.csv")).unwrap();
    let plot_dir = dir.path().join("plots");
    fs::create_dir_all(&plot_dir).unwrap();
    let files = emit_plots(&rows, &plot_dir, "small").unwrap();
    assert!(files.iter().any(|f| f.extension().is_some_and(|e| e == "svg")));
    let back = read_summary(&plot_dir.join("summary.csv")).unwrap();
    assert_eq!(back, summarize(&rows));
}
