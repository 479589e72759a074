//! File formats: matrices (CSV and raw binary), masks, sign and dither
//! stacks, problem directories and solver traces.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! text file reads back bit-exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use onebit_core::analysis::ViolationReport;
use onebit_core::solvers::{IterationRecord, ReferenceDistances, SolverTrace, StopReason};
use onebit_core::{DenseMatrix, DitherScheme, DitherStack, ObservationMask, OneBitProblem, SensingRegime, SignStack};

use crate::config::SolverName;

/// One matrix row per line, comma separated.
pub fn write_matrix_csv(path: &Path, x: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for i in 0..x.rows() {
        let row = &x.as_slice()[i * x.cols()..(i + 1) * x.cols()];
        write_joined(&mut w, row.iter())?;
    }
    w.flush()?;
    Ok(())
}

fn write_joined<W: Write, T: std::fmt::Display>(w: &mut W, items: impl Iterator<Item = T>) -> Result<()> {
    let mut first = true;
    for v in items {
        if !first {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")?;
    Ok(())
}

fn read_rows<T: std::str::FromStr>(path: &Path) -> Result<Vec<Vec<T>>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<T>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}", path.display(), n + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = read_rows(path)?;
    ensure!(!rows.is_empty(), "{} is empty", path.display());
    let cols = rows[0].len();
    ensure!(rows.iter().all(|r| r.len() == cols), "{}: ragged rows", path.display());
    let n = rows.len();
    Ok(DenseMatrix::from_row_major(n, cols, rows.into_iter().flatten().collect())?)
}

/// Header of two little-endian `u32` (rows, cols), then row-major `f64` LE.
pub fn write_matrix_bin(path: &Path, x: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let rows = u32::try_from(x.rows()).context("too many rows")?;
    let cols = u32::try_from(x.cols()).context("too many columns")?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in x.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<DenseMatrix> {
    let mut buf = Vec::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut buf)?;
    ensure!(buf.len() >= 8, "{}: truncated header", path.display());
    let rows = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let body = &buf[8..];
    ensure!(
        body.len() == rows * cols * 8,
        "{}: expected {} values, found {} bytes",
        path.display(),
        rows * cols,
        body.len()
    );
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::from_row_major(rows, cols, values)?)
}

/// `i,j` per observed cell, after a `# n1,n2` header line.
pub fn write_mask_csv(path: &Path, mask: &ObservationMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (n1, n2) = mask.dims();
    writeln!(w, "# {n1},{n2}")?;
    for &(i, j) in mask.positions() {
        writeln!(w, "{i},{j}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask_csv(path: &Path) -> Result<ObservationMask> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .context("mask file lacks the '# n1,n2' header")?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .context("bad mask header")?;
    ensure!(dims.len() == 2, "bad mask header {header:?}");
    let rows: Vec<Vec<usize>> = read_rows(path)?;
    let positions = rows
        .into_iter()
        .map(|r| match r[..] {
            [i, j] => Ok((i, j)),
            _ => bail!("mask rows need two entries"),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationMask::new((dims[0], dims[1]), positions)?)
}

/// Metadata of a problem directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemMeta {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub m_prime: usize,
    pub noisy: bool,
    pub dither: SchemeMeta,
    /// Stored as a decimal string: TOML integers are signed 64-bit.
    #[serde(with = "u64_str")]
    pub dither_seed: u64,
    #[serde(default)]
    pub noise_std: Option<f64>,
}

mod u64_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SchemeMeta {
    Uniform { amplitude: f64 },
    Gaussian { mean: f64, variance: f64 },
    Discrete { levels: u32, peak_to_peak: f64 },
    Adaptive,
}

impl From<DitherScheme> for SchemeMeta {
    fn from(s: DitherScheme) -> Self {
        match s {
            DitherScheme::Uniform { amplitude } => Self::Uniform { amplitude },
            DitherScheme::Gaussian { mean, variance } => Self::Gaussian { mean, variance },
            DitherScheme::Discrete { levels, peak_to_peak } => Self::Discrete { levels, peak_to_peak },
            DitherScheme::Adaptive => Self::Adaptive,
        }
    }
}

impl From<SchemeMeta> for DitherScheme {
    fn from(s: SchemeMeta) -> Self {
        match s {
            SchemeMeta::Uniform { amplitude } => Self::Uniform { amplitude },
            SchemeMeta::Gaussian { mean, variance } => Self::Gaussian { mean, variance },
            SchemeMeta::Discrete { levels, peak_to_peak } => Self::Discrete { levels, peak_to_peak },
            SchemeMeta::Adaptive => Self::Adaptive,
        }
    }
}

/// A problem with whatever ground truth is available.
#[derive(Debug, Clone)]
pub struct ProblemFiles {
    pub problem: OneBitProblem,
    pub meta: ProblemMeta,
    pub x_true: Option<DenseMatrix>,
    pub z: Option<DenseMatrix>,
}

/// Write `problem.toml`, `mask.csv`, `signs.csv` and `dithers.csv` (one
/// sequence per line), plus `x_true.{csv,bin}` and `z.csv` when given.
pub fn write_problem_dir(
    dir: &Path,
    p: &OneBitProblem,
    x_true: Option<&DenseMatrix>,
    z: Option<&DenseMatrix>,
    noise_std: Option<f64>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (n1, n2) = p.dims();
    let meta = ProblemMeta {
        n1,
        n2,
        m: p.m(),
        m_prime: p.m_prime(),
        noisy: p.regime() == SensingRegime::Noisy,
        dither: p.dithers().scheme().into(),
        dither_seed: p.dithers().seed(),
        noise_std,
    };
    fs::write(dir.join("problem.toml"), toml::to_string(&meta)?)?;
    write_mask_csv(&dir.join("mask.csv"), p.mask())?;
    let mp = p.m_prime();
    let mut w = BufWriter::new(File::create(dir.join("signs.csv"))?);
    for row in p.signs().as_slice().chunks(mp) {
        write_joined(&mut w, row.iter())?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("dithers.csv"))?);
    for row in p.dithers().as_slice().chunks(mp) {
        write_joined(&mut w, row.iter())?;
    }
    w.flush()?;
    if let Some(x) = x_true {
        write_matrix_csv(&dir.join("x_true.csv"), x)?;
        write_matrix_bin(&dir.join("x_true.bin"), x)?;
    }
    if let Some(z) = z {
        write_matrix_csv(&dir.join("z.csv"), z)?;
    }
    Ok(())
}

pub fn read_problem_dir(dir: &Path) -> Result<ProblemFiles> {
    let meta_path = dir.join("problem.toml");
    let meta: ProblemMeta = toml::from_str(
        &fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    let mask = read_mask_csv(&dir.join("mask.csv"))?;
    ensure!(mask.dims() == (meta.n1, meta.n2), "mask dims disagree with problem.toml");
    let signs: Vec<Vec<i8>> = read_rows(&dir.join("signs.csv"))?;
    let dithers: Vec<Vec<f64>> = read_rows(&dir.join("dithers.csv"))?;
    ensure!(signs.len() == meta.m && dithers.len() == meta.m, "expected {} sequences", meta.m);
    let signs = SignStack::new(meta.m, meta.m_prime, signs.into_iter().flatten().collect())?;
    let dithers = DitherStack::new(
        meta.m,
        meta.m_prime,
        dithers.into_iter().flatten().collect(),
        meta.dither.into(),
        meta.dither_seed,
    )?;
    let regime = if meta.noisy {
        SensingRegime::Noisy
    } else {
        SensingRegime::Noiseless
    };
    let problem = OneBitProblem::new(mask, signs, dithers)?.with_regime(regime);
    let bin = dir.join("x_true.bin");
    let x_true = if bin.exists() {
        Some(read_matrix_bin(&bin)?)
    } else {
        None
    };
    let zp = dir.join("z.csv");
    let z = if zp.exists() { Some(read_matrix_csv(&zp)?) } else { None };
    Ok(ProblemFiles {
        problem,
        meta,
        x_true,
        z,
    })
}

pub const TRACE_COLUMNS: [&str; 11] = [
    "iteration",
    "rel_change",
    "residual_norm",
    "residual_inf",
    "multiplier_norm",
    "rank",
    "elapsed_secs",
    "block",
    "y_prev_sq",
    "y_sq",
    "x_sq",
];

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::RelativeChange => "rel_change",
        StopReason::Feasible => "feasible",
        StopReason::MaxIters => "max_iters",
        StopReason::Observer => "observer",
    }
}

pub fn parse_stop(s: &str) -> Result<StopReason> {
    Ok(match s {
        "rel_change" => StopReason::RelativeChange,
        "feasible" => StopReason::Feasible,
        "max_iters" => StopReason::MaxIters,
        "observer" => StopReason::Observer,
        _ => bail!("unknown stop reason {s:?}"),
    })
}

pub fn stop_label(s: StopReason) -> &'static str {
    stop_name(s)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Trace CSV: `# key=value` header lines for the run-level fields, then one
/// row per iteration with [`TRACE_COLUMNS`]. Empty cells mean "not recorded".
pub fn write_trace_csv(path: &Path, trace: &SolverTrace) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(f, "# solver={}", trace.solver)?;
    writeln!(f, "# stop={}", stop_name(trace.stop))?;
    writeln!(f, "# delta={}", trace.delta)?;
    writeln!(f, "# m={}", trace.m)?;
    writeln!(f, "# step_bound_exceeded={}", trace.step_bound_exceeded)?;
    writeln!(f, "# final_hamming={}", trace.final_hamming)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        let refd = r.reference;
        w.write_record([
            r.iteration.to_string(),
            r.rel_change.to_string(),
            r.residual_norm.to_string(),
            r.residual_inf.to_string(),
            r.multiplier_norm.to_string(),
            r.rank.to_string(),
            r.elapsed_secs.to_string(),
            opt(r.block),
            opt(refd.map(|d| d.y_prev_sq)),
            opt(refd.map(|d| d.y_sq)),
            opt(refd.map(|d| d.x_sq)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<SolverTrace> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut meta = std::collections::BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line[1..].trim().split_once('=') {
            meta.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| meta.get(k).with_context(|| format!("trace header lacks {k}"));
    let solver: SolverName = get("solver")?.parse()?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    ensure!(
        header.iter().eq(TRACE_COLUMNS.iter().copied()),
        "unexpected trace columns {header:?}"
    );
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> { Ok(rec[i].parse()?) };
        let of = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                Ok(Some(rec[i].parse()?))
            }
        };
        let reference = match (of(8)?, of(9)?, of(10)?) {
            (Some(y_prev_sq), Some(y_sq), Some(x_sq)) => Some(ReferenceDistances { y_prev_sq, y_sq, x_sq }),
            (None, None, None) => None,
            _ => bail!("partially recorded reference distances"),
        };
        records.push(IterationRecord {
            iteration: rec[0].parse()?,
            rel_change: f(1)?,
            residual_norm: f(2)?,
            residual_inf: f(3)?,
            multiplier_norm: f(4)?,
            rank: rec[5].parse()?,
            elapsed_secs: f(6)?,
            block: if rec[7].is_empty() { None } else { Some(rec[7].parse()?) },
            reference,
        });
    }
    Ok(SolverTrace {
        solver: solver.as_str(),
        records,
        stop: parse_stop(get("stop")?)?,
        delta: get("delta")?.parse()?,
        m: get("m")?.parse()?,
        step_bound_exceeded: get("step_bound_exceeded")?.parse()?,
        final_hamming: get("final_hamming")?.parse()?,
    })
}

/// One row per checked iteration.
pub fn write_violation_csv(path: &Path, report: &ViolationReport) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# inequality={}", report.inequality.name())?;
    writeln!(f, "# solver={}", report.solver)?;
    writeln!(f, "# {}", report.reference_note)?;
    writeln!(f, "# step_bound_exceeded={}", report.step_bound_exceeded)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["iteration", "lhs", "rhs", "slack", "violated"])?;
    for r in &report.rows {
        w.write_record([
            r.iteration.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.slack.to_string(),
            r.violated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
