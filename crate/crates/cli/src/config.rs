//! Experiment configuration, read from TOML. Unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use onebit_core::instance::{DitherFamily, FactorLaw, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub matrix: MatrixConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub bench: Option<BenchSection>,
}

/// Time-to-target benchmark of OB-SVT-II against the likelihood baseline.
/// Uses the rank, factor law, first fraction, first dither and noise of the
/// surrounding config; `n1 = n2 = n` for each listed size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    /// Normalized squared error `|X - X_hat|^2 / |X|^2` to reach.
    #[serde(default = "default_nmse_target")]
    pub nmse_target: f64,
    /// Wall-clock budget per run; slower runs are marked unreached.
    #[serde(default = "default_budget")]
    pub budget_secs: f64,
}

fn default_nmse_target() -> f64 {
    0.8
}

fn default_budget() -> f64 {
    120.0
}

fn default_repetitions() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    #[serde(default)]
    pub factors: Factors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factors {
    #[default]
    Gaussian,
    Uniform01,
}

impl From<Factors> for FactorLaw {
    fn from(f: Factors) -> Self {
        match f {
            Factors::Gaussian => FactorLaw::Gaussian,
            Factors::Uniform01 => FactorLaw::Uniform01,
        }
    }
}

/// Swept quantities. Every combination of `fractions x m x dithers` is one
/// instance; all solvers run on the same instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
    #[serde(default = "default_dithers")]
    pub dithers: Vec<DitherName>,
    /// Sketch ratios `s / m'` for the randomized solver. A ratio of 1.0 uses
    /// the identity sketch.
    #[serde(default)]
    pub sketch_ratios: Vec<f64>,
}

fn default_m() -> Vec<usize> {
    vec![1]
}

fn default_dithers() -> Vec<DitherName> {
    vec![DitherName(DitherFamily::Gaussian)]
}

/// `gaussian`, `uniform` or `discrete-M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DitherName(pub DitherFamily);

impl FromStr for DitherName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let fam = match s {
            "gaussian" => DitherFamily::Gaussian,
            "uniform" => DitherFamily::Uniform,
            _ => match s.strip_prefix("discrete-") {
                Some(m) => DitherFamily::Discrete {
                    levels: m.parse().with_context(|| format!("bad level count in {s:?}"))?,
                },
                None => bail!("unknown dither {s:?}; expected gaussian, uniform or discrete-M"),
            },
        };
        Ok(Self(fam))
    }
}

impl TryFrom<String> for DitherName {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DitherName> for String {
    fn from(d: DitherName) -> Self {
        d.to_string()
    }
}

impl fmt::Display for DitherName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            DitherFamily::Gaussian => f.write_str("gaussian"),
            DitherFamily::Uniform => f.write_str("uniform"),
            DitherFamily::Discrete { levels } => write!(f, "discrete-{levels}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Gaussian {
        std: f64,
    },
    Poisson {
        lambda: f64,
    },
}

impl From<NoiseConfig> for NoiseSpec {
    fn from(n: NoiseConfig) -> Self {
        match n {
            NoiseConfig::None => NoiseSpec::None,
            NoiseConfig::Gaussian { std } => NoiseSpec::Gaussian { std },
            NoiseConfig::Poisson { lambda } => NoiseSpec::Poisson { lambda },
        }
    }
}

impl fmt::Display for NoiseConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::Gaussian { std } => write!(f, "gaussian({std})"),
            Self::Poisson { lambda } => write!(f, "poisson({lambda})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverName {
    #[serde(rename = "obsvt1")]
    Obsvt1,
    #[serde(rename = "obsvt1-noisy")]
    Obsvt1Noisy,
    #[serde(rename = "obsvt2")]
    Obsvt2,
    #[serde(rename = "rand-obsvt")]
    RandObsvt,
    #[serde(rename = "bregman")]
    Bregman,
    #[serde(rename = "mle")]
    Mle,
}

impl SolverName {
    pub const ALL: [Self; 6] = [
        Self::Obsvt1,
        Self::Obsvt1Noisy,
        Self::Obsvt2,
        Self::RandObsvt,
        Self::Bregman,
        Self::Mle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Obsvt1 => "obsvt1",
            Self::Obsvt1Noisy => "obsvt1-noisy",
            Self::Obsvt2 => "obsvt2",
            Self::RandObsvt => "rand-obsvt",
            Self::Bregman => "bregman",
            Self::Mle => "mle",
        }
    }
}

impl FromStr for SolverName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .with_context(|| format!("unknown solver {s:?}"))
    }
}

impl fmt::Display for SolverName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub solvers: Vec<SolverName>,
    /// `theta = alpha sqrt(n1 n2)`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Overrides `delta = 1.2 n1 n2 / m'`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// `sigma_z = factor * noise std` for the noise-gated solver.
    #[serde(default = "default_sigma_factor")]
    pub sigma_factor: f64,
    /// Multiplies the default likelihood penalty `2 sqrt(m' / min(n1, n2))`.
    #[serde(default = "default_one")]
    pub mle_lambda_scale: f64,
    /// Noise level assumed by the likelihood; defaults to the gaussian
    /// noise std of the config, or 1.
    #[serde(default)]
    pub mle_noise_std: Option<f64>,
    #[serde(default = "default_mle_max_iters")]
    pub mle_max_iters: usize,
    #[serde(default = "default_bregman_epsilon")]
    pub bregman_epsilon: f64,
    #[serde(default = "default_bregman_outer")]
    pub bregman_outer_max: usize,
}

fn default_alpha() -> f64 {
    5.0
}
fn default_max_iters() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-4
}
fn default_sigma_factor() -> f64 {
    3.0
}
fn default_one() -> f64 {
    1.0
}
fn default_mle_max_iters() -> usize {
    500
}
fn default_bregman_epsilon() -> f64 {
    1e-3
}
fn default_bregman_outer() -> usize {
    5
}

impl SolverSection {
    /// Defaults for every field, running `solvers`.
    pub fn with_solvers(solvers: Vec<SolverName>) -> Self {
        Self {
            solvers,
            alpha: default_alpha(),
            delta: None,
            max_iters: default_max_iters(),
            tol: default_tol(),
            sigma_factor: default_sigma_factor(),
            mle_lambda_scale: default_one(),
            mle_noise_std: None,
            mle_max_iters: default_mle_max_iters(),
            bregman_epsilon: default_bregman_epsilon(),
            bregman_outer_max: default_bregman_outer(),
        }
    }
}

impl ExperimentConfig {
    /// Minimal config for solving a stored problem with default parameters.
    pub fn for_problem(n1: usize, n2: usize, solver: SolverName, noise_std: Option<f64>, seed: u64) -> Self {
        Self {
            name: "solve".into(),
            seed,
            repetitions: 1,
            output: None,
            matrix: MatrixConfig {
                n1,
                n2,
                rank: 1,
                factors: Factors::Gaussian,
            },
            sweep: SweepConfig {
                fractions: vec![1.0],
                m: default_m(),
                dithers: default_dithers(),
                sketch_ratios: vec![0.5],
            },
            noise: match noise_std {
                Some(std) => NoiseConfig::Gaussian { std },
                None => NoiseConfig::None,
            },
            solver: SolverSection::with_solvers(vec![solver]),
            bench: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if m.n1 == 0 || m.n2 == 0 || m.rank == 0 {
            bail!("matrix dimensions and rank must be positive");
        }
        if m.rank > m.n1.min(m.n2) {
            bail!("rank {} exceeds min(n1, n2)", m.rank);
        }
        if self.repetitions == 0 {
            bail!("repetitions must be >= 1");
        }
        if self.sweep.fractions.is_empty() || self.sweep.m.is_empty() || self.sweep.dithers.is_empty() {
            bail!("fractions, m and dithers must be non-empty");
        }
        for &f in &self.sweep.fractions {
            if !(f > 0.0 && f <= 1.0) {
                bail!("fraction {f} outside (0, 1]");
            }
            if (f * (m.n1 * m.n2) as f64).round() < 2.0 {
                bail!("fraction {f} observes fewer than two cells");
            }
        }
        if self.sweep.m.contains(&0) {
            bail!("m must be >= 1");
        }
        for &b in &self.sweep.sketch_ratios {
            if !(b > 0.0 && b <= 1.0) {
                bail!("sketch ratio {b} outside (0, 1]");
            }
        }
        let s = &self.solver;
        if s.solvers.is_empty() {
            bail!("no solvers selected");
        }
        if s.solvers.contains(&SolverName::RandObsvt) && self.sweep.sketch_ratios.is_empty() {
            bail!("rand-obsvt needs sweep.sketch_ratios");
        }
        if !(s.alpha >= 0.0) || !(s.tol > 0.0) || s.max_iters == 0 || s.mle_max_iters == 0 {
            bail!("invalid solver parameters");
        }
        if let Some(d) = s.delta {
            if !(d > 0.0) {
                bail!("delta must be > 0");
            }
        }
        if !(s.sigma_factor >= 0.0) || !(s.mle_lambda_scale >= 0.0) {
            bail!("sigma_factor and mle_lambda_scale must be >= 0");
        }
        if !(s.bregman_epsilon > 0.0) || s.bregman_outer_max == 0 {
            bail!("invalid bregman parameters");
        }
        if let Some(sd) = s.mle_noise_std {
            if !(sd > 0.0) {
                bail!("mle_noise_std must be > 0");
            }
        }
        if let Some(b) = &self.bench {
            if b.sizes.is_empty() || b.sizes.iter().any(|&n| n < m.rank) {
                bail!("bench sizes must be non-empty and >= rank");
            }
            if !(b.nmse_target > 0.0) || !(b.budget_secs > 0.0) {
                bail!("bench target and budget must be > 0");
            }
        }
        match self.noise {
            NoiseConfig::Gaussian { std } if !(std > 0.0) => bail!("noise std must be > 0"),
            NoiseConfig::Poisson { lambda } if !(lambda > 0.0) => bail!("poisson lambda must be > 0"),
            _ => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML form, truncated to 16 digits.
    pub fn hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn noise_std(&self) -> Option<f64> {
        match self.noise {
            NoiseConfig::Gaussian { std } => Some(std),
            _ => None,
        }
    }

    pub fn mle_noise_std(&self) -> f64 {
        self.solver
            .mle_noise_std
            .or_else(|| self.noise_std())
            .unwrap_or(1.0)
    }
}
