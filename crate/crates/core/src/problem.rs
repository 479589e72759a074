//! Sign and dither stacks, the one-bit problem, and its implicit operator.
//!
//! Stacked vectors of length `m * m'` are laid out block by block: entry
//! `l * m' + k` belongs to dither sequence `l` and mask slot `k`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, param_err, Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::DenseMatrix;

/// Default column cap for [`materialize_dense_b`].
pub const DENSE_ORACLE_CAP: usize = 4096;

/// One-bit data: `m` sequences of `m'` signs in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SignStack {
    m: usize,
    m_prime: usize,
    values: Vec<i8>,
}

impl SignStack {
    pub fn new(m: usize, m_prime: usize, values: Vec<i8>) -> Result<Self> {
        if m == 0 || m_prime == 0 {
            return Err(param_err!("sign stack needs m >= 1 and m' >= 1"));
        }
        if values.len() != m * m_prime {
            return Err(dim_err!(
                "{} signs for an {m}x{m_prime} stack",
                values.len()
            ));
        }
        if values.iter().any(|&s| s != 1 && s != -1) {
            return Err(param_err!("sign entries must be -1 or +1"));
        }
        Ok(Self { m, m_prime, values })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn m_prime(&self) -> usize {
        self.m_prime
    }

    #[inline]
    pub fn as_slice(&self) -> &[i8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> i8 {
        self.values[l * self.m_prime + k]
    }
}

/// How a dither stack was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DitherScheme {
    /// i.i.d. over `[-amplitude, amplitude]`.
    Uniform { amplitude: f64 },
    /// i.i.d. normal.
    Gaussian { mean: f64, variance: f64 },
    /// Equiprobable atoms `k D / M`, `k in {-M/2..-1, 1..M/2}`.
    Discrete { levels: u32, peak_to_peak: f64 },
    /// Thresholds rewritten by the adaptive outer loop.
    Adaptive,
}

/// `m` dither sequences restricted to the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherStack {
    m: usize,
    m_prime: usize,
    values: Vec<f64>,
    scheme: DitherScheme,
    seed: u64,
}

impl DitherStack {
    pub fn new(
        m: usize,
        m_prime: usize,
        values: Vec<f64>,
        scheme: DitherScheme,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 || m_prime == 0 {
            return Err(param_err!("dither stack needs m >= 1 and m' >= 1"));
        }
        if values.len() != m * m_prime {
            return Err(dim_err!(
                "{} dithers for an {m}x{m_prime} stack",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(param_err!("dither values must be finite"));
        }
        match scheme {
            DitherScheme::Uniform { amplitude } => {
                if values.iter().any(|v| v.abs() > amplitude) {
                    return Err(param_err!("uniform dither exceeds amplitude {amplitude}"));
                }
            }
            DitherScheme::Discrete {
                levels,
                peak_to_peak,
            } => {
                let step = peak_to_peak / levels as f64;
                let half = (levels / 2) as f64;
                let on_grid = |v: f64| {
                    let k = libm::round(v / step);
                    k != 0.0 && k.abs() <= half && (v - k * step).abs() <= 1e-12 * step.abs().max(1.0)
                };
                if !values.iter().all(|&v| on_grid(v)) {
                    return Err(param_err!("discrete dither value off the grid"));
                }
            }
            DitherScheme::Gaussian { .. } | DitherScheme::Adaptive => {}
        }
        Ok(Self {
            m,
            m_prime,
            values,
            scheme,
            seed,
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn m_prime(&self) -> usize {
        self.m_prime
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.values[l * self.m_prime + k]
    }

    pub fn scheme(&self) -> DitherScheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Whether the signs were taken from the clean matrix or from a noisy one.
/// In the noisy regime the clean matrix need not satisfy the constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensingRegime {
    #[default]
    Noiseless,
    Noisy,
}

/// Observation mask, one-bit data and the dithers they were compared to.
///
/// Realizes `A(X) = B vec(X)` without ever materializing `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBitProblem {
    mask: ObservationMask,
    signs: SignStack,
    dithers: DitherStack,
    regime: SensingRegime,
}

impl OneBitProblem {
    pub fn new(mask: ObservationMask, signs: SignStack, dithers: DitherStack) -> Result<Self> {
        if signs.m() != dithers.m() {
            return Err(dim_err!(
                "{} sign sequences vs {} dither sequences",
                signs.m(),
                dithers.m()
            ));
        }
        if signs.m_prime() != mask.len() || dithers.m_prime() != mask.len() {
            return Err(dim_err!(
                "stacks cover {} / {} slots but the mask has {}",
                signs.m_prime(),
                dithers.m_prime(),
                mask.len()
            ));
        }
        Ok(Self {
            mask,
            signs,
            dithers,
            regime: SensingRegime::Noiseless,
        })
    }

    pub fn with_regime(mut self, regime: SensingRegime) -> Self {
        self.regime = regime;
        self
    }

    pub fn regime(&self) -> SensingRegime {
        self.regime
    }

    #[inline]
    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    #[inline]
    pub fn signs(&self) -> &SignStack {
        &self.signs
    }

    #[inline]
    pub fn dithers(&self) -> &DitherStack {
        &self.dithers
    }

    /// Number of dither sequences.
    #[inline]
    pub fn m(&self) -> usize {
        self.signs.m()
    }

    /// Number of observed cells.
    #[inline]
    pub fn m_prime(&self) -> usize {
        self.mask.len()
    }

    /// Length of stacked vectors, `m * m'`.
    #[inline]
    pub fn stacked_len(&self) -> usize {
        self.m() * self.m_prime()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    /// Replace the dither stack, keeping mask and signs.
    pub fn with_dithers(&self, dithers: DitherStack) -> Result<Self> {
        Ok(Self::new(self.mask.clone(), self.signs.clone(), dithers)?.with_regime(self.regime))
    }

    /// `A(X)`: block `l`, slot `k` is `signs[l,k] * X[mask[k]]`.
    pub fn apply_a(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        self.mask.check_matrix(x)?;
        let mut out = vec![0.0; self.stacked_len()];
        self.apply_a_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_a_into(&self, x: &DenseMatrix, out: &mut [f64]) {
        let mp = self.m_prime();
        let vals = x.as_slice();
        let signs = self.signs.as_slice();
        for k in 0..mp {
            let xv = vals[self.mask.flat_index(k)];
            for l in 0..self.m() {
                let idx = l * mp + k;
                out[idx] = f64::from(signs[idx]) * xv;
            }
        }
    }

    /// `A*(y)`: scatter `sum_l signs[l,k] y[l,k]` onto the mask, zero elsewhere.
    pub fn apply_a_adjoint(&self, y: &[f64]) -> Result<DenseMatrix> {
        if y.len() != self.stacked_len() {
            return Err(dim_err!(
                "adjoint input has length {} but m*m' = {}",
                y.len(),
                self.stacked_len()
            ));
        }
        let (n1, n2) = self.dims();
        let mut out = DenseMatrix::zeros(n1, n2);
        let mp = self.m_prime();
        let signs = self.signs.as_slice();
        let dst = out.as_mut_slice();
        for k in 0..mp {
            let acc: f64 = (0..self.m())
                .map(|l| f64::from(signs[l * mp + k]) * y[l * mp + k])
                .sum();
            dst[self.mask.flat_index(k)] = acc;
        }
        Ok(out)
    }

    /// `t = vec(R) ⊙ vec(Γ)`.
    pub fn target_vector(&self) -> Vec<f64> {
        self.signs
            .as_slice()
            .iter()
            .zip(self.dithers.as_slice())
            .map(|(&s, &d)| f64::from(s) * d)
            .collect()
    }
}

/// Materialize `B` as an `(m m') x (n1 n2)` dense matrix. Test oracle only.
pub fn materialize_dense_b(p: &OneBitProblem) -> Result<DenseMatrix> {
    materialize_dense_b_capped(p, DENSE_ORACLE_CAP)
}

pub fn materialize_dense_b_capped(p: &OneBitProblem, cap: usize) -> Result<DenseMatrix> {
    let (n1, n2) = p.dims();
    let cells = n1 * n2;
    if cells > cap {
        return Err(Error::CapExceeded { cells, cap });
    }
    let mp = p.m_prime();
    let mut b = DenseMatrix::zeros(p.stacked_len(), cells);
    for l in 0..p.m() {
        for k in 0..mp {
            b.set(l * mp + k, p.mask.flat_index(k), f64::from(p.signs.get(l, k)));
        }
    }
    Ok(b)
}
