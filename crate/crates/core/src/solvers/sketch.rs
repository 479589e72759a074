use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param_err, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{self, Domain};

/// Which sketch family the randomized solver draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SketchKind {
    /// Dense `s x m'` standard gaussian block.
    #[default]
    Gaussian,
    /// Identity block (`s = m'`); reduces the randomized solver to
    /// block-wise OB-SVT-II.
    Identity,
}

/// A block sketch `S^T = [0 | G | 0]^T`: `G` acts on dither block `block`
/// of a stacked vector and ignores the other blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchDescriptor {
    pub block: usize,
    pub m: usize,
    pub m_prime: usize,
    pub s: usize,
    /// Row-major `s x m'`; empty for the identity kind.
    g: Vec<f64>,
    kind: SketchKind,
}

// E[g (g.r)^+] = r / 2 for standard gaussian g
pub(crate) fn gaussian_step_weight(m: usize, m_prime: usize) -> f64 {
    2.0 * m as f64 / m_prime as f64
}

/// Draw a gaussian block sketch. The block index ranges over all `m` blocks.
pub fn make_sketch(m: usize, m_prime: usize, s: usize, seed: u64) -> Result<SketchDescriptor> {
    if s >= m_prime {
        return Err(param_err!("sketch size {s} must be < m' = {m_prime}"));
    }
    if m == 0 || s == 0 {
        return Err(param_err!("sketch needs m >= 1 and s >= 1"));
    }
    let mut r = rng::stream(seed, Domain::Sketch, 0);
    Ok(draw(m, m_prime, s, SketchKind::Gaussian, &mut r))
}

pub(crate) fn draw<R: Rng + ?Sized>(
    m: usize,
    m_prime: usize,
    s: usize,
    kind: SketchKind,
    rng: &mut R,
) -> SketchDescriptor {
    let block = rng.random_range(0..m);
    let g = match kind {
        SketchKind::Gaussian => (0..s * m_prime)
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect(),
        SketchKind::Identity => Vec::new(),
    };
    let s = match kind {
        SketchKind::Gaussian => s,
        SketchKind::Identity => m_prime,
    };
    SketchDescriptor {
        block,
        m,
        m_prime,
        s,
        g,
        kind,
    }
}

impl SketchDescriptor {
    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    /// `S v` for a stacked vector `v` of length `m m'`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.m * self.m_prime);
        let blk = &v[self.block * self.m_prime..(self.block + 1) * self.m_prime];
        self.apply_block(blk)
    }

    /// `G v_block`.
    pub fn apply_block(&self, blk: &[f64]) -> Vec<f64> {
        match self.kind {
            SketchKind::Identity => blk.to_vec(),
            SketchKind::Gaussian => self
                .g
                .chunks_exact(self.m_prime)
                .map(|row| row.iter().zip(blk).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    /// `G^T u` accumulated into `out_block` with weight `w`.
    pub fn add_transpose_block(&self, u: &[f64], w: f64, out_block: &mut [f64]) {
        match self.kind {
            SketchKind::Identity => {
                for (o, x) in out_block.iter_mut().zip(u) {
                    *o += w * x;
                }
            }
            SketchKind::Gaussian => {
                for (row, &ui) in self.g.chunks_exact(self.m_prime).zip(u) {
                    if ui == 0.0 {
                        continue;
                    }
                    let c = w * ui;
                    for (o, gij) in out_block.iter_mut().zip(row) {
                        *o += c * gij;
                    }
                }
            }
        }
    }

    /// `S^T u` as a full stacked vector.
    pub fn transpose_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.m_prime];
        let range = self.block * self.m_prime..(self.block + 1) * self.m_prime;
        self.add_transpose_block(u, 1.0, &mut out[range]);
        out
    }

    /// Step weight `w` of the sketched update `w S^T (S r)^+`.
    ///
    /// Sketch-and-project would apply `G^T (G G^T)^{-1}`; for a gaussian
    /// block `G G^T` is replaced by its mean `m' I`. The factor 2 restores
    /// the half lost to `(.)^+`, so the expected step on the chosen block is
    /// `(s / m') r` for `r >= 0`, and `m` compensates the block choice.
    pub fn step_weight(&self) -> f64 {
        match self.kind {
            SketchKind::Identity => self.m as f64,
            SketchKind::Gaussian => gaussian_step_weight(self.m, self.m_prime),
        }
    }

    /// Dense `s x (m m')` matrix. Tests only.
    pub fn to_dense(&self) -> DenseMatrix {
        let cols = self.m * self.m_prime;
        let off = self.block * self.m_prime;
        DenseMatrix::from_fn(self.s, cols, |i, j| {
            if j < off || j >= off + self.m_prime {
                return 0.0;
            }
            let jj = j - off;
            match self.kind {
                SketchKind::Identity => f64::from(u8::from(i == jj)),
                SketchKind::Gaussian => self.g[i * self.m_prime + jj],
            }
        })
    }
}
