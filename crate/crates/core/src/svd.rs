//! Singular value shrinkage `D_theta(Y) = U diag((sigma_i - theta)^+) V^T`.
//!
//! Small matrices use a full SVD. Above [`SvdStrategy::full_svd_max_dim`] a
//! randomized truncated SVD is used with a rank guess carried between calls:
//! the guess starts at the previous output rank plus five and doubles while
//! every computed singular value is still above the threshold.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SVD};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{self, Domain};

const SVD_EPS: f64 = 1e-14;
const SVD_MAX_ITERS: usize = 10_000;
const JACOBI_MAX_SWEEPS: usize = 60;
const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 3;

/// Result of one shrinkage step.
#[derive(Debug, Clone)]
pub struct Shrinkage {
    pub matrix: DenseMatrix,
    /// Number of singular values strictly above the threshold.
    pub rank: usize,
    /// Singular values after shrinkage, descending, zeros dropped.
    pub shrunk_values: Vec<f64>,
}

/// Stateful SVD policy shared across solver iterations.
#[derive(Debug, Clone)]
pub struct SvdStrategy {
    pub full_svd_max_dim: usize,
    rank_guess: usize,
    calls: u64,
}

impl Default for SvdStrategy {
    fn default() -> Self {
        Self {
            full_svd_max_dim: 512,
            rank_guess: 5,
            calls: 0,
        }
    }
}

impl SvdStrategy {
    pub fn with_full_svd_max_dim(full_svd_max_dim: usize) -> Self {
        Self {
            full_svd_max_dim,
            ..Self::default()
        }
    }

    /// Shrink `y` by `theta`.
    pub fn shrink(&mut self, y: &DenseMatrix, theta: f64) -> Result<Shrinkage> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(param_err!("shrinkage threshold must be >= 0, got {theta}"));
        }
        self.calls += 1;
        let (n1, n2) = y.dims();
        if n1.min(n2) <= self.full_svd_max_dim {
            return full_shrink(y, theta);
        }
        loop {
            let k = (self.rank_guess + OVERSAMPLE).min(n1.min(n2));
            let (u, s, vt) = randomized_svd(y, k, self.calls)?;
            let kept = s.iter().filter(|&&v| v > theta).count();
            let saturated = kept >= self.rank_guess && k < n1.min(n2);
            if saturated {
                self.rank_guess *= 2;
                continue;
            }
            self.rank_guess = kept + 5;
            return Ok(assemble(n1, n2, &u, &s, &vt, theta));
        }
    }
}

/// Shrink with the default strategy.
pub fn svt_shrink(y: &DenseMatrix, theta: f64) -> Result<DenseMatrix> {
    Ok(SvdStrategy::default().shrink(y, theta)?.matrix)
}

pub fn singular_values(y: &DenseMatrix) -> Result<Vec<f64>> {
    let svd = jacobi_svd(&y.to_nalgebra())
        .ok_or_else(|| Error::Numerical("jacobi svd did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn nuclear_norm(y: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(y)?.iter().sum())
}

/// Moore-Penrose pseudo-inverse via SVD, with relative cutoff `rcond`.
pub fn pseudo_inverse(a: &DenseMatrix, rcond: f64) -> Result<DenseMatrix> {
    let svd = jacobi_svd(&a.to_nalgebra())
        .ok_or_else(|| Error::Numerical("jacobi svd did not converge".into()))?;
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, &v| m.max(v));
    let pinv = svd
        .pseudo_inverse(rcond * smax)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse: {e}")))?;
    Ok(DenseMatrix::from_nalgebra(&pinv))
}

fn try_svd(m: DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let (r, c) = m.shape();
    let fro = m.norm();
    let maxabs = m.amax();
    if let Some(svd) = SVD::try_new(m.clone(), vectors, vectors, SVD_EPS, SVD_MAX_ITERS) {
        return Ok(svd);
    }
    // The implicit QR sweep occasionally stalls on matrices with many equal
    // singular values; the transposed bidiagonalization usually does not.
    if let Some(t) = SVD::try_new(m.transpose(), vectors, vectors, SVD_EPS, SVD_MAX_ITERS) {
        return Ok(SVD {
            u: t.v_t.map(|v| v.transpose()),
            v_t: t.u.map(|u| u.transpose()),
            singular_values: t.singular_values,
        });
    }
    jacobi_svd(&m).ok_or_else(|| {
        Error::Numerical(format!(
            "SVD did not converge on a {r}x{c} matrix (frobenius {fro:e}, max |entry| {maxabs:e})"
        ))
    })
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations. Slower than the
/// bidiagonal QR sweep but accurate and robust on matrices with many equal
/// or zero singular values, such as the stacked sensing operator.
fn jacobi_svd(m: &DMatrix<f64>) -> Option<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let (r, c) = m.shape();
    if r < c {
        let t = jacobi_svd(&m.transpose())?;
        return Some(SVD {
            u: t.v_t.map(|v| v.transpose()),
            v_t: t.u.map(|u| u.transpose()),
            singular_values: t.singular_values,
        });
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || libm::fabs(gamma) <= SVD_EPS * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let cs = 1.0 / libm::sqrt(1.0 + t * t);
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = cs * x - sn * y;
                        mat[(i, q)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = DMatrix::from_fn(r, c, |i, j| {
        let k = order[j];
        if norms[k] > 0.0 { a[(i, k)] / norms[k] } else { 0.0 }
    });
    let vt = DMatrix::from_fn(c, c, |i, j| v[(j, order[i])]);
    Some(SVD { u: Some(u), v_t: Some(vt), singular_values: nalgebra::DVector::from_vec(s) })
}

fn full_shrink(y: &DenseMatrix, theta: f64) -> Result<Shrinkage> {
    let (n1, n2) = y.dims();
    let svd = try_svd(y.to_nalgebra(), true)?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    Ok(assemble(n1, n2, u, &s, vt, theta))
}

fn assemble(
    n1: usize,
    n2: usize,
    u: &DMatrix<f64>,
    s: &[f64],
    vt: &DMatrix<f64>,
    theta: f64,
) -> Shrinkage {
    let mut idx: Vec<usize> = (0..s.len()).filter(|&i| s[i] > theta).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut out = DenseMatrix::zeros(n1, n2);
    let dst = out.as_mut_slice();
    for &c in &idx {
        let w = s[c] - theta;
        for i in 0..n1 {
            let ui = u[(i, c)] * w;
            if ui == 0.0 {
                continue;
            }
            let row = &mut dst[i * n2..(i + 1) * n2];
            for (j, d) in row.iter_mut().enumerate() {
                *d += ui * vt[(c, j)];
            }
        }
    }
    Shrinkage {
        matrix: out,
        rank: idx.len(),
        shrunk_values: idx.iter().map(|&c| s[c] - theta).collect(),
    }
}

/// Rank-`k` randomized SVD with a few power iterations.
fn randomized_svd(
    y: &DenseMatrix,
    k: usize,
    salt: u64,
) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let a = y.to_nalgebra();
    let (_, n2) = a.shape();
    let mut rng = rng::stream(salt, Domain::Sketch, u64::MAX);
    let omega = DMatrix::<f64>::from_fn(n2, k, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (&a * omega).qr().q();
    for _ in 0..POWER_ITERS {
        let z = (a.transpose() * &q).qr().q();
        q = (&a * z).qr().q();
    }
    let b = q.transpose() * &a;
    let svd = SVD::try_new(b, true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numerical(format!("truncated SVD failed at rank {k}")))?;
    let u = q * svd.u.expect("requested U");
    let s = svd.singular_values.iter().copied().collect();
    Ok((u, s, svd.v_t.expect("requested V^T")))
}
