//! One-bit sampling against dither stacks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param_err, Result};
use crate::mask::ObservationMask;
use crate::matrix::DenseMatrix;
use crate::problem::{DitherStack, OneBitProblem, SensingRegime, SignStack};

/// Sign of `value - threshold`; ties go to +1.
#[inline]
pub fn one_bit(value: f64, threshold: f64) -> i8 {
    if value >= threshold {
        1
    } else {
        -1
    }
}

fn compare(values: &[f64], dithers: &DitherStack) -> Result<SignStack> {
    let mp = dithers.m_prime();
    let signs: Vec<i8> = dithers
        .as_slice()
        .iter()
        .enumerate()
        .map(|(idx, &tau)| one_bit(values[idx % mp], tau))
        .collect();
    SignStack::new(dithers.m(), mp, signs)
}

/// Noiseless one-bit sampling of `x` on `mask` against every dither sequence.
pub fn sample(x: &DenseMatrix, mask: &ObservationMask, dithers: &DitherStack) -> Result<OneBitProblem> {
    let observed = crate::mask::project_mask(x, mask)?;
    let signs = compare(&observed, dithers)?;
    OneBitProblem::new(mask.clone(), signs, dithers.clone())
}

/// One-bit sampling of `x + z`. The clean `x` need not be feasible for the
/// returned problem.
pub fn sample_noisy(
    x: &DenseMatrix,
    z: &DenseMatrix,
    mask: &ObservationMask,
    dithers: &DitherStack,
) -> Result<OneBitProblem> {
    let noisy = x.add(z)?;
    let observed = crate::mask::project_mask(&noisy, mask)?;
    let signs = compare(&observed, dithers)?;
    Ok(OneBitProblem::new(mask.clone(), signs, dithers.clone())?.with_regime(SensingRegime::Noisy))
}

/// `(t - A(x))^+`; the zero vector exactly when `x` lies in the one-bit
/// polyhedron.
pub fn residual_plus(p: &OneBitProblem, x: &DenseMatrix) -> Result<Vec<f64>> {
    let t = p.target_vector();
    let ax = p.apply_a(x)?;
    Ok(positive_part_of_difference(&t, &ax))
}

pub(crate) fn positive_part_of_difference(t: &[f64], ax: &[f64]) -> Vec<f64> {
    t.iter().zip(ax).map(|(t, a)| (t - a).max(0.0)).collect()
}

/// Default noise allowance: a constant `factor * noise_std` per stacked entry.
pub fn sigma_z_default(p: &OneBitProblem, noise_std: f64, factor: f64) -> Result<Vec<f64>> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(param_err!("noise std must be non-negative, got {noise_std}"));
    }
    if !(factor >= 0.0) {
        return Err(param_err!("sigma_z factor must be non-negative, got {factor}"));
    }
    Ok(vec![factor * noise_std; p.stacked_len()])
}
