//! Synthetic low-rank instances `X = X1 X2^T` with a uniform mask, optional
//! additive noise and dithers sized from the observed dynamic range.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::dither::{self, DitherSpec};
use crate::error::{param_err, Result};
use crate::mask::{project_mask, ObservationMask};
use crate::matrix::DenseMatrix;
use crate::problem::{DitherStack, OneBitProblem};
use crate::quantizer::{sample, sample_noisy};
use crate::rng::{self, Domain};

/// Entry law of the two factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorLaw {
    Gaussian,
    Uniform01,
}

/// Additive pre-quantization noise. Poisson draws are used raw, not centered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    None,
    Gaussian { std: f64 },
    Poisson { lambda: f64 },
}

/// Dither family; its scale follows the dynamic range of the observed data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DitherFamily {
    /// Variance `DR^2 / 9`.
    Gaussian,
    /// Uniform on `[-DR, DR]`.
    Uniform,
    /// `levels` atoms spanning `[-DR, DR]`.
    Discrete { levels: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub factors: FactorLaw,
    /// Observed fraction `m' / (n1 n2)` in `(0, 1]`.
    pub fraction: f64,
    pub noise: NoiseSpec,
    pub dither: DitherFamily,
    /// Number of dither sequences.
    pub m: usize,
}

impl InstanceSpec {
    /// Number of observed cells, `round(fraction n1 n2)`.
    pub fn m_prime(&self) -> usize {
        libm::round(self.fraction * (self.n1 * self.n2) as f64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.rank == 0 || self.m == 0 {
            return Err(param_err!("dimensions, rank and m must be positive"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(param_err!("fraction must be in (0, 1], got {}", self.fraction));
        }
        if self.m_prime() == 0 {
            return Err(param_err!("fraction {} observes no cells", self.fraction));
        }
        match self.noise {
            NoiseSpec::Gaussian { std } if !(std >= 0.0 && std.is_finite()) => {
                Err(param_err!("noise std must be >= 0, got {std}"))
            }
            NoiseSpec::Poisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(param_err!("poisson lambda must be > 0, got {lambda}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub x_true: DenseMatrix,
    pub mask: ObservationMask,
    pub dithers: DitherStack,
    pub z: Option<DenseMatrix>,
    pub problem: OneBitProblem,
    /// Dynamic range the dither scale was derived from.
    pub dynamic_range: f64,
}

fn factor<R: Rng + ?Sized>(rows: usize, rank: usize, law: FactorLaw, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, rank, |_, _| match law {
        FactorLaw::Gaussian => StandardNormal.sample(rng),
        FactorLaw::Uniform01 => rng.random::<f64>(),
    })
}

/// Build and sample an instance. Each random ingredient has its own stream,
/// so changing the dither family leaves `X`, the mask and the noise intact.
pub fn make_instance(spec: &InstanceSpec, seed: u64) -> Result<Instance> {
    spec.validate()?;
    let (n1, n2) = (spec.n1, spec.n2);
    let mut fr = rng::stream(seed, Domain::Factors, 0);
    let x1 = factor(n1, spec.rank, spec.factors, &mut fr);
    let x2 = factor(n2, spec.rank, spec.factors, &mut fr);
    let x_true = x1.matmul(&x2.transpose())?;

    let mut mr = rng::stream(seed, Domain::Mask, 0);
    let mask = ObservationMask::sample_uniform(n1, n2, spec.m_prime(), &mut mr)?;

    let mut nr = rng::stream(seed, Domain::Noise, 0);
    let z = match spec.noise {
        NoiseSpec::None => None,
        NoiseSpec::Gaussian { std } => {
            let law = Normal::new(0.0, std).map_err(|e| param_err!("noise law: {e}"))?;
            Some(DenseMatrix::from_fn(n1, n2, |_, _| law.sample(&mut nr)))
        }
        NoiseSpec::Poisson { lambda } => {
            let law = Poisson::new(lambda).map_err(|e| param_err!("noise law: {e}"))?;
            Some(DenseMatrix::from_fn(n1, n2, |_, _| law.sample(&mut nr)))
        }
    };

    let observed = match &z {
        Some(z) => project_mask(&x_true.add(z)?, &mask)?,
        None => project_mask(&x_true, &mask)?,
    };
    let dr = dither::dynamic_range(&observed)?;
    let scheme = match spec.dither {
        DitherFamily::Gaussian => dither::gaussian_from_dynamic_range(dr)?,
        DitherFamily::Uniform => dither::uniform_from_dynamic_range(dr)?,
        DitherFamily::Discrete { levels } => dither::discrete_from_dynamic_range(dr, levels)?,
    };
    let dspec = DitherSpec::new(scheme, spec.m, rng::derive_seed(seed, Domain::Dither as u64))?;
    let dithers = dither::generate(&dspec, &mask)?;
    let problem = match &z {
        Some(z) => sample_noisy(&x_true, z, &mask, &dithers)?,
        None => sample(&x_true, &mask, &dithers)?,
    };
    Ok(Instance {
        x_true,
        mask,
        dithers,
        z,
        problem,
        dynamic_range: dr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::singular_values;

    fn spec() -> InstanceSpec {
        InstanceSpec {
            n1: 30,
            n2: 20,
            rank: 3,
            factors: FactorLaw::Gaussian,
            fraction: 0.5,
            noise: NoiseSpec::None,
            dither: DitherFamily::Gaussian,
            m: 2,
        }
    }

    #[test]
    fn rank_matches_factor_width() {
        let inst = make_instance(&spec(), 1).unwrap();
        let sv = singular_values(&inst.x_true).unwrap();
        let tol = 1e-9 * sv[0];
        assert_eq!(sv.iter().filter(|&&s| s > tol).count(), 3);
        assert_eq!(inst.problem.m_prime(), 300);
        assert_eq!(inst.problem.m(), 2);
    }

    #[test]
    fn uniform_factors_are_nonnegative() {
        let s = InstanceSpec {
            factors: FactorLaw::Uniform01,
            ..spec()
        };
        let inst = make_instance(&s, 2).unwrap();
        assert!(inst.x_true.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn full_fraction_observes_everything() {
        let s = InstanceSpec { fraction: 1.0, ..spec() };
        let inst = make_instance(&s, 3).unwrap();
        assert_eq!(inst.mask.len(), 600);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let s = InstanceSpec { fraction: 1e-5, ..spec() };
        assert!(make_instance(&s, 0).is_err());
    }

    #[test]
    fn dither_family_does_not_move_the_truth() {
        let a = make_instance(&spec(), 9).unwrap();
        let b = make_instance(
            &InstanceSpec {
                dither: DitherFamily::Uniform,
                ..spec()
            },
            9,
        )
        .unwrap();
        assert_eq!(a.x_true, b.x_true);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn poisson_noise_is_raw_counts() {
        let s = InstanceSpec {
            noise: NoiseSpec::Poisson { lambda: 0.5 },
            ..spec()
        };
        let inst = make_instance(&s, 4).unwrap();
        let z = inst.z.unwrap();
        assert!(z.as_slice().iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
        let mean = z.as_slice().iter().sum::<f64>() / 600.0;
        assert!((mean - 0.5).abs() < 0.1, "{mean}");
    }
}
