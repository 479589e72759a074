//! Dither generation and the dynamic-range variance rule.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{param_err, Result};
use crate::mask::ObservationMask;
use crate::problem::{DitherScheme, DitherStack};
use crate::rng::{self, Domain};

/// Parameters for a generated dither stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherSpec {
    pub scheme: DitherScheme,
    pub m: usize,
    pub seed: u64,
}

impl DitherSpec {
    pub fn new(scheme: DitherScheme, m: usize, seed: u64) -> Result<Self> {
        let spec = Self { scheme, m, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(param_err!("need at least one dither sequence"));
        }
        match self.scheme {
            DitherScheme::Uniform { amplitude } if !(amplitude > 0.0 && amplitude.is_finite()) => {
                Err(param_err!("uniform amplitude must be positive, got {amplitude}"))
            }
            DitherScheme::Gaussian { mean, variance }
                if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) =>
            {
                Err(param_err!("gaussian variance must be positive, got {variance}"))
            }
            DitherScheme::Discrete {
                levels,
                peak_to_peak,
            } if levels < 2 || levels % 2 != 0 || !(peak_to_peak > 0.0) => Err(param_err!(
                "discrete dither needs even M >= 2 and D > 0, got M = {levels}, D = {peak_to_peak}"
            )),
            DitherScheme::Adaptive => Err(param_err!(
                "adaptive dithers are produced by the adaptive solver, not generated"
            )),
            _ => Ok(()),
        }
    }
}

/// Draw `m x m'` i.i.d. dithers. Sequence `l` comes from substream `l`, so a
/// stack is bitwise reproducible from `(spec, mask)`.
pub fn generate(spec: &DitherSpec, mask: &ObservationMask) -> Result<DitherStack> {
    spec.validate()?;
    let mp = mask.len();
    let mut values = Vec::with_capacity(spec.m * mp);
    for l in 0..spec.m {
        let mut rng = rng::stream(spec.seed, Domain::Dither, l as u64);
        draw_sequence(&spec.scheme, mp, &mut rng, &mut values)?;
    }
    DitherStack::new(spec.m, mp, values, spec.scheme, spec.seed)
}

fn draw_sequence<R: Rng + ?Sized>(
    scheme: &DitherScheme,
    n: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) -> Result<()> {
    match *scheme {
        DitherScheme::Uniform { amplitude } => {
            let dist = Uniform::new_inclusive(-amplitude, amplitude)
                .map_err(|e| param_err!("uniform dither: {e}"))?;
            out.extend(dist.sample_iter(rng).take(n));
        }
        DitherScheme::Gaussian { mean, variance } => {
            let dist =
                Normal::new(mean, libm::sqrt(variance)).map_err(|e| param_err!("gaussian dither: {e}"))?;
            out.extend(dist.sample_iter(rng).take(n));
        }
        DitherScheme::Discrete {
            levels,
            peak_to_peak,
        } => {
            let half = levels / 2;
            let step = peak_to_peak / f64::from(levels);
            for _ in 0..n {
                // atom index in 0..levels maps to k in {-M/2..-1, 1..M/2}
                let a = rng.random_range(0..levels);
                let k = if a < half {
                    a as i64 - half as i64
                } else {
                    (a - half) as i64 + 1
                };
                out.push(k as f64 * step);
            }
        }
        DitherScheme::Adaptive => unreachable!("validated above"),
    }
    Ok(())
}

/// All atoms of the discrete scheme, ascending.
pub fn discrete_atoms(levels: u32, peak_to_peak: f64) -> Vec<f64> {
    let half = i64::from(levels / 2);
    let step = peak_to_peak / f64::from(levels);
    (-half..=half)
        .filter(|&k| k != 0)
        .map(|k| k as f64 * step)
        .collect()
}

/// Dynamic range of the observed data: the largest absolute observed value.
pub fn dynamic_range(observed: &[f64]) -> Result<f64> {
    if observed.is_empty() {
        return Err(param_err!("dynamic range of an empty vector"));
    }
    Ok(observed.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// Zero-mean gaussian dither with variance `DR^2 / 9`.
pub fn gaussian_from_dynamic_range(dr: f64) -> Result<DitherScheme> {
    if !(dr > 0.0 && dr.is_finite()) {
        return Err(param_err!("dynamic range must be positive, got {dr}"));
    }
    Ok(DitherScheme::Gaussian {
        mean: 0.0,
        variance: dr * dr / 9.0,
    })
}

/// Uniform dither over `[-DR, DR]`.
pub fn uniform_from_dynamic_range(dr: f64) -> Result<DitherScheme> {
    if !(dr > 0.0 && dr.is_finite()) {
        return Err(param_err!("dynamic range must be positive, got {dr}"));
    }
    Ok(DitherScheme::Uniform { amplitude: dr })
}

/// Discrete dither with `levels` atoms spanning `[-DR, DR]` (`D = 2 DR`).
pub fn discrete_from_dynamic_range(dr: f64, levels: u32) -> Result<DitherScheme> {
    if !(dr > 0.0 && dr.is_finite()) {
        return Err(param_err!("dynamic range must be positive, got {dr}"));
    }
    Ok(DitherScheme::Discrete {
        levels,
        peak_to_peak: 2.0 * dr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mask(n: usize) -> ObservationMask {
        ObservationMask::full(1, n).unwrap()
    }

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn discrete_two_levels_has_two_atoms() {
        assert_eq!(discrete_atoms(2, 1.0), vec![-0.5, 0.5]);
        let spec = DitherSpec::new(
            DitherScheme::Discrete {
                levels: 2,
                peak_to_peak: 1.0,
            },
            3,
            11,
        )
        .unwrap();
        let s = generate(&spec, &mask(1000)).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.5 || v == -0.5));
        assert!(s.as_slice().contains(&0.5) && s.as_slice().contains(&-0.5));
    }

    #[test]
    fn uniform_moments() {
        let spec = DitherSpec::new(DitherScheme::Uniform { amplitude: 1.0 }, 1, 5).unwrap();
        let s = generate(&spec, &mask(100_000)).unwrap();
        let (mean, var) = moments(s.as_slice());
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.05 / 3.0, "var {var}");
        assert!(s.as_slice().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn gaussian_moments_within_three_standard_errors() {
        let (mu, var) = (0.7, 2.5);
        let n = 100_000;
        let spec = DitherSpec::new(DitherScheme::Gaussian { mean: mu, variance: var }, 1, 9).unwrap();
        let s = generate(&spec, &mask(n)).unwrap();
        let (mean, v) = moments(s.as_slice());
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((mean - mu).abs() < 3.0 * se_mean);
        assert!((v - var).abs() < 3.0 * se_var);
    }

    #[test]
    fn discrete_hundred_levels_tracks_uniform_cdf() {
        let a = 1.5;
        let n = 100_000;
        let mut d = generate(
            &DitherSpec::new(discrete_from_dynamic_range(a, 100).unwrap(), 1, 1).unwrap(),
            &mask(n),
        )
        .unwrap()
        .as_slice()
        .to_vec();
        let mut u = generate(
            &DitherSpec::new(DitherScheme::Uniform { amplitude: a }, 1, 2).unwrap(),
            &mask(n),
        )
        .unwrap()
        .as_slice()
        .to_vec();
        d.sort_by(f64::total_cmp);
        u.sort_by(f64::total_cmp);
        // two-sample Kolmogorov distance by merging the sorted samples
        let (mut i, mut j, mut ks) = (0usize, 0usize, 0.0_f64);
        while i < n && j < n {
            let x = d[i].min(u[j]);
            while i < n && d[i] <= x {
                i += 1;
            }
            while j < n && u[j] <= x {
                j += 1;
            }
            ks = ks.max((i as f64 - j as f64).abs() / n as f64);
        }
        assert!(ks < 0.02, "ks = {ks}");
    }

    #[test]
    fn same_seed_same_stack_and_sequences_independent_of_m() {
        let m1 = mask(50);
        let spec = DitherSpec::new(DitherScheme::Uniform { amplitude: 2.0 }, 4, 77).unwrap();
        assert_eq!(generate(&spec, &m1).unwrap(), generate(&spec, &m1).unwrap());
        let two = DitherSpec { m: 2, ..spec };
        let a = generate(&spec, &m1).unwrap();
        let b = generate(&two, &m1).unwrap();
        assert_eq!(&a.as_slice()[..100], b.as_slice());
    }

    #[test]
    fn invalid_specs() {
        assert!(DitherSpec::new(DitherScheme::Uniform { amplitude: 0.0 }, 1, 0).is_err());
        assert!(DitherSpec::new(DitherScheme::Gaussian { mean: 0.0, variance: -1.0 }, 1, 0).is_err());
        let odd = DitherScheme::Discrete { levels: 3, peak_to_peak: 1.0 };
        assert!(DitherSpec::new(odd, 1, 0).is_err());
        assert!(DitherSpec::new(DitherScheme::Uniform { amplitude: 1.0 }, 0, 0).is_err());
    }

    #[test]
    fn dynamic_range_rule() {
        assert_eq!(dynamic_range(&[1.0, -3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(dynamic_range(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(dynamic_range(&[]).is_err());
        assert!(gaussian_from_dynamic_range(0.0).is_err());
        assert_eq!(
            gaussian_from_dynamic_range(3.0).unwrap(),
            DitherScheme::Gaussian { mean: 0.0, variance: 1.0 }
        );
    }
}
