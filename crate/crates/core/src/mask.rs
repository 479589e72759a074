//! The observation set and its canonical ordering.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{dim_err, param_err, Result};
use crate::matrix::DenseMatrix;

/// Ordered set of observed positions. Positions are kept sorted in row-major
/// order; every stacked vector in the crate indexes the mask through this
/// ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    dims: (usize, usize),
    positions: Vec<(usize, usize)>,
}

impl ObservationMask {
    pub fn new(dims: (usize, usize), mut positions: Vec<(usize, usize)>) -> Result<Self> {
        if positions.is_empty() {
            return Err(param_err!("observation mask must contain at least one cell"));
        }
        if let Some(&(i, j)) = positions.iter().find(|&&(i, j)| i >= dims.0 || j >= dims.1) {
            return Err(dim_err!(
                "position ({i},{j}) outside {}x{}",
                dims.0,
                dims.1
            ));
        }
        positions.sort_unstable();
        if let Some(w) = positions.windows(2).find(|w| w[0] == w[1]) {
            return Err(param_err!("duplicate position ({},{})", w[0].0, w[0].1));
        }
        Ok(Self { dims, positions })
    }

    /// Every cell of an `n1 x n2` matrix.
    pub fn full(n1: usize, n2: usize) -> Result<Self> {
        let positions = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
        Self::new((n1, n2), positions)
    }

    /// `count` cells drawn uniformly without replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(
        n1: usize,
        n2: usize,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let total = n1 * n2;
        if count == 0 || count > total {
            return Err(param_err!(
                "cannot sample {count} of {total} cells"
            ));
        }
        let positions = index::sample(rng, total, count)
            .into_iter()
            .map(|k| (k / n2, k % n2))
            .collect();
        Self::new((n1, n2), positions)
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    #[inline]
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    /// `m'`, the number of observed cells.
    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Row-major flat index of slot `k`.
    #[inline]
    pub fn flat_index(&self, k: usize) -> usize {
        let (i, j) = self.positions[k];
        i * self.dims.1 + j
    }

    /// Slot of `(i, j)` in the canonical ordering, if observed.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        self.positions.binary_search(&(i, j)).ok()
    }

    pub(crate) fn check_matrix(&self, x: &DenseMatrix) -> Result<()> {
        if x.dims() != self.dims {
            return Err(dim_err!(
                "matrix is {}x{} but mask is {}x{}",
                x.rows(),
                x.cols(),
                self.dims.0,
                self.dims.1
            ));
        }
        Ok(())
    }
}

/// `P_Omega` followed by the selection matrix: the observed entries of `x`
/// in canonical order.
pub fn project_mask(x: &DenseMatrix, mask: &ObservationMask) -> Result<Vec<f64>> {
    mask.check_matrix(x)?;
    let vals = x.as_slice();
    Ok((0..mask.len()).map(|k| vals[mask.flat_index(k)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_ordering_is_row_major() {
        let m = ObservationMask::new((3, 3), vec![(2, 0), (0, 2), (1, 1), (0, 0)]).unwrap();
        assert_eq!(m.positions(), &[(0, 0), (0, 2), (1, 1), (2, 0)]);
        assert_eq!(m.slot_of(1, 1), Some(2));
        assert_eq!(m.slot_of(1, 2), None);
    }

    #[test]
    fn rejects_bad_masks() {
        assert!(ObservationMask::new((2, 2), vec![]).is_err());
        assert!(ObservationMask::new((2, 2), vec![(0, 2)]).is_err());
        assert!(ObservationMask::new((2, 2), vec![(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn project_mask_examples() {
        let x = DenseMatrix::from_row_major(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let m = ObservationMask::new((2, 2), vec![(0, 0), (1, 1)]).unwrap();
        assert_eq!(project_mask(&x, &m).unwrap(), vec![1., 4.]);

        let z = DenseMatrix::zeros(3, 3);
        let m3 = ObservationMask::new((3, 3), vec![(0, 1), (2, 2)]).unwrap();
        assert_eq!(project_mask(&z, &m3).unwrap(), vec![0., 0.]);

        assert!(project_mask(&z, &m).is_err());
    }

    #[test]
    fn full_mask_projection_is_flattening() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DenseMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
        let full = ObservationMask::full(5, 5).unwrap();
        assert_eq!(project_mask(&x, &full).unwrap(), x.as_slice());
    }

    #[test]
    fn uniform_sampling_is_unique_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = ObservationMask::sample_uniform(10, 7, 30, &mut rng).unwrap();
        assert_eq!(m.len(), 30);
        assert!(ObservationMask::sample_uniform(2, 2, 0, &mut rng).is_err());
        assert!(ObservationMask::sample_uniform(2, 2, 5, &mut rng).is_err());
    }
}
