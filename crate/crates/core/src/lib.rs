//! One-bit matrix completion from dithered sign samples.
//!
//! A low-rank matrix is observed on a mask and compared against `m` random
//! dither sequences; only the comparison signs are kept. Recovery solves a
//! nuclear-norm problem over the resulting polyhedron with singular value
//! thresholding and a multiplier update (see [`solvers`]).
//!
//! The crate is `no_std` with `alloc`; file formats, timing and the
//! experiment runner live in the CLI crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod analysis;
pub mod dither;
pub mod error;
pub mod instance;
pub mod mask;
pub mod matrix;
pub mod problem;
pub mod quantizer;
pub mod rng;
pub mod solvers;
pub mod svd;

pub use error::{Error, Result};
pub use mask::{project_mask, ObservationMask};
pub use matrix::DenseMatrix;
pub use problem::{
    materialize_dense_b, DitherScheme, DitherStack, OneBitProblem, SensingRegime, SignStack,
};
