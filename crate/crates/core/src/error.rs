use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dense oracle cap exceeded: n1*n2 = {cells} > {cap}")]
    CapExceeded { cells: usize, cap: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("multiplier diverged at iteration {iteration} (|y| = {norm:e}); reduce the step size (delta = {delta})")]
    Diverged {
        iteration: usize,
        norm: f64,
        delta: f64,
    },
    #[error("outer iteration {outer}: {source}")]
    Outer {
        outer: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(alloc::format!($($arg)*))
    };
}

macro_rules! param_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

pub(crate) use dim_err;
pub(crate) use param_err;
