use std::time::Instant;

use onebit_core::solvers::Clock;

/// Monotonic wall clock measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl StdClock {
    /// Seconds since construction.
    pub fn now(&self) -> f64 {
        self.now_secs()
    }
}

impl Clock for StdClock {
    fn now_secs(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}
