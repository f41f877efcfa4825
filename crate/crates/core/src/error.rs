use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),

    #[error("momentum quadrature with {0} nodes exceeds the stable limit of {max}", max = crate::config::MAX_P_NODES)]
    TooManyNodes(usize),

    #[error("negative photon index {0}")]
    NegativeIndex(i64),

    #[error("ladder power overflowed at n={n}, k={k}")]
    Overflow { n: usize, k: usize },

    #[error("step size underflow at t={t:e} s (h={h:e}); the generator is too stiff, reduce omega_c or gamma")]
    StepUnderflow { t: f64, h: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("estimated oracle cost {estimate:.3e} exceeds budget {budget:.3e}")]
    Budget { estimate: f64, budget: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
