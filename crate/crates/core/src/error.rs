use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("half-space normal has zero length")]
    ZeroNormal,

    #[error("operational region is empty")]
    EmptyRegion,

    #[error("operational region is unbounded along axis {axis}")]
    Unbounded { axis: usize },

    #[error("closed-loop matrix is not Hurwitz (max real part {max_real_part})")]
    NotHurwitz { max_real_part: f64 },

    #[error("matrix is not symmetric positive definite (min eigenvalue {min_eigenvalue})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("point is outside the barrier domain (constraint value {value})")]
    Domain { value: f64 },

    #[error("{constraints} constraints exceed the active-set enumeration budget of {budget}")]
    CombinatorialBudget { constraints: usize, budget: usize },

    #[error("linear program failed: {0}")]
    Lp(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
