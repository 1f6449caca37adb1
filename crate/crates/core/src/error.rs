use thiserror::Error;

/// Errors surfaced by the library. Validation problems that are reportable
/// (failed convexity certificate, empty control-set interior) live in
/// [`crate::model::ValidationReport`] instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("problem failed validation: {0}")]
    Invalid(String),
    #[error("expression is not convex: {0}")]
    NotConvex(String),
    #[error("point is not in the set (violation {violation:.3e})")]
    PointNotInSet { violation: f64 },
    #[error("unsupported set combination: {0}")]
    UnsupportedCombination(String),
    #[error("exact representation refused: {0}")]
    Unrepresentable(String),
    #[error("a cost is not differentiable at the solution: {0}")]
    NotSmooth(String),
    #[error("regularity condition ker T* ⊂ ker M* fails; kernel vector {vector:?}")]
    Regularity { vector: Vec<f64> },
    #[error("normal-cone check failed: {}", failed.join(", "))]
    ConeCheckFailed { failed: Vec<String> },
    #[error("dimension cap exceeded: {0}")]
    DimCapExceeded(String),
    #[error("solver did not return an optimal solution: {0}")]
    NotSolved(String),
}

pub type Result<T> = std::result::Result<T, Error>;
