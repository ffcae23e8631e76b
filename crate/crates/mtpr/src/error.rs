//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset generation and the attack stages.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A dimension or count is zero, negative where it may not be, or
    /// exceeds the configured memory budget.
    #[error("sizing error: {0}")]
    Sizing(String),

    /// Parameters violate a model constraint (e.g. sparsity above count).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Two operands have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix fails a structural requirement (symmetry, PSD, ...).
    #[error("matrix error: {0}")]
    Matrix(String),

    /// An iterative optimizer ran out of budget before reaching its
    /// tolerance. Carries the objective of the best feasible iterate.
    #[error("optimization did not converge (best objective {best_objective})")]
    Optimization { best_objective: f64 },

    /// A counting step of the set-system identification failed; the
    /// message names the first violated step.
    #[error("structure error: {0}")]
    Structure(String),

    /// The extracted Gram matrix is inconsistent with any valid overlap
    /// pattern; usually a sign that `d` is too small.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Public-contribution subtraction produced a non-integer private
    /// overlap; usually a wrong public-support estimate for the pair.
    #[error("non-integer private overlap at pair ({row}, {col}): residue {residue}")]
    NonIntegerOverlap { row: usize, col: usize, residue: f64 },

    /// A signed system admits no solution within tolerance.
    #[error("inconsistent signed system: no candidate within tolerance {tol}")]
    InconsistentSystem { tol: f64 },

    /// The attack ran but its output fails a quality gate.
    #[error("recovery quality error: {0}")]
    RecoveryQuality(String),

    /// No floral submatrix was found; more synthetic images are needed.
    #[error("insufficient synthetic images: {0}")]
    InsufficientData(String),

    /// A pipeline stage failed; wraps the underlying error.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Annotates an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
