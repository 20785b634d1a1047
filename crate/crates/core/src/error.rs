use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("model `{family}` is missing parameter `{param}`")]
    MissingParameter { family: String, param: String },

    #[error("model `{family}` does not accept parameter `{param}`")]
    UnknownParameter { family: String, param: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential denominator vanishes at site {site}")]
    SingularPotential { site: usize },

    #[error("projector vector has norm {norm}, expected 1")]
    Normalization { norm: f64 },

    #[error("eigenvector matrix is numerically defective (condition estimate {condition:.3e} > {threshold:.1e})")]
    Defective {
        condition: f64,
        threshold: f64,
        clustered: Vec<Complex64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("logarithm argument {value} is within {tol:e} of zero")]
    Branch { value: Complex64, tol: f64 },

    #[error("imaginary residual {residual:.3e} exceeds {tol:e}; spectrum is not conjugate-closed")]
    Consistency { residual: f64, tol: f64 },

    #[error("correlation eigenvalues {modes:?} are clamped to 0 or 1")]
    PartialSpectrum { modes: Vec<usize> },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("only {usable} usable points in window [{min}, {max}] (need 4)")]
    InsufficientData { usable: usize, min: usize, max: usize },

    #[error("orbital matrix lost rank at t = {time}")]
    Collapse { time: f64 },

    #[error("mode ordering error: {0}")]
    Ordering(String),

    #[error("many-body eigenvalue {energy} is degenerate within {gap:.3e}")]
    Degeneracy { energy: Complex64, gap: f64 },

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

impl Error {
    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Defective { .. }
                | Error::Branch { .. }
                | Error::Consistency { .. }
                | Error::PartialSpectrum { .. }
                | Error::Collapse { .. }
                | Error::Degeneracy { .. }
                | Error::InsufficientData { .. }
                | Error::Linalg(_)
                | Error::SingularPotential { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal diagnostic attached to results and surfaced in run manifests.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    Degeneracy,
    Defectiveness,
    Realness,
    Clamped,
    Consistency,
    Branch,
    Window,
}

impl Warning {
    pub fn new(kind: WarningKind, message: impl Into<String>) -> Self {
        Warning { kind, message: message.into() }
    }
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}
