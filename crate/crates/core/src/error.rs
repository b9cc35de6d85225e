use thiserror::Error;

/// Errors produced by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate matrix: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    Degenerate { eigenvalue: f64, floor: f64 },

    #[error("ill-conditioned innovation covariance{}: condition number {condition:e}", component_suffix(.component))]
    IllConditioned {
        condition: f64,
        component: Option<usize>,
    },

    #[error("all mixture likelihoods underflowed")]
    Underflow,

    #[error("state diverged{}", index_suffix(.index))]
    Divergence { index: Option<usize> },

    #[error("mixture fit failed: {0}")]
    Fit(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

fn component_suffix(c: &Option<usize>) -> String {
    c.map(|i| format!(" (component {i})")).unwrap_or_default()
}

fn index_suffix(c: &Option<usize>) -> String {
    c.map(|i| format!(" at particle {i}")).unwrap_or_default()
}

impl FilterError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        FilterError::Validation(msg.into())
    }

    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        FilterError::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}

pub type Result<T, E = FilterError> = std::result::Result<T, E>;
