use crate::expr::{parser::ParseError, EvalError};

#[derive(Debug, thiserror::Error)]
pub enum AmechError {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("singular fiber Hessian at t = {t}: x = {x:?}, y = {y:?}, condition number {cond:e}")]
    SingularHessian { t: f64, x: Vec<f64>, y: Vec<f64>, cond: f64 },

    #[error("dimension mismatch in {field}: expected {expected}, got {got}")]
    Dimension { field: String, expected: usize, got: usize },

    #[error("host trajectory EL residual {residual:e} exceeds {limit:e}")]
    HostResidual { residual: f64, limit: f64 },

    #[error("metric is not positive definite at x = {x:?}")]
    NotPositiveDefinite { x: Vec<f64> },

    #[error("algebroid is not almost-Lie on the sampled domain (residual {residual:e})")]
    NotAlmostLie { residual: f64 },

    #[error("unknown catalog entry '{0}'")]
    UnknownCatalog(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, AmechError>;

pub(crate) fn dim_check(field: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(AmechError::Dimension { field: field.to_string(), expected, got })
    }
}
