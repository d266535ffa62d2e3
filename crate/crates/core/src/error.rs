use thiserror::Error;

/// Errors raised by the link model and the experiment runners.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time-bin state needs {needed} slots but capacity is {max}")]
    Capacity { needed: usize, max: usize },

    #[error("QBER is undefined: no sifted bits")]
    UndefinedQber,

    #[error("fringe fit failed: {0}")]
    FitFailure(String),

    #[error("invalid fringe: {0}")]
    InvalidFringe(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value < 0.0 {
        return Err(invalid(name, format!("must be >= 0, got {value}")));
    }
    Ok(())
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value <= 0.0 {
        return Err(invalid(name, format!("must be > 0, got {value}")));
    }
    Ok(())
}

pub(crate) fn ensure_fraction(name: &'static str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if !(0.0..=1.0).contains(&value) {
        return Err(invalid(name, format!("must lie in [0, 1], got {value}")));
    }
    Ok(())
}
