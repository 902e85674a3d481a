use thiserror::Error;

/// Errors raised by the planning library.
///
/// Infeasibility of a physical scenario is usually reported as a value
/// (see [`crate::error_model::DistanceResult`] and [`crate::temporal::RegimeKind`]);
/// the variants here are reserved for inputs that violate an operation's contract.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outside the fitted model's domain: {0}")]
    ModelDomain(String),

    #[error("protocol catalog: {0}")]
    Catalog(String),

    #[error("degenerate protocol: {0}")]
    DegenerateProtocol(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("static scenario is infeasible: {0}")]
    StaticInfeasible(String),

    #[error(
        "self-consistent iteration did not converge after {iterations} steps (trace {trace:?})"
    )]
    NonConvergence { iterations: usize, trace: Vec<u32> },

    #[error("stored pair already below the discard fidelity ({f0} < {f_discard})")]
    AlreadyExpired { f0: f64, f_discard: f64 },
}

pub type Result<T> = std::result::Result<T, PlanError>;

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(PlanError::InvalidInput(format!(
            "{name} must lie in [0, 1], got {value}"
        )));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) {
        return Err(PlanError::InvalidInput(format!(
            "{name} must be strictly positive, got {value}"
        )));
    }
    Ok(())
}

pub(crate) fn check_non_negative(name: &str, value: f64) -> Result<()> {
    if !(value >= 0.0) {
        return Err(PlanError::InvalidInput(format!(
            "{name} must be non-negative, got {value}"
        )));
    }
    Ok(())
}
