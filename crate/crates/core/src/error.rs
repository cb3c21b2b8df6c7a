use thiserror::Error;

/// Errors produced by the analytic engine, the simulator and the experiment
/// drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A scalar argument fell outside the domain of the operation.
    #[error("{name} = {value} is outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// A market description failed validation.
    #[error("invalid market specification: {0}")]
    InvalidSpec(String),

    /// A finite market failed validation.
    #[error("invalid finite market: {0}")]
    InvalidMarket(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// A calibration target cannot be reached at this relative demand.
    #[error("booking rate {target} is infeasible at lambda = {lambda}; the supremum achievable rate is {supremum}")]
    Infeasible {
        target: f64,
        lambda: f64,
        supremum: f64,
    },

    /// The endpoint-difference residual for the LR monotonicity cutoff has no
    /// sign change on the search bracket.
    #[error("no cutoff found: endpoint bias difference does not change sign on [{lo}, {hi}]")]
    NoCutoff { lo: f64, hi: f64 },

    /// An experimental allocation leaves a treatment or control group empty.
    #[error("allocation {allocation} leaves the {group} group empty at n = {n}")]
    EmptyGroup {
        allocation: f64,
        group: &'static str,
        n: u64,
    },

    /// The design does not support the requested operation.
    #[error("{0}")]
    InvalidDesign(String),

    #[error("tiny market too large to enumerate: {customers} x {listings} pairs exceeds the budget of {budget}")]
    BudgetExceeded {
        customers: usize,
        listings: usize,
        budget: usize,
    },

    /// Closed-form variance exists only for homogeneous markets.
    #[error("variance unavailable analytically for heterogeneous markets; use montecarlo mode")]
    VarianceUnavailable,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_unit_open(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "(0, 1)",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "(0, inf)",
        })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, inf)",
        })
    }
}
