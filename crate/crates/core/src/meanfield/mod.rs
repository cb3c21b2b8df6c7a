//! Large-market limits of the booking process.
//!
//! Everything here is a pure function of a [`MarketSpec`] (or of the two
//! homogeneous consideration rates): application and booking rate matrices,
//! limiting booking rates and treatment effect, the limits of the CR and LR
//! difference-in-means estimators, their biases, the LR monotonicity cutoff,
//! homogeneous variance limits and calibration of consideration rates.

mod calibrate;
mod cutoff;
pub mod homogeneous;
mod limits;
mod rates;
mod roots;
mod spec;
mod variance;

pub use calibrate::{booking_rate_supremum, calibrate_phi};
pub use cutoff::{find_lambda_star, lr_endpoint_biases};
pub(crate) use limits::relative;
pub use limits::{
    asymptotic_bias, bias_differential_bound, cr_estimator_limit, estimator_limit,
    lr_estimator_limit, BiasReport,
};
pub use rates::{
    application_rates, booking_rates, gte_limit, limit_booking_rate, rate_matrices, RateMatrices,
};
pub use spec::{MarketSpec, RawMarketSpec};
pub use variance::{
    allocation_grid, cr_variance_limit, lr_variance_limit, scaled_variance_limit,
    variance_approx_ratio, CrVariance, LrVariance,
};

use crate::error::{Error, Result};

/// Below this argument the serve probability switches to its Taylor
/// polynomial.
const SERVE_SERIES_CUTOFF: f64 = 1e-6;

/// Probability that a given arrival of a Poisson(`x`) batch is the one
/// served by a unit-capacity server, `(1 - e^-x) / x`, with value 1 at 0.
///
/// Strictly decreasing on `[0, inf)` with range `(0, 1]`.
pub fn serve_probability(x: f64) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain {
            name: "x",
            value: x,
            domain: "[0, inf)",
        });
    }
    Ok(serve(x))
}

/// Unchecked [`serve_probability`] for internal callers whose arguments are
/// nonnegative by construction.
#[inline]
pub(crate) fn serve(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "serve called with {x}");
    if x < SERVE_SERIES_CUTOFF {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `1 - e^-x` without cancellation near 0.
#[inline]
pub(crate) fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serve_examples() {
        assert_eq!(serve_probability(0.0).unwrap(), 1.0);
        // (1 - e^-1) / 1
        assert!((serve_probability(1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!((serve_probability(0.2358).unwrap() - 0.89083).abs() < 1e-4);
    }

    #[test]
    fn serve_rejects_bad_arguments() {
        assert!(serve_probability(-1e-12).is_err());
        assert!(serve_probability(f64::NAN).is_err());
        assert!(serve_probability(f64::INFINITY).is_err());
    }

    #[test]
    fn serve_is_continuous_across_series_cutoff() {
        let below = serve(SERVE_SERIES_CUTOFF * (1.0 - 1e-9));
        let above = serve(SERVE_SERIES_CUTOFF);
        assert!((below - above).abs() < 1e-15);
        // Direct evaluation loses digits here; the series must not.
        let x = 1e-9;
        assert!((serve(x) - (1.0 - 5e-10)).abs() < 1e-17);
    }
}
