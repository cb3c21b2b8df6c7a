use super::homogeneous;
use super::roots::bisect;
use super::serve;
use crate::error::{check_positive, Error, Result};

const LAMBDA_BRACKET: (f64, f64) = (1e-6, 1e4);
const LAMBDA_TOLERANCE: f64 = 1e-9;

/// Homogeneous LR bias at the two ends of the allocation range, by
/// continuity: `(B_LR(0+), B_LR(1-))`.
pub fn lr_endpoint_biases(phi: f64, phi_t: f64, lambda: f64) -> (f64, f64) {
    (
        homogeneous::lr_bias(phi, phi_t, lambda, 0.0),
        homogeneous::lr_bias(phi, phi_t, lambda, 1.0),
    )
}

/// Relative demand at which the LR bias takes the same value at both ends
/// of the allocation range. On one side of it the bias is monotone one way
/// in the allocation, on the other side the other way.
///
/// Symmetric in its arguments.
pub fn find_lambda_star(phi: f64, phi_t: f64) -> Result<f64> {
    let phi = check_positive("phi", phi)?;
    let phi_t = check_positive("phi_t", phi_t)?;
    if phi == phi_t {
        return Err(Error::Domain {
            name: "phi_t",
            value: phi_t,
            domain: "any positive value other than phi",
        });
    }
    let (f_c, f_t) = (serve(phi), serve(phi_t));
    // Exponents of the four exponentials in B_LR(0) - B_LR(1). They all
    // underflow long before the upper bracket, so factor out the smallest.
    let exponents = [phi * f_c, phi_t * f_c, phi * f_t, phi_t * f_t];
    let smallest = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    let scaled = |lambda: f64, x: f64| (-lambda * (x - smallest)).exp();
    let difference = |lambda: f64| {
        let at_zero = scaled(lambda, exponents[0]) - scaled(lambda, exponents[1]);
        let at_one = scaled(lambda, exponents[2]) - scaled(lambda, exponents[3]);
        at_zero - at_one
    };
    let (lo, hi) = LAMBDA_BRACKET;
    bisect(difference, lo, hi, LAMBDA_TOLERANCE).ok_or(Error::NoCutoff { lo, hi })
}
