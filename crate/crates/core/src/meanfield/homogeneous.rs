//! Closed forms for a market with one customer type and one listing type.
//!
//! Here the application rate collapses to `psi = 1 - e^-phi`. Arguments are
//! not validated: rates must be nonnegative, `lambda` positive and
//! allocations in `[0, 1]` (the endpoints are the continuous extensions).

use super::{one_minus_exp_neg, serve};

pub fn application_rate(phi: f64) -> f64 {
    one_minus_exp_neg(phi)
}

/// Global booking rate per listing, `1 - exp(-lambda psi)`.
pub fn booking_rate(phi: f64, lambda: f64) -> f64 {
    one_minus_exp_neg(lambda * application_rate(phi))
}

pub fn gte(phi: f64, phi_t: f64, lambda: f64) -> f64 {
    booking_rate(phi_t, lambda) - booking_rate(phi, lambda)
}

/// `lambda (psi~ - psi) F(lambda (a psi~ + (1 - a) psi))`
pub fn cr_limit(phi: f64, phi_t: f64, lambda: f64, a: f64) -> f64 {
    let (psi, psi_t) = (application_rate(phi), application_rate(phi_t));
    lambda * (psi_t - psi) * serve(lambda * (a * psi_t + (1.0 - a) * psi))
}

/// `exp(-lambda phi F_mix) - exp(-lambda phi~ F_mix)` with
/// `F_mix = F(a phi~ + (1 - a) phi)`.
pub fn lr_limit(phi: f64, phi_t: f64, lambda: f64, a: f64) -> f64 {
    let mixed = serve(a * phi_t + (1.0 - a) * phi);
    (-lambda * phi * mixed).exp() - (-lambda * phi_t * mixed).exp()
}

pub fn cr_bias(phi: f64, phi_t: f64, lambda: f64, a: f64) -> f64 {
    cr_limit(phi, phi_t, lambda, a) - gte(phi, phi_t, lambda)
}

pub fn lr_bias(phi: f64, phi_t: f64, lambda: f64, a: f64) -> f64 {
    lr_limit(phi, phi_t, lambda, a) - gte(phi, phi_t, lambda)
}
