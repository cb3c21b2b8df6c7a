use serde::{Deserialize, Serialize};

use super::rates::{column_dot, dot, psi_from};
use super::{gte_limit, limit_booking_rate, serve, MarketSpec};
use crate::design::{Arm, Design};
use crate::error::{check_unit_open, Error, Result};

/// Asymptotic bias of a randomized design against the limiting GTE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub estimator_limit: f64,
    pub gte_limit: f64,
    /// `estimator_limit - gte_limit`
    pub bias: f64,
    /// `bias / gte_limit`; `None` when the GTE is exactly zero.
    pub relative_bias: Option<f64>,
}

impl BiasReport {
    pub fn new(estimator_limit: f64, gte_limit: f64) -> Self {
        let bias = estimator_limit - gte_limit;
        BiasReport {
            estimator_limit,
            gte_limit,
            bias,
            relative_bias: relative(bias, gte_limit),
        }
    }
}

pub(crate) fn relative(bias: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| bias / reference)
}

/// Limit of the CR estimator. Listings see a blend of treated and control
/// application intensity, so acceptance runs at the mixed rate
/// `F(lambda sigma . (a psi~ + (1 - a) psi))` for both groups.
pub fn cr_estimator_limit(spec: &MarketSpec, allocation: f64) -> Result<f64> {
    let a = check_unit_open("a_c", allocation)?;
    let psi = psi_from(spec.phi_control(), spec.tau());
    let psi_t = psi_from(spec.phi_treatment(), spec.tau());
    let (sigma, lambda) = (spec.sigma(), spec.lambda());

    let total = spec
        .tau()
        .iter()
        .enumerate()
        .map(|(t, tau)| {
            let control = column_dot(sigma, &psi, t);
            let treated = column_dot(sigma, &psi_t, t);
            let load = lambda * (a * treated + (1.0 - a) * control);
            tau * (treated - control) * serve(load)
        })
        .sum::<f64>();
    Ok(lambda * total)
}

/// Limit of the LR estimator: each customer's consideration set mixes
/// treated and control listings, so both groups convert at
/// `F(tau . (a Phi~(g, .) + (1 - a) Phi(g, .)))`. Returns the control
/// exponential minus the treated exponential, positive when `Phi~ > Phi`.
pub fn lr_estimator_limit(spec: &MarketSpec, allocation: f64) -> Result<f64> {
    let a = check_unit_open("a_l", allocation)?;
    let (phi, phi_t) = (spec.phi_control(), spec.phi_treatment());
    let (sigma, tau, lambda) = (spec.sigma(), spec.tau(), spec.lambda());

    let mixed_conversion: Vec<f64> = phi
        .iter()
        .zip(phi_t)
        .map(|(row, row_t)| {
            let intensity = a * dot(tau, row_t) + (1.0 - a) * dot(tau, row);
            serve(intensity)
        })
        .collect();

    let total = tau
        .iter()
        .enumerate()
        .map(|(t, tau_t)| {
            let (mut control, mut treated) = (0.0, 0.0);
            for (g, s) in sigma.iter().enumerate() {
                control += s * phi[g][t] * mixed_conversion[g];
                treated += s * phi_t[g][t] * mixed_conversion[g];
            }
            tau_t * ((-lambda * control).exp() - (-lambda * treated).exp())
        })
        .sum();
    Ok(total)
}

/// Limit of the design's estimator; for the global designs this is the
/// booking rate of that world.
pub fn estimator_limit(spec: &MarketSpec, design: Design) -> Result<f64> {
    match design {
        Design::GlobalControl => Ok(limit_booking_rate(spec, Arm::Control)),
        Design::GlobalTreatment => Ok(limit_booking_rate(spec, Arm::Treatment)),
        Design::CustomerRandomized(a) => cr_estimator_limit(spec, a.get()),
        Design::ListingRandomized(a) => lr_estimator_limit(spec, a.get()),
    }
}

pub fn asymptotic_bias(spec: &MarketSpec, design: Design) -> Result<BiasReport> {
    if !design.is_randomized() {
        return Err(Error::InvalidDesign(format!(
            "asymptotic bias is defined for CR and LR designs, not {design}"
        )));
    }
    let estimate = estimator_limit(spec, design)?;
    Ok(BiasReport::new(estimate, gte_limit(spec)))
}

/// Bound on the spread of the CR bias over all allocations,
/// `lambda^2 * (sup |phi~ - phi|)^2`.
pub fn bias_differential_bound(spec: &MarketSpec) -> f64 {
    let lift = spec
        .phi_treatment()
        .iter()
        .flatten()
        .zip(spec.phi_control().iter().flatten())
        .map(|(t, c)| (t - c).abs())
        .fold(0.0, f64::max);
    let lambda = spec.lambda();
    lambda * lambda * lift * lift
}
