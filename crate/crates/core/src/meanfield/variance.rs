use serde::{Deserialize, Serialize};

use super::{one_minus_exp_neg, serve};
use crate::design::{Design, DesignKind};
use crate::error::{check_nonnegative, check_positive, check_unit_open, Error, Result};

/// The 99 allocations `0.01, 0.02, ..., 0.99` used for allocation searches.
pub fn allocation_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Limit of `N * Var` of the homogeneous LR estimator and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrVariance {
    pub total: f64,
    pub treated: f64,
    pub control: f64,
    /// Never positive.
    pub covariance: f64,
}

/// Limit of `N * Var` of the homogeneous CR estimator and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrVariance {
    pub total: f64,
    pub treated: f64,
    pub control: f64,
    pub cov_treated: f64,
    pub cov_control: f64,
    pub cov_cross: f64,
}

fn check_inputs(phi: f64, phi_t: f64, lambda: f64, a: f64) -> Result<()> {
    check_nonnegative("phi", phi)?;
    check_nonnegative("phi_t", phi_t)?;
    check_positive("lambda", lambda)?;
    check_unit_open("allocation", a)?;
    Ok(())
}

pub fn lr_variance_limit(phi: f64, phi_t: f64, lambda: f64, a: f64) -> Result<LrVariance> {
    check_inputs(phi, phi_t, lambda, a)?;
    let mixed = serve((1.0 - a) * phi + a * phi_t);
    let e_t = (-lambda * phi_t * mixed).exp();
    let e_c = (-lambda * phi * mixed).exp();
    let treated = e_t * (1.0 - e_t) / a;
    let control = e_c * (1.0 - e_c) / (1.0 - a);
    // A customer applies to at most one listing, so two listings' booking
    // indicators are negatively correlated through the application rates
    // phi * F, not the consideration rates.
    let spread = mixed * (phi_t * e_t - phi * e_c);
    let covariance = -lambda * spread * spread;
    Ok(LrVariance {
        total: treated + control + covariance,
        treated,
        control,
        covariance,
    })
}

/// `1 - (1 + s) e^-s`, accurate for small `s`.
fn second_order_tail(s: f64) -> f64 {
    if s < 1e-3 {
        s * s * (0.5 - s * (1.0 / 3.0 - s * (1.0 / 8.0 - s / 30.0)))
    } else {
        one_minus_exp_neg(s) - s * (-s).exp()
    }
}

/// Variance limit of the CR estimator. Treated and control customers share
/// the listing pool, so beyond the two within-group terms there are
/// covariance terms from fluctuations of the application totals of each
/// group (`cov_treated`, `cov_control`) and between the groups.
pub fn cr_variance_limit(phi: f64, phi_t: f64, lambda: f64, a: f64) -> Result<CrVariance> {
    check_inputs(phi, phi_t, lambda, a)?;
    if phi == 0.0 && phi_t == 0.0 {
        return Err(Error::Domain {
            name: "phi",
            value: phi,
            domain: "phi or phi_t must be positive",
        });
    }
    let b = 1.0 - a;
    let psi = one_minus_exp_neg(phi);
    let psi_t = one_minus_exp_neg(phi_t);
    let mean_psi = b * psi + a * psi_t;
    let s = lambda * mean_psi;
    let e = (-s).exp();
    let g = one_minus_exp_neg(s);
    let h = second_order_tail(s);

    let treated = psi_t / mean_psi * g * (1.0 - a * psi_t * g / mean_psi) / a;
    let control = psi / mean_psi * g * (1.0 - b * psi * g / mean_psi) / b;

    let denom = lambda * mean_psi * mean_psi;
    let k1 = -psi_t * h / denom;
    let k2 = (b * psi * g + lambda * a * psi_t * mean_psi * e) / denom;
    let k3 = (a * psi_t * g + lambda * b * psi * mean_psi * e) / denom;
    let k4 = -psi * h / denom;

    let load_term = psi * psi_t * g * g / (lambda * mean_psi.powi(3));
    let collision = lambda * (-2.0 * s).exp() / mean_psi;
    let var_c = lambda * psi * (1.0 - psi);
    let var_t = lambda * psi_t * (1.0 - psi_t);

    let cov_treated = (-b * load_term - a * psi_t * psi_t * collision
        + b * a * var_c * k1 * k1
        + var_t * k2 * k2)
        / a;
    let cov_control =
        (-a * load_term - b * psi * psi * collision + var_c * k3 * k3 + a * b * var_t * k4 * k4)
            / b;
    let cov_cross = -2.0 * (-psi * psi_t * collision + var_c * k1 * k3 + var_t * k2 * k4)
        + 2.0 * psi * psi_t * g * g / (mean_psi * mean_psi)
        - 2.0 * load_term;

    Ok(CrVariance {
        total: treated + control + cov_treated + cov_control + cov_cross,
        treated,
        control,
        cov_treated,
        cov_control,
        cov_cross,
    })
}

/// Scaled variance limit of a randomized design in a homogeneous market.
pub fn scaled_variance_limit(phi: f64, phi_t: f64, lambda: f64, design: Design) -> Result<f64> {
    match design {
        Design::CustomerRandomized(a) => Ok(cr_variance_limit(phi, phi_t, lambda, a.get())?.total),
        Design::ListingRandomized(a) => Ok(lr_variance_limit(phi, phi_t, lambda, a.get())?.total),
        other => Err(Error::InvalidDesign(format!(
            "variance limits exist for CR and LR designs, not {other}"
        ))),
    }
}

/// Variance at a 50-50 split relative to the smallest variance over
/// [`allocation_grid`].
pub fn variance_approx_ratio(phi: f64, phi_t: f64, lambda: f64, kind: DesignKind) -> Result<f64> {
    let variance = |a: f64| -> Result<f64> {
        match kind {
            DesignKind::Cr => Ok(cr_variance_limit(phi, phi_t, lambda, a)?.total),
            DesignKind::Lr => Ok(lr_variance_limit(phi, phi_t, lambda, a)?.total),
            other => Err(Error::InvalidDesign(format!(
                "variance ratio is defined for CR and LR designs, not {other}"
            ))),
        }
    };
    let at_half = variance(0.5)?;
    let mut best = f64::INFINITY;
    for a in allocation_grid() {
        best = best.min(variance(a)?);
    }
    Ok(at_half / best)
}
