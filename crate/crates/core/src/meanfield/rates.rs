use serde::{Deserialize, Serialize};

#[cfg(test)]
use super::one_minus_exp_neg;
use super::{serve, MarketSpec};
use crate::design::Arm;
use crate::error::{Error, Result};

/// Limiting application and booking rates per (customer type, listing type)
/// pair, scaled by the number of listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrices {
    pub psi: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
}

/// `psi(g, t) = phi(g, t) * F(tau . phi(g, .))`. A customer type whose
/// consideration row has zero mass never applies.
pub(crate) fn psi_from(phi: &[Vec<f64>], tau: &[f64]) -> Vec<Vec<f64>> {
    phi.iter()
        .map(|row| {
            let intensity = dot(tau, row);
            if intensity == 0.0 {
                vec![0.0; row.len()]
            } else {
                let conversion = serve(intensity);
                row.iter().map(|p| p * conversion).collect()
            }
        })
        .collect()
}

/// `omega(g, t) = psi(g, t) * F(lambda * sigma . psi(., t))`, zero for
/// listing types that receive no applications.
pub(crate) fn omega_from(psi: &[Vec<f64>], sigma: &[f64], lambda: f64) -> Vec<Vec<f64>> {
    let columns = psi.first().map_or(0, Vec::len);
    let acceptance: Vec<f64> = (0..columns)
        .map(|t| {
            let load = lambda * column_dot(sigma, psi, t);
            if load == 0.0 {
                0.0
            } else {
                serve(load)
            }
        })
        .collect();
    psi.iter()
        .map(|row| row.iter().zip(&acceptance).map(|(p, a)| p * a).collect())
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sigma . m(., col)`
pub(crate) fn column_dot(sigma: &[f64], m: &[Vec<f64>], col: usize) -> f64 {
    sigma.iter().zip(m).map(|(s, row)| s * row[col]).sum()
}

/// Application-rate matrix under global control or global treatment.
pub fn application_rates(spec: &MarketSpec, arm: Arm) -> Vec<Vec<f64>> {
    psi_from(spec.phi(arm), spec.tau())
}

/// Booking-rate matrix for an application-rate matrix of the same market.
pub fn booking_rates(spec: &MarketSpec, psi: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (g, t) = (spec.sigma().len(), spec.tau().len());
    if psi.len() != g || psi.iter().any(|row| row.len() != t) {
        return Err(Error::DimensionMismatch {
            expected: format!("{g}x{t}"),
            actual: format!("{}x{}", psi.len(), psi.first().map_or(0, Vec::len)),
        });
    }
    Ok(omega_from(psi, spec.sigma(), spec.lambda()))
}

pub fn rate_matrices(spec: &MarketSpec, arm: Arm) -> RateMatrices {
    let psi = application_rates(spec, arm);
    let omega = omega_from(&psi, spec.sigma(), spec.lambda());
    RateMatrices { psi, omega }
}

/// Limit of the fraction of listings booked, `lambda * sigma^T Omega tau`.
pub fn limit_booking_rate(spec: &MarketSpec, arm: Arm) -> f64 {
    let omega = rate_matrices(spec, arm).omega;
    let sigma_omega_tau: f64 = spec
        .sigma()
        .iter()
        .zip(&omega)
        .map(|(s, row)| s * dot(row, spec.tau()))
        .sum();
    spec.lambda() * sigma_omega_tau
}

/// Listing-side form of the booking rate, `sum_t tau(t) (1 - exp(-lambda sigma . psi(., t)))`.
#[cfg(test)]
pub(crate) fn listing_side_booking_rate(spec: &MarketSpec, arm: Arm) -> f64 {
    let psi = application_rates(spec, arm);
    spec.tau()
        .iter()
        .enumerate()
        .map(|(t, tau)| tau * one_minus_exp_neg(spec.lambda() * column_dot(spec.sigma(), &psi, t)))
        .sum()
}

/// Limit of the global treatment effect on the listing booking rate.
pub fn gte_limit(spec: &MarketSpec) -> f64 {
    limit_booking_rate(spec, Arm::Treatment) - limit_booking_rate(spec, Arm::Control)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 0.25249;
    const PHI_T: f64 = 0.28563;

    #[test]
    fn homogeneous_psi_is_one_minus_exp() {
        let spec = MarketSpec::homogeneous(PHI, PHI_T, 1.0).unwrap();
        let psi = application_rates(&spec, Arm::Control);
        assert!((psi[0][0] - (1.0 - (-PHI).exp())).abs() < 1e-15);
        assert!((psi[0][0] - 0.22314).abs() < 1e-5);
    }

    #[test]
    fn zero_row_gives_zero_rates() {
        let spec = MarketSpec::multiplicative(
            vec![0.5, 0.5],
            vec![1.0],
            1.0,
            vec![vec![0.0], vec![0.3]],
            1.0,
        )
        .unwrap();
        let rates = rate_matrices(&spec, Arm::Control);
        assert_eq!(rates.psi[0], vec![0.0]);
        assert_eq!(rates.omega[0], vec![0.0]);
        assert!(rates.psi[1][0] > 0.0);
    }

    #[test]
    fn zero_column_gives_zero_bookings() {
        let spec =
            MarketSpec::multiplicative(vec![1.0], vec![0.5, 0.5], 2.0, vec![vec![0.0, 0.4]], 1.0)
                .unwrap();
        let rates = rate_matrices(&spec, Arm::Control);
        assert_eq!(rates.omega[0][0], 0.0);
        assert!(rates.omega[0][1] > 0.0);
    }

    #[test]
    fn two_listing_types_example() {
        let spec = MarketSpec::multiplicative(
            vec![1.0],
            vec![0.4, 0.6],
            1.0,
            vec![vec![0.101, 0.354]],
            1.0,
        )
        .unwrap();
        let psi = application_rates(&spec, Arm::Control);
        let intensity: f64 = 0.4 * 0.101 + 0.6 * 0.354;
        let expected = 0.101 * (1.0 - (-intensity).exp()) / intensity;
        assert!((psi[0][0] - expected).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_booking_example() {
        let spec = MarketSpec::homogeneous(PHI, PHI_T, 1.0).unwrap();
        let psi = application_rates(&spec, Arm::Control);
        let omega = booking_rates(&spec, &psi).unwrap();
        // psi * F(psi) = 0.22314 * 0.89630, which is 1 - e^-psi
        assert!((omega[0][0] - 0.199_994).abs() < 1e-5, "{}", omega[0][0]);
        assert!((omega[0][0] - (1.0 - (-psi[0][0]).exp())).abs() < 1e-15);
    }

    #[test]
    fn booking_rates_checks_dimensions() {
        let spec = MarketSpec::homogeneous(PHI, PHI_T, 1.0).unwrap();
        let err = booking_rates(&spec, &[vec![0.1, 0.2]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn small_lambda_booking_equals_application() {
        let spec = MarketSpec::homogeneous(PHI, PHI_T, 1e-12).unwrap();
        let r = rate_matrices(&spec, Arm::Treatment);
        assert!((r.omega[0][0] - r.psi[0][0]).abs() < 1e-12);
    }

    #[test]
    fn calibrated_booking_rates_and_gte() {
        let spec = MarketSpec::homogeneous(PHI, PHI_T, 1.0).unwrap();
        assert!((limit_booking_rate(&spec, Arm::Control) - 0.20).abs() < 5e-4);
        assert!((limit_booking_rate(&spec, Arm::Treatment) - 0.22).abs() < 5e-4);
        assert!((gte_limit(&spec) - 0.02).abs() < 5e-4);
    }

    #[test]
    fn null_intervention_has_zero_gte() {
        let spec = MarketSpec::homogeneous(PHI, PHI, 1.7).unwrap();
        assert_eq!(gte_limit(&spec), 0.0);
    }

    #[test]
    fn positive_multiplicative_lift_has_positive_gte() {
        let spec = MarketSpec::homogeneous(PHI, 1.2 * PHI, 1.0).unwrap();
        assert!(gte_limit(&spec) > 0.0);
    }

    #[test]
    fn listing_side_form_agrees() {
        let spec = MarketSpec::multiplicative(
            vec![0.3, 0.7],
            vec![0.4, 0.6],
            1.3,
            vec![vec![0.2, 0.5], vec![0.9, 0.05]],
            1.1,
        )
        .unwrap();
        for arm in [Arm::Control, Arm::Treatment] {
            let a = limit_booking_rate(&spec, arm);
            let b = listing_side_booking_rate(&spec, arm);
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }
}
