use serde::{Deserialize, Serialize};

use crate::design::Arm;
use crate::error::{Error, Result};

const MASS_TOLERANCE: f64 = 1e-12;

/// Large-market description: type masses on both sides, relative demand and
/// the per-pair consideration rates with and without the intervention.
///
/// Rows of the rate matrices are customer types, columns listing types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarketSpec", into = "RawMarketSpec")]
pub struct MarketSpec {
    customer_types: Vec<String>,
    listing_types: Vec<String>,
    sigma: Vec<f64>,
    tau: Vec<f64>,
    lambda: f64,
    phi_control: Vec<Vec<f64>>,
    phi_treatment: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMarketSpec {
    pub customer_types: Vec<String>,
    pub listing_types: Vec<String>,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub lambda: f64,
    pub phi_control: Vec<Vec<f64>>,
    pub phi_treatment: Vec<Vec<f64>>,
}

impl TryFrom<RawMarketSpec> for MarketSpec {
    type Error = Error;

    fn try_from(raw: RawMarketSpec) -> Result<Self> {
        MarketSpec::new(
            raw.customer_types,
            raw.listing_types,
            raw.sigma,
            raw.tau,
            raw.lambda,
            raw.phi_control,
            raw.phi_treatment,
        )
    }
}

impl From<MarketSpec> for RawMarketSpec {
    fn from(s: MarketSpec) -> Self {
        RawMarketSpec {
            customer_types: s.customer_types,
            listing_types: s.listing_types,
            sigma: s.sigma,
            tau: s.tau,
            lambda: s.lambda,
            phi_control: s.phi_control,
            phi_treatment: s.phi_treatment,
        }
    }
}

impl MarketSpec {
    pub fn new(
        customer_types: Vec<String>,
        listing_types: Vec<String>,
        sigma: Vec<f64>,
        tau: Vec<f64>,
        lambda: f64,
        phi_control: Vec<Vec<f64>>,
        phi_treatment: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let spec = MarketSpec {
            customer_types,
            listing_types,
            sigma,
            tau,
            lambda,
            phi_control,
            phi_treatment,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One customer type and one listing type.
    pub fn homogeneous(phi: f64, phi_treatment: f64, lambda: f64) -> Result<Self> {
        MarketSpec::new(
            vec!["customer".into()],
            vec!["listing".into()],
            vec![1.0],
            vec![1.0],
            lambda,
            vec![vec![phi]],
            vec![vec![phi_treatment]],
        )
    }

    /// Heterogeneous market with a multiplicative intervention `phi_treatment = alpha * phi`.
    pub fn multiplicative(
        sigma: Vec<f64>,
        tau: Vec<f64>,
        lambda: f64,
        phi_control: Vec<Vec<f64>>,
        alpha: f64,
    ) -> Result<Self> {
        let phi_treatment = phi_control
            .iter()
            .map(|row| row.iter().map(|v| alpha * v).collect())
            .collect();
        MarketSpec::new(
            (0..sigma.len()).map(|i| format!("c{i}")).collect(),
            (0..tau.len()).map(|j| format!("l{j}")).collect(),
            sigma,
            tau,
            lambda,
            phi_control,
            phi_treatment,
        )
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        let g = self.customer_types.len();
        let t = self.listing_types.len();
        if g == 0 || t == 0 {
            return invalid("at least one customer type and one listing type are required".into());
        }
        if self.sigma.len() != g {
            return invalid(format!(
                "sigma has {} entries for {g} customer types",
                self.sigma.len()
            ));
        }
        if self.tau.len() != t {
            return invalid(format!(
                "tau has {} entries for {t} listing types",
                self.tau.len()
            ));
        }
        for (name, masses) in [("sigma", &self.sigma), ("tau", &self.tau)] {
            if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
                return invalid(format!(
                    "{name} entries must be positive and finite, got {m}"
                ));
            }
            let total: f64 = masses.iter().sum();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return invalid(format!("{name} must sum to 1, sums to {total}"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            ));
        }
        for (name, m) in [
            ("phi_control", &self.phi_control),
            ("phi_treatment", &self.phi_treatment),
        ] {
            if m.len() != g || m.iter().any(|row| row.len() != t) {
                return invalid(format!("{name} must be a {g}x{t} matrix"));
            }
            if let Some(v) = m.iter().flatten().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return invalid(format!(
                    "{name} entries must be nonnegative and finite, got {v}"
                ));
            }
        }
        Ok(())
    }

    pub fn customer_types(&self) -> &[String] {
        &self.customer_types
    }

    pub fn listing_types(&self) -> &[String] {
        &self.listing_types
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn phi(&self, arm: Arm) -> &[Vec<f64>] {
        match arm {
            Arm::Control => &self.phi_control,
            Arm::Treatment => &self.phi_treatment,
        }
    }

    pub fn phi_control(&self) -> &[Vec<f64>] {
        &self.phi_control
    }

    pub fn phi_treatment(&self) -> &[Vec<f64>] {
        &self.phi_treatment
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut s = self.clone();
        s.lambda = lambda;
        s.validate()?;
        Ok(s)
    }

    /// Replaces the treatment matrix with `alpha` times the control matrix.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut s = self.clone();
        s.phi_treatment = self
            .phi_control
            .iter()
            .map(|row| row.iter().map(|v| alpha * v).collect())
            .collect();
        s.validate()?;
        Ok(s)
    }

    /// `(phi, phi_treatment)` when every pair has the same control rate and
    /// the same treatment rate, so the types are indistinguishable.
    pub fn as_homogeneous(&self) -> Option<(f64, f64)> {
        let first = |m: &[Vec<f64>]| m[0][0];
        let uniform = |m: &[Vec<f64>], v: f64| m.iter().flatten().all(|x| *x == v);
        let phi = first(&self.phi_control);
        let phi_t = first(&self.phi_treatment);
        (uniform(&self.phi_control, phi) && uniform(&self.phi_treatment, phi_t))
            .then_some((phi, phi_t))
    }

    /// Largest treatment lift over all pairs, `max(phi_treatment - phi_control)`.
    pub fn max_lift(&self) -> f64 {
        self.phi_treatment
            .iter()
            .flatten()
            .zip(self.phi_control.iter().flatten())
            .map(|(t, c)| t - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
