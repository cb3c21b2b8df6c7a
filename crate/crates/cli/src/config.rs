//! Run configuration: a TOML file whose sections mirror the subcommands.
//! Every section is optional; flags override file values. Unknown keys are
//! rejected so a typo fails loudly instead of silently using a default.

use std::path::{Path, PathBuf};

use marketlab::meanfield::RawMarketSpec;
use marketlab::oracle::TinyMarket;
use marketlab::sweeps::{Objective, SweepAxis, SweepMode};
use marketlab::{Arm, Design, DesignKind, Error, GteReference, MarketSpec};
use serde::{Deserialize, Serialize};

use crate::output::Format;
use crate::CliError;

/// Allocation used for randomized designs when none is given.
pub const DEFAULT_ALLOCATION: f64 = 0.5;
pub const DEFAULT_REPLICATIONS: u64 = 100;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketConfig,
    pub design: DesignConfig,
    pub execution: ExecutionConfig,
    pub sweep: SweepConfig,
    pub recommend: RecommendConfig,
    pub calibrate: CalibrateConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

/// Either the homogeneous shorthand (`phi`, `phi_tilde`) or the full type
/// description, never both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub customer_types: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listing_types: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_control: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_treatment: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<DesignKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GteSource {
    Analytic,
    MonteCarlo,
}

impl std::str::FromStr for GteSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(GteSource::Analytic),
            "montecarlo" | "monte_carlo" | "mc" => Ok(GteSource::MonteCarlo),
            other => Err(format!(
                "unknown GTE source {other:?}; expected analytic or montecarlo"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<SweepMode>,
    /// Reference the simulated estimator is compared against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gte: Option<GteSource>,
    /// Runs per global world when `gte = "montecarlo"`; defaults to
    /// `replications`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gte_replications: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<DesignKind>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Target booking rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

/// A tiny market given pair by pair. Labels default to control.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub customer_arms: Option<Vec<Arm>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listing_arms: Option<Vec<Arm>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn required<T: Clone>(value: &Option<T>, field: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| invalid(field, "missing"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let field = if e.message().starts_with("unknown field") {
                e.message().split('`').nth(1).map(str::to_string)
            } else {
                e.span().and_then(|span| key_at(text, span.start))
            };
            invalid(field.as_deref().unwrap_or("config"), e.message())
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self)
            .map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }

    pub fn market_spec(&self) -> Result<MarketSpec, CliError> {
        let m = &self.market;
        let lambda = required(&m.lambda, "market.lambda")?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(
                "market.lambda",
                format!("must be positive and finite, got {lambda}"),
            ));
        }
        let shorthand = m.phi.is_some() || m.phi_tilde.is_some();
        let full = m.customer_types.is_some()
            || m.listing_types.is_some()
            || m.sigma.is_some()
            || m.tau.is_some()
            || m.phi_control.is_some()
            || m.phi_treatment.is_some();
        if shorthand && full {
            return Err(invalid(
                if m.phi.is_some() { "market.phi" } else { "market.phi_tilde" },
                "the homogeneous shorthand (phi, phi_tilde) cannot be combined with sigma, tau or rate matrices",
            ));
        }
        if shorthand || !full {
            let phi = required(&m.phi, "market.phi")?;
            let phi_t = required(&m.phi_tilde, "market.phi_tilde")?;
            return MarketSpec::homogeneous(phi, phi_t, lambda).map_err(|e| spec_error(e, true));
        }
        let sigma = required(&m.sigma, "market.sigma")?;
        let tau = required(&m.tau, "market.tau")?;
        let raw = RawMarketSpec {
            customer_types: m
                .customer_types
                .clone()
                .unwrap_or_else(|| (0..sigma.len()).map(|i| format!("c{i}")).collect()),
            listing_types: m
                .listing_types
                .clone()
                .unwrap_or_else(|| (0..tau.len()).map(|j| format!("l{j}")).collect()),
            phi_control: required(&m.phi_control, "market.phi_control")?,
            phi_treatment: required(&m.phi_treatment, "market.phi_treatment")?,
            sigma,
            tau,
            lambda,
        };
        MarketSpec::try_from(raw).map_err(|e| spec_error(e, false))
    }

    pub fn design(&self) -> Result<Design, CliError> {
        let kind = required(&self.design.kind, "design.kind")?;
        match (kind, self.design.allocation) {
            (DesignKind::GlobalControl | DesignKind::GlobalTreatment, Some(_)) => Err(invalid(
                "design.allocation",
                format!("the {kind} design takes no allocation"),
            )),
            (_, a) => kind
                .with_allocation(a.unwrap_or(DEFAULT_ALLOCATION))
                .map_err(|e| invalid("design.allocation", e.to_string())),
        }
    }

    /// Allocation for commands that compare designs (sweeps).
    pub fn allocation(&self) -> Result<f64, CliError> {
        let a = self.design.allocation.unwrap_or(DEFAULT_ALLOCATION);
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid(
                "design.allocation",
                format!("must lie in (0, 1), got {a}"),
            ));
        }
        Ok(a)
    }

    pub fn n(&self) -> Result<u64, CliError> {
        let n = required(&self.execution.n, "execution.n")?;
        if n == 0 {
            return Err(invalid("execution.n", "must be positive"));
        }
        Ok(n)
    }

    pub fn replications(&self) -> Result<u64, CliError> {
        let r = self.execution.replications.unwrap_or(DEFAULT_REPLICATIONS);
        if r < 2 {
            return Err(invalid(
                "execution.replications",
                format!("at least 2 are needed, got {r}"),
            ));
        }
        Ok(r)
    }

    pub fn master_seed(&self) -> u64 {
        self.execution.master_seed.unwrap_or(0)
    }

    pub fn gte(&self) -> Result<GteReference, CliError> {
        match self.execution.gte.unwrap_or(GteSource::Analytic) {
            GteSource::Analytic => {
                if self.execution.gte_replications.is_some() {
                    return Err(invalid(
                        "execution.gte_replications",
                        "only used with gte = \"montecarlo\"",
                    ));
                }
                Ok(GteReference::Analytic)
            }
            GteSource::MonteCarlo => {
                let replications = match self.execution.gte_replications {
                    Some(r) => r,
                    None => self.replications()?,
                };
                if replications == 0 {
                    return Err(invalid("execution.gte_replications", "must be positive"));
                }
                Ok(GteReference::MonteCarlo { replications })
            }
        }
    }

    pub fn tiny_market(&self) -> Result<TinyMarket, CliError> {
        let o = &self.oracle;
        let prob = required(&o.prob, "oracle.prob")?;
        let mut market =
            TinyMarket::new(prob).map_err(|e| invalid("oracle.prob", e.to_string()))?;
        if let Some(arms) = &o.customer_arms {
            market = market
                .with_customer_arms(arms.clone())
                .map_err(|e| invalid("oracle.customer_arms", e.to_string()))?;
        }
        if let Some(arms) = &o.listing_arms {
            market = market
                .with_listing_arms(arms.clone())
                .map_err(|e| invalid("oracle.listing_arms", e.to_string()))?;
        }
        market
            .design()
            .map_err(|e| invalid("oracle.customer_arms", e.to_string()))?;
        Ok(market)
    }
}

/// Dotted `section.key` of the assignment on the line holding `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let before = text.get(..offset)?;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split_once('=')?.0.trim();
    let section = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    Some(match section {
        Some(s) => format!("{s}.{key}"),
        None => key.to_string(),
    })
}

/// Names the offending market field. The core validation messages start
/// with the field they are about.
fn spec_error(e: Error, shorthand: bool) -> CliError {
    let message = e.to_string();
    let first = match &e {
        Error::InvalidSpec(m) => m.split_whitespace().next().unwrap_or(""),
        _ => "",
    };
    let field = match (first, shorthand) {
        ("phi_control", true) => "market.phi",
        ("phi_treatment", true) => "market.phi_tilde",
        ("phi_control", false) => "market.phi_control",
        ("phi_treatment", false) => "market.phi_treatment",
        ("sigma", _) => "market.sigma",
        ("tau", _) => "market.tau",
        ("lambda", _) => "market.lambda",
        _ => "market",
    };
    invalid(field, message)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: CliError) -> String {
        match e {
            CliError::Config { field, .. } => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn shorthand_market() {
        let c = RunConfig::parse("[market]\nlambda = 2.0\nphi = 0.3\nphi_tilde = 0.4\n").unwrap();
        assert_eq!(
            c.market_spec().unwrap(),
            MarketSpec::homogeneous(0.3, 0.4, 2.0).unwrap()
        );
    }

    #[test]
    fn full_market() {
        let text = r#"
[market]
lambda = 1.0
sigma = [0.5, 0.5]
tau = [1.0]
phi_control = [[0.2], [0.4]]
phi_treatment = [[0.3], [0.5]]
"#;
        let spec = RunConfig::parse(text).unwrap().market_spec().unwrap();
        assert_eq!(spec.customer_types(), ["c0", "c1"]);
        assert_eq!(spec.phi_treatment()[1][0], 0.5);
    }

    #[test]
    fn shorthand_and_matrices_conflict() {
        let c =
            RunConfig::parse("[market]\nlambda = 1.0\nphi = 0.3\nphi_tilde = 0.4\ntau = [1.0]\n")
                .unwrap();
        assert_eq!(field_of(c.market_spec().unwrap_err()), "market.phi");
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let e = RunConfig::parse("[market]\nlambda = 1.0\nphi_tlde = 0.4\n").unwrap_err();
        assert_eq!(field_of(e), "phi_tlde");
        let e = RunConfig::parse("[markt]\nlambda = 1.0\n").unwrap_err();
        assert_eq!(field_of(e), "markt");
        let e = RunConfig::parse("[market]\nphi = 0.2\nlambda = \"one\"\n").unwrap_err();
        assert_eq!(field_of(e), "market.lambda");
    }

    #[test]
    fn errors_name_the_field() {
        let c = RunConfig::parse("[market]\nphi = 0.3\nphi_tilde = 0.4\n").unwrap();
        assert_eq!(field_of(c.market_spec().unwrap_err()), "market.lambda");
        let c = RunConfig::parse("[market]\nlambda = 1.0\nphi = -0.3\nphi_tilde = 0.4\n").unwrap();
        assert_eq!(field_of(c.market_spec().unwrap_err()), "market.phi");
        let text = "[market]\nlambda = 1.0\nsigma = [0.4, 0.4]\ntau = [1.0]\nphi_control = [[0.2], [0.4]]\nphi_treatment = [[0.3], [0.5]]\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(field_of(c.market_spec().unwrap_err()), "market.sigma");
        let c = RunConfig::parse("[design]\nkind = \"cr\"\nallocation = 1.5\n").unwrap();
        assert_eq!(field_of(c.design().unwrap_err()), "design.allocation");
        let c = RunConfig::parse("[design]\nkind = \"gc\"\nallocation = 0.5\n").unwrap();
        assert_eq!(field_of(c.design().unwrap_err()), "design.allocation");
        let c = RunConfig::parse("[execution]\nreplications = 1\n").unwrap();
        assert_eq!(
            field_of(c.replications().unwrap_err()),
            "execution.replications"
        );
    }

    #[test]
    fn design_defaults_to_even_split() {
        let c = RunConfig::parse("[design]\nkind = \"lr\"\n").unwrap();
        assert_eq!(c.design().unwrap(), Design::lr(0.5).unwrap());
        let c = RunConfig::parse("[design]\nkind = \"gt\"\n").unwrap();
        assert_eq!(c.design().unwrap(), Design::GlobalTreatment);
    }

    #[test]
    fn gte_reference() {
        let c = RunConfig::parse("[execution]\nreplications = 40\ngte = \"montecarlo\"\n").unwrap();
        assert_eq!(
            c.gte().unwrap(),
            GteReference::MonteCarlo { replications: 40 }
        );
        let c = RunConfig::parse("[execution]\ngte_replications = 5\n").unwrap();
        assert_eq!(field_of(c.gte().unwrap_err()), "execution.gte_replications");
    }

    #[test]
    fn tiny_market_labels() {
        let text = "[oracle]\nprob = [[0.5, 0.5]]\nlisting_arms = [\"treatment\", \"control\"]\n";
        let m = RunConfig::parse(text).unwrap().tiny_market().unwrap();
        assert_eq!(m.listing_arms(), [Arm::Treatment, Arm::Control]);
        let text = "[oracle]\nprob = [[0.5, 0.5]]\nlisting_arms = [\"treatment\"]\n";
        let e = RunConfig::parse(text).unwrap().tiny_market().unwrap_err();
        assert_eq!(field_of(e), "oracle.listing_arms");
    }
}
