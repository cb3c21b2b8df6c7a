//! Experiment designs shared by the analytic engine, the experiment driver
//! and the sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_open, Error, Result};

/// Which consideration matrix a unit (or the whole market) sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treatment,
}

/// Treatment fraction of a randomized design, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Allocation(f64);

impl Allocation {
    pub fn new(value: f64) -> Result<Self> {
        check_unit_open("allocation", value).map(Allocation)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The 50-50 split.
    pub fn half() -> Self {
        Allocation(0.5)
    }
}

impl TryFrom<f64> for Allocation {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Allocation::new(value)
    }
}

impl From<Allocation> for f64 {
    fn from(a: Allocation) -> f64 {
        a.0
    }
}

/// The four ways of running the market: both global worlds and the two
/// randomized designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "allocation", rename_all = "lowercase")]
pub enum Design {
    #[serde(rename = "gc")]
    GlobalControl,
    #[serde(rename = "gt")]
    GlobalTreatment,
    /// Customer-randomized: a fraction of customers is treated.
    #[serde(rename = "cr")]
    CustomerRandomized(Allocation),
    /// Listing-randomized: a fraction of listings is treated.
    #[serde(rename = "lr")]
    ListingRandomized(Allocation),
}

impl Design {
    pub fn cr(allocation: f64) -> Result<Self> {
        Allocation::new(allocation).map(Design::CustomerRandomized)
    }

    pub fn lr(allocation: f64) -> Result<Self> {
        Allocation::new(allocation).map(Design::ListingRandomized)
    }

    pub fn kind(&self) -> DesignKind {
        match self {
            Design::GlobalControl => DesignKind::GlobalControl,
            Design::GlobalTreatment => DesignKind::GlobalTreatment,
            Design::CustomerRandomized(_) => DesignKind::Cr,
            Design::ListingRandomized(_) => DesignKind::Lr,
        }
    }

    pub fn allocation(&self) -> Option<Allocation> {
        match self {
            Design::CustomerRandomized(a) | Design::ListingRandomized(a) => Some(*a),
            _ => None,
        }
    }

    pub fn is_randomized(&self) -> bool {
        self.allocation().is_some()
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.allocation() {
            Some(a) => write!(f, "{}({})", self.kind(), a.get()),
            None => write!(f, "{}", self.kind()),
        }
    }
}

/// Design family without an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    #[serde(rename = "gc")]
    GlobalControl,
    #[serde(rename = "gt")]
    GlobalTreatment,
    Cr,
    Lr,
}

impl DesignKind {
    /// Attaches an allocation; global kinds ignore it.
    pub fn with_allocation(self, allocation: f64) -> Result<Design> {
        match self {
            DesignKind::GlobalControl => Ok(Design::GlobalControl),
            DesignKind::GlobalTreatment => Ok(Design::GlobalTreatment),
            DesignKind::Cr => Design::cr(allocation),
            DesignKind::Lr => Design::lr(allocation),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DesignKind::GlobalControl => "gc",
            DesignKind::GlobalTreatment => "gt",
            DesignKind::Cr => "cr",
            DesignKind::Lr => "lr",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gc" | "global_control" => Ok(DesignKind::GlobalControl),
            "gt" | "global_treatment" => Ok(DesignKind::GlobalTreatment),
            "cr" => Ok(DesignKind::Cr),
            "lr" => Ok(DesignKind::Lr),
            other => Err(Error::InvalidDesign(format!(
                "unknown design kind {other:?}; expected one of gc, gt, cr, lr"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_rejects_endpoints() {
        assert!(Allocation::new(0.0).is_err());
        assert!(Allocation::new(1.0).is_err());
        assert!(Allocation::new(f64::NAN).is_err());
        assert_eq!(Allocation::new(0.3).unwrap().get(), 0.3);
    }

    #[test]
    fn kind_parses_case_insensitively() {
        assert_eq!("CR".parse::<DesignKind>().unwrap(), DesignKind::Cr);
        assert_eq!(
            "gt".parse::<DesignKind>().unwrap(),
            DesignKind::GlobalTreatment
        );
        assert!("ab".parse::<DesignKind>().is_err());
    }

    #[test]
    fn global_kinds_ignore_allocation() {
        assert_eq!(
            DesignKind::GlobalControl.with_allocation(7.0).unwrap(),
            Design::GlobalControl
        );
        assert!(DesignKind::Lr.with_allocation(1.5).is_err());
    }
}
