//! Parameter sweeps over relative demand, allocation, effect size or
//! market size, and a design recommender built on the analytic engine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{Design, DesignKind};
use crate::error::{Error, Result};
use crate::experiment::{run_replications_with, GteReference, RunOptions};
use crate::meanfield::{asymptotic_bias, relative, scaled_variance_limit, MarketSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lambda,
    Allocation,
    /// Multiplicative lift: the treatment matrix becomes `alpha` times the
    /// control matrix.
    Alpha,
    N,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Allocation => "allocation",
            SweepAxis::Alpha => "alpha",
            SweepAxis::N => "n",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(SweepAxis::Lambda),
            "allocation" | "alloc" => Ok(SweepAxis::Allocation),
            "alpha" => Ok(SweepAxis::Alpha),
            "n" => Ok(SweepAxis::N),
            other => Err(Error::InvalidDesign(format!(
                "unknown sweep axis {other:?}; expected lambda, allocation, alpha or n"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Analytic,
    MonteCarlo,
    Both,
}

impl SweepMode {
    fn analytic(self) -> bool {
        matches!(self, SweepMode::Analytic | SweepMode::Both)
    }

    fn monte_carlo(self) -> bool {
        matches!(self, SweepMode::MonteCarlo | SweepMode::Both)
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(SweepMode::Analytic),
            "montecarlo" | "monte_carlo" | "mc" => Ok(SweepMode::MonteCarlo),
            "both" => Ok(SweepMode::Both),
            other => Err(Error::InvalidDesign(format!(
                "unknown mode {other:?}; expected analytic, montecarlo or both"
            ))),
        }
    }
}

/// One sweep: `values` along `axis`, every design kind in `designs` at
/// every value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: MarketSpec,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Randomized design kinds only (CR, LR).
    pub designs: Vec<DesignKind>,
    /// Allocation used when the axis is not the allocation.
    pub allocation: f64,
    /// Market size; required for Monte Carlo cells unless the axis is `n`.
    pub n: Option<u64>,
    pub mode: SweepMode,
    pub replications: u64,
    pub master_seed: u64,
    pub gte: GteReference,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidDesign(msg));
        if self.values.is_empty() {
            return invalid("sweep values must not be empty".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return invalid("sweep values must be finite".into());
        }
        if self.values.windows(2).any(|w| w[1] < w[0]) {
            return invalid("sweep values must be sorted ascending".into());
        }
        if self.designs.is_empty() {
            return invalid("at least one design is required".into());
        }
        if let Some(d) = self
            .designs
            .iter()
            .find(|d| !matches!(d, DesignKind::Cr | DesignKind::Lr))
        {
            return invalid(format!("sweeps compare randomized designs; {d} is not one"));
        }
        if self.axis == SweepAxis::N && self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return invalid("n values must be positive integers".into());
        }
        if self.mode.monte_carlo() && self.axis != SweepAxis::N && self.n.is_none() {
            return invalid("Monte Carlo sweeps need n".into());
        }
        if self.mode.monte_carlo() && self.replications < 2 {
            return invalid("Monte Carlo sweeps need at least 2 replications".into());
        }
        Ok(())
    }
}

/// One table row. Missing quantities are `None` (e.g. no standard
/// deviation for an analytic row without `n`); failed cells keep the
/// coordinates and carry the error in `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: f64,
    pub design: DesignKind,
    pub allocation: f64,
    pub lambda: f64,
    pub n: Option<u64>,
    pub reps: Option<u64>,
    pub est: Option<f64>,
    pub gte: Option<f64>,
    pub bias: Option<f64>,
    pub rel_bias: Option<f64>,
    pub sd: Option<f64>,
    pub mse: Option<f64>,
    pub scaled_var: Option<f64>,
    pub mode: SweepMode,
    pub status: String,
}

/// Column names in output order.
pub const COLUMNS: [&str; 15] = [
    "axis",
    "design",
    "allocation",
    "lambda",
    "n",
    "reps",
    "est",
    "gte",
    "bias",
    "rel_bias",
    "sd",
    "mse",
    "scaled_var",
    "mode",
    "status",
];

struct Cell {
    spec: MarketSpec,
    allocation: f64,
    n: Option<u64>,
}

fn cell(plan: &SweepPlan, value: f64) -> Result<Cell> {
    let mut c = Cell {
        spec: plan.base.clone(),
        allocation: plan.allocation,
        n: plan.n,
    };
    match plan.axis {
        SweepAxis::Lambda => c.spec = plan.base.with_lambda(value)?,
        SweepAxis::Allocation => c.allocation = value,
        SweepAxis::Alpha => c.spec = plan.base.with_alpha(value)?,
        SweepAxis::N => c.n = Some(value as u64),
    }
    Ok(c)
}

fn empty_row(
    plan: &SweepPlan,
    value: f64,
    kind: DesignKind,
    mode: SweepMode,
    c: Option<&Cell>,
) -> SweepRow {
    let lambda = match (plan.axis, c) {
        (_, Some(c)) => c.spec.lambda(),
        (SweepAxis::Lambda, None) => value,
        _ => plan.base.lambda(),
    };
    SweepRow {
        axis: value,
        design: kind,
        allocation: c.map_or(
            if plan.axis == SweepAxis::Allocation {
                value
            } else {
                plan.allocation
            },
            |c| c.allocation,
        ),
        lambda,
        n: c.and_then(|c| c.n).or(plan.n),
        reps: None,
        est: None,
        gte: None,
        bias: None,
        rel_bias: None,
        sd: None,
        mse: None,
        scaled_var: None,
        mode,
        status: "ok".into(),
    }
}

fn analytic_row(plan: &SweepPlan, value: f64, kind: DesignKind, c: &Cell) -> Result<SweepRow> {
    let design = kind.with_allocation(c.allocation)?;
    let report = asymptotic_bias(&c.spec, design)?;
    let mut row = empty_row(plan, value, kind, SweepMode::Analytic, Some(c));
    row.est = Some(report.estimator_limit);
    row.gte = Some(report.gte_limit);
    row.bias = Some(report.bias);
    row.rel_bias = report.relative_bias;
    if let Some((phi, phi_t)) = c.spec.as_homogeneous() {
        let scaled = scaled_variance_limit(phi, phi_t, c.spec.lambda(), design)?;
        row.scaled_var = Some(scaled);
        if let Some(n) = c.n {
            let variance = scaled / n as f64;
            row.sd = Some(variance.sqrt());
            row.mse = Some(report.bias * report.bias + variance);
        }
    }
    Ok(row)
}

fn monte_carlo_row(plan: &SweepPlan, value: f64, kind: DesignKind, c: &Cell) -> Result<SweepRow> {
    let design = kind.with_allocation(c.allocation)?;
    let n =
        c.n.ok_or_else(|| Error::InvalidDesign("Monte Carlo cell without n".into()))?;
    let options = RunOptions { gte: plan.gte };
    let s = run_replications_with(
        &c.spec,
        design,
        n,
        plan.replications,
        plan.master_seed,
        &options,
    )?;
    let mut row = empty_row(plan, value, kind, SweepMode::MonteCarlo, Some(c));
    row.reps = Some(s.replications);
    row.est = Some(s.estimator_mean);
    row.gte = Some(s.gte_reference);
    row.bias = Some(s.bias);
    row.rel_bias = s.relative_bias;
    row.sd = Some(s.estimator_sd);
    row.mse = Some(s.mse);
    row.scaled_var = Some(s.scaled_variance);
    Ok(row)
}

/// Runs every cell in axis order, then design order, analytic rows before
/// Monte Carlo rows. A cell that fails becomes a row whose `status` holds
/// the error.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for &value in &plan.values {
        for &kind in &plan.designs {
            let c = cell(plan, value);
            let modes = [
                (plan.mode.analytic(), SweepMode::Analytic),
                (plan.mode.monte_carlo(), SweepMode::MonteCarlo),
            ];
            for (_, mode) in modes.iter().filter(|(on, _)| *on) {
                let row = c.as_ref().map_err(Clone::clone).and_then(|c| match mode {
                    SweepMode::Analytic => analytic_row(plan, value, kind, c),
                    _ => monte_carlo_row(plan, value, kind, c),
                });
                rows.push(row.unwrap_or_else(|e| {
                    let mut r = empty_row(plan, value, kind, *mode, c.as_ref().ok());
                    r.status = e.to_string();
                    r
                }));
            }
        }
    }
    Ok(rows)
}

/// Allocations `0.1, 0.2, ..., 0.9` over which bias bands are taken.
pub fn band_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Smallest and largest asymptotic bias of a design kind over
/// [`band_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBand {
    pub min: f64,
    pub max: f64,
}

pub fn bias_band(spec: &MarketSpec, kind: DesignKind) -> Result<BiasBand> {
    let mut band = BiasBand {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    for a in band_grid() {
        let b = asymptotic_bias(spec, kind.with_allocation(a)?)?.bias;
        band.min = band.min.min(b);
        band.max = band.max.max(b);
    }
    Ok(band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Bias,
    Variance,
    Mse,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bias" => Ok(Objective::Bias),
            "variance" => Ok(Objective::Variance),
            "mse" => Ok(Objective::Mse),
            other => Err(Error::InvalidDesign(format!(
                "unknown objective {other:?}; expected bias, variance or mse"
            ))),
        }
    }
}

/// Best design on the recommendation grid and its predicted error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub design: Design,
    pub objective: Objective,
    pub bias: f64,
    pub relative_bias: Option<f64>,
    /// Scaled variance limit; `None` for heterogeneous markets.
    pub scaled_variance: Option<f64>,
    /// Needs both `n` and a homogeneous market.
    pub sd: Option<f64>,
    pub mse: Option<f64>,
}

/// Allocations `0.05, 0.06, ..., 0.95` searched by [`recommend_design`].
/// The endpoints are kept away from 0 and 1 so the recommendation is a
/// runnable experiment.
pub fn recommendation_grid() -> Vec<f64> {
    (5..=95).map(|i| i as f64 / 100.0).collect()
}

/// Scores closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Grid search over CR and LR designs. Ties (scores within a relative
/// 1e-12) go to the allocation nearest 0.5, then to CR.
pub fn recommend_design(
    spec: &MarketSpec,
    objective: Objective,
    n: Option<u64>,
) -> Result<Recommendation> {
    let homogeneous = spec.as_homogeneous();
    if objective != Objective::Bias && homogeneous.is_none() {
        return Err(Error::VarianceUnavailable);
    }
    if objective == Objective::Mse && n.is_none() {
        return Err(Error::InvalidDesign(
            "the mse objective needs a market size n; the bias-variance tradeoff depends on it"
                .into(),
        ));
    }
    if n == Some(0) {
        return Err(Error::InvalidDesign("n must be at least 1".into()));
    }

    let mut best: Option<(f64, Recommendation)> = None;
    for kind in [DesignKind::Cr, DesignKind::Lr] {
        for a in recommendation_grid() {
            let design = kind.with_allocation(a)?;
            let report = asymptotic_bias(spec, design)?;
            let scaled_variance = homogeneous
                .map(|(phi, phi_t)| scaled_variance_limit(phi, phi_t, spec.lambda(), design))
                .transpose()?;
            let per_run = scaled_variance.zip(n).map(|(v, n)| v / n as f64);
            let candidate = Recommendation {
                design,
                objective,
                bias: report.bias,
                relative_bias: relative(report.bias, report.gte_limit),
                scaled_variance,
                sd: per_run.map(f64::sqrt),
                mse: per_run.map(|v| report.bias * report.bias + v),
            };
            let score = match objective {
                Objective::Bias => report.bias.abs(),
                Objective::Variance => scaled_variance.expect("homogeneous"),
                Objective::Mse => candidate.mse.expect("homogeneous with n"),
            };
            let better = match &best {
                None => true,
                Some((best_score, incumbent)) => {
                    let tolerance = TIE_TOLERANCE * best_score.abs().max(f64::MIN_POSITIVE);
                    if score < best_score - tolerance {
                        true
                    } else if score <= best_score + tolerance {
                        preferred_on_tie(&candidate.design, &incumbent.design)
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((score, candidate));
            }
        }
    }
    Ok(best.expect("grid is not empty").1)
}

fn preferred_on_tie(candidate: &Design, incumbent: &Design) -> bool {
    let distance = |d: &Design| (d.allocation().map_or(0.5, |a| a.get()) - 0.5).abs();
    let (dc, di) = (distance(candidate), distance(incumbent));
    if (dc - di).abs() > 1e-12 {
        return dc < di;
    }
    candidate.kind() == DesignKind::Cr && incumbent.kind() != DesignKind::Cr
}
