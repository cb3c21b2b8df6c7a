//! Experiments on finite markets: splitting a market into treatment and
//! control groups, the difference-in-means estimators, and replicated runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Arm, Design};
use crate::error::{Error, Result};
use crate::market_sim::{BookingTally, FiniteMarket, Simulator};
use crate::meanfield::{gte_limit, MarketSpec};
use crate::stats::{mean_and_variance, replication_seed, substream};

/// Two-sided normal quantile for the reported 95% interval.
const Z_95: f64 = 1.959_963_984_540_054;

/// `floor(x * y)` that does not lose a unit to rounding when the exact
/// product is an integer (e.g. `0.29 * 100`).
fn floor_product(x: f64, y: f64) -> u64 {
    let p = x * y;
    (p + 4.0 * f64::EPSILON * p.abs().max(1.0)).floor() as u64
}

/// Splits `total` units over types with the given masses: floors first,
/// then the leftover units go to the largest fractional parts (lowest index
/// on ties).
pub fn apportion(total: u64, masses: &[f64]) -> Vec<u64> {
    let sum: f64 = masses.iter().sum();
    let exact: Vec<f64> = masses.iter().map(|m| m / sum * total as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    let mut assigned: u64 = counts.iter().sum();
    for &i in order.iter().cycle() {
        if assigned >= total {
            break;
        }
        counts[i] += 1;
        assigned += 1;
    }
    // Rounding can only overshoot by a unit or so; take it back from the
    // smallest fractional parts.
    for &i in order.iter().rev().cycle() {
        if assigned <= total {
            break;
        }
        if counts[i] > 0 {
            counts[i] -= 1;
            assigned -= 1;
        }
    }
    counts
}

/// Number of customers facing `n` listings, `floor(lambda * n)`.
pub fn customer_count(lambda: f64, n: u64) -> u64 {
    floor_product(lambda, n as f64)
}

/// Finite market of `n` listings running `design`.
///
/// Type counts are apportioned by largest remainder. A randomized design
/// splits every type on the randomized side into a treated part of
/// `floor(a * count)` units and a control part with the rest, which gives
/// treated fractions that converge to `a`.
pub fn build_experiment_market(spec: &MarketSpec, design: Design, n: u64) -> Result<FiniteMarket> {
    if n == 0 {
        return Err(Error::InvalidMarket("n must be at least 1".into()));
    }
    let listings = apportion(n, spec.tau());
    let customers = apportion(customer_count(spec.lambda(), n), spec.sigma());
    let (phi, phi_t) = (spec.phi_control(), spec.phi_treatment());

    let market = match design {
        Design::GlobalControl | Design::GlobalTreatment => {
            let arm = if design == Design::GlobalControl {
                Arm::Control
            } else {
                Arm::Treatment
            };
            FiniteMarket::from_rates(listings.clone(), customers.clone(), spec.phi(arm))?
                .with_listing_arms(vec![arm; listings.len()])?
                .with_customer_arms(vec![arm; customers.len()])?
        }
        Design::CustomerRandomized(a) => {
            let (counts, arms) = split(&customers, a.get());
            check_groups(&counts, &arms, a.get(), n)?;
            let rows: Vec<Vec<f64>> = arms
                .iter()
                .enumerate()
                .map(|(i, arm)| match arm {
                    Arm::Treatment => phi_t[i / 2].clone(),
                    Arm::Control => phi[i / 2].clone(),
                })
                .collect();
            FiniteMarket::from_rates(listings, counts, &rows)?.with_customer_arms(arms)?
        }
        Design::ListingRandomized(a) => {
            let (counts, arms) = split(&listings, a.get());
            check_groups(&counts, &arms, a.get(), n)?;
            let rows: Vec<Vec<f64>> = phi
                .iter()
                .zip(phi_t)
                .map(|(row, row_t)| {
                    arms.iter()
                        .enumerate()
                        .map(|(j, arm)| match arm {
                            Arm::Treatment => row_t[j / 2],
                            Arm::Control => row[j / 2],
                        })
                        .collect()
                })
                .collect();
            FiniteMarket::from_rates(counts, customers, &rows)?.with_listing_arms(arms)?
        }
    };
    Ok(market)
}

/// Each type `i` becomes `(i, treated)` at position `2i` and `(i, control)`
/// at `2i + 1`.
fn split(counts: &[u64], a: f64) -> (Vec<u64>, Vec<Arm>) {
    let mut out = Vec::with_capacity(2 * counts.len());
    let mut arms = Vec::with_capacity(2 * counts.len());
    for &c in counts {
        let treated = floor_product(a, c as f64).min(c);
        out.extend([treated, c - treated]);
        arms.extend([Arm::Treatment, Arm::Control]);
    }
    (out, arms)
}

fn check_groups(counts: &[u64], arms: &[Arm], allocation: f64, n: u64) -> Result<()> {
    for (arm, group) in [(Arm::Treatment, "treatment"), (Arm::Control, "control")] {
        let size: u64 = counts
            .iter()
            .zip(arms)
            .filter(|(_, a)| **a == arm)
            .map(|(c, _)| c)
            .sum();
        if size == 0 {
            return Err(Error::EmptyGroup {
                allocation,
                group,
                n,
            });
        }
    }
    Ok(())
}

/// Group sizes and labels needed to turn a tally into an estimate.
#[derive(Debug, Clone)]
struct Estimator {
    design: Design,
    n: f64,
    m: f64,
    treated_size: f64,
    control_size: f64,
    labels: Vec<Option<Arm>>,
}

impl Estimator {
    fn new(design: Design, market: &FiniteMarket) -> Result<Self> {
        let (labels, treated, control) = match design {
            Design::CustomerRandomized(_) => (
                market.customer_arms().to_vec(),
                market.customers_in(Arm::Treatment),
                market.customers_in(Arm::Control),
            ),
            Design::ListingRandomized(_) => (
                market.listing_arms().to_vec(),
                market.listings_in(Arm::Treatment),
                market.listings_in(Arm::Control),
            ),
            _ => (Vec::new(), 1, 1),
        };
        if let Some(a) = design.allocation() {
            if labels.iter().any(Option::is_none) {
                return Err(Error::InvalidDesign(format!(
                    "market has unlabelled types on the side randomized by {design}"
                )));
            }
            for (size, group) in [(treated, "treatment"), (control, "control")] {
                if size == 0 {
                    return Err(Error::EmptyGroup {
                        allocation: a.get(),
                        group,
                        n: market.n_listings(),
                    });
                }
            }
        }
        Ok(Estimator {
            design,
            n: market.n_listings() as f64,
            m: market.n_customers() as f64,
            treated_size: treated as f64,
            control_size: control as f64,
            labels,
        })
    }

    fn bookings_in(&self, by_type: &[u64], arm: Arm) -> f64 {
        by_type
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == Some(arm))
            .map(|(b, _)| *b)
            .sum::<u64>() as f64
    }

    fn estimate(&self, tally: &BookingTally) -> f64 {
        let difference = |by_type: &[u64]| {
            self.bookings_in(by_type, Arm::Treatment) / self.treated_size
                - self.bookings_in(by_type, Arm::Control) / self.control_size
        };
        match self.design {
            Design::GlobalControl | Design::GlobalTreatment => tally.total_bookings as f64 / self.n,
            Design::CustomerRandomized(_) => {
                self.m / self.n * difference(&tally.bookings_by_customer_type)
            }
            Design::ListingRandomized(_) => difference(&tally.bookings_by_listing_type),
        }
    }
}

/// Estimate of the treatment effect from one realization: for CR,
/// `(M / N) (Q1 / M1 - Q0 / M0)` over customer groups; for LR,
/// `Q1 / N1 - Q0 / N0` over listing groups; for the global designs the
/// booking rate `Q / N`.
pub fn estimate(tally: &BookingTally, design: Design, market: &FiniteMarket) -> Result<f64> {
    Ok(Estimator::new(design, market)?.estimate(tally))
}

/// Per-replication estimates, in replication order.
pub fn replicate_estimates(
    spec: &MarketSpec,
    design: Design,
    n: u64,
    replications: u64,
    master_seed: u64,
) -> Result<Vec<f64>> {
    let market = build_experiment_market(spec, design, n)?;
    let estimator = Estimator::new(design, &market)?;
    Ok((0..replications)
        .into_par_iter()
        .map_init(
            || Simulator::new(&market),
            |sim, i| estimator.estimate(&sim.run(replication_seed(master_seed, i))),
        )
        .collect())
}

/// What the estimator mean is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum GteReference {
    /// The large-market limit of the GTE.
    Analytic,
    /// Difference of simulated global-treatment and global-control booking
    /// rates at the same `n`, each averaged over `replications` runs on
    /// seed streams disjoint from the experiment's.
    MonteCarlo { replications: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub gte: GteReference,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            gte: GteReference::Analytic,
        }
    }
}

/// Summary of replicated runs of one design.
///
/// `mse` is the error of a single experiment, `bias^2 + sd^2` with the
/// per-realization sample variance, not the error of the replication mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replications: u64,
    pub n_listings: u64,
    pub n_customers: u64,
    pub estimator_mean: f64,
    pub estimator_sd: f64,
    pub gte_reference: f64,
    pub gte_source: GteReference,
    pub bias: f64,
    pub relative_bias: Option<f64>,
    pub mse: f64,
    /// `N` times the per-realization sample variance.
    pub scaled_variance: f64,
    /// Half width of the 95% normal interval for the estimator mean.
    pub ci_half_width: f64,
}

impl RunSummary {
    /// Standard error of the estimator mean.
    pub fn standard_error(&self) -> f64 {
        self.estimator_sd / (self.replications as f64).sqrt()
    }
}

pub fn run_replications(
    spec: &MarketSpec,
    design: Design,
    n: u64,
    replications: u64,
    master_seed: u64,
) -> Result<RunSummary> {
    run_replications_with(
        spec,
        design,
        n,
        replications,
        master_seed,
        &RunOptions::default(),
    )
}

pub fn run_replications_with(
    spec: &MarketSpec,
    design: Design,
    n: u64,
    replications: u64,
    master_seed: u64,
    options: &RunOptions,
) -> Result<RunSummary> {
    if replications < 2 {
        return Err(Error::InvalidDesign(format!(
            "at least 2 replications are needed, got {replications}"
        )));
    }
    let market = build_experiment_market(spec, design, n)?;
    let estimates = replicate_estimates(spec, design, n, replications, master_seed)?;
    let (mean, variance) = mean_and_variance(&estimates);
    let gte_reference = match options.gte {
        GteReference::Analytic => gte_limit(spec),
        GteReference::MonteCarlo { replications: r } => {
            let world = |d: Design, tag: u64| -> Result<f64> {
                let rates = replicate_estimates(spec, d, n, r.max(1), substream(master_seed, tag))?;
                Ok(mean_and_variance(&rates).0)
            };
            world(Design::GlobalTreatment, 1)? - world(Design::GlobalControl, 2)?
        }
    };
    let sd = variance.sqrt();
    let bias = mean - gte_reference;
    Ok(RunSummary {
        replications,
        n_listings: market.n_listings(),
        n_customers: market.n_customers(),
        estimator_mean: mean,
        estimator_sd: sd,
        gte_reference,
        gte_source: options.gte,
        bias,
        relative_bias: crate::meanfield::relative(bias, gte_reference),
        mse: bias * bias + variance,
        scaled_variance: market.n_listings() as f64 * variance,
        ci_half_width: Z_95 * sd / (replications as f64).sqrt(),
    })
}
