//! Exact moments of tiny markets by exhaustive enumeration of the booking
//! process: every consideration outcome, every application choice and
//! every acceptance choice.
//!
//! Used to check the simulator independently of any large-market
//! approximation, so probabilities are given per customer-listing pair.

use serde::{Deserialize, Serialize};

use crate::design::{Allocation, Arm, Design};
use crate::error::{Error, Result};
use crate::experiment::estimate;
use crate::market_sim::{FiniteMarket, Simulator};
use crate::stats::{mean_and_variance, replication_seed, CompensatedSum};

/// Largest number of customer-listing pairs that will be enumerated.
pub const PAIR_BUDGET: usize = 12;

/// A market small enough to enumerate. `prob[i][j]` is the probability
/// that customer `i` considers listing `j`. Every unit carries a label;
/// labels determine the experiment (see [`TinyMarket::design`]).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TinyMarket {
    prob: Vec<Vec<f64>>,
    customer_arms: Vec<Arm>,
    listing_arms: Vec<Arm>,
}

impl TinyMarket {
    /// All units start in the control arm.
    pub fn new(prob: Vec<Vec<f64>>) -> Result<Self> {
        let customers = prob.len();
        let listings = prob.first().map_or(0, Vec::len);
        if customers == 0 || listings == 0 || prob.iter().any(|r| r.len() != listings) {
            return Err(Error::InvalidMarket(
                "tiny market needs a non-empty rectangular probability matrix".into(),
            ));
        }
        if customers * listings > PAIR_BUDGET {
            return Err(Error::BudgetExceeded {
                customers,
                listings,
                budget: PAIR_BUDGET,
            });
        }
        if let Some(p) = prob.iter().flatten().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidMarket(format!(
                "probabilities must lie in [0, 1], got {p}"
            )));
        }
        Ok(TinyMarket {
            customer_arms: vec![Arm::Control; customers],
            listing_arms: vec![Arm::Control; listings],
            prob,
        })
    }

    /// Same probability for every pair.
    pub fn uniform(customers: usize, listings: usize, p: f64) -> Result<Self> {
        TinyMarket::new(vec![vec![p; listings]; customers])
    }

    pub fn with_customer_arms(mut self, arms: Vec<Arm>) -> Result<Self> {
        if arms.len() != self.customers() {
            return Err(Error::InvalidMarket(format!(
                "{} labels for {} customers",
                arms.len(),
                self.customers()
            )));
        }
        self.customer_arms = arms;
        Ok(self)
    }

    pub fn with_listing_arms(mut self, arms: Vec<Arm>) -> Result<Self> {
        if arms.len() != self.listings() {
            return Err(Error::InvalidMarket(format!(
                "{} labels for {} listings",
                arms.len(),
                self.listings()
            )));
        }
        self.listing_arms = arms;
        Ok(self)
    }

    pub fn customers(&self) -> usize {
        self.prob.len()
    }

    pub fn listings(&self) -> usize {
        self.prob[0].len()
    }

    pub fn prob(&self) -> &[Vec<f64>] {
        &self.prob
    }

    pub fn customer_arms(&self) -> &[Arm] {
        &self.customer_arms
    }

    pub fn listing_arms(&self) -> &[Arm] {
        &self.listing_arms
    }

    /// CR when customers carry both labels, LR when listings do, otherwise
    /// the global design of the common label. Mixed labels on both sides
    /// are rejected.
    pub fn design(&self) -> Result<Design> {
        let mixed = |arms: &[Arm]| -> Option<f64> {
            let treated = arms.iter().filter(|a| **a == Arm::Treatment).count();
            (treated > 0 && treated < arms.len()).then(|| treated as f64 / arms.len() as f64)
        };
        match (mixed(&self.customer_arms), mixed(&self.listing_arms)) {
            (Some(_), Some(_)) => Err(Error::InvalidDesign(
                "both sides carry mixed labels; label customers (CR) or listings (LR), not both"
                    .into(),
            )),
            (Some(a), None) => Ok(Design::CustomerRandomized(Allocation::new(a)?)),
            (None, Some(a)) => Ok(Design::ListingRandomized(Allocation::new(a)?)),
            (None, None) => {
                if self.customer_arms[0] != self.listing_arms[0] {
                    return Err(Error::InvalidDesign(
                        "customers and listings are labelled with different arms".into(),
                    ));
                }
                Ok(match self.customer_arms[0] {
                    Arm::Control => Design::GlobalControl,
                    Arm::Treatment => Design::GlobalTreatment,
                })
            }
        }
    }

    /// The same market for the simulator: every unit becomes its own type.
    pub fn to_finite_market(&self) -> Result<FiniteMarket> {
        FiniteMarket::new(
            vec![1; self.listings()],
            vec![1; self.customers()],
            self.prob.clone(),
        )?
        .with_customer_arms(self.customer_arms.clone())?
        .with_listing_arms(self.listing_arms.clone())
    }
}

/// Exact moments of a tiny market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub design: Design,
    /// Sum of all enumerated outcome weights; 1 up to rounding.
    pub total_mass: f64,
    pub expected_bookings: f64,
    /// Probability that each listing is booked.
    pub bookings_by_listing: Vec<f64>,
    /// Probability that each customer is booked.
    pub bookings_by_customer: Vec<f64>,
    pub estimator_mean: f64,
    pub estimator_variance: f64,
}

impl ExactMoments {
    /// Expected bookings among the units of `arm` on the randomized side
    /// (customers for CR, listings otherwise).
    pub fn group_bookings(&self, market: &TinyMarket, arm: Arm) -> f64 {
        let (values, arms) = match self.design {
            Design::CustomerRandomized(_) => (&self.bookings_by_customer, market.customer_arms()),
            _ => (&self.bookings_by_listing, market.listing_arms()),
        };
        values
            .iter()
            .zip(arms)
            .filter(|(_, a)| **a == arm)
            .map(|(v, _)| v)
            .sum()
    }
}

struct Accumulator {
    mass: CompensatedSum,
    bookings: CompensatedSum,
    by_listing: Vec<CompensatedSum>,
    by_customer: Vec<CompensatedSum>,
    estimate: CompensatedSum,
    estimate_sq: CompensatedSum,
}

/// What a terminal outcome's estimator is, given who got booked.
struct Scorer {
    design: Design,
    customer_treated: Vec<bool>,
    listing_treated: Vec<bool>,
    n: f64,
    m: f64,
    treated: f64,
    control: f64,
}

impl Scorer {
    fn new(market: &TinyMarket, design: Design) -> Self {
        let customer_treated: Vec<bool> = market
            .customer_arms
            .iter()
            .map(|a| *a == Arm::Treatment)
            .collect();
        let listing_treated: Vec<bool> = market
            .listing_arms
            .iter()
            .map(|a| *a == Arm::Treatment)
            .collect();
        let side = match design {
            Design::CustomerRandomized(_) => &customer_treated,
            _ => &listing_treated,
        };
        let treated = side.iter().filter(|t| **t).count() as f64;
        Scorer {
            design,
            n: market.listings() as f64,
            m: market.customers() as f64,
            control: side.len() as f64 - treated,
            treated,
            customer_treated,
            listing_treated,
        }
    }

    fn score(&self, listing_booked: &[bool], customer_booked: &[bool]) -> f64 {
        let difference = |booked: &[bool], treated: &[bool]| {
            let q1 = booked
                .iter()
                .zip(treated)
                .filter(|(b, t)| **b && **t)
                .count() as f64;
            let q0 = booked
                .iter()
                .zip(treated)
                .filter(|(b, t)| **b && !**t)
                .count() as f64;
            q1 / self.treated - q0 / self.control
        };
        match self.design {
            Design::CustomerRandomized(_) => {
                self.m / self.n * difference(customer_booked, &self.customer_treated)
            }
            Design::ListingRandomized(_) => difference(listing_booked, &self.listing_treated),
            _ => listing_booked.iter().filter(|b| **b).count() as f64 / self.n,
        }
    }
}

/// Enumerates the booking process of `market` exhaustively.
pub fn exact_expectations(market: &TinyMarket) -> Result<ExactMoments> {
    let design = market.design()?;
    let (m, n) = (market.customers(), market.listings());
    let scorer = Scorer::new(market, design);
    let mut acc = Accumulator {
        mass: CompensatedSum::new(),
        bookings: CompensatedSum::new(),
        by_listing: vec![CompensatedSum::new(); n],
        by_customer: vec![CompensatedSum::new(); m],
        estimate: CompensatedSum::new(),
        estimate_sq: CompensatedSum::new(),
    };

    let pairs = m * n;
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); m];
    for mask in 0u32..(1 << pairs) {
        let mut weight = 1.0;
        for (i, set) in sets.iter_mut().enumerate() {
            set.clear();
            for j in 0..n {
                let p = market.prob[i][j];
                if mask >> (i * n + j) & 1 == 1 {
                    weight *= p;
                    set.push(j);
                } else {
                    weight *= 1.0 - p;
                }
            }
        }
        if weight == 0.0 {
            continue;
        }
        let mut applicants: Vec<Vec<usize>> = vec![Vec::new(); n];
        apply(&sets, 0, weight, &mut applicants, &scorer, &mut acc);
    }

    let mean = acc.estimate.value();
    let variance = (acc.estimate_sq.value() - mean * mean).max(0.0);
    Ok(ExactMoments {
        design,
        total_mass: acc.mass.value(),
        expected_bookings: acc.bookings.value(),
        bookings_by_listing: acc.by_listing.iter().map(CompensatedSum::value).collect(),
        bookings_by_customer: acc.by_customer.iter().map(CompensatedSum::value).collect(),
        estimator_mean: mean,
        estimator_variance: variance,
    })
}

/// Customer `i` onwards picks a listing from its set, uniformly.
fn apply(
    sets: &[Vec<usize>],
    i: usize,
    weight: f64,
    applicants: &mut [Vec<usize>],
    scorer: &Scorer,
    acc: &mut Accumulator,
) {
    if i == sets.len() {
        let mut customer_booked = vec![false; sets.len()];
        let listing_booked: Vec<bool> = applicants.iter().map(|a| !a.is_empty()).collect();
        accept(
            applicants,
            0,
            weight,
            &listing_booked,
            &mut customer_booked,
            scorer,
            acc,
        );
        return;
    }
    if sets[i].is_empty() {
        apply(sets, i + 1, weight, applicants, scorer, acc);
        return;
    }
    let share = weight / sets[i].len() as f64;
    for &j in &sets[i] {
        applicants[j].push(i);
        apply(sets, i + 1, share, applicants, scorer, acc);
        applicants[j].pop();
    }
}

/// Listing `j` onwards accepts one applicant, uniformly.
fn accept(
    applicants: &[Vec<usize>],
    j: usize,
    weight: f64,
    listing_booked: &[bool],
    customer_booked: &mut [bool],
    scorer: &Scorer,
    acc: &mut Accumulator,
) {
    if j == applicants.len() {
        let estimate = scorer.score(listing_booked, customer_booked);
        acc.mass.add(weight);
        acc.bookings
            .add(weight * listing_booked.iter().filter(|b| **b).count() as f64);
        for (s, b) in acc.by_listing.iter_mut().zip(listing_booked) {
            if *b {
                s.add(weight);
            }
        }
        for (s, b) in acc.by_customer.iter_mut().zip(customer_booked.iter()) {
            if *b {
                s.add(weight);
            }
        }
        acc.estimate.add(weight * estimate);
        acc.estimate_sq.add(weight * estimate * estimate);
        return;
    }
    if applicants[j].is_empty() {
        accept(
            applicants,
            j + 1,
            weight,
            listing_booked,
            customer_booked,
            scorer,
            acc,
        );
        return;
    }
    let share = weight / applicants[j].len() as f64;
    for &i in &applicants[j] {
        customer_booked[i] = true;
        accept(
            applicants,
            j + 1,
            share,
            listing_booked,
            customer_booked,
            scorer,
            acc,
        );
        customer_booked[i] = false;
    }
}

/// Simulated counterpart of [`ExactMoments`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TinyMonteCarlo {
    pub replications: u64,
    pub bookings_mean: f64,
    pub bookings_sd: f64,
    pub estimator_mean: f64,
    pub estimator_sd: f64,
}

impl TinyMonteCarlo {
    pub fn bookings_standard_error(&self) -> f64 {
        self.bookings_sd / (self.replications as f64).sqrt()
    }

    pub fn estimator_standard_error(&self) -> f64 {
        self.estimator_sd / (self.replications as f64).sqrt()
    }
}

/// Runs the simulator on the market `replications` times with the usual
/// per-replication seeds.
pub fn simulate_tiny(
    market: &TinyMarket,
    replications: u64,
    master_seed: u64,
) -> Result<TinyMonteCarlo> {
    let design = market.design()?;
    let finite = market.to_finite_market()?;
    let mut sim = Simulator::new(&finite);
    let mut bookings = Vec::with_capacity(replications as usize);
    let mut estimates = Vec::with_capacity(replications as usize);
    for i in 0..replications {
        let tally = sim.run(replication_seed(master_seed, i));
        bookings.push(tally.total_bookings as f64);
        estimates.push(estimate(&tally, design, &finite)?);
    }
    let (bookings_mean, bookings_var) = mean_and_variance(&bookings);
    let (estimator_mean, estimator_var) = mean_and_variance(&estimates);
    Ok(TinyMonteCarlo {
        replications,
        bookings_mean,
        bookings_sd: bookings_var.sqrt(),
        estimator_mean,
        estimator_sd: estimator_var.sqrt(),
    })
}
