//! Exact sampler for one realization of a finite market.
//!
//! Each customer forms a consideration set by including every listing
//! independently, applies to one listing of that set uniformly at random,
//! and every listing that received applications accepts one of them
//! uniformly at random.
//!
//! Listings of the same (extended) type are exchangeable, so the sampler
//! never materializes consideration sets: a customer draws how many
//! listings of each type it considers, picks a type in proportion to those
//! counts, then a uniform listing within the type. That is `O(M |types|)`
//! work instead of `O(M N)`. Acceptance only needs each listing's applicant
//! counts per customer type, not applicant identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::design::Arm;
use crate::error::{Error, Result};

/// A concrete market: per-type unit counts on both sides and the
/// probability that a customer of each type considers a given listing of
/// each type. Types may carry a treatment label (the extended types of an
/// experiment).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMarket {
    listing_counts: Vec<u64>,
    customer_counts: Vec<u64>,
    consider_prob: Vec<Vec<f64>>,
    listing_arms: Vec<Option<Arm>>,
    customer_arms: Vec<Option<Arm>>,
}

impl FiniteMarket {
    /// `consider_prob[g][t]` is the probability that one customer of type
    /// `g` considers one listing of type `t`.
    pub fn new(
        listing_counts: Vec<u64>,
        customer_counts: Vec<u64>,
        consider_prob: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let market = FiniteMarket {
            listing_arms: vec![None; listing_counts.len()],
            customer_arms: vec![None; customer_counts.len()],
            listing_counts,
            customer_counts,
            consider_prob,
        };
        market.validate()?;
        Ok(market)
    }

    /// Builds the probabilities from limiting consideration rates as
    /// `min(phi / N, 1)`. The clip only bites when `N` is smaller than a
    /// rate.
    pub fn from_rates(
        listing_counts: Vec<u64>,
        customer_counts: Vec<u64>,
        phi: &[Vec<f64>],
    ) -> Result<Self> {
        let n = listing_counts.iter().sum::<u64>() as f64;
        let prob = phi
            .iter()
            .map(|row| row.iter().map(|v| (v / n).min(1.0)).collect())
            .collect();
        FiniteMarket::new(listing_counts, customer_counts, prob)
    }

    pub fn with_listing_arms(mut self, arms: Vec<Arm>) -> Result<Self> {
        if arms.len() != self.listing_counts.len() {
            return Err(Error::InvalidMarket(format!(
                "{} listing labels for {} listing types",
                arms.len(),
                self.listing_counts.len()
            )));
        }
        self.listing_arms = arms.into_iter().map(Some).collect();
        Ok(self)
    }

    pub fn with_customer_arms(mut self, arms: Vec<Arm>) -> Result<Self> {
        if arms.len() != self.customer_counts.len() {
            return Err(Error::InvalidMarket(format!(
                "{} customer labels for {} customer types",
                arms.len(),
                self.customer_counts.len()
            )));
        }
        self.customer_arms = arms.into_iter().map(Some).collect();
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidMarket(msg));
        if self.listing_counts.is_empty() || self.customer_counts.is_empty() {
            return invalid("at least one listing type and one customer type are required".into());
        }
        if self.n_listings() == 0 {
            return invalid("the market has no listings".into());
        }
        if self.n_customers() > u64::from(u32::MAX) {
            return invalid(format!(
                "{} customers exceed the supported maximum",
                self.n_customers()
            ));
        }
        let t = self.listing_counts.len();
        if self.consider_prob.len() != self.customer_counts.len()
            || self.consider_prob.iter().any(|r| r.len() != t)
        {
            return invalid(format!(
                "consider_prob must be {}x{t}",
                self.customer_counts.len()
            ));
        }
        if let Some(p) = self
            .consider_prob
            .iter()
            .flatten()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return invalid(format!(
                "consideration probabilities must lie in [0, 1], got {p}"
            ));
        }
        Ok(())
    }

    pub fn n_listings(&self) -> u64 {
        self.listing_counts.iter().sum()
    }

    pub fn n_customers(&self) -> u64 {
        self.customer_counts.iter().sum()
    }

    pub fn listing_counts(&self) -> &[u64] {
        &self.listing_counts
    }

    pub fn customer_counts(&self) -> &[u64] {
        &self.customer_counts
    }

    pub fn consider_prob(&self) -> &[Vec<f64>] {
        &self.consider_prob
    }

    pub fn listing_arms(&self) -> &[Option<Arm>] {
        &self.listing_arms
    }

    pub fn customer_arms(&self) -> &[Option<Arm>] {
        &self.customer_arms
    }

    /// Number of listings whose type carries `arm`.
    pub fn listings_in(&self, arm: Arm) -> u64 {
        count_in(&self.listing_counts, &self.listing_arms, arm)
    }

    pub fn customers_in(&self, arm: Arm) -> u64 {
        count_in(&self.customer_counts, &self.customer_arms, arm)
    }
}

fn count_in(counts: &[u64], arms: &[Option<Arm>], arm: Arm) -> u64 {
    counts
        .iter()
        .zip(arms)
        .filter(|(_, a)| **a == Some(arm))
        .map(|(c, _)| c)
        .sum()
}

/// Applications received by every listing, split by applicant type.
/// Listings are numbered type by type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplicationTally {
    customer_types: usize,
    listing_offsets: Vec<usize>,
    counts: Vec<u32>,
}

impl ApplicationTally {
    fn new(market: &FiniteMarket) -> Self {
        let mut listing_offsets = Vec::with_capacity(market.listing_counts.len() + 1);
        let mut at = 0usize;
        listing_offsets.push(at);
        for c in &market.listing_counts {
            at += *c as usize;
            listing_offsets.push(at);
        }
        let customer_types = market.customer_counts.len();
        ApplicationTally {
            customer_types,
            counts: vec![0; at * customer_types],
            listing_offsets,
        }
    }

    fn clear(&mut self) {
        self.counts.fill(0);
    }

    /// Applications per customer type at listing `index` of `listing_type`.
    pub fn applications(&self, listing_type: usize, index: usize) -> &[u32] {
        let start = self.listing_offsets[listing_type];
        assert!(
            start + index < self.listing_offsets[listing_type + 1],
            "listing index out of range"
        );
        let at = (start + index) * self.customer_types;
        &self.counts[at..at + self.customer_types]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| u64::from(*c)).sum()
    }

    /// Applications sent by each customer type.
    pub fn by_customer_type(&self) -> Vec<u64> {
        let mut out = vec![0; self.customer_types];
        for listing in self.counts.chunks_exact(self.customer_types.max(1)) {
            for (o, c) in out.iter_mut().zip(listing) {
                *o += u64::from(*c);
            }
        }
        out
    }
}

/// Outcome of a realization: booked listings per listing type and accepted
/// customers per customer type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingTally {
    pub bookings_by_listing_type: Vec<u64>,
    pub bookings_by_customer_type: Vec<u64>,
    pub total_bookings: u64,
}

/// Reusable sampler for one market. Holds the per-cell binomial samplers
/// and the application buffer so replications do not reallocate.
#[derive(Debug, Clone)]
pub struct Simulator<'m> {
    market: &'m FiniteMarket,
    binomials: Vec<Binomial>,
    tally: ApplicationTally,
    considered: Vec<u64>,
}

impl<'m> Simulator<'m> {
    pub fn new(market: &'m FiniteMarket) -> Self {
        let binomials = market
            .consider_prob
            .iter()
            .flat_map(|row| {
                row.iter()
                    .zip(&market.listing_counts)
                    .map(|(p, n)| Binomial::new(*n, *p).expect("validated probability"))
            })
            .collect();
        Simulator {
            market,
            binomials,
            tally: ApplicationTally::new(market),
            considered: vec![0; market.listing_counts.len()],
        }
    }

    pub fn market(&self) -> &FiniteMarket {
        self.market
    }

    /// One realization, deterministic in `seed`.
    pub fn run(&mut self, seed: u64) -> BookingTally {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.apply(&mut rng);
        let tally = accept(&self.tally, &self.market.listing_counts, &mut rng);
        check_matching(self.market, &tally);
        tally
    }

    /// Fills the application buffer. Customers are processed type by type.
    fn apply<R: Rng>(&mut self, rng: &mut R) {
        self.tally.clear();
        let types = self.market.listing_counts.len();
        let g_count = self.tally.customer_types;
        for (g, &customers) in self.market.customer_counts.iter().enumerate() {
            let row = &self.binomials[g * types..(g + 1) * types];
            for _ in 0..customers {
                let mut total = 0u64;
                for (slot, b) in self.considered.iter_mut().zip(row) {
                    *slot = b.sample(rng);
                    total += *slot;
                }
                if total == 0 {
                    continue;
                }
                let t = if types == 1 {
                    0
                } else {
                    pick_weighted(&self.considered, rng.random_range(0..total))
                };
                let within = rng.random_range(0..self.market.listing_counts[t]) as usize;
                let listing = self.tally.listing_offsets[t] + within;
                self.tally.counts[listing * g_count + g] += 1;
            }
        }
    }
}

/// Index `i` such that `u` falls in the `i`-th block of `weights`.
fn pick_weighted<W: Copy + Into<u64>>(weights: &[W], mut u: u64) -> usize {
    for (i, w) in weights.iter().enumerate() {
        let w: u64 = (*w).into();
        if u < w {
            return i;
        }
        u -= w;
    }
    unreachable!("draw exceeds total weight")
}

fn accept<R: Rng>(apps: &ApplicationTally, listing_counts: &[u64], rng: &mut R) -> BookingTally {
    let g_count = apps.customer_types;
    let mut by_listing = vec![0u64; listing_counts.len()];
    let mut by_customer = vec![0u64; g_count];
    for (t, booked) in by_listing.iter_mut().enumerate() {
        let (start, end) = (apps.listing_offsets[t], apps.listing_offsets[t + 1]);
        for listing in apps.counts[start * g_count..end * g_count].chunks_exact(g_count) {
            let total: u64 = listing.iter().map(|c| u64::from(*c)).sum();
            if total == 0 {
                continue;
            }
            *booked += 1;
            let g = if g_count == 1 {
                0
            } else {
                pick_weighted(listing, rng.random_range(0..total))
            };
            by_customer[g] += 1;
        }
    }
    let total_bookings = by_listing.iter().sum();
    BookingTally {
        bookings_by_listing_type: by_listing,
        bookings_by_customer_type: by_customer,
        total_bookings,
    }
}

fn check_matching(market: &FiniteMarket, tally: &BookingTally) {
    let by_customer: u64 = tally.bookings_by_customer_type.iter().sum();
    assert_eq!(
        by_customer, tally.total_bookings,
        "bookings disagree across sides"
    );
    assert!(
        tally.total_bookings <= market.n_listings().min(market.n_customers()),
        "more bookings than units on one side"
    );
    let sides = [
        (&tally.bookings_by_listing_type, &market.listing_counts),
        (&tally.bookings_by_customer_type, &market.customer_counts),
    ];
    for (booked, units) in sides {
        assert!(
            booked.iter().zip(units).all(|(b, u)| b <= u),
            "a type booked more units than it has"
        );
    }
}

/// Consideration and application step on its own, with fresh buffers.
pub fn sample_consideration_and_apply<R: Rng>(
    market: &FiniteMarket,
    rng: &mut R,
) -> ApplicationTally {
    let mut sim = Simulator::new(market);
    sim.apply(rng);
    sim.tally
}

/// Acceptance step: each listing with applicants books one of them
/// uniformly at random.
pub fn accept_applications<R: Rng>(apps: &ApplicationTally, rng: &mut R) -> BookingTally {
    let listing_counts: Vec<u64> = apps
        .listing_offsets
        .windows(2)
        .map(|w| (w[1] - w[0]) as u64)
        .collect();
    accept(apps, &listing_counts, rng)
}

pub fn run_realization(market: &FiniteMarket, seed: u64) -> BookingTally {
    Simulator::new(market).run(seed)
}
