//! Leader-follower pricing and demand-based estimation of the
//! willingness-to-pay distribution.
//!
//! The seller moves first by committing to a price; every user then
//! best-responds by buying or auditing. [`backward_induction`] solves
//! the seller's problem by rolling the followers' responses back into
//! the price choice — by construction it lands on the same price as the
//! single-course profit maximizer, which the tests assert.
//!
//! The estimation half simulates what a platform learns by varying the
//! price: each probe yields an observed demand count
//! ([`run_price_experiments`], optionally perturbed by seeded noise),
//! and [`estimate_wtp_survival`] turns those counts into a monotone
//! estimate of the survival function P(net WTP >= price) via empirical
//! ratios plus pool-adjacent-violators monotonization.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{aggregate_demand, candidate_prices, user_best_response, Population, TieRule};
use crate::money::{Money, Value};
use crate::population::unit_from_word;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StackelbergError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("no prices to probe")]
    EmptyPrices,
    #[error("no experiments to estimate from")]
    EmptyExperiments,
    #[error("invalid experiment at index {index}: {message}")]
    InvalidExperiment { index: usize, message: String },
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
}

/// One observation of demand at a probed price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawExperiment", into = "RawExperiment")]
pub struct PriceExperiment {
    price: Money,
    population_size: u64,
    observed_demand: u64,
}

impl PriceExperiment {
    pub fn new(
        price: Money,
        population_size: u64,
        observed_demand: u64,
    ) -> Result<PriceExperiment, StackelbergError> {
        if population_size == 0 {
            return Err(StackelbergError::InvalidExperiment {
                index: 0,
                message: "population_size must be at least 1".to_string(),
            });
        }
        if observed_demand > population_size {
            return Err(StackelbergError::InvalidExperiment {
                index: 0,
                message: format!(
                    "observed demand {observed_demand} exceeds population {population_size}"
                ),
            });
        }
        Ok(PriceExperiment {
            price,
            population_size,
            observed_demand,
        })
    }

    pub fn price(&self) -> Money {
        self.price
    }

    pub fn population_size(&self) -> u64 {
        self.population_size
    }

    pub fn observed_demand(&self) -> u64 {
        self.observed_demand
    }
}

#[derive(Serialize, Deserialize)]
struct RawExperiment {
    price: Money,
    population_size: u64,
    observed_demand: u64,
}

impl TryFrom<RawExperiment> for PriceExperiment {
    type Error = StackelbergError;
    fn try_from(raw: RawExperiment) -> Result<PriceExperiment, StackelbergError> {
        PriceExperiment::new(raw.price, raw.population_size, raw.observed_demand)
    }
}

impl From<PriceExperiment> for RawExperiment {
    fn from(e: PriceExperiment) -> RawExperiment {
        RawExperiment {
            price: e.price,
            population_size: e.population_size,
            observed_demand: e.observed_demand,
        }
    }
}

/// Monotone estimate of P(net WTP >= price) at the probed prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSurvival {
    points: Vec<SurvivalPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub price: Money,
    pub survival: f64,
}

impl EmpiricalSurvival {
    pub fn points(&self) -> &[SurvivalPoint] {
        &self.points
    }

    /// Writes the estimate as CSV with header `price,survival`.
    pub fn to_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "price,survival")?;
        for point in &self.points {
            writeln!(writer, "{},{}", point.price, point.survival)?;
        }
        Ok(())
    }
}

/// Seeded perturbation applied to simulated price experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Each user's buy/audit decision is flipped independently with the
    /// given probability. Below 0.5 or the signal would invert.
    DecisionFlip { prob: f64 },
    /// Each user is observed only with the given probability; demand
    /// and population size both shrink to the sampled cohort.
    Subsample { keep_fraction: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), StackelbergError> {
        match self {
            NoiseSpec::DecisionFlip { prob } => {
                if !(0.0..0.5).contains(prob) {
                    return Err(StackelbergError::InvalidNoise(format!(
                        "decision flip probability {prob} outside [0, 0.5)"
                    )));
                }
            }
            NoiseSpec::Subsample { keep_fraction } => {
                if !(*keep_fraction > 0.0 && *keep_fraction <= 1.0) {
                    return Err(StackelbergError::InvalidNoise(format!(
                        "keep fraction {keep_fraction} outside (0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The leader's committed price and the followers' responses to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StackelbergOutcome {
    pub leader_price: Money,
    /// Buy decision per user, in population order.
    pub follower_decisions: Vec<bool>,
    pub profit: Value,
    pub demand: u64,
    /// True when no price earns positive profit; the degenerate outcome
    /// reports the marginal cost as price and no trades.
    pub all_below_cost: bool,
}

/// Solves the pricing game by backward induction: computes every
/// follower's best response to each candidate price, then picks the
/// price maximizing the leader's profit against those responses (ties
/// toward the lowest price). The equilibrium price coincides with the
/// single-course profit maximizer.
pub fn backward_induction(
    population: &Population,
    marginal_cost: Money,
    tie_rule: TieRule,
) -> Result<StackelbergOutcome, StackelbergError> {
    if population.is_empty() {
        return Err(StackelbergError::EmptyPopulation);
    }
    let mut best: Option<(Money, Value, u64)> = None;
    for price in candidate_prices(population, marginal_cost) {
        let demand = population
            .users()
            .iter()
            .filter(|u| user_best_response(u, price, tie_rule))
            .count() as u64;
        let profit = (price - marginal_cost) * demand as i64;
        if profit > Value::ZERO && best.is_none_or(|(_, b, _)| profit > b) {
            best = Some((price, profit, demand));
        }
    }
    Ok(match best {
        Some((leader_price, profit, demand)) => StackelbergOutcome {
            leader_price,
            follower_decisions: population
                .users()
                .iter()
                .map(|u| user_best_response(u, leader_price, tie_rule))
                .collect(),
            profit,
            demand,
            all_below_cost: false,
        },
        None => StackelbergOutcome {
            leader_price: marginal_cost,
            follower_decisions: vec![false; population.len()],
            profit: Value::ZERO,
            demand: 0,
            all_below_cost: true,
        },
    })
}

/// Probes the population at each price and records exact demand counts.
pub fn run_price_experiments(
    population: &Population,
    prices: &[Money],
    tie_rule: TieRule,
) -> Result<Vec<PriceExperiment>, StackelbergError> {
    if prices.is_empty() {
        return Err(StackelbergError::EmptyPrices);
    }
    if population.is_empty() {
        return Err(StackelbergError::EmptyPopulation);
    }
    Ok(prices
        .iter()
        .map(|&price| PriceExperiment {
            price,
            population_size: population.len() as u64,
            observed_demand: aggregate_demand(population, price, tie_rule),
        })
        .collect())
}

/// Probes the population at each price through a seeded noise channel.
/// Decision flips keep the full population but corrupt individual
/// responses; subsampling records only a random cohort per probe (a
/// probe whose cohort comes up empty is dropped). Deterministic for a
/// given seed: users are visited in population order, one word drawn
/// per user per probe.
pub fn run_price_experiments_noisy(
    population: &Population,
    prices: &[Money],
    tie_rule: TieRule,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Vec<PriceExperiment>, StackelbergError> {
    if prices.is_empty() {
        return Err(StackelbergError::EmptyPrices);
    }
    if population.is_empty() {
        return Err(StackelbergError::EmptyPopulation);
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut experiments = Vec::with_capacity(prices.len());
    for &price in prices {
        match noise {
            NoiseSpec::DecisionFlip { prob } => {
                let mut observed = 0u64;
                for user in population.users() {
                    let mut buys = user_best_response(user, price, tie_rule);
                    if unit_from_word(rng.next_u64()) < prob {
                        buys = !buys;
                    }
                    observed += u64::from(buys);
                }
                experiments.push(PriceExperiment {
                    price,
                    population_size: population.len() as u64,
                    observed_demand: observed,
                });
            }
            NoiseSpec::Subsample { keep_fraction } => {
                let mut kept = 0u64;
                let mut observed = 0u64;
                for user in population.users() {
                    if unit_from_word(rng.next_u64()) < keep_fraction {
                        kept += 1;
                        observed += u64::from(user_best_response(user, price, tie_rule));
                    }
                }
                if kept > 0 {
                    experiments.push(PriceExperiment {
                        price,
                        population_size: kept,
                        observed_demand: observed,
                    });
                }
            }
        }
    }
    Ok(experiments)
}

/// Weighted isotonic regression, non-increasing, by pool-adjacent
/// violators: any ascending run is replaced by its weighted mean.
/// `values` and `weights` must have equal lengths and positive weights.
pub fn pava_non_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(
        values.len(),
        weights.len(),
        "values and weights must pair up"
    );
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (right_mean, right_weight, right_len) = blocks[blocks.len() - 1];
            let (left_mean, left_weight, left_len) = blocks[blocks.len() - 2];
            if left_mean >= right_mean {
                break;
            }
            blocks.pop();
            blocks.pop();
            let weight = left_weight + right_weight;
            let mean = (left_mean * left_weight + right_mean * right_weight) / weight;
            blocks.push((mean, weight, left_len + right_len));
        }
    }
    let mut fitted = Vec::with_capacity(values.len());
    for (mean, _, len) in blocks {
        fitted.extend(std::iter::repeat_n(mean, len));
    }
    fitted
}

/// Estimates the survival function from demand observations: pools
/// experiments at identical prices, takes empirical ratios, and
/// monotonizes them (non-increasing) weighting by population size.
pub fn estimate_wtp_survival(
    experiments: &[PriceExperiment],
) -> Result<EmpiricalSurvival, StackelbergError> {
    estimate_survival_inner(experiments, None)
}

/// Like [`estimate_wtp_survival`], but inverts known decision-flip
/// noise before monotonizing. A flip probability q turns a true buy
/// rate s into an observed rate q + s(1 - 2q), so the estimator maps
/// each pooled ratio r back through s = (r - q) / (1 - 2q), clamped to
/// [0, 1]. With q = 0 this is exactly the plain estimator.
pub fn estimate_wtp_survival_debiased(
    experiments: &[PriceExperiment],
    flip_prob: f64,
) -> Result<EmpiricalSurvival, StackelbergError> {
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(StackelbergError::InvalidNoise(format!(
            "decision flip probability {flip_prob} outside [0, 0.5)"
        )));
    }
    estimate_survival_inner(experiments, Some(flip_prob))
}

fn estimate_survival_inner(
    experiments: &[PriceExperiment],
    flip_prob: Option<f64>,
) -> Result<EmpiricalSurvival, StackelbergError> {
    if experiments.is_empty() {
        return Err(StackelbergError::EmptyExperiments);
    }
    let mut sorted = experiments.to_vec();
    sorted.sort_by_key(|e| e.price);

    // Pool experiments at identical prices: sum demand and population.
    let mut pooled: Vec<(Money, u64, u64)> = Vec::new();
    for e in sorted {
        match pooled.last_mut() {
            Some((price, size, demand)) if *price == e.price => {
                *size += e.population_size;
                *demand += e.observed_demand;
            }
            _ => pooled.push((e.price, e.population_size, e.observed_demand)),
        }
    }

    let ratios: Vec<f64> = pooled
        .iter()
        .map(|&(_, size, demand)| {
            let r = demand as f64 / size as f64;
            match flip_prob {
                Some(q) => ((r - q) / (1.0 - 2.0 * q)).clamp(0.0, 1.0),
                None => r,
            }
        })
        .collect();
    let weights: Vec<f64> = pooled.iter().map(|&(_, size, _)| size as f64).collect();
    let fitted = pava_non_increasing(&ratios, &weights);

    Ok(EmpiricalSurvival {
        points: pooled
            .iter()
            .zip(fitted)
            .map(|(&(price, _, _), survival)| SurvivalPoint { price, survival })
            .collect(),
    })
}
