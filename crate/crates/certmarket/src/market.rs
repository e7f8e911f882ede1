//! Single-course certificate market: users, demand, and monopoly pricing.
//!
//! A course is free to audit; the seller charges only for the verified
//! certificate. Each user has a willingness to pay for the certificate
//! track and a fallback utility from auditing. A user buys when the
//! certificate's net benefit beats the free alternative, so demand at a
//! given price is simply the count of users who clear that bar. Because
//! demand only changes at user valuations, profit maximization scans a
//! finite candidate set instead of a continuum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{Money, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarketError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("duplicate user id {0:?}")]
    DuplicateUserId(String),
    #[error("price grid is empty")]
    EmptyGrid,
    #[error("price grid must be strictly increasing at index {0}")]
    UnsortedGrid(usize),
}

/// One prospective learner.
///
/// `wtp_verified` values the paid certificate track; `utility_audit`
/// values taking the course for free. Audit utility is foregone on
/// purchase, so it acts as each user's personal opportunity cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub wtp_verified: Money,
    pub utility_audit: Money,
}

impl UserProfile {
    pub fn new(id: impl Into<String>, wtp_verified: Money, utility_audit: Money) -> UserProfile {
        UserProfile {
            id: id.into(),
            wtp_verified,
            utility_audit,
        }
    }

    /// What buying is worth over auditing, before comparing to the price.
    pub fn net_wtp(&self) -> Value {
        self.wtp_verified - self.utility_audit
    }
}

/// How a user who is exactly indifferent between buying and auditing acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Indifferent users buy (weak preference for the certificate).
    #[default]
    IndifferentBuys,
    /// Indifferent users keep auditing; purchase requires strict gain.
    IndifferentDeclines,
}

/// A set of users with unique ids, iterated in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<UserProfile>", into = "Vec<UserProfile>")]
pub struct Population {
    users: Vec<UserProfile>,
}

impl Population {
    /// Builds a population, rejecting duplicate ids. Empty populations
    /// are valid: demand and welfare are zero sums over them.
    pub fn new(users: Vec<UserProfile>) -> Result<Population, MarketError> {
        let mut seen: Vec<&str> = users.iter().map(|u| u.id.as_str()).collect();
        seen.sort_unstable();
        for pair in seen.windows(2) {
            if pair[0] == pair[1] {
                return Err(MarketError::DuplicateUserId(pair[0].to_string()));
            }
        }
        Ok(Population { users })
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

impl TryFrom<Vec<UserProfile>> for Population {
    type Error = MarketError;
    fn try_from(users: Vec<UserProfile>) -> Result<Population, MarketError> {
        Population::new(users)
    }
}

impl From<Population> for Vec<UserProfile> {
    fn from(p: Population) -> Vec<UserProfile> {
        p.users
    }
}

/// Realized utility of the decision `buys` at `price`: certificate value
/// minus price when buying, audit utility otherwise.
pub fn user_net_benefit(user: &UserProfile, buys: bool, price: Money) -> Value {
    if buys {
        user.wtp_verified - price
    } else {
        user.utility_audit.signed()
    }
}

/// Whether the user buys at `price` under the given tie rule.
pub fn user_best_response(user: &UserProfile, price: Money, tie_rule: TieRule) -> bool {
    // Compare V >= V_audit + p in raw cents; no signed conversion and no
    // underflow for any magnitudes.
    let lhs = user.wtp_verified.cents() as u128;
    let rhs = user.utility_audit.cents() as u128 + price.cents() as u128;
    match tie_rule {
        TieRule::IndifferentBuys => lhs >= rhs,
        TieRule::IndifferentDeclines => lhs > rhs,
    }
}

/// Number of users who buy at `price`.
pub fn aggregate_demand(population: &Population, price: Money, tie_rule: TieRule) -> u64 {
    population
        .users()
        .iter()
        .filter(|u| user_best_response(u, price, tie_rule))
        .count() as u64
}

/// Seller profit at `price`: demand times unit margin.
pub fn profit(
    population: &Population,
    price: Money,
    marginal_cost: Money,
    tie_rule: TieRule,
) -> Value {
    let demand = aggregate_demand(population, price, tie_rule) as i64;
    (price - marginal_cost) * demand
}

/// Profit-maximizing price and what the seller earns there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OptimalPrice {
    pub price: Money,
    pub profit: Value,
    pub demand: u64,
    /// True when no user values the certificate above marginal cost, so
    /// every price at or above cost yields zero profit; the price
    /// reported is the marginal cost itself.
    pub all_below_cost: bool,
}

/// Prices worth testing when maximizing profit: every net willingness to
/// pay strictly above marginal cost, plus marginal cost itself.
///
/// Demand is a step function that only changes where some user's net
/// valuation sits, so the profit maximum is always attained on this set.
pub fn candidate_prices(population: &Population, marginal_cost: Money) -> Vec<Money> {
    let mut candidates: Vec<Money> = population
        .users()
        .iter()
        .filter_map(|u| u.net_wtp().to_money())
        .filter(|net| *net > marginal_cost)
        .collect();
    candidates.push(marginal_cost);
    candidates.sort_unstable();
    candidates.dedup();
    candidates
}

/// Finds the profit-maximizing price by scanning candidate prices.
///
/// Ties in profit break toward the lowest price, which also maximizes
/// demand among optima. When every net valuation is at or below cost the
/// result is flagged [`OptimalPrice::all_below_cost`] with price set to
/// the marginal cost and demand reported as zero (sales at cost earn
/// nothing).
pub fn optimal_price(
    population: &Population,
    marginal_cost: Money,
    tie_rule: TieRule,
) -> Result<OptimalPrice, MarketError> {
    if population.is_empty() {
        return Err(MarketError::EmptyPopulation);
    }
    // Sort net valuations once; demand at any price is then a
    // partition-point lookup instead of a full population scan.
    let mut nets: Vec<Value> = population.users().iter().map(|u| u.net_wtp()).collect();
    nets.sort_unstable();
    let demand_at = |price: Money| -> u64 {
        let p = price.signed();
        let below = match tie_rule {
            TieRule::IndifferentBuys => nets.partition_point(|net| *net < p),
            TieRule::IndifferentDeclines => nets.partition_point(|net| *net <= p),
        };
        (nets.len() - below) as u64
    };

    let mut best: Option<OptimalPrice> = None;
    for price in candidate_prices(population, marginal_cost) {
        let demand = demand_at(price);
        let profit = (price - marginal_cost) * demand as i64;
        if profit > Value::ZERO && best.as_ref().is_none_or(|b| profit > b.profit) {
            best = Some(OptimalPrice {
                price,
                profit,
                demand,
                all_below_cost: false,
            });
        }
    }
    Ok(best.unwrap_or(OptimalPrice {
        price: marginal_cost,
        profit: Value::ZERO,
        demand: 0,
        all_below_cost: true,
    }))
}

/// Total surplus at `price`: every user's realized utility (buyers get
/// certificate value minus price, the rest keep their audit utility)
/// plus the seller's profit.
pub fn social_welfare(
    population: &Population,
    price: Money,
    marginal_cost: Money,
    tie_rule: TieRule,
) -> Value {
    let mut total = Value::ZERO;
    let mut demand = 0i64;
    for user in population.users() {
        let buys = user_best_response(user, price, tie_rule);
        total += user_net_benefit(user, buys, price);
        demand += i64::from(buys);
    }
    total + (price - marginal_cost) * demand
}

/// Demand and profit evaluated along a price grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemandCurve {
    samples: Vec<DemandSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DemandSample {
    pub price: Money,
    pub demand: u64,
    pub profit: Value,
}

impl DemandCurve {
    pub fn samples(&self) -> &[DemandSample] {
        &self.samples
    }
}

/// Evaluates demand and profit at each grid price. The grid must be
/// non-empty and strictly increasing; the resulting demand sequence is
/// non-increasing.
pub fn demand_curve(
    population: &Population,
    grid: &[Money],
    marginal_cost: Money,
    tie_rule: TieRule,
) -> Result<DemandCurve, MarketError> {
    if grid.is_empty() {
        return Err(MarketError::EmptyGrid);
    }
    for (i, pair) in grid.windows(2).enumerate() {
        if pair[0] >= pair[1] {
            return Err(MarketError::UnsortedGrid(i + 1));
        }
    }
    let samples = grid
        .iter()
        .map(|&price| {
            let demand = aggregate_demand(population, price, tie_rule);
            DemandSample {
                price,
                demand,
                profit: (price - marginal_cost) * demand as i64,
            }
        })
        .collect();
    Ok(DemandCurve { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pop(users: &[(u64, u64)]) -> Population {
        let users = users
            .iter()
            .enumerate()
            .map(|(i, &(v, a))| UserProfile::new(format!("u{i}"), money(v), money(a)))
            .collect();
        Population::new(users).unwrap()
    }

    fn pop_cents(users: &[(u64, u64)]) -> Population {
        let users = users
            .iter()
            .enumerate()
            .map(|(i, &(v, a))| {
                UserProfile::new(format!("u{i}"), Money::from_cents(v), Money::from_cents(a))
            })
            .collect();
        Population::new(users).unwrap()
    }

    fn money(units: u64) -> Money {
        Money::from_cents(units * 100)
    }

    fn value(units: i64) -> Value {
        Value::from_cents(units * 100)
    }

    #[test]
    fn rejects_duplicate_ids() {
        let dup = vec![
            UserProfile::new("a", money(1), money(0)),
            UserProfile::new("a", money(2), money(0)),
        ];
        assert_eq!(
            Population::new(dup),
            Err(MarketError::DuplicateUserId("a".to_string()))
        );
    }

    #[test]
    fn empty_population_is_valid_with_zero_demand_and_welfare() {
        let empty = Population::new(vec![]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(aggregate_demand(&empty, money(10), TieRule::default()), 0);
        assert_eq!(
            social_welfare(&empty, money(10), money(2), TieRule::default()),
            Value::ZERO
        );
        assert_eq!(
            optimal_price(&empty, money(2), TieRule::default()),
            Err(MarketError::EmptyPopulation)
        );
    }

    #[test]
    fn realized_utility_per_decision() {
        let u = UserProfile::new("u", money(300), money(50));
        assert_eq!(user_net_benefit(&u, false, money(250)), value(50));
        assert_eq!(user_net_benefit(&u, true, money(250)), value(50));
        let poor = UserProfile::new("v", money(100), money(0));
        assert_eq!(user_net_benefit(&poor, true, money(150)), value(-50));
    }

    #[test]
    fn best_response_thresholds() {
        let u = UserProfile::new("u", money(300), money(0));
        assert!(user_best_response(&u, money(250), TieRule::IndifferentBuys));
        assert!(user_best_response(
            &u,
            money(250),
            TieRule::IndifferentDeclines
        ));
        let fallback = UserProfile::new("v", money(300), money(100));
        assert!(!user_best_response(
            &fallback,
            money(250),
            TieRule::IndifferentBuys
        ));
        assert!(user_best_response(&u, money(300), TieRule::IndifferentBuys));
        assert!(!user_best_response(
            &u,
            money(300),
            TieRule::IndifferentDeclines
        ));
    }

    #[test]
    fn demand_counts_users_clearing_price() {
        let population = pop(&[(10, 0), (20, 0), (30, 0)]);
        assert_eq!(
            aggregate_demand(&population, money(15), TieRule::IndifferentBuys),
            2
        );
        assert_eq!(
            aggregate_demand(&population, money(30), TieRule::IndifferentBuys),
            1
        );
        assert_eq!(
            aggregate_demand(&population, money(30), TieRule::IndifferentDeclines),
            0
        );
    }

    #[test]
    fn profit_is_demand_times_margin() {
        let population = pop(&[(10, 0), (20, 0), (30, 0)]);
        assert_eq!(
            profit(&population, money(20), money(0), TieRule::default()),
            value(40)
        );
        assert_eq!(
            profit(&population, money(7), money(7), TieRule::default()),
            Value::ZERO
        );
        assert_eq!(
            profit(&population, money(99), money(0), TieRule::default()),
            Value::ZERO
        );
    }

    #[test]
    fn optimal_price_picks_best_margin_volume_tradeoff() {
        // Net valuations 10, 20, 30 at zero cost: charging 20 sells two
        // units for 40, beating 30 (one unit) and 10 (three units).
        let population = pop(&[(10, 0), (20, 0), (30, 0)]);
        let best = optimal_price(&population, Money::ZERO, TieRule::default()).unwrap();
        assert_eq!(best.price, money(20));
        assert_eq!(best.profit, value(40));
        assert_eq!(best.demand, 2);
        assert!(!best.all_below_cost);
    }

    #[test]
    fn single_and_homogeneous_populations() {
        let single = pop(&[(45, 5)]);
        let best = optimal_price(&single, money(3), TieRule::default()).unwrap();
        assert_eq!(
            (best.price, best.profit, best.demand),
            (money(40), value(37), 1)
        );

        let homogeneous = pop(&[(25, 0), (25, 0), (25, 0), (25, 0)]);
        let best = optimal_price(&homogeneous, money(5), TieRule::default()).unwrap();
        assert_eq!(
            (best.price, best.profit, best.demand),
            (money(25), value(80), 4)
        );
    }

    #[test]
    fn optimal_price_ties_break_low() {
        // Nets 10 and 20: both candidate prices earn 20; pick the lower.
        let population = pop(&[(10, 0), (20, 0)]);
        let best = optimal_price(&population, Money::ZERO, TieRule::default()).unwrap();
        assert_eq!(best.price, money(10));
        assert_eq!(best.demand, 2);
        assert_eq!(best.profit, value(20));
    }

    #[test]
    fn flags_market_priced_out_by_cost() {
        let population = pop(&[(10, 5), (8, 7)]);
        let best = optimal_price(&population, money(60), TieRule::default()).unwrap();
        assert!(best.all_below_cost);
        assert_eq!(best.price, money(60));
        assert_eq!(best.profit, Value::ZERO);
        assert_eq!(best.demand, 0);
    }

    #[test]
    fn welfare_examples() {
        let population = pop(&[(300, 0), (150, 100), (80, 50)]);
        // At price 100 only the first user buys (surplus 200); the others
        // keep audit utilities 100 and 50; the seller earns 80.
        assert_eq!(
            social_welfare(&population, money(100), money(20), TieRule::default()),
            value(430)
        );
        // Pricing at cost lets all three buy: (300-20)+(150-20)+(80-20).
        assert_eq!(
            social_welfare(&population, money(20), money(20), TieRule::default()),
            value(470)
        );
    }

    #[test]
    fn demand_curve_validates_grid() {
        let population = pop(&[(10, 0), (20, 0), (30, 0)]);
        assert_eq!(
            demand_curve(&population, &[], money(0), TieRule::default()),
            Err(MarketError::EmptyGrid)
        );
        assert_eq!(
            demand_curve(
                &population,
                &[money(2), money(2)],
                money(0),
                TieRule::default()
            ),
            Err(MarketError::UnsortedGrid(1))
        );
        let grid = [money(5), money(15), money(25), money(35)];
        let curve = demand_curve(&population, &grid, money(0), TieRule::default()).unwrap();
        let demands: Vec<u64> = curve.samples().iter().map(|s| s.demand).collect();
        assert_eq!(demands, vec![3, 2, 1, 0]);
        let profits: Vec<Value> = curve.samples().iter().map(|s| s.profit).collect();
        assert_eq!(profits, vec![value(15), value(30), value(25), value(0)]);
    }

    #[test]
    fn demand_curve_single_point_matches_direct_evaluation() {
        let population = pop(&[(12, 2), (40, 10)]);
        let curve = demand_curve(&population, &[money(10)], money(4), TieRule::default()).unwrap();
        let s = curve.samples()[0];
        assert_eq!(
            s.demand,
            aggregate_demand(&population, money(10), TieRule::default())
        );
        assert_eq!(
            s.profit,
            profit(&population, money(10), money(4), TieRule::default())
        );
    }

    proptest! {
        #[test]
        fn demand_never_increases_with_price(
            users in proptest::collection::vec((0u64..5000, 0u64..5000), 0..40),
            p1 in 0u64..6000,
            p2 in 0u64..6000,
        ) {
            let population = pop_cents(&users);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let d_lo = aggregate_demand(&population, Money::from_cents(lo), TieRule::default());
            let d_hi = aggregate_demand(&population, Money::from_cents(hi), TieRule::default());
            prop_assert!(d_lo >= d_hi);
        }

        #[test]
        fn weak_rule_dominates_strict_only_at_valuations(
            users in proptest::collection::vec((0u64..500, 0u64..500), 0..30),
            price in 0u64..1000,
        ) {
            let population = pop_cents(&users);
            let p = Money::from_cents(price);
            let weak = aggregate_demand(&population, p, TieRule::IndifferentBuys);
            let strict = aggregate_demand(&population, p, TieRule::IndifferentDeclines);
            prop_assert!(weak >= strict);
            let at_price = population
                .users()
                .iter()
                .filter(|u| u.net_wtp() == p.signed())
                .count() as u64;
            prop_assert_eq!(weak - strict, at_price);
        }

        #[test]
        fn optimal_price_matches_exhaustive_sweep(
            users in proptest::collection::vec((0u64..300, 0u64..300), 1..25),
            cost in 0u64..200,
        ) {
            let population = pop_cents(&users);
            let cost = Money::from_cents(cost);
            let best = optimal_price(&population, cost, TieRule::default()).unwrap();
            // Sweep every cent up to the largest valuation.
            let max_net = population.users().iter()
                .map(|u| u.net_wtp().cents().max(0) as u64)
                .max()
                .unwrap_or(0);
            let mut sweep_best = Value::ZERO;
            let mut sweep_price = cost;
            for c in cost.cents()..=max_net.max(cost.cents()) {
                let p = Money::from_cents(c);
                let pi = profit(&population, p, cost, TieRule::default());
                if pi > sweep_best {
                    sweep_best = pi;
                    sweep_price = p;
                }
            }
            prop_assert_eq!(best.profit, sweep_best);
            if sweep_best > Value::ZERO {
                prop_assert_eq!(best.price, sweep_price);
                prop_assert!(!best.all_below_cost);
            } else {
                prop_assert!(best.all_below_cost);
            }
        }

        #[test]
        fn welfare_peaks_at_marginal_cost(
            users in proptest::collection::vec((0u64..400, 0u64..400), 0..25),
            cost in 0u64..300,
            price in 0u64..500,
        ) {
            let population = pop_cents(&users);
            let cost = Money::from_cents(cost);
            let w_at_cost = social_welfare(&population, cost, cost, TieRule::default());
            let w_elsewhere =
                social_welfare(&population, Money::from_cents(price), cost, TieRule::default());
            prop_assert!(w_at_cost >= w_elsewhere);
        }

        #[test]
        fn profit_never_exceeds_welfare(
            users in proptest::collection::vec((0u64..400, 0u64..400), 1..25),
            cost in 0u64..100,
        ) {
            let population = pop_cents(&users);
            let cost = Money::from_cents(cost);
            let best = optimal_price(&population, cost, TieRule::default()).unwrap();
            let welfare = social_welfare(&population, best.price, cost, TieRule::default());
            prop_assert!(best.profit <= welfare);
        }
    }
}
