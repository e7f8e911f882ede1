//! Multi-course purchases under budget and cardinality constraints.
//!
//! A user facing M priced certificates picks a 0/1 bundle maximizing
//! total net benefit, subject to three hard constraints: only courses
//! whose certificate premium covers its price are eligible, total spend
//! stays within budget, and at most a fixed number of courses can be
//! taken. [`solve_user_purchase`] solves the program exactly by
//! branch-and-bound; [`brute_force_purchase`] is an independent
//! exhaustive oracle used to cross-check it. Under a uniform price the
//! optimum collapses to a closed form ([`uniform_price_demand`]) that
//! the platform-side optimizer [`optimal_uniform_price`] exploits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{Money, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BudgetError {
    #[error("price vector length {prices} does not match course count {courses}")]
    DimensionMismatch { courses: usize, prices: usize },
    #[error("exhaustive search is limited to 20 courses, got {0}")]
    TooManyCourses(usize),
    #[error("certificate prices must be positive")]
    NonPositivePrice,
    #[error("operation requires a uniform price schedule")]
    NonUniformSchedule,
    #[error("no users given")]
    EmptyUsers,
    #[error("invalid user {id:?}: {message}")]
    InvalidUser { id: String, message: String },
    #[error("selection is infeasible: {0}")]
    InfeasibleSelection(String),
}

/// A learner choosing among M certificate-bearing courses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMultiCourseUser", into = "RawMultiCourseUser")]
pub struct MultiCourseUser {
    id: String,
    wtp: Vec<Money>,
    audit: Vec<Money>,
    budget: Money,
    max_courses: usize,
}

impl MultiCourseUser {
    pub fn new(
        id: impl Into<String>,
        wtp: Vec<Money>,
        audit: Vec<Money>,
        budget: Money,
        max_courses: usize,
    ) -> Result<MultiCourseUser, BudgetError> {
        let id = id.into();
        if wtp.len() != audit.len() {
            return Err(BudgetError::InvalidUser {
                id,
                message: format!(
                    "wtp has {} entries but audit has {}",
                    wtp.len(),
                    audit.len()
                ),
            });
        }
        if max_courses > wtp.len() {
            return Err(BudgetError::InvalidUser {
                id,
                message: format!(
                    "max_courses {} exceeds course count {}",
                    max_courses,
                    wtp.len()
                ),
            });
        }
        Ok(MultiCourseUser {
            id,
            wtp,
            audit,
            budget,
            max_courses,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn wtp(&self) -> &[Money] {
        &self.wtp
    }

    pub fn audit(&self) -> &[Money] {
        &self.audit
    }

    pub fn budget(&self) -> Money {
        self.budget
    }

    pub fn max_courses(&self) -> usize {
        self.max_courses
    }

    pub fn course_count(&self) -> usize {
        self.wtp.len()
    }

    /// Course m clears the eligibility bar at `price` when the
    /// certificate premium over auditing covers it.
    fn eligible(&self, m: usize, price: Money) -> bool {
        self.wtp[m].cents() as u128 >= self.audit[m].cents() as u128 + price.cents() as u128
    }
}

#[derive(Serialize, Deserialize)]
struct RawMultiCourseUser {
    id: String,
    wtp: Vec<Money>,
    audit: Vec<Money>,
    budget: Money,
    max_courses: usize,
}

impl TryFrom<RawMultiCourseUser> for MultiCourseUser {
    type Error = BudgetError;
    fn try_from(raw: RawMultiCourseUser) -> Result<MultiCourseUser, BudgetError> {
        MultiCourseUser::new(raw.id, raw.wtp, raw.audit, raw.budget, raw.max_courses)
    }
}

impl From<MultiCourseUser> for RawMultiCourseUser {
    fn from(user: MultiCourseUser) -> RawMultiCourseUser {
        RawMultiCourseUser {
            id: user.id,
            wtp: user.wtp,
            audit: user.audit,
            budget: user.budget,
            max_courses: user.max_courses,
        }
    }
}

/// Per-course certificate prices, all positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Money>", into = "Vec<Money>")]
pub struct PriceSchedule {
    prices: Vec<Money>,
    uniform: Option<Money>,
}

impl PriceSchedule {
    pub fn new(prices: Vec<Money>) -> Result<PriceSchedule, BudgetError> {
        if prices.iter().any(|p| p.is_zero()) {
            return Err(BudgetError::NonPositivePrice);
        }
        let uniform = match prices.first() {
            Some(&first) if prices.iter().all(|&p| p == first) => Some(first),
            _ => None,
        };
        Ok(PriceSchedule { prices, uniform })
    }

    /// A schedule charging `price` for each of `count` courses.
    pub fn uniform_schedule(price: Money, count: usize) -> Result<PriceSchedule, BudgetError> {
        PriceSchedule::new(vec![price; count])
    }

    pub fn prices(&self) -> &[Money] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// The common price when every course costs the same.
    pub fn uniform(&self) -> Option<Money> {
        self.uniform
    }

    pub fn require_uniform(&self) -> Result<Money, BudgetError> {
        self.uniform.ok_or(BudgetError::NonUniformSchedule)
    }
}

impl TryFrom<Vec<Money>> for PriceSchedule {
    type Error = BudgetError;
    fn try_from(prices: Vec<Money>) -> Result<PriceSchedule, BudgetError> {
        PriceSchedule::new(prices)
    }
}

impl From<PriceSchedule> for Vec<Money> {
    fn from(schedule: PriceSchedule) -> Vec<Money> {
        schedule.prices
    }
}

/// A purchase problem ready to solve: users plus the price vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurchaseInstance {
    pub users: Vec<MultiCourseUser>,
    pub prices: Vec<Money>,
}

impl PurchaseInstance {
    pub fn schedule(&self) -> Result<PriceSchedule, BudgetError> {
        PriceSchedule::new(self.prices.clone())
    }
}

/// One user's optimal bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PurchaseSelection {
    /// Decision per course, in course order.
    pub chosen: Vec<bool>,
    pub total_spend: Money,
    /// Total net benefit: sum of certificate value minus price over
    /// chosen courses.
    pub surplus: Value,
    pub count: usize,
}

impl PurchaseSelection {
    pub fn chosen_indices(&self) -> Vec<usize> {
        self.chosen
            .iter()
            .enumerate()
            .filter_map(|(m, &c)| c.then_some(m))
            .collect()
    }

    fn from_indices(
        course_count: usize,
        indices: &[usize],
        schedule: &PriceSchedule,
        user: &MultiCourseUser,
    ) -> PurchaseSelection {
        let mut chosen = vec![false; course_count];
        let mut total_spend = Money::ZERO;
        let mut surplus = Value::ZERO;
        for &m in indices {
            chosen[m] = true;
            total_spend += schedule.prices()[m];
            surplus += user.wtp()[m] - schedule.prices()[m];
        }
        PurchaseSelection {
            chosen,
            total_spend,
            surplus,
            count: indices.len(),
        }
    }
}

struct Item {
    course: usize,
    price_cents: u64,
    value_cents: i64,
}

/// Exact solver for one user's purchase program.
///
/// Maximizes total net benefit over bundles that are eligible
/// course-by-course, affordable, and within the course limit. Ties break
/// toward more courses, then the lexicographically smallest index set.
///
/// Implementation: depth-first branch-and-bound over courses in index
/// order, taking before skipping. Visiting "take" first means that among
/// bundles tied on (surplus, count) the first one completed is the
/// lexicographically smallest, so only strict improvements ever replace
/// the incumbent. The bound at each node adds the best possible
/// remaining value — the sum of the largest remaining per-course values
/// up to the remaining course limit, ignoring the budget — which never
/// underestimates the subtree.
pub fn solve_user_purchase(
    user: &MultiCourseUser,
    schedule: &PriceSchedule,
) -> Result<PurchaseSelection, BudgetError> {
    check_dimensions(user, schedule)?;
    let items: Vec<Item> = (0..user.course_count())
        .filter(|&m| user.eligible(m, schedule.prices()[m]))
        .map(|m| Item {
            course: m,
            price_cents: schedule.prices()[m].cents(),
            value_cents: (user.wtp()[m] - schedule.prices()[m]).cents(),
        })
        .collect();
    let slots = user.max_courses().min(items.len());

    // suffix_best[i][c]: sum of the c largest values among items[i..].
    let n = items.len();
    let mut suffix_best: Vec<Vec<i64>> = vec![Vec::new(); n + 1];
    suffix_best[n] = vec![0];
    let mut tail: Vec<i64> = Vec::new();
    for i in (0..n).rev() {
        let pos = tail.partition_point(|&v| v > items[i].value_cents);
        tail.insert(pos, items[i].value_cents);
        let take = tail.len().min(slots);
        let mut sums = Vec::with_capacity(take + 1);
        sums.push(0);
        for c in 0..take {
            sums.push(sums[c] + tail[c]);
        }
        suffix_best[i] = sums;
    }

    struct Search<'a> {
        items: &'a [Item],
        suffix_best: &'a [Vec<i64>],
        best: Option<(i64, usize, Vec<usize>)>,
        path: Vec<usize>,
    }

    impl Search<'_> {
        fn dfs(&mut self, pos: usize, budget_left: u64, slots_left: usize, surplus: i64) {
            let reachable = slots_left.min(self.items.len() - pos);
            if let Some((best_surplus, best_count, _)) = &self.best {
                let bound = surplus + self.suffix_best[pos][reachable];
                let max_count = self.path.len() + reachable;
                if bound < *best_surplus || (bound == *best_surplus && max_count <= *best_count) {
                    return;
                }
            }
            if pos == self.items.len() {
                let better = match &self.best {
                    None => true,
                    Some((s, c, _)) => surplus > *s || (surplus == *s && self.path.len() > *c),
                };
                if better {
                    self.best = Some((surplus, self.path.len(), self.path.clone()));
                }
                return;
            }
            let item = &self.items[pos];
            if slots_left > 0 && item.price_cents <= budget_left {
                self.path.push(item.course);
                self.dfs(
                    pos + 1,
                    budget_left - item.price_cents,
                    slots_left - 1,
                    surplus + item.value_cents,
                );
                self.path.pop();
            }
            self.dfs(pos + 1, budget_left, slots_left, surplus);
        }
    }

    let mut search = Search {
        items: &items,
        suffix_best: &suffix_best,
        best: None,
        path: Vec::new(),
    };
    search.dfs(0, user.budget().cents(), slots, 0);
    let (_, _, indices) = search.best.expect("the empty bundle is always feasible");
    Ok(PurchaseSelection::from_indices(
        user.course_count(),
        &indices,
        schedule,
        user,
    ))
}

/// Exhaustive reference solver: enumerates all bundles and applies the
/// same constraints and tie-breaks as [`solve_user_purchase`]. Kept
/// deliberately independent so the two can cross-check each other.
pub fn brute_force_purchase(
    user: &MultiCourseUser,
    schedule: &PriceSchedule,
) -> Result<PurchaseSelection, BudgetError> {
    check_dimensions(user, schedule)?;
    let m = user.course_count();
    if m > 20 {
        return Err(BudgetError::TooManyCourses(m));
    }
    let mut best: Option<(Value, usize, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << m) {
        let indices: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        if indices.len() > user.max_courses() {
            continue;
        }
        if !indices
            .iter()
            .all(|&i| user.eligible(i, schedule.prices()[i]))
        {
            continue;
        }
        let spend: u64 = indices.iter().map(|&i| schedule.prices()[i].cents()).sum();
        if spend > user.budget().cents() {
            continue;
        }
        let surplus: Value = indices
            .iter()
            .map(|&i| user.wtp()[i] - schedule.prices()[i])
            .sum();
        let candidate = (surplus, indices.len(), indices);
        let better = match &best {
            None => true,
            Some((s, c, ix)) => {
                candidate.0 > *s
                    || (candidate.0 == *s && candidate.1 > *c)
                    || (candidate.0 == *s && candidate.1 == *c && candidate.2 < *ix)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    let (_, _, indices) = best.expect("the empty bundle is always feasible");
    Ok(PurchaseSelection::from_indices(m, &indices, schedule, user))
}

/// Independently re-checks that a selection satisfies every constraint
/// and that its reported spend, surplus, and count are consistent.
pub fn validate_selection(
    user: &MultiCourseUser,
    schedule: &PriceSchedule,
    selection: &PurchaseSelection,
) -> Result<(), BudgetError> {
    check_dimensions(user, schedule)?;
    if selection.chosen.len() != user.course_count() {
        return Err(BudgetError::InfeasibleSelection(format!(
            "decision vector has {} entries for {} courses",
            selection.chosen.len(),
            user.course_count()
        )));
    }
    let infeasible = |msg: String| Err(BudgetError::InfeasibleSelection(msg));
    let mut spend = Money::ZERO;
    let mut surplus = Value::ZERO;
    let mut count = 0usize;
    for (m, &chosen) in selection.chosen.iter().enumerate() {
        if !chosen {
            continue;
        }
        if !user.eligible(m, schedule.prices()[m]) {
            return infeasible(format!("course {m} is not eligible at its price"));
        }
        spend += schedule.prices()[m];
        surplus += user.wtp()[m] - schedule.prices()[m];
        count += 1;
    }
    if spend > user.budget() {
        return infeasible(format!("spend {spend} exceeds budget {}", user.budget()));
    }
    if count > user.max_courses() {
        return infeasible(format!(
            "{count} courses chosen, limit {}",
            user.max_courses()
        ));
    }
    if spend != selection.total_spend {
        return infeasible(format!(
            "reported spend {} but actual {spend}",
            selection.total_spend
        ));
    }
    if surplus != selection.surplus {
        return infeasible(format!(
            "reported surplus {} but actual {surplus}",
            selection.surplus
        ));
    }
    if count != selection.count {
        return infeasible(format!(
            "reported count {} but actual {count}",
            selection.count
        ));
    }
    Ok(())
}

fn check_dimensions(user: &MultiCourseUser, schedule: &PriceSchedule) -> Result<(), BudgetError> {
    if user.course_count() != schedule.len() {
        return Err(BudgetError::DimensionMismatch {
            courses: user.course_count(),
            prices: schedule.len(),
        });
    }
    Ok(())
}

/// Closed-form demand at a uniform certificate price: the number of
/// certificates the user buys is `min(course limit, floor(budget /
/// price), eligible courses)`.
///
/// Why this equals the exact optimum's count: audit utilities are
/// non-negative, so every eligible course has certificate value at
/// least its price and adding one never lowers surplus; the feasible
/// bundle with the most courses is therefore optimal, and its size is
/// capped by exactly those three quantities.
pub fn uniform_price_demand(user: &MultiCourseUser, price: Money) -> Result<u64, BudgetError> {
    if price.is_zero() {
        return Err(BudgetError::NonPositivePrice);
    }
    let eligible = (0..user.course_count())
        .filter(|&m| user.eligible(m, price))
        .count() as u64;
    let affordable = user.budget().cents() / price.cents();
    Ok((user.max_courses() as u64).min(affordable).min(eligible))
}

/// Total certificates sold at a uniform price across all users.
pub fn aggregate_uniform_demand(
    users: &[MultiCourseUser],
    price: Money,
) -> Result<u64, BudgetError> {
    users
        .iter()
        .map(|user| uniform_price_demand(user, price))
        .sum()
}

/// Profit-maximizing uniform price for the platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniformPriceOutcome {
    pub price: Money,
    pub profit: Value,
    pub certificates_sold: u64,
    /// True when no uniform price earns positive profit; the price
    /// reported is the marginal cost itself.
    pub all_below_cost: bool,
}

/// Candidate uniform prices: every positive per-course certificate
/// premium, plus every budget quotient `budget / k` (k up to the course
/// limit) rounded down to a cent. Demand steps only at these points —
/// premiums change eligibility, quotients change affordability.
pub fn uniform_price_candidates(users: &[MultiCourseUser]) -> Vec<Money> {
    let mut candidates: Vec<Money> = Vec::new();
    for user in users {
        for m in 0..user.course_count() {
            if let Some(net) = (user.wtp()[m] - user.audit()[m]).to_money() {
                if !net.is_zero() {
                    candidates.push(net);
                }
            }
        }
        for k in 1..=user.max_courses() as u64 {
            let quotient = user.budget().cents() / k;
            if quotient > 0 {
                candidates.push(Money::from_cents(quotient));
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    candidates
}

/// Scans the candidate uniform prices for maximum profit. Ties break
/// toward the lowest price; when nothing earns positive profit the
/// outcome is flagged with price set to the marginal cost.
pub fn optimal_uniform_price(
    users: &[MultiCourseUser],
    marginal_cost: Money,
) -> Result<UniformPriceOutcome, BudgetError> {
    if users.is_empty() {
        return Err(BudgetError::EmptyUsers);
    }
    let mut best: Option<UniformPriceOutcome> = None;
    for price in uniform_price_candidates(users) {
        let sold = aggregate_uniform_demand(users, price)?;
        let profit = (price - marginal_cost) * sold as i64;
        if profit > Value::ZERO && best.as_ref().is_none_or(|b| profit > b.profit) {
            best = Some(UniformPriceOutcome {
                price,
                profit,
                certificates_sold: sold,
                all_below_cost: false,
            });
        }
    }
    Ok(best.unwrap_or(UniformPriceOutcome {
        price: marginal_cost,
        profit: Value::ZERO,
        certificates_sold: 0,
        all_below_cost: true,
    }))
}
