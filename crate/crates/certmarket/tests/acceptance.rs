//! End-to-end acceptance checks, one numbered test per guarantee. Each
//! prints `ACCEPTANCE <n> PASS` on success (visible with
//! `cargo test --test acceptance -- --nocapture`).

use certmarket::analytics::{
    compare_offerings, gini, infer_wtp_buckets, load_sales, lorenz_curve, top_share, LorenzPoint,
};
use certmarket::budget::{
    brute_force_purchase, solve_user_purchase, uniform_price_demand, MultiCourseUser, PriceSchedule,
};
use certmarket::market::{
    candidate_prices, optimal_price, social_welfare, Population, TieRule, UserProfile,
};
use certmarket::population::{generate_population, AuditSpec, DistSpec, PopulationSpec};
use certmarket::stackelberg::{
    backward_induction, estimate_wtp_survival, estimate_wtp_survival_debiased,
    run_price_experiments, run_price_experiments_noisy, NoiseSpec,
};
use certmarket::{Money, Value};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform draw from `lo..=hi` for test-instance generation; modulo
/// bias is irrelevant here.
fn pick(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    lo + rng.next_u64() % (hi - lo + 1)
}

fn random_user(rng: &mut ChaCha8Rng, max_courses_cap: u64) -> (MultiCourseUser, Vec<Money>) {
    let m = pick(rng, 1, max_courses_cap) as usize;
    let wtp: Vec<Money> = (0..m)
        .map(|_| Money::from_cents(pick(rng, 0, 60_000)))
        .collect();
    let audit: Vec<Money> = (0..m)
        .map(|_| Money::from_cents(pick(rng, 0, 20_000)))
        .collect();
    let budget = Money::from_cents(pick(rng, 0, 100_000));
    let max_courses = pick(rng, 0, m as u64) as usize;
    let prices: Vec<Money> = (0..m)
        .map(|_| Money::from_cents(pick(rng, 1, 50_000)))
        .collect();
    let user = MultiCourseUser::new("u", wtp, audit, budget, max_courses).unwrap();
    (user, prices)
}

fn random_population(rng: &mut ChaCha8Rng, max_size: u64) -> Population {
    let size = pick(rng, 1, max_size);
    let users = (0..size)
        .map(|j| {
            UserProfile::new(
                format!("u{j}"),
                Money::from_cents(pick(rng, 0, 60_000)),
                Money::from_cents(pick(rng, 0, 30_000)),
            )
        })
        .collect();
    Population::new(users).unwrap()
}

fn demand_by_counting(population: &Population, price: Money) -> u64 {
    population
        .users()
        .iter()
        .filter(|u| u.net_wtp().cents() >= price.cents() as i64)
        .count() as u64
}

#[test]
fn acceptance_1_exact_solver_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1_000 {
        let (user, prices) = random_user(&mut rng, 12);
        let schedule = PriceSchedule::new(prices).unwrap();
        let fast = solve_user_purchase(&user, &schedule).unwrap();
        let slow = brute_force_purchase(&user, &schedule).unwrap();
        assert_eq!(fast.surplus, slow.surplus);
        assert_eq!(fast.total_spend, slow.total_spend);
        assert_eq!(fast.count, slow.count);
        assert_eq!(fast.chosen, slow.chosen);
    }
    println!("ACCEPTANCE 1 PASS");
}

#[test]
fn acceptance_2_uniform_price_demand_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1_000 {
        let (user, _) = random_user(&mut rng, 12);
        let price = Money::from_cents(pick(&mut rng, 1, 50_000));
        let schedule = PriceSchedule::uniform_schedule(price, user.course_count()).unwrap();
        let slow = brute_force_purchase(&user, &schedule).unwrap();
        let closed_form = uniform_price_demand(&user, price).unwrap();
        assert_eq!(closed_form, slow.count as u64);
    }
    println!("ACCEPTANCE 2 PASS");
}

#[test]
fn acceptance_3_optimal_price_matches_candidate_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..500 {
        let population = random_population(&mut rng, 200);
        let cost = Money::from_cents(pick(&mut rng, 0, 10_000));
        let best = optimal_price(&population, cost, TieRule::IndifferentBuys).unwrap();

        let mut swept: Option<(Money, Value, u64)> = None;
        for price in candidate_prices(&population, cost) {
            let demand = demand_by_counting(&population, price);
            let margin = price.signed() - cost.signed();
            let profit = margin * demand as i64;
            let better = match swept {
                None => true,
                Some((p, best_profit, _)) => {
                    profit > best_profit || (profit == best_profit && price < p)
                }
            };
            if better {
                swept = Some((price, profit, demand));
            }
        }
        let (price, profit, demand) = swept.unwrap();
        if best.all_below_cost {
            assert_eq!(profit, Value::ZERO);
            assert_eq!(best.profit, Value::ZERO);
            assert_eq!(best.price, cost);
        } else {
            assert_eq!(best.price, price);
            assert_eq!(best.profit, profit);
            assert_eq!(best.demand, demand);
        }

        let game = backward_induction(&population, cost, TieRule::IndifferentBuys).unwrap();
        assert_eq!(game.leader_price, best.price);
        assert_eq!(game.profit, best.profit);
        assert_eq!(game.demand, best.demand);
        assert_eq!(game.all_below_cost, best.all_below_cost);
    }
    println!("ACCEPTANCE 3 PASS");
}

#[test]
fn acceptance_4_welfare_peaks_at_marginal_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..500 {
        let population = random_population(&mut rng, 150);
        let cost = Money::from_cents(pick(&mut rng, 0, 20_000));
        let at_cost = social_welfare(&population, cost, cost, TieRule::IndifferentBuys);
        for _ in 0..20 {
            let probe = Money::from_cents(cost.cents() + pick(&mut rng, 1, 60_000));
            let at_probe = social_welfare(&population, probe, cost, TieRule::IndifferentBuys);
            assert!(at_cost >= at_probe);
        }
    }
    println!("ACCEPTANCE 4 PASS");
}

#[test]
fn acceptance_5_survival_estimator_recovers_the_population() {
    let spec = PopulationSpec {
        size: 10_000,
        wtp_dist: DistSpec::Uniform {
            lo: Money::ZERO,
            hi: Money::from_cents(50_000),
        },
        audit_dist: AuditSpec::Dist(DistSpec::Uniform {
            lo: Money::ZERO,
            hi: Money::from_cents(10_000),
        }),
        seed: 505,
    };
    let population = generate_population(&spec).unwrap();
    let prices: Vec<Money> = (1..=20).map(|k| Money::from_cents(k * 2_500)).collect();

    let clean = run_price_experiments(&population, &prices, TieRule::IndifferentBuys).unwrap();
    let estimate = estimate_wtp_survival(&clean).unwrap();
    assert_eq!(estimate.points().len(), prices.len());
    for point in estimate.points() {
        let truth = demand_by_counting(&population, point.price) as f64 / 10_000.0;
        assert_eq!(point.survival, truth);
    }

    let noisy = run_price_experiments_noisy(
        &population,
        &prices,
        TieRule::IndifferentBuys,
        NoiseSpec::DecisionFlip { prob: 0.10 },
        909,
    )
    .unwrap();
    let debiased = estimate_wtp_survival_debiased(&noisy, 0.10).unwrap();
    let sup_norm = debiased
        .points()
        .iter()
        .map(|p| {
            let truth = demand_by_counting(&population, p.price) as f64 / 10_000.0;
            (p.survival - truth).abs()
        })
        .fold(0.0, f64::max);
    assert!(
        sup_norm <= 0.05,
        "noisy estimate off by {sup_norm}, tolerance 0.05"
    );
    println!("ACCEPTANCE 5 PASS");
}

#[test]
fn acceptance_6_sales_fixtures_reproduce_reported_counts() {
    let data = format!("{}/../../data", env!("CARGO_MANIFEST_DIR"));

    let best = load_sales(format!("{data}/best_sellers.csv")).unwrap();
    let buckets = infer_wtp_buckets(&best[0]);
    assert_eq!(
        (buckets.positive, buckets.mid, buckets.high),
        (870, 315, 381)
    );

    let repeats = load_sales(format!("{data}/repeat_offerings.csv")).unwrap();
    let completers: Vec<u64> = repeats.iter().map(|r| r.completers()).collect();
    assert_eq!(completers, vec![870, 566, 257]);
    let comparison = compare_offerings(&repeats, 0.10).unwrap();
    assert!(comparison.declining_totals);
    assert!(comparison.stable_mix);
    println!("ACCEPTANCE 6 PASS");
}

fn trapezoid_area(points: &[LorenzPoint]) -> f64 {
    points
        .windows(2)
        .map(|pair| {
            (pair[1].population_fraction - pair[0].population_fraction)
                * (pair[0].revenue_fraction + pair[1].revenue_fraction)
                / 2.0
        })
        .sum()
}

#[test]
fn acceptance_7_concentration_identities() {
    let units =
        |xs: &[u64]| -> Vec<Money> { xs.iter().map(|&x| Money::from_cents(x * 100)).collect() };
    assert!((gini(&units(&[1, 1, 1, 1])).unwrap()).abs() < 1e-9);
    assert!((gini(&units(&[0, 0, 0, 1])).unwrap() - 0.75).abs() < 1e-9);
    assert!((gini(&units(&[1, 3])).unwrap() - 0.25).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..1_000 {
        let n = pick(&mut rng, 2, 50) as usize;
        let mut cents: Vec<u64> = (0..n).map(|_| pick(&mut rng, 0, 1_000_000)).collect();
        if cents.iter().sum::<u64>() == 0 {
            cents[0] = 1;
        }
        let revenues: Vec<Money> = cents.into_iter().map(Money::from_cents).collect();
        let g = gini(&revenues).unwrap();
        let area = trapezoid_area(&lorenz_curve(&revenues).unwrap());
        assert!((g - (1.0 - 2.0 * area)).abs() < 1e-9);
    }
    println!("ACCEPTANCE 7 PASS");
}

/// Simulates a catalog of 300 courses with power-law audience sizes
/// (course c reaches max(3, floor(3000 / (c+1)^1.2)) users, echoing the
/// wide spread of active users in the bundled sales data) and
/// per-user certificate values drawn from a capped lognormal (median
/// e^5 cents, log-sd 1.8, cap 100,000.00). Revenue per course is the
/// profit of that course's optimal price at zero marginal cost. The
/// heavy tail must concentrate revenue: Gini above 0.6 and the top 15%
/// of courses above half of all revenue.
#[test]
fn acceptance_8_heavy_tailed_catalog_concentrates_revenue() {
    let revenues: Vec<Money> = (0..300u64)
        .map(|course| {
            let audience = (3000.0 / ((course + 1) as f64).powf(1.2)).floor() as u64;
            let spec = PopulationSpec {
                size: audience.max(3),
                wtp_dist: DistSpec::Lognormal {
                    mu: 5.0,
                    sigma: 1.8,
                    cap: Money::from_cents(10_000_000),
                },
                audit_dist: AuditSpec::Dist(DistSpec::Point { value: Money::ZERO }),
                seed: 808 + course,
            };
            let population = generate_population(&spec).unwrap();
            let best = optimal_price(&population, Money::ZERO, TieRule::IndifferentBuys).unwrap();
            best.profit.to_money().unwrap()
        })
        .collect();

    let g = gini(&revenues).unwrap();
    let top15 = top_share(&revenues, 0.15).unwrap();
    assert!(g > 0.6, "revenue gini {g} not above 0.6");
    assert!(top15 > 0.5, "top-15% share {top15} not above 0.5");
    println!("ACCEPTANCE 8 PASS");
}
