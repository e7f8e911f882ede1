//! The four subcommands. Each loads its config, applies flag
//! overrides, logs the resolved settings, computes, and writes output
//! files that embed the resolved-config hash.

use std::io::Write;
use std::path::{Path, PathBuf};

use certmarket::analytics::{
    compare_offerings, course_revenue, gini, infer_wtp_buckets, load_sales, lorenz_curve,
    lorenz_to_csv, payment_rate, scatter_data, scatter_to_csv, top_share, AnalyticsError,
    OfferingComparison, SalesRecord, TierPrices,
};
use certmarket::budget::{
    aggregate_uniform_demand, optimal_uniform_price, solve_user_purchase, uniform_price_candidates,
    MultiCourseUser, PurchaseInstance,
};
use certmarket::market::{
    aggregate_demand, candidate_prices, demand_curve, optimal_price, social_welfare, Population,
};
use certmarket::population::{generate_population, read_population_csv};
use certmarket::stackelberg::{
    estimate_wtp_survival, estimate_wtp_survival_debiased, run_price_experiments,
    run_price_experiments_noisy, NoiseSpec, PriceExperiment,
};
use certmarket::{Money, Value};
use serde::Serialize;

use crate::config::{
    config_hash, load_config, log_resolved, AnalyzeConfig, BudgetConfig, EstimateConfig,
    InstanceSource, OptimizeConfig, PopulationSource, ResolvedAnalyze, ResolvedBudget,
    ResolvedEstimate, ResolvedOptimize, TieRuleName, TierPricesConfig,
};
use crate::{CliError, CommonArgs};

const MAX_GRID_POINTS: usize = 100_000;

fn parse_money_flag(raw: &Option<String>, flag: &str) -> Result<Option<Money>, CliError> {
    raw.as_deref()
        .map(|s| {
            s.parse()
                .map_err(|e| CliError::config(format!("invalid {flag} {s:?}: {e}")))
        })
        .transpose()
}

fn ensure_out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::config(format!("cannot create output directory {dir:?}: {e}")))?;
    Ok(dir)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("cannot serialize {name}: {e}")))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::data(format!("cannot write {path:?}: {e}")))
}

fn write_csv<F>(dir: &Path, name: &str, hash: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={hash}").expect("in-memory write");
    body(&mut buf).map_err(|e| CliError::data(format!("cannot render {name}: {e}")))?;
    std::fs::write(&path, buf).map_err(|e| CliError::data(format!("cannot write {path:?}: {e}")))
}

/// Loads a population from its source; `generated` reports whether it
/// was synthesized (errors then count against the config) or read from
/// a data file.
fn load_population(source: &PopulationSource) -> Result<(Population, bool), CliError> {
    match source {
        PopulationSource::Generate(spec) => {
            let population = generate_population(spec)
                .map_err(|e| CliError::config(format!("population spec: {e}")))?;
            Ok((population, true))
        }
        PopulationSource::Csv(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::data(format!("cannot open population {path:?}: {e}")))?;
            let population = read_population_csv(file)
                .map_err(|e| CliError::data(format!("population {path:?}: {e}")))?;
            Ok((population, false))
        }
    }
}

/// Applies the effective seed to a generated population's spec so the
/// logged config shows exactly what was sampled.
fn override_population_seed(source: &mut PopulationSource, seed: Option<u64>) {
    if let (PopulationSource::Generate(spec), Some(seed)) = (source, seed) {
        spec.seed = seed;
    }
}

#[derive(Serialize)]
struct OptimizeReport {
    config_hash: String,
    population_size: usize,
    marginal_cost: Money,
    tie_rule: TieRuleName,
    optimal_price: Money,
    profit: Value,
    demand: u64,
    all_below_cost: bool,
    welfare_at_optimum: Value,
    welfare_at_cost: Value,
}

pub fn optimize(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: OptimizeConfig = load_config(&args.config)?;
    let marginal_cost = parse_money_flag(&args.marginal_cost, "--marginal-cost")?
        .or(cfg.marginal_cost)
        .unwrap_or(Money::ZERO);
    let tie_rule = args.tie_rule.or(cfg.tie_rule).unwrap_or(TieRuleName::Weak);
    let seed = args.seed.or(cfg.seed);
    let mut population_source = cfg.population;
    override_population_seed(&mut population_source, seed);
    let out_dir = ensure_out_dir(args.out.clone().or(cfg.out))?;

    let resolved = ResolvedOptimize {
        command: "optimize",
        population: population_source,
        marginal_cost,
        tie_rule,
        price_grid: cfg.price_grid,
        seed,
    };
    log_resolved(&resolved, &out_dir);
    let hash = config_hash(&resolved);

    let (population, generated) = load_population(&resolved.population)?;
    let rule = tie_rule.to_rule();
    let empty_population = |e| {
        if generated {
            CliError::config(format!("{e}"))
        } else {
            CliError::data(format!("{e}"))
        }
    };
    let best = optimal_price(&population, marginal_cost, rule).map_err(empty_population)?;
    let report = OptimizeReport {
        config_hash: hash.clone(),
        population_size: population.len(),
        marginal_cost,
        tie_rule,
        optimal_price: best.price,
        profit: best.profit,
        demand: best.demand,
        all_below_cost: best.all_below_cost,
        welfare_at_optimum: social_welfare(&population, best.price, marginal_cost, rule),
        welfare_at_cost: social_welfare(&population, marginal_cost, marginal_cost, rule),
    };
    write_json(&out_dir, "report.json", &report)?;

    let grid = match &resolved.price_grid {
        Some(grid) => {
            let prices = grid.expand()?;
            if prices.len() > MAX_GRID_POINTS {
                return Err(CliError::config(format!(
                    "price grid has {} points, limit {MAX_GRID_POINTS}",
                    prices.len()
                )));
            }
            prices
        }
        None => candidate_prices(&population, marginal_cost),
    };
    let curve = demand_curve(&population, &grid, marginal_cost, rule)
        .map_err(|e| CliError::config(format!("price grid: {e}")))?;
    write_csv(&out_dir, "demand_curve.csv", &hash, |buf| {
        writeln!(buf, "price,demand,profit")?;
        for sample in curve.samples() {
            writeln!(buf, "{},{},{}", sample.price, sample.demand, sample.profit)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct SelectionRow {
    user_id: String,
    chosen_courses: Vec<usize>,
    total_spend: Money,
    surplus: Value,
    count: usize,
}

#[derive(Serialize)]
struct UniformRow {
    price: Money,
    profit: Value,
    certificates_sold: u64,
    all_below_cost: bool,
}

#[derive(Serialize)]
struct BudgetReport {
    config_hash: String,
    user_count: usize,
    course_count: usize,
    marginal_cost: Money,
    prices: Vec<Money>,
    selections: Vec<SelectionRow>,
    optimal_uniform: UniformRow,
}

fn load_instance(source: &InstanceSource) -> Result<(PurchaseInstance, bool), CliError> {
    match source {
        InstanceSource::Json(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("cannot read instance {path:?}: {e}")))?;
            let instance = serde_json::from_str(&text)
                .map_err(|e| CliError::data(format!("instance {path:?}: {e}")))?;
            Ok((instance, false))
        }
        InstanceSource::Inline(instance) => Ok((instance.clone(), true)),
    }
}

pub fn budget(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: BudgetConfig = load_config(&args.config)?;
    let marginal_cost = parse_money_flag(&args.marginal_cost, "--marginal-cost")?
        .or(cfg.marginal_cost)
        .unwrap_or(Money::ZERO);
    let out_dir = ensure_out_dir(args.out.clone().or(cfg.out))?;

    let resolved = ResolvedBudget {
        command: "budget",
        instance: cfg.instance,
        marginal_cost,
        price_grid: cfg.price_grid,
    };
    log_resolved(&resolved, &out_dir);
    let hash = config_hash(&resolved);

    let (instance, inline) = load_instance(&resolved.instance)?;
    let instance_error = |e: certmarket::budget::BudgetError| {
        if inline {
            CliError::config(format!("instance: {e}"))
        } else {
            CliError::data(format!("instance: {e}"))
        }
    };
    let schedule = instance.schedule().map_err(instance_error)?;
    let users: &[MultiCourseUser] = &instance.users;

    let selections = users
        .iter()
        .map(|user| {
            let selection = solve_user_purchase(user, &schedule).map_err(instance_error)?;
            Ok(SelectionRow {
                user_id: user.id().to_string(),
                chosen_courses: selection.chosen_indices(),
                total_spend: selection.total_spend,
                surplus: selection.surplus,
                count: selection.count,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let uniform = optimal_uniform_price(users, marginal_cost).map_err(instance_error)?;
    let report = BudgetReport {
        config_hash: hash.clone(),
        user_count: users.len(),
        course_count: schedule.len(),
        marginal_cost,
        prices: schedule.prices().to_vec(),
        selections,
        optimal_uniform: UniformRow {
            price: uniform.price,
            profit: uniform.profit,
            certificates_sold: uniform.certificates_sold,
            all_below_cost: uniform.all_below_cost,
        },
    };
    write_json(&out_dir, "report.json", &report)?;

    let grid = match &resolved.price_grid {
        Some(grid) => {
            let prices = grid.expand()?;
            if prices.len() > MAX_GRID_POINTS {
                return Err(CliError::config(format!(
                    "price grid has {} points, limit {MAX_GRID_POINTS}",
                    prices.len()
                )));
            }
            prices
        }
        None => uniform_price_candidates(users),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for price in grid {
        let demand = aggregate_uniform_demand(users, price)
            .map_err(|e| CliError::config(format!("price grid: {e}")))?;
        rows.push((price, demand));
    }
    write_csv(&out_dir, "uniform_demand.csv", &hash, |buf| {
        writeln!(buf, "price,demand")?;
        for (price, demand) in &rows {
            writeln!(buf, "{price},{demand}")?;
        }
        Ok(())
    })
}

pub const EXPERIMENTS_HEADER: &str = "price,population_size,observed_demand";

fn read_experiments_csv(path: &Path) -> Result<Vec<PriceExperiment>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read experiments {path:?}: {e}")))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim_end() == EXPERIMENTS_HEADER => {}
        other => return Err(CliError::data(format!(
            "experiments {path:?} row 1: expected header {EXPERIMENTS_HEADER:?}, found {other:?}"
        ))),
    }
    let mut experiments = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let bad =
            |message: String| CliError::data(format!("experiments {path:?} row {row}: {message}"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let price: Money = fields[0].parse().map_err(|e| bad(format!("price: {e}")))?;
        let size: u64 = fields[1]
            .parse()
            .map_err(|e| bad(format!("population_size: {e}")))?;
        let demand: u64 = fields[2]
            .parse()
            .map_err(|e| bad(format!("observed_demand: {e}")))?;
        experiments
            .push(PriceExperiment::new(price, size, demand).map_err(|e| bad(e.to_string()))?);
    }
    Ok(experiments)
}

#[derive(Serialize)]
struct PointRow {
    price: Money,
    survival: f64,
}

#[derive(Serialize)]
struct EstimateReport {
    config_hash: String,
    tie_rule: TieRuleName,
    noise: Option<NoiseSpec>,
    debias: bool,
    points: Vec<PointRow>,
    /// Exact survival of the synthetic population at each estimated
    /// price; absent when the input is a recorded experiments file.
    true_survival: Option<Vec<PointRow>>,
    sup_error: Option<f64>,
}

pub fn estimate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: EstimateConfig = load_config(&args.config)?;
    let tie_rule = args.tie_rule.or(cfg.tie_rule).unwrap_or(TieRuleName::Weak);
    let seed = args.seed.or(cfg.seed);
    let debias = cfg.debias.unwrap_or(true);
    let out_dir = ensure_out_dir(args.out.clone().or(cfg.out))?;

    let mut population_source = cfg.population;
    if let Some(source) = population_source.as_mut() {
        override_population_seed(source, seed);
    }
    match (&population_source, &cfg.experiments_csv) {
        (None, None) => {
            return Err(CliError::config(
                "config needs either a population or an experiments_csv",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "population and experiments_csv are mutually exclusive",
            ))
        }
        (Some(_), None) if cfg.prices.as_ref().is_none_or(|p| p.is_empty()) => {
            return Err(CliError::config(
                "probing a population needs a non-empty prices list",
            ))
        }
        (None, Some(_)) if cfg.noise.is_some() => {
            return Err(CliError::config(
                "noise applies only when probing a population",
            ))
        }
        _ => {}
    }
    if let Some(noise) = &cfg.noise {
        noise
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
    }

    let resolved = ResolvedEstimate {
        command: "estimate",
        population: population_source,
        experiments_csv: cfg.experiments_csv,
        prices: cfg.prices,
        noise: cfg.noise,
        debias,
        tie_rule,
        seed,
    };
    log_resolved(&resolved, &out_dir);
    let hash = config_hash(&resolved);
    let rule = tie_rule.to_rule();

    let (experiments, population) = match &resolved.population {
        Some(source) => {
            let (population, generated) = load_population(source)?;
            let prices = resolved.prices.as_deref().expect("validated above");
            let noise_seed = seed.unwrap_or(0);
            let experiments = match resolved.noise {
                Some(noise) => {
                    run_price_experiments_noisy(&population, prices, rule, noise, noise_seed)
                }
                None => run_price_experiments(&population, prices, rule),
            }
            .map_err(|e| {
                if generated {
                    CliError::config(e.to_string())
                } else {
                    CliError::data(e.to_string())
                }
            })?;
            (experiments, Some(population))
        }
        None => {
            let path = resolved.experiments_csv.as_ref().expect("validated above");
            (read_experiments_csv(path)?, None)
        }
    };

    let flip_prob = match resolved.noise {
        Some(NoiseSpec::DecisionFlip { prob }) if debias => Some(prob),
        _ => None,
    };
    let survival = match flip_prob {
        Some(prob) => estimate_wtp_survival_debiased(&experiments, prob),
        None => estimate_wtp_survival(&experiments),
    }
    .map_err(|e| CliError::data(e.to_string()))?;

    let points: Vec<PointRow> = survival
        .points()
        .iter()
        .map(|p| PointRow {
            price: p.price,
            survival: p.survival,
        })
        .collect();
    let true_survival = population.as_ref().map(|population| {
        survival
            .points()
            .iter()
            .map(|p| PointRow {
                price: p.price,
                survival: aggregate_demand(population, p.price, rule) as f64
                    / population.len() as f64,
            })
            .collect::<Vec<_>>()
    });
    let sup_error = true_survival.as_ref().map(|truth| {
        truth
            .iter()
            .zip(&points)
            .map(|(t, e)| (t.survival - e.survival).abs())
            .fold(0.0, f64::max)
    });

    let report = EstimateReport {
        config_hash: hash.clone(),
        tie_rule,
        noise: resolved.noise,
        debias,
        points,
        true_survival,
        sup_error,
    };
    write_json(&out_dir, "report.json", &report)?;
    write_csv(&out_dir, "survival.csv", &hash, |buf| survival.to_csv(buf))
}

#[derive(Serialize)]
struct CourseRow {
    course_id: String,
    semester: String,
    subject: String,
    active_users: u64,
    positive: u64,
    mid: u64,
    high: u64,
    revenue: Money,
    payment_rate: Option<f64>,
}

#[derive(Serialize)]
struct AnalyzeSummary {
    config_hash: String,
    tier_prices: TierPricesConfig,
    course_count: usize,
    courses: Vec<CourseRow>,
    total_revenue: Money,
    gini: Option<f64>,
    top_fraction: f64,
    top_share: Option<f64>,
    comparisons: Vec<OfferingComparison>,
}

pub fn analyze(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: AnalyzeConfig = load_config(&args.config)?;
    let tier_config = cfg.tier_prices.unwrap_or(TierPricesConfig {
        paper: Money::from_cents(10_000),
        verified: Money::from_cents(30_000),
    });
    let tier_prices = TierPrices::new(tier_config.paper, tier_config.verified)
        .map_err(|e| CliError::config(e.to_string()))?;
    let top_fraction = cfg.top_fraction.unwrap_or(0.15);
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(CliError::config(format!(
            "top_fraction {top_fraction} outside (0, 1]"
        )));
    }
    let tolerance = cfg.stable_mix_tolerance.unwrap_or(0.10);
    if tolerance < 0.0 || !tolerance.is_finite() {
        return Err(CliError::config(format!(
            "stable_mix_tolerance {tolerance} must be non-negative"
        )));
    }
    let out_dir = ensure_out_dir(args.out.clone().or(cfg.out))?;

    let resolved = ResolvedAnalyze {
        command: "analyze",
        sales_csv: cfg.sales_csv,
        tier_prices: tier_config,
        top_fraction,
        stable_mix_tolerance: tolerance,
    };
    log_resolved(&resolved, &out_dir);
    let hash = config_hash(&resolved);

    let records = load_sales(&resolved.sales_csv).map_err(|e| CliError::data(e.to_string()))?;

    let courses: Vec<CourseRow> = records
        .iter()
        .map(|r| {
            let buckets = infer_wtp_buckets(r);
            let rate = match payment_rate(r) {
                Ok(rate) => Some(rate),
                Err(AnalyticsError::NoCompleters) => None,
                Err(e) => return Err(CliError::data(e.to_string())),
            };
            Ok(CourseRow {
                course_id: r.course_id().to_string(),
                semester: r.semester().to_string(),
                subject: r.subject().to_string(),
                active_users: r.active_users(),
                positive: buckets.positive,
                mid: buckets.mid,
                high: buckets.high,
                revenue: course_revenue(&buckets, &tier_prices),
                payment_rate: rate,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let revenues: Vec<Money> = courses.iter().map(|c| c.revenue).collect();
    let total_revenue: Money = revenues.iter().copied().sum();
    let concentration = if total_revenue.is_zero() {
        None
    } else {
        let g = gini(&revenues).map_err(|e| CliError::data(e.to_string()))?;
        let share =
            top_share(&revenues, top_fraction).map_err(|e| CliError::data(e.to_string()))?;
        Some((g, share))
    };

    let mut groups: Vec<(&str, Vec<SalesRecord>)> = Vec::new();
    for record in &records {
        match groups.iter_mut().find(|(id, _)| *id == record.course_id()) {
            Some((_, members)) => members.push(record.clone()),
            None => groups.push((record.course_id(), vec![record.clone()])),
        }
    }
    let comparisons = groups
        .iter()
        .filter(|(_, members)| members.len() >= 2)
        .map(|(_, members)| {
            compare_offerings(members, tolerance).map_err(|e| CliError::data(e.to_string()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let summary = AnalyzeSummary {
        config_hash: hash.clone(),
        tier_prices: tier_config,
        course_count: courses.len(),
        courses,
        total_revenue,
        gini: concentration.map(|(g, _)| g),
        top_fraction,
        top_share: concentration.map(|(_, s)| s),
        comparisons,
    };
    write_json(&out_dir, "summary.json", &summary)?;

    write_csv(&out_dir, "lorenz.csv", &hash, |buf| match concentration {
        Some(_) => {
            let points = lorenz_curve(&revenues).expect("non-zero total checked");
            lorenz_to_csv(&points, buf)
        }
        None => writeln!(buf, "population_fraction,revenue_fraction"),
    })?;
    write_csv(&out_dir, "scatter.csv", &hash, |buf| {
        scatter_to_csv(&scatter_data(&records), buf)
    })
}
