//! Config files, flag overrides, and the resolved-config hash.
//!
//! Each subcommand reads one JSON config file. Command-line flags
//! override file values; whatever survives resolution is serialized in
//! a canonical form, logged to stderr, and hashed with SHA-256. The
//! hash is embedded in every output file so results can be traced back
//! to the exact inputs that produced them. The output directory is
//! deliberately excluded from the hash: it changes where results land,
//! never what they contain.

use std::path::PathBuf;

use certmarket::budget::PurchaseInstance;
use certmarket::market::TieRule;
use certmarket::population::PopulationSpec;
use certmarket::stackelberg::NoiseSpec;
use certmarket::Money;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Tie handling vocabulary shared by flags and config files: `weak`
/// lets an indifferent user buy, `strict` makes them decline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TieRuleName {
    Weak,
    Strict,
}

impl TieRuleName {
    pub fn to_rule(self) -> TieRule {
        match self {
            TieRuleName::Weak => TieRule::IndifferentBuys,
            TieRuleName::Strict => TieRule::IndifferentDeclines,
        }
    }
}

/// Where a single-course population comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSource {
    /// Generate deterministically from a distribution spec.
    Generate(PopulationSpec),
    /// Load from a population CSV (`id,wtp,audit`).
    Csv(PathBuf),
}

/// Prices at which to sample a demand curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriceGrid {
    Explicit { prices: Vec<Money> },
    Range { lo: Money, hi: Money, step: Money },
}

impl PriceGrid {
    /// Expands to a strictly increasing list of prices.
    pub fn expand(&self) -> Result<Vec<Money>, CliError> {
        match self {
            PriceGrid::Explicit { prices } => {
                if prices.is_empty() {
                    return Err(CliError::config("price grid is empty"));
                }
                if !prices.windows(2).all(|w| w[0] < w[1]) {
                    return Err(CliError::config("price grid must be strictly increasing"));
                }
                Ok(prices.clone())
            }
            PriceGrid::Range { lo, hi, step } => {
                if step.is_zero() {
                    return Err(CliError::config("price grid step must be positive"));
                }
                if hi < lo {
                    return Err(CliError::config("price grid hi must be at least lo"));
                }
                let mut prices = Vec::new();
                let mut cents = lo.cents();
                while cents <= hi.cents() {
                    prices.push(Money::from_cents(cents));
                    cents += step.cents();
                }
                Ok(prices)
            }
        }
    }
}

/// Where a multi-course purchase instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// Load from a JSON file holding `{ "users": [...], "prices": [...] }`.
    Json(PathBuf),
    /// Spell the instance out inside the config itself.
    Inline(PurchaseInstance),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub population: PopulationSource,
    #[serde(default)]
    pub marginal_cost: Option<Money>,
    #[serde(default)]
    pub tie_rule: Option<TieRuleName>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub price_grid: Option<PriceGrid>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub instance: InstanceSource,
    #[serde(default)]
    pub marginal_cost: Option<Money>,
    #[serde(default)]
    pub price_grid: Option<PriceGrid>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default)]
    pub population: Option<PopulationSource>,
    /// Pre-recorded experiments CSV
    /// (`price,population_size,observed_demand`); mutually exclusive
    /// with `population`.
    #[serde(default)]
    pub experiments_csv: Option<PathBuf>,
    /// Probe prices; required with `population`.
    #[serde(default)]
    pub prices: Option<Vec<Money>>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// Invert known decision-flip noise before monotonizing
    /// (default true).
    #[serde(default)]
    pub debias: Option<bool>,
    #[serde(default)]
    pub tie_rule: Option<TieRuleName>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub sales_csv: PathBuf,
    #[serde(default)]
    pub tier_prices: Option<TierPricesConfig>,
    #[serde(default)]
    pub top_fraction: Option<f64>,
    #[serde(default)]
    pub stable_mix_tolerance: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierPricesConfig {
    pub paper: Money,
    pub verified: Money,
}

/// Fully resolved optimize run: every knob has a concrete value.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedOptimize {
    pub command: &'static str,
    pub population: PopulationSource,
    pub marginal_cost: Money,
    pub tie_rule: TieRuleName,
    pub price_grid: Option<PriceGrid>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedBudget {
    pub command: &'static str,
    pub instance: InstanceSource,
    pub marginal_cost: Money,
    pub price_grid: Option<PriceGrid>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedEstimate {
    pub command: &'static str,
    pub population: Option<PopulationSource>,
    pub experiments_csv: Option<PathBuf>,
    pub prices: Option<Vec<Money>>,
    pub noise: Option<NoiseSpec>,
    pub debias: bool,
    pub tie_rule: TieRuleName,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedAnalyze {
    pub command: &'static str,
    pub sales_csv: PathBuf,
    pub tier_prices: TierPricesConfig,
    pub top_fraction: f64,
    pub stable_mix_tolerance: f64,
}

/// Reads and deserializes one JSON config file. All failures here are
/// configuration errors.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid config {path:?}: {e}")))
}

/// Canonical serialization of a resolved config, logged to stderr for
/// reproducibility.
pub fn log_resolved<T: Serialize>(resolved: &T, out_dir: &std::path::Path) {
    let pretty = serde_json::to_string_pretty(resolved).expect("resolved config serializes");
    eprintln!("resolved config: {pretty}");
    eprintln!("output directory: {}", out_dir.display());
}

/// SHA-256 of the canonical resolved-config serialization, in hex.
pub fn config_hash<T: Serialize>(resolved: &T) -> String {
    let canonical = serde_json::to_string(resolved).expect("resolved config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
