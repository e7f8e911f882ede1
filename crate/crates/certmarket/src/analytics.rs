//! Sales-data analytics: willingness-to-pay buckets, revenue
//! concentration, and payment behavior from per-course sales counts.
//!
//! The input is one CSV row per course offering with audited activity
//! and certificate sales. Completing a course signals positive
//! willingness to pay; buying the cheaper paper certificate places a
//! user in the middle value bucket and buying the verified certificate
//! in the top one. On top of the buckets the module computes per-course
//! revenue, the Lorenz curve and Gini coefficient of revenue
//! concentration, top-seller revenue shares, payment rates among
//! completers, and semester-over-semester comparisons for repeatedly
//! offered courses.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("cannot open sales file {path:?}: {source}")]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed sales CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("sales CSV row {row}, column {column}: {message}")]
    SchemaMismatch {
        row: usize,
        column: String,
        message: String,
    },
    #[error("sales CSV row {row}: {message}")]
    InvariantViolation { row: usize, message: String },
    #[error("invalid sales record: {0}")]
    InvalidRecord(String),
    #[error("no revenues given")]
    NoRevenues,
    #[error("total revenue is zero")]
    ZeroTotalRevenue,
    #[error("mean revenue is zero")]
    ZeroMean,
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("tolerance {0} must be non-negative")]
    InvalidTolerance(f64),
    #[error("record has no completers")]
    NoCompleters,
    #[error("need at least two offerings to compare")]
    TooFewOfferings,
    #[error("offerings mix course ids {expected:?} and {found:?}")]
    MixedCourseIds { expected: String, found: String },
    #[error("duplicate semester {0:?} among offerings")]
    DuplicateSemester(String),
}

/// Observed counts for one course offering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SalesRecord {
    course_id: String,
    semester: String,
    subject: String,
    active_users: u64,
    completers: u64,
    paper_certs: u64,
    verified_certs: u64,
}

impl SalesRecord {
    pub fn new(
        course_id: impl Into<String>,
        semester: impl Into<String>,
        subject: impl Into<String>,
        active_users: u64,
        completers: u64,
        paper_certs: u64,
        verified_certs: u64,
    ) -> Result<SalesRecord, AnalyticsError> {
        if paper_certs + verified_certs > active_users {
            return Err(AnalyticsError::InvalidRecord(format!(
                "{} paying users exceed {} active users",
                paper_certs + verified_certs,
                active_users
            )));
        }
        Ok(SalesRecord {
            course_id: course_id.into(),
            semester: semester.into(),
            subject: subject.into(),
            active_users,
            completers,
            paper_certs,
            verified_certs,
        })
    }

    pub fn course_id(&self) -> &str {
        &self.course_id
    }

    pub fn semester(&self) -> &str {
        &self.semester
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn active_users(&self) -> u64 {
        self.active_users
    }

    pub fn completers(&self) -> u64 {
        self.completers
    }

    pub fn paper_certs(&self) -> u64 {
        self.paper_certs
    }

    pub fn verified_certs(&self) -> u64 {
        self.verified_certs
    }

    pub fn paying_users(&self) -> u64 {
        self.paper_certs + self.verified_certs
    }
}

/// User counts in the three inferred willingness-to-pay intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WtpBuckets {
    /// Users with any positive WTP: everyone who completed the course.
    pub positive: u64,
    /// Users valuing a certificate at or above the paper tier but below
    /// the verified tier.
    pub mid: u64,
    /// Users valuing a certificate at or above the verified tier.
    pub high: u64,
}

/// Certificate tier prices used for revenue computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TierPrices {
    paper_price: Money,
    verified_price: Money,
}

impl TierPrices {
    pub fn new(paper_price: Money, verified_price: Money) -> Result<TierPrices, AnalyticsError> {
        if paper_price.is_zero() || paper_price >= verified_price {
            return Err(AnalyticsError::InvalidRecord(format!(
                "tier prices must satisfy 0 < paper ({paper_price}) < verified ({verified_price})"
            )));
        }
        Ok(TierPrices {
            paper_price,
            verified_price,
        })
    }

    pub fn paper_price(&self) -> Money {
        self.paper_price
    }

    pub fn verified_price(&self) -> Money {
        self.verified_price
    }
}

impl Default for TierPrices {
    fn default() -> TierPrices {
        TierPrices {
            paper_price: Money::from_cents(10_000),
            verified_price: Money::from_cents(30_000),
        }
    }
}

pub const SALES_HEADER: &str =
    "course_id,semester,subject,active_users,completers,paper_certs,verified_certs";

/// Loads sales records from a CSV file with the exact header
/// [`SALES_HEADER`]. Error row numbers count the header as row 1.
pub fn load_sales(path: impl AsRef<Path>) -> Result<Vec<SalesRecord>, AnalyticsError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| AnalyticsError::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sales(file)
}

/// Parses sales records from any CSV reader; see [`load_sales`].
pub fn parse_sales<R: Read>(reader: R) -> Result<Vec<SalesRecord>, AnalyticsError> {
    let mut input = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = input.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != SALES_HEADER {
        return Err(AnalyticsError::SchemaMismatch {
            row: 1,
            column: "header".to_string(),
            message: format!("expected {SALES_HEADER:?}, found {header:?}"),
        });
    }
    let columns = SALES_HEADER.split(',').collect::<Vec<_>>();
    let mut records = Vec::new();
    for (i, record) in input.records().enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != columns.len() {
            return Err(AnalyticsError::SchemaMismatch {
                row,
                column: "record".to_string(),
                message: format!("expected {} fields, found {}", columns.len(), record.len()),
            });
        }
        let count = |field: usize| -> Result<u64, AnalyticsError> {
            record[field]
                .parse()
                .map_err(|e| AnalyticsError::SchemaMismatch {
                    row,
                    column: columns[field].to_string(),
                    message: format!("{e}: {:?}", &record[field]),
                })
        };
        let parsed = SalesRecord::new(
            record[0].to_string(),
            record[1].to_string(),
            record[2].to_string(),
            count(3)?,
            count(4)?,
            count(5)?,
            count(6)?,
        )
        .map_err(|e| AnalyticsError::InvariantViolation {
            row,
            message: e.to_string(),
        })?;
        records.push(parsed);
    }
    Ok(records)
}

/// Buckets an offering's users by inferred willingness to pay:
/// completing signals a positive value, buying the paper certificate a
/// mid-tier value, and buying the verified certificate a top-tier value.
pub fn infer_wtp_buckets(record: &SalesRecord) -> WtpBuckets {
    WtpBuckets {
        positive: record.completers,
        mid: record.paper_certs,
        high: record.verified_certs,
    }
}

/// Certificate revenue for one offering at the given tier prices.
pub fn course_revenue(buckets: &WtpBuckets, prices: &TierPrices) -> Money {
    let paper = buckets.mid * prices.paper_price.cents();
    let verified = buckets.high * prices.verified_price.cents();
    Money::from_cents(paper + verified)
}

/// One point on the Lorenz curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorenzPoint {
    pub population_fraction: f64,
    pub revenue_fraction: f64,
}

/// Lorenz curve of revenue concentration: courses sorted by ascending
/// revenue, cumulative revenue share against cumulative course share,
/// anchored at (0,0) and ending at (1,1).
pub fn lorenz_curve(revenues: &[Money]) -> Result<Vec<LorenzPoint>, AnalyticsError> {
    if revenues.is_empty() {
        return Err(AnalyticsError::NoRevenues);
    }
    let mut cents: Vec<u64> = revenues.iter().map(|m| m.cents()).collect();
    cents.sort_unstable();
    let total: u128 = cents.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(AnalyticsError::ZeroTotalRevenue);
    }
    let n = cents.len();
    let mut points = Vec::with_capacity(n + 1);
    points.push(LorenzPoint {
        population_fraction: 0.0,
        revenue_fraction: 0.0,
    });
    let mut cumulative: u128 = 0;
    for (k, &c) in cents.iter().enumerate() {
        cumulative += c as u128;
        points.push(LorenzPoint {
            population_fraction: (k + 1) as f64 / n as f64,
            revenue_fraction: cumulative as f64 / total as f64,
        });
    }
    Ok(points)
}

/// Gini coefficient of revenue concentration, by the population
/// pairwise formula: the mean absolute difference between all ordered
/// pairs, normalized by twice the mean. Sums are exact integers; the
/// only floating-point step is the final division.
pub fn gini(revenues: &[Money]) -> Result<f64, AnalyticsError> {
    if revenues.is_empty() {
        return Err(AnalyticsError::NoRevenues);
    }
    let cents: Vec<u64> = revenues.iter().map(|m| m.cents()).collect();
    let total: u128 = cents.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(AnalyticsError::ZeroMean);
    }
    let mut pair_diffs: u128 = 0;
    for (i, &xi) in cents.iter().enumerate() {
        for &xj in &cents[i + 1..] {
            pair_diffs += xi.abs_diff(xj) as u128;
        }
    }
    // Both orderings of each pair count, so the ordered-pair sum is
    // twice pair_diffs; with n^2 * mean = n * total the coefficient is
    // 2*pair_diffs / (2 * n * total).
    let n = cents.len() as f64;
    Ok(pair_diffs as f64 / (n * total as f64))
}

/// Revenue share of the top `fraction` of courses (by revenue), taking
/// the ceiling when the cut lands between courses.
pub fn top_share(revenues: &[Money], fraction: f64) -> Result<f64, AnalyticsError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AnalyticsError::InvalidFraction(fraction));
    }
    if revenues.is_empty() {
        return Err(AnalyticsError::NoRevenues);
    }
    let mut cents: Vec<u64> = revenues.iter().map(|m| m.cents()).collect();
    let total: u128 = cents.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(AnalyticsError::ZeroTotalRevenue);
    }
    cents.sort_unstable_by(|a, b| b.cmp(a));
    let k = ((fraction * cents.len() as f64).ceil() as usize).clamp(1, cents.len());
    let top: u128 = cents[..k].iter().map(|&c| c as u128).sum();
    Ok(top as f64 / total as f64)
}

/// Paying users per completer. Uses the documented assumption that
/// payers are counted among completers; the ratio is reported as-is and
/// can exceed 1 when a course's buyers skipped completion.
pub fn payment_rate(record: &SalesRecord) -> Result<f64, AnalyticsError> {
    if record.completers == 0 {
        return Err(AnalyticsError::NoCompleters);
    }
    Ok(record.paying_users() as f64 / record.completers as f64)
}

pub const DEFAULT_STABLE_MIX_TOLERANCE: f64 = 0.10;

/// Bucket proportions for one offering within a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfferingMix {
    pub semester: String,
    pub completers: u64,
    /// Paper-tier buyers per completer; absent without completers.
    pub mid_share: Option<f64>,
    /// Verified-tier buyers per completer; absent without completers.
    pub high_share: Option<f64>,
    /// Verified-tier buyers among all buyers; absent without buyers.
    pub paid_high_share: Option<f64>,
}

/// Semester-over-semester comparison of one course's offerings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfferingComparison {
    pub course_id: String,
    pub offerings: Vec<OfferingMix>,
    /// Completer counts strictly decrease across offerings.
    pub declining_totals: bool,
    /// The verified share of paid certificates stays within the given
    /// tolerance across all offerings that sold any.
    pub stable_mix: bool,
}

/// Compares repeat offerings of a single course, taking input order as
/// chronological. Requires at least two records, one course id, and
/// distinct semesters.
pub fn compare_offerings(
    records: &[SalesRecord],
    tolerance: f64,
) -> Result<OfferingComparison, AnalyticsError> {
    if tolerance < 0.0 || !tolerance.is_finite() {
        return Err(AnalyticsError::InvalidTolerance(tolerance));
    }
    if records.len() < 2 {
        return Err(AnalyticsError::TooFewOfferings);
    }
    let course_id = records[0].course_id.clone();
    for record in records {
        if record.course_id != course_id {
            return Err(AnalyticsError::MixedCourseIds {
                expected: course_id,
                found: record.course_id.clone(),
            });
        }
    }
    let mut semesters: Vec<&str> = records.iter().map(|r| r.semester.as_str()).collect();
    semesters.sort_unstable();
    for pair in semesters.windows(2) {
        if pair[0] == pair[1] {
            return Err(AnalyticsError::DuplicateSemester(pair[0].to_string()));
        }
    }

    let offerings: Vec<OfferingMix> = records
        .iter()
        .map(|r| {
            let buckets = infer_wtp_buckets(r);
            let per_completer =
                |count: u64| (buckets.positive > 0).then(|| count as f64 / buckets.positive as f64);
            let paid = buckets.mid + buckets.high;
            OfferingMix {
                semester: r.semester.clone(),
                completers: r.completers,
                mid_share: per_completer(buckets.mid),
                high_share: per_completer(buckets.high),
                paid_high_share: (paid > 0).then(|| buckets.high as f64 / paid as f64),
            }
        })
        .collect();

    let declining_totals = records
        .windows(2)
        .all(|pair| pair[0].completers > pair[1].completers);

    let shares: Vec<f64> = offerings.iter().filter_map(|o| o.paid_high_share).collect();
    let stable_mix = match (
        shares.iter().cloned().reduce(f64::min),
        shares.iter().cloned().reduce(f64::max),
    ) {
        (Some(lo), Some(hi)) => hi - lo <= tolerance,
        _ => true,
    };

    Ok(OfferingComparison {
        course_id,
        offerings,
        declining_totals,
        stable_mix,
    })
}

/// Plot-ready (active users, paying users) pairs, in record order.
pub fn scatter_data(records: &[SalesRecord]) -> Vec<(u64, u64)> {
    records
        .iter()
        .map(|r| (r.active_users, r.paying_users()))
        .collect()
}

/// Writes Lorenz points as CSV: `population_fraction,revenue_fraction`.
pub fn lorenz_to_csv<W: Write>(points: &[LorenzPoint], mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "population_fraction,revenue_fraction")?;
    for p in points {
        writeln!(writer, "{},{}", p.population_fraction, p.revenue_fraction)?;
    }
    Ok(())
}

/// Writes scatter pairs as CSV: `active_users,paying_users`.
pub fn scatter_to_csv<W: Write>(pairs: &[(u64, u64)], mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "active_users,paying_users")?;
    for (active, paying) in pairs {
        writeln!(writer, "{active},{paying}")?;
    }
    Ok(())
}
