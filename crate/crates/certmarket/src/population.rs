//! Seeded synthetic populations for simulations and property tests.
//!
//! Generation is fully deterministic: the same spec and seed always
//! produce bit-identical populations, across platforms and releases.
//! The generator is pinned to the ChaCha stream cipher with 8 rounds,
//! seeded via its standard 64-bit expansion, and every draw maps raw
//! 64-bit words to values through the fixed algorithms below:
//!
//! * unit interval: `(word >> 11) as f64 * 2^-53`, uniform on [0, 1);
//! * point mass: the configured value (words discarded);
//! * uniform money: whole cents uniform on the inclusive range, via
//!   `lo + floor(unit * span)`;
//! * lognormal: `exp(mu + sigma * z)` with `z` from the Box–Muller
//!   transform `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, quantized to cents
//!   (half away from zero) and clamped at the configured cap;
//! * empirical: `values[word mod len]`;
//! * counts: `lo + word mod span`.
//!
//! Every money draw consumes exactly two words and every count draw
//! exactly one, so the stream layout is independent of parameter values.
//! Per user the order is: WTP draw, audit draw (fraction-of-WTP consumes
//! nothing). Multi-course users draw, in order: one shared word pair
//! (only when correlation is positive), then per course a correlation
//! coin (one word) followed by the WTP draw — which replays the shared
//! pair instead of consuming the stream when the coin falls below the
//! correlation factor — then the audit draw, then budget (two words) and
//! course limit (one word). Replaying the shared pair through each
//! course's own distribution leaves marginals untouched while making
//! correlated draws comonotone.

use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::MultiCourseUser;
use crate::market::{MarketError, Population, UserProfile};
use crate::money::Money;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("failed reading or writing population data: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed population CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("population CSV header mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },
    #[error("population CSV row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("users must all have the same course count to export")]
    MixedCourseCounts,
}

/// How to draw one money value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    /// Every draw returns `value`.
    Point { value: Money },
    /// Whole cents uniform on the inclusive range `[lo, hi]`.
    Uniform { lo: Money, hi: Money },
    /// `exp(mu + sigma * Z)` currency units, quantized to cents and
    /// clamped at `cap`.
    Lognormal { mu: f64, sigma: f64, cap: Money },
    /// Uniform over an explicit list of values.
    Empirical { values: Vec<Money> },
}

impl DistSpec {
    fn validate(&self, what: &str) -> Result<(), PopulationError> {
        let invalid = |msg: String| Err(PopulationError::InvalidSpec(msg));
        match self {
            DistSpec::Point { .. } => Ok(()),
            DistSpec::Uniform { lo, hi } => {
                if lo > hi {
                    invalid(format!("{what}: uniform lo {lo} exceeds hi {hi}"))
                } else {
                    Ok(())
                }
            }
            DistSpec::Lognormal { mu, sigma, cap: _ } => {
                if !mu.is_finite() || !sigma.is_finite() {
                    invalid(format!("{what}: lognormal parameters must be finite"))
                } else if *sigma < 0.0 {
                    invalid(format!("{what}: lognormal sigma {sigma} is negative"))
                } else {
                    Ok(())
                }
            }
            DistSpec::Empirical { values } => {
                if values.is_empty() {
                    invalid(format!("{what}: empirical distribution needs values"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Maps two raw words to a value; the pure core of every money draw.
    fn value_from_words(&self, words: [u64; 2]) -> Money {
        match self {
            DistSpec::Point { value } => *value,
            DistSpec::Uniform { lo, hi } => {
                let span = hi.cents() - lo.cents() + 1;
                let offset = ((unit_from_word(words[0]) * span as f64) as u64).min(span - 1);
                Money::from_cents(lo.cents() + offset)
            }
            DistSpec::Lognormal { mu, sigma, cap } => {
                let u1 = 1.0 - unit_from_word(words[0]);
                let u2 = unit_from_word(words[1]);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                let x = (mu + sigma * z).exp();
                if x >= cap.to_f64() {
                    *cap
                } else {
                    Money::from_f64_rounded(x).unwrap_or(*cap)
                }
            }
            DistSpec::Empirical { values } => values[(words[0] % values.len() as u64) as usize],
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Money {
        self.value_from_words([rng.next_u64(), rng.next_u64()])
    }
}

/// How to derive a user's audit utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuditSpec {
    /// Audit utility is `factor` times the user's own WTP (rounded to
    /// cents, half away from zero), guaranteeing it never exceeds WTP.
    FractionOfWtp { factor: f64 },
    /// Audit utility drawn independently of WTP.
    Dist(DistSpec),
}

impl AuditSpec {
    fn validate(&self, what: &str) -> Result<(), PopulationError> {
        match self {
            AuditSpec::FractionOfWtp { factor } => {
                if !(0.0..=1.0).contains(factor) {
                    Err(PopulationError::InvalidSpec(format!(
                        "{what}: audit fraction {factor} outside [0, 1]"
                    )))
                } else {
                    Ok(())
                }
            }
            AuditSpec::Dist(dist) => dist.validate(what),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, wtp: Money) -> Money {
        match self {
            AuditSpec::FractionOfWtp { factor } => {
                Money::from_cents((wtp.cents() as f64 * factor).round() as u64)
            }
            AuditSpec::Dist(dist) => dist.draw(rng),
        }
    }
}

/// How to draw a non-negative count (course limits).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountDist {
    Point { value: u64 },
    Uniform { lo: u64, hi: u64 },
}

impl CountDist {
    fn validate(&self, what: &str) -> Result<(), PopulationError> {
        match self {
            CountDist::Point { .. } => Ok(()),
            CountDist::Uniform { lo, hi } => {
                if lo > hi {
                    Err(PopulationError::InvalidSpec(format!(
                        "{what}: count lo {lo} exceeds hi {hi}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        let word = rng.next_u64();
        match self {
            CountDist::Point { value } => *value,
            CountDist::Uniform { lo, hi } => lo + word % (hi - lo + 1),
        }
    }
}

/// Recipe for a single-course population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub size: u64,
    pub wtp_dist: DistSpec,
    pub audit_dist: AuditSpec,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), PopulationError> {
        self.wtp_dist.validate("wtp_dist")?;
        self.audit_dist.validate("audit_dist")
    }
}

/// Per-course distributions within a multi-course population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseSpec {
    pub wtp_dist: DistSpec,
    pub audit_dist: AuditSpec,
}

/// Recipe for a multi-course population with budgets and course limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPopulationSpec {
    pub size: u64,
    pub courses: Vec<CourseSpec>,
    pub budget_dist: DistSpec,
    pub max_courses_dist: CountDist,
    /// Probability that a course's WTP draw reuses the user's shared
    /// latent draw, making it comonotone with other reusing courses.
    #[serde(default)]
    pub correlation: Option<f64>,
    pub seed: u64,
}

impl MultiPopulationSpec {
    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.courses.is_empty() {
            return Err(PopulationError::InvalidSpec(
                "multi-course spec needs at least one course".to_string(),
            ));
        }
        for (m, course) in self.courses.iter().enumerate() {
            course.wtp_dist.validate(&format!("course {m} wtp_dist"))?;
            course
                .audit_dist
                .validate(&format!("course {m} audit_dist"))?;
        }
        self.budget_dist.validate("budget_dist")?;
        self.max_courses_dist.validate("max_courses_dist")?;
        if let Some(rho) = self.correlation {
            if !(0.0..=1.0).contains(&rho) {
                return Err(PopulationError::InvalidSpec(format!(
                    "correlation {rho} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// The pinned word-to-unit-interval map shared by all seeded sampling.
pub(crate) fn unit_from_word(word: u64) -> f64 {
    (word >> 11) as f64 * 2f64.powi(-53)
}

fn user_id(index: u64) -> String {
    format!("u{index:06}")
}

/// Generates exactly `spec.size` users, deterministically from the seed.
pub fn generate_population(spec: &PopulationSpec) -> Result<Population, PopulationError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let users = (0..spec.size)
        .map(|j| {
            let wtp = spec.wtp_dist.draw(&mut rng);
            let audit = spec.audit_dist.draw(&mut rng, wtp);
            UserProfile::new(user_id(j), wtp, audit)
        })
        .collect();
    Ok(Population::new(users)?)
}

/// Generates `spec.size` multi-course users, deterministically from the
/// seed. Course limits are clamped to the number of courses.
pub fn generate_multi_population(
    spec: &MultiPopulationSpec,
) -> Result<Vec<MultiCourseUser>, PopulationError> {
    spec.validate()?;
    let m = spec.courses.len();
    let rho = spec.correlation.unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut users = Vec::with_capacity(spec.size as usize);
    for j in 0..spec.size {
        let shared: [u64; 2] = if rho > 0.0 {
            [rng.next_u64(), rng.next_u64()]
        } else {
            [0, 0]
        };
        let mut wtp = Vec::with_capacity(m);
        let mut audit = Vec::with_capacity(m);
        for course in &spec.courses {
            let value = if rho > 0.0 && unit_from_word(rng.next_u64()) < rho {
                course.wtp_dist.value_from_words(shared)
            } else {
                course.wtp_dist.draw(&mut rng)
            };
            wtp.push(value);
            audit.push(course.audit_dist.draw(&mut rng, value));
        }
        let budget = spec.budget_dist.draw(&mut rng);
        let max_courses = (spec.max_courses_dist.draw(&mut rng) as usize).min(m);
        let user = MultiCourseUser::new(user_id(j), wtp, audit, budget, max_courses)
            .expect("generated users satisfy construction invariants");
        users.push(user);
    }
    Ok(users)
}

const SINGLE_HEADER: &str = "id,wtp,audit";

/// Writes a population as CSV with header `id,wtp,audit`.
pub fn write_population_csv<W: Write>(
    population: &Population,
    writer: W,
) -> Result<(), PopulationError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["id", "wtp", "audit"])?;
    for user in population.users() {
        out.write_record([
            user.id.as_str(),
            &user.wtp_verified.to_string(),
            &user.utility_audit.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a population from CSV with the exact header `id,wtp,audit`.
/// Row numbers in errors count the header as row 1.
pub fn read_population_csv<R: Read>(reader: R) -> Result<Population, PopulationError> {
    let mut input = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = input.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != SINGLE_HEADER {
        return Err(PopulationError::SchemaMismatch {
            expected: SINGLE_HEADER.to_string(),
            found: header,
        });
    }
    let mut users = Vec::new();
    for (i, record) in input.records().enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != 3 {
            return Err(PopulationError::InvalidRow {
                row,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let parse = |field: usize, name: &str| -> Result<Money, PopulationError> {
            record[field]
                .parse()
                .map_err(|e| PopulationError::InvalidRow {
                    row,
                    message: format!("{name}: {e}"),
                })
        };
        users.push(UserProfile::new(
            record[0].to_string(),
            parse(1, "wtp")?,
            parse(2, "audit")?,
        ));
    }
    Ok(Population::new(users)?)
}

/// Writes multi-course users as CSV: `id,wtp_1..wtp_M,audit_1..audit_M,
/// budget,max_courses`. All users must share the same course count.
pub fn write_multi_population_csv<W: Write>(
    users: &[MultiCourseUser],
    writer: W,
) -> Result<(), PopulationError> {
    let m = users.first().map_or(0, |u| u.course_count());
    if users.iter().any(|u| u.course_count() != m) {
        return Err(PopulationError::MixedCourseCounts);
    }
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=m).map(|i| format!("wtp_{i}")));
    header.extend((1..=m).map(|i| format!("audit_{i}")));
    header.push("budget".to_string());
    header.push("max_courses".to_string());
    out.write_record(&header)?;
    for user in users {
        let mut row = vec![user.id().to_string()];
        row.extend(user.wtp().iter().map(Money::to_string));
        row.extend(user.audit().iter().map(Money::to_string));
        row.push(user.budget().to_string());
        row.push(user.max_courses().to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn money(units: u64) -> Money {
        Money::from_cents(units * 100)
    }

    fn uniform_spec(size: u64, seed: u64) -> PopulationSpec {
        PopulationSpec {
            size,
            wtp_dist: DistSpec::Uniform {
                lo: money(0),
                hi: money(100),
            },
            audit_dist: AuditSpec::FractionOfWtp { factor: 0.25 },
            seed,
        }
    }

    #[test]
    fn point_mass_yields_identical_users() {
        let spec = PopulationSpec {
            size: 5,
            wtp_dist: DistSpec::Point { value: money(300) },
            audit_dist: AuditSpec::Dist(DistSpec::Point { value: money(0) }),
            seed: 7,
        };
        let population = generate_population(&spec).unwrap();
        assert_eq!(population.len(), 5);
        for user in population.users() {
            assert_eq!(user.wtp_verified, money(300));
            assert_eq!(user.utility_audit, money(0));
        }
    }

    #[test]
    fn same_seed_reproduces_identical_population() {
        let spec = uniform_spec(200, 42);
        assert_eq!(
            generate_population(&spec).unwrap(),
            generate_population(&spec).unwrap()
        );
        let mut other = spec.clone();
        other.seed = 43;
        assert_ne!(
            generate_population(&spec).unwrap(),
            generate_population(&other).unwrap()
        );
    }

    #[test]
    fn uniform_mean_approaches_midpoint() {
        let spec = PopulationSpec {
            size: 10_000,
            wtp_dist: DistSpec::Uniform {
                lo: money(0),
                hi: money(100),
            },
            audit_dist: AuditSpec::Dist(DistSpec::Point { value: money(0) }),
            seed: 1,
        };
        let population = generate_population(&spec).unwrap();
        let total: u64 = population
            .users()
            .iter()
            .map(|u| u.wtp_verified.cents())
            .sum();
        let mean_units = total as f64 / population.len() as f64 / 100.0;
        assert!((mean_units - 50.0).abs() < 2.0, "mean was {mean_units}");
    }

    #[test]
    fn uniform_draws_stay_in_range() {
        let spec = uniform_spec(2_000, 9);
        let population = generate_population(&spec).unwrap();
        for user in population.users() {
            assert!(user.wtp_verified <= money(100));
            assert!(user.utility_audit <= user.wtp_verified);
        }
    }

    #[test]
    fn lognormal_respects_cap() {
        let spec = PopulationSpec {
            size: 5_000,
            wtp_dist: DistSpec::Lognormal {
                mu: 5.0,
                sigma: 1.8,
                cap: money(1_000),
            },
            audit_dist: AuditSpec::FractionOfWtp { factor: 0.0 },
            seed: 11,
        };
        let population = generate_population(&spec).unwrap();
        assert!(population
            .users()
            .iter()
            .all(|u| u.wtp_verified <= money(1_000)));
        // The cap must actually bind somewhere for a heavy tail.
        assert!(population
            .users()
            .iter()
            .any(|u| u.wtp_verified == money(1_000)));
    }

    #[test]
    fn empirical_draws_only_listed_values() {
        let values = vec![money(10), money(20), money(40)];
        let spec = PopulationSpec {
            size: 500,
            wtp_dist: DistSpec::Empirical {
                values: values.clone(),
            },
            audit_dist: AuditSpec::FractionOfWtp { factor: 0.0 },
            seed: 3,
        };
        let population = generate_population(&spec).unwrap();
        assert!(population
            .users()
            .iter()
            .all(|u| values.contains(&u.wtp_verified)));
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = uniform_spec(10, 0);
        spec.wtp_dist = DistSpec::Uniform {
            lo: money(5),
            hi: money(1),
        };
        assert!(matches!(
            generate_population(&spec),
            Err(PopulationError::InvalidSpec(_))
        ));
        let mut spec = uniform_spec(10, 0);
        spec.audit_dist = AuditSpec::FractionOfWtp { factor: 1.5 };
        assert!(matches!(
            generate_population(&spec),
            Err(PopulationError::InvalidSpec(_))
        ));
        let mut spec = uniform_spec(10, 0);
        spec.wtp_dist = DistSpec::Empirical { values: vec![] };
        assert!(matches!(
            generate_population(&spec),
            Err(PopulationError::InvalidSpec(_))
        ));
    }

    fn multi_spec(seed: u64, correlation: Option<f64>) -> MultiPopulationSpec {
        let course = |hi: u64| CourseSpec {
            wtp_dist: DistSpec::Uniform {
                lo: money(0),
                hi: money(hi),
            },
            audit_dist: AuditSpec::FractionOfWtp { factor: 0.2 },
        };
        MultiPopulationSpec {
            size: 100,
            courses: vec![course(100), course(200), course(50)],
            budget_dist: DistSpec::Uniform {
                lo: money(10),
                hi: money(300),
            },
            max_courses_dist: CountDist::Uniform { lo: 0, hi: 5 },
            correlation,
            seed,
        }
    }

    #[test]
    fn multi_population_is_deterministic_and_clamped() {
        let spec = multi_spec(5, Some(0.5));
        let a = generate_multi_population(&spec).unwrap();
        let b = generate_multi_population(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|u| u.max_courses() <= 3));
        assert!(a.iter().all(|u| u.course_count() == 3));
    }

    #[test]
    fn zero_course_limit_point_mass() {
        let mut spec = multi_spec(5, None);
        spec.max_courses_dist = CountDist::Point { value: 0 };
        let users = generate_multi_population(&spec).unwrap();
        assert!(users.iter().all(|u| u.max_courses() == 0));
    }

    #[test]
    fn full_correlation_makes_courses_comonotone() {
        let mut spec = multi_spec(5, Some(1.0));
        // Same distribution per course so replayed draws are equal.
        let course = CourseSpec {
            wtp_dist: DistSpec::Uniform {
                lo: money(0),
                hi: money(100),
            },
            audit_dist: AuditSpec::FractionOfWtp { factor: 0.0 },
        };
        spec.courses = vec![course.clone(), course.clone(), course];
        let users = generate_multi_population(&spec).unwrap();
        for user in &users {
            assert_eq!(user.wtp()[0], user.wtp()[1]);
            assert_eq!(user.wtp()[1], user.wtp()[2]);
        }
    }

    #[test]
    fn single_course_multi_matches_population_distributions() {
        let spec = MultiPopulationSpec {
            size: 50,
            courses: vec![CourseSpec {
                wtp_dist: DistSpec::Point { value: money(300) },
                audit_dist: AuditSpec::Dist(DistSpec::Point { value: money(40) }),
            }],
            budget_dist: DistSpec::Point { value: money(500) },
            max_courses_dist: CountDist::Point { value: 1 },
            correlation: None,
            seed: 8,
        };
        let users = generate_multi_population(&spec).unwrap();
        assert!(users
            .iter()
            .all(|u| u.wtp() == [money(300)] && u.audit() == [money(40)]));
    }

    #[test]
    fn csv_round_trip() {
        let spec = uniform_spec(25, 99);
        let population = generate_population(&spec).unwrap();
        let mut buf = Vec::new();
        write_population_csv(&population, &mut buf).unwrap();
        let loaded = read_population_csv(buf.as_slice()).unwrap();
        assert_eq!(loaded, population);
    }

    #[test]
    fn csv_rejects_wrong_header_and_bad_rows() {
        let bad_header = "id,value,audit\nu0,10,0\n";
        assert!(matches!(
            read_population_csv(bad_header.as_bytes()),
            Err(PopulationError::SchemaMismatch { .. })
        ));
        let bad_row = "id,wtp,audit\nu0,ten,0\n";
        match read_population_csv(bad_row.as_bytes()) {
            Err(PopulationError::InvalidRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected InvalidRow, got {other:?}"),
        }
    }

    #[test]
    fn multi_csv_has_flattened_columns() {
        let users = generate_multi_population(&multi_spec(2, None)).unwrap();
        let mut buf = Vec::new();
        write_multi_population_csv(&users, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "id,wtp_1,wtp_2,wtp_3,audit_1,audit_2,audit_3,budget,max_courses"
        );
        assert_eq!(text.lines().count(), 101);
    }
}
