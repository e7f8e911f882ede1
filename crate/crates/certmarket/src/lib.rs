//! Pricing models and sales analytics for freemium certificate markets.
//!
//! A certificate market sells a paid credential on top of a free course:
//! every user may audit for free, and pays for the certificate only when
//! the certificate is worth more to them than auditing plus the price.
//! This crate models that market end to end:
//!
//! - [`market`] — per-user buy/decline decisions, aggregate demand,
//!   profit-maximizing pricing, and social welfare for a single course.
//! - [`stackelberg`] — the leader-follower view of the same market,
//!   simulated price experiments, and survival-curve estimation of the
//!   willingness-to-pay distribution.
//! - [`budget`] — multi-course purchases under a budget and a course cap,
//!   with an exact solver, a brute-force oracle, and uniform-price demand.
//! - [`population`] — seeded, reproducible synthetic populations.
//! - [`analytics`] — sales-data ingestion, revenue concentration metrics
//!   (Lorenz curve, Gini coefficient, top shares), payment rates, and
//!   repeat-offering comparisons.
//!
//! All prices and utilities are exact two-decimal fixed-point values
//! ([`money::Money`] / [`money::Value`]); floating point appears only in
//! statistics (fractions, survival estimates) and report output.

pub mod analytics;
pub mod budget;
pub mod market;
pub mod money;
pub mod population;
pub mod stackelberg;

pub use money::{Money, Value};
