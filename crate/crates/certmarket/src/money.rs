//! Exact two-decimal fixed-point currency.
//!
//! [`Money`] is a non-negative amount stored as integer cents, used for
//! prices, willingness to pay, and budgets. [`Value`] is the signed
//! counterpart for derived quantities that may go negative: net benefit,
//! profit, surplus, welfare. Keeping both in integer cents makes
//! indifference comparisons and budget arithmetic exact; there is no
//! binary floating-point drift anywhere money is compared.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoneyError {
    #[error("money amount cannot be negative: {0}")]
    Negative(String),
    #[error("malformed money amount {0:?} (expected digits with at most 2 decimals)")]
    Malformed(String),
    #[error("money amount out of range: {0}")]
    OutOfRange(String),
    #[error("money amount must be finite, got {0}")]
    NonFinite(f64),
}

/// Non-negative currency amount with exactly two decimal places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: u64) -> Money {
        Money(cents)
    }

    pub const fn cents(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Quantizes a float to the nearest cent (ties away from zero).
    pub fn from_f64_rounded(amount: f64) -> Result<Money, MoneyError> {
        if !amount.is_finite() {
            return Err(MoneyError::NonFinite(amount));
        }
        let cents = (amount * 100.0).round();
        if cents < 0.0 {
            return Err(MoneyError::Negative(amount.to_string()));
        }
        if cents > u64::MAX as f64 {
            return Err(MoneyError::OutOfRange(amount.to_string()));
        }
        Ok(Money(cents as u64))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn signed(self) -> Value {
        Value(self.0 as i64)
    }

    /// `self - other`, floored at zero.
    pub fn saturating_sub(self, other: Money) -> Money {
        Money(self.0.saturating_sub(other.0))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for Money {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Money, MoneyError> {
        let cents = parse_cents(s)?;
        if cents < 0 {
            return Err(MoneyError::Negative(s.to_string()));
        }
        Ok(Money(cents as u64))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

/// Money difference is signed: prices may exceed valuations.
impl Sub for Money {
    type Output = Value;
    fn sub(self, rhs: Money) -> Value {
        Value(self.0 as i64 - rhs.0 as i64)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Money, D::Error> {
        deserializer.deserialize_any(MoneyVisitor)
    }
}

struct MoneyVisitor;

impl Visitor<'_> for MoneyVisitor {
    type Value = Money;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a non-negative amount as a string like \"12.34\" or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Money, E> {
        v.parse().map_err(de::Error::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Money, E> {
        Money::from_f64_rounded(v).map_err(de::Error::custom)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Money, E> {
        v.checked_mul(100)
            .map(Money)
            .ok_or_else(|| de::Error::custom(MoneyError::OutOfRange(v.to_string())))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Money, E> {
        if v < 0 {
            return Err(de::Error::custom(MoneyError::Negative(v.to_string())));
        }
        self.visit_u64(v as u64)
    }
}

/// Signed fixed-point amount in cents; the result type of money arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Value(i64);

impl Value {
    pub const ZERO: Value = Value(0);

    pub const fn from_cents(cents: i64) -> Value {
        Value(cents)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Converts to `Money` when non-negative.
    pub fn to_money(self) -> Option<Money> {
        if self.0 >= 0 {
            Some(Money(self.0 as u64))
        } else {
            None
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Value {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Value, MoneyError> {
        parse_cents(s).map(Value)
    }
}

impl Add for Value {
    type Output = Value;
    fn add(self, rhs: Value) -> Value {
        Value(self.0 + rhs.0)
    }
}

impl AddAssign for Value {
    fn add_assign(&mut self, rhs: Value) {
        self.0 += rhs.0;
    }
}

impl Sub for Value {
    type Output = Value;
    fn sub(self, rhs: Value) -> Value {
        Value(self.0 - rhs.0)
    }
}

impl Neg for Value {
    type Output = Value;
    fn neg(self) -> Value {
        Value(-self.0)
    }
}

impl Mul<i64> for Value {
    type Output = Value;
    fn mul(self, rhs: i64) -> Value {
        Value(self.0 * rhs)
    }
}

impl Sum for Value {
    fn sum<I: Iterator<Item = Value>>(iter: I) -> Value {
        iter.fold(Value::ZERO, Add::add)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Value, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a signed amount as a string like \"-12.34\" or a number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
                v.parse().map_err(de::Error::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
                if !v.is_finite() {
                    return Err(de::Error::custom(MoneyError::NonFinite(v)));
                }
                Ok(Value((v * 100.0).round() as i64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
                Ok(Value(v * 100))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
                Ok(Value(v as i64 * 100))
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// Parses "12", "12.3", "-12.34" into signed cents.
fn parse_cents(s: &str) -> Result<i64, MoneyError> {
    let malformed = || MoneyError::Malformed(s.to_string());
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (whole, frac) = match body.split_once('.') {
        Some((_, "")) => return Err(malformed()),
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if whole.is_empty() || frac.len() > 2 {
        return Err(malformed());
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let whole: i64 = whole
        .parse()
        .map_err(|_| MoneyError::OutOfRange(s.to_string()))?;
    let frac_cents = match frac.len() {
        0 => 0,
        1 => frac.parse::<i64>().unwrap() * 10,
        _ => frac.parse::<i64>().unwrap(),
    };
    let cents = whole
        .checked_mul(100)
        .and_then(|c| c.checked_add(frac_cents))
        .ok_or_else(|| MoneyError::OutOfRange(s.to_string()))?;
    Ok(if negative { -cents } else { cents })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        assert_eq!("300".parse::<Money>().unwrap(), Money::from_cents(30000));
        assert_eq!("300.5".parse::<Money>().unwrap(), Money::from_cents(30050));
        assert_eq!("300.45".parse::<Money>().unwrap(), Money::from_cents(30045));
        assert_eq!("0.01".parse::<Money>().unwrap(), Money::from_cents(1));
        assert_eq!("0".parse::<Money>().unwrap(), Money::ZERO);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", ".", "1.234", "1,00", "1.2.3", "abc", ".5", "1."] {
            assert!(s.parse::<Money>().is_err(), "should reject {s:?}");
        }
        assert_eq!(
            "-3".parse::<Money>(),
            Err(MoneyError::Negative("-3".to_string()))
        );
    }

    #[test]
    fn value_parses_negative() {
        assert_eq!("-50.25".parse::<Value>().unwrap(), Value::from_cents(-5025));
        assert_eq!("-50.25".parse::<Value>().unwrap().to_string(), "-50.25");
    }

    #[test]
    fn display_round_trips() {
        for cents in [0u64, 1, 99, 100, 12345, 14580000] {
            let m = Money::from_cents(cents);
            assert_eq!(m.to_string().parse::<Money>().unwrap(), m);
        }
    }

    #[test]
    fn subtraction_is_signed() {
        let v = Money::from_cents(10000) - Money::from_cents(15000);
        assert_eq!(v, Value::from_cents(-5000));
        assert_eq!(v.to_string(), "-50.00");
        assert_eq!(v.to_money(), None);
    }

    #[test]
    fn rounding_quantizes_to_cents() {
        assert_eq!(
            Money::from_f64_rounded(10.005).unwrap(),
            Money::from_cents(1001)
        );
        assert_eq!(
            Money::from_f64_rounded(10.004).unwrap(),
            Money::from_cents(1000)
        );
        assert!(Money::from_f64_rounded(-0.01).is_err());
        assert!(Money::from_f64_rounded(f64::NAN).is_err());
    }

    #[test]
    fn serde_accepts_strings_and_numbers() {
        let m: Money = serde_json::from_str("\"12.34\"").unwrap();
        assert_eq!(m, Money::from_cents(1234));
        let m: Money = serde_json::from_str("12.34").unwrap();
        assert_eq!(m, Money::from_cents(1234));
        let m: Money = serde_json::from_str("12").unwrap();
        assert_eq!(m, Money::from_cents(1200));
        assert!(serde_json::from_str::<Money>("-1").is_err());
        assert_eq!(
            serde_json::to_string(&Money::from_cents(1234)).unwrap(),
            "\"12.34\""
        );
    }
}
