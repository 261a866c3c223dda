//! Fixed-point quantities.
//!
//! Balances and prices never touch floating point inside the ledger: energy
//! is counted in thousandths of a MWh and money in hundredths of a currency
//! unit. Both print and parse as plain decimals with a fixed number of
//! fractional digits (`12.345`, `35.00`).

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid fixed-point literal {literal:?}: expected exactly {digits} fractional digits")]
pub struct FixedParseError {
    pub literal: String,
    pub digits: u32,
}

/// Integer division rounding to nearest, ties to even.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    assert!(den > 0, "denominator must be positive");
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

fn format_scaled(f: &mut fmt::Formatter<'_>, raw: i64, digits: u32) -> fmt::Result {
    let scale = 10i64.pow(digits);
    let sign = if raw < 0 { "-" } else { "" };
    let abs = raw.unsigned_abs();
    let whole = abs / scale as u64;
    let frac = abs % scale as u64;
    write!(f, "{sign}{whole}.{frac:0width$}", width = digits as usize)
}

fn parse_scaled(s: &str, digits: u32) -> Result<i64, FixedParseError> {
    let err = || FixedParseError {
        literal: s.to_string(),
        digits,
    };
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (whole, frac) = body.split_once('.').ok_or_else(err)?;
    if whole.is_empty()
        || frac.len() != digits as usize
        || !whole.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || (whole.len() > 1 && whole.starts_with('0'))
    {
        return Err(err());
    }
    let whole: i64 = whole.parse().map_err(|_| err())?;
    let frac: i64 = frac.parse().map_err(|_| err())?;
    let raw = whole
        .checked_mul(10i64.pow(digits))
        .and_then(|w| w.checked_add(frac))
        .ok_or_else(err)?;
    if neg && raw == 0 {
        // "-0.000" has a canonical spelling without the sign.
        return Err(err());
    }
    Ok(if neg { -raw } else { raw })
}

macro_rules! fixed_point {
    ($(#[$meta:meta])* $name:ident, $digits:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(i64);

        impl $name {
            pub const DIGITS: u32 = $digits;
            pub const SCALE: i64 = 10i64.pow($digits);
            pub const ZERO: $name = $name(0);

            pub const fn from_raw(raw: i64) -> Self {
                $name(raw)
            }

            pub const fn raw(self) -> i64 {
                self.0
            }

            /// Rounds to the nearest representable value.
            pub fn from_f64(value: f64) -> Self {
                $name((value * Self::SCALE as f64).round() as i64)
            }

            pub fn to_f64(self) -> f64 {
                self.0 as f64 / Self::SCALE as f64
            }

            pub fn is_positive(self) -> bool {
                self.0 > 0
            }

            pub fn is_negative(self) -> bool {
                self.0 < 0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                format_scaled(f, self.0, $digits)
            }
        }

        impl FromStr for $name {
            type Err = FixedParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_scaled(s, $digits).map($name)
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: $name) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl SubAssign for $name {
            fn sub_assign(&mut self, rhs: $name) {
                self.0 -= rhs.0;
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl std::iter::Sum for $name {
            fn sum<I: Iterator<Item = $name>>(iter: I) -> $name {
                $name(iter.map(|v| v.0).sum())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_point!(
    /// Energy in MWh with three fractional digits.
    Mwh,
    3
);

fixed_point!(
    /// Currency amount (or price per MWh) with two fractional digits.
    Money,
    2
);

impl Mwh {
    /// `self × price`, rounded half-even to cents.
    pub fn cost_at(self, price: Money) -> Money {
        let num = self.raw() as i128 * price.raw() as i128;
        Money::from_raw(div_round_half_even(num, Mwh::SCALE as i128) as i64)
    }
}

impl Money {
    /// Midpoint of two prices, rounded half-even to cents.
    pub fn midpoint(self, other: Money) -> Money {
        Money::from_raw(div_round_half_even(self.raw() as i128 + other.raw() as i128, 2) as i64)
    }
}
