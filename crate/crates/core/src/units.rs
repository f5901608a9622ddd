//! Fixed-point quantity types.
//!
//! All money, fuel volume, and per-gallon price arithmetic in this crate is
//! integer arithmetic:
//!
//! * [`Money`] — whole cents. Ledger-grade: sums over any partition of a run
//!   agree exactly.
//! * [`Volume`] — thousandths of a gallon ("mgal"). The tank balance
//!   identity (deliveries − sales − leakage = level change) holds exactly,
//!   not approximately.
//! * [`Price`] — mills per gallon ($0.001/gal), the resolution street fuel
//!   prices are actually posted at.
//!
//! A transaction amount is the one place the three meet: `price × volume`
//! lands in micro-dollars and is rounded half-up to a cent per transaction,
//! exactly as a pump totalizer does. After that rounding, every downstream
//! aggregate is exact.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

/// Money in whole cents (may be negative).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub i64);

/// Fuel volume in thousandths of a gallon (may be negative as a difference).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Volume(pub i64);

/// Per-gallon price in mills ($0.001 per gallon).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Price(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: i64) -> Money {
        Money(cents)
    }

    /// Round a real dollar amount to the nearest cent (half away from zero).
    pub fn from_dollars(d: f64) -> Money {
        Money((d * 100.0).round() as i64)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn as_dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl Volume {
    pub const ZERO: Volume = Volume(0);

    pub fn from_mgal(mgal: i64) -> Volume {
        Volume(mgal)
    }

    /// Round real gallons to the nearest thousandth.
    pub fn from_gallons(g: f64) -> Volume {
        Volume((g * 1_000.0).round() as i64)
    }

    pub fn mgal(self) -> i64 {
        self.0
    }

    pub fn as_gallons(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn min(self, other: Volume) -> Volume {
        Volume(self.0.min(other.0))
    }

    pub fn max(self, other: Volume) -> Volume {
        Volume(self.0.max(other.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Price {
    pub fn from_mills(m: i64) -> Price {
        Price(m)
    }

    /// Round a real dollars-per-gallon figure to the nearest mill.
    pub fn from_dollars(d: f64) -> Price {
        Price((d * 1_000.0).round() as i64)
    }

    pub fn mills(self) -> i64 {
        self.0
    }

    pub fn as_dollars(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    /// Signed gap `self − other` in dollars per gallon.
    pub fn gap_dollars(self, other: Price) -> f64 {
        (self.0 - other.0) as f64 / 1_000.0
    }
}

/// Charge for `volume` at `price`, rounded half-up to a whole cent — the
/// per-transaction rounding a pump display performs. mills × mgal lands in
/// micro-dollars; 10,000 micro-dollars to the cent.
pub fn transaction_cents(price: Price, volume: Volume) -> Money {
    debug_assert!(price.0 >= 0 && volume.0 >= 0);
    let micro = price.0 * volume.0;
    Money((micro + 5_000) / 10_000)
}

macro_rules! arith_impls {
    ($t:ident) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, rhs: $t) -> $t {
                $t(self.0 + rhs.0)
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, rhs: $t) -> $t {
                $t(self.0 - rhs.0)
            }
        }
        impl AddAssign for $t {
            fn add_assign(&mut self, rhs: $t) {
                self.0 += rhs.0;
            }
        }
        impl SubAssign for $t {
            fn sub_assign(&mut self, rhs: $t) {
                self.0 -= rhs.0;
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-self.0)
            }
        }
        impl Sum for $t {
            fn sum<I: Iterator<Item = $t>>(iter: I) -> $t {
                $t(iter.map(|x| x.0).sum())
            }
        }
    };
}

arith_impls!(Money);
arith_impls!(Volume);
arith_impls!(Price);

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.abs();
        write!(f, "{sign}${}.{:02}", a / 100, a % 100)
    }
}

impl fmt::Display for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.abs();
        write!(f, "{sign}{}.{:03} gal", a / 1_000, a % 1_000)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.abs();
        write!(f, "{sign}${}.{:03}", a / 1_000, a % 1_000)
    }
}
