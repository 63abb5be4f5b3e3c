//! Exact fixed-point decimals, scale 6.
//!
//! All fractional values in the rule language are scale-6 fixed point, not
//! binary floats: `0.3 * 124` must come out as exactly `37.2` and print that
//! way. A [`Decimal`] stores the value in millionths over an `i128`, which
//! leaves ample headroom for intermediate products before a checked overflow
//! is reported.

use std::fmt;

/// Number of fractional digits carried by every decimal.
pub const SCALE: u32 = 6;

const UNIT: i128 = 1_000_000;

/// A scale-6 fixed-point number (value = `micros / 10^6`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Decimal(i128);

impl Decimal {
    /// Builds a decimal from a raw count of millionths.
    pub fn from_micros(micros: i128) -> Self {
        Decimal(micros)
    }

    /// Builds a decimal from an integer value.
    pub fn from_int(value: i64) -> Self {
        Decimal(value as i128 * UNIT)
    }

    pub fn micros(self) -> i128 {
        self.0
    }

    /// True when the fractional part is zero.
    pub fn is_integral(self) -> bool {
        self.0 % UNIT == 0
    }

    /// Whole part, truncated toward zero.
    pub fn whole(self) -> i128 {
        self.0 / UNIT
    }

    pub fn checked_add(self, rhs: Decimal) -> Option<Decimal> {
        self.0.checked_add(rhs.0).map(Decimal)
    }

    pub fn checked_sub(self, rhs: Decimal) -> Option<Decimal> {
        self.0.checked_sub(rhs.0).map(Decimal)
    }

    /// Product, rounded half-to-even at scale 6.
    pub fn checked_mul(self, rhs: Decimal) -> Option<Decimal> {
        let wide = self.0.checked_mul(rhs.0)?;
        Some(Decimal(round_div(wide, UNIT)))
    }

    /// Quotient, rounded half-to-even at scale 6. `None` on division by zero
    /// or overflow.
    pub fn checked_div(self, rhs: Decimal) -> Option<Decimal> {
        if rhs.0 == 0 {
            return None;
        }
        let wide = self.0.checked_mul(UNIT)?;
        Some(Decimal(round_div(wide, rhs.0)))
    }

    /// Parses `digits.digits` with at most six fractional digits.
    pub fn parse(text: &str) -> Option<Decimal> {
        let (neg, rest) = match text.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, text),
        };
        let (whole, frac) = match rest.split_once('.') {
            Some((w, f)) => (w, f),
            None => (rest, ""),
        };
        if whole.is_empty() || frac.len() > SCALE as usize {
            return None;
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: i128 = whole.parse().ok()?;
        let mut frac_val: i128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        for _ in frac.len()..SCALE as usize {
            frac_val *= 10;
        }
        let micros = whole.checked_mul(UNIT)?.checked_add(frac_val)?;
        Some(Decimal(if neg { -micros } else { micros }))
    }
}

/// `n / d` rounded half-to-even.
fn round_div(n: i128, d: i128) -> i128 {
    let q = n / d;
    let r = n % d;
    if r == 0 {
        return q;
    }
    let twice = r.abs().checked_mul(2);
    let bump = match twice {
        Some(t) => match t.cmp(&d.abs()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => q % 2 != 0,
            std::cmp::Ordering::Less => false,
        },
        None => true,
    };
    if !bump {
        q
    } else if (n < 0) ^ (d < 0) {
        q - 1
    } else {
        q + 1
    }
}

impl fmt::Display for Decimal {
    /// Minimal representation: no trailing fractional zeros, no `.0` for
    /// integral values.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / UNIT as u128;
        let mut frac = abs % UNIT as u128;
        if frac == 0 {
            return write!(f, "{sign}{whole}");
        }
        let mut digits = SCALE as usize;
        while frac.is_multiple_of(10) {
            frac /= 10;
            digits -= 1;
        }
        write!(f, "{sign}{whole}.{frac:0width$}", width = digits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> Decimal {
        Decimal::parse(s).unwrap()
    }

    #[test]
    fn parses_and_prints_minimally() {
        assert_eq!(dec("0.3").to_string(), "0.3");
        assert_eq!(dec("37.200000").to_string(), "37.2");
        assert_eq!(dec("62.0").to_string(), "62");
        assert_eq!(dec("-0.5").to_string(), "-0.5");
        assert_eq!(dec("0.000001").to_string(), "0.000001");
        assert!(Decimal::parse("1.2345678").is_none());
        assert!(Decimal::parse(".5").is_none());
    }

    #[test]
    fn running_example_products_are_exact() {
        let k = dec("0.3").checked_mul(Decimal::from_int(124)).unwrap();
        assert_eq!(k.to_string(), "37.2");
        let gross = dec("0.3").checked_mul(Decimal::from_int(147)).unwrap();
        let pl = gross.checked_sub(k).unwrap();
        assert_eq!(pl.to_string(), "6.9");
        let w = dec("0.5").checked_mul(Decimal::from_int(124)).unwrap();
        assert_eq!(w.to_string(), "62");
        assert!(w.is_integral());
    }

    #[test]
    fn division_rounds_half_even_and_rejects_zero() {
        assert!(Decimal::from_int(1).checked_div(Decimal::from_int(0)).is_none());
        let third = Decimal::from_int(1).checked_div(Decimal::from_int(3)).unwrap();
        assert_eq!(third.to_string(), "0.333333");
        // 0.0000005 rounds to the even neighbor 0.
        let tie = dec("0.000001").checked_div(Decimal::from_int(2)).unwrap();
        assert_eq!(tie.micros(), 0);
        let tie2 = dec("0.000003").checked_div(Decimal::from_int(2)).unwrap();
        assert_eq!(tie2.micros(), 2);
    }

    #[test]
    fn negative_rounding_is_symmetric() {
        let a = dec("-0.000001").checked_div(Decimal::from_int(2)).unwrap();
        assert_eq!(a.micros(), 0);
        let b = dec("-1").checked_div(Decimal::from_int(3)).unwrap();
        assert_eq!(b.to_string(), "-0.333333");
    }
}
