//! Decimal fixed-point encoding: a real `r` at scale `s` becomes the integer
//! `round(r * 10^s)`, and decodes back as `t * 10^-s`.
//!
//! Values carry their scale explicitly. Mixing scales requires an explicit
//! [`ScaledInt::rescale_up`] or [`ScaledInt::round_to_scale`].

use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Tie-breaking rule used when a value falls exactly halfway between two
/// representable mantissas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingRule {
    /// `-0.5 -> -1`, `0.5 -> 1`. Used for encoding inputs.
    HalfAwayFromZero,
    /// `floor(x + 1/2)`: `-0.5 -> 0`, `0.5 -> 1`. Commutes with integer
    /// translation, which the masked θ step depends on.
    HalfUp,
}

/// `10^k` as a big integer.
pub fn pow10(k: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u32), k as usize)
}

/// Rounds an exact rational to an integer under `rule`.
pub fn round_rational(r: &BigRational, rule: RoundingRule) -> BigInt {
    let two = BigInt::from(2u32);
    match rule {
        RoundingRule::HalfUp => (r.numer() * &two + r.denom()).div_floor(&(r.denom() * &two)),
        RoundingRule::HalfAwayFromZero => {
            let abs = r.abs();
            let rounded = (abs.numer() * &two + abs.denom()).div_floor(&(abs.denom() * &two));
            if r.is_negative() {
                -rounded
            } else {
                rounded
            }
        }
    }
}

/// Parses a decimal literal (`-12.5`, `3`, `1e-3`, `.25`) exactly, without
/// going through binary floating point.
pub fn parse_decimal(text: &str) -> Result<BigRational> {
    let invalid = || Error::InvalidInput(format!("not a decimal number: {text:?}"));
    let s = text.trim();
    let (mantissa_part, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let exp: i64 = s[i + 1..].parse().map_err(|_| invalid())?;
            (&s[..i], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa_part.as_bytes().first() {
        Some(b'-') => (true, &mantissa_part[1..]),
        Some(b'+') => (false, &mantissa_part[1..]),
        _ => (false, mantissa_part),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(invalid());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(invalid());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer: BigInt = all_digits.parse().map_err(|_| invalid())?;
    if negative {
        numer = -numer;
    }
    let exp10 = exponent - frac_part.len() as i64;
    if exp10.unsigned_abs() > 10_000 {
        return Err(invalid());
    }
    let value = if exp10 >= 0 {
        BigRational::from_integer(numer * pow10(exp10 as u32))
    } else {
        BigRational::new(numer, pow10((-exp10) as u32))
    };
    Ok(value)
}

/// Exact rational value of a finite `f64`.
pub fn rational_from_f64(r: f64) -> Result<BigRational> {
    BigRational::from_float(r).ok_or_else(|| Error::InvalidInput(format!("non-finite value {r}")))
}

/// An arbitrary-precision mantissa with decimal scale: `mantissa * 10^-scale`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ScaledInt {
    mantissa: BigInt,
    scale: u32,
}

impl fmt::Debug for ScaledInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScaledInt({}e-{})", self.mantissa, self.scale)
    }
}

impl fmt::Display for ScaledInt {
    /// Exact decimal rendering with `scale` fractional digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.mantissa.magnitude().to_str_radix(10);
        let sign = if self.mantissa.is_negative() { "-" } else { "" };
        let scale = self.scale as usize;
        if scale == 0 {
            return write!(f, "{sign}{digits}");
        }
        let padded = format!("{digits:0>width$}", width = scale + 1);
        let (int_part, frac_part) = padded.split_at(padded.len() - scale);
        write!(f, "{sign}{int_part}.{frac_part}")
    }
}

impl ScaledInt {
    pub fn new(mantissa: BigInt, scale: u32) -> Self {
        Self { mantissa, scale }
    }

    pub fn zero(scale: u32) -> Self {
        Self::new(BigInt::zero(), scale)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn into_mantissa(self) -> BigInt {
        self.mantissa
    }

    /// Encodes a finite real at scale `s`, rounding half away from zero.
    pub fn encode(r: f64, s: u32) -> Result<Self> {
        let exact = rational_from_f64(r)?;
        Ok(Self::encode_rational(&exact, s))
    }

    /// Encodes an exact rational at scale `s`, rounding half away from zero.
    pub fn encode_rational(r: &BigRational, s: u32) -> Self {
        Self::encode_rational_with(r, s, RoundingRule::HalfAwayFromZero)
    }

    pub fn encode_rational_with(r: &BigRational, s: u32, rule: RoundingRule) -> Self {
        let scaled = r * BigRational::from_integer(pow10(s));
        Self::new(round_rational(&scaled, rule), s)
    }

    /// Nearest `f64` to the represented value.
    pub fn decode(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }

    /// The exact represented value.
    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.mantissa.clone(), pow10(self.scale))
    }

    /// Moves to a finer scale exactly.
    pub fn rescale_up(&self, target: u32) -> Result<Self> {
        if target < self.scale {
            return Err(Error::LossyRescaleForbidden {
                current: self.scale,
                target,
            });
        }
        Ok(Self::new(&self.mantissa * pow10(target - self.scale), target))
    }

    /// Moves to a coarser scale, rounding half away from zero.
    pub fn round_to_scale(&self, target: u32) -> Result<Self> {
        self.round_to_scale_with(target, RoundingRule::HalfAwayFromZero)
    }

    pub fn round_to_scale_with(&self, target: u32, rule: RoundingRule) -> Result<Self> {
        if target > self.scale {
            return Err(Error::RescaleUpRequired {
                current: self.scale,
                target,
            });
        }
        let quotient = BigRational::new(self.mantissa.clone(), pow10(self.scale - target));
        Ok(Self::new(round_rational(&quotient, rule), target))
    }

    /// Exact product; the result scale is the sum of the operand scales.
    pub fn mul(&self, other: &ScaledInt) -> ScaledInt {
        ScaledInt::new(&self.mantissa * &other.mantissa, self.scale + other.scale)
    }

    /// Sum of two values at the same scale.
    pub fn checked_add(&self, other: &ScaledInt) -> Result<ScaledInt> {
        if self.scale != other.scale {
            return Err(Error::ScaleMismatch {
                expected: self.scale,
                found: other.scale,
            });
        }
        Ok(ScaledInt::new(&self.mantissa + &other.mantissa, self.scale))
    }

    pub fn sign(&self) -> Sign {
        self.mantissa.sign()
    }
}

/// Scale assignment for the gradient computation: X at `s1`, θ at `s2`,
/// Y at `s1 + s2`, so that `XᵀXθ - XᵀY` lands uniformly at `2*s1 + s2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalePlan {
    s1: u32,
    s2: u32,
}

impl ScalePlan {
    pub fn new(s1: u32, s2: u32) -> Self {
        Self { s1, s2 }
    }

    pub fn s1(&self) -> u32 {
        self.s1
    }

    pub fn s2(&self) -> u32 {
        self.s2
    }

    pub fn s_y(&self) -> u32 {
        self.s1 + self.s2
    }

    /// Scale of `XᵀX`.
    pub fn s_gram(&self) -> u32 {
        2 * self.s1
    }

    pub fn s_gradient(&self) -> u32 {
        2 * self.s1 + self.s2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn si(m: i64, s: u32) -> ScaledInt {
        ScaledInt::new(BigInt::from(m), s)
    }

    #[test]
    fn encode_examples() {
        assert_eq!(ScaledInt::encode(1.23456, 2).unwrap(), si(123, 2));
        for s in [0, 3, 9] {
            assert_eq!(ScaledInt::encode(0.0, s).unwrap(), si(0, s));
        }
        // -0.005 is slightly below -0.005 in binary; the exact decimal ties away from zero.
        assert_eq!(ScaledInt::encode_rational(&parse_decimal("-0.005").unwrap(), 2), si(-1, 2));
        assert_eq!(ScaledInt::encode(-0.005, 2).unwrap(), si(-1, 2));
        assert!(matches!(ScaledInt::encode(f64::NAN, 2), Err(Error::InvalidInput(_))));
        assert!(matches!(ScaledInt::encode(f64::INFINITY, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(si(125, 2).decode(), 1.25);
        assert_eq!(si(0, 9).decode(), 0.0);
    }

    #[test]
    fn encode_decode_error_bound_s6() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let r: f64 = rng.gen_range(-100.0..100.0);
            let back = ScaledInt::encode(r, 6).unwrap().decode();
            worst = worst.max((back - r).abs());
        }
        assert!(worst < 5e-7, "worst {worst}");
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(si(314, 2).rescale_up(5).unwrap(), si(314000, 5));
        assert_eq!(si(314, 2).rescale_up(2).unwrap(), si(314, 2));
        assert!(matches!(
            si(314, 2).rescale_up(1),
            Err(Error::LossyRescaleForbidden { current: 2, target: 1 })
        ));
    }

    #[test]
    fn round_to_scale_examples() {
        assert_eq!(si(314159, 5).round_to_scale(2).unwrap(), si(314, 2));
        assert_eq!(si(-15, 1).round_to_scale(0).unwrap(), si(-2, 0));
        assert_eq!(si(-15, 1).round_to_scale_with(0, RoundingRule::HalfUp).unwrap(), si(-1, 0));
        assert_eq!(si(15, 1).round_to_scale_with(0, RoundingRule::HalfUp).unwrap(), si(2, 0));
        assert!(matches!(si(1, 1).round_to_scale(3), Err(Error::RescaleUpRequired { .. })));
    }

    #[test]
    fn rescale_up_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r: f64 = rng.gen_range(-1e6..1e6);
            let t = ScaledInt::encode(r, 3).unwrap();
            let up = t.rescale_up(7).unwrap();
            assert_eq!(up.to_rational(), t.to_rational());
            assert_eq!(up.decode(), t.decode());
        }
    }

    #[test]
    fn display_is_exact_decimal() {
        assert_eq!(si(314, 2).to_string(), "3.14");
        assert_eq!(si(-5, 3).to_string(), "-0.005");
        assert_eq!(si(0, 2).to_string(), "0.00");
        assert_eq!(si(42, 0).to_string(), "42");
    }

    #[test]
    fn parse_decimal_forms() {
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        assert_eq!(parse_decimal("0.5").unwrap(), half);
        assert_eq!(parse_decimal(".5").unwrap(), half);
        assert_eq!(parse_decimal("5e-1").unwrap(), half);
        assert_eq!(parse_decimal("-12").unwrap(), BigRational::from_integer(BigInt::from(-12)));
        assert_eq!(parse_decimal("1.5E2").unwrap(), BigRational::from_integer(BigInt::from(150)));
        for bad in ["", "-", ".", "1.2.3", "abc", "1e", "0x10", "1e99999"] {
            assert!(parse_decimal(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scale_plan() {
        let p = ScalePlan::new(3, 5);
        assert_eq!(p.s_y(), 8);
        assert_eq!(p.s_gradient(), 11);
        assert_eq!(p.s_gram(), 6);
    }

    proptest! {
        #[test]
        fn encode_error_bound(r in -1e6f64..1e6, s in 0u32..9) {
            let exact = rational_from_f64(r).unwrap();
            let t = ScaledInt::encode(r, s).unwrap();
            let err = (t.to_rational() - exact).abs();
            let bound = BigRational::new(BigInt::from(1), pow10(s) * 2);
            prop_assert!(err <= bound);
        }

        #[test]
        fn products_add_scales(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000,
                               sa in 0u32..8, sb in 0u32..8) {
            let x = si(a, sa);
            let y = si(b, sb);
            prop_assert_eq!(x.mul(&y).to_rational(), x.to_rational() * y.to_rational());
        }

        // Half-up rounding commutes with shifts by whole target quanta.
        #[test]
        fn half_up_commutes_with_integer_shift(t in -10_000_000i64..10_000_000, k in -100_000i64..100_000,
                                              ds in 1u32..5) {
            let q = 10i64.pow(ds);
            let a = si(t, 7).round_to_scale_with(7 - ds, RoundingRule::HalfUp).unwrap();
            let b = si(t + k * q, 7).round_to_scale_with(7 - ds, RoundingRule::HalfUp).unwrap();
            prop_assert_eq!(b.mantissa(), &(a.mantissa() + BigInt::from(k)));
        }

        // Half-away-from-zero commutes unless the shift carries an exact tie across zero.
        #[test]
        fn half_away_commutes_without_sign_crossing_ties(t in -10_000_000i64..10_000_000,
                                                         k in -100_000i64..100_000, ds in 1u32..5) {
            let q = 10i64.pow(ds);
            let shifted = t + k * q;
            let is_tie = (t.rem_euclid(q)) * 2 == q;
            prop_assume!(!(is_tie && (t < 0) != (shifted < 0)));
            let a = si(t, 7).round_to_scale(7 - ds).unwrap();
            let b = si(shifted, 7).round_to_scale(7 - ds).unwrap();
            prop_assert_eq!(b.mantissa(), &(a.mantissa() + BigInt::from(k)));
        }
    }

    #[test]
    fn half_away_tie_crossing_zero_breaks_commutation() {
        // -0.5 -> -1 but (-0.5 + 1) = 0.5 -> 1, not 0.
        let a = si(-5, 1).round_to_scale(0).unwrap();
        let b = si(5, 1).round_to_scale(0).unwrap();
        assert_ne!(b.mantissa(), &(a.mantissa() + BigInt::from(1)));
        let a = si(-5, 1).round_to_scale_with(0, RoundingRule::HalfUp).unwrap();
        let b = si(5, 1).round_to_scale_with(0, RoundingRule::HalfUp).unwrap();
        assert_eq!(b.mantissa(), &(a.mantissa() + BigInt::from(1)));
    }
}
