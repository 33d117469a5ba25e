use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::fixedpoint::{parse_decimal, round_rational, RoundingRule, ScaledInt};

/// Exact rational in lowest terms with a positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(BigRational);

impl ExactRational {
    pub fn new(numer: BigInt, denom: BigInt) -> Result<Self> {
        if denom.is_zero() {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        Ok(Self(BigRational::new(numer, denom)))
    }

    pub fn from_integer(v: BigInt) -> Self {
        Self(BigRational::from_integer(v))
    }

    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn parse_decimal(text: &str) -> Result<Self> {
        parse_decimal(text).map(Self)
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Self(self.0.abs())
    }

    /// Rounds to the nearest integer, ties toward positive infinity.
    pub fn round_half_up(&self) -> BigInt {
        round_rational(&self.0, RoundingRule::HalfUp)
    }

    /// Smallest integer not below the value.
    pub fn ceil(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    /// The value scaled by `10^s`, rounded up to an integer. Used for
    /// bounding mantissas of values whose magnitude is at most `self`.
    pub fn ceil_scaled(&self, s: u32) -> BigInt {
        let scaled = &self.0 * BigRational::from_integer(crate::fixedpoint::pow10(s));
        scaled.ceil().to_integer()
    }

    /// Exact decimal form when the denominator has only factors 2 and 5.
    pub fn to_scaled_int(&self) -> Option<ScaledInt> {
        let mut rest = self.denom().clone();
        let mut twos = 0u32;
        let mut fives = 0u32;
        while (&rest % 2u32).is_zero() {
            rest /= 2u32;
            twos += 1;
        }
        while (&rest % 5u32).is_zero() {
            rest /= 5u32;
            fives += 1;
        }
        if !rest.is_one() {
            return None;
        }
        let s = twos.max(fives);
        let scaled = &self.0 * BigRational::from_integer(crate::fixedpoint::pow10(s));
        Some(ScaledInt::new(scaled.to_integer(), s))
    }
}

impl From<BigRational> for ExactRational {
    fn from(r: BigRational) -> Self {
        Self(r)
    }
}

impl From<&ScaledInt> for ExactRational {
    fn from(v: &ScaledInt) -> Self {
        Self(v.to_rational())
    }
}

impl fmt::Debug for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&ExactRational> for &ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: &ExactRational) -> ExactRational {
                ExactRational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: ExactRational) -> ExactRational {
                ExactRational(self.0.$method(rhs.0))
            }
        }
        impl $trait<&BigInt> for &ExactRational {
            type Output = ExactRational;
            fn $method(self, rhs: &BigInt) -> ExactRational {
                ExactRational((&self.0).$method(BigRational::from_integer(rhs.clone())))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for ExactRational {
    type Output = ExactRational;
    fn neg(self) -> ExactRational {
        ExactRational(-self.0)
    }
}

impl One for ExactRational {
    fn one() -> Self {
        Self(BigRational::one())
    }
}
