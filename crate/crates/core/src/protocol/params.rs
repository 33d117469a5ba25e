//! Negotiated session parameters and the capacity plan derived from them.

use num_bigint::BigInt;
use num_traits::{One, Signed};
use sha2::{Digest, Sha256};

use crate::enclinalg::PlainVector;
use crate::error::{Error, Result};
use crate::fixedpoint::{pow10, ScalePlan, ScaledInt};
use crate::protocol::ExactRational;
use crate::transport::codec;

/// Default statistical hiding parameter, in bits.
pub const DEFAULT_KAPPA: u32 = 40;

/// Declared public magnitude bounds on the data and on θ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bounds {
    pub x: ExactRational,
    pub y: ExactRational,
    pub theta: ExactRational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Theta0 {
    Zero,
    Values(Vec<ExactRational>),
}

/// A party's local settings before negotiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyConfig {
    pub alpha: ExactRational,
    pub iterations: u32,
    pub scale_plan: ScalePlan,
    pub kappa: u32,
    pub keybits: u32,
    pub theta0: Theta0,
    pub bounds: Bounds,
}

/// What one party puts on the wire during negotiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamsProposal {
    pub alpha: ExactRational,
    pub iterations: u32,
    pub s1: u32,
    pub s2: u32,
    pub kappa: u32,
    pub keybits: u32,
    pub n: u32,
    pub local_m: u32,
    pub bound_x: ScaledInt,
    pub bound_y: ScaledInt,
    pub bound_theta: ScaledInt,
    pub theta0: Vec<ScaledInt>,
}

impl PartyConfig {
    pub fn proposal(&self, n: usize, local_m: usize) -> Result<ParamsProposal> {
        let s2 = self.scale_plan.s2();
        let theta0 = match &self.theta0 {
            Theta0::Zero => vec![ScaledInt::zero(s2); n],
            Theta0::Values(values) => {
                if values.len() != n {
                    return Err(Error::InvalidParameter(format!(
                        "theta0 has {} entries, data has {n} features",
                        values.len()
                    )));
                }
                values
                    .iter()
                    .map(|v| ScaledInt::encode_rational(v.as_ratio(), s2))
                    .collect()
            }
        };
        let decimal = |what: &str, v: &ExactRational| {
            v.to_scaled_int()
                .ok_or_else(|| Error::InvalidParameter(format!("{what} bound {v} is not a finite decimal")))
        };
        Ok(ParamsProposal {
            alpha: self.alpha.clone(),
            iterations: self.iterations,
            s1: self.scale_plan.s1(),
            s2,
            kappa: self.kappa,
            keybits: self.keybits,
            n: u32::try_from(n).map_err(|_| Error::InvalidParameter("too many features".into()))?,
            local_m: u32::try_from(local_m).map_err(|_| Error::InvalidParameter("too many rows".into()))?,
            bound_x: decimal("x", &self.bounds.x)?,
            bound_y: decimal("y", &self.bounds.y)?,
            bound_theta: decimal("theta", &self.bounds.theta)?,
            theta0,
        })
    }
}

/// Parameters both parties agree on after the setup exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionParams {
    pub alpha: ExactRational,
    pub iterations: u32,
    pub theta0: PlainVector,
    pub scale_plan: ScalePlan,
    pub kappa: u32,
    pub keybits: u32,
    pub m1: u32,
    pub m2: u32,
    pub n: u32,
    pub bounds: Bounds,
}

impl SessionParams {
    /// Combines Bob's and Alice's proposals. Every field except the local
    /// instance count must agree.
    pub fn negotiate(bob: &ParamsProposal, alice: &ParamsProposal) -> Result<Self> {
        let mut diffs = Vec::new();
        macro_rules! same {
            ($field:ident) => {
                if bob.$field != alice.$field {
                    diffs.push(stringify!($field));
                }
            };
        }
        same!(alpha);
        same!(iterations);
        same!(s1);
        same!(s2);
        same!(kappa);
        same!(keybits);
        same!(n);
        same!(bound_x);
        same!(bound_y);
        same!(bound_theta);
        same!(theta0);
        if !diffs.is_empty() {
            return Err(Error::NegotiationFailure(format!("parties disagree on {}", diffs.join(", "))));
        }
        let s2 = bob.s2;
        if bob.theta0.iter().any(|t| t.scale() != s2) {
            return Err(Error::NegotiationFailure("theta0 not at scale s2".into()));
        }
        let theta0 = PlainVector::new(s2, bob.theta0.iter().map(|t| t.mantissa().clone()).collect())
            .map_err(|_| Error::NegotiationFailure("theta0 is empty".into()))?;
        let params = SessionParams {
            alpha: bob.alpha.clone(),
            iterations: bob.iterations,
            theta0,
            scale_plan: ScalePlan::new(bob.s1, bob.s2),
            kappa: bob.kappa,
            keybits: bob.keybits,
            m1: bob.local_m,
            m2: alice.local_m,
            n: bob.n,
            bounds: Bounds {
                x: ExactRational::from(&bob.bound_x),
                y: ExactRational::from(&bob.bound_y),
                theta: ExactRational::from(&bob.bound_theta),
            },
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !self.alpha.is_positive() || self.alpha >= ExactRational::one() {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.n == 0 || self.theta0.dim() != self.n as usize {
            return bad(format!("feature count {} and theta0 dimension {} disagree", self.n, self.theta0.dim()));
        }
        if self.m1 == 0 || self.m2 == 0 {
            return bad("both parties need at least one instance".into());
        }
        if self.keybits < crate::paillier::MIN_KEYBITS {
            return bad(format!("keybits {} below minimum", self.keybits));
        }
        for (name, b) in [("x", &self.bounds.x), ("y", &self.bounds.y), ("theta", &self.bounds.theta)] {
            if !b.is_positive() {
                return bad(format!("bound on {name} must be positive"));
            }
        }
        let tm = self.capacity().theta_mantissa;
        if self.theta0.entries().iter().any(|t| t.abs() > tm) {
            return bad("theta0 exceeds the declared theta bound".into());
        }
        Ok(())
    }

    pub fn m(&self) -> u64 {
        u64::from(self.m1) + u64::from(self.m2)
    }

    /// `α / (m · 10^(2 s1))`: converts a gradient mantissa (scale `2s1+s2`)
    /// into a θ-step mantissa (scale `s2`).
    pub fn step_factor(&self) -> ExactRational {
        let denom = BigInt::from(self.m()) * pow10(self.scale_plan.s_gram());
        &self.alpha * &ExactRational::new(BigInt::one(), denom).expect("nonzero denominator")
    }

    /// Common denominator of every masked θ value: `den(α) · m · 10^(2 s1)`.
    pub fn common_denominator(&self) -> BigInt {
        self.alpha.denom() * BigInt::from(self.m()) * pow10(self.scale_plan.s_gram())
    }

    pub fn capacity(&self) -> CapacityPlan {
        CapacityPlan::new(self)
    }

    /// SHA-256 over the canonical encoding of every negotiated field.
    pub fn digest(&self) -> [u8; 32] {
        let mut out = Vec::new();
        codec::write_session_params(&mut out, self);
        Sha256::digest(&out).into()
    }
}

/// Public magnitude bounds and pad ranges derived from [`SessionParams`],
/// all in mantissa units. Every masked value stays strictly inside
/// `(-N/2, N/2)` when [`CapacityPlan::check`] passes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityPlan {
    pub keybits: u32,
    pub kappa: u32,
    /// Bound on encoded X entries (scale s1).
    pub x_mantissa: BigInt,
    /// Bound on encoded Y entries (scale s1+s2).
    pub y_mantissa: BigInt,
    /// Bound on θ entries (scale s2).
    pub theta_mantissa: BigInt,
    /// Bound on entries of XᵀX and of either party's share of it.
    pub gram_bound: BigInt,
    /// `B_G = n m B_X² B_θ + n m B_X B_Y` at scale 2s1+s2.
    pub gradient_bound: BigInt,
    /// Bob's θ pads are uniform in `[0, theta_pad_range)`.
    pub theta_pad_range: BigInt,
    /// Bound on `XᵀX · R` and `X₂ᵀX₂ · R` for a θ pad `R`.
    pub cross_bound: BigInt,
    /// Alice's gradient pads are uniform in `[0, grad_pad_range)`.
    pub grad_pad_range: BigInt,
    /// Sub-protocol pads (both parties) are uniform in `[0, sub_pad_range)`.
    pub sub_pad_range: BigInt,
    /// Largest magnitude Bob may decrypt from a masked gradient.
    pub masked_grad_bound: BigInt,
    /// Largest magnitude Alice may decrypt in the sub-protocol.
    pub sub_enc_bound: BigInt,
    /// Largest magnitude of the sub-protocol's plaintext reply.
    pub sub_plain_bound: BigInt,
    /// Byte width of plaintext-domain integers on the wire.
    pub plaintext_width: usize,
    /// Byte width of rational numerators and the common denominator.
    pub rational_width: usize,
    /// Bound on any masked-θ or accumulator numerator over the common denominator.
    pub numerator_bound: BigInt,
    pub common_denominator: BigInt,
}

fn pow2(k: u32) -> BigInt {
    BigInt::one() << k
}

impl CapacityPlan {
    fn new(p: &SessionParams) -> Self {
        let plan = p.scale_plan;
        let n = BigInt::from(p.n);
        let m = BigInt::from(p.m());
        let hide = pow2(p.kappa);

        let x_mantissa = p.bounds.x.ceil_scaled(plan.s1());
        let y_mantissa = p.bounds.y.ceil_scaled(plan.s_y());
        let theta_mantissa = p.bounds.theta.ceil_scaled(plan.s2());

        let gram_bound = &m * &x_mantissa * &x_mantissa;
        let gradient_bound = &n * &gram_bound * &theta_mantissa + &n * &m * &x_mantissa * &y_mantissa;
        let theta_pad_range = &hide * &theta_mantissa;
        let cross_bound = &n * &gram_bound * &theta_pad_range;
        let grad_inner = &gradient_bound + &cross_bound;
        let grad_pad_range = &hide * &grad_inner;
        let sub_pad_range = &hide * &cross_bound;
        let masked_grad_bound = &grad_inner + &grad_pad_range;
        let sub_enc_bound = &cross_bound + &sub_pad_range;
        let sub_plain_bound = &cross_bound + &sub_pad_range * 2u32;

        let plaintext_width = (p.keybits as usize).div_ceil(8);
        let rational_width = 2 * plaintext_width;

        // |accumulator| grows by at most k·grad_pad_range + 1 per iteration.
        let common_denominator = p.common_denominator();
        let iters = BigInt::from(p.iterations) + 1u32;
        let numerator_bound = &common_denominator * (&theta_mantissa + &theta_pad_range + &iters)
            + &iters * p.alpha.numer().abs() * &grad_pad_range;

        CapacityPlan {
            keybits: p.keybits,
            kappa: p.kappa,
            x_mantissa,
            y_mantissa,
            theta_mantissa,
            gram_bound,
            gradient_bound,
            theta_pad_range,
            cross_bound,
            grad_pad_range,
            sub_pad_range,
            masked_grad_bound,
            sub_enc_bound,
            sub_plain_bound,
            plaintext_width,
            rational_width,
            numerator_bound,
            common_denominator,
        }
    }

    /// Rejects key sizes that cannot hold every masked value with the
    /// centered signed representation.
    pub fn check(&self) -> Result<()> {
        // N >= 2^(keybits-1), so N/2 >= 2^(keybits-2).
        let half_n_floor = pow2(self.keybits.saturating_sub(2));
        let need = |what: &str, bound: &BigInt| -> Result<()> {
            if bound >= &half_n_floor {
                return Err(Error::KeyTooSmall(format!(
                    "{what} needs {} bits but a {}-bit key only guarantees {} bits",
                    bound.bits() + 2,
                    self.keybits,
                    self.keybits.saturating_sub(2)
                )));
            }
            Ok(())
        };
        need("2^kappa-padded gradient", &(&self.gradient_bound << self.kappa))?;
        need("masked gradient", &self.masked_grad_bound)?;
        need("sub-protocol product", &self.sub_enc_bound)?;
        let wire_limit = BigInt::one() << (8 * self.rational_width as u32);
        if self.numerator_bound >= wire_limit || self.common_denominator >= wire_limit {
            return Err(Error::KeyTooSmall(format!(
                "masked theta numerators need {} bits, wire width is {} bits",
                self.numerator_bound.bits(),
                8 * self.rational_width
            )));
        }
        let plain_limit = BigInt::one() << (8 * self.plaintext_width as u32);
        if self.sub_plain_bound >= plain_limit {
            return Err(Error::KeyTooSmall("sub-protocol reply exceeds plaintext width".into()));
        }
        Ok(())
    }

    /// Range check for a decrypted masked gradient.
    pub fn check_masked_gradient(&self, v: &BigInt) -> Result<()> {
        if v.abs() > self.masked_grad_bound {
            return Err(Error::CapacityOverflow(format!(
                "decrypted gradient has {} bits, bound is {} bits",
                v.bits(),
                self.masked_grad_bound.bits()
            )));
        }
        Ok(())
    }

    /// Range check for a masked θ `t + R` with `|t| <= B_θ` and `R` a θ pad.
    pub fn check_masked_theta(&self, v: &BigInt) -> Result<()> {
        let low = -self.theta_mantissa.clone();
        let high = &self.theta_mantissa + &self.theta_pad_range;
        if v < &low || v >= &high {
            return Err(Error::CapacityOverflow("masked theta outside its declared range".into()));
        }
        Ok(())
    }

    pub fn check_sub_product(&self, v: &BigInt) -> Result<()> {
        if v.abs() > self.sub_enc_bound {
            return Err(Error::CapacityOverflow("sub-protocol product outside its declared range".into()));
        }
        Ok(())
    }

    pub fn check_sub_reply(&self, v: &BigInt) -> Result<()> {
        if v.abs() > self.sub_plain_bound {
            return Err(Error::CapacityOverflow("sub-protocol reply outside its declared range".into()));
        }
        Ok(())
    }

    /// Range check for a θ mantissa in the plaintext oracle.
    pub fn check_theta(&self, t: &BigInt) -> Result<()> {
        if t.abs() > self.theta_mantissa {
            return Err(Error::CapacityOverflow(format!(
                "theta mantissa {t} exceeds declared bound {}",
                self.theta_mantissa
            )));
        }
        Ok(())
    }
}
