//! Alice: holds the second data partition. She computes the encrypted
//! gradient under Bob's key, answers the cross-term sub-protocol under her
//! own key, and keeps the running mask term that turns Bob's masked θ into
//! `θ + R` at scale s2.

use num_bigint::BigInt;

use super::audit::{FieldRecord, Provenance};
use super::pads::{PadId, PadKind, Party};
use super::params::{PartyConfig, SessionParams};
use super::session::{
    check_width, encrypted_field, from_wire_matrix, from_wire_vector, padded_field, public_field, to_wire_matrix,
    to_wire_vector, Core, PartyOptions, PartyOutcome,
};
use super::ExactRational;
use crate::enclinalg::{
    dec_vector, enc_add, enc_add_vec, enc_matrix, enc_matvec, enc_negate_vec, enc_vector, gram, EncMatrix, EncVector,
    PlainVector,
};
use crate::error::{Error, Result};
use crate::oracle::Dataset;
use crate::transport::{CipherMatrix, MsgType, Payload, ProtocolMessage, RationalVector, RevealBody, SignedVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlicePhase {
    Created,
    AwaitParams,
    AwaitPubkey,
    AwaitGram,
    AwaitSubProduct(u32),
    AwaitMaskedTheta(u32),
    AwaitRevealPad,
    Done,
}

struct Cached {
    /// `E_B(XᵀX)` and `E_B(XᵀY)`.
    xtx: EncMatrix,
    xty: EncVector,
    /// `E_A(X₂ᵀX₂)` in wire form, resent every iteration.
    own_gram: CipherMatrix,
}

pub struct Alice {
    core: Core,
    phase: AlicePhase,
    cached: Option<Cached>,
    /// Integer θ plus Bob's previous pad, at scale s2.
    masked_theta: Vec<BigInt>,
    /// Running mask term: adding it to Bob's base recovers θ.
    accumulator: Vec<ExactRational>,
    gradient_pad: Option<PadId>,
    sub_pad: Option<PadId>,
    theta: Option<Vec<BigInt>>,
}

impl Alice {
    pub fn new(config: PartyConfig, data: Dataset, options: PartyOptions) -> Self {
        Self {
            core: Core::new(Party::Alice, config, data, options),
            phase: AlicePhase::Created,
            cached: None,
            masked_theta: Vec::new(),
            accumulator: Vec::new(),
            gradient_pad: None,
            sub_pad: None,
            theta: None,
        }
    }

    pub fn phase(&self) -> AlicePhase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == AlicePhase::Done
    }

    pub fn take_outbox(&mut self) -> Vec<ProtocolMessage> {
        std::mem::take(&mut self.core.outbox)
    }

    pub fn params(&self) -> Option<&SessionParams> {
        self.core.params.as_ref()
    }

    pub fn outcome(&self) -> Result<PartyOutcome> {
        self.core.outcome(&self.theta)
    }

    #[cfg(any(test, feature = "test-hooks"))]
    pub fn accumulator(&self) -> &[ExactRational] {
        &self.accumulator
    }

    /// Alice waits for Bob's proposal and answers it.
    pub fn start(&mut self) -> Result<()> {
        if self.phase != AlicePhase::Created {
            return Err(Error::ProtocolOrder("session already started".into()));
        }
        self.phase = AlicePhase::AwaitParams;
        Ok(())
    }

    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<()> {
        match self.phase {
            AlicePhase::AwaitParams => self.on_params(msg),
            AlicePhase::AwaitPubkey => self.on_pubkey(msg),
            AlicePhase::AwaitGram => self.on_gram(msg),
            AlicePhase::AwaitSubProduct(i) => self.on_sub_product(i, msg),
            AlicePhase::AwaitMaskedTheta(i) => self.on_masked_theta(i, msg),
            AlicePhase::AwaitRevealPad => self.on_reveal(msg),
            AlicePhase::Created | AlicePhase::Done => {
                Err(Error::ProtocolOrder(format!("{} received while {:?}", msg.msg_type(), self.phase)))
            }
        }
    }

    fn on_params(&mut self, msg: ProtocolMessage) -> Result<()> {
        if msg.msg_type() == MsgType::SetupParams {
            self.core.session_id = msg.session_id;
        }
        self.core.expect(&msg, MsgType::SetupParams, 0)?;
        let Payload::SetupParams(bob) = msg.payload else { unreachable!() };
        // Answer first so that Bob sees the same disagreement we do.
        let own = self.core.config.proposal(self.core.data.n(), self.core.data.m())?;
        self.core.send(0, Payload::SetupParams(own.clone()), vec![public_field("params", 1)])?;
        self.core.negotiate(&bob, &own)?;
        let params = self.core.params()?.clone();
        let n = params.n as usize;
        self.masked_theta = params.theta0.entries().to_vec();
        self.accumulator = vec![ExactRational::zero(); n];
        let body = self.core.public_key_body()?;
        self.core.send(0, Payload::PubkeyA(body), vec![public_field("public_key", 1)])?;
        self.phase = AlicePhase::AwaitPubkey;
        Ok(())
    }

    fn on_pubkey(&mut self, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::PubkeyB, 0)?;
        let Payload::PubkeyB(body) = &msg.payload else { unreachable!() };
        self.core.accept_peer_key(body)?;
        self.phase = AlicePhase::AwaitGram;
        Ok(())
    }

    fn on_gram(&mut self, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::GramB, 0)?;
        let Payload::GramB { gram: wire_g, xty: wire_h } = &msg.payload else { unreachable!() };
        let params = self.core.params()?.clone();
        let plan = params.scale_plan;
        let n = params.n as usize;
        let pk_b = self.core.peer_pk()?.clone();
        let enc_g1 = from_wire_matrix(&pk_b, wire_g, n, plan.s_gram())?;
        let enc_h1 = from_wire_vector(&pk_b, wire_h, n, plan.s_gradient())?;

        let x = self.core.data.encode_x(plan.s1());
        let y = self.core.data.encode_y(plan.s_y());
        let (g2, h2) = gram(&x, &y)?;
        let own_pk = self.core.keys()?.public_key().clone();
        let counters = &self.core.counters;
        let rng = &mut self.core.rng;
        let xtx = enc_add(&pk_b, &enc_g1, &enc_matrix(&pk_b, &g2, rng, counters)?, counters)?;
        let xty = enc_add_vec(&pk_b, &enc_h1, &enc_vector(&pk_b, &h2, rng, counters)?, counters)?;
        let own_gram = to_wire_matrix(&own_pk, &enc_matrix(&own_pk, &g2, rng, counters)?);
        self.cached = Some(Cached { xtx, xty, own_gram });
        self.core.finish_setup();

        if params.iterations == 0 {
            self.phase = AlicePhase::AwaitRevealPad;
            Ok(())
        } else {
            self.send_gradient(0)
        }
    }

    fn issue_gradient_pad(&mut self, _i: u32) -> Result<PadId> {
        #[cfg(any(test, feature = "test-hooks"))]
        if self.core.hooks.reuse_gradient_pad_at == Some(_i) {
            if let Some(previous) = self.gradient_pad {
                return Ok(previous);
            }
        }
        let params = self.core.params()?;
        let n = params.n as usize;
        let range = params.capacity().grad_pad_range;
        let scale = params.scale_plan.s_gradient();
        let id = self.core.ledger.issue(&mut self.core.rng, PadKind::Gradient, n, &range, scale, 1)?;
        self.core.ledger.consume(id)?;
        Ok(id)
    }

    /// Sends `E_B(XᵀX θ̃ - XᵀY + R)` and the cached `E_A(X₂ᵀX₂)`.
    fn send_gradient(&mut self, i: u32) -> Result<()> {
        self.core.begin_round();
        let params = self.core.params()?.clone();
        let plan = params.scale_plan;
        let n = params.n as usize;
        let pad_id = self.issue_gradient_pad(i)?;
        self.gradient_pad = Some(pad_id);
        let pad = PlainVector::new(plan.s_gradient(), self.core.ledger.value(pad_id)?.to_vec())?;

        let pk_b = self.core.peer_pk()?.clone();
        let cached = self.cached.as_ref().ok_or_else(|| Error::ProtocolOrder("Gram share not received".into()))?;
        let theta = PlainVector::new(plan.s2(), self.masked_theta.clone())?;
        let counters = &self.core.counters;
        let product = enc_matvec(&pk_b, &cached.xtx, &theta, counters)?;
        let neg_h = enc_negate_vec(&pk_b, &cached.xty, counters)?;
        let enc_pad = enc_vector(&pk_b, &pad, &mut self.core.rng, counters)?;
        let gradient = enc_add_vec(&pk_b, &enc_add_vec(&pk_b, &product, &neg_h, counters)?, &enc_pad, counters)?;
        let own_gram = cached.own_gram.clone();

        let fields = vec![padded_field("gradient", n, vec![pad_id])];
        self.core.send(i + 1, Payload::MaskedGrad(to_wire_vector(&pk_b, &gradient)), fields)?;
        let fields = vec![encrypted_field("own_xtx", n * n, Party::Alice)];
        self.core.send(i + 1, Payload::GramA(own_gram), fields)?;
        self.phase = AlicePhase::AwaitSubProduct(i);
        Ok(())
    }

    fn on_sub_product(&mut self, i: u32, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::SubEncProd, i + 1)?;
        let Payload::SubEncProd(wire) = &msg.payload else { unreachable!() };
        let params = self.core.params()?.clone();
        let plan = params.scale_plan;
        let n = params.n as usize;
        let capacity = params.capacity();
        let sk = self.core.keys()?;
        let enc = from_wire_vector(sk.public_key(), wire, n, plan.s_gradient())?;
        let product = dec_vector(sk, &enc, &self.core.counters)?.into_entries();
        for v in &product {
            capacity.check_sub_product(v)?;
        }
        let q_id = self.core.ledger.issue(
            &mut self.core.rng,
            PadKind::SubProtocol,
            n,
            &capacity.sub_pad_range,
            plan.s_gradient(),
            -1,
        )?;
        let q = self.core.ledger.value(q_id)?;
        let reply: Vec<BigInt> = product.iter().zip(q).map(|(p, q)| p + q).collect();
        check_width(&reply, capacity.plaintext_width, "sub-protocol reply")?;
        self.core.ledger.consume(q_id)?;
        self.sub_pad = Some(q_id);
        let body = SignedVector { scale: plan.s_gradient(), width: capacity.plaintext_width as u32, values: reply };
        self.core.send(i + 1, Payload::SubPlainProd(body), vec![padded_field("cross_term", n, vec![q_id])])?;
        self.phase = AlicePhase::AwaitMaskedTheta(i);
        Ok(())
    }

    fn on_masked_theta(&mut self, i: u32, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::MaskedTheta, i + 1)?;
        let Payload::MaskedTheta(wire) = &msg.payload else { unreachable!() };
        let params = self.core.params()?.clone();
        let n = params.n as usize;
        let capacity = params.capacity();
        if wire.numerators.len() != n {
            return Err(Error::DimensionMismatch(format!("masked theta has {} entries", wire.numerators.len())));
        }
        if wire.denominator != capacity.common_denominator || wire.scale != params.scale_plan.s2() {
            return Err(Error::ProtocolOrder("masked theta not over the session denominator".into()));
        }
        let r_id = self.gradient_pad.ok_or_else(|| Error::ProtocolOrder("no gradient pad outstanding".into()))?;
        let q_id = self.sub_pad.take().ok_or_else(|| Error::ProtocolOrder("no sub-protocol pad outstanding".into()))?;
        let r = self.core.ledger.value(r_id)?.to_vec();
        let q = self.core.ledger.value(q_id)?.to_vec();
        let k = params.step_factor();

        #[cfg(any(test, feature = "test-hooks"))]
        if let Some(inspector) = &self.core.hooks.inspector {
            inspector.lock().expect("inspector lock").push(super::session::InspectEvent::Alice {
                iteration: i,
                accumulator: self.accumulator.clone(),
                masked_theta: self.masked_theta.clone(),
                gradient_pad: r.clone(),
                sub_pad: q.clone(),
            });
        }

        // v = θ_{i+1} + R_i exactly; round it and keep the remainder in the
        // accumulator so that Bob's base plus the accumulator stays integral.
        let mut next = Vec::with_capacity(n);
        for (j, masked) in wire.to_rationals().into_iter().enumerate() {
            let shift = &k * &(&r[j] - &q[j]);
            let v = &(&masked + &self.accumulator[j]) + &shift;
            let rounded = v.round_half_up();
            capacity.check_masked_theta(&rounded)?;
            let delta = &v - &ExactRational::from_integer(rounded.clone());
            self.accumulator[j] = &(&self.accumulator[j] + &shift) - &delta;
            next.push(rounded);
        }
        self.masked_theta = next;
        self.core.end_round();

        if i + 1 < params.iterations {
            self.send_gradient(i + 1)
        } else {
            self.phase = AlicePhase::AwaitRevealPad;
            Ok(())
        }
    }

    fn on_reveal(&mut self, msg: ProtocolMessage) -> Result<()> {
        let params = self.core.params()?.clone();
        self.core.expect(&msg, MsgType::RevealPad, params.iterations + 1)?;
        let Payload::RevealPad(RevealBody::Pad(pad)) = &msg.payload else {
            return Err(Error::ProtocolOrder("expected Bob's θ pad in the reveal".into()));
        };
        let n = params.n as usize;
        if pad.values.len() != n || pad.scale != params.scale_plan.s2() {
            return Err(Error::DimensionMismatch("revealed pad shape differs from the session".into()));
        }
        let capacity = params.capacity();
        let theta: Vec<BigInt> = self.masked_theta.iter().zip(&pad.values).map(|(t, r)| t - r).collect();
        for t in &theta {
            capacity.check_theta(t)?;
        }
        let acc = RationalVector::from_rationals(
            params.scale_plan.s2(),
            capacity.rational_width as u32,
            &capacity.common_denominator,
            &self.accumulator,
        )?;
        check_width(&acc.numerators, capacity.rational_width, "accumulator numerator")?;
        let fields = vec![FieldRecord { name: "accumulator", entries: n, provenance: Provenance::OutputReveal }];
        self.core.send(params.iterations + 1, Payload::RevealPad(RevealBody::Accumulator(acc)), fields)?;
        self.theta = Some(theta);
        self.phase = AlicePhase::Done;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::ScalePlan;
    use crate::protocol::{Bob, Bounds, Theta0};

    fn config() -> PartyConfig {
        PartyConfig {
            alpha: ExactRational::parse_decimal("0.1").unwrap(),
            iterations: 2,
            scale_plan: ScalePlan::new(2, 2),
            kappa: 40,
            keybits: 512,
            theta0: Theta0::Zero,
            bounds: Bounds {
                x: ExactRational::parse_decimal("1").unwrap(),
                y: ExactRational::parse_decimal("2").unwrap(),
                theta: ExactRational::parse_decimal("5").unwrap(),
            },
        }
    }

    fn data() -> Dataset {
        Dataset::from_f64(&[vec![0.5], vec![-0.25]], &[1.0, -0.5]).unwrap()
    }

    #[test]
    fn out_of_order_messages_rejected() {
        let mut bob = Bob::new(config(), data(), PartyOptions { seed: Some(1), ..Default::default() });
        bob.start().unwrap();
        let params = bob.take_outbox().remove(0);

        let mut alice = Alice::new(config(), data(), PartyOptions { seed: Some(2), ..Default::default() });
        assert!(matches!(alice.handle(params.clone()), Err(Error::ProtocolOrder(_))));
        alice.start().unwrap();
        assert!(matches!(alice.start(), Err(Error::ProtocolOrder(_))));
        alice.handle(params.clone()).unwrap();
        let sent: Vec<_> = alice.take_outbox().iter().map(|m| m.msg_type()).collect();
        assert_eq!(sent, vec![MsgType::SetupParams, MsgType::PubkeyA]);
        assert_eq!(alice.phase(), AlicePhase::AwaitPubkey);
        match alice.handle(params) {
            Err(Error::UnexpectedMessage { expected, got }) => {
                assert_eq!((expected, got), (MsgType::PubkeyB, MsgType::SetupParams));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn foreign_session_rejected() {
        let mut bob = Bob::new(config(), data(), PartyOptions { seed: Some(3), ..Default::default() });
        bob.start().unwrap();
        let params = bob.take_outbox().remove(0);
        let mut alice = Alice::new(config(), data(), PartyOptions { seed: Some(4), ..Default::default() });
        alice.start().unwrap();
        alice.handle(params).unwrap();
        let mut other = Bob::new(config(), data(), PartyOptions { seed: Some(5), ..Default::default() });
        other.start().unwrap();
        let mut stray = other.take_outbox().remove(0);
        stray.payload = Payload::PubkeyB(crate::transport::PublicKeyBody {
            keybits: 512,
            modulus: num_bigint::BigUint::from(35u8),
            params_digest: [0; 32],
        });
        assert!(matches!(alice.handle(stray), Err(Error::ProtocolOrder(_))));
    }
}
