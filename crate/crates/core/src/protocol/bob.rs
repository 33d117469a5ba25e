//! Bob: holds the first data partition and the key that protects the
//! gradient. He removes his own cross term, drives the cross-term
//! sub-protocol, and advances θ in exact rationals behind a fresh pad.

use num_bigint::BigInt;
use num_traits::Zero;

use super::audit::FieldRecord;
use super::pads::{PadId, PadKind, Party};
use super::params::{PartyConfig, SessionParams};
use super::session::{
    check_width, encrypted_field, from_wire_matrix, from_wire_vector, padded_field, public_field, to_wire_matrix,
    to_wire_vector, Core, PartyOptions, PartyOutcome,
};
use super::ExactRational;
use crate::enclinalg::{
    dec_vector, enc_add_vec, enc_matrix, enc_matvec, enc_vector, gram, PlainMatrix, PlainVector,
};
use crate::error::{Error, Result};
use crate::oracle::Dataset;
use crate::transport::{MsgType, Payload, ProtocolMessage, RationalVector, RevealBody, SignedVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobPhase {
    Created,
    AwaitParams,
    AwaitPubkey,
    AwaitGradient(u32),
    AwaitGramA(u32),
    AwaitSubReply(u32),
    AwaitAccumulator,
    Done,
}

pub struct Bob {
    core: Core,
    phase: BobPhase,
    gram: Option<(PlainMatrix, PlainVector)>,
    gram_shared: bool,
    /// θ minus Alice's accumulated mask term, over the common denominator.
    base: Vec<ExactRational>,
    /// Pad on the last masked θ sent, `R_{i-1}`.
    theta_pad: Option<PadId>,
    sub_pad: Option<PadId>,
    /// Decrypted masked gradient of the current iteration.
    decrypted: Option<Vec<BigInt>>,
    theta: Option<Vec<BigInt>>,
}

impl Bob {
    pub fn new(config: PartyConfig, data: Dataset, options: PartyOptions) -> Self {
        Self {
            core: Core::new(Party::Bob, config, data, options),
            phase: BobPhase::Created,
            gram: None,
            gram_shared: false,
            base: Vec::new(),
            theta_pad: None,
            sub_pad: None,
            decrypted: None,
            theta: None,
        }
    }

    pub fn phase(&self) -> BobPhase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == BobPhase::Done
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

    /// Current θ base, for white-box checks.
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn base(&self) -> &[ExactRational] {
        &self.base
    }

    /// Opens the session with Bob's parameter proposal.
    pub fn start(&mut self) -> Result<()> {
        if self.phase != BobPhase::Created {
            return Err(Error::ProtocolOrder("session already started".into()));
        }
        let proposal = self.core.config.proposal(self.core.data.n(), self.core.data.m())?;
        self.core.send(0, Payload::SetupParams(proposal), vec![public_field("params", 1)])?;
        self.phase = BobPhase::AwaitParams;
        Ok(())
    }

    pub fn handle(&mut self, msg: ProtocolMessage) -> Result<()> {
        match self.phase {
            BobPhase::AwaitParams => self.on_params(msg),
            BobPhase::AwaitPubkey => self.on_pubkey(msg),
            BobPhase::AwaitGradient(i) => self.on_gradient(i, msg),
            BobPhase::AwaitGramA(i) => self.on_gram_a(i, msg),
            BobPhase::AwaitSubReply(i) => self.on_sub_reply(i, msg),
            BobPhase::AwaitAccumulator => self.on_accumulator(msg),
            BobPhase::Created | BobPhase::Done => {
                Err(Error::ProtocolOrder(format!("{} received while {:?}", msg.msg_type(), self.phase)))
            }
        }
    }

    fn on_params(&mut self, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::SetupParams, 0)?;
        let Payload::SetupParams(alice) = msg.payload else { unreachable!() };
        let own = self.core.config.proposal(self.core.data.n(), self.core.data.m())?;
        self.core.negotiate(&own, &alice)?;
        let params = self.core.params()?.clone();
        let plan = params.scale_plan;
        let x = self.core.data.encode_x(plan.s1());
        let y = self.core.data.encode_y(plan.s_y());
        self.gram = Some(gram(&x, &y)?);
        self.base = params.theta0.entries().iter().map(|t| ExactRational::from_integer(t.clone())).collect();
        let body = self.core.public_key_body()?;
        self.core.send(0, Payload::PubkeyB(body), vec![public_field("public_key", 1)])?;
        self.phase = BobPhase::AwaitPubkey;
        Ok(())
    }

    fn on_pubkey(&mut self, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::PubkeyA, 0)?;
        let Payload::PubkeyA(body) = &msg.payload else { unreachable!() };
        self.core.accept_peer_key(body)?;
        self.share_gram()?;
        self.core.finish_setup();
        let iterations = self.core.params()?.iterations;
        if iterations == 0 {
            self.reveal()?;
        } else {
            self.phase = BobPhase::AwaitGradient(0);
        }
        Ok(())
    }

    /// Sends `E_B(X₁ᵀX₁)` and `E_B(X₁ᵀY₁)`. Allowed once per session.
    pub fn share_gram(&mut self) -> Result<()> {
        if self.gram_shared {
            return Err(Error::ProtocolOrder("Gram share already sent".into()));
        }
        let (g1, h1) = self.gram.as_ref().ok_or_else(|| Error::ProtocolOrder("setup incomplete".into()))?;
        let pk = self.core.keys()?.public_key().clone();
        let enc_g = enc_matrix(&pk, g1, &mut self.core.rng, &self.core.counters)?;
        let enc_h = enc_vector(&pk, h1, &mut self.core.rng, &self.core.counters)?;
        let n = g1.rows();
        let payload = Payload::GramB { gram: to_wire_matrix(&pk, &enc_g), xty: to_wire_vector(&pk, &enc_h) };
        let fields = vec![encrypted_field("xtx", n * n, Party::Bob), encrypted_field("xty", n, Party::Bob)];
        self.core.send(0, payload, fields)?;
        self.gram_shared = true;
        Ok(())
    }

    fn previous_theta_pad(&self, n: usize) -> Result<Vec<BigInt>> {
        match self.theta_pad {
            Some(id) => Ok(self.core.ledger.value(id)?.to_vec()),
            None => Ok(vec![BigInt::zero(); n]),
        }
    }

    fn on_gradient(&mut self, i: u32, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::MaskedGrad, i + 1)?;
        self.core.begin_round();
        let Payload::MaskedGrad(wire) = &msg.payload else { unreachable!() };
        let params = self.core.params()?;
        let n = params.n as usize;
        let capacity = params.capacity();
        let sk = self.core.keys()?;
        let enc = from_wire_vector(sk.public_key(), wire, n, params.scale_plan.s_gradient())?;
        let signed = dec_vector(sk, &enc, &self.core.counters)?.into_entries();
        for v in &signed {
            capacity.check_masked_gradient(v)?;
        }
        self.decrypted = Some(signed);
        self.phase = BobPhase::AwaitGramA(i);
        Ok(())
    }

    fn on_gram_a(&mut self, i: u32, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::GramA, i + 1)?;
        let Payload::GramA(wire) = &msg.payload else { unreachable!() };
        let params = self.core.params()?.clone();
        let plan = params.scale_plan;
        let n = params.n as usize;
        let capacity = params.capacity();
        let pk_a = self.core.peer_pk()?.clone();
        let enc_g2 = from_wire_matrix(&pk_a, wire, n, plan.s_gram())?;

        let r_prev = PlainVector::new(plan.s2(), self.previous_theta_pad(n)?)?;
        let s_id = self.core.ledger.issue(
            &mut self.core.rng,
            PadKind::SubProtocol,
            n,
            &capacity.sub_pad_range,
            plan.s_gradient(),
            -1,
        )?;
        let s_b = PlainVector::new(plan.s_gradient(), self.core.ledger.value(s_id)?.to_vec())?;
        let product = enc_matvec(&pk_a, &enc_g2, &r_prev, &self.core.counters)?;
        let enc_s = enc_vector(&pk_a, &s_b, &mut self.core.rng, &self.core.counters)?;
        let masked = enc_add_vec(&pk_a, &product, &enc_s, &self.core.counters)?;
        self.core.ledger.consume(s_id)?;
        self.sub_pad = Some(s_id);
        let fields = vec![padded_field("cross_term", n, vec![s_id])];
        self.core.send(i + 1, Payload::SubEncProd(to_wire_vector(&pk_a, &masked)), fields)?;
        self.phase = BobPhase::AwaitSubReply(i);
        Ok(())
    }

    fn on_sub_reply(&mut self, i: u32, msg: ProtocolMessage) -> Result<()> {
        self.core.expect(&msg, MsgType::SubPlainProd, i + 1)?;
        let Payload::SubPlainProd(reply) = &msg.payload else { unreachable!() };
        let params = self.core.params()?.clone();
        let plan = params.scale_plan;
        let n = params.n as usize;
        let capacity = params.capacity();
        if reply.values.len() != n {
            return Err(Error::DimensionMismatch(format!("sub-protocol reply has {} entries", reply.values.len())));
        }
        if reply.scale != plan.s_gradient() {
            return Err(Error::ScaleMismatch { expected: plan.s_gradient(), found: reply.scale });
        }
        for v in &reply.values {
            capacity.check_sub_reply(v)?;
        }
        let d = self.decrypted.take().ok_or_else(|| Error::ProtocolOrder("no gradient decrypted".into()))?;
        let s_id = self.sub_pad.take().ok_or_else(|| Error::ProtocolOrder("no sub-protocol pad".into()))?;
        let s_b = self.core.ledger.value(s_id)?.to_vec();
        let r_prev = PlainVector::new(plan.s2(), self.previous_theta_pad(n)?)?;
        let (g1, _) = self.gram.as_ref().expect("set during setup");
        let own_cross = g1.matvec(&r_prev)?;

        // e = G θ - h + R^A - Q^A once both cross terms are gone.
        let corrected: Vec<BigInt> = (0..n)
            .map(|j| &d[j] - &own_cross.entries()[j] - (&reply.values[j] - &s_b[j]))
            .collect();
        let k = params.step_factor();
        #[cfg(any(test, feature = "test-hooks"))]
        let base_before = self.base.clone();
        for (b, e) in self.base.iter_mut().zip(&corrected) {
            *b = &*b - &(&k * e);
        }

        let theta_id = self.core.ledger.issue(
            &mut self.core.rng,
            PadKind::Theta,
            n,
            &capacity.theta_pad_range,
            plan.s2(),
            1,
        )?;
        let r_b = self.core.ledger.value(theta_id)?.to_vec();
        let masked: Vec<ExactRational> = self.base.iter().zip(&r_b).map(|(b, r)| b + r).collect();
        let wire = RationalVector::from_rationals(plan.s2(), capacity.rational_width as u32, &capacity.common_denominator, &masked)?;
        check_width(&wire.numerators, capacity.rational_width, "masked theta numerator")?;
        self.core.ledger.consume(theta_id)?;
        self.theta_pad = Some(theta_id);

        #[cfg(any(test, feature = "test-hooks"))]
        if let Some(inspector) = &self.core.hooks.inspector {
            inspector.lock().expect("inspector lock").push(super::session::InspectEvent::Bob {
                iteration: i,
                base: base_before,
                corrected_gradient: corrected,
                theta_pad: r_b,
            });
        }

        let (wire, fields) = self.masked_theta_message(i, wire, theta_id);
        self.core.send(i + 1, Payload::MaskedTheta(wire), fields)?;
        self.core.end_round();

        if i + 1 == params.iterations {
            self.reveal()?;
        } else {
            self.phase = BobPhase::AwaitGradient(i + 1);
        }
        Ok(())
    }

    #[cfg(any(test, feature = "test-hooks"))]
    fn masked_theta_message(&self, i: u32, wire: RationalVector, pad: PadId) -> (RationalVector, Vec<FieldRecord>) {
        use super::audit::Provenance;
        if self.core.hooks.leak_raw_row_at == Some(i) {
            let s1 = self.core.params.as_ref().expect("negotiated").scale_plan.s1();
            let row = self.core.data.encode_x(s1).row(0).to_vec();
            let n = row.len();
            let leaked = RationalVector { numerators: row, ..wire };
            let field = FieldRecord { name: "masked_theta", entries: n, provenance: Provenance::Raw { owner: Party::Bob } };
            return (leaked, vec![field]);
        }
        let n = wire.numerators.len();
        (wire, vec![padded_field("masked_theta", n, vec![pad])])
    }

    #[cfg(not(any(test, feature = "test-hooks")))]
    fn masked_theta_message(&self, _i: u32, wire: RationalVector, pad: PadId) -> (RationalVector, Vec<FieldRecord>) {
        let n = wire.numerators.len();
        (wire, vec![padded_field("masked_theta", n, vec![pad])])
    }

    /// Publishes the last θ pad so Alice can unmask θ_N.
    fn reveal(&mut self) -> Result<()> {
        let params = self.core.params()?.clone();
        let n = params.n as usize;
        let capacity = params.capacity();
        let pad = self.previous_theta_pad(n)?;
        let body = RevealBody::Pad(SignedVector {
            scale: params.scale_plan.s2(),
            width: capacity.plaintext_width as u32,
            values: pad,
        });
        let fields = vec![FieldRecord { name: "theta_pad", entries: n, provenance: super::audit::Provenance::OutputReveal }];
        self.core.send(params.iterations + 1, Payload::RevealPad(body), fields)?;
        self.phase = BobPhase::AwaitAccumulator;
        Ok(())
    }

    fn on_accumulator(&mut self, msg: ProtocolMessage) -> Result<()> {
        let params = self.core.params()?.clone();
        self.core.expect(&msg, MsgType::RevealPad, params.iterations + 1)?;
        let Payload::RevealPad(RevealBody::Accumulator(acc)) = &msg.payload else {
            return Err(Error::ProtocolOrder("expected Alice's accumulator in the reveal".into()));
        };
        let n = params.n as usize;
        if acc.numerators.len() != n || acc.denominator != params.common_denominator() {
            return Err(Error::DimensionMismatch("accumulator shape differs from the session".into()));
        }
        let capacity = params.capacity();
        let mut theta = Vec::with_capacity(n);
        for (b, a) in self.base.iter().zip(acc.to_rationals()) {
            let t = b + &a;
            if !t.is_integer() {
                return Err(Error::InvalidInput("revealed accumulator does not complete an integer theta".into()));
            }
            let t = t.numer().clone();
            capacity.check_theta(&t)?;
            theta.push(t);
        }
        self.theta = Some(theta);
        self.phase = BobPhase::Done;
        Ok(())
    }
}
