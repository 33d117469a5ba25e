//! State and plumbing shared by both parties.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use num_bigint::BigInt;

use super::audit::{Auditor, FieldRecord, Provenance, Transcript, TranscriptEntry};
use super::pads::{PadLedger, Party};
use super::params::{PartyConfig, SessionParams};
use crate::enclinalg::{EncMatrix, EncVector};
use crate::error::{Error, Result};
use crate::fixedpoint::ScaledInt;
use crate::oracle::Dataset;
use crate::paillier::{keygen, OpCounters, OpCounts, PaillierPrivateKey, PaillierPublicKey};
use crate::transport::{CipherMatrix, CipherVector, MsgType, Payload, ProtocolMessage, PublicKeyBody};

#[cfg(any(test, feature = "test-hooks"))]
pub use hooks::{InspectEvent, Inspector, TestHooks};

/// Per-party run options.
#[derive(Debug, Clone, Default)]
pub struct PartyOptions {
    /// Seeds every random choice of the party. `None` draws from the OS.
    pub seed: Option<u64>,
    /// Use this keypair instead of generating one. Its size must match the
    /// negotiated key size.
    pub keypair: Option<PaillierPrivateKey>,
    #[cfg(any(test, feature = "test-hooks"))]
    pub hooks: TestHooks,
}

#[cfg(any(test, feature = "test-hooks"))]
mod hooks {
    use std::sync::{Arc, Mutex};

    use num_bigint::BigInt;

    use crate::protocol::pads::PadMode;
    use crate::protocol::ExactRational;

    /// White-box controls for tests. Absent from builds without the
    /// `test-hooks` feature.
    #[derive(Debug, Clone, Default)]
    pub struct TestHooks {
        pub pad_mode: PadMode,
        /// Alice reuses her previous gradient pad at this loop iteration.
        pub reuse_gradient_pad_at: Option<u32>,
        /// Bob sends a raw row of his features in place of the masked θ at
        /// this loop iteration.
        pub leak_raw_row_at: Option<u32>,
        pub inspector: Option<Inspector>,
    }

    /// Internal values captured at each loop iteration.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub enum InspectEvent {
        Bob {
            iteration: u32,
            /// Running θ base before this iteration's update.
            base: Vec<ExactRational>,
            /// Decrypted gradient after both cross terms are removed.
            corrected_gradient: Vec<BigInt>,
            /// θ pad issued at this iteration.
            theta_pad: Vec<BigInt>,
        },
        Alice {
            iteration: u32,
            /// Mask accumulator before this iteration's update.
            accumulator: Vec<ExactRational>,
            /// θ plus Bob's previous pad, as used for the gradient.
            masked_theta: Vec<BigInt>,
            gradient_pad: Vec<BigInt>,
            sub_pad: Vec<BigInt>,
        },
    }

    pub type Inspector = Arc<Mutex<Vec<InspectEvent>>>;
}

/// What a finished party hands back.
#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub party: Party,
    pub theta: Vec<ScaledInt>,
    pub params: SessionParams,
    /// Operation counts for setup: key exchange, Gram sharing and caching.
    pub setup_counts: OpCounts,
    /// Operation counts of each loop iteration.
    pub round_counts: Vec<OpCounts>,
    pub total_counts: OpCounts,
    pub transcript: Transcript,
}

pub(crate) struct Core {
    pub party: Party,
    pub config: PartyConfig,
    pub data: Dataset,
    pub rng: ChaCha20Rng,
    pub counters: OpCounters,
    pub ledger: PadLedger,
    pub transcript: Transcript,
    auditor: Auditor,
    pub outbox: Vec<ProtocolMessage>,
    pub session_id: [u8; 16],
    pub params: Option<SessionParams>,
    pub keys: Option<PaillierPrivateKey>,
    provided_key: Option<PaillierPrivateKey>,
    pub peer_pk: Option<PaillierPublicKey>,
    pub setup_counts: Option<OpCounts>,
    round_start: OpCounts,
    pub round_counts: Vec<OpCounts>,
    #[cfg(any(test, feature = "test-hooks"))]
    pub hooks: TestHooks,
}

impl Core {
    pub fn new(party: Party, config: PartyConfig, data: Dataset, options: PartyOptions) -> Self {
        let mut rng = match options.seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        #[cfg(any(test, feature = "test-hooks"))]
        let pad_mode = options.hooks.pad_mode.clone();
        #[cfg(not(any(test, feature = "test-hooks")))]
        let pad_mode = super::pads::PadMode::Random;
        let mut session_id = [0u8; 16];
        rng.fill_bytes(&mut session_id);
        Self {
            party,
            config,
            data,
            rng,
            counters: OpCounters::new(),
            ledger: PadLedger::new(party, pad_mode),
            transcript: Transcript::new(),
            auditor: Auditor::new(),
            outbox: Vec::new(),
            session_id,
            params: None,
            keys: None,
            provided_key: options.keypair,
            peer_pk: None,
            setup_counts: None,
            round_start: OpCounts::default(),
            round_counts: Vec::new(),
            #[cfg(any(test, feature = "test-hooks"))]
            hooks: options.hooks,
        }
    }

    pub fn params(&self) -> Result<&SessionParams> {
        self.params.as_ref().ok_or_else(|| Error::ProtocolOrder("parameters not negotiated".into()))
    }

    pub fn keys(&self) -> Result<&PaillierPrivateKey> {
        self.keys.as_ref().ok_or_else(|| Error::ProtocolOrder("no keypair yet".into()))
    }

    pub fn peer_pk(&self) -> Result<&PaillierPublicKey> {
        self.peer_pk.as_ref().ok_or_else(|| Error::ProtocolOrder("peer public key not received".into()))
    }

    /// Checks an incoming message against what the state machine expects.
    pub fn expect(&self, msg: &ProtocolMessage, want: MsgType, iteration: u32) -> Result<()> {
        if msg.session_id != self.session_id {
            return Err(Error::ProtocolOrder("message from another session".into()));
        }
        if msg.msg_type() != want {
            return Err(Error::UnexpectedMessage { expected: want, got: msg.msg_type() });
        }
        if msg.iteration != iteration {
            return Err(Error::ProtocolOrder(format!(
                "{want} for iteration {} while at iteration {iteration}",
                msg.iteration
            )));
        }
        Ok(())
    }

    /// Audits and queues an outgoing message. A message that fails the
    /// exposure check is never queued.
    pub fn send(&mut self, iteration: u32, payload: Payload, fields: Vec<FieldRecord>) -> Result<()> {
        let msg = ProtocolMessage { session_id: self.session_id, iteration, payload };
        let entry = TranscriptEntry { sender: self.party, msg_type: msg.msg_type(), iteration, fields };
        let violations = self.auditor.check(&entry);
        self.transcript.push(entry);
        if let Some(v) = violations.first() {
            return Err(Error::ExposureViolation(v.to_string()));
        }
        self.outbox.push(msg);
        Ok(())
    }

    /// Negotiates, checks capacity and the local data against the agreed
    /// bounds, and creates this party's keypair.
    pub fn negotiate(&mut self, bob: &super::params::ParamsProposal, alice: &super::params::ParamsProposal) -> Result<()> {
        let params = SessionParams::negotiate(bob, alice)?;
        params.capacity().check()?;
        self.data.check_bounds(&params.bounds)?;
        let keys = match self.provided_key.take() {
            Some(k) if k.public_key().keybits() == params.keybits => k,
            Some(k) => {
                return Err(Error::InvalidParameter(format!(
                    "supplied key has {} bits, session needs {}",
                    k.public_key().keybits(),
                    params.keybits
                )))
            }
            None => keygen(params.keybits, &mut self.rng)?.1,
        };
        self.keys = Some(keys);
        self.params = Some(params);
        Ok(())
    }

    pub fn public_key_body(&self) -> Result<PublicKeyBody> {
        let pk = self.keys()?.public_key();
        Ok(PublicKeyBody {
            keybits: pk.keybits(),
            modulus: pk.modulus().clone(),
            params_digest: self.params()?.digest(),
        })
    }

    pub fn accept_peer_key(&mut self, body: &PublicKeyBody) -> Result<()> {
        let params = self.params()?;
        if body.params_digest != params.digest() {
            return Err(Error::NegotiationFailure("session parameter digests differ".into()));
        }
        if body.keybits != params.keybits {
            return Err(Error::NegotiationFailure(format!(
                "peer key has {} bits, negotiated {}",
                body.keybits, params.keybits
            )));
        }
        self.peer_pk = Some(PaillierPublicKey::from_modulus(body.keybits, body.modulus.clone())?);
        Ok(())
    }

    pub fn finish_setup(&mut self) {
        self.setup_counts = Some(self.counters.snapshot());
    }

    pub fn begin_round(&mut self) {
        self.round_start = self.counters.snapshot();
    }

    pub fn end_round(&mut self) {
        self.round_counts.push(self.counters.snapshot() - self.round_start);
    }

    pub fn outcome(&self, theta: &Option<Vec<BigInt>>) -> Result<PartyOutcome> {
        let theta = theta.as_ref().ok_or_else(|| Error::ProtocolOrder("run not finished".into()))?;
        let params = self.params()?.clone();
        let s2 = params.scale_plan.s2();
        Ok(PartyOutcome {
            party: self.party,
            theta: theta.iter().map(|t| ScaledInt::new(t.clone(), s2)).collect(),
            params,
            setup_counts: self.setup_counts.unwrap_or_default(),
            round_counts: self.round_counts.clone(),
            total_counts: self.counters.snapshot(),
            transcript: self.transcript.clone(),
        })
    }
}

pub(crate) fn encrypted_field(name: &'static str, entries: usize, key_owner: Party) -> FieldRecord {
    FieldRecord { name, entries, provenance: Provenance::Encrypted { key_owner } }
}

pub(crate) fn public_field(name: &'static str, entries: usize) -> FieldRecord {
    FieldRecord { name, entries, provenance: Provenance::Public }
}

pub(crate) fn padded_field(name: &'static str, entries: usize, pads: Vec<super::pads::PadId>) -> FieldRecord {
    FieldRecord { name, entries, provenance: Provenance::Padded { pads } }
}

pub(crate) fn to_wire_vector(pk: &PaillierPublicKey, v: &EncVector) -> CipherVector {
    CipherVector {
        scale: v.scale(),
        width: pk.ciphertext_width() as u32,
        values: v.entries().iter().map(|c| c.value().clone()).collect(),
    }
}

pub(crate) fn to_wire_matrix(pk: &PaillierPublicKey, m: &EncMatrix) -> CipherMatrix {
    CipherMatrix {
        rows: m.rows() as u32,
        cols: m.cols() as u32,
        scale: m.scale(),
        width: pk.ciphertext_width() as u32,
        values: m.entries().iter().map(|c| c.value().clone()).collect(),
    }
}

fn check_shape(what: &str, width: u32, pk: &PaillierPublicKey, scale: u32, want_scale: u32) -> Result<()> {
    if width as usize != pk.ciphertext_width() {
        return Err(Error::InvalidInput(format!(
            "{what}: ciphertext width {width}, key needs {}",
            pk.ciphertext_width()
        )));
    }
    if scale != want_scale {
        return Err(Error::ScaleMismatch { expected: want_scale, found: scale });
    }
    Ok(())
}

/// Binds wire ciphertexts to `pk`, checking shape and scale.
pub(crate) fn from_wire_vector(
    pk: &PaillierPublicKey,
    v: &CipherVector,
    dim: usize,
    scale: u32,
) -> Result<EncVector> {
    check_shape("vector", v.width, pk, v.scale, scale)?;
    if v.values.len() != dim {
        return Err(Error::DimensionMismatch(format!("vector has {} entries, expected {dim}", v.values.len())));
    }
    let cts = v.values.iter().map(|x| pk.ciphertext_from_value(x.clone())).collect::<Result<Vec<_>>>()?;
    EncVector::from_ciphertexts(scale, cts)
}

pub(crate) fn from_wire_matrix(pk: &PaillierPublicKey, m: &CipherMatrix, n: usize, scale: u32) -> Result<EncMatrix> {
    check_shape("matrix", m.width, pk, m.scale, scale)?;
    if m.rows as usize != n || m.cols as usize != n {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}, expected {n}x{n}", m.rows, m.cols)));
    }
    let cts = m.values.iter().map(|x| pk.ciphertext_from_value(x.clone())).collect::<Result<Vec<_>>>()?;
    EncMatrix::from_ciphertexts(n, n, scale, cts)
}

/// Checks that each value fits the fixed wire width, failing with a
/// capacity overflow rather than an encoding error.
pub(crate) fn check_width(values: &[BigInt], width: usize, what: &str) -> Result<()> {
    let limit = 8 * width as u64;
    if let Some(v) = values.iter().find(|v| v.bits() > limit) {
        return Err(Error::CapacityOverflow(format!("{what} needs {} bits, wire width is {limit}", v.bits())));
    }
    Ok(())
}
