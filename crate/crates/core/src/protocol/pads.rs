//! One-time masking pads and the ledger that keeps them fresh.

use std::collections::HashSet;
#[cfg(any(test, feature = "test-hooks"))]
use std::collections::VecDeque;
use std::fmt;

use num_bigint::{BigInt, RandBigInt};
use num_traits::Zero;
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Bob,
    Alice,
}

impl Party {
    pub fn peer(self) -> Party {
        match self {
            Party::Bob => Party::Alice,
            Party::Alice => Party::Bob,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Bob => "bob",
            Party::Alice => "alice",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PadId {
    pub owner: Party,
    pub seq: u64,
}

impl fmt::Display for PadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.owner, self.seq)
    }
}

/// What a pad masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PadKind {
    /// Alice's mask on the encrypted gradient.
    Gradient,
    /// Either party's mask inside the cross-term sub-protocol.
    SubProtocol,
    /// Bob's mask on θ.
    Theta,
}

#[derive(Debug, Clone)]
pub struct PadRecord {
    pub pad_id: PadId,
    pub kind: PadKind,
    /// Mantissas at `scale`.
    pub value: Vec<BigInt>,
    pub scale: u32,
    /// Sign of the pad's contribution to the accumulated mask.
    pub sign: i8,
    pub consumed: bool,
}

/// How pad values are produced.
#[derive(Debug, Clone, Default)]
pub enum PadMode {
    #[default]
    Random,
    /// Every pad is zero. Test builds only.
    #[cfg(any(test, feature = "test-hooks"))]
    Zero,
    /// Pads are taken from the queue in issue order, then drawn at random.
    #[cfg(any(test, feature = "test-hooks"))]
    Injected(VecDeque<Vec<BigInt>>),
}

/// Issues pads, records them, and refuses reuse.
#[derive(Debug)]
pub struct PadLedger {
    owner: Party,
    mode: PadMode,
    records: Vec<PadRecord>,
    fingerprints: HashSet<[u8; 32]>,
}

fn fingerprint(value: &[BigInt]) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in value {
        let (sign, bytes) = v.to_bytes_be();
        h.update([sign as u8]);
        h.update((bytes.len() as u32).to_be_bytes());
        h.update(&bytes);
    }
    h.finalize().into()
}

impl PadLedger {
    pub fn new(owner: Party, mode: PadMode) -> Self {
        Self { owner, mode, records: Vec::new(), fingerprints: HashSet::new() }
    }

    pub fn owner(&self) -> Party {
        self.owner
    }

    /// Draws a fresh pad of `dim` entries, each uniform in `[0, range)`.
    pub fn issue<R: RngCore>(
        &mut self,
        rng: &mut R,
        kind: PadKind,
        dim: usize,
        range: &BigInt,
        scale: u32,
        sign: i8,
    ) -> Result<PadId> {
        let value = loop {
            let value = match &mut self.mode {
                PadMode::Random => (0..dim).map(|_| rng.gen_bigint_range(&BigInt::zero(), range)).collect::<Vec<_>>(),
                #[cfg(any(test, feature = "test-hooks"))]
                PadMode::Zero => break vec![BigInt::zero(); dim],
                #[cfg(any(test, feature = "test-hooks"))]
                PadMode::Injected(queue) => match queue.pop_front() {
                    Some(v) => {
                        if v.len() != dim {
                            return Err(Error::DimensionMismatch(format!(
                                "injected pad has {} entries, expected {dim}",
                                v.len()
                            )));
                        }
                        break v;
                    }
                    None => (0..dim).map(|_| rng.gen_bigint_range(&BigInt::zero(), range)).collect(),
                },
            };
            // A repeated value would void the one-time property; draw again.
            if self.fingerprints.insert(fingerprint(&value)) {
                break value;
            }
        };
        let pad_id = PadId { owner: self.owner, seq: self.records.len() as u64 };
        self.records.push(PadRecord { pad_id, kind, value, scale, sign, consumed: false });
        Ok(pad_id)
    }

    pub fn get(&self, id: PadId) -> Result<&PadRecord> {
        if id.owner != self.owner {
            return Err(Error::ProtocolOrder(format!("pad {id} belongs to the peer")));
        }
        self.records
            .get(id.seq as usize)
            .ok_or_else(|| Error::ProtocolOrder(format!("pad {id} was never issued")))
    }

    pub fn value(&self, id: PadId) -> Result<&[BigInt]> {
        Ok(&self.get(id)?.value)
    }

    /// Marks a pad as spent on the wire. A second use is an exposure violation.
    pub fn consume(&mut self, id: PadId) -> Result<()> {
        self.get(id)?;
        let record = &mut self.records[id.seq as usize];
        if record.consumed {
            return Err(Error::ExposureViolation(format!("pad {id} used twice")));
        }
        record.consumed = true;
        Ok(())
    }

    pub fn records(&self) -> &[PadRecord] {
        &self.records
    }
}
