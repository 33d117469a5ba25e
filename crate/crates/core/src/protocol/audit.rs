//! Transcript of transmitted fields and the safe-exposure check over it.
//!
//! Every field a party sends is tagged with how it is protected. The audit
//! accepts a field only if the receiver cannot read it: it is public, it is
//! encrypted under a key whose private half the receiver lacks, or it
//! carries a fresh one-time pad owned by someone other than the receiver.

use std::collections::HashSet;
use std::fmt;

use super::pads::{PadId, Party};
use crate::error::{Error, Result};
use crate::transport::MsgType;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Negotiated parameters and public keys.
    Public,
    /// Ciphertexts under `key_owner`'s public key.
    Encrypted { key_owner: Party },
    /// A value plus the listed one-time pads.
    Padded { pads: Vec<PadId> },
    /// Material both parties agreed to reveal at the end of the run.
    OutputReveal,
    /// Private data sent as is. Never acceptable.
    Raw { owner: Party },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldRecord {
    pub name: &'static str,
    /// Number of scalar entries in the field.
    pub entries: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub sender: Party,
    pub msg_type: MsgType,
    pub iteration: u32,
    pub fields: Vec<FieldRecord>,
}

impl TranscriptEntry {
    pub fn receiver(&self) -> Party {
        self.sender.peer()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    /// Interleaves two one-sided transcripts into session order.
    pub fn merge(a: &Transcript, b: &Transcript) -> Transcript {
        let mut entries: Vec<_> = a.entries.iter().chain(&b.entries).cloned().collect();
        entries.sort_by_key(|e| e.iteration);
        Transcript { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub msg_type: MsgType,
    pub iteration: u32,
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} iteration {} field {}: {}", self.msg_type, self.iteration, self.field, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub fields_checked: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Turns any violation into an exposure-violation error.
    pub fn into_result(self) -> Result<AuditReport> {
        match self.violations.first() {
            None => Ok(self),
            Some(v) => Err(Error::ExposureViolation(format!("{v} ({} violations)", self.violations.len()))),
        }
    }
}

/// Incremental classifier. Keeps the set of pads already seen so that a
/// pad appearing twice is caught at its second use.
#[derive(Debug, Clone, Default)]
pub struct Auditor {
    used_pads: HashSet<PadId>,
    fields_checked: usize,
}

impl Auditor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fields_checked(&self) -> usize {
        self.fields_checked
    }

    /// Classifies the fields of one message.
    pub fn check(&mut self, entry: &TranscriptEntry) -> Vec<Violation> {
        let receiver = entry.receiver();
        let mut violations = Vec::new();
        for field in &entry.fields {
            self.fields_checked += 1;
            let reason = match &field.provenance {
                Provenance::Public => None,
                Provenance::Encrypted { key_owner } if *key_owner == receiver => {
                    Some("encrypted under the receiver's own key".to_string())
                }
                Provenance::Encrypted { .. } => None,
                Provenance::Padded { pads } => {
                    let mut reason = None;
                    for pad in pads {
                        if !self.used_pads.insert(*pad) {
                            reason = Some(format!("pad {pad} reused"));
                        }
                    }
                    if reason.is_none() && !pads.iter().any(|p| p.owner != receiver) {
                        reason = Some("no pad unknown to the receiver".to_string());
                    }
                    reason
                }
                Provenance::OutputReveal if entry.msg_type == MsgType::RevealPad => None,
                Provenance::OutputReveal => Some("reveal outside the final exchange".to_string()),
                Provenance::Raw { owner } => Some(format!("unprotected private data of {owner}")),
            };
            if let Some(reason) = reason {
                violations.push(Violation {
                    msg_type: entry.msg_type,
                    iteration: entry.iteration,
                    field: field.name,
                    reason,
                });
            }
        }
        violations
    }
}

/// Classifies every field in the transcript.
pub fn audit_exposure(transcript: &Transcript) -> AuditReport {
    let mut auditor = Auditor::new();
    let violations = transcript.entries().iter().flat_map(|e| auditor.check(e)).collect();
    AuditReport { fields_checked: auditor.fields_checked(), violations }
}

/// Size of the linear system the receiver of the final reveal could set up
/// against the sender's private aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeakageCount {
    pub equations: usize,
    pub unknowns: usize,
}

/// Counts, from the transcript schema alone, what `observer` can relate to
/// the peer's data: the revealed θ gives one equation per entry; the
/// unknowns are the peer's encrypted Gram aggregates plus the hidden
/// previous iterate behind the last masked θ.
pub fn leakage_count(transcript: &Transcript, observer: Party) -> LeakageCount {
    let received = || transcript.entries().iter().filter(move |e| e.receiver() == observer);
    let aggregates: usize = received()
        .filter(|e| e.msg_type == MsgType::GramB || (observer == Party::Bob && e.msg_type == MsgType::GramA))
        .take(1)
        .flat_map(|e| &e.fields)
        .filter(|f| matches!(f.provenance, Provenance::Encrypted { key_owner } if key_owner != observer))
        .map(|f| f.entries)
        .sum();
    let previous_iterate = received()
        .rfind(|e| e.msg_type == MsgType::MaskedTheta)
        .map_or(0, |e| e.fields.iter().map(|f| f.entries).sum());
    let equations = received()
        .filter(|e| e.msg_type == MsgType::RevealPad)
        .flat_map(|e| &e.fields)
        .map(|f| f.entries)
        .sum();
    LeakageCount { equations, unknowns: aggregates + previous_iterate }
}
