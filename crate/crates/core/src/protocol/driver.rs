//! Runs a party's state machine over a channel.

use std::thread;
use std::time::{Duration, Instant};

use super::alice::Alice;
use super::audit::{audit_exposure, AuditReport, Transcript};
use super::bob::Bob;
use super::session::{PartyOptions, PartyOutcome};
use super::params::PartyConfig;
use crate::error::{Error, Result};
use crate::oracle::Dataset;
use crate::transport::{in_process_pair, ByteMeter, Channel, ProtocolMessage};

trait Machine {
    fn start(&mut self) -> Result<()>;
    fn handle(&mut self, msg: ProtocolMessage) -> Result<()>;
    fn take_outbox(&mut self) -> Vec<ProtocolMessage>;
    fn is_done(&self) -> bool;
    fn outcome(&self) -> Result<PartyOutcome>;
}

macro_rules! machine {
    ($t:ty) => {
        impl Machine for $t {
            fn start(&mut self) -> Result<()> {
                <$t>::start(self)
            }
            fn handle(&mut self, msg: ProtocolMessage) -> Result<()> {
                <$t>::handle(self, msg)
            }
            fn take_outbox(&mut self) -> Vec<ProtocolMessage> {
                <$t>::take_outbox(self)
            }
            fn is_done(&self) -> bool {
                <$t>::is_done(self)
            }
            fn outcome(&self) -> Result<PartyOutcome> {
                <$t>::outcome(self)
            }
        }
    };
}

machine!(Bob);
machine!(Alice);

/// Flushes whatever the party queued, even when the step failed, so that
/// the peer sees the messages that preceded the failure.
fn flush<M: Machine, C: Channel>(party: &mut M, channel: &mut C, step: Result<()>) -> Result<()> {
    for msg in party.take_outbox() {
        channel.send(&msg)?;
    }
    step
}

fn drive<M: Machine, C: Channel>(party: &mut M, channel: &mut C) -> Result<PartyOutcome> {
    let step = party.start();
    flush(party, channel, step)?;
    while !party.is_done() {
        let msg = channel.recv()?;
        let step = party.handle(msg);
        flush(party, channel, step)?;
    }
    party.outcome()
}

pub fn run_bob<C: Channel>(config: PartyConfig, data: Dataset, options: PartyOptions, channel: &mut C) -> Result<PartyOutcome> {
    drive(&mut Bob::new(config, data, options), channel)
}

pub fn run_alice<C: Channel>(
    config: PartyConfig,
    data: Dataset,
    options: PartyOptions,
    channel: &mut C,
) -> Result<PartyOutcome> {
    drive(&mut Alice::new(config, data, options), channel)
}

/// Both sides of a finished in-process run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub bob: PartyOutcome,
    pub alice: PartyOutcome,
    /// Traffic in both directions.
    pub meter: ByteMeter,
    pub elapsed: Duration,
    pub audit: AuditReport,
}

impl RunReport {
    pub fn transcript(&self) -> Transcript {
        Transcript::merge(&self.bob.transcript, &self.alice.transcript)
    }
}

/// One side of a run as input to [`run_local`].
#[derive(Debug, Clone)]
pub struct PartySetup {
    pub config: PartyConfig,
    pub data: Dataset,
    pub options: PartyOptions,
}

/// Runs both parties on two threads over an in-process channel. The first
/// error from either side is returned; Bob's wins if both fail.
pub fn run_local(bob: PartySetup, alice: PartySetup, timeout: Duration) -> Result<RunReport> {
    let (mut bob_end, mut alice_end) = in_process_pair(timeout);
    let start = Instant::now();
    let alice_thread = thread::spawn(move || {
        let outcome = run_alice(alice.config, alice.data, alice.options, &mut alice_end);
        drop(alice_end);
        outcome
    });
    let bob_result = run_bob(bob.config, bob.data, bob.options, &mut bob_end);
    let meter = bob_end.meter().clone();
    drop(bob_end);
    let alice_result = alice_thread.join().map_err(|_| Error::ProtocolOrder("alice thread panicked".into()))?;
    let elapsed = start.elapsed();
    let (bob, alice) = match (bob_result, alice_result) {
        (Ok(b), Ok(a)) => (b, a),
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => return Err(e),
        (Err(b), Err(a)) => return Err(prefer_cause(b, a)),
    };
    let audit = audit_exposure(&Transcript::merge(&bob.transcript, &alice.transcript));
    Ok(RunReport { bob, alice, meter, elapsed, audit })
}

/// A closed channel on one side is usually the echo of a real failure on
/// the other.
fn prefer_cause(bob: Error, alice: Error) -> Error {
    match (&bob, &alice) {
        (Error::ChannelClosed | Error::Timeout, _) => alice,
        _ => bob,
    }
}
