//! The two-party gradient-descent protocol: parameters, pads, the two
//! state machines, the exposure audit and the driver that runs them.

pub mod alice;
pub mod audit;
pub mod bob;
pub mod driver;
pub mod pads;
pub mod params;
mod rational;
pub mod session;

pub use alice::{Alice, AlicePhase};
pub use audit::{audit_exposure, leakage_count, AuditReport, LeakageCount, Provenance, Transcript, Violation};
pub use bob::{Bob, BobPhase};
pub use driver::{run_alice, run_bob, run_local, PartySetup, RunReport};
pub use pads::{PadId, PadKind, PadLedger, PadMode, Party};
pub use params::{Bounds, CapacityPlan, ParamsProposal, PartyConfig, SessionParams, Theta0, DEFAULT_KAPPA};
pub use rational::ExactRational;
#[cfg(any(test, feature = "test-hooks"))]
pub use session::{InspectEvent, Inspector, TestHooks};
pub use session::{PartyOptions, PartyOutcome};
