//! `ppls`: run one party over TCP, both parties in process, the plaintext
//! oracle, or the cost-model benchmark.

mod bench;
mod config;
mod report;
mod roles;

use std::process::ExitCode;

use clap::Parser;
use ppls_core::Error;

use config::Args;

/// Process exit status for each failure class.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NegotiationFailure(_) => 3,
        Error::CapacityOverflow(_) => 4,
        Error::KeyTooSmall(_) => 5,
        Error::ChannelClosed | Error::Timeout => 6,
        Error::ExposureViolation(_) => 7,
        Error::CostModelViolation(_) => 8,
        Error::Parse { .. } | Error::Io(_) | Error::InvalidParameter(_) | Error::InvalidInput(_) => 9,
        Error::ProtocolOrder(_) | Error::UnexpectedMessage { .. } | Error::Frame { .. } => 10,
        Error::SingularSystem(_) | Error::Diverged(_) => 11,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match roles::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ppls: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
