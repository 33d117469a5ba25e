use std::fmt;

use crate::transport::MsgType;

/// Errors produced anywhere in the two-party least squares stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("plaintext out of range: {0}")]
    PlaintextOutOfRange(String),
    #[error("key mismatch: operands were produced under different public keys")]
    KeyMismatch,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("lossy rescale forbidden: target scale {target} is below current scale {current}")]
    LossyRescaleForbidden { current: u32, target: u32 },
    #[error("rescale direction: target scale {target} is above current scale {current}, use rescale_up")]
    RescaleUpRequired { current: u32, target: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("scale mismatch: expected {expected}, found {found}")]
    ScaleMismatch { expected: u32, found: u32 },
    #[error("negotiation failure: {0}")]
    NegotiationFailure(String),
    #[error("key too small: {0}")]
    KeyTooSmall(String),
    #[error("protocol order violation: {0}")]
    ProtocolOrder(String),
    #[error("capacity overflow: {0}")]
    CapacityOverflow(String),
    #[error("exposure violation: {0}")]
    ExposureViolation(String),
    #[error("frame error at byte {position}: {kind}")]
    Frame { position: usize, kind: FrameErrorKind },
    #[error("channel closed")]
    ChannelClosed,
    #[error("receive timed out")]
    Timeout,
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("gradient descent diverged at iteration {0}")]
    Diverged(u64),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cost model violation: {0}")]
    CostModelViolation(String),
    #[error("unexpected message: expected {expected:?}, got {got:?}")]
    UnexpectedMessage { expected: MsgType, got: MsgType },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What went wrong while decoding a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameErrorKind {
    BadMagic,
    BadVersion(u8),
    UnknownMsgType(u8),
    Truncated,
    TrailingBytes,
    LengthMismatch,
    NonCanonical(&'static str),
    Schema(&'static str),
}

impl fmt::Display for FrameErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameErrorKind::BadMagic => write!(f, "bad magic"),
            FrameErrorKind::BadVersion(v) => write!(f, "unsupported version {v}"),
            FrameErrorKind::UnknownMsgType(t) => write!(f, "unknown message type 0x{t:02x}"),
            FrameErrorKind::Truncated => write!(f, "truncated input"),
            FrameErrorKind::TrailingBytes => write!(f, "trailing bytes"),
            FrameErrorKind::LengthMismatch => write!(f, "payload length mismatch"),
            FrameErrorKind::NonCanonical(what) => write!(f, "non-canonical encoding: {what}"),
            FrameErrorKind::Schema(what) => write!(f, "schema mismatch: {what}"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
