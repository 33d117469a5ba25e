//! Framing, canonical serialization, byte accounting and channels.

pub mod channel;
pub mod codec;
pub mod meter;

use std::fmt;

pub use channel::{connect_tcp, in_process_pair, Channel, InProcessChannel, TcpChannel, DEFAULT_TIMEOUT};
pub use codec::{
    deserialize, serialize, CipherMatrix, CipherVector, Payload, ProtocolMessage, PublicKeyBody, RationalVector,
    RevealBody, SignedVector, HEADER_LEN, MAGIC, VERSION,
};
pub use meter::ByteMeter;

/// One-byte message tag in the frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    SetupParams = 0x01,
    PubkeyB = 0x02,
    PubkeyA = 0x03,
    GramB = 0x04,
    GramA = 0x05,
    MaskedGrad = 0x06,
    MaskedTheta = 0x07,
    SubEncProd = 0x08,
    SubPlainProd = 0x09,
    RevealPad = 0x0a,
}

impl MsgType {
    pub const ALL: [MsgType; 10] = [
        MsgType::SetupParams,
        MsgType::PubkeyB,
        MsgType::PubkeyA,
        MsgType::GramB,
        MsgType::GramA,
        MsgType::MaskedGrad,
        MsgType::MaskedTheta,
        MsgType::SubEncProd,
        MsgType::SubPlainProd,
        MsgType::RevealPad,
    ];

    pub fn from_tag(tag: u8) -> Option<MsgType> {
        Self::ALL.into_iter().find(|t| *t as u8 == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::SetupParams => "SETUP_PARAMS",
            MsgType::PubkeyB => "PUBKEY_B",
            MsgType::PubkeyA => "PUBKEY_A",
            MsgType::GramB => "GRAM_B",
            MsgType::GramA => "GRAM_A",
            MsgType::MaskedGrad => "MASKED_GRAD",
            MsgType::MaskedTheta => "MASKED_THETA",
            MsgType::SubEncProd => "SUB_ENC_PROD",
            MsgType::SubPlainProd => "SUB_PLAIN_PROD",
            MsgType::RevealPad => "REVEAL_PAD",
        }
    }

    /// Whether the message belongs to the per-iteration loop body.
    pub fn is_per_iteration(self) -> bool {
        matches!(
            self,
            MsgType::MaskedGrad
                | MsgType::GramA
                | MsgType::SubEncProd
                | MsgType::SubPlainProd
                | MsgType::MaskedTheta
        )
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
