//! Canonical big-endian encoding of protocol messages.
//!
//! Every message has exactly one valid byte encoding. Integers inside a
//! vector share a declared byte width, so the size of a message depends only
//! on its dimensions and widths, never on the values it carries.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};

use super::MsgType;
use crate::error::{Error, FrameErrorKind, Result};
use crate::fixedpoint::ScaledInt;
use crate::protocol::{ExactRational, ParamsProposal, SessionParams};

pub const MAGIC: [u8; 4] = *b"PPLS";
pub const VERSION: u8 = 1;
/// magic + version + session id + type + iteration + payload length.
pub const HEADER_LEN: usize = 4 + 1 + 16 + 1 + 4 + 4;
/// Largest payload a reader will accept.
pub const MAX_PAYLOAD: u32 = 1 << 28;

/// Ciphertext values at a fixed byte width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherVector {
    pub scale: u32,
    pub width: u32,
    pub values: Vec<BigUint>,
}

/// Row-major ciphertext values at a fixed byte width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherMatrix {
    pub rows: u32,
    pub cols: u32,
    pub scale: u32,
    pub width: u32,
    pub values: Vec<BigUint>,
}

/// Signed plaintext mantissas: sign byte plus fixed-width magnitude each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedVector {
    pub scale: u32,
    pub width: u32,
    pub values: Vec<BigInt>,
}

/// Rationals `numerators[i] / denominator` in mantissa units of `scale`.
/// The denominator is shared and need not be in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalVector {
    pub scale: u32,
    pub width: u32,
    pub denominator: BigInt,
    pub numerators: Vec<BigInt>,
}

impl RationalVector {
    pub fn to_rationals(&self) -> Vec<ExactRational> {
        self.numerators
            .iter()
            .map(|n| ExactRational::new(n.clone(), self.denominator.clone()).expect("denominator checked positive"))
            .collect()
    }

    /// Expresses `values` over `denominator`. Fails if some value's
    /// denominator does not divide it.
    pub fn from_rationals(scale: u32, width: u32, denominator: &BigInt, values: &[ExactRational]) -> Result<Self> {
        let numerators = values
            .iter()
            .map(|v| {
                let (q, r) = denominator.div_rem(v.denom());
                if !r.is_zero() {
                    return Err(Error::InvalidInput(format!("{v} is not a multiple of 1/{denominator}")));
                }
                Ok(v.numer() * q)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scale, width, denominator: denominator.clone(), numerators })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKeyBody {
    pub keybits: u32,
    pub modulus: BigUint,
    /// SHA-256 of the negotiated session parameters.
    pub params_digest: [u8; 32],
}

/// Final reveal: Bob publishes his last θ pad, Alice her accumulated mask term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevealBody {
    Pad(SignedVector),
    Accumulator(RationalVector),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    SetupParams(ParamsProposal),
    PubkeyB(PublicKeyBody),
    PubkeyA(PublicKeyBody),
    GramB { gram: CipherMatrix, xty: CipherVector },
    GramA(CipherMatrix),
    MaskedGrad(CipherVector),
    MaskedTheta(RationalVector),
    SubEncProd(CipherVector),
    SubPlainProd(SignedVector),
    RevealPad(RevealBody),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub session_id: [u8; 16],
    pub iteration: u32,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn msg_type(&self) -> MsgType {
        match &self.payload {
            Payload::SetupParams(_) => MsgType::SetupParams,
            Payload::PubkeyB(_) => MsgType::PubkeyB,
            Payload::PubkeyA(_) => MsgType::PubkeyA,
            Payload::GramB { .. } => MsgType::GramB,
            Payload::GramA(_) => MsgType::GramA,
            Payload::MaskedGrad(_) => MsgType::MaskedGrad,
            Payload::MaskedTheta(_) => MsgType::MaskedTheta,
            Payload::SubEncProd(_) => MsgType::SubEncProd,
            Payload::SubPlainProd(_) => MsgType::SubPlainProd,
            Payload::RevealPad(_) => MsgType::RevealPad,
        }
    }
}

// ---------------------------------------------------------------- writing

fn unencodable(what: impl Into<String>) -> Error {
    Error::InvalidInput(format!("cannot encode: {}", what.into()))
}

fn put_u16(out: &mut Vec<u8>, v: u32) -> Result<()> {
    let v = u16::try_from(v).map_err(|_| unencodable(format!("{v} does not fit in 2 bytes")))?;
    out.extend_from_slice(&v.to_be_bytes());
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_len(out: &mut Vec<u8>, len: usize) -> Result<()> {
    let len = u32::try_from(len).map_err(|_| unencodable("length exceeds 4 bytes"))?;
    put_u32(out, len);
    Ok(())
}

fn minimal_bytes(v: &BigUint) -> Vec<u8> {
    if v.is_zero() {
        Vec::new()
    } else {
        v.to_bytes_be()
    }
}

/// 4-byte length, then the minimal big-endian magnitude (empty for zero).
fn put_var_uint(out: &mut Vec<u8>, v: &BigUint) -> Result<()> {
    let bytes = minimal_bytes(v);
    put_len(out, bytes.len())?;
    out.extend_from_slice(&bytes);
    Ok(())
}

fn sign_byte(v: &BigInt) -> u8 {
    u8::from(v.sign() == Sign::Minus)
}

fn put_var_int(out: &mut Vec<u8>, v: &BigInt) -> Result<()> {
    out.push(sign_byte(v));
    put_var_uint(out, v.magnitude())
}

fn put_fixed_uint(out: &mut Vec<u8>, v: &BigUint, width: u32) -> Result<()> {
    let bytes = minimal_bytes(v);
    let width = width as usize;
    if bytes.len() > width {
        return Err(unencodable(format!("{} bytes exceed width {width}", bytes.len())));
    }
    out.resize(out.len() + width - bytes.len(), 0);
    out.extend_from_slice(&bytes);
    Ok(())
}

fn put_fixed_int(out: &mut Vec<u8>, v: &BigInt, width: u32) -> Result<()> {
    out.push(sign_byte(v));
    put_fixed_uint(out, v.magnitude(), width)
}

fn check_width(width: u32) -> Result<()> {
    if width == 0 {
        return Err(unencodable("zero width"));
    }
    Ok(())
}

fn put_scaled(out: &mut Vec<u8>, v: &ScaledInt) -> Result<()> {
    put_u16(out, v.scale())?;
    put_var_int(out, v.mantissa())
}

fn put_rational(out: &mut Vec<u8>, v: &ExactRational) -> Result<()> {
    put_var_int(out, v.numer())?;
    put_var_uint(out, v.denom().magnitude())
}

fn put_cipher_vector(out: &mut Vec<u8>, v: &CipherVector) -> Result<()> {
    if v.values.is_empty() {
        return Err(unencodable("empty vector"));
    }
    check_width(v.width)?;
    put_len(out, v.values.len())?;
    put_u16(out, v.scale)?;
    put_u32(out, v.width);
    for c in &v.values {
        put_fixed_uint(out, c, v.width)?;
    }
    Ok(())
}

fn put_cipher_matrix(out: &mut Vec<u8>, m: &CipherMatrix) -> Result<()> {
    if m.rows == 0 || m.cols == 0 || m.values.len() as u64 != u64::from(m.rows) * u64::from(m.cols) {
        return Err(unencodable("matrix dimensions disagree with entry count"));
    }
    check_width(m.width)?;
    put_u32(out, m.rows);
    put_u32(out, m.cols);
    put_u16(out, m.scale)?;
    put_u32(out, m.width);
    for c in &m.values {
        put_fixed_uint(out, c, m.width)?;
    }
    Ok(())
}

fn put_signed_vector(out: &mut Vec<u8>, v: &SignedVector) -> Result<()> {
    if v.values.is_empty() {
        return Err(unencodable("empty vector"));
    }
    check_width(v.width)?;
    put_len(out, v.values.len())?;
    put_u16(out, v.scale)?;
    put_u32(out, v.width);
    for x in &v.values {
        put_fixed_int(out, x, v.width)?;
    }
    Ok(())
}

fn put_rational_vector(out: &mut Vec<u8>, v: &RationalVector) -> Result<()> {
    if v.numerators.is_empty() {
        return Err(unencodable("empty vector"));
    }
    if v.denominator.sign() != Sign::Plus {
        return Err(unencodable("denominator must be positive"));
    }
    check_width(v.width)?;
    put_len(out, v.numerators.len())?;
    put_u16(out, v.scale)?;
    put_u32(out, v.width);
    put_fixed_uint(out, v.denominator.magnitude(), v.width)?;
    for x in &v.numerators {
        put_fixed_int(out, x, v.width)?;
    }
    Ok(())
}

fn put_public_key(out: &mut Vec<u8>, k: &PublicKeyBody) -> Result<()> {
    put_u32(out, k.keybits);
    put_var_uint(out, &k.modulus)?;
    out.extend_from_slice(&k.params_digest);
    Ok(())
}

fn put_proposal(out: &mut Vec<u8>, p: &ParamsProposal) -> Result<()> {
    put_rational(out, &p.alpha)?;
    put_u32(out, p.iterations);
    put_u16(out, p.s1)?;
    put_u16(out, p.s2)?;
    put_u32(out, p.kappa);
    put_u32(out, p.keybits);
    put_u32(out, p.n);
    put_u32(out, p.local_m);
    put_scaled(out, &p.bound_x)?;
    put_scaled(out, &p.bound_y)?;
    put_scaled(out, &p.bound_theta)?;
    put_len(out, p.theta0.len())?;
    for t in &p.theta0 {
        put_scaled(out, t)?;
    }
    Ok(())
}

const REVEAL_PAD: u8 = 0;
const REVEAL_ACCUMULATOR: u8 = 1;

fn put_payload(out: &mut Vec<u8>, payload: &Payload) -> Result<()> {
    match payload {
        Payload::SetupParams(p) => put_proposal(out, p),
        Payload::PubkeyB(k) | Payload::PubkeyA(k) => put_public_key(out, k),
        Payload::GramB { gram, xty } => {
            put_cipher_matrix(out, gram)?;
            put_cipher_vector(out, xty)
        }
        Payload::GramA(m) => put_cipher_matrix(out, m),
        Payload::MaskedGrad(v) | Payload::SubEncProd(v) => put_cipher_vector(out, v),
        Payload::MaskedTheta(v) => put_rational_vector(out, v),
        Payload::SubPlainProd(v) => put_signed_vector(out, v),
        Payload::RevealPad(RevealBody::Pad(v)) => {
            out.push(REVEAL_PAD);
            put_signed_vector(out, v)
        }
        Payload::RevealPad(RevealBody::Accumulator(v)) => {
            out.push(REVEAL_ACCUMULATOR);
            put_rational_vector(out, v)
        }
    }
}

/// Encodes a message as one frame.
pub fn serialize(msg: &ProtocolMessage) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    put_payload(&mut payload, &msg.payload)?;
    let len = u32::try_from(payload.len()).ok().filter(|&l| l <= MAX_PAYLOAD);
    let len = len.ok_or_else(|| unencodable("payload too large"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&msg.session_id);
    out.push(msg.msg_type() as u8);
    put_u32(&mut out, msg.iteration);
    put_u32(&mut out, len);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Canonical encoding of every negotiated parameter, used for the digest
/// both parties compare during setup.
pub fn write_session_params(out: &mut Vec<u8>, p: &SessionParams) {
    out.extend_from_slice(b"PPLS-PARAMS-1");
    // Rationals and big integers are infallible to encode; scales were
    // range-checked when the proposals were decoded or built.
    let _ = put_rational(out, &p.alpha);
    put_u32(out, p.iterations);
    put_u32(out, p.scale_plan.s1());
    put_u32(out, p.scale_plan.s2());
    put_u32(out, p.kappa);
    put_u32(out, p.keybits);
    put_u32(out, p.m1);
    put_u32(out, p.m2);
    put_u32(out, p.n);
    for b in [&p.bounds.x, &p.bounds.y, &p.bounds.theta] {
        let _ = put_rational(out, b);
    }
    put_u32(out, p.theta0.scale());
    for t in p.theta0.entries() {
        let _ = put_var_int(out, t);
    }
}

// ---------------------------------------------------------------- reading

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Offset of `bytes[0]` within the whole frame, for error positions.
    base: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], base: usize) -> Self {
        Self { bytes, pos: 0, base }
    }

    fn err(&self, kind: FrameErrorKind) -> Error {
        Error::Frame { position: self.base + self.pos, kind }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.err(FrameErrorKind::Truncated));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u32> {
        let b = self.take(2)?;
        Ok(u32::from(u16::from_be_bytes([b[0], b[1]])))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn sign(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => {
                self.pos -= 1;
                Err(self.err(FrameErrorKind::NonCanonical("sign byte must be 0 or 1")))
            }
        }
    }

    fn var_uint(&mut self) -> Result<BigUint> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let bytes = self.take(len)?;
        if bytes.first() == Some(&0) {
            self.pos = start;
            return Err(self.err(FrameErrorKind::NonCanonical("leading zero byte")));
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    fn signed(&mut self, negative: bool, magnitude: BigUint) -> Result<BigInt> {
        if negative && magnitude.is_zero() {
            return Err(self.err(FrameErrorKind::NonCanonical("negative zero")));
        }
        Ok(BigInt::from_biguint(if negative { Sign::Minus } else { Sign::Plus }, magnitude))
    }

    fn var_int(&mut self) -> Result<BigInt> {
        let negative = self.sign()?;
        let magnitude = self.var_uint()?;
        self.signed(negative, magnitude)
    }

    fn fixed_uint(&mut self, width: u32) -> Result<BigUint> {
        Ok(BigUint::from_bytes_be(self.take(width as usize)?))
    }

    fn fixed_int(&mut self, width: u32) -> Result<BigInt> {
        let negative = self.sign()?;
        let magnitude = self.fixed_uint(width)?;
        self.signed(negative, magnitude)
    }

    /// Reads a non-zero element count. Callers bound it against the
    /// remaining input before allocating.
    fn count(&mut self) -> Result<usize> {
        let n = self.u32()?;
        if n == 0 {
            self.pos -= 4;
            return Err(self.err(FrameErrorKind::Schema("empty vector")));
        }
        Ok(n as usize)
    }

    fn width(&mut self) -> Result<u32> {
        let w = self.u32()?;
        if w == 0 {
            self.pos -= 4;
            return Err(self.err(FrameErrorKind::Schema("zero width")));
        }
        Ok(w)
    }

    fn scaled(&mut self) -> Result<ScaledInt> {
        let scale = self.u16()?;
        Ok(ScaledInt::new(self.var_int()?, scale))
    }

    fn rational(&mut self) -> Result<ExactRational> {
        let numer = self.var_int()?;
        let denom = BigInt::from(self.var_uint()?);
        if denom.is_zero() {
            return Err(self.err(FrameErrorKind::Schema("zero denominator")));
        }
        if !numer.gcd(&denom).is_one() {
            return Err(self.err(FrameErrorKind::NonCanonical("rational not in lowest terms")));
        }
        ExactRational::new(numer, denom).map_err(|_| self.err(FrameErrorKind::Schema("bad rational")))
    }

    fn cipher_vector(&mut self) -> Result<CipherVector> {
        let (count, scale, width) = self.vector_header(0)?;
        let values = (0..count).map(|_| self.fixed_uint(width)).collect::<Result<Vec<_>>>()?;
        Ok(CipherVector { scale, width, values })
    }

    fn cipher_matrix(&mut self) -> Result<CipherMatrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        if rows == 0 || cols == 0 {
            self.pos -= 8;
            return Err(self.err(FrameErrorKind::Schema("empty matrix")));
        }
        let scale = self.u16()?;
        let width = self.width()?;
        let count = u64::from(rows) * u64::from(cols);
        if count * u64::from(width) > self.remaining() as u64 {
            return Err(self.err(FrameErrorKind::Truncated));
        }
        let values = (0..count).map(|_| self.fixed_uint(width)).collect::<Result<Vec<_>>>()?;
        Ok(CipherMatrix { rows, cols, scale, width, values })
    }

    /// Header of a vector whose entries are `width + extra` bytes each.
    fn vector_header(&mut self, extra: u64) -> Result<(usize, u32, u32)> {
        let count = self.count()?;
        let scale = self.u16()?;
        let width = self.width()?;
        if (count as u64) * (u64::from(width) + extra) > self.remaining() as u64 {
            return Err(self.err(FrameErrorKind::Truncated));
        }
        Ok((count, scale, width))
    }

    fn signed_vector(&mut self) -> Result<SignedVector> {
        let (count, scale, width) = self.vector_header(1)?;
        let values = (0..count).map(|_| self.fixed_int(width)).collect::<Result<Vec<_>>>()?;
        Ok(SignedVector { scale, width, values })
    }

    fn rational_vector(&mut self) -> Result<RationalVector> {
        let (count, scale, width) = self.vector_header(1)?;
        let denominator = BigInt::from(self.fixed_uint(width)?);
        if denominator.is_zero() {
            return Err(self.err(FrameErrorKind::Schema("zero denominator")));
        }
        let numerators = (0..count).map(|_| self.fixed_int(width)).collect::<Result<Vec<_>>>()?;
        Ok(RationalVector { scale, width, denominator, numerators })
    }

    fn public_key(&mut self) -> Result<PublicKeyBody> {
        let keybits = self.u32()?;
        let modulus = self.var_uint()?;
        let mut params_digest = [0u8; 32];
        params_digest.copy_from_slice(self.take(32)?);
        Ok(PublicKeyBody { keybits, modulus, params_digest })
    }

    fn proposal(&mut self) -> Result<ParamsProposal> {
        let alpha = self.rational()?;
        let iterations = self.u32()?;
        let s1 = self.u16()?;
        let s2 = self.u16()?;
        let kappa = self.u32()?;
        let keybits = self.u32()?;
        let n = self.u32()?;
        let local_m = self.u32()?;
        let bound_x = self.scaled()?;
        let bound_y = self.scaled()?;
        let bound_theta = self.scaled()?;
        let count = self.u32()?;
        // Each entry takes at least 7 bytes.
        if u64::from(count) * 7 > self.remaining() as u64 {
            return Err(self.err(FrameErrorKind::Truncated));
        }
        let theta0 = (0..count).map(|_| self.scaled()).collect::<Result<Vec<_>>>()?;
        Ok(ParamsProposal {
            alpha,
            iterations,
            s1,
            s2,
            kappa,
            keybits,
            n,
            local_m,
            bound_x,
            bound_y,
            bound_theta,
            theta0,
        })
    }

    fn payload(&mut self, msg_type: MsgType) -> Result<Payload> {
        Ok(match msg_type {
            MsgType::SetupParams => Payload::SetupParams(self.proposal()?),
            MsgType::PubkeyB => Payload::PubkeyB(self.public_key()?),
            MsgType::PubkeyA => Payload::PubkeyA(self.public_key()?),
            MsgType::GramB => {
                let gram = self.cipher_matrix()?;
                let xty = self.cipher_vector()?;
                Payload::GramB { gram, xty }
            }
            MsgType::GramA => Payload::GramA(self.cipher_matrix()?),
            MsgType::MaskedGrad => Payload::MaskedGrad(self.cipher_vector()?),
            MsgType::MaskedTheta => Payload::MaskedTheta(self.rational_vector()?),
            MsgType::SubEncProd => Payload::SubEncProd(self.cipher_vector()?),
            MsgType::SubPlainProd => Payload::SubPlainProd(self.signed_vector()?),
            MsgType::RevealPad => match self.u8()? {
                REVEAL_PAD => Payload::RevealPad(RevealBody::Pad(self.signed_vector()?)),
                REVEAL_ACCUMULATOR => Payload::RevealPad(RevealBody::Accumulator(self.rational_vector()?)),
                _ => {
                    self.pos -= 1;
                    return Err(self.err(FrameErrorKind::Schema("unknown reveal variant")));
                }
            },
        })
    }
}

/// Parsed frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub session_id: [u8; 16],
    pub msg_type: MsgType,
    pub iteration: u32,
    pub payload_len: u32,
}

pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader> {
    let mut r = Reader::new(bytes, 0);
    if r.take(4)? != MAGIC {
        return Err(Error::Frame { position: 0, kind: FrameErrorKind::BadMagic });
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Frame { position: 4, kind: FrameErrorKind::BadVersion(version) });
    }
    let mut session_id = [0u8; 16];
    session_id.copy_from_slice(r.take(16)?);
    let tag = r.u8()?;
    let msg_type = MsgType::from_tag(tag)
        .ok_or(Error::Frame { position: 21, kind: FrameErrorKind::UnknownMsgType(tag) })?;
    let iteration = r.u32()?;
    let payload_len = r.u32()?;
    if payload_len > MAX_PAYLOAD {
        return Err(Error::Frame { position: 26, kind: FrameErrorKind::LengthMismatch });
    }
    Ok(FrameHeader { session_id, msg_type, iteration, payload_len })
}

pub fn decode_payload(header: &FrameHeader, payload: &[u8]) -> Result<ProtocolMessage> {
    let mut r = Reader::new(payload, HEADER_LEN);
    let body = r.payload(header.msg_type)?;
    if r.remaining() != 0 {
        return Err(r.err(FrameErrorKind::TrailingBytes));
    }
    Ok(ProtocolMessage { session_id: header.session_id, iteration: header.iteration, payload: body })
}

/// Decodes exactly one frame. Every input either yields a message or a
/// frame error carrying the byte offset of the problem.
pub fn deserialize(bytes: &[u8]) -> Result<ProtocolMessage> {
    let header = decode_header(bytes)?;
    let end = HEADER_LEN as u64 + u64::from(header.payload_len);
    if (bytes.len() as u64) < end {
        return Err(Error::Frame { position: bytes.len(), kind: FrameErrorKind::Truncated });
    }
    if (bytes.len() as u64) > end {
        return Err(Error::Frame { position: end as usize, kind: FrameErrorKind::TrailingBytes });
    }
    decode_payload(&header, &bytes[HEADER_LEN..])
}
