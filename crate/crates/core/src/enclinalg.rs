//! Plaintext and encrypted matrices/vectors, and the homomorphic bulk
//! operations built from Paillier addition and plaintext-scalar
//! exponentiation. All layouts are row-major.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};
use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::paillier::{Ciphertext, KeyId, OpCounters, PaillierPrivateKey, PaillierPublicKey};

/// Dense integer matrix of fixed-point mantissas sharing one scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainMatrix {
    rows: usize,
    cols: usize,
    scale: u32,
    entries: Vec<BigInt>,
}

/// Integer vector of fixed-point mantissas sharing one scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainVector {
    scale: u32,
    entries: Vec<BigInt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncMatrix {
    rows: usize,
    cols: usize,
    scale: u32,
    key_id: KeyId,
    entries: Vec<Ciphertext>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncVector {
    scale: u32,
    key_id: KeyId,
    entries: Vec<Ciphertext>,
}

impl PlainMatrix {
    pub fn new(rows: usize, cols: usize, scale: u32, entries: Vec<BigInt>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("matrix dimensions must be positive".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self { rows, cols, scale, entries })
    }

    pub fn from_rows(rows: &[Vec<BigInt>], scale: u32) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, scale, rows.concat())
    }

    pub fn identity(n: usize, scale: u32) -> Self {
        let mut entries = vec![BigInt::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = BigInt::one();
        }
        Self { rows: n, cols: n, scale, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[BigInt] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Plain `M v`; the result scale is the sum of both scales.
    pub fn matvec(&self, v: &PlainVector) -> Result<PlainVector> {
        if self.cols != v.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times {}-vector",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let entries = (0..self.rows)
            .map(|i| self.row(i).iter().zip(&v.entries).map(|(a, b)| a * b).sum())
            .collect();
        PlainVector::new(self.scale + v.scale, entries)
    }

    pub fn checked_add(&self, other: &PlainMatrix) -> Result<PlainMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix sum".into()));
        }
        if self.scale != other.scale {
            return Err(Error::ScaleMismatch { expected: self.scale, found: other.scale });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        PlainMatrix::new(self.rows, self.cols, self.scale, entries)
    }
}

impl PlainVector {
    pub fn new(scale: u32, entries: Vec<BigInt>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::DimensionMismatch("vector dimension must be positive".into()));
        }
        Ok(Self { scale, entries })
    }

    pub fn zeros(n: usize, scale: u32) -> Self {
        Self { scale, entries: vec![BigInt::zero(); n] }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<BigInt> {
        self.entries
    }

    pub fn checked_add(&self, other: &PlainVector) -> Result<PlainVector> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &PlainVector) -> Result<PlainVector> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &PlainVector, f: impl Fn(&BigInt, &BigInt) -> BigInt) -> Result<PlainVector> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.dim(), other.dim())));
        }
        if self.scale != other.scale {
            return Err(Error::ScaleMismatch { expected: self.scale, found: other.scale });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect();
        PlainVector::new(self.scale, entries)
    }
}

impl EncMatrix {
    pub fn from_ciphertexts(rows: usize, cols: usize, scale: u32, entries: Vec<Ciphertext>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} encrypted matrix with {} entries",
                entries.len()
            )));
        }
        let key_id = entries[0].key_id();
        if entries.iter().any(|c| c.key_id() != key_id) {
            return Err(Error::KeyMismatch);
        }
        Ok(Self { rows, cols, scale, key_id, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn entries(&self) -> &[Ciphertext] {
        &self.entries
    }
}

impl EncVector {
    pub fn from_ciphertexts(scale: u32, entries: Vec<Ciphertext>) -> Result<Self> {
        let key_id = entries
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty encrypted vector".into()))?
            .key_id();
        if entries.iter().any(|c| c.key_id() != key_id) {
            return Err(Error::KeyMismatch);
        }
        Ok(Self { scale, key_id, entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn entries(&self) -> &[Ciphertext] {
        &self.entries
    }
}

/// Maps a signed value into `[0, N)`. Requires `|v| < N/2` so the centered
/// representative recovers it.
pub fn to_modular(v: &BigInt, pk: &PaillierPublicKey) -> Result<BigUint> {
    let n = pk.modulus();
    if v.magnitude() * 2u32 >= *n {
        return Err(Error::PlaintextOutOfRange(format!(
            "|value| has {} bits, exceeds half of the {}-bit modulus",
            v.magnitude().bits(),
            n.bits()
        )));
    }
    Ok(match v.sign() {
        Sign::Minus => n - v.magnitude(),
        _ => v.magnitude().clone(),
    })
}

/// Centered representative of `m` in `(-N/2, N/2]`.
pub fn from_modular(m: &BigUint, pk: &PaillierPublicKey) -> BigInt {
    let n = pk.modulus();
    if m * 2u32 > *n {
        -BigInt::from_biguint(Sign::Plus, n - m)
    } else {
        BigInt::from_biguint(Sign::Plus, m.clone())
    }
}

/// `XᵀX` at scale `2*s(X)` and `XᵀY` at scale `s(X) + s(Y)`, exactly.
pub fn gram(x: &PlainMatrix, y: &PlainVector) -> Result<(PlainMatrix, PlainVector)> {
    if x.rows() != y.dim() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, Y has {} entries",
            x.rows(),
            y.dim()
        )));
    }
    let n = x.cols();
    let mut xtx = vec![BigInt::zero(); n * n];
    let mut xty = vec![BigInt::zero(); n];
    for (r, y_r) in y.entries().iter().enumerate() {
        let row = x.row(r);
        for i in 0..n {
            if row[i].is_zero() {
                continue;
            }
            for j in i..n {
                xtx[i * n + j] += &row[i] * &row[j];
            }
            xty[i] += &row[i] * y_r;
        }
    }
    for i in 0..n {
        for j in 0..i {
            xtx[i * n + j] = xtx[j * n + i].clone();
        }
    }
    Ok((
        PlainMatrix::new(n, n, 2 * x.scale(), xtx)?,
        PlainVector::new(x.scale() + y.scale(), xty)?,
    ))
}

pub fn enc_matrix<R: RngCore + CryptoRng>(
    pk: &PaillierPublicKey,
    m: &PlainMatrix,
    rng: &mut R,
    counters: &OpCounters,
) -> Result<EncMatrix> {
    let entries = encrypt_all(pk, m.entries(), rng, counters)?;
    EncMatrix::from_ciphertexts(m.rows(), m.cols(), m.scale(), entries)
}

pub fn enc_vector<R: RngCore + CryptoRng>(
    pk: &PaillierPublicKey,
    v: &PlainVector,
    rng: &mut R,
    counters: &OpCounters,
) -> Result<EncVector> {
    let entries = encrypt_all(pk, v.entries(), rng, counters)?;
    EncVector::from_ciphertexts(v.scale(), entries)
}

fn encrypt_all<R: RngCore + CryptoRng>(
    pk: &PaillierPublicKey,
    values: &[BigInt],
    rng: &mut R,
    counters: &OpCounters,
) -> Result<Vec<Ciphertext>> {
    values
        .iter()
        .map(|v| pk.encrypt(&to_modular(v, pk)?, rng, counters))
        .collect()
}

pub fn dec_matrix(sk: &PaillierPrivateKey, m: &EncMatrix, counters: &OpCounters) -> Result<PlainMatrix> {
    let entries = decrypt_all(sk, m.entries(), counters)?;
    PlainMatrix::new(m.rows(), m.cols(), m.scale(), entries)
}

pub fn dec_vector(sk: &PaillierPrivateKey, v: &EncVector, counters: &OpCounters) -> Result<PlainVector> {
    let entries = decrypt_all(sk, v.entries(), counters)?;
    PlainVector::new(v.scale(), entries)
}

fn decrypt_all(sk: &PaillierPrivateKey, cts: &[Ciphertext], counters: &OpCounters) -> Result<Vec<BigInt>> {
    let pk = sk.public_key();
    cts.iter()
        .map(|c| Ok(from_modular(&sk.decrypt(c, counters)?, pk)))
        .collect()
}

fn check_same_key(pk: &PaillierPublicKey, key_id: KeyId) -> Result<()> {
    if pk.id() != key_id {
        return Err(Error::KeyMismatch);
    }
    Ok(())
}

/// Entrywise homomorphic sum of two encrypted matrices.
pub fn enc_add(pk: &PaillierPublicKey, a: &EncMatrix, b: &EncMatrix, counters: &OpCounters) -> Result<EncMatrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} + {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if a.scale != b.scale {
        return Err(Error::ScaleMismatch { expected: a.scale, found: b.scale });
    }
    check_same_key(pk, a.key_id)?;
    check_same_key(pk, b.key_id)?;
    let entries = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| pk.add(x, y, counters))
        .collect::<Result<Vec<_>>>()?;
    EncMatrix::from_ciphertexts(a.rows, a.cols, a.scale, entries)
}

/// Entrywise homomorphic sum of two encrypted vectors.
pub fn enc_add_vec(pk: &PaillierPublicKey, a: &EncVector, b: &EncVector, counters: &OpCounters) -> Result<EncVector> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{} + {}", a.dim(), b.dim())));
    }
    if a.scale != b.scale {
        return Err(Error::ScaleMismatch { expected: a.scale, found: b.scale });
    }
    check_same_key(pk, a.key_id)?;
    check_same_key(pk, b.key_id)?;
    let entries = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| pk.add(x, y, counters))
        .collect::<Result<Vec<_>>>()?;
    EncVector::from_ciphertexts(a.scale, entries)
}

/// Entrywise homomorphic negation.
pub fn enc_negate_vec(pk: &PaillierPublicKey, a: &EncVector, counters: &OpCounters) -> Result<EncVector> {
    check_same_key(pk, a.key_id)?;
    let entries = a
        .entries
        .iter()
        .map(|c| pk.negate(c, counters))
        .collect::<Result<Vec<_>>>()?;
    EncVector::from_ciphertexts(a.scale, entries)
}

/// Encrypted matrix times plaintext vector.
///
/// Each row seeds its sum with the first term, so an `n x n` product costs
/// `n^2` ME and `n(n-1)` MM whatever the entries of `v`.
pub fn enc_matvec(pk: &PaillierPublicKey, a: &EncMatrix, v: &PlainVector, counters: &OpCounters) -> Result<EncVector> {
    if a.cols != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} encrypted matrix times {}-vector",
            a.rows,
            a.cols,
            v.dim()
        )));
    }
    check_same_key(pk, a.key_id)?;
    let scalars = v
        .entries()
        .iter()
        .map(|x| to_modular(x, pk))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(a.rows);
    for i in 0..a.rows {
        let mut acc: Option<Ciphertext> = None;
        for (j, scalar) in scalars.iter().enumerate() {
            let term = pk.scalar_mul(&a.entries[i * a.cols + j], scalar, counters)?;
            acc = Some(match acc {
                None => term,
                Some(sum) => pk.add(&sum, &term, counters)?,
            });
        }
        out.push(acc.expect("matrix has at least one column"));
    }
    EncVector::from_ciphertexts(a.scale + v.scale(), out)
}

/// True when `v` is representable under `pk` with the centered convention.
pub fn fits_centered(v: &BigInt, pk: &PaillierPublicKey) -> bool {
    v.abs().magnitude() * 2u32 < *pk.modulus()
}
