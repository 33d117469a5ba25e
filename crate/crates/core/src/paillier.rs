//! Paillier additively homomorphic encryption.
//!
//! The generator is fixed to `g = N + 1`, so `g^m mod N^2 = 1 + mN` and
//! encryption costs a single modular exponentiation (`r^N mod N^2`).
//! Decryption uses the CRT split over `p^2` and `q^2`.
//!
//! Every operation bumps a counter in an explicitly passed [`OpCounters`], so
//! two parties running in one process keep separate accounts.

use std::fmt;
use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest key size accepted by [`keygen`]. Toy keys are for tests only.
pub const MIN_KEYBITS: u32 = 16;

/// Miller-Rabin rounds used for prime generation.
pub const MILLER_RABIN_ROUNDS: usize = 64;

/// Opaque identity of a public key (truncated SHA-256 of the modulus).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyId([u8; 8]);

impl KeyId {
    fn of_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut id = [0u8; 8];
        id.copy_from_slice(&digest[..8]);
        KeyId(id)
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    keybits: u32,
    n: BigUint,
    n_squared: BigUint,
    generator: BigUint,
    id: KeyId,
}

impl fmt::Debug for PaillierPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaillierPublicKey")
            .field("keybits", &self.keybits)
            .field("id", &self.id)
            .finish()
    }
}

/// Private half of a keypair. Holds the factorization and CRT material.
#[derive(Clone)]
pub struct PaillierPrivateKey {
    public: PaillierPublicKey,
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    p_minus_one: BigUint,
    q_minus_one: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
}

impl fmt::Debug for PaillierPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaillierPrivateKey")
            .field("public", &self.public.id)
            .finish_non_exhaustive()
    }
}

/// A Paillier ciphertext: an integer in `[0, N^2)` tagged with its key.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_id: KeyId,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({:?}, {} bits)", self.key_id, self.value.bits())
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }
}

/// Per-session operation counters: encryptions (E), decryptions (D),
/// add-plaintext-constant (AC), modular exponentiations (ME), modular
/// inversions (MI) and modular multiplications (MM).
#[derive(Debug, Default)]
pub struct OpCounters {
    e: AtomicU64,
    d: AtomicU64,
    ac: AtomicU64,
    me: AtomicU64,
    mi: AtomicU64,
    mm: AtomicU64,
}

/// A point-in-time copy of [`OpCounters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub e: u64,
    pub d: u64,
    pub ac: u64,
    pub me: u64,
    pub mi: u64,
    pub mm: u64,
}

impl OpCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            e: self.e.load(Ordering::Relaxed),
            d: self.d.load(Ordering::Relaxed),
            ac: self.ac.load(Ordering::Relaxed),
            me: self.me.load(Ordering::Relaxed),
            mi: self.mi.load(Ordering::Relaxed),
            mm: self.mm.load(Ordering::Relaxed),
        }
    }

    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            e: self.e - rhs.e,
            d: self.d - rhs.d,
            ac: self.ac - rhs.ac,
            me: self.me - rhs.me,
            mi: self.mi - rhs.mi,
            mm: self.mm - rhs.mm,
        }
    }
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "E={} D={} AC={} ME={} MI={} MM={}",
            self.e, self.d, self.ac, self.me, self.mi, self.mm
        )
    }
}

/// Generates a keypair whose modulus has exactly `keybits` bits.
pub fn keygen<R: RngCore + CryptoRng>(
    keybits: u32,
    rng: &mut R,
) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if keybits < MIN_KEYBITS {
        return Err(Error::InvalidParameter(format!(
            "keybits must be at least {MIN_KEYBITS}, got {keybits}"
        )));
    }
    let p_bits = keybits - keybits / 2;
    let q_bits = keybits / 2;
    loop {
        let p = random_prime(p_bits, rng);
        let q = random_prime(q_bits, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != u64::from(keybits) {
            continue;
        }
        // gcd(N, (p-1)(q-1)) = 1 holds for equal-size primes but is checked anyway.
        if let Ok(sk) = PaillierPrivateKey::from_primes_with_bits(p, q, keybits) {
            return Ok((sk.public.clone(), sk));
        }
    }
}

impl PaillierPrivateKey {
    /// Builds a keypair from caller-supplied primes.
    ///
    /// Exposed only with the `test-hooks` feature; production keys come from
    /// [`keygen`].
    #[cfg(any(test, feature = "test-hooks"))]
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self> {
        let bits = (&p * &q).bits() as u32;
        Self::from_primes_with_bits(p, q, bits)
    }

    fn from_primes_with_bits(p: BigUint, q: BigUint, keybits: u32) -> Result<Self> {
        let one = BigUint::one();
        if p <= one || q <= one || p == q {
            return Err(Error::InvalidParameter("primes must be distinct and > 1".into()));
        }
        let n = &p * &q;
        let p_minus_one = &p - &one;
        let q_minus_one = &q - &one;
        let phi = &p_minus_one * &q_minus_one;
        if !n.gcd(&phi).is_one() {
            return Err(Error::InvalidParameter("gcd(N, (p-1)(q-1)) != 1".into()));
        }
        let lambda = p_minus_one.lcm(&q_minus_one);
        let mu = lambda
            .modinv(&n)
            .ok_or_else(|| Error::InvalidParameter("lambda not invertible mod N".into()))?;

        let n_squared = &n * &n;
        let public = PaillierPublicKey {
            keybits,
            generator: &n + &one,
            id: KeyId::of_modulus(&n),
            n: n.clone(),
            n_squared,
        };

        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let hp = crt_h(&public.generator, &p, &p_squared, &p_minus_one)?;
        let hq = crt_h(&public.generator, &q, &q_squared, &q_minus_one)?;
        let q_inv_p = q
            .modinv(&p)
            .ok_or_else(|| Error::InvalidParameter("q not invertible mod p".into()))?;

        Ok(Self {
            public,
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            p_minus_one,
            q_minus_one,
            hp,
            hq,
            q_inv_p,
        })
    }

    pub fn public_key(&self) -> &PaillierPublicKey {
        &self.public
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    /// Decrypts `c`, returning the plaintext in `[0, N)`.
    pub fn decrypt(&self, c: &Ciphertext, counters: &OpCounters) -> Result<BigUint> {
        if c.key_id != self.public.id {
            return Err(Error::KeyMismatch);
        }
        self.public.check_ciphertext(c)?;
        OpCounters::bump(&counters.d);

        let mp = self.decrypt_mod_prime(&c.value, &self.p, &self.p_squared, &self.p_minus_one, &self.hp);
        let mq = self.decrypt_mod_prime(&c.value, &self.q, &self.q_squared, &self.q_minus_one, &self.hq);
        // m = mq + q * ((mp - mq) * q^-1 mod p)
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let h = (diff * &self.q_inv_p) % &self.p;
        Ok(mq + &self.q * h)
    }

    fn decrypt_mod_prime(
        &self,
        c: &BigUint,
        prime: &BigUint,
        prime_sq: &BigUint,
        prime_minus_one: &BigUint,
        h: &BigUint,
    ) -> BigUint {
        let x = (c % prime_sq).modpow(prime_minus_one, prime_sq);
        let l = (x - 1u32) / prime;
        (l * h) % prime
    }
}

fn crt_h(g: &BigUint, prime: &BigUint, prime_sq: &BigUint, prime_minus_one: &BigUint) -> Result<BigUint> {
    let x = (g % prime_sq).modpow(prime_minus_one, prime_sq);
    let l = (x - 1u32) / prime;
    l.modinv(prime)
        .ok_or_else(|| Error::InvalidParameter("CRT precomputation failed".into()))
}

impl PaillierPublicKey {
    /// Rebuilds a public key received from a peer.
    pub fn from_modulus(keybits: u32, n: BigUint) -> Result<Self> {
        if keybits < MIN_KEYBITS || n.bits() != u64::from(keybits) {
            return Err(Error::InvalidParameter(format!(
                "modulus has {} bits, declared {keybits}",
                n.bits()
            )));
        }
        if n.is_even() {
            return Err(Error::InvalidParameter("modulus must be odd".into()));
        }
        let one = BigUint::one();
        Ok(Self {
            keybits,
            n_squared: &n * &n,
            generator: &n + &one,
            id: KeyId::of_modulus(&n),
            n,
        })
    }

    pub fn keybits(&self) -> u32 {
        self.keybits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn generator(&self) -> &BigUint {
        &self.generator
    }

    pub fn id(&self) -> KeyId {
        self.id
    }

    /// Byte width of a ciphertext value on the wire (the length of `N^2`).
    pub fn ciphertext_width(&self) -> usize {
        (self.n_squared.bits() as usize).div_ceil(8)
    }

    /// Wraps a raw value received from the wire as a ciphertext under this key.
    pub fn ciphertext_from_value(&self, value: BigUint) -> Result<Ciphertext> {
        let c = Ciphertext { value, key_id: self.id };
        self.check_ciphertext(&c)?;
        Ok(c)
    }

    fn check_ciphertext(&self, c: &Ciphertext) -> Result<()> {
        if c.value >= self.n_squared {
            return Err(Error::MalformedCiphertext("value not below N^2".into()));
        }
        if !c.value.gcd(&self.n).is_one() {
            return Err(Error::MalformedCiphertext("value not coprime to N".into()));
        }
        Ok(())
    }

    fn check_key(&self, c: &Ciphertext) -> Result<()> {
        if c.key_id != self.id {
            return Err(Error::KeyMismatch);
        }
        Ok(())
    }

    /// Encrypts `m` in `[0, N)` with fresh randomness.
    pub fn encrypt<R: RngCore + CryptoRng>(
        &self,
        m: &BigUint,
        rng: &mut R,
        counters: &OpCounters,
    ) -> Result<Ciphertext> {
        if m >= &self.n {
            return Err(Error::PlaintextOutOfRange(format!(
                "plaintext has {} bits, modulus {} bits",
                m.bits(),
                self.n.bits()
            )));
        }
        OpCounters::bump(&counters.e);
        let r = self.random_unit(rng);
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext {
            value: (gm * rn) % &self.n_squared,
            key_id: self.id,
        })
    }

    fn random_unit<R: RngCore + CryptoRng>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// `E(m1) * E(m2) mod N^2`, an encryption of `m1 + m2 mod N`.
    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext, counters: &OpCounters) -> Result<Ciphertext> {
        self.check_key(c1)?;
        self.check_key(c2)?;
        OpCounters::bump(&counters.mm);
        Ok(Ciphertext {
            value: (&c1.value * &c2.value) % &self.n_squared,
            key_id: self.id,
        })
    }

    /// `E(m)^a mod N^2`, an encryption of `a * m mod N`. `a` is reduced mod N first.
    pub fn scalar_mul(&self, c: &Ciphertext, a: &BigUint, counters: &OpCounters) -> Result<Ciphertext> {
        self.check_key(c)?;
        OpCounters::bump(&counters.me);
        let exponent = a % &self.n;
        Ok(Ciphertext {
            value: c.value.modpow(&exponent, &self.n_squared),
            key_id: self.id,
        })
    }

    /// `E(m)^-1 mod N^2`, an encryption of `N - m mod N`.
    pub fn negate(&self, c: &Ciphertext, counters: &OpCounters) -> Result<Ciphertext> {
        self.check_key(c)?;
        let inv = c
            .value
            .modinv(&self.n_squared)
            .ok_or_else(|| Error::MalformedCiphertext("value not invertible mod N^2".into()))?;
        OpCounters::bump(&counters.mi);
        Ok(Ciphertext { value: inv, key_id: self.id })
    }

    /// Adds a plaintext constant: `E(m) * (1 + kN) mod N^2`, an encryption of `m + k mod N`.
    pub fn add_plain(&self, c: &Ciphertext, k: &BigUint, counters: &OpCounters) -> Result<Ciphertext> {
        self.check_key(c)?;
        OpCounters::bump(&counters.ac);
        let gk = (BigUint::one() + (k % &self.n) * &self.n) % &self.n_squared;
        Ok(Ciphertext {
            value: (&c.value * gk) % &self.n_squared,
            key_id: self.id,
        })
    }
}

/// Generates a random prime with exactly `bits` bits and its top two bits set.
fn random_prime<R: RngCore + CryptoRng>(bits: u32, rng: &mut R) -> BigUint {
    debug_assert!(bits >= 3);
    loop {
        let mut candidate = rng.gen_biguint(u64::from(bits));
        candidate.set_bit(u64::from(bits) - 1, true);
        candidate.set_bit(u64::from(bits) - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Trial division by small primes followed by `rounds` Miller-Rabin tests.
pub fn is_probable_prime<R: RngCore>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    if *n < BigUint::from(2u32) {
        return false;
    }
    // Every n below 257^2 with no factor up to 251 is prime.
    if *n < BigUint::from(257u32 * 257) {
        return true;
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let two = BigUint::from(2u32);

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
