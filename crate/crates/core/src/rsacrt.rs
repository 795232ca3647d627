//! RSA with Carmichael exponent and CRT decryption.
//!
//! Wraps the symmetric tuple `(R_n, PK_SK)` for one receiver. Textbook
//! RSA: no padding inside the wrap.

use std::time::Instant;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PUBLIC_EXPONENTS: [u32; 4] = [65_537, 257, 17, 3];
pub const FORCE_PRIMES_ENV: &str = "PVLT_RSA_FORCE_PRIMES";

const SMALL_PRIMES: [u32; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
/// Below this bound the first 13 primes are a complete witness set.
const DETERMINISTIC_BOUND: u128 = 3_317_044_064_679_887_385_961_981;
const RANDOM_ROUNDS: usize = 64;
const MAX_PRIME_ATTEMPTS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RsaError {
    #[error("unsupported key size {0} bits")]
    UnsupportedSize(u64),
    #[error("no prime found after {0} candidates")]
    PrimeGeneration(usize),
    #[error("{0} is not prime")]
    NotPrime(BigUint),
    #[error("p and q must differ")]
    EqualPrimes,
    #[error("no public exponent in {{65537, 257, 17, 3}} is coprime to lambda(n) and below phi(n)")]
    NoExponent,
    #[error("e = {0} is not a valid public exponent for this modulus")]
    BadExponent(BigUint),
    #[error("payload needs {need} bits, modulus has {have}")]
    PayloadTooLarge { need: u64, have: u64 },
    #[error("field of {0} bytes does not fit its length prefix")]
    FieldTooLong(usize),
    #[error("payload framing invalid: {0}")]
    Framing(&'static str),
    #[error("ciphertext not below the modulus")]
    CiphertextRange,
    #[error("bad {FORCE_PRIMES_ENV} value: {0}")]
    ForcedPrimes(String),
}

fn modinv(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let (a, m) = (BigInt::from(a.clone()), BigInt::from(m.clone()));
    let e = a.extended_gcd(&m);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m).to_biguint()
}

fn miller_rabin_round(n: &BigUint, d: &BigUint, s: u32, a: &BigUint) -> bool {
    let one = BigUint::one();
    let n1 = n - &one;
    let mut x = a.modpow(d, n);
    if x == one || x == n1 {
        return true;
    }
    for _ in 1..s {
        x = &x * &x % n;
        if x == n1 {
            return true;
        }
    }
    false
}

/// Trial division, then Miller-Rabin: a fixed witness set below 3.3e24,
/// otherwise 64 random bases.
pub fn is_probable_prime(n: &BigUint, rng: &mut dyn RngCore) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for p in SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    for p in (43u32..2000).step_by(2) {
        if (n % p).is_zero() {
            return n == &BigUint::from(p);
        }
    }
    let one = BigUint::one();
    let n1 = n - &one;
    let s = n1.trailing_zeros().unwrap_or(0) as u32;
    let d = &n1 >> s;
    let small = n.to_u128().is_some_and(|v| v < DETERMINISTIC_BOUND);
    if small {
        SMALL_PRIMES
            .iter()
            .all(|&a| miller_rabin_round(n, &d, s, &BigUint::from(a)))
    } else {
        let two = BigUint::from(2u32);
        (0..RANDOM_ROUNDS).all(|_| {
            let a = rng.gen_biguint_range(&two, &n1);
            miller_rabin_round(n, &d, s, &a)
        })
    }
}

/// A random prime of exactly `bits` bits with the top two bits set.
pub fn random_prime(bits: u64, rng: &mut dyn RngCore) -> Result<BigUint, RsaError> {
    for _ in 0..MAX_PRIME_ATTEMPTS {
        let mut c = rng.gen_biguint(bits);
        c.set_bit(bits - 1, true);
        c.set_bit(bits - 2, true);
        c.set_bit(0, true);
        if is_probable_prime(&c, rng) {
            return Ok(c);
        }
    }
    Err(RsaError::PrimeGeneration(MAX_PRIME_ATTEMPTS))
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaKeyPair {
    #[serde(with = "crate::bigdec")]
    pub p: BigUint,
    #[serde(with = "crate::bigdec")]
    pub q: BigUint,
    #[serde(with = "crate::bigdec")]
    pub n: BigUint,
    #[serde(with = "crate::bigdec")]
    pub e: BigUint,
    #[serde(with = "crate::bigdec")]
    pub d: BigUint,
    #[serde(with = "crate::bigdec")]
    pub d_p: BigUint,
    #[serde(with = "crate::bigdec")]
    pub d_q: BigUint,
    #[serde(with = "crate::bigdec")]
    pub q_inv: BigUint,
    #[serde(with = "crate::bigdec")]
    pub p_inv: BigUint,
}

impl std::fmt::Debug for RsaKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RsaKeyPair")
            .field("n_bits", &self.n.bits())
            .field("e", &self.e)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey {
    #[serde(with = "crate::bigdec")]
    pub n: BigUint,
    #[serde(with = "crate::bigdec")]
    pub e: BigUint,
}

impl RsaKeyPair {
    /// Primes of `bit_length / 2` bits each. Honors the forced-primes
    /// environment hook.
    pub fn generate(bit_length: u64, rng: &mut dyn RngCore) -> Result<Self, RsaError> {
        if let Some((p, q)) = forced_primes()? {
            return RsaKeyPair::from_primes(p, q);
        }
        if !matches!(bit_length, 64 | 512 | 1024 | 2048) {
            return Err(RsaError::UnsupportedSize(bit_length));
        }
        loop {
            let p = random_prime(bit_length / 2, rng)?;
            let q = random_prime(bit_length / 2, rng)?;
            if p == q {
                continue;
            }
            match RsaKeyPair::pick_exponent(&p, &q) {
                Err(RsaError::NoExponent) => continue,
                other => return other,
            }
        }
    }

    /// First exponent in {65537, 257, 17, 3} that is valid for `p*q`.
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self, RsaError> {
        check_primes(&p, &q)?;
        RsaKeyPair::pick_exponent(&p, &q)
    }

    pub fn from_primes_with_exponent(p: BigUint, q: BigUint, e: BigUint) -> Result<Self, RsaError> {
        check_primes(&p, &q)?;
        RsaKeyPair::assemble(p, q, e)
    }

    fn pick_exponent(p: &BigUint, q: &BigUint) -> Result<Self, RsaError> {
        for e in PUBLIC_EXPONENTS {
            match RsaKeyPair::assemble(p.clone(), q.clone(), BigUint::from(e)) {
                Err(RsaError::BadExponent(_)) => continue,
                other => return other,
            }
        }
        Err(RsaError::NoExponent)
    }

    fn assemble(p: BigUint, q: BigUint, e: BigUint) -> Result<Self, RsaError> {
        if p == q {
            return Err(RsaError::EqualPrimes);
        }
        let one = BigUint::one();
        let (p1, q1) = (&p - &one, &q - &one);
        let phi = &p1 * &q1;
        let lambda = p1.lcm(&q1);
        if e <= one || e >= phi {
            return Err(RsaError::BadExponent(e));
        }
        let d = modinv(&e, &lambda).ok_or_else(|| RsaError::BadExponent(e.clone()))?;
        let q_inv = modinv(&q, &p).ok_or(RsaError::EqualPrimes)?;
        let p_inv = modinv(&p, &q).ok_or(RsaError::EqualPrimes)?;
        Ok(RsaKeyPair {
            n: &p * &q,
            d_p: &d % &p1,
            d_q: &d % &q1,
            p,
            q,
            e,
            d,
            q_inv,
            p_inv,
        })
    }

    pub fn public(&self) -> PublicKey {
        PublicKey {
            n: self.n.clone(),
            e: self.e.clone(),
        }
    }

    pub fn lambda(&self) -> BigUint {
        let one = BigUint::one();
        (&self.p - &one).lcm(&(&self.q - &one))
    }

    /// Recompute every derived field from `p`, `q`, `e`.
    pub fn is_consistent(&self) -> bool {
        match RsaKeyPair::assemble(self.p.clone(), self.q.clone(), self.e.clone()) {
            Ok(k) => k == *self,
            Err(_) => false,
        }
    }

    /// `c^d mod n`.
    pub fn decrypt_plain(&self, c: &BigUint) -> BigUint {
        c.modpow(&self.d, &self.n)
    }

    /// `[X_p q q^-1 + X_q p p^-1] mod n` with `X_p = c^{d_p} mod p`,
    /// `X_q = c^{d_q} mod q`.
    pub fn decrypt_crt(&self, c: &BigUint) -> BigUint {
        let x_p = (c % &self.p).modpow(&self.d_p, &self.p);
        let x_q = (c % &self.q).modpow(&self.d_q, &self.q);
        (x_p * &self.q * &self.q_inv + x_q * &self.p * &self.p_inv) % &self.n
    }
}

impl PublicKey {
    pub fn encrypt(&self, m: &BigUint) -> BigUint {
        m.modpow(&self.e, &self.n)
    }
}

fn check_primes(p: &BigUint, q: &BigUint) -> Result<(), RsaError> {
    // Witnesses for large inputs come from a generator seeded by the inputs.
    let seed = crate::digest::fnv1a64(&[p.to_bytes_be(), q.to_bytes_be()].concat());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for v in [p, q] {
        if !is_probable_prime(v, &mut rng) {
            return Err(RsaError::NotPrime(v.clone()));
        }
    }
    Ok(())
}

fn forced_primes() -> Result<Option<(BigUint, BigUint)>, RsaError> {
    let Ok(v) = std::env::var(FORCE_PRIMES_ENV) else {
        return Ok(None);
    };
    let (p, q) = v
        .split_once(',')
        .ok_or_else(|| RsaError::ForcedPrimes(v.clone()))?;
    let p = crate::bigdec::parse(p).map_err(RsaError::ForcedPrimes)?;
    let q = crate::bigdec::parse(q).map_err(RsaError::ForcedPrimes)?;
    Ok(Some((p, q)))
}

fn push_field(out: &mut Vec<u8>, v: &BigUint, width: usize) -> Result<(), RsaError> {
    let bytes = v.to_bytes_be();
    let max = (1usize << (8 * width)) - 1;
    if bytes.len() > max {
        return Err(RsaError::FieldTooLong(bytes.len()));
    }
    out.extend_from_slice(&bytes.len().to_be_bytes()[std::mem::size_of::<usize>() - width..]);
    out.extend_from_slice(&bytes);
    Ok(())
}

/// `[len u8][r_n][len u16 BE][pk_sk]` read as a big-endian integer.
pub fn encode_payload(r_n: u32, pk_sk: &BigUint, n: &BigUint) -> Result<BigUint, RsaError> {
    let mut bytes = Vec::new();
    push_field(&mut bytes, &BigUint::from(r_n), 1)?;
    push_field(&mut bytes, pk_sk, 2)?;
    let m = BigUint::from_bytes_be(&bytes);
    if &m >= n {
        return Err(RsaError::PayloadTooLarge {
            need: m.bits(),
            have: n.bits(),
        });
    }
    Ok(m)
}

pub fn decode_payload(m: &BigUint) -> Result<(u32, BigUint), RsaError> {
    let bytes = m.to_bytes_be();
    let take = |at: usize, len: usize| -> Result<&[u8], RsaError> {
        bytes
            .get(at..at + len)
            .ok_or(RsaError::Framing("truncated"))
    };
    let r_len = usize::from(take(0, 1)?[0]);
    if r_len == 0 || r_len > 4 {
        return Err(RsaError::Framing("r_n length"));
    }
    let r_n = BigUint::from_bytes_be(take(1, r_len)?)
        .to_u32()
        .ok_or(RsaError::Framing("r_n width"))?;
    let at = 1 + r_len;
    let k = take(at, 2)?;
    let k_len = usize::from(u16::from_be_bytes([k[0], k[1]]));
    let pk = BigUint::from_bytes_be(take(at + 2, k_len)?);
    if at + 2 + k_len != bytes.len() {
        return Err(RsaError::Framing("trailing bytes"));
    }
    Ok((r_n, pk))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WrappedKey {
    #[serde(with = "crate::bigdec")]
    pub p_k: BigUint,
}

pub fn wrap(r_n: u32, pk_sk: &BigUint, public: &PublicKey) -> Result<WrappedKey, RsaError> {
    let m = encode_payload(r_n, pk_sk, &public.n)?;
    Ok(WrappedKey {
        p_k: public.encrypt(&m),
    })
}

pub fn unwrap_crt(wrapped: &WrappedKey, keypair: &RsaKeyPair) -> Result<(u32, BigUint), RsaError> {
    if wrapped.p_k >= keypair.n {
        return Err(RsaError::CiphertextRange);
    }
    decode_payload(&keypair.decrypt_crt(&wrapped.p_k))
}

/// Same as [`unwrap_crt`] through the direct exponent, for comparison.
pub fn unwrap_plain(wrapped: &WrappedKey, keypair: &RsaKeyPair) -> Result<(u32, BigUint), RsaError> {
    if wrapped.p_k >= keypair.n {
        return Err(RsaError::CiphertextRange);
    }
    decode_payload(&keypair.decrypt_plain(&wrapped.p_k))
}

/// Median wall time of CRT and plain decryption over `trials` random
/// ciphertexts, in seconds.
pub fn time_decryption(keypair: &RsaKeyPair, trials: usize, rng: &mut dyn RngCore) -> (f64, f64) {
    let mut crt = Vec::with_capacity(trials);
    let mut plain = Vec::with_capacity(trials);
    for _ in 0..trials {
        let c = rng.gen_biguint_below(&keypair.n);
        let t = Instant::now();
        let a = keypair.decrypt_crt(&c);
        crt.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let b = keypair.decrypt_plain(&c);
        plain.push(t.elapsed().as_secs_f64());
        assert_eq!(a, b);
    }
    (median(&mut crt), median(&mut plain))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}
