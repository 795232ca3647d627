//! Involution function based stream cipher.
//!
//! A byte symbol `x` maps to `f(x) = (pk_sk - x^(1/r_n))^r_n`. Applying `f`
//! again returns `x`. Ciphertext elements are non-negative reals held as
//! fixed-point decimals with `F` fractional digits.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::fnv1a64;
use crate::prng::{KmGenerator, PrngConfig, PrngError};

pub const DEFAULT_PRECISION: u32 = 50;
pub const MIN_PRECISION: u32 = 30;
pub const MIN_POWER: u32 = 2;
pub const MAX_POWER: u32 = 16;

const KEYSTREAM_DOMAIN: u64 = 0x4b45_5953_5452_4d00;
/// Extra digits kept when evaluating the root on decryption.
const DECRYPT_GUARD: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FbscError {
    #[error("r_n = {0} outside [2, 16]")]
    PowerOutOfRange(u32),
    #[error("pk_sk = {pk_sk} too small for r_n = {r_n}: pk_sk^r_n must exceed 255")]
    KeyTooSmall { pk_sk: BigUint, r_n: u32 },
    #[error("precision F = {0} below the minimum of 30 digits")]
    PrecisionTooLow(u32),
    #[error("symbol {0} outside [0, 255]")]
    SymbolOutOfRange(String),
    #[error("negative base: pk_sk does not exceed the {0}")]
    Domain(&'static str),
    #[error("round-off: result lies {distance:.3} from the nearest integer (limit 0.25)")]
    RoundOff { distance: f64 },
    #[error("element has {found} fractional digits, expected {expected}")]
    PrecisionMismatch { expected: u32, found: u32 },
    #[error("keystream exhausted: need {need} bytes, have {have}")]
    KeystreamExhausted { need: usize, have: usize },
    #[error("file name must be non-empty")]
    EmptyName,
    #[error("cannot parse element: {0}")]
    Parse(String),
    #[error("blob: {0}")]
    Blob(String),
    #[error(transparent)]
    Prng(#[from] PrngError),
}

/// The secret `(PK_SK, R_n)`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "KeyRepr", into = "KeyRepr")]
pub struct SymmetricKey {
    pk_sk: BigUint,
    r_n: u32,
}

#[derive(Serialize, Deserialize)]
struct KeyRepr {
    #[serde(with = "crate::bigdec")]
    pk_sk: BigUint,
    r_n: u32,
}

impl TryFrom<KeyRepr> for SymmetricKey {
    type Error = FbscError;

    fn try_from(k: KeyRepr) -> Result<Self, FbscError> {
        SymmetricKey::new(k.pk_sk, k.r_n)
    }
}

impl From<SymmetricKey> for KeyRepr {
    fn from(k: SymmetricKey) -> Self {
        KeyRepr {
            pk_sk: k.pk_sk,
            r_n: k.r_n,
        }
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricKey")
            .field("fingerprint", &format_args!("{:016x}", self.fingerprint()))
            .finish_non_exhaustive()
    }
}

impl SymmetricKey {
    pub fn new(pk_sk: impl Into<BigUint>, r_n: u32) -> Result<Self, FbscError> {
        let pk_sk = pk_sk.into();
        if !(MIN_POWER..=MAX_POWER).contains(&r_n) {
            return Err(FbscError::PowerOutOfRange(r_n));
        }
        if pk_sk.pow(r_n) <= BigUint::from(255u32) {
            return Err(FbscError::KeyTooSmall { pk_sk, r_n });
        }
        Ok(SymmetricKey { pk_sk, r_n })
    }

    /// Draw a fresh key: a 48-bit `pk_sk` with its top bit set and
    /// `r_n` uniform-ish in [2, 16].
    pub fn generate(gen: &mut KmGenerator) -> Result<Self, FbscError> {
        let mut pk = 1u64;
        for _ in 0..47 {
            pk = (pk << 1) | u64::from(gen.next_bit()?);
        }
        let r_n = MIN_POWER + u32::from(gen.next_byte()?) % (MAX_POWER - MIN_POWER + 1);
        SymmetricKey::new(pk, r_n)
    }

    pub fn pk_sk(&self) -> &BigUint {
        &self.pk_sk
    }

    pub fn r_n(&self) -> u32 {
        self.r_n
    }

    /// Digest of the big-endian bytes of `pk_sk`. Identifies a key without
    /// revealing it.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(&self.pk_sk.to_bytes_be())
    }
}

/// A fixed-point ciphertext value with `frac_digits` fractional digits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CipherElement {
    scaled: BigUint,
    frac_digits: u32,
}

impl CipherElement {
    pub fn from_scaled(scaled: BigUint, frac_digits: u32) -> Self {
        CipherElement {
            scaled,
            frac_digits,
        }
    }

    /// The value times `10^F`.
    pub fn scaled(&self) -> &BigUint {
        &self.scaled
    }

    pub fn frac_digits(&self) -> u32 {
        self.frac_digits
    }

    /// Lossy view, for statistics that need a real number.
    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for CipherElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.scaled.to_str_radix(10);
        let frac = self.frac_digits as usize;
        if digits.len() <= frac {
            write!(f, "0.{}{}", "0".repeat(frac - digits.len()), digits)
        } else {
            let (int, rest) = digits.split_at(digits.len() - frac);
            write!(f, "{int}.{rest}")
        }
    }
}

impl FromStr for CipherElement {
    type Err = FbscError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (int, frac) = s
            .split_once('.')
            .ok_or_else(|| FbscError::Parse(format!("missing decimal point in {s:?}")))?;
        let all_digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int) || !all_digits(frac) {
            return Err(FbscError::Parse(format!("not a decimal: {s:?}")));
        }
        let mut joined = String::with_capacity(int.len() + frac.len());
        joined.push_str(int);
        joined.push_str(frac);
        let scaled = BigUint::parse_bytes(joined.as_bytes(), 10)
            .ok_or_else(|| FbscError::Parse(s.to_string()))?;
        Ok(CipherElement {
            scaled,
            frac_digits: frac.len() as u32,
        })
    }
}

fn pow10(k: u32) -> BigUint {
    BigUint::from(10u32).pow(k)
}

fn decimal_digits(v: &BigUint) -> u32 {
    v.to_str_radix(10).len() as u32
}

fn check_precision(f: u32) -> Result<(), FbscError> {
    if f < MIN_PRECISION {
        Err(FbscError::PrecisionTooLow(f))
    } else {
        Ok(())
    }
}

/// `(pk_sk - x^(1/r_n))^r_n`, rounded half-up to `precision` fractional digits.
pub fn involute(x: u32, key: &SymmetricKey, precision: u32) -> Result<CipherElement, FbscError> {
    check_precision(precision)?;
    if x > 255 {
        return Err(FbscError::SymbolOutOfRange(x.to_string()));
    }
    let r = key.r_n;
    // Working digits: enough that the error of the root, amplified by the
    // derivative of t^r near pk_sk, stays below 10^-(F+2).
    let w = precision + 4 + r * decimal_digits(&key.pk_sk);
    let root = (BigUint::from(x) * pow10(w * r)).nth_root(r);
    let whole = &key.pk_sk * pow10(w);
    if root >= whole {
        return Err(FbscError::Domain("r_n-th root of the symbol"));
    }
    let base = whole - root;
    let drop = pow10(w * r - precision);
    let half = &drop >> 1u32;
    let scaled = (base.pow(r) + half) / drop;
    Ok(CipherElement::from_scaled(scaled, precision))
}

/// Result of applying `f` to a ciphertext element before it is accepted.
struct Inverse {
    nearest: BigUint,
    /// |value - nearest|, in the same scale as `unit`.
    distance: BigUint,
    unit: BigUint,
}

fn invert_raw(c: &CipherElement, key: &SymmetricKey) -> Result<Inverse, FbscError> {
    let r = key.r_n;
    let f = c.frac_digits;
    let w = f + DECRYPT_GUARD;
    let root = (&c.scaled * pow10(w * r - f)).nth_root(r);
    let whole = &key.pk_sk * pow10(w);
    if root > whole {
        return Err(FbscError::Domain("r_n-th root of the element"));
    }
    let base = whole - root;
    let value = base.pow(r);
    let unit = pow10(w * r);
    let nearest = (&value + (&unit >> 1u32)) / &unit;
    let at = &nearest * &unit;
    let distance = if value >= at { value - at } else { at - value };
    Ok(Inverse {
        nearest,
        distance,
        unit,
    })
}

/// `(pk_sk - c^(1/r_n))^r_n` rounded to the nearest integer.
pub fn anti_involute(
    c: &CipherElement,
    key: &SymmetricKey,
    precision: u32,
) -> Result<u8, FbscError> {
    check_precision(precision)?;
    if c.frac_digits != precision {
        return Err(FbscError::PrecisionMismatch {
            expected: precision,
            found: c.frac_digits,
        });
    }
    let inv = invert_raw(c, key)?;
    if inv.distance * 4u32 > inv.unit {
        return Err(FbscError::RoundOff {
            distance: distance_f64(c, key),
        });
    }
    inv.nearest
        .to_u8()
        .ok_or_else(|| FbscError::SymbolOutOfRange(inv.nearest.to_string()))
}

fn distance_f64(c: &CipherElement, key: &SymmetricKey) -> f64 {
    match invert_raw(c, key) {
        Ok(inv) => {
            // Scale both down to 17 significant digits before dividing.
            let shift = inv.unit.bits().saturating_sub(60);
            let d = (&inv.distance >> shift).to_f64().unwrap_or(f64::MAX);
            let u = (&inv.unit >> shift).to_f64().unwrap_or(1.0);
            d / u
        }
        Err(_) => f64::NAN,
    }
}

/// Like [`anti_involute`] but never fails: out-of-range results clamp to
/// [0, 255] and a negative base maps to 0. Models what a party holding the
/// wrong key actually sees.
pub fn anti_involute_lenient(c: &CipherElement, key: &SymmetricKey) -> u8 {
    match invert_raw(c, key) {
        Ok(inv) => inv.nearest.to_u8().unwrap_or(255),
        Err(_) => 0,
    }
}

/// Keystream bytes for a key at a given epoch.
pub fn keystream(
    config: &PrngConfig,
    key: &SymmetricKey,
    epoch: u64,
    len: usize,
) -> Result<Vec<u8>, FbscError> {
    let salt = KEYSTREAM_DOMAIN ^ key.fingerprint() ^ epoch.rotate_left(32);
    let mut gen = config.reseeded(salt).generator()?;
    Ok(gen.take_bytes(len)?)
}

/// A key prepared for bulk work: the 256 codewords are computed once.
#[derive(Clone, Debug)]
pub struct Cipher {
    key: SymmetricKey,
    precision: u32,
    codewords: Vec<CipherElement>,
}

impl Cipher {
    pub fn new(key: SymmetricKey, precision: u32) -> Result<Self, FbscError> {
        check_precision(precision)?;
        let codewords = (0..256)
            .map(|x| involute(x, &key, precision))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Cipher {
            key,
            precision,
            codewords,
        })
    }

    pub fn key(&self) -> &SymmetricKey {
        &self.key
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// `f(x)` for every symbol, indexed by symbol.
    pub fn codewords(&self) -> &[CipherElement] {
        &self.codewords
    }

    pub fn encrypt_stream(
        &self,
        data: &[u8],
        keystream: &[u8],
    ) -> Result<Vec<CipherElement>, FbscError> {
        check_keystream(data.len(), keystream.len())?;
        Ok(data
            .iter()
            .zip(keystream)
            .map(|(&d, &k)| self.codewords[usize::from(d ^ k)].clone())
            .collect())
    }

    /// Applies the anti-involution to each distinct element once.
    pub fn decrypt_stream(
        &self,
        cipher: &[CipherElement],
        keystream: &[u8],
    ) -> Result<Vec<u8>, FbscError> {
        check_keystream(cipher.len(), keystream.len())?;
        let mut seen: HashMap<&CipherElement, u8> = HashMap::new();
        let mut out = Vec::with_capacity(cipher.len());
        for (c, &k) in cipher.iter().zip(keystream) {
            let x = match seen.get(c) {
                Some(&x) => x,
                None => {
                    let x = anti_involute(c, &self.key, self.precision)?;
                    seen.insert(c, x);
                    x
                }
            };
            out.push(x ^ k);
        }
        Ok(out)
    }

    pub fn decrypt_lenient(&self, cipher: &[CipherElement], keystream: &[u8]) -> Vec<u8> {
        let mut seen: HashMap<&CipherElement, u8> = HashMap::new();
        cipher
            .iter()
            .zip(keystream.iter().chain(std::iter::repeat(&0)))
            .map(|(c, &k)| *seen.entry(c).or_insert_with(|| anti_involute_lenient(c, &self.key)) ^ k)
            .collect()
    }

    /// Each element's rank among this key's 256 codewords, as a byte.
    /// A bijection between elements and bytes, used to feed byte-oriented
    /// statistics.
    pub fn quantize(&self, cipher: &[CipherElement]) -> Result<Vec<u8>, FbscError> {
        let mut sorted: Vec<(&CipherElement, usize)> =
            self.codewords.iter().enumerate().map(|(i, c)| (c, i)).collect();
        sorted.sort();
        let rank: HashMap<&CipherElement, u8> = sorted
            .iter()
            .enumerate()
            .map(|(rank, (c, _))| (*c, rank as u8))
            .collect();
        cipher
            .iter()
            .map(|c| {
                rank.get(c)
                    .copied()
                    .ok_or_else(|| FbscError::Parse("element is not a codeword of this key".into()))
            })
            .collect()
    }
}

fn check_keystream(need: usize, have: usize) -> Result<(), FbscError> {
    if have < need {
        Err(FbscError::KeystreamExhausted { need, have })
    } else {
        Ok(())
    }
}

/// `element_i = f(data_i XOR keystream_i)`.
pub fn encrypt_stream(
    data: &[u8],
    key: &SymmetricKey,
    keystream: &[u8],
    precision: u32,
) -> Result<Vec<CipherElement>, FbscError> {
    check_keystream(data.len(), keystream.len())?;
    if data.is_empty() {
        return Ok(Vec::new());
    }
    Cipher::new(key.clone(), precision)?.encrypt_stream(data, keystream)
}

pub fn decrypt_stream(
    cipher: &[CipherElement],
    key: &SymmetricKey,
    keystream: &[u8],
    precision: u32,
) -> Result<Vec<u8>, FbscError> {
    check_precision(precision)?;
    check_keystream(cipher.len(), keystream.len())?;
    let c = Cipher {
        key: key.clone(),
        precision,
        codewords: Vec::new(),
    };
    c.decrypt_stream(cipher, keystream)
}

/// `FK = key XOR digest(file_name)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileKeyBinding {
    pub file_name_digest: u64,
    #[serde(with = "crate::bigdec")]
    pub bound_key: BigUint,
}

impl FileKeyBinding {
    pub fn unbind(&self) -> BigUint {
        &self.bound_key ^ BigUint::from(self.file_name_digest)
    }

    /// Move the binding to a new name without exposing the key in between.
    pub fn rebind(&self, new_name: &str) -> Result<FileKeyBinding, FbscError> {
        let new_digest = name_digest(new_name)?;
        Ok(FileKeyBinding {
            file_name_digest: new_digest,
            bound_key: &self.bound_key
                ^ BigUint::from(self.file_name_digest)
                ^ BigUint::from(new_digest),
        })
    }
}

fn name_digest(name: &str) -> Result<u64, FbscError> {
    if name.is_empty() {
        return Err(FbscError::EmptyName);
    }
    Ok(fnv1a64(name.as_bytes()))
}

pub fn bind_file_key(key: &BigUint, file_name: &str) -> Result<FileKeyBinding, FbscError> {
    let digest = name_digest(file_name)?;
    Ok(FileKeyBinding {
        file_name_digest: digest,
        bound_key: key ^ BigUint::from(digest),
    })
}

const MAGIC: &[u8; 4] = b"PVLT";
const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;

/// The unit stored in the cloud: header plus newline-terminated elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedBlob {
    /// 0 when the power is withheld from the storing party.
    pub r_n: u8,
    pub precision: u16,
    pub fingerprint: u64,
    pub n1_len: u8,
    pub n2_len: u8,
    pub epoch: u32,
    pub elements: Vec<CipherElement>,
}

impl EncryptedBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.elements.len() * 64);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.r_n);
        out.extend_from_slice(&self.precision.to_be_bytes());
        out.extend_from_slice(&self.fingerprint.to_be_bytes());
        out.push(self.n1_len);
        out.push(self.n2_len);
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&(self.elements.len() as u64).to_be_bytes());
        let mut text: HashMap<&CipherElement, String> = HashMap::new();
        for e in &self.elements {
            let s = text.entry(e).or_insert_with(|| e.to_string());
            out.extend_from_slice(s.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FbscError> {
        let bad = |m: &str| FbscError::Blob(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(bad("shorter than header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(FbscError::Blob(format!("unsupported version {}", bytes[4])));
        }
        let be16 = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let be32 = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let be64 = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
        let r_n = bytes[5];
        let precision = be16(6);
        let fingerprint = be64(8);
        let (n1_len, n2_len) = (bytes[16], bytes[17]);
        let epoch = be32(18);
        let count = be64(22);
        let body = std::str::from_utf8(&bytes[HEADER_LEN..]).map_err(|_| bad("body not text"))?;
        let mut elements = Vec::new();
        let mut parsed: HashMap<&str, CipherElement> = HashMap::new();
        let mut rest = body;
        while !rest.is_empty() {
            let (line, tail) = rest
                .split_once('\n')
                .ok_or_else(|| bad("last element not newline-terminated"))?;
            let e = match parsed.get(line) {
                Some(e) => e.clone(),
                None => {
                    let e: CipherElement = line.parse()?;
                    if e.frac_digits != u32::from(precision) {
                        return Err(FbscError::PrecisionMismatch {
                            expected: u32::from(precision),
                            found: e.frac_digits,
                        });
                    }
                    parsed.insert(line, e.clone());
                    e
                }
            };
            elements.push(e);
            rest = tail;
        }
        if elements.len() as u64 != count {
            return Err(FbscError::Blob(format!(
                "header declares {count} elements, body has {}",
                elements.len()
            )));
        }
        Ok(EncryptedBlob {
            r_n,
            precision,
            fingerprint,
            n1_len,
            n2_len,
            epoch,
            elements,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn key(pk: u64, r: u32) -> SymmetricKey {
        SymmetricKey::new(pk, r).unwrap()
    }

    fn exact(v: u64, f: u32) -> CipherElement {
        CipherElement::from_scaled(BigUint::from(v) * pow10(f), f)
    }

    #[test]
    fn perfect_square_example() {
        let k = key(16, 2);
        assert_eq!(involute(9, &k, 50).unwrap(), exact(169, 50));
        assert_eq!(anti_involute(&exact(169, 50), &k, 50).unwrap(), 9);
    }

    #[test]
    fn zero_symbol_maps_to_power() {
        let k = key(20, 3);
        assert_eq!(involute(0, &k, 40).unwrap(), exact(8000, 40));
        assert_eq!(anti_involute(&exact(8000, 40), &k, 40).unwrap(), 0);
    }

    #[test]
    fn key_invariants() {
        assert_eq!(SymmetricKey::new(20u32, 1), Err(FbscError::PowerOutOfRange(1)));
        assert_eq!(SymmetricKey::new(20u32, 17), Err(FbscError::PowerOutOfRange(17)));
        assert!(matches!(
            SymmetricKey::new(15u32, 2),
            Err(FbscError::KeyTooSmall { .. })
        ));
        assert!(SymmetricKey::new(16u32, 2).is_ok());
        assert!(SymmetricKey::new(2u32, 8).is_ok());
    }

    #[test]
    fn precision_floor() {
        assert_eq!(
            involute(1, &key(20, 2), 29),
            Err(FbscError::PrecisionTooLow(29))
        );
    }

    #[test]
    fn power_one_is_integer_involution() {
        // Not a valid key, but f(x) = pk - x is the arithmetic skeleton.
        let pk = 300i64;
        for x in 0..=255 {
            assert_eq!(pk - (pk - x), x);
        }
    }

    #[test]
    fn exhaustive_roundtrip_one_key() {
        let k = key(20, 3);
        for x in 0..=255u32 {
            let c = involute(x, &k, 50).unwrap();
            assert_eq!(u32::from(anti_involute(&c, &k, 50).unwrap()), x);
        }
    }

    #[test]
    fn tight_key_roundtrip() {
        // pk^r = 256: the base for x = 255 is about 0.03.
        let k = key(16, 2);
        for x in [254, 255] {
            let c = involute(x, &k, 30).unwrap();
            assert_eq!(u32::from(anti_involute(&c, &k, 30).unwrap()), x);
        }
    }

    #[test]
    fn wrong_power_fails_or_garbles() {
        let good = key(20, 3);
        let bad = key(20, 4);
        let c = involute(77, &good, 50).unwrap();
        assert_ne!(anti_involute(&c, &bad, 50).ok(), Some(77));
    }

    #[test]
    fn element_text_roundtrip() {
        let c = involute(255, &key(20, 2), 50).unwrap();
        let s = c.to_string();
        assert_eq!(s.split_once('.').unwrap().1.len(), 50);
        assert_eq!(s.parse::<CipherElement>().unwrap(), c);
        let small = CipherElement::from_scaled(BigUint::from(12u32), 30);
        assert_eq!(small.to_string(), format!("0.{}12", "0".repeat(28)));
        assert_eq!(small.to_string().parse::<CipherElement>().unwrap(), small);
        assert!("12".parse::<CipherElement>().is_err());
        assert!("1.2x".parse::<CipherElement>().is_err());
    }

    #[test]
    fn stream_examples() {
        let k = key(16, 2);
        assert!(encrypt_stream(&[], &k, &[], 50).unwrap().is_empty());
        assert_eq!(encrypt_stream(&[9], &k, &[0], 50).unwrap(), vec![exact(169, 50)]);
        assert_eq!(
            encrypt_stream(&[1, 2], &k, &[0], 50),
            Err(FbscError::KeystreamExhausted { need: 2, have: 1 })
        );
    }

    #[test]
    fn binding() {
        let zero = BigUint::zero();
        let b = bind_file_key(&zero, "a.jpg").unwrap();
        assert_eq!(b.bound_key, BigUint::from(fnv1a64(b"a.jpg")));
        let k = BigUint::from(123_456_789u64);
        let b = bind_file_key(&k, "a.jpg").unwrap();
        assert_eq!(b.unbind(), k);
        let moved = b.rebind("b.jpg").unwrap();
        assert_ne!(moved.bound_key, b.bound_key);
        assert_eq!(moved.unbind(), k);
        assert_eq!(moved, bind_file_key(&k, "b.jpg").unwrap());
        assert_eq!(bind_file_key(&k, ""), Err(FbscError::EmptyName));
    }

    #[test]
    fn quantize_is_reversed_symbol() {
        let c = Cipher::new(key(20, 3), 40).unwrap();
        let data: Vec<u8> = (0..=255).collect();
        let ks = vec![0u8; 256];
        let elems = c.encrypt_stream(&data, &ks).unwrap();
        let q = c.quantize(&elems).unwrap();
        for (d, q) in data.iter().zip(q) {
            assert_eq!(q, 255 - d);
        }
    }

    #[test]
    fn blob_roundtrip_and_header() {
        let c = Cipher::new(key(20, 3), 30).unwrap();
        let elems = c.encrypt_stream(b"hello", &[1, 2, 3, 4, 5]).unwrap();
        let blob = EncryptedBlob {
            r_n: 3,
            precision: 30,
            fingerprint: c.key().fingerprint(),
            n1_len: 16,
            n2_len: 8,
            epoch: 7,
            elements: elems,
        };
        let bytes = blob.to_bytes();
        assert_eq!(&bytes[..4], b"PVLT");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 3);
        assert_eq!(&bytes[6..8], &[0, 30]);
        assert_eq!(&bytes[18..22], &[0, 0, 0, 7]);
        assert_eq!(&bytes[22..30], &5u64.to_be_bytes());
        assert_eq!(*bytes.last().unwrap(), b'\n');
        assert_eq!(EncryptedBlob::from_bytes(&bytes).unwrap(), blob);
        let mut cut = bytes.clone();
        cut.pop();
        assert!(EncryptedBlob::from_bytes(&cut).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(EncryptedBlob::from_bytes(&magic).is_err());
    }

    #[test]
    fn generated_keys_are_valid() {
        let mut g = PrngConfig::default().generator().unwrap();
        for _ in 0..20 {
            let k = SymmetricKey::generate(&mut g).unwrap();
            assert_eq!(k.pk_sk().bits(), 48);
            assert!((2..=16).contains(&k.r_n()));
        }
    }

    #[test]
    fn key_json() {
        let k = key(123_456_789, 5);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, r#"{"pk_sk":"123456789","r_n":5}"#);
        assert_eq!(serde_json::from_str::<SymmetricKey>(&s).unwrap(), k);
        assert!(serde_json::from_str::<SymmetricKey>(r#"{"pk_sk":"3","r_n":2}"#).is_err());
    }

    #[test]
    fn debug_does_not_print_key() {
        let k = key(123_456_789, 5);
        assert!(!format!("{k:?}").contains("123456789"));
    }
}
