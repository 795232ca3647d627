//! KM generator and random padding.
//!
//! The generator iterates `state' = floor(state * M * I) mod n` where `I` is a
//! non-integral rational `i_num / i_den`. The product is evaluated exactly:
//! `K = M * i_num` is split as `K = Kq * i_den + Kr`, so
//! `floor(s * K / i_den) = s * Kq + floor(s * Kr / i_den)` and every term fits
//! in 128-bit arithmetic.
//!
//! Each step contributes its `floor(log2 n) - 2` low-order bits to the bit
//! stream, most significant of those bits first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::mix64;

/// Byte length of the fixed random prefix N1.
pub const N1_LEN: usize = 16;
/// Byte length of the repeated random suffix N2.
pub const N2_LEN: usize = 8;

const GUARD_BITS: u32 = 2;
const PADDING_DOMAIN: u64 = 0x5041_4444_494e_4700;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrngError {
    #[error("seed is 0 modulo n (zero state is absorbing)")]
    ZeroSeed,
    #[error("non-integral number I = {num}/{den} is an exact integer")]
    IntegralI { num: u64, den: u64 },
    #[error("denominator of I must be positive")]
    ZeroDenominator,
    #[error("multiplier M must be at least 2, got {0}")]
    MultiplierTooSmall(u64),
    #[error("modulus n must be at least 2, got {0}")]
    ModulusTooSmall(u64),
    #[error("modulus n = {0} yields no usable bits per step (need n >= 8)")]
    NoUsableBits(u64),
    #[error("generator reached the zero state after {step} steps; reseed required")]
    DegenerateState { step: u64 },
    #[error("requested zero bits")]
    EmptyRequest,
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("cannot pad empty data")]
    EmptyData,
    #[error("padded message of {len} bytes is shorter than its {n1}+{n2} padding")]
    MalformedPadding { len: usize, n1: usize, n2: usize },
}

/// Parameters of the KM recurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrngConfig {
    pub seed: u64,
    /// The multiplier M.
    #[serde(rename = "m")]
    pub multiplier: u64,
    /// Numerator of the non-integral number I.
    pub i_num: u64,
    /// Denominator of I; the default uses a 2^32 fixed-point scale.
    pub i_den: u64,
    /// The modulus n.
    #[serde(rename = "n")]
    pub modulus: u64,
}

impl Default for PrngConfig {
    /// n = 2^61 - 1, M = 25214903917, I = round(pi * 2^32) / 2^32, seed 20230423.
    fn default() -> Self {
        PrngConfig {
            seed: 20_230_423,
            multiplier: 25_214_903_917,
            i_num: 13_493_037_705,
            i_den: 1 << 32,
            modulus: (1 << 61) - 1,
        }
    }
}

impl PrngConfig {
    pub fn new(
        seed: u64,
        multiplier: u64,
        i_num: u64,
        i_den: u64,
        modulus: u64,
    ) -> Result<Self, PrngError> {
        let config = PrngConfig {
            seed,
            multiplier,
            i_num,
            i_den,
            modulus,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PrngError> {
        if self.modulus < 2 {
            return Err(PrngError::ModulusTooSmall(self.modulus));
        }
        if self.multiplier < 2 {
            return Err(PrngError::MultiplierTooSmall(self.multiplier));
        }
        if self.i_den == 0 {
            return Err(PrngError::ZeroDenominator);
        }
        if self.i_num % self.i_den == 0 {
            return Err(PrngError::IntegralI {
                num: self.i_num,
                den: self.i_den,
            });
        }
        if self.seed % self.modulus == 0 {
            return Err(PrngError::ZeroSeed);
        }
        Ok(())
    }

    /// Number of bits one step contributes: `floor(log2 n) - 2`.
    pub fn bits_per_step(&self) -> u32 {
        (63 - self.modulus.leading_zeros()).saturating_sub(GUARD_BITS)
    }

    /// Same recurrence, different starting point. Used to give independent
    /// streams (keystream, padding per epoch) to one configuration.
    pub fn reseeded(&self, salt: u64) -> PrngConfig {
        let mut seed = mix64(self.seed ^ mix64(salt));
        if seed % self.modulus == 0 {
            seed = seed.wrapping_add(1);
        }
        PrngConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn generator(&self) -> Result<KmGenerator, PrngError> {
        KmGenerator::new(self)
    }
}

/// A running KM generator. Owns its cursor; not shared between threads.
#[derive(Clone, Debug)]
pub struct KmGenerator {
    state: u64,
    modulus: u64,
    den: u128,
    /// (M * i_num) div i_den, reduced mod n.
    whole_mod: u128,
    /// (M * i_num) mod i_den.
    frac: u128,
    steps: u64,
    bits_per_step: u32,
    pending: u64,
    pending_len: u32,
}

impl KmGenerator {
    pub fn new(config: &PrngConfig) -> Result<Self, PrngError> {
        config.validate()?;
        let k = u128::from(config.multiplier) * u128::from(config.i_num);
        let den = u128::from(config.i_den);
        Ok(KmGenerator {
            state: config.seed,
            modulus: config.modulus,
            den,
            whole_mod: (k / den) % u128::from(config.modulus),
            frac: k % den,
            steps: 0,
            bits_per_step: config.bits_per_step(),
            pending: 0,
            pending_len: 0,
        })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Advance one step and return the new state.
    pub fn next_value(&mut self) -> Result<u64, PrngError> {
        let n = u128::from(self.modulus);
        let s = u128::from(self.state);
        let whole = (s % n) * self.whole_mod % n;
        let frac = (s * self.frac / self.den) % n;
        let next = ((whole + frac) % n) as u64;
        self.steps += 1;
        if next == 0 {
            return Err(PrngError::DegenerateState { step: self.steps });
        }
        self.state = next;
        Ok(next)
    }

    pub fn next_bit(&mut self) -> Result<u8, PrngError> {
        if self.pending_len == 0 {
            if self.bits_per_step == 0 {
                return Err(PrngError::NoUsableBits(self.modulus));
            }
            let v = self.next_value()?;
            self.pending = v & ((1u64 << self.bits_per_step) - 1);
            self.pending_len = self.bits_per_step;
        }
        self.pending_len -= 1;
        Ok(((self.pending >> self.pending_len) & 1) as u8)
    }

    /// Eight bits, first bit in the most significant position.
    pub fn next_byte(&mut self) -> Result<u8, PrngError> {
        let mut b = 0u8;
        for _ in 0..8 {
            b = (b << 1) | self.next_bit()?;
        }
        Ok(b)
    }

    pub fn take_bits(&mut self, count: usize) -> Result<Vec<u8>, PrngError> {
        (0..count).map(|_| self.next_bit()).collect()
    }

    pub fn take_bytes(&mut self, count: usize) -> Result<Vec<u8>, PrngError> {
        (0..count).map(|_| self.next_byte()).collect()
    }
}

/// Exactly `count` bits (values 0 or 1) from a fresh generator.
pub fn generate_bits(config: &PrngConfig, count: usize) -> Result<Vec<u8>, PrngError> {
    if count == 0 {
        return Err(PrngError::EmptyRequest);
    }
    if config.bits_per_step() == 0 {
        return Err(PrngError::NoUsableBits(config.modulus));
    }
    config.generator()?.take_bits(count)
}

/// `count` bytes packed from the bit stream.
pub fn generate_bytes(config: &PrngConfig, count: usize) -> Result<Vec<u8>, PrngError> {
    if count == 0 {
        return Err(PrngError::EmptyRequest);
    }
    config.generator()?.take_bytes(count)
}

/// Row-major bit matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BitMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.cols + col]
    }

    pub fn as_bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

pub fn generate_matrix(
    config: &PrngConfig,
    rows: usize,
    cols: usize,
) -> Result<BitMatrix, PrngError> {
    if rows == 0 || cols == 0 {
        return Err(PrngError::EmptyMatrix { rows, cols });
    }
    let bits = generate_bits(config, rows * cols)?;
    Ok(BitMatrix { rows, cols, bits })
}

/// `N1 || body || N2` together with the framing needed to strip it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedMessage {
    bytes: Vec<u8>,
    n1_len: usize,
    n2_len: usize,
    epoch: u64,
}

impl PaddedMessage {
    /// Reassemble from decrypted bytes and recorded framing.
    pub fn from_parts(
        bytes: Vec<u8>,
        n1_len: usize,
        n2_len: usize,
        epoch: u64,
    ) -> Result<Self, PrngError> {
        if n1_len == 0 || n2_len == 0 || bytes.len() < n1_len + n2_len {
            return Err(PrngError::MalformedPadding {
                len: bytes.len(),
                n1: n1_len,
                n2: n2_len,
            });
        }
        Ok(PaddedMessage {
            bytes,
            n1_len,
            n2_len,
            epoch,
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn body(&self) -> &[u8] {
        &self.bytes[self.n1_len..self.bytes.len() - self.n2_len]
    }

    pub fn prefix(&self) -> &[u8] {
        &self.bytes[..self.n1_len]
    }

    pub fn suffix(&self) -> &[u8] {
        &self.bytes[self.bytes.len() - self.n2_len..]
    }

    pub fn n1_len(&self) -> usize {
        self.n1_len
    }

    pub fn n2_len(&self) -> usize {
        self.n2_len
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn unpad(self) -> Vec<u8> {
        let end = self.bytes.len() - self.n2_len;
        let mut bytes = self.bytes;
        bytes.truncate(end);
        bytes.drain(..self.n1_len);
        bytes
    }
}

/// Pad `data` as `N1 || data || N2`. N1 is 16 fresh generator bytes, N2 one
/// generator byte repeated 8 times. Each epoch draws from its own stream.
pub fn pad_message(
    data: &[u8],
    epoch: u64,
    config: &PrngConfig,
) -> Result<PaddedMessage, PrngError> {
    if data.is_empty() {
        return Err(PrngError::EmptyData);
    }
    let mut gen = config.reseeded(PADDING_DOMAIN ^ epoch).generator()?;
    let n1 = gen.take_bytes(N1_LEN)?;
    let fill = gen.next_byte()?;
    let mut bytes = Vec::with_capacity(N1_LEN + data.len() + N2_LEN);
    bytes.extend_from_slice(&n1);
    bytes.extend_from_slice(data);
    bytes.extend(std::iter::repeat(fill).take(N2_LEN));
    Ok(PaddedMessage {
        bytes,
        n1_len: N1_LEN,
        n2_len: N2_LEN,
        epoch,
    })
}
