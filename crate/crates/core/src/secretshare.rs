//! Parabolic Shamir sharing over Z_p.
//!
//! The policy polynomial is `F(X) = a0 + a1 X + a2 X^2` with the secret in
//! `a0` and the owner's attributes in `a1`, `a2`. Any three points with
//! distinct nonzero `x` determine it.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Fnv1a;

/// 2^61 - 1.
pub const DEFAULT_PRIME: u64 = (1 << 61) - 1;
pub const THRESHOLD: usize = 3;

const ATTR_SEPARATOR: u8 = 0x1f;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShareError {
    #[error("need at least 2 owner attributes, got {0}")]
    TooFewAttributes(usize),
    #[error("value {value} is not below the field prime {p}")]
    OutOfField { value: u64, p: u64 },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("a2 = 0: polynomial is not of degree 2")]
    DegeneratePolicy,
    #[error("d_x = {0} participants cannot meet the threshold of 3")]
    TooFewParticipants(usize),
    #[error("threshold not met: {0} points supplied, 3 distinct points needed")]
    Threshold(usize),
    #[error("duplicate x = {0} among supplied points")]
    DuplicateX(u64),
    #[error("x = 0 is never a valid authorization point")]
    ZeroX,
    #[error("{0} has no inverse modulo {1}")]
    NotInvertible(u64, u64),
    #[error("point index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("point at x = {x} is not on the polynomial through the first three points")]
    Inconsistent { x: u64 },
}

fn mul(a: u64, b: u64, p: u64) -> u64 {
    (u128::from(a) * u128::from(b) % u128::from(p)) as u64
}

fn add(a: u64, b: u64, p: u64) -> u64 {
    ((u128::from(a) + u128::from(b)) % u128::from(p)) as u64
}

fn sub(a: u64, b: u64, p: u64) -> u64 {
    add(a, p - b % p, p)
}

fn pow(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, b, p);
        }
        b = mul(b, b, p);
        e >>= 1;
    }
    acc
}

/// Inverse by the extended Euclidean algorithm.
pub fn inverse(a: u64, p: u64) -> Result<u64, ShareError> {
    let (mut old_r, mut r) = (i128::from(a % p), i128::from(p));
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return Err(ShareError::NotInvertible(a, p));
    }
    Ok(old_s.rem_euclid(i128::from(p)) as u64)
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for b in BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn check_prime(p: u64) -> Result<(), ShareError> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(ShareError::NotPrime(p))
    }
}

fn check_field(value: u64, p: u64) -> Result<(), ShareError> {
    if value < p {
        Ok(())
    } else {
        Err(ShareError::OutOfField { value, p })
    }
}

/// `F(X) = a0 + a1 X + a2 X^2 mod p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParabolicPolicy {
    pub a0: u64,
    pub a1: u64,
    pub a2: u64,
    pub p: u64,
}

impl ParabolicPolicy {
    pub fn new(a0: u64, a1: u64, a2: u64, p: u64) -> Result<Self, ShareError> {
        check_prime(p)?;
        for v in [a0, a1, a2] {
            check_field(v, p)?;
        }
        if a2 == 0 {
            return Err(ShareError::DegeneratePolicy);
        }
        Ok(ParabolicPolicy { a0, a1, a2, p })
    }

    pub fn eval(&self, x: u64) -> u64 {
        let x = x % self.p;
        let quad = mul(mul(self.a2, x, self.p), x, self.p);
        add(add(self.a0, mul(self.a1, x, self.p), self.p), quad, self.p)
    }

    pub fn secret(&self) -> u64 {
        self.a0
    }
}

/// `a1 = digest(attr_1) mod p`, `a2 = digest(attr_2 .. attr_k) mod p` with a
/// counter appended until `a2 != 0`.
pub fn attribute_coefficients<S: AsRef<str>>(
    attributes: &[S],
    p: u64,
) -> Result<(u64, u64), ShareError> {
    if attributes.len() < 2 {
        return Err(ShareError::TooFewAttributes(attributes.len()));
    }
    check_prime(p)?;
    let a1 = Fnv1a::new().update(attributes[0].as_ref().as_bytes()).finish() % p;
    let mut rest = Fnv1a::new();
    for (i, a) in attributes[1..].iter().enumerate() {
        if i > 0 {
            rest.update(&[ATTR_SEPARATOR]);
        }
        rest.update(a.as_ref().as_bytes());
    }
    let mut a2 = rest.finish() % p;
    let mut counter = 0u64;
    while a2 == 0 {
        counter += 1;
        let mut salted = rest;
        salted.update(&[ATTR_SEPARATOR]).update(&counter.to_be_bytes());
        a2 = salted.finish() % p;
    }
    Ok((a1, a2))
}

pub fn derive_coefficients<S: AsRef<str>>(
    owner_attributes: &[S],
    secret: u64,
    p: u64,
) -> Result<ParabolicPolicy, ShareError> {
    let (a1, a2) = attribute_coefficients(owner_attributes, p)?;
    check_field(secret, p)?;
    ParabolicPolicy::new(secret, a1, a2, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Organization,
    Owner,
    Receiver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharePoint {
    pub x: u64,
    pub y: u64,
    pub role: Role,
}

/// Points at `X = 1..=d_x`. `X = 1` is the organization, `X = 2` the owner,
/// the rest receivers.
pub fn generate_points(policy: &ParabolicPolicy, d_x: usize) -> Result<Vec<SharePoint>, ShareError> {
    if d_x < THRESHOLD {
        return Err(ShareError::TooFewParticipants(d_x));
    }
    if d_x as u64 >= policy.p {
        return Err(ShareError::OutOfField {
            value: d_x as u64,
            p: policy.p,
        });
    }
    Ok((1..=d_x as u64)
        .map(|x| SharePoint {
            x,
            y: policy.eval(x),
            role: match x {
                1 => Role::Organization,
                2 => Role::Owner,
                _ => Role::Receiver,
            },
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BindingCode(pub u64);

/// `digest(BE(sec_key) || BE(x) || BE(y)) mod p`.
pub fn binding_code(sec_key: &BigUint, point: &SharePoint, p: u64) -> BindingCode {
    let mut h = Fnv1a::new();
    h.update(&sec_key.to_bytes_be())
        .update(&point.x.to_be_bytes())
        .update(&point.y.to_be_bytes());
    BindingCode(h.finish() % p)
}

fn check_distinct(xs: &[u64], p: u64) -> Result<(), ShareError> {
    for (i, &x) in xs.iter().enumerate() {
        check_field(x, p)?;
        if xs[..i].contains(&x) {
            return Err(ShareError::DuplicateX(x));
        }
    }
    Ok(())
}

/// `l_j(x_eval) = prod_{m != j} (x_eval - x_m) / (x_j - x_m) mod p`.
pub fn lagrange_basis(j: usize, x_eval: u64, xs: &[u64], p: u64) -> Result<u64, ShareError> {
    if j >= xs.len() {
        return Err(ShareError::IndexOutOfRange(j));
    }
    check_distinct(xs, p)?;
    let xj = xs[j];
    let mut num = 1;
    let mut den = 1;
    for (m, &xm) in xs.iter().enumerate() {
        if m != j {
            num = mul(num, sub(x_eval % p, xm, p), p);
            den = mul(den, sub(xj, xm, p), p);
        }
    }
    Ok(mul(num, inverse(den, p)?, p))
}

/// Interpolate from the first three points and check any extra points
/// against the result. The returned policy is not re-validated for `a2 != 0`.
pub fn reconstruct_secret(points: &[SharePoint], p: u64) -> Result<ParabolicPolicy, ShareError> {
    let xs: Vec<u64> = points.iter().map(|pt| pt.x).collect();
    if xs.contains(&0) {
        return Err(ShareError::ZeroX);
    }
    check_distinct(&xs, p)?;
    if points.len() < THRESHOLD {
        return Err(ShareError::Threshold(points.len()));
    }
    for pt in points {
        check_field(pt.y, p)?;
    }
    let used = &points[..THRESHOLD];
    let (mut a0, mut a1, mut a2) = (0, 0, 0);
    for j in 0..THRESHOLD {
        let xj = used[j].x;
        let (xm, xn) = (used[(j + 1) % 3].x, used[(j + 2) % 3].x);
        // y_j (x - xm)(x - xn) / ((xj - xm)(xj - xn))
        let den = mul(sub(xj, xm, p), sub(xj, xn, p), p);
        let c = mul(used[j].y, inverse(den, p)?, p);
        a2 = add(a2, c, p);
        a1 = sub(a1, mul(c, add(xm, xn, p), p), p);
        a0 = add(a0, mul(c, mul(xm, xn, p), p), p);
    }
    let policy = ParabolicPolicy { a0, a1, a2, p };
    if let Some(bad) = points[THRESHOLD..].iter().find(|pt| policy.eval(pt.x) != pt.y) {
        return Err(ShareError::Inconsistent { x: bad.x });
    }
    Ok(policy)
}

/// For two known shares, count for every candidate secret how many
/// quadratics `(a0, a1, a2) in Z_p^3` pass through both. Brute force over
/// all `(a1, a2)`, so only meant for small `p`.
pub fn consistent_secret_counts(first: SharePoint, second: SharePoint, p: u64) -> Vec<u64> {
    let mut counts = vec![0u64; p as usize];
    let (x1, x2) = (first.x % p, second.x % p);
    let (sq1, sq2) = (mul(x1, x1, p), mul(x2, x2, p));
    for a1 in 0..p {
        for a2 in 0..p {
            let lin1 = add(mul(a1, x1, p), mul(a2, sq1, p), p);
            let a0 = sub(first.y, lin1, p);
            let at2 = add(a0, add(mul(a1, x2, p), mul(a2, sq2, p), p), p);
            if at2 == second.y % p {
                counts[a0 as usize] += 1;
            }
        }
    }
    counts
}

/// On-disk form of one issued point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFile {
    pub p: u64,
    pub x: u64,
    pub y: u64,
    pub role: Role,
    pub kc: BindingCode,
    pub file_id: String,
    pub epoch: u64,
}

impl PointFile {
    pub fn point(&self) -> SharePoint {
        SharePoint {
            x: self.x,
            y: self.y,
            role: self.role,
        }
    }
}
