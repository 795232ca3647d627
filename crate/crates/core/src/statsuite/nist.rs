//! The sixteen SP800-22 tests on a sequence of 0/1 values.

use std::collections::HashMap;

use rustfft::{num_complex::Complex, FftPlanner};

use super::special::{erfc, igamc, normal_cdf};
use super::StatError;

fn check_bits(bits: &[u8]) -> Result<(), StatError> {
    if let Some(&b) = bits.iter().find(|&&b| b > 1) {
        return Err(StatError::NotBits(b));
    }
    Ok(())
}

fn ones(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b == 1).count()
}

pub fn frequency(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let s = 2.0 * ones(bits) as f64 - n;
    erfc(s.abs() / n.sqrt() / std::f64::consts::SQRT_2)
}

pub fn block_frequency(bits: &[u8], m: usize) -> f64 {
    let blocks = bits.len() / m;
    let chi: f64 = bits
        .chunks_exact(m)
        .map(|b| {
            let pi = ones(b) as f64 / m as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    igamc(blocks as f64 / 2.0, chi / 2.0)
}

/// Forward when `reverse` is false.
pub fn cumulative_sums(bits: &[u8], reverse: bool) -> f64 {
    let n = bits.len() as f64;
    let step = |b: &u8| if *b == 1 { 1i64 } else { -1 };
    let mut s = 0i64;
    let mut z = 0i64;
    let mut walk = |b: &u8| {
        s += step(b);
        z = z.max(s.abs());
    };
    if reverse {
        bits.iter().rev().for_each(&mut walk);
    } else {
        bits.iter().for_each(&mut walk);
    }
    let z = z as f64;
    let sq = n.sqrt();
    let range = |lo: f64, hi: f64| (lo as i64)..=(hi as i64);
    let mut sum1 = 0.0;
    for k in range((-n / z + 1.0) / 4.0, (n / z - 1.0) / 4.0) {
        let k = k as f64;
        sum1 += normal_cdf((4.0 * k + 1.0) * z / sq) - normal_cdf((4.0 * k - 1.0) * z / sq);
    }
    let mut sum2 = 0.0;
    for k in range((-n / z - 3.0) / 4.0, (n / z - 1.0) / 4.0) {
        let k = k as f64;
        sum2 += normal_cdf((4.0 * k + 3.0) * z / sq) - normal_cdf((4.0 * k + 1.0) * z / sq);
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

pub fn runs(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let pi = ones(bits) as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let q = pi * (1.0 - pi);
    erfc((v as f64 - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q))
}

pub fn longest_run(bits: &[u8]) -> f64 {
    let n = bits.len();
    let (m, lo, hi, pis): (usize, usize, usize, &[f64]) = if n < 6272 {
        (8, 1, 4, &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, 4, 9, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (
            10_000,
            10,
            16,
            &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
        )
    };
    let blocks = n / m;
    let mut v = vec![0f64; pis.len()];
    for b in bits.chunks_exact(m) {
        let (mut best, mut cur) = (0, 0);
        for &x in b {
            cur = if x == 1 { cur + 1 } else { 0 };
            best = usize::max(best, cur);
        }
        v[best.clamp(lo, hi) - lo] += 1.0;
    }
    let nb = blocks as f64;
    let chi: f64 = v
        .iter()
        .zip(pis)
        .map(|(&vi, &p)| (vi - nb * p).powi(2) / (nb * p))
        .sum();
    igamc((pis.len() - 1) as f64 / 2.0, chi / 2.0)
}

fn gf2_rank(rows: &mut [u32; 32]) -> u32 {
    let mut rank = 0;
    for col in (0..32).rev() {
        let bit = 1u32 << col;
        let Some(piv) = (rank..32).find(|&i| rows[i] & bit != 0) else {
            continue;
        };
        rows.swap(rank, piv);
        for i in 0..32 {
            if i != rank && rows[i] & bit != 0 {
                rows[i] ^= rows[rank];
            }
        }
        rank += 1;
    }
    rank as u32
}

fn rank_probability(r: i32) -> f64 {
    let (m, q) = (32i32, 32i32);
    let mut v = 2f64.powi(r * (q + m - r) - m * q);
    for i in 0..r {
        v *= (1.0 - 2f64.powi(i - q)) * (1.0 - 2f64.powi(i - m)) / (1.0 - 2f64.powi(i - r));
    }
    v
}

pub fn binary_rank(bits: &[u8]) -> f64 {
    let blocks = bits.len() / 1024;
    let p32 = rank_probability(32);
    let p31 = rank_probability(31);
    let p30 = 1.0 - p32 - p31;
    let mut f = [0f64; 3];
    for b in bits.chunks_exact(1024) {
        let mut rows = [0u32; 32];
        for (r, row) in b.chunks_exact(32).enumerate() {
            rows[r] = row.iter().fold(0u32, |acc, &x| (acc << 1) | u32::from(x));
        }
        match gf2_rank(&mut rows) {
            32 => f[0] += 1.0,
            31 => f[1] += 1.0,
            _ => f[2] += 1.0,
        }
    }
    let n = blocks as f64;
    let chi = [p32, p31, p30]
        .iter()
        .zip(f)
        .map(|(&p, fi)| (fi - n * p).powi(2) / (n * p))
        .sum::<f64>();
    (-chi / 2.0).exp()
}

pub fn spectral(bits: &[u8]) -> f64 {
    let n = bits.len();
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|&b| Complex::new(if b == 1 { 1.0 } else { -1.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let t = ((1.0f64 / 0.05).ln() * nf).sqrt();
    let n0 = 0.95 * nf / 2.0;
    let n1 = buf[..n / 2].iter().filter(|c| c.norm() < t).count() as f64;
    let d = (n1 - n0) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    erfc(d.abs() / std::f64::consts::SQRT_2)
}

/// All templates of length `m` that cannot overlap a shifted copy of
/// themselves, in increasing numeric order.
pub fn aperiodic_templates(m: usize) -> Vec<Vec<u8>> {
    (0u32..1 << m)
        .map(|v| (0..m).rev().map(|i| ((v >> i) & 1) as u8).collect::<Vec<u8>>())
        .filter(|t| (1..m).all(|k| t[k..] != t[..m - k]))
        .collect()
}

fn window_values(bits: &[u8], m: usize) -> Vec<u32> {
    let mask = (1u32 << m) - 1;
    let mut v = 0u32;
    let mut out = Vec::with_capacity(bits.len().saturating_sub(m - 1));
    for (i, &b) in bits.iter().enumerate() {
        v = ((v << 1) | u32::from(b)) & mask;
        if i + 1 >= m {
            out.push(v);
        }
    }
    out
}

fn template_value(t: &[u8]) -> u32 {
    t.iter().fold(0, |acc, &b| (acc << 1) | u32::from(b))
}

/// One p-value per template; `blocks` is N.
pub fn non_overlapping_templates(bits: &[u8], templates: &[Vec<u8>], blocks: usize) -> Vec<f64> {
    let n = bits.len();
    let big_m = n / blocks;
    templates
        .iter()
        .map(|t| {
            let m = t.len();
            let target = template_value(t);
            let mu = (big_m - m + 1) as f64 / 2f64.powi(m as i32);
            let var = big_m as f64
                * (1.0 / 2f64.powi(m as i32) - (2 * m - 1) as f64 / 2f64.powi(2 * m as i32));
            let mut chi = 0.0;
            for j in 0..blocks {
                let w = window_values(&bits[j * big_m..(j + 1) * big_m], m);
                let mut count = 0usize;
                let mut i = 0;
                while i < w.len() {
                    if w[i] == target {
                        count += 1;
                        i += m;
                    } else {
                        i += 1;
                    }
                }
                chi += (count as f64 - mu).powi(2) / var;
            }
            igamc(blocks as f64 / 2.0, chi / 2.0)
        })
        .collect()
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Class probabilities for the overlapping-template counts 0..K-1, then
/// the remainder for `>= K`.
pub fn overlapping_probabilities(m: usize, big_m: usize, k: usize) -> Vec<f64> {
    let lambda = (big_m - m + 1) as f64 / 2f64.powi(m as i32);
    let eta = lambda / 2.0;
    let pr = |u: usize| -> f64 {
        if u == 0 {
            return (-eta).exp();
        }
        let u_f = u as f64;
        (1..=u)
            .map(|l| {
                let l = l as f64;
                (-eta - u_f * 2f64.ln() + l * eta.ln() - ln_gamma(l + 1.0) + ln_gamma(u_f)
                    - ln_gamma(l)
                    - ln_gamma(u_f - l + 1.0))
                    .exp()
            })
            .sum()
    };
    let mut pis: Vec<f64> = (0..k).map(pr).collect();
    let rest = 1.0 - pis.iter().sum::<f64>();
    pis.push(rest);
    pis
}

pub fn overlapping_template(bits: &[u8], m: usize, big_m: usize, k: usize) -> f64 {
    let blocks = bits.len() / big_m;
    let target = (1u32 << m) - 1;
    let pis = overlapping_probabilities(m, big_m, k);
    let mut v = vec![0f64; k + 1];
    for b in bits.chunks_exact(big_m) {
        let w = window_values(b, m).iter().filter(|&&x| x == target).count();
        v[w.min(k)] += 1.0;
    }
    let n = blocks as f64;
    let chi: f64 = v
        .iter()
        .zip(&pis)
        .map(|(&vi, &p)| (vi - n * p).powi(2) / (n * p))
        .sum();
    igamc(k as f64 / 2.0, chi / 2.0)
}

const UNIVERSAL_EXPECTED: [f64; 17] = [
    0.0, 0.7326495, 1.5374383, 2.4016068, 3.3112247, 4.2534266, 5.2177052, 6.1962507, 7.1836656,
    8.1764248, 9.1723243, 10.170032, 11.168765, 12.168070, 13.167693, 14.167488, 15.167379,
];
const UNIVERSAL_VARIANCE: [f64; 17] = [
    0.0, 0.690, 1.338, 1.901, 2.358, 2.705, 2.954, 3.125, 3.238, 3.311, 3.356, 3.384, 3.401,
    3.410, 3.416, 3.419, 3.421,
];

/// Block length L and initialisation blocks Q for a sequence length.
pub fn universal_parameters(n: usize) -> (usize, usize) {
    let l = [
        (387_840, 6),
        (904_960, 7),
        (2_068_480, 8),
        (4_654_080, 9),
        (10_342_400, 10),
    ]
    .iter()
    .filter(|(thr, _)| n >= *thr)
    .map(|&(_, l)| l)
    .last()
    .unwrap_or(5);
    (l, 10 << l)
}

/// `None` when the sequence holds no test blocks after initialisation.
pub fn universal(bits: &[u8], l: usize, q: usize) -> Option<f64> {
    let blocks: Vec<usize> = bits
        .chunks_exact(l)
        .map(|c| c.iter().fold(0usize, |a, &b| (a << 1) | usize::from(b)))
        .collect();
    if blocks.len() <= q {
        return None;
    }
    let k = blocks.len() - q;
    let mut table = vec![0usize; 1 << l];
    for (i, &b) in blocks[..q].iter().enumerate() {
        table[b] = i + 1;
    }
    let mut sum = 0.0;
    for (i, &b) in blocks.iter().enumerate().skip(q) {
        sum += ((i + 1 - table[b]) as f64).log2();
        table[b] = i + 1;
    }
    let kf = k as f64;
    let lf = l as f64;
    let f = sum / kf;
    let c = 0.7 - 0.8 / lf + (4.0 + 32.0 / lf) * kf.powf(-3.0 / lf) / 15.0;
    let sigma = c * (UNIVERSAL_VARIANCE[l] / kf).sqrt();
    Some(erfc((f - UNIVERSAL_EXPECTED[l]).abs() / (std::f64::consts::SQRT_2 * sigma)))
}

/// Counts of every cyclic m-bit pattern, indexed by value.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        return counts;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut v = 0usize;
    for &b in &bits[..m - 1] {
        v = (v << 1) | usize::from(b);
    }
    for i in 0..n {
        v = ((v << 1) | usize::from(bits[(i + m - 1) % n])) & mask;
        counts[v] += 1;
    }
    counts
}

pub fn approximate_entropy(bits: &[u8], m: usize) -> f64 {
    let n = bits.len() as f64;
    let phi = |m: usize| -> f64 {
        if m == 0 {
            return 0.0;
        }
        pattern_counts(bits, m)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum()
    };
    let ap = phi(m) - phi(m + 1);
    let chi = 2.0 * n * (2f64.ln() - ap);
    igamc(2f64.powi(m as i32 - 1), chi / 2.0)
}

/// The two serial p-values.
pub fn serial(bits: &[u8], m: usize) -> (f64, f64) {
    let n = bits.len() as f64;
    let psi = |m: isize| -> f64 {
        if m <= 0 {
            return 0.0;
        }
        let counts = pattern_counts(bits, m as usize);
        let sq: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
        2f64.powi(m as i32) / n * sq - n
    };
    let m = m as isize;
    let (p0, p1, p2) = (psi(m), psi(m - 1), psi(m - 2));
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    (
        igamc(2f64.powi(m as i32 - 2), d1 / 2.0),
        igamc(2f64.powi(m as i32 - 3), d2 / 2.0),
    )
}

/// Linear complexity of one block, by Berlekamp-Massey over GF(2).
pub fn berlekamp_massey(s: &[u8]) -> usize {
    let n = s.len();
    let mut b = vec![0u8; n + 1];
    let mut c = vec![0u8; n + 1];
    b[0] = 1;
    c[0] = 1;
    let mut l = 0usize;
    let mut m: isize = -1;
    for i in 0..n {
        let mut d = s[i];
        for j in 1..=l {
            d ^= c[j] & s[i - j];
        }
        if d == 1 {
            let t = c.clone();
            let shift = (i as isize - m) as usize;
            for j in 0..=(n - shift) {
                if j + shift <= n {
                    c[j + shift] ^= b[j];
                }
            }
            if l <= i / 2 {
                l = i + 1 - l;
                m = i as isize;
                b = t;
            }
        }
    }
    l
}

const LINEAR_COMPLEXITY_PI: [f64; 7] = [0.01047, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833];

pub fn linear_complexity(bits: &[u8], big_m: usize) -> f64 {
    let blocks = bits.len() / big_m;
    let mf = big_m as f64;
    let sign = if big_m % 2 == 0 { 1.0 } else { -1.0 };
    let mu = mf / 2.0 + (9.0 - sign) / 36.0 - (mf / 3.0 + 2.0 / 9.0) / 2f64.powf(mf);
    let mut v = [0f64; 7];
    for b in bits.chunks_exact(big_m) {
        let l = berlekamp_massey(b) as f64;
        let t = sign * (l - mu) + 2.0 / 9.0;
        let class = if t <= -2.5 {
            0
        } else if t <= -1.5 {
            1
        } else if t <= -0.5 {
            2
        } else if t <= 0.5 {
            3
        } else if t <= 1.5 {
            4
        } else if t <= 2.5 {
            5
        } else {
            6
        };
        v[class] += 1.0;
    }
    let n = blocks as f64;
    let chi: f64 = v
        .iter()
        .zip(LINEAR_COMPLEXITY_PI)
        .map(|(&vi, p)| (vi - n * p).powi(2) / (n * p))
        .sum();
    igamc(3.0, chi / 2.0)
}

/// The walk `0, S_1, .., S_n, 0` and the number of cycles J.
fn excursion_walk(bits: &[u8]) -> (Vec<i64>, usize) {
    let mut walk = Vec::with_capacity(bits.len() + 2);
    walk.push(0i64);
    let mut s = 0i64;
    for &b in bits {
        s += if b == 1 { 1 } else { -1 };
        walk.push(s);
    }
    walk.push(0);
    let zeros = walk.iter().filter(|&&v| v == 0).count();
    (walk, zeros - 1)
}

pub fn excursion_cycles(bits: &[u8]) -> usize {
    excursion_walk(bits).1
}

pub const EXCURSION_STATES: [i64; 8] = [-4, -3, -2, -1, 1, 2, 3, 4];

/// p-values for states -4..-1, 1..4, in that order.
pub fn random_excursions(bits: &[u8]) -> Vec<f64> {
    let (walk, j) = excursion_walk(bits);
    let mut visits: Vec<HashMap<i64, usize>> = Vec::with_capacity(j);
    let mut cur: HashMap<i64, usize> = HashMap::new();
    for &v in &walk[1..] {
        if v == 0 {
            visits.push(std::mem::take(&mut cur));
        } else {
            *cur.entry(v).or_default() += 1;
        }
    }
    let jf = j as f64;
    EXCURSION_STATES
        .iter()
        .map(|&x| {
            let a = x.unsigned_abs() as f64;
            let q = 1.0 - 1.0 / (2.0 * a);
            let mut pi = vec![q];
            for k in 1..5 {
                pi.push(1.0 / (4.0 * a * a) * q.powi(k - 1));
            }
            pi.push(1.0 / (2.0 * a) * q.powi(4));
            let mut v = [0f64; 6];
            for cycle in &visits {
                let k = cycle.get(&x).copied().unwrap_or(0).min(5);
                v[k] += 1.0;
            }
            let chi: f64 = v
                .iter()
                .zip(&pi)
                .map(|(&vk, &p)| (vk - jf * p).powi(2) / (jf * p))
                .sum();
            igamc(2.5, chi / 2.0)
        })
        .collect()
}

pub const VARIANT_STATES: [i64; 18] = [
    -9, -8, -7, -6, -5, -4, -3, -2, -1, 1, 2, 3, 4, 5, 6, 7, 8, 9,
];

/// p-values for states -9..-1, 1..9, in that order.
pub fn random_excursions_variant(bits: &[u8]) -> Vec<f64> {
    let (walk, j) = excursion_walk(bits);
    let jf = j as f64;
    VARIANT_STATES
        .iter()
        .map(|&x| {
            let xi = walk.iter().filter(|&&v| v == x).count() as f64;
            erfc((xi - jf).abs() / (2.0 * jf * (4.0 * x.unsigned_abs() as f64 - 2.0)).sqrt())
        })
        .collect()
}

pub(crate) fn validate(bits: &[u8]) -> Result<(), StatError> {
    check_bits(bits)
}
