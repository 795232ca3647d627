//! Timing of the store and access pipeline against the owner's attribute count.

use std::time::Instant;

use pvlt::acl::UserType;
use pvlt::protocol::{ProtocolError, SimConfig, Simulator};
use pvlt::secretshare::ShareError;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub const MIN_REPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub count: usize,
    pub encrypt_ms: f64,
    pub decrypt_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// For each count, a fresh simulator whose owner holds that many attributes
/// stores and reads back `bytes` random bytes `reps` times (at least 10).
/// Reports the median store and access times.
pub fn bench_attributes(
    config: &SimConfig,
    counts: &[usize],
    reps: usize,
    bytes: usize,
) -> Result<Vec<BenchRow>, ProtocolError> {
    let reps = reps.max(MIN_REPS);
    let mut data = vec![0u8; bytes.max(1)];
    ChaCha20Rng::seed_from_u64(config.seed).fill_bytes(&mut data);
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        if count < 2 {
            return Err(ShareError::TooFewAttributes(count).into());
        }
        let mut sim = Simulator::new(config.clone())?;
        let attrs: Vec<String> = (0..count).map(|i| format!("attr:{i}")).collect();
        let refs: Vec<&str> = attrs.iter().map(String::as_str).collect();
        sim.register("owner", UserType::Owner, &refs)?;
        sim.register("reader", UserType::User, &["role:reader"])?;
        sim.register("peer", UserType::User, &["role:peer"])?;
        let (mut enc, mut dec) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
        for rep in 0..=reps {
            let file = format!("bench-{rep}");
            let t = Instant::now();
            sim.store_file("owner", &file, &data, &["reader", "peer"])?;
            let stored = t.elapsed();
            let t = Instant::now();
            let back = sim.request_access("reader", &file)?;
            let read = t.elapsed();
            debug_assert_eq!(back, data);
            // The first round only warms caches.
            if rep > 0 {
                enc.push(stored.as_secs_f64() * 1e3);
                dec.push(read.as_secs_f64() * 1e3);
            }
        }
        rows.push(BenchRow {
            count,
            encrypt_ms: median(&mut enc),
            decrypt_ms: median(&mut dec),
        });
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("count,encrypt_ms,decrypt_ms\n");
    for r in rows {
        s.push_str(&format!("{},{:.4},{:.4}\n", r.count, r.encrypt_ms, r.decrypt_ms));
    }
    s
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let r_squared = if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}
