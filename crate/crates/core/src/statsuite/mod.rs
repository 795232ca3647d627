//! Randomness and image statistics: the SP800-22 battery, adjacent-pixel
//! correlation and a byte-histogram chi-square test.

pub mod correlation;
pub mod histogram;
pub mod nist;
pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correlation::{correlation, CorrelationReport, Direction};
pub use histogram::{histogram_uniformity, HistogramReport};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const MIN_BITS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("input value {0} is not a bit")]
    NotBits(u8),
    #[error("sequence of {n} bits is below the floor of {min}")]
    TooShort { n: usize, min: usize },
    #[error("image {width}x{height} is smaller than 2x2")]
    ImageTooSmall { width: usize, height: usize },
    #[error("grid of {width}x{height} does not match {len} values")]
    GridShape { width: usize, height: usize, len: usize },
    #[error("requested {requested} pairs, only {available} available")]
    PairCount { requested: usize, available: usize },
    #[error("zero variance in sampled pixels")]
    ZeroVariance,
    #[error("histogram needs at least 256 bytes, got {0}")]
    HistogramTooShort(usize),
}

/// Which templates the non-overlapping test uses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateChoice {
    Single(Vec<u8>),
    /// Every aperiodic template of the configured length.
    AllAperiodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NistParams {
    pub alpha: f64,
    pub block_frequency_m: usize,
    pub template_len: usize,
    pub templates: TemplateChoice,
    pub template_blocks: usize,
    pub overlapping_m: usize,
    pub overlapping_block: usize,
    pub overlapping_k: usize,
    pub linear_complexity_m: usize,
    pub serial_m: usize,
    pub apen_m: usize,
}

impl Default for NistParams {
    fn default() -> Self {
        NistParams {
            alpha: DEFAULT_ALPHA,
            block_frequency_m: 128,
            template_len: 9,
            templates: TemplateChoice::Single(vec![0, 0, 0, 0, 0, 0, 0, 0, 1]),
            template_blocks: 8,
            overlapping_m: 9,
            overlapping_block: 1032,
            overlapping_k: 5,
            linear_complexity_m: 500,
            serial_m: 16,
            apen_m: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub p_values: Vec<f64>,
    /// `None` when the test does not apply to this input.
    pub pass: Option<bool>,
    pub params: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skipped: Option<String>,
}

impl TestResult {
    fn run(name: &str, params: String, p_values: Vec<f64>, alpha: f64) -> Self {
        let min = p_values.iter().copied().fold(f64::INFINITY, f64::min);
        TestResult {
            name: name.to_string(),
            pass: Some(min > alpha),
            p_values,
            params,
            skipped: None,
        }
    }

    fn skip(name: &str, params: String, reason: String) -> Self {
        TestResult {
            name: name.to_string(),
            p_values: Vec::new(),
            pass: None,
            params,
            skipped: Some(reason),
        }
    }

    pub fn min_p(&self) -> Option<f64> {
        self.p_values.iter().copied().reduce(f64::min)
    }
}

pub const TEST_NAMES: [&str; 16] = [
    "Frequency",
    "Block Frequency",
    "Cumulative Sums",
    "Runs",
    "Longest Run of Ones",
    "Rank",
    "FFT",
    "Non-overlapping Template",
    "Overlapping Template",
    "Universal",
    "Approximate Entropy",
    "Random Excursions",
    "Random Excursions Variant",
    "Linear Complexity",
    "Serial-1",
    "Serial-2",
];

fn log2_floor(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

/// Run all sixteen tests. Tests whose applicability rules fail on this
/// input are reported as skipped.
pub fn nist_battery(bits: &[u8], params: &NistParams) -> Result<Vec<TestResult>, StatError> {
    nist::validate(bits)?;
    let n = bits.len();
    if n < MIN_BITS {
        return Err(StatError::TooShort { n, min: MIN_BITS });
    }
    let a = params.alpha;
    let mut out = Vec::with_capacity(16);
    let run = |name: &str, p: String, v: Vec<f64>| TestResult::run(name, p, v, a);

    out.push(run("Frequency", String::new(), vec![nist::frequency(bits)]));

    let m = params.block_frequency_m;
    let p = format!("M={m}");
    out.push(if n / m >= 1 {
        run("Block Frequency", p, vec![nist::block_frequency(bits, m)])
    } else {
        TestResult::skip("Block Frequency", p, format!("fewer than {m} bits"))
    });

    out.push(run(
        "Cumulative Sums",
        "forward,reverse".into(),
        vec![nist::cumulative_sums(bits, false), nist::cumulative_sums(bits, true)],
    ));
    out.push(run("Runs", String::new(), vec![nist::runs(bits)]));

    out.push(if n >= 128 {
        run("Longest Run of Ones", String::new(), vec![nist::longest_run(bits)])
    } else {
        TestResult::skip("Longest Run of Ones", String::new(), "n < 128".into())
    });

    out.push(if n >= 38 * 1024 {
        run("Rank", "32x32".into(), vec![nist::binary_rank(bits)])
    } else {
        TestResult::skip("Rank", "32x32".into(), "n < 38912".into())
    });

    out.push(run("FFT", String::new(), vec![nist::spectral(bits)]));

    let tl = params.template_len;
    let templates = match &params.templates {
        TemplateChoice::Single(t) => vec![t.clone()],
        TemplateChoice::AllAperiodic => nist::aperiodic_templates(tl),
    };
    let p = match &params.templates {
        TemplateChoice::Single(t) => format!(
            "m={},N={},B={}",
            t.len(),
            params.template_blocks,
            t.iter().map(|b| char::from(b'0' + b)).collect::<String>()
        ),
        TemplateChoice::AllAperiodic => format!(
            "m={tl},N={},templates={}",
            params.template_blocks,
            templates.len()
        ),
    };
    let longest_template = templates.iter().map(Vec::len).max().unwrap_or(0);
    out.push(if n / params.template_blocks > longest_template {
        run(
            "Non-overlapping Template",
            p,
            nist::non_overlapping_templates(bits, &templates, params.template_blocks),
        )
    } else {
        TestResult::skip("Non-overlapping Template", p, "blocks shorter than template".into())
    });

    let (om, ob, ok) = (params.overlapping_m, params.overlapping_block, params.overlapping_k);
    let p = format!("m={om},M={ob},K={ok}");
    out.push(if n >= ob {
        run("Overlapping Template", p, vec![nist::overlapping_template(bits, om, ob, ok)])
    } else {
        TestResult::skip("Overlapping Template", p, format!("n < {ob}"))
    });

    let (l, q) = nist::universal_parameters(n);
    let p = format!("L={l},Q={q}");
    out.push(match nist::universal(bits, l, q) {
        Some(v) => run("Universal", p, vec![v]),
        None => TestResult::skip("Universal", p, "no blocks after initialisation".into()),
    });

    let am = params.apen_m;
    let p = format!("m={am}");
    out.push(if am + 5 < log2_floor(n) {
        run("Approximate Entropy", p, vec![nist::approximate_entropy(bits, am)])
    } else {
        TestResult::skip("Approximate Entropy", p, "m >= log2(n) - 5".into())
    });

    let j = nist::excursion_cycles(bits);
    let floor = (0.005 * (n as f64).sqrt()).max(500.0);
    let p = format!("J={j}");
    if (j as f64) < floor {
        let reason = format!("J = {j} cycles below {floor}");
        out.push(TestResult::skip("Random Excursions", p.clone(), reason.clone()));
        out.push(TestResult::skip("Random Excursions Variant", p, reason));
    } else {
        out.push(run("Random Excursions", p.clone(), nist::random_excursions(bits)));
        out.push(run("Random Excursions Variant", p, nist::random_excursions_variant(bits)));
    }

    let lm = params.linear_complexity_m;
    let p = format!("M={lm}");
    out.push(if n >= lm {
        run("Linear Complexity", p, vec![nist::linear_complexity(bits, lm)])
    } else {
        TestResult::skip("Linear Complexity", p, format!("n < {lm}"))
    });

    let sm = params.serial_m;
    let p = format!("m={sm}");
    if sm + 2 < log2_floor(n) {
        let (p1, p2) = nist::serial(bits, sm);
        out.push(run("Serial-1", p.clone(), vec![p1]));
        out.push(run("Serial-2", p, vec![p2]));
    } else {
        let reason = "m >= log2(n) - 2".to_string();
        out.push(TestResult::skip("Serial-1", p.clone(), reason.clone()));
        out.push(TestResult::skip("Serial-2", p, reason));
    }
    Ok(out)
}

/// Bytes to bits, most significant bit first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_alternating() {
        let ones = vec![1u8; 1_000_000];
        let r = nist_battery(&ones, &NistParams::default()).unwrap();
        assert!(r[0].p_values[0] < 1e-100);
        assert_eq!(r[0].pass, Some(false));
        let alt: Vec<u8> = (0..1_000_000).map(|i| (i % 2) as u8).collect();
        assert_eq!(nist::frequency(&alt), 1.0);
    }

    #[test]
    fn short_inputs() {
        assert!(matches!(
            nist_battery(&[0, 1], &NistParams::default()),
            Err(StatError::TooShort { n: 2, min: 100 })
        ));
        assert_eq!(
            nist_battery(&[2; 200], &NistParams::default()),
            Err(StatError::NotBits(2))
        );
        let bits: Vec<u8> = (0..200).map(|i| ((i * 7 + i / 3) % 2) as u8).collect();
        let r = nist_battery(&bits, &NistParams::default()).unwrap();
        assert_eq!(r.len(), 16);
        let names: Vec<&str> = r.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, TEST_NAMES);
        assert!(r.iter().any(|t| t.skipped.is_some()));
        for t in &r {
            assert!(t.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn bit_unpacking() {
        assert_eq!(bytes_to_bits(&[0b1000_0001]), vec![1, 0, 0, 0, 0, 0, 0, 1]);
    }
}
