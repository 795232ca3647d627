//! Byte histogram and its chi-square distance from uniform.

use serde::{Deserialize, Serialize};

use super::special::igamc;
use super::StatError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bins: Vec<u64>,
    pub chi_square: f64,
    /// Upper tail of chi-square with 255 degrees of freedom.
    pub p_value: f64,
}

pub fn histogram_uniformity(data: &[u8]) -> Result<HistogramReport, StatError> {
    if data.len() < 256 {
        return Err(StatError::HistogramTooShort(data.len()));
    }
    let mut bins = vec![0u64; 256];
    for &b in data {
        bins[usize::from(b)] += 1;
    }
    let expected = data.len() as f64 / 256.0;
    let chi_square: f64 = bins
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    Ok(HistogramReport {
        p_value: igamc(255.0 / 2.0, chi_square / 2.0),
        bins,
        chi_square,
    })
}

impl HistogramReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,count\n");
        for (v, c) in self.bins.iter().enumerate() {
            s.push_str(&format!("{v},{c}\n"));
        }
        s
    }
}
