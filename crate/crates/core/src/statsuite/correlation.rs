//! Correlation of adjacent pixel pairs.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::StatError;

pub const DEFAULT_PAIRS: usize = 16_384;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Horizontal: (r, c) and (r, c + 1).
    H,
    /// Vertical: (r, c) and (r + 1, c).
    V,
    /// Diagonal: (r, c) and (r + 1, c + 1).
    D,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::H, Direction::V, Direction::D];

    fn offsets(self) -> (usize, usize) {
        match self {
            Direction::H => (0, 1),
            Direction::V => (1, 0),
            Direction::D => (1, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub direction: Direction,
    pub coefficient: f64,
    pub pair_count: usize,
}

/// Signed Pearson coefficient of two equally long series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(StatError::ZeroVariance);
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample `pair_count` distinct adjacent pairs of a row-major grid in the
/// given direction and correlate them.
pub fn correlation(
    grid: &[f64],
    width: usize,
    height: usize,
    direction: Direction,
    pair_count: usize,
    seed: u64,
) -> Result<CorrelationReport, StatError> {
    if width < 2 || height < 2 {
        return Err(StatError::ImageTooSmall { width, height });
    }
    if grid.len() != width * height {
        return Err(StatError::GridShape {
            width,
            height,
            len: grid.len(),
        });
    }
    let (dr, dc) = direction.offsets();
    let (rows, cols) = (height - dr, width - dc);
    let available = rows * cols;
    if pair_count > available || pair_count == 0 {
        return Err(StatError::PairCount {
            requested: pair_count,
            available,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, available, pair_count);
    let mut xs = Vec::with_capacity(pair_count);
    let mut ys = Vec::with_capacity(pair_count);
    for i in picks.iter() {
        let (r, c) = (i / cols, i % cols);
        xs.push(grid[r * width + c]);
        ys.push(grid[(r + dr) * width + c + dc]);
    }
    Ok(CorrelationReport {
        direction,
        coefficient: pearson(&xs, &ys)?,
        pair_count,
    })
}

pub fn correlation_bytes(
    pixels: &[u8],
    width: usize,
    height: usize,
    direction: Direction,
    pair_count: usize,
    seed: u64,
) -> Result<CorrelationReport, StatError> {
    let grid: Vec<f64> = pixels.iter().map(|&p| f64::from(p)).collect();
    correlation(&grid, width, height, direction, pair_count, seed)
}

/// Rows `image,direction,original,encrypted`.
pub fn correlation_csv(rows: &[(String, Direction, f64, f64)]) -> String {
    let mut s = String::from("image,direction,original,encrypted\n");
    for (img, dir, o, e) in rows {
        s.push_str(&format!("{img},{dir:?},{o:.6},{e:.6}\n"));
    }
    s
}
