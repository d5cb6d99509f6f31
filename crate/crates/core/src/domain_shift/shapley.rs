//! Exact interventional Shapley values by coalition enumeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::Model;
use crate::error::{Error, Result};

/// Largest feature count accepted for full enumeration.
pub const MAX_FEATURES: usize = 12;
pub const DEFAULT_BACKGROUND: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    /// Expected prediction over the background set.
    pub baseline: f64,
    pub values: Vec<f64>,
    /// Model output at the explained point.
    pub prediction: f64,
}

impl ShapleyAttribution {
    pub fn total(&self) -> f64 {
        self.baseline + self.values.iter().sum::<f64>()
    }
}

/// `v(S)`: mean prediction with features in `S` from `x` and the rest from
/// each background row.
fn coalition_value(model: &dyn Model, background: &[Vec<f64>], x: &[f64], s: usize, buf: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for row in background {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if s >> i & 1 == 1 { x[i] } else { row[i] };
        }
        sum += model.predict(buf);
    }
    sum / background.len() as f64
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

pub fn shapley(model: &impl Model, background: &[Vec<f64>], x: &[f64]) -> Result<ShapleyAttribution> {
    let d = x.len();
    if background.is_empty() {
        return Err(Error::InvalidInput("empty background set".into()));
    }
    if d == 0 || d > MAX_FEATURES {
        return Err(Error::InvalidInput(format!("feature count {d} outside 1..={MAX_FEATURES}")));
    }
    if background.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("background rows differ in length from x".into()));
    }
    let mut buf = vec![0.0; d];
    let v: Vec<f64> = (0..1usize << d).map(|s| coalition_value(model, background, x, s, &mut buf)).collect();
    let weights: Vec<f64> = (0..d).map(|k| factorial(k) * factorial(d - k - 1) / factorial(d)).collect();
    let values = (0..d)
        .map(|i| {
            (0..1usize << d)
                .filter(|s| s >> i & 1 == 0)
                .map(|s| weights[s.count_ones() as usize] * (v[s | 1 << i] - v[s]))
                .sum()
        })
        .collect();
    Ok(ShapleyAttribution { baseline: v[0], values, prediction: v[(1 << d) - 1] })
}

/// At most `max` rows, chosen without replacement under `seed`, in original order.
pub fn subsample_background(rows: &[Vec<f64>], max: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= max {
        return rows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, rows.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}
