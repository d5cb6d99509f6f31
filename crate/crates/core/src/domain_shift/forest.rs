//! Bagged CART regression trees used as the attribution surrogate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that maps a feature vector to a prediction.
pub trait Model: Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for F {
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    pub fn leaf(value: f64) -> Self {
        Node::Leaf { value }
    }

    pub fn split(feature: usize, threshold: f64, left: Node, right: Node) -> Self {
        Node::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Features used by any split of this subtree.
    pub fn uses_feature(&self, f: usize) -> bool {
        match self {
            Node::Leaf { .. } => false,
            Node::Split { feature, left, right, .. } => *feature == f || left.uses_feature(f) || right.uses_feature(f),
        }
    }
}

impl Model for Node {
    fn predict(&self, x: &[f64]) -> f64 {
        Node::predict(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 4, min_leaf: 5, seed: 42 }
    }
}

/// Mean of its trees' predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Node>,
    pub config: ForestConfig,
}

impl TreeEnsemble {
    pub fn from_trees(trees: Vec<Node>, config: ForestConfig) -> Self {
        TreeEnsemble { trees, config }
    }

    pub fn uses_feature(&self, f: usize) -> bool {
        self.trees.iter().any(|t| t.uses_feature(f))
    }
}

impl Model for TreeEnsemble {
    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Data<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    d: usize,
}

fn mean(idx: &[usize], y: &[f64]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

fn grow(data: &Data, idx: &mut [usize], depth: usize, cfg: &ForestConfig) -> Node {
    let n = idx.len();
    let m = mean(idx, data.y);
    if depth >= cfg.max_depth || n < 2 * cfg.min_leaf {
        return Node::leaf(m);
    }
    let sse: f64 = idx.iter().map(|&i| (data.y[i] - m).powi(2)).sum();
    if sse <= 1e-24 {
        return Node::leaf(m);
    }
    // (gain, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    let total: f64 = idx.iter().map(|&i| data.y[i]).sum();
    let mut order = idx.to_vec();
    for f in 0..data.d {
        order.sort_by(|&a, &b| data.x[a][f].total_cmp(&data.x[b][f]).then(a.cmp(&b)));
        let mut left = 0.0;
        for p in 0..n - 1 {
            left += data.y[order[p]];
            let (nl, nr) = (p + 1, n - p - 1);
            let (xa, xb) = (data.x[order[p]][f], data.x[order[p + 1]][f]);
            if nl < cfg.min_leaf || nr < cfg.min_leaf || xa == xb {
                continue;
            }
            // SSE reduction up to a constant: sum_l^2/n_l + sum_r^2/n_r
            let right = total - left;
            let gain = left * left / nl as f64 + right * right / nr as f64 - total * total / n as f64;
            if best.is_none_or(|b| gain > b.0 + 1e-12) {
                best = Some((gain, f, (xa + xb) / 2.0));
            }
        }
    }
    let Some((gain, feature, threshold)) = best else {
        return Node::leaf(m);
    };
    if gain <= 1e-12 {
        return Node::leaf(m);
    }
    let split = partition(idx, |i| data.x[i][feature] <= threshold);
    let (l, r) = idx.split_at_mut(split);
    Node::split(feature, threshold, grow(data, l, depth + 1, cfg), grow(data, r, depth + 1, cfg))
}

/// Stable partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (mut yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let k = yes.len();
    yes.extend(no);
    idx.copy_from_slice(&yes);
    k
}

/// One regression tree on all rows, no resampling.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], config: &ForestConfig) -> Result<Node> {
    let data = check(x, y, config)?;
    let mut idx: Vec<usize> = (0..y.len()).collect();
    Ok(grow(&data, &mut idx, 0, config))
}

fn check<'a>(x: &'a [Vec<f64>], y: &'a [f64], config: &ForestConfig) -> Result<Data<'a>> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    if y.len() < config.min_leaf.max(1) {
        return Err(Error::Fit(format!("{} records, fewer than min_leaf = {}", y.len(), config.min_leaf)));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) || x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("feature rows must be finite and of equal length".into()));
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(Error::Fit("n_trees and min_leaf must be positive".into()));
    }
    Ok(Data { x, y, d })
}

/// Bagged CART: tree `t` is grown on a bootstrap sample drawn from RNG
/// stream `t` of the configured seed.
pub fn fit_ensemble(x: &[Vec<f64>], y: &[f64], config: &ForestConfig) -> Result<TreeEnsemble> {
    let data = check(x, y, config)?;
    if y.len() < 20 {
        log::warn!("fitting a forest on only {} records", y.len());
    }
    let n = y.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow(&data, &mut idx, 0, config)
        })
        .collect();
    Ok(TreeEnsemble { trees, config: *config })
}

/// Coefficient of determination of `model` on `(x, y)`.
pub fn r_squared(model: &impl Model, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(r, v)| (v - model.predict(r)).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> =
            (0..60).map(|i| vec![(i % 9) as f64 * 0.45, 20.0 + (i % 13) as f64, (i % 2) as f64]).collect();
        let y = x.iter().map(|r| if r[0] > 2.0 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn step_function_is_learned() {
        let (x, y) = step_data();
        let f = fit_ensemble(&x, &y, &ForestConfig::default()).unwrap();
        assert!(r_squared(&f, &x, &y) >= 0.95);
        assert!(f.trees.iter().all(|t| t.depth() <= 4));
    }

    #[test]
    fn constant_target() {
        let (x, _) = step_data();
        let y = vec![0.73; x.len()];
        let f = fit_ensemble(&x, &y, &ForestConfig::default()).unwrap();
        for r in &x {
            assert!((f.predict(r) - 0.73).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = step_data();
        let cfg = ForestConfig { n_trees: 20, ..Default::default() };
        assert_eq!(fit_ensemble(&x, &y, &cfg).unwrap(), fit_ensemble(&x, &y, &cfg).unwrap());
        let other = ForestConfig { seed: 7, ..cfg };
        assert_ne!(fit_ensemble(&x, &y, &cfg).unwrap(), fit_ensemble(&x, &y, &other).unwrap());
    }

    #[test]
    fn too_few_records() {
        let x = vec![vec![1.0]; 3];
        assert!(matches!(fit_ensemble(&x, &[1.0, 2.0, 3.0], &ForestConfig::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn single_tree_midpoint_threshold() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let t = fit_tree(&x, &y, &ForestConfig { min_leaf: 2, ..Default::default() }).unwrap();
        match t {
            Node::Split { feature, threshold, .. } => assert_eq!((feature, threshold), (0, 4.5)),
            _ => panic!("expected a split"),
        }
    }
}
