use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the `mtry` candidate features are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSampling {
    /// A fresh subset at every split.
    #[default]
    PerSplit,
    /// One subset per tree.
    PerTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub sampling: FeatureSampling,
    /// Draw a bootstrap sample per tree; otherwise every tree sees all rows.
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

fn yes() -> bool {
    true
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 1000,
            mtry: 3,
            min_leaf: 1,
            max_depth: None,
            seed: 0,
            sampling: FeatureSampling::PerSplit,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Reduction of the squared error achieved by the split.
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Seed of tree `i`, derived from the forest seed.
fn tree_seed(seed: u64, i: usize) -> u64 {
    // SplitMix64 finalizer.
    let mut z = seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits `cfg.n_trees` regression trees on bootstrap samples in parallel.
/// Tree `i` depends only on the seed and `i`, so the result is independent
/// of thread scheduling.
pub fn fit_trees(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Result<Vec<Tree>> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(Error::InsufficientData("training data is empty".into()));
    }
    let p = x[0].len();
    if cfg.mtry == 0 || cfg.mtry > p {
        return Err(Error::InvalidParameter(format!("mtry {} outside 1..={p}", cfg.mtry)));
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::InvalidParameter("n_trees and min_leaf must be positive".into()));
    }
    Ok((0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, i));
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Builder { x, y, cfg, rng, p }.build(sample)
        })
        .collect())
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: &'a ForestConfig,
    rng: ChaCha8Rng,
    p: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Builder<'_> {
    fn build(mut self, sample: Vec<usize>) -> Tree {
        let tree_features: Option<Vec<usize>> = match self.cfg.sampling {
            FeatureSampling::PerTree => {
                let mut f: Vec<usize> = (0..self.p).collect();
                f.shuffle(&mut self.rng);
                f.truncate(self.cfg.mtry);
                Some(f)
            }
            FeatureSampling::PerSplit => None,
        };
        let mut nodes: Vec<Node> = Vec::new();
        // (node slot, samples, depth)
        let mut stack = vec![(0usize, sample, 0usize)];
        nodes.push(Node::Leaf { value: 0.0 });
        while let Some((slot, idx, depth)) = stack.pop() {
            let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
            let can_split = idx.len() >= 2 * self.cfg.min_leaf
                && self.cfg.max_depth.is_none_or(|d| depth < d)
                && idx.iter().any(|&i| self.y[i] != self.y[idx[0]]);
            let choice = if can_split { self.best_split(&idx, tree_features.as_deref()) } else { None };
            match choice {
                None => nodes[slot] = Node::Leaf { value: mean },
                Some(c) => {
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l,
                        right: r,
                        gain: c.gain,
                    };
                    stack.push((r, c.right, depth + 1));
                    stack.push((l, c.left, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    /// Best split among a random feature subset. When none of the drawn
    /// features separates the node, further features are drawn until one does.
    fn best_split(&mut self, idx: &[usize], tree_features: Option<&[usize]>) -> Option<SplitChoice> {
        let order: Vec<usize> = match tree_features {
            Some(f) => f.to_vec(),
            None => {
                let mut f: Vec<usize> = (0..self.p).collect();
                f.shuffle(&mut self.rng);
                f
            }
        };
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, &f) in order.iter().enumerate() {
            if k >= self.cfg.mtry && best.is_some() {
                break;
            }
            if let Some((threshold, gain)) = self.scan(idx, f) {
                if best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, threshold, gain));
                }
            }
        }
        let (feature, threshold, gain) = best?;
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        Some(SplitChoice { feature, threshold, gain, left, right })
    }

    /// Best threshold on feature `f` by squared-error reduction.
    fn scan(&self, idx: &[usize], f: usize) -> Option<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = idx.iter().map(|&i| (self.x[i][f], self.y[i])).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pts.len();
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let total_sq: f64 = pts.iter().map(|p| p.1 * p.1).sum();
        let parent_sse = total_sq - total * total / n as f64;
        let min_leaf = self.cfg.min_leaf;
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left_sum += pts[i].1;
            left_sq += pts[i].1 * pts[i].1;
            let nl = i + 1;
            let nr = n - nl;
            if pts[i].0 == pts[i + 1].0 || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / nl as f64) + (right_sq - right_sum * right_sum / nr as f64);
            let gain = parent_sse - sse;
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g) {
                let mut t = 0.5 * (pts[i].0 + pts[i + 1].0);
                if t >= pts[i + 1].0 {
                    t = pts[i].0;
                }
                best = Some((t, gain));
            }
        }
        best
    }
}
