//! Bagged multi-output regression trees.
//!
//! Splits maximize the summed per-output reduction in squared error. Each
//! split examines a random subset of `max_features` non-constant features
//! (more if none of them admits a valid split); leaves predict per-output
//! means.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng, SeedKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((p as f64).sqrt().ceil() as usize).max(1),
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => k.clamp(1, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 2,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Vec<f64>],
    config: &'a ForestConfig,
    max_features: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn leaf_mean(y: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let first = &y[idx[0]];
    let n = idx.len() as f64;
    (0..first.len())
        .map(|o| first[o] + idx.iter().map(|&i| y[i][o] - first[o]).sum::<f64>() / n)
        .collect()
}

impl Builder<'_> {
    fn grow<R: Rng>(&mut self, idx: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        let depth_capped = self.config.max_depth.is_some_and(|m| depth >= m);
        let split = if pure || depth_capped || idx.len() < 2 * self.config.min_leaf {
            None
        } else {
            self.best_split(&idx, rng)
        };
        self.nodes[at] = match split {
            None => Node::Leaf(leaf_mean(self.y, &idx)),
            Some(s) => {
                let left = self.grow(s.left, depth + 1, rng);
                let right = self.grow(s.right, depth + 1, rng);
                Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                }
            }
        };
        at
    }

    fn best_split<R: Rng>(&self, idx: &[usize], rng: &mut R) -> Option<BestSplit> {
        let p = self.x[0].len();
        let k = self.y[0].len();
        let n = idx.len();
        let min_leaf = self.config.min_leaf.max(1);
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);

        let mut total_sum = vec![0.0; k];
        let mut total_sq = vec![0.0; k];
        for &i in idx {
            for o in 0..k {
                total_sum[o] += self.y[i][o];
                total_sq[o] += self.y[i][o] * self.y[i][o];
            }
        }
        let sse = |sum: &[f64], sq: &[f64], m: f64| -> f64 {
            sum.iter().zip(sq).map(|(s, q)| q - s * s / m).sum()
        };
        let parent = sse(&total_sum, &total_sq, n as f64);

        let mut best: Option<(f64, usize, f64, usize, Vec<usize>)> = None;
        let mut visited = 0;
        for f in order {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            let mut sorted = idx.to_vec();
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let lo = self.x[sorted[0]][f];
            let hi = self.x[sorted[n - 1]][f];
            if lo == hi {
                continue;
            }
            visited += 1;
            let mut left_sum = vec![0.0; k];
            let mut left_sq = vec![0.0; k];
            for pos in 1..n {
                let i = sorted[pos - 1];
                for o in 0..k {
                    left_sum[o] += self.y[i][o];
                    left_sq[o] += self.y[i][o] * self.y[i][o];
                }
                if pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let (a, b) = (self.x[sorted[pos - 1]][f], self.x[sorted[pos]][f]);
                if a == b {
                    continue;
                }
                let right_sum: Vec<f64> = total_sum.iter().zip(&left_sum).map(|(t, l)| t - l).collect();
                let right_sq: Vec<f64> = total_sq.iter().zip(&left_sq).map(|(t, l)| t - l).collect();
                let gain = parent - sse(&left_sum, &left_sq, pos as f64) - sse(&right_sum, &right_sq, (n - pos) as f64);
                if best.as_ref().is_none_or(|b| gain > b.0) {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some((gain, f, threshold, pos, sorted.clone()));
                }
            }
        }
        best.map(|(gain, feature, threshold, pos, sorted)| BestSplit {
            gain,
            feature,
            threshold,
            left: sorted[..pos].to_vec(),
            right: sorted[pos..].to_vec(),
        })
        .filter(|s| s.gain.is_finite())
    }
}

impl RegressionTree {
    pub fn fit<R: Rng>(x: &[Vec<f64>], y: &[Vec<f64>], rows: Vec<usize>, config: &ForestConfig, rng: &mut R) -> Self {
        let p = x[0].len();
        let mut b = Builder {
            x,
            y,
            config,
            max_features: config.max_features.resolve(p),
            nodes: Vec::new(),
        };
        b.grow(rows, 0, rng);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
    n_outputs: usize,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], config: &ForestConfig, seed: u64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput("training rows"));
        }
        if x.len() != y.len() {
            return Err(Error::invalid("feature and target row counts differ"));
        }
        let p = x[0].len();
        let k = y[0].len();
        if p == 0 {
            return Err(Error::NoUsableFeatures);
        }
        if k == 0 || x.iter().any(|r| r.len() != p) || y.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("ragged training data"));
        }
        if x.iter().flatten().chain(y.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite training data"));
        }
        if config.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        let n = x.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng(SeedKey::new(seed, "tree").u64(t as u64).finish());
                let rows: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(x, y, rows, config, &mut r)
            })
            .collect();
        Ok(RandomForest {
            trees,
            n_features: p,
            n_outputs: k,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.n_features,
                row.len()
            )));
        }
        let mut out = vec![0.0; self.n_outputs];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(row)) {
                *o += v;
            }
        }
        let m = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= m);
        Ok(out)
    }
}
