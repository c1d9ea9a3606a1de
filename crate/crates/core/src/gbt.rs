//! Gradient-boosted regression trees with exact greedy split search.
//!
//! Each round fits one depth-limited tree to the loss gradients by
//! maximizing `G_L²/H_L + G_R²/H_R − G²/H` over every feature and every
//! boundary between distinct sorted values, and sets leaves to `−G/H`. For
//! squared loss `H` is the sample count and the leaf is the mean residual.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::ops::sigmoid;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Squared,
    /// Binary cross-entropy on 0/1 targets; predictions are log-odds.
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub objective: Objective,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self::regression()
    }
}

impl GbtConfig {
    pub fn regression() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            min_samples_leaf: 1,
            objective: Objective::Squared,
        }
    }

    pub fn classifier() -> Self {
        Self {
            n_rounds: 50,
            max_depth: 3,
            learning_rate: 0.3,
            min_samples_leaf: 1,
            objective: Objective::Logistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be > 0 and min_samples_leaf >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub config: GbtConfig,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    /// `base_score + learning_rate · Σ tree(row)`.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.config.learning_rate * sum
    }
}

fn check_matrix(x: &Tensor, what: &'static str) -> Result<(usize, usize)> {
    match *x.shape() {
        [n, d] => Ok((n, d)),
        _ => Err(Error::ShapeMismatch {
            op: what,
            expected: vec![0, 0],
            got: x.shape().to_vec(),
        }),
    }
}

fn gradients(objective: Objective, pred: &[f64], y: &[f64], g: &mut [f64], h: &mut [f64]) {
    for i in 0..y.len() {
        match objective {
            Objective::Squared => {
                g[i] = pred[i] - y[i];
                h[i] = 1.0;
            }
            Objective::Logistic => {
                let p = sigmoid(pred[i]);
                g[i] = p - y[i];
                h[i] = p * (1.0 - p);
            }
        }
    }
}

fn score(g: f64, h: f64) -> f64 {
    if h > 0.0 {
        g * g / h
    } else {
        0.0
    }
}

fn leaf_value(g: f64, h: f64) -> f64 {
    if h > 0.0 {
        -g / h
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Column-major copy of the features plus each column's row order.
struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    /// Length of each column's leading run of its smallest value.
    lowest_run: Vec<usize>,
}

impl Presorted {
    fn new(x: &Tensor, n: usize, d: usize) -> Self {
        let data = x.data();
        let columns: Vec<Vec<f64>> = (0..d)
            .map(|f| (0..n).map(|i| data[i * d + f]).collect())
            .collect();
        let order: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        let lowest_run = columns
            .iter()
            .zip(&order)
            .map(|(col, idx)| {
                let lo = col[idx[0] as usize];
                idx.iter().take_while(|&&i| col[i as usize] == lo).count()
            })
            .collect();
        Self {
            columns,
            order,
            lowest_run,
        }
    }
}

const NO_NODE: u32 = u32::MAX;

fn grow_tree(data: &Presorted, g: &[f64], h: &[f64], config: &GbtConfig) -> Tree {
    let n = g.len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // Tree node of every row while its node is still open for splitting.
    let mut at: Vec<u32> = vec![0; n];
    let mut open: Vec<usize> = vec![0];
    let mut totals = vec![Stats {
        g: g.iter().sum(),
        h: h.iter().sum(),
        n,
    }];

    for _depth in 0..config.max_depth {
        if open.is_empty() {
            break;
        }
        // Open nodes get local slots 0..open.len().
        let mut slot = vec![NO_NODE; nodes.len()];
        for (s, &node) in open.iter().enumerate() {
            slot[node] = s as u32;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        let mut right = vec![Stats::default(); open.len()];
        let mut last = vec![0.0f64; open.len()];
        let msl = config.min_samples_leaf;
        // Split between `lo` and `hi` with right-hand stats `r`. Within one
        // feature ties go to the lower threshold.
        let consider = |best: &mut Option<Candidate>, t: Stats, r: Stats, f: usize, lo: f64, hi: f64| {
            let ln = t.n - r.n;
            if ln < msl || r.n < msl {
                return;
            }
            let gain = score(t.g - r.g, t.h - r.h) + score(r.g, r.h) - score(t.g, t.h);
            let better = match best {
                None => gain > 0.0,
                Some(b) => gain > b.gain || (gain == b.gain && b.feature == f),
            };
            if better {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                *best = Some(Candidate {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        };

        // Scan each column from its largest value down, accumulating the
        // right side. The run of the smallest value, usually the bulk of
        // the rows, is never visited: its stats are the node total minus
        // everything above it.
        for (f, (col, order)) in data.columns.iter().zip(&data.order).enumerate() {
            right.iter_mut().for_each(|s| *s = Stats::default());
            let skip = data.lowest_run[f];
            for &row in order[skip..].iter().rev() {
                let row = row as usize;
                let node = at[row];
                if node == NO_NODE {
                    continue;
                }
                let s = slot[node as usize] as usize;
                let x = col[row];
                if right[s].n > 0 && x != last[s] {
                    consider(&mut best[s], totals[s], right[s], f, x, last[s]);
                }
                let r = &mut right[s];
                r.g += g[row];
                r.h += h[row];
                r.n += 1;
                last[s] = x;
            }
            if skip < order.len() {
                let lowest = col[order[0] as usize];
                for s in 0..open.len() {
                    if right[s].n > 0 && right[s].n < totals[s].n {
                        consider(&mut best[s], totals[s], right[s], f, lowest, last[s]);
                    }
                }
            }
        }

        // Apply splits; children become next level's open nodes.
        let mut next_open = Vec::new();
        let mut next_totals = Vec::new();
        let mut child_of = vec![(NO_NODE, NO_NODE); open.len()];
        for (s, &node) in open.iter().enumerate() {
            if let Some(c) = best[s] {
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[node] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: l,
                    right: r,
                };
                child_of[s] = (l as u32, r as u32);
                next_open.extend([l, r]);
                next_totals.extend([Stats::default(), Stats::default()]);
            }
        }
        let mut next_slot = vec![NO_NODE; nodes.len()];
        for (s, &node) in next_open.iter().enumerate() {
            next_slot[node] = s as u32;
        }
        for row in 0..n {
            let node = at[row];
            if node == NO_NODE {
                continue;
            }
            let s = slot[node as usize] as usize;
            match best[s] {
                None => at[row] = NO_NODE,
                Some(c) => {
                    let (l, r) = child_of[s];
                    let child = if data.columns[c.feature][row] <= c.threshold { l } else { r };
                    at[row] = child;
                    let t = &mut next_totals[next_slot[child as usize] as usize];
                    t.g += g[row];
                    t.h += h[row];
                    t.n += 1;
                }
            }
        }
        // Nodes that did not split keep their totals for the leaf values below.
        for (s, &node) in open.iter().enumerate() {
            if best[s].is_none() {
                let t = totals[s];
                nodes[node] = Node::Leaf {
                    value: leaf_value(t.g, t.h),
                };
            }
        }
        open = next_open;
        totals = next_totals;
    }
    for (s, &node) in open.iter().enumerate() {
        let t = totals[s];
        nodes[node] = Node::Leaf {
            value: leaf_value(t.g, t.h),
        };
    }
    Tree { nodes }
}

/// Fits `config.n_rounds` trees to `x` (`[n × d]`, row-major) and `y`.
pub fn gbt_fit(x: &Tensor, y: &[f64], config: &GbtConfig) -> Result<GbtModel> {
    config.validate()?;
    let (n, d) = check_matrix(x, "gbt_fit")?;
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if y.len() != n {
        return Err(Error::ShapeMismatch {
            op: "gbt_fit targets",
            expected: vec![n],
            got: vec![y.len()],
        });
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let base_score = match config.objective {
        Objective::Squared => mean,
        Objective::Logistic => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            libm::log(p / (1.0 - p))
        }
    };
    let data = Presorted::new(x, n, d);
    let mut pred = vec![base_score; n];
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut row = vec![0.0; d];
    for _ in 0..config.n_rounds {
        gradients(config.objective, &pred, y, &mut g, &mut h);
        let tree = grow_tree(&data, &g, &h, config);
        for (i, p) in pred.iter_mut().enumerate() {
            for (f, v) in row.iter_mut().enumerate() {
                *v = data.columns[f][i];
            }
            *p += config.learning_rate * tree.predict_row(&row);
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        config: config.clone(),
        n_features: d,
        base_score,
        trees,
    })
}

/// Raw predictions (log-odds for the logistic objective).
pub fn gbt_predict(model: &GbtModel, x: &Tensor) -> Result<Vec<f64>> {
    let (n, d) = check_matrix(x, "gbt_predict")?;
    if d != model.n_features {
        return Err(Error::FeatureWidth {
            expected: model.n_features,
            got: d,
        });
    }
    Ok((0..n).map(|i| model.predict_row(x.row(i))).collect())
}

/// Class-1 probabilities of a logistic model.
pub fn gbt_predict_proba(model: &GbtModel, x: &Tensor) -> Result<Vec<f64>> {
    Ok(gbt_predict(model, x)?.into_iter().map(sigmoid).collect())
}
