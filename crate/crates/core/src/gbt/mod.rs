//! Second-order gradient boosted trees for binary classification with logistic
//! loss, exact greedy split enumeration, and gain/weight importance.

mod exact_sum;

use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact_sum::ExactSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum loss reduction for a split.
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Multiplier on positive-class gradients and hessians; 1 disables reweighting.
    pub positive_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            positive_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        /// Samples with `x[feature] < threshold` go left.
        threshold: f64,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Log-odds increment before shrinkage.
        weight: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Visits every split as `(feature, threshold, gain)`, pre-order.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64, f64)) {
        if let TreeNode::Split {
            feature,
            threshold,
            gain,
            left,
            right,
        } = self
        {
            f(*feature, *threshold, *gain);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    /// Prior log-odds of the training positive rate.
    pub base_score: f64,
    pub params: GbtParams,
    pub n_features: usize,
    pub seed: u64,
    /// Mean training log-loss before any tree and after each round.
    pub train_loss: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Binary cross-entropy of a logit, computed without forming the probability.
pub(crate) fn logit_loss(score: f64, y: f64) -> f64 {
    let softplus = if score > 0.0 {
        score + (-score).exp().ln_1p()
    } else {
        score.exp().ln_1p()
    };
    softplus - y * score
}

fn mean_log_loss(scores: &[f64], y: &[u8]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(&s, &t)| logit_loss(s, f64::from(t)))
        .sum::<f64>()
        / scores.len() as f64
}

fn check_inputs(x: ArrayView2<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: format!("{} label(s)", x.nrows()),
            found: format!("{}", y.len()),
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("need at least two training rows"));
    }
    if y.iter().any(|&t| t > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = y.iter().filter(|&&t| t == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    /// Per feature, row indices sorted by value (ties by index).
    order: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbtParams,
}

impl Grower<'_> {
    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.lambda;
        if denom > 0.0 {
            -g / denom
        } else {
            0.0
        }
    }

    fn score(&self, g: f64, h: f64) -> Option<f64> {
        let denom = h + self.params.lambda;
        (denom > 0.0).then(|| g * g / denom)
    }

    /// Best split of the rows flagged in `member`; `None` if no split has
    /// positive gain under the child-weight constraint.
    fn best_split(&self, member: &[bool], g_all: &ExactSum, h_all: &ExactSum) -> Option<Candidate> {
        let (g_tot, h_tot) = (g_all.value(), h_all.value());
        let parent = self.score(g_tot, h_tot)?;
        let per_feature: Vec<Option<Candidate>> = (0..self.x.ncols())
            .into_par_iter()
            .map(|j| {
                let col = self.x.column(j);
                let rows: Vec<usize> = self.order[j]
                    .iter()
                    .copied()
                    .filter(|&i| member[i])
                    .collect();
                let mut gl = ExactSum::new();
                let mut hl = ExactSum::new();
                let mut gr = g_all.clone();
                let mut hr = h_all.clone();
                let mut best: Option<Candidate> = None;
                for pos in 0..rows.len().saturating_sub(1) {
                    let i = rows[pos];
                    gl.add(self.grad[i]);
                    hl.add(self.hess[i]);
                    gr.add(-self.grad[i]);
                    hr.add(-self.hess[i]);
                    let (lo, hi) = (col[i], col[rows[pos + 1]]);
                    if !(lo < hi) {
                        continue;
                    }
                    let (h_left, h_right) = (hl.value(), hr.value());
                    if h_left < self.params.min_child_weight
                        || h_right < self.params.min_child_weight
                    {
                        continue;
                    }
                    let (Some(sl), Some(sr)) = (
                        self.score(gl.value(), h_left),
                        self.score(gr.value(), h_right),
                    ) else {
                        continue;
                    };
                    let gain = 0.5 * (sl + sr - parent) - self.params.gamma;
                    if best.is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (lo + hi);
                        if threshold <= lo {
                            threshold = hi;
                        }
                        best = Some(Candidate {
                            feature: j,
                            threshold,
                            gain,
                        });
                    }
                }
                best
            })
            .collect();
        per_feature
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<Candidate>, c| match acc {
                Some(a) if c.gain <= a.gain => Some(a),
                _ => Some(c),
            })
            .filter(|c| c.gain > 0.0)
    }

    /// Grows a subtree; children of a node are independent, so depth-first
    /// recursion yields the same tree as level-by-level growth.
    fn grow(&self, rows: &[usize], depth: usize) -> TreeNode {
        let g: ExactSum = rows.iter().map(|&i| self.grad[i]).collect();
        let h: ExactSum = rows.iter().map(|&i| self.hess[i]).collect();
        let leaf = TreeNode::Leaf {
            weight: self.leaf_weight(g.value(), h.value()),
        };
        if depth >= self.params.max_depth || rows.len() < 2 {
            return leaf;
        }
        let mut member = vec![false; self.x.nrows()];
        for &i in rows {
            member[i] = true;
        }
        let Some(c) = self.best_split(&member, &g, &h) else {
            return leaf;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[[i, c.feature]] < c.threshold);
        TreeNode::Split {
            feature: c.feature,
            threshold: c.threshold,
            gain: c.gain,
            left: Box::new(self.grow(&left, depth + 1)),
            right: Box::new(self.grow(&right, depth + 1)),
        }
    }
}

/// Fits a boosted ensemble on rows `x` with binary labels `y`.
///
/// Each round fits one tree to the Newton step of the logistic loss:
/// gradients `p - y`, hessians `p(1 - p)`, leaf weight `-G / (H + λ)`. The
/// fit involves no sampling, so `seed` is recorded but does not change the
/// result.
pub fn fit_gbt(
    x: ArrayView2<f64>,
    y: &[u8],
    params: &GbtParams,
    seed: u64,
) -> Result<TreeEnsemble> {
    check_inputs(x, y)?;
    if params.max_depth == 0 && params.n_trees > 0 {
        log::warn!("max_depth 0 grows single-leaf trees");
    }
    let n = y.len();
    let pos = y.iter().filter(|&&t| t == 1).count() as f64;
    let rate = pos / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();

    let order: Vec<Vec<usize>> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let weights: Vec<f64> = y
        .iter()
        .map(|&t| if t == 1 { params.positive_weight } else { 1.0 })
        .collect();
    let mut scores = vec![base_score; n];
    let mut train_loss = vec![mean_log_loss(&scores, y)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let all: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = (p - f64::from(y[i])) * weights[i];
            hess[i] = p * (1.0 - p) * weights[i];
        }
        let grower = Grower {
            x,
            order: &order,
            grad: &grad,
            hess: &hess,
            params,
        };
        let tree = grower.grow(&all, 0);
        for (i, s) in scores.iter_mut().enumerate() {
            *s += params.learning_rate * tree.predict(x.row(i));
        }
        train_loss.push(mean_log_loss(&scores, y));
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        trees,
        learning_rate: params.learning_rate,
        base_score,
        params: *params,
        n_features: x.ncols(),
        seed,
        train_loss,
    })
}

impl TreeEnsemble {
    fn check_width(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape {
                expected: format!("{} features", self.n_features),
                found: format!("{}", x.ncols()),
            });
        }
        Ok(())
    }

    /// Raw log-odds scores.
    pub fn decision_scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(x.outer_iter()
            .map(|row| {
                self.base_score
                    + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
            })
            .collect())
    }

    /// Mean log-loss of the first `k` trees for every `k` in `0..=n_trees`.
    pub fn staged_log_loss(&self, x: ArrayView2<f64>, y: &[u8]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let mut scores = vec![self.base_score; x.nrows()];
        let mut out = vec![mean_log_loss(&scores, y)];
        for tree in &self.trees {
            for (s, row) in scores.iter_mut().zip(x.outer_iter()) {
                *s += self.learning_rate * tree.predict(row);
            }
            out.push(mean_log_loss(&scores, y));
        }
        Ok(out)
    }

    /// The ensemble restricted to its first `k` trees.
    pub fn truncated(&self, k: usize) -> TreeEnsemble {
        let mut m = self.clone();
        m.trees.truncate(k);
        m.train_loss.truncate(k + 1);
        m
    }

    /// Total split gain per feature index; unused features are absent.
    pub fn importance_gain(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for t in &self.trees {
            t.for_each_split(&mut |f, _, gain| *out.entry(f).or_insert(0.0) += gain);
        }
        out
    }

    /// Number of splits per feature index; unused features are absent.
    pub fn importance_weight(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for t in &self.trees {
            t.for_each_split(&mut |f, _, _| *out.entry(f).or_insert(0) += 1);
        }
        out
    }
}

/// Probabilities `sigmoid(base + η Σ trees)`, strictly inside (0, 1).
pub fn predict_gbt(model: &TreeEnsemble, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    Ok(model.decision_scores(x)?.into_iter().map(sigmoid).collect())
}
