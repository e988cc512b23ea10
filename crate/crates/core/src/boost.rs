//! Gradient-boosted decision trees for K-class classification with a
//! softmax objective, trained by exact-greedy split search.
//!
//! One regression tree per class per round. Split gain is the standard
//! second-order formula
//! `1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)] - gamma`,
//! leaf weight `-G/(H+l)`. Trees are built level-wise over globally
//! presorted feature columns, so each level costs one pass over the data
//! per feature regardless of how many nodes are open.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const HESS_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "S: Scalar"))]
pub struct BoostParams<S> {
    pub eta: S,
    pub max_depth: usize,
    pub lambda: S,
    pub gamma: S,
    pub rounds: usize,
    pub min_child_weight: S,
}

impl<S: Scalar> Default for BoostParams<S> {
    fn default() -> Self {
        BoostParams {
            eta: S::cast(0.3),
            max_depth: 6,
            lambda: S::one(),
            gamma: S::zero(),
            rounds: 100,
            min_child_weight: S::one(),
        }
    }
}

impl<S: Scalar> BoostParams<S> {
    fn validate(&self) -> Result<()> {
        if !(self.eta > S::zero()) || !self.eta.is_finite() {
            return Err(Error::Train(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda >= S::zero()) || !(self.gamma >= S::zero()) {
            return Err(Error::Train("lambda and gamma must be non-negative".into()));
        }
        if !(self.min_child_weight >= S::zero()) {
            return Err(Error::Train("min_child_weight must be non-negative".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Train("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode<S> {
    Split {
        feature: usize,
        threshold: S,
        gain: S,
        left: Box<TreeNode<S>>,
        right: Box<TreeNode<S>>,
    },
    Leaf {
        weight: S,
    },
}

impl<S: Scalar> TreeNode<S> {
    /// Raw (un-scaled) leaf output for one sample; `x < threshold` goes left.
    pub fn output(&self, row: &[S]) -> S {
        match self {
            TreeNode::Leaf { weight } => *weight,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if row[*feature] < *threshold {
                    left.output(row)
                } else {
                    right.output(row)
                }
            }
        }
    }

    fn accumulate_gain(&self, totals: &mut [S]) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            totals[*feature] += *gain;
            left.accumulate_gain(totals);
            right.accumulate_gain(totals);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct Booster<S> {
    pub params: BoostParams<S>,
    pub n_classes: usize,
    pub n_features: usize,
    /// per-class prior logit added before any tree output
    pub base_score: Vec<S>,
    /// rounds x classes
    pub trees: Vec<Vec<TreeNode<S>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog<S> {
    /// training cross-entropy after each round
    pub train_ce: Vec<S>,
    pub valid_ce: Option<Vec<S>>,
}

/// Numerically stable softmax (max-shifted).
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-class gradient/hessian of cross-entropy after softmax:
/// `g_k = p_k - [k=y]`, `h_k = p_k (1-p_k)` floored at 1e-16.
pub fn grad_hess<S: Scalar>(p: &[S], y: usize) -> (Vec<S>, Vec<S>) {
    let floor = S::cast(HESS_FLOOR);
    let g = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| if k == y { pk - S::one() } else { pk })
        .collect();
    let h = p
        .iter()
        .map(|&pk| {
            let hk = pk * (S::one() - pk);
            if hk > floor {
                hk
            } else {
                floor
            }
        })
        .collect();
    (g, h)
}

fn split_gain<S: Scalar>(gl: S, hl: S, g: S, h: S, lambda: S, gamma: S) -> S {
    let gr = g - gl;
    let hr = h - hl;
    let half = S::cast(0.5);
    half * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Midpoint threshold; falls back to the upper value if the midpoint rounds
/// down onto the lower one.
fn midpoint<S: Scalar>(a: S, b: S) -> S {
    let mid = (a + b) / S::cast(2.0);
    if mid > a {
        mid
    } else {
        b
    }
}

/// Exact-greedy best split over one sorted feature column.
///
/// `values` must be ascending with `g`/`h` aligned. Candidates are midpoints
/// between distinct consecutive values; returns the split maximizing gain
/// subject to `gain > 0` and both children's hessian sums `>=
/// min_child_weight`. Ties keep the smallest threshold.
pub fn best_split<S: Scalar>(
    values: &[S],
    g: &[S],
    h: &[S],
    lambda: S,
    gamma: S,
    min_child_weight: S,
) -> Option<(S, S)> {
    assert!(values.len() >= 2, "best_split needs at least 2 samples");
    debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    let g_tot: S = g.iter().copied().sum();
    let h_tot: S = h.iter().copied().sum();
    let mut gl = S::zero();
    let mut hl = S::zero();
    let mut best: Option<(S, S)> = None;
    for i in 0..values.len() - 1 {
        gl += g[i];
        hl += h[i];
        if values[i + 1] <= values[i] {
            continue;
        }
        if hl < min_child_weight || h_tot - hl < min_child_weight {
            continue;
        }
        let gain = split_gain(gl, hl, g_tot, h_tot, lambda, gamma);
        if gain > S::zero() && best.map_or(true, |(_, bg)| gain > bg) {
            best = Some((midpoint(values[i], values[i + 1]), gain));
        }
    }
    best
}

#[derive(Clone, Copy)]
struct Candidate<S> {
    feature: usize,
    threshold: S,
    gain: S,
    gl: S,
    hl: S,
    nl: usize,
}

struct ArenaNode<S> {
    g_sum: S,
    h_sum: S,
    n: usize,
    split: Option<Candidate<S>>,
    children: Option<(usize, usize)>,
}

/// Level-wise exact-greedy tree on one class's (g, h).
fn build_tree<S: Scalar>(
    x: &Matrix<S>,
    sorted_idx: &[Vec<u32>],
    g: &[S],
    h: &[S],
    params: &BoostParams<S>,
) -> TreeNode<S> {
    let n = x.n_rows();
    let n_features = x.n_cols();
    let mut arena: Vec<ArenaNode<S>> = vec![ArenaNode {
        g_sum: g.iter().copied().sum(),
        h_sum: h.iter().copied().sum(),
        n,
        split: None,
        children: None,
    }];
    // active node id per sample; usize::MAX once the sample sits in a leaf
    let mut node_of: Vec<usize> = vec![0; n];
    let mut level: Vec<usize> = vec![0];
    for _depth in 0..params.max_depth {
        if level.is_empty() {
            break;
        }
        let mut slot_of: Vec<usize> = vec![usize::MAX; arena.len()];
        for (s, &nid) in level.iter().enumerate() {
            slot_of[nid] = s;
        }
        let mut best: Vec<Option<Candidate<S>>> = vec![None; level.len()];
        // one pass per feature over the global sort order, dispatching each
        // sample to its node's running prefix state
        let mut gl = vec![S::zero(); level.len()];
        let mut hl = vec![S::zero(); level.len()];
        let mut nl = vec![0usize; level.len()];
        let mut prev: Vec<Option<S>> = vec![None; level.len()];
        for (f, order) in sorted_idx.iter().enumerate().take(n_features) {
            for s in 0..level.len() {
                gl[s] = S::zero();
                hl[s] = S::zero();
                nl[s] = 0;
                prev[s] = None;
            }
            for &iu in order {
                let i = iu as usize;
                let nid = node_of[i];
                if nid == usize::MAX {
                    continue;
                }
                let s = slot_of[nid];
                if s == usize::MAX {
                    continue;
                }
                let v = x.get(i, f);
                if let Some(pv) = prev[s] {
                    if v > pv && nl[s] < arena[nid].n {
                        let node = &arena[nid];
                        let hr = node.h_sum - hl[s];
                        if hl[s] >= params.min_child_weight && hr >= params.min_child_weight {
                            let gain = split_gain(
                                gl[s],
                                hl[s],
                                node.g_sum,
                                node.h_sum,
                                params.lambda,
                                params.gamma,
                            );
                            if gain > S::zero()
                                && best[s].map_or(true, |c| gain > c.gain)
                            {
                                best[s] = Some(Candidate {
                                    feature: f,
                                    threshold: midpoint(pv, v),
                                    gain,
                                    gl: gl[s],
                                    hl: hl[s],
                                    nl: nl[s],
                                });
                            }
                        }
                    }
                }
                gl[s] += g[i];
                hl[s] += h[i];
                nl[s] += 1;
                prev[s] = Some(v);
            }
        }
        let mut next_level = Vec::new();
        for (s, &nid) in level.iter().enumerate() {
            if let Some(c) = best[s] {
                let node = &arena[nid];
                let (gr, hr, nr) = (node.g_sum - c.gl, node.h_sum - c.hl, node.n - c.nl);
                let left = arena.len();
                arena.push(ArenaNode {
                    g_sum: c.gl,
                    h_sum: c.hl,
                    n: c.nl,
                    split: None,
                    children: None,
                });
                let right = arena.len();
                arena.push(ArenaNode {
                    g_sum: gr,
                    h_sum: hr,
                    n: nr,
                    split: None,
                    children: None,
                });
                arena[nid].split = Some(c);
                arena[nid].children = Some((left, right));
                next_level.push(left);
                next_level.push(right);
            }
        }
        // re-route samples of split nodes; settle the rest as leaves
        for (i, nid) in node_of.iter_mut().enumerate() {
            if *nid == usize::MAX || slot_of[*nid] == usize::MAX {
                continue;
            }
            match (arena[*nid].split, arena[*nid].children) {
                (Some(c), Some((l, r))) => {
                    *nid = if x.get(i, c.feature) < c.threshold { l } else { r };
                }
                _ => *nid = usize::MAX,
            }
        }
        level = next_level;
    }
    fn emit<S: Scalar>(arena: &[ArenaNode<S>], nid: usize, lambda: S) -> TreeNode<S> {
        let node = &arena[nid];
        match (node.split, node.children) {
            (Some(c), Some((l, r))) => TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                gain: c.gain,
                left: Box::new(emit(arena, l, lambda)),
                right: Box::new(emit(arena, r, lambda)),
            },
            _ => TreeNode::Leaf {
                weight: -node.g_sum / (node.h_sum + lambda),
            },
        }
    }
    emit(&arena, 0, params.lambda)
}

fn cross_entropy<S: Scalar>(margins: &Matrix<S>, y: &[usize]) -> S {
    let mut ce = S::zero();
    for (i, &yi) in y.iter().enumerate() {
        let p = softmax(margins.row(i));
        ce -= p[yi].ln();
    }
    ce / S::cast(y.len() as f64)
}

/// Fit `params.rounds` rounds of K class-trees. `base_score` is the
/// per-class log prior of the training labels; every prediction update is
/// scaled by `eta`.
pub fn train_booster<S: Scalar>(
    x: &Matrix<S>,
    y: &[usize],
    params: &BoostParams<S>,
    valid: Option<(&Matrix<S>, &[usize])>,
) -> Result<(Booster<S>, TrainLog<S>)> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::Train(format!(
            "label count {} does not match {} samples",
            y.len(),
            n
        )));
    }
    let n_classes = y.iter().copied().max().unwrap() + 1;
    let mut counts = vec![0usize; n_classes];
    for &yi in y {
        counts[yi] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Train("need at least 2 classes present".into()));
    }
    let base_score: Vec<S> = counts
        .iter()
        .map(|&c| S::cast(((c as f64 / n as f64).max(1e-12)).ln()))
        .collect();

    // one global argsort per feature, stable across all rounds and nodes
    let sorted_idx: Vec<Vec<u32>> = (0..x.n_cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                x.get(a as usize, f)
                    .partial_cmp(&x.get(b as usize, f))
                    .expect("non-finite feature value")
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut margins = Matrix::zeros(n, n_classes);
    for i in 0..n {
        for k in 0..n_classes {
            margins.set(i, k, base_score[k]);
        }
    }
    let mut valid_margins = valid.map(|(xv, _)| {
        let mut m = Matrix::zeros(xv.n_rows(), n_classes);
        for i in 0..xv.n_rows() {
            for k in 0..n_classes {
                m.set(i, k, base_score[k]);
            }
        }
        m
    });

    let mut trees = Vec::with_capacity(params.rounds);
    let mut train_ce = Vec::with_capacity(params.rounds);
    let mut valid_ce = valid.map(|_| Vec::with_capacity(params.rounds));
    let mut g = vec![S::zero(); n];
    let mut h = vec![S::zero(); n];
    for _round in 0..params.rounds {
        let probs: Vec<Vec<S>> = (0..n).map(|i| softmax(margins.row(i))).collect();
        let mut round_trees = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for (i, p) in probs.iter().enumerate() {
                let (gi, hi) = grad_hess(p, y[i]);
                g[i] = gi[k];
                h[i] = hi[k];
            }
            let tree = build_tree(x, &sorted_idx, &g, &h, params);
            for i in 0..n {
                let out = tree.output(x.row(i));
                margins.set(i, k, margins.get(i, k) + params.eta * out);
            }
            if let (Some(vm), Some((xv, _))) = (valid_margins.as_mut(), valid) {
                for i in 0..xv.n_rows() {
                    let out = tree.output(xv.row(i));
                    vm.set(i, k, vm.get(i, k) + params.eta * out);
                }
            }
            round_trees.push(tree);
        }
        trees.push(round_trees);
        train_ce.push(cross_entropy(&margins, y));
        if let (Some(log), Some(vm), Some((_, yv))) =
            (valid_ce.as_mut(), valid_margins.as_ref(), valid)
        {
            log.push(cross_entropy(vm, yv));
        }
    }
    Ok((
        Booster {
            params: params.clone(),
            n_classes,
            n_features: x.n_cols(),
            base_score,
            trees,
        },
        TrainLog { train_ce, valid_ce },
    ))
}

impl<S: Scalar> Booster<S> {
    /// Summed eta-scaled tree outputs plus base score, per class.
    pub fn predict_margin(&self, row: &[S]) -> Result<Vec<S>> {
        if row.len() != self.n_features {
            return Err(Error::Input(format!(
                "expected {} features, got {}",
                self.n_features,
                row.len()
            )));
        }
        let mut z = self.base_score.clone();
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                z[k] += self.params.eta * tree.output(row);
            }
        }
        Ok(z)
    }

    /// Per-sample class probabilities; each row sums to 1.
    pub fn predict_proba(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let mut out = Matrix::zeros(x.n_rows(), self.n_classes);
        for i in 0..x.n_rows() {
            let p = softmax(&self.predict_margin(x.row(i))?);
            for (k, &pk) in p.iter().enumerate() {
                out.set(i, k, pk);
            }
        }
        Ok(out)
    }

    pub fn predict_class(&self, x: &Matrix<S>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..x.n_rows())
            .map(|i| {
                let row = p.row(i);
                (0..self.n_classes)
                    .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                    .unwrap()
            })
            .collect())
    }

    /// Total split gain per feature; unused features report 0.
    pub fn importance_gain(&self) -> Vec<S> {
        let mut totals = vec![S::zero(); self.n_features];
        for round in &self.trees {
            for tree in round {
                tree.accumulate_gain(&mut totals);
            }
        }
        totals
    }
}
