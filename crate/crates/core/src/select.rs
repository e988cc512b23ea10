//! Feature selection: kNN mutual information against the discrete stage
//! label, then recursive elimination with internal cross-validation along
//! the MI-descending ranking.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::boost::{train_booster, BoostParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{digamma, Scalar};

pub const DEFAULT_K_NEIGHBORS: usize = 3;
const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiScore<S> {
    pub name: String,
    pub score: S,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiScores<S> {
    pub scores: Vec<MiScore<S>>,
}

impl<S: Scalar> MiScores<S> {
    /// Feature indices sorted by score descending; ties keep original order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| {
            self.scores[b]
                .score
                .partial_cmp(&self.scores[a].score)
                .unwrap()
                .then(a.cmp(&b))
        });
        idx
    }
}

/// kNN estimator of I(X_f; y) for a continuous feature and discrete label.
///
/// Per point: `d_i` is the Chebyshev distance to its `k`-th nearest
/// same-class neighbor; `m_i` counts all points strictly within `d_i`.
/// `MI = psi(N) - <psi(N_c)> + psi(k) - <psi(m_i)>`, clamped at 0. A seeded
/// jitter of magnitude `1e-10 * std` breaks ties deterministically
/// (per-feature stream, so duplicated columns do not disturb the others).
/// Constant features score 0.
pub fn mi_scores<S: Scalar>(
    x: &Matrix<S>,
    names: &[String],
    y: &[usize],
    k_neighbors: usize,
    seed: u64,
) -> Result<MiScores<S>> {
    let n = x.n_rows();
    if names.len() != x.n_cols() {
        return Err(Error::Input(format!(
            "{} names for {} feature columns",
            names.len(),
            x.n_cols()
        )));
    }
    if y.len() != n {
        return Err(Error::Input(format!("{} labels for {} samples", y.len(), n)));
    }
    let n_classes = y.iter().copied().max().map_or(0, |m| m + 1);
    let mut class_members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &yi) in y.iter().enumerate() {
        class_members[yi].push(i);
    }
    for (c, members) in class_members.iter().enumerate() {
        if !members.is_empty() && members.len() <= k_neighbors {
            return Err(Error::MiEstimation {
                class: c,
                n: members.len(),
                need: k_neighbors + 1,
            });
        }
    }
    let psi_n = digamma(n as f64);
    let psi_k = digamma(k_neighbors as f64);
    let mean_psi_nc: f64 = y
        .iter()
        .map(|&yi| digamma(class_members[yi].len() as f64))
        .sum::<f64>()
        / n as f64;

    let mut scores = Vec::with_capacity(x.n_cols());
    for (f, name) in names.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| x.get(i, f).as_f64()).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std == 0.0 {
            scores.push(MiScore {
                name: name.clone(),
                score: S::zero(),
            });
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(f as u64);
        let xs: Vec<f64> = col
            .iter()
            .map(|v| {
                let noise: f64 = rng.sample(StandardNormal);
                v + JITTER_SCALE * std * noise
            })
            .collect();
        let mut sum_psi_m = 0.0;
        for i in 0..n {
            let members = &class_members[y[i]];
            // k-th smallest same-class distance, excluding self
            let mut dists: Vec<f64> = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (xs[i] - xs[j]).abs())
                .collect();
            let (_, kth, _) =
                dists.select_nth_unstable_by(k_neighbors - 1, |a, b| a.partial_cmp(b).unwrap());
            let d_i = *kth;
            let m_i = xs.iter().filter(|&&v| (v - xs[i]).abs() < d_i).count();
            sum_psi_m += digamma(m_i.max(1) as f64);
        }
        let mi = psi_n - mean_psi_nc + psi_k - sum_psi_m / n as f64;
        scores.push(MiScore {
            name: name.clone(),
            score: S::cast(mi.max(0.0)),
        });
    }
    Ok(MiScores { scores })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult<S> {
    /// chosen feature names, MI-descending
    pub chosen: Vec<String>,
    /// chosen feature column indices into the original matrix, MI-descending
    pub chosen_indices: Vec<usize>,
    pub k: usize,
    /// (candidate k, mean inner-CV accuracy)
    pub curve: Vec<(usize, S)>,
}

/// Deterministic stratified k-fold: per-class seeded shuffle, then
/// round-robin assignment. Returns test-index sets.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let n_classes = y.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &yi) in y.iter().enumerate() {
        per_class[yi].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0usize;
    for members in per_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            out[next % folds].push(i);
            next += 1;
        }
    }
    out
}

fn inner_cv_accuracy<S: Scalar>(
    x: &Matrix<S>,
    y: &[usize],
    folds: &[Vec<usize>],
    params: &BoostParams<S>,
) -> Result<S> {
    let mut acc_sum = S::zero();
    let mut scored = 0usize;
    for test in folds {
        if test.is_empty() {
            continue;
        }
        let in_test: std::collections::HashSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..y.len()).filter(|i| !in_test.contains(i)).collect();
        let x_train = x.select_rows(&train);
        let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let (booster, _) = train_booster(&x_train, &y_train, params, None)?;
        let x_test = x.select_rows(test);
        let pred = booster.predict_class(&x_test)?;
        let correct = test
            .iter()
            .zip(&pred)
            .filter(|(&i, &p)| y[i] == p)
            .count();
        acc_sum += S::cast(correct as f64 / test.len() as f64);
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::Selection("no non-empty inner folds".into()));
    }
    Ok(acc_sum / S::cast(scored as f64))
}

/// RFECV along the MI-descending ranking with an explicit classifier
/// configuration. Candidate sizes are `ceil(F/2)..=F` (step 1 for F <= 40,
/// else `ceil(F/40)`, with F always included); the chosen k maximizes mean
/// stratified inner-CV accuracy, ties going to the smaller k.
pub fn rfecv_select_with_params<S: Scalar>(
    x: &Matrix<S>,
    y: &[usize],
    scores: &MiScores<S>,
    inner_folds: usize,
    seed: u64,
    params: &BoostParams<S>,
) -> Result<SelectionResult<S>> {
    let f = x.n_cols();
    if f < 2 {
        return Err(Error::Selection(format!("need at least 2 features, got {f}")));
    }
    if scores.scores.len() != f {
        return Err(Error::Selection(format!(
            "{} MI scores for {f} features",
            scores.scores.len()
        )));
    }
    if inner_folds < 2 {
        return Err(Error::Selection("inner_folds must be at least 2".into()));
    }
    let distinct = {
        let mut d: Vec<usize> = y.to_vec();
        d.sort_unstable();
        d.dedup();
        d.len()
    };
    if distinct < 2 {
        return Err(Error::Selection("labels contain a single class".into()));
    }
    let ranking = scores.ranking();
    let k_min = f.div_ceil(2);
    let step = if f <= 40 { 1 } else { f.div_ceil(40) };
    let mut candidates: Vec<usize> = (k_min..=f).step_by(step).collect();
    if candidates.last() != Some(&f) {
        candidates.push(f);
    }
    let folds = stratified_folds(y, inner_folds, seed);
    let mut curve = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, S)> = None;
    for &k in &candidates {
        let cols: Vec<usize> = ranking[..k].to_vec();
        let xk = x.select_columns(&cols);
        let acc = inner_cv_accuracy(&xk, y, &folds, params)?;
        curve.push((k, acc));
        if best.map_or(true, |(_, b)| acc > b) {
            best = Some((k, acc));
        }
    }
    let (k, _) = best.unwrap();
    let chosen_indices: Vec<usize> = ranking[..k].to_vec();
    let chosen = chosen_indices
        .iter()
        .map(|&i| scores.scores[i].name.clone())
        .collect();
    Ok(SelectionResult {
        chosen,
        chosen_indices,
        k,
        curve,
    })
}

/// RFECV with the classifier's default hyperparameters.
pub fn rfecv_select<S: Scalar>(
    x: &Matrix<S>,
    y: &[usize],
    scores: &MiScores<S>,
    inner_folds: usize,
    seed: u64,
) -> Result<SelectionResult<S>> {
    rfecv_select_with_params(x, y, scores, inner_folds, seed, &BoostParams::default())
}
