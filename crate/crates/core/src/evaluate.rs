//! Patient-level cross-validated evaluation: stratified 4:1 splits, leakage
//! safe per-round preprocessing + selection, accuracy and one-vs-rest ROC
//! AUC, and the 15-cell modality-ablation grid.

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boost::{train_booster, BoostParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::select::{mi_scores, rfecv_select_with_params};
use crate::tabular::{fit_tabular, FilterPolicy, Table};

/// One modality's feature block, rows aligned with the dataset's samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageBlock<S> {
    pub names: Vec<String>,
    pub x: Matrix<S>,
}

/// Assembled multimodal dataset. Image blocks are ready numeric features;
/// tabular blocks stay raw so filtering/encoding/imputation can be fit
/// per-fold on training rows only.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub sample_ids: Vec<String>,
    /// per-sample owning patient
    pub patient_ids: Vec<String>,
    pub y: Vec<usize>,
    pub ct: Option<ImageBlock<S>>,
    pub mri: Option<ImageBlock<S>>,
    pub redcap: Option<Table<S>>,
    pub lab: Option<Table<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if self.patient_ids.len() != n || self.y.len() != n {
            return Err(Error::Input("dataset block lengths disagree".into()));
        }
        for b in [&self.ct, &self.mri].into_iter().flatten() {
            if b.x.n_rows() != n || b.names.len() != b.x.n_cols() {
                return Err(Error::Input("image block misaligned with samples".into()));
            }
        }
        for t in [&self.redcap, &self.lab].into_iter().flatten() {
            if t.n_rows() != n {
                return Err(Error::Input("tabular block misaligned with samples".into()));
            }
        }
        Ok(())
    }

    /// Unique patients in first-appearance order with their class label.
    pub fn labeled_patients(&self) -> (Vec<String>, Vec<usize>) {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (p, &yi) in self.patient_ids.iter().zip(&self.y) {
            if seen.insert(p.clone()) {
                ids.push(p.clone());
                labels.push(yi);
            }
        }
        (ids, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityMask {
    pub ct: bool,
    pub mri: bool,
    pub redcap: bool,
    pub lab: bool,
}

impl ModalityMask {
    pub fn all() -> Self {
        ModalityMask {
            ct: true,
            mri: true,
            redcap: true,
            lab: true,
        }
    }

    pub fn any(&self) -> bool {
        self.ct || self.mri || self.redcap || self.lab
    }

    pub fn label(&self) -> String {
        let image = match (self.ct, self.mri) {
            (true, true) => "ct+mri",
            (true, false) => "ct",
            (false, true) => "mri",
            (false, false) => "null",
        };
        let tab = match (self.redcap, self.lab) {
            (true, true) => "redcap+lab",
            (true, false) => "redcap",
            (false, true) => "lab",
            (false, false) => "null",
        };
        format!("{image}/{tab}")
    }
}

impl std::str::FromStr for ModalityMask {
    type Err = Error;

    /// Accepts `ct`, `mri`, `redcap`, `lab` joined by `+`, `,` or `/`;
    /// `all` enables everything and `null` tokens are ignored, so the
    /// output of [`ModalityMask::label`] parses back.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(ModalityMask::all());
        }
        let mut mask = ModalityMask {
            ct: false,
            mri: false,
            redcap: false,
            lab: false,
        };
        for token in s.split(['+', ',', '/']) {
            match token.trim() {
                "ct" => mask.ct = true,
                "mri" => mask.mri = true,
                "redcap" => mask.redcap = true,
                "lab" => mask.lab = true,
                "null" | "" => {}
                other => {
                    return Err(Error::Config(format!(
                        "unknown modality {other:?} (expected ct, mri, redcap, lab)"
                    )))
                }
            }
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct EvalConfig<S> {
    pub rounds: usize,
    pub seed: u64,
    pub stratified: bool,
    pub filter: FilterPolicy,
    pub mi_neighbors: usize,
    pub inner_folds: usize,
    /// classifier used inside RFECV's inner CV
    pub selection_params: BoostParams<S>,
    /// final per-round classifier
    pub boost: BoostParams<S>,
    pub modalities: ModalityMask,
}

impl<S: Scalar> Default for EvalConfig<S> {
    fn default() -> Self {
        EvalConfig {
            rounds: 5,
            seed: 0,
            stratified: true,
            filter: FilterPolicy::default(),
            mi_neighbors: 3,
            inner_folds: 5,
            selection_params: BoostParams {
                rounds: 10,
                max_depth: 3,
                ..BoostParams::default()
            },
            boost: BoostParams::default(),
            modalities: ModalityMask::all(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub round: usize,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn assert_disjoint(&self) -> Result<()> {
        let train: HashSet<&String> = self.train.iter().collect();
        for t in &self.test {
            if train.contains(t) {
                return Err(Error::Split(format!("patient {t} on both sides")));
            }
        }
        Ok(())
    }
}

fn try_split(
    patient_ids: &[String],
    labels: &[usize],
    seed: u64,
    stratified: bool,
) -> (Vec<String>, Vec<String>) {
    let p = patient_ids.len();
    let n_train = (p * 4).div_ceil(5); // ceil(0.8 P)
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !stratified {
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut rng);
        let train = order[..n_train].iter().map(|&i| patient_ids[i].clone()).collect();
        let test = order[n_train..].iter().map(|&i| patient_ids[i].clone()).collect();
        return (train, test);
    }
    // largest-remainder allocation of the train quota across classes
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        per_class[c].push(i);
    }
    let quota: Vec<f64> = per_class
        .iter()
        .map(|m| n_train as f64 * m.len() as f64 / p as f64)
        .collect();
    let mut alloc: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let mut rest = n_train - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        (quota[b] - quota[b].floor())
            .partial_cmp(&(quota[a] - quota[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    for &c in &order {
        if rest == 0 {
            break;
        }
        if alloc[c] < per_class[c].len() {
            alloc[c] += 1;
            rest -= 1;
        }
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(p - n_train);
    for (c, members) in per_class.iter().enumerate() {
        let mut m = members.clone();
        m.shuffle(&mut rng);
        for (j, &i) in m.iter().enumerate() {
            if j < alloc[c] {
                train.push(patient_ids[i].clone());
            } else {
                test.push(patient_ids[i].clone());
            }
        }
    }
    (train, test)
}

/// Patient-level 4:1 split (train gets ceil(0.8 P)), stratified by class via
/// largest-remainder quota. Retries with successive seeds (up to 100) if a
/// class ends up absent from the training side.
pub fn patient_split(
    patient_ids: &[String],
    labels: &[usize],
    round: usize,
    round_seed: u64,
    stratified: bool,
) -> Result<SplitPlan> {
    let p = patient_ids.len();
    if p < 5 {
        return Err(Error::Split(format!("need at least 5 labeled patients, got {p}")));
    }
    if labels.len() != p {
        return Err(Error::Split(format!("{} labels for {p} patients", labels.len())));
    }
    let present: HashSet<usize> = labels.iter().copied().collect();
    for attempt in 0..100 {
        let (train, test) = try_split(patient_ids, labels, round_seed + attempt, stratified);
        let train_set: HashSet<&String> = train.iter().collect();
        let train_classes: HashSet<usize> = patient_ids
            .iter()
            .zip(labels)
            .filter(|(id, _)| train_set.contains(id))
            .map(|(_, &c)| c)
            .collect();
        if train_classes == present {
            let plan = SplitPlan {
                round,
                seed: round_seed + attempt,
                train,
                test,
            };
            plan.assert_disjoint()?;
            return Ok(plan);
        }
    }
    Err(Error::Split(
        "no split kept every class in training after 100 attempts".into(),
    ))
}

pub fn accuracy<S: Scalar>(pred: &[usize], truth: &[usize]) -> Result<S> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Input(format!(
            "accuracy needs equal non-empty lengths, got {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let correct = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(S::cast(correct as f64 / pred.len() as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocClass<S> {
    pub class: usize,
    /// `None` when the class has no positives or no negatives
    pub auc: Option<S>,
    /// (fpr, tpr, threshold) from the descending-score sweep, ties grouped
    pub points: Vec<(S, S, S)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocResult<S> {
    pub per_class: Vec<RocClass<S>>,
    /// unweighted mean over defined per-class AUCs
    pub macro_auc: S,
    /// classes whose AUC was undefined
    pub undefined: Vec<usize>,
}

/// One-vs-rest ROC/AUC per class with score = predicted probability of that
/// class. AUC equals (concordant pairs + 0.5 ties) / (P * N).
pub fn roc_auc_ovr<S: Scalar>(probs: &Matrix<S>, y: &[usize]) -> Result<RocResult<S>> {
    let n = probs.n_rows();
    if y.len() != n || n == 0 {
        return Err(Error::Input(format!("{} labels for {n} probability rows", y.len())));
    }
    let k = probs.n_cols();
    let mut per_class = Vec::with_capacity(k);
    let mut undefined = Vec::new();
    let mut macro_sum = S::zero();
    let mut defined = 0usize;
    for c in 0..k {
        let scores: Vec<S> = probs.column(c);
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Input(format!("non-finite score for class {c}")));
        }
        let pos = y.iter().filter(|&&yi| yi == c).count();
        let neg = n - pos;
        if pos == 0 || neg == 0 {
            undefined.push(c);
            per_class.push(RocClass {
                class: c,
                auc: None,
                points: Vec::new(),
            });
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let (pos_f, neg_f) = (S::cast(pos as f64), S::cast(neg as f64));
        let mut points = vec![(S::zero(), S::zero(), S::infinity())];
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut area = S::zero();
        let mut i = 0;
        while i < n {
            // group tied scores
            let mut j = i;
            let (mut dtp, mut dfp) = (0usize, 0usize);
            while j < n && scores[order[j]] == scores[order[i]] {
                if y[order[j]] == c {
                    dtp += 1;
                } else {
                    dfp += 1;
                }
                j += 1;
            }
            let tpr0 = S::cast(tp as f64) / pos_f;
            tp += dtp;
            fp += dfp;
            let tpr1 = S::cast(tp as f64) / pos_f;
            let dfpr = S::cast(dfp as f64) / neg_f;
            // trapezoid over the tie block = concordant + half-tie credit
            area += dfpr * (tpr0 + tpr1) / S::cast(2.0);
            points.push((S::cast(fp as f64) / neg_f, tpr1, scores[order[i]]));
            i = j;
        }
        macro_sum += area;
        defined += 1;
        per_class.push(RocClass {
            class: c,
            auc: Some(area),
            points,
        });
    }
    if defined == 0 {
        return Err(Error::Input("every class AUC is undefined".into()));
    }
    Ok(RocResult {
        per_class,
        macro_auc: macro_sum / S::cast(defined as f64),
        undefined,
    })
}

/// Mean and population standard deviation.
pub fn summarize<S: Scalar>(values: &[S]) -> (S, S) {
    let mean = crate::scalar::mean(values);
    (mean, crate::scalar::variance(values).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVRound<S> {
    pub round: usize,
    pub plan: SplitPlan,
    pub acc: S,
    pub macro_auc: S,
    pub roc: Vec<RocClass<S>>,
    pub selected: Vec<String>,
    /// rows = true class, cols = predicted
    pub confusion: Vec<Vec<usize>>,
    /// (feature, total gain) over the selected features
    pub importance: Vec<(String, S)>,
    pub test_sample_ids: Vec<String>,
    pub proba: Matrix<S>,
    /// true when every row used for preprocessing/selection fitting came
    /// from training patients
    pub leakage_free: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVSummary<S> {
    pub acc_mean: S,
    pub acc_std: S,
    pub auc_mean: S,
    pub auc_std: S,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVReport<S> {
    pub modalities: String,
    pub rounds: Vec<CVRound<S>>,
    pub summary: CVSummary<S>,
}

struct FoldFeatures<S> {
    names: Vec<String>,
    x_train: Matrix<S>,
    x_test: Matrix<S>,
    /// patient ids whose rows any fit consumed
    fit_patients: Vec<String>,
}

fn hstack<S: Scalar>(blocks: &[(&[String], &Matrix<S>)]) -> (Vec<String>, Matrix<S>) {
    let n = blocks.first().map_or(0, |(_, m)| m.n_rows());
    let total: usize = blocks.iter().map(|(_, m)| m.n_cols()).sum();
    let mut names = Vec::with_capacity(total);
    let mut out = Matrix::zeros(n, total);
    let mut at = 0;
    for (bn, m) in blocks {
        names.extend(bn.iter().cloned());
        for r in 0..n {
            for c in 0..m.n_cols() {
                out.set(r, at + c, m.get(r, c));
            }
        }
        at += m.n_cols();
    }
    (names, out)
}

fn assemble_fold<S: Scalar>(
    ds: &Dataset<S>,
    mask: &ModalityMask,
    filter: &FilterPolicy,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<FoldFeatures<S>> {
    let mut train_blocks: Vec<(Vec<String>, Matrix<S>)> = Vec::new();
    let mut test_blocks: Vec<Matrix<S>> = Vec::new();
    let mut fit_patients: Vec<String> = Vec::new();
    for (on, block, prefix) in [(mask.ct, &ds.ct, "ct_"), (mask.mri, &ds.mri, "mri_")] {
        if !on {
            continue;
        }
        let block = block.as_ref().ok_or_else(|| {
            Error::Input(format!("modality {} requested but absent", prefix.trim_end_matches('_')))
        })?;
        let names = block
            .names
            .iter()
            .map(|n| {
                if n.starts_with(prefix) {
                    n.clone()
                } else {
                    format!("{prefix}{n}")
                }
            })
            .collect();
        train_blocks.push((names, block.x.select_rows(train_idx)));
        test_blocks.push(block.x.select_rows(test_idx));
    }
    for (on, table, prefix) in [(mask.redcap, &ds.redcap, "redcap_"), (mask.lab, &ds.lab, "lab_")] {
        if !on {
            continue;
        }
        let table = table.as_ref().ok_or_else(|| {
            Error::Input(format!("modality {} requested but absent", prefix.trim_end_matches('_')))
        })?;
        let train_t = table.select_rows(train_idx);
        let test_t = table.select_rows(test_idx);
        let fitted = fit_tabular(&train_t, filter)?;
        fit_patients.extend(fitted.fit_patient_ids.iter().cloned());
        let names = fitted
            .feature_names
            .iter()
            .map(|n| format!("{prefix}{n}"))
            .collect();
        train_blocks.push((names, fitted.transform(&train_t)?));
        test_blocks.push(fitted.transform(&test_t)?);
    }
    if train_blocks.is_empty() {
        return Err(Error::Input("no modality enabled".into()));
    }
    let refs: Vec<(&[String], &Matrix<S>)> = train_blocks
        .iter()
        .map(|(n, m)| (n.as_slice(), m))
        .collect();
    let (names, x_train) = hstack(&refs);
    let test_refs: Vec<(&[String], &Matrix<S>)> = train_blocks
        .iter()
        .zip(&test_blocks)
        .map(|((n, _), m)| (n.as_slice(), m))
        .collect();
    let (_, x_test) = hstack(&test_refs);
    Ok(FoldFeatures {
        names,
        x_train,
        x_test,
        fit_patients,
    })
}

/// Run `config.rounds` rounds of patient-level CV: split, fit preprocessing
/// and MI+RFECV selection on training rows only, train the booster, score
/// the held-out patients.
pub fn cross_validate<S: Scalar>(ds: &Dataset<S>, config: &EvalConfig<S>) -> Result<CVReport<S>> {
    ds.validate()?;
    if !config.modalities.any() {
        return Err(Error::Config("no modality enabled".into()));
    }
    let (patients, patient_labels) = ds.labeled_patients();
    let mut rounds = Vec::with_capacity(config.rounds);
    for r in 0..config.rounds {
        let round = run_round(ds, config, &patients, &patient_labels, r)
            .map_err(|e| e.in_round(r))?;
        rounds.push(round);
    }
    let accs: Vec<S> = rounds.iter().map(|r| r.acc).collect();
    let aucs: Vec<S> = rounds.iter().map(|r| r.macro_auc).collect();
    let (acc_mean, acc_std) = summarize(&accs);
    let (auc_mean, auc_std) = summarize(&aucs);
    Ok(CVReport {
        modalities: config.modalities.label(),
        rounds,
        summary: CVSummary {
            acc_mean,
            acc_std,
            auc_mean,
            auc_std,
        },
    })
}

fn run_round<S: Scalar>(
    ds: &Dataset<S>,
    config: &EvalConfig<S>,
    patients: &[String],
    patient_labels: &[usize],
    r: usize,
) -> Result<CVRound<S>> {
    let round_seed = config.seed.wrapping_add(r as u64).wrapping_mul(0x9E37_79B9)
        .wrapping_add(r as u64);
    let plan = patient_split(patients, patient_labels, r, round_seed, config.stratified)?;
    plan.assert_disjoint()?;
    let train_set: HashSet<&String> = plan.train.iter().collect();
    let test_set: HashSet<&String> = plan.test.iter().collect();
    let train_idx: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| train_set.contains(&ds.patient_ids[i]))
        .collect();
    let test_idx: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| test_set.contains(&ds.patient_ids[i]))
        .collect();
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Split("a split side has no samples".into()));
    }
    let y_train: Vec<usize> = train_idx.iter().map(|&i| ds.y[i]).collect();
    let y_test: Vec<usize> = test_idx.iter().map(|&i| ds.y[i]).collect();

    let fold = assemble_fold(ds, &config.modalities, &config.filter, &train_idx, &test_idx)?;
    let leakage_free = fold.fit_patients.iter().all(|p| !test_set.contains(p));

    let scores = mi_scores(
        &fold.x_train,
        &fold.names,
        &y_train,
        config.mi_neighbors,
        round_seed,
    )?;
    let selection = rfecv_select_with_params(
        &fold.x_train,
        &y_train,
        &scores,
        config.inner_folds,
        round_seed,
        &config.selection_params,
    )?;
    let x_train = fold.x_train.select_columns(&selection.chosen_indices);
    let x_test = fold.x_test.select_columns(&selection.chosen_indices);

    let (booster, _) = train_booster(&x_train, &y_train, &config.boost, None)?;
    let proba = booster.predict_proba(&x_test)?;
    let pred = booster.predict_class(&x_test)?;
    let acc = accuracy::<S>(&pred, &y_test)?;
    let roc = roc_auc_ovr(&proba, &y_test)?;
    let n_classes = booster.n_classes;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_test.iter().zip(&pred) {
        confusion[t][p] += 1;
    }
    let importance: Vec<(String, S)> = selection
        .chosen
        .iter()
        .cloned()
        .zip(booster.importance_gain())
        .collect();
    Ok(CVRound {
        round: r,
        plan,
        acc,
        macro_auc: roc.macro_auc,
        roc: roc.per_class,
        selected: selection.chosen,
        confusion,
        importance,
        test_sample_ids: test_idx.iter().map(|&i| ds.sample_ids[i].clone()).collect(),
        proba,
        leakage_free,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell<S> {
    pub modalities: ModalityMask,
    pub report: CVReport<S>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport<S> {
    pub cells: Vec<GridCell<S>>,
}

/// All modality combinations of the 4x4 ablation grid except the empty
/// null/null cell. Split plans depend only on patients and the seed, so
/// every cell sees identical folds.
pub fn grid_masks() -> Vec<ModalityMask> {
    let image = [(true, true), (true, false), (false, true), (false, false)];
    let tab = [(true, true), (true, false), (false, true), (false, false)];
    let mut out = Vec::with_capacity(15);
    for &(ct, mri) in &image {
        for &(redcap, lab) in &tab {
            let m = ModalityMask { ct, mri, redcap, lab };
            if m.any() {
                out.push(m);
            }
        }
    }
    out
}

pub fn ablation_grid<S: Scalar>(ds: &Dataset<S>, config: &EvalConfig<S>) -> Result<GridReport<S>> {
    let mut cells = Vec::with_capacity(15);
    for modalities in grid_masks() {
        let cell_config = EvalConfig {
            modalities,
            ..config.clone()
        };
        cells.push(GridCell {
            modalities,
            report: cross_validate(ds, &cell_config)?,
        });
    }
    Ok(GridReport { cells })
}
