//! Orchestration: image-index loading, batch feature extraction, dataset
//! assembly, artifact writing, and the full evaluate/pipeline runs.
//!
//! Every written artifact lands in the run manifest with a SHA-256 hash so
//! reruns can be compared byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{train_booster, Booster};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluate::{ablation_grid, cross_validate, CVReport, Dataset, GridReport, ImageBlock};
use crate::matrix::Matrix;
use crate::radiomics::{extract_feature_vector, FeatureManifest};
use crate::select::{mi_scores, rfecv_select_with_params, SelectionResult};
use crate::tabular::{
    augment_pairs, load_table, merge_tnm_labels, LabSchema, PatientImages, RawTnmLabel, Table,
};
use crate::volumes::{load_mask, load_volume};
use crate::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub patient_id: String,
    pub modality: String,
    pub volume_header: PathBuf,
    pub volume_raw: PathBuf,
    pub mask_header: PathBuf,
    pub mask_raw: PathBuf,
}

/// Parse `images.csv`; relative paths resolve against the CSV's directory.
pub fn load_image_index(csv_path: &Path) -> Result<Vec<ImageRecord>> {
    let base = csv_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::Parse {
        path: csv_path.display().to_string(),
        row: 0,
        msg: e.to_string(),
    })?;
    let expect = [
        "image_id",
        "patient_id",
        "modality",
        "volume_header",
        "volume_raw",
        "mask_header",
        "mask_raw",
    ];
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: csv_path.display().to_string(),
        row: 0,
        msg: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::Schema(format!(
            "{}: expected columns {expect:?}",
            csv_path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let r = record.map_err(|e| Error::Parse {
            path: csv_path.display().to_string(),
            row: i + 1,
            msg: e.to_string(),
        })?;
        let resolve = |s: &str| {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        out.push(ImageRecord {
            image_id: r[0].to_string(),
            patient_id: r[1].to_string(),
            modality: r[2].to_lowercase(),
            volume_header: resolve(&r[3]),
            volume_raw: resolve(&r[4]),
            mask_header: resolve(&r[5]),
            mask_raw: resolve(&r[6]),
        });
    }
    Ok(out)
}

/// Extracted features for one modality: one row per image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub x: Matrix<Real>,
}

impl FeatureTable {
    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub ct: Option<FeatureTable>,
    pub mri: Option<FeatureTable>,
    pub failures: Vec<ExtractionFailure>,
}

/// Run radiomics over every listed image. Per-image failures are recorded
/// and extraction continues.
pub fn extract_all(config: &RunConfig) -> Result<Extraction> {
    let records = load_image_index(&config.images_csv)?;
    let manifest = FeatureManifest::standard();
    let mut tables: BTreeMap<String, (Vec<String>, Vec<Vec<Real>>)> = BTreeMap::new();
    let mut failures = Vec::new();
    for rec in &records {
        let attempt = || -> Result<Vec<Real>> {
            let vol = load_volume::<Real>(&rec.volume_header, &rec.volume_raw)?;
            let mask = load_mask(&rec.mask_header, &rec.mask_raw)?;
            let fv = extract_feature_vector(&vol, &mask, &config.radiomics, &rec.image_id)?;
            Ok(fv.values)
        };
        match attempt() {
            Ok(values) => {
                let slot = tables.entry(rec.modality.clone()).or_default();
                slot.0.push(rec.image_id.clone());
                slot.1.push(values);
            }
            Err(e) => failures.push(ExtractionFailure {
                image_id: rec.image_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let build = |modality: &str| -> Option<FeatureTable> {
        tables.get(modality).map(|(ids, rows)| FeatureTable {
            ids: ids.clone(),
            names: manifest
                .names()
                .map(|n| format!("{modality}_{n}"))
                .collect(),
            x: Matrix::from_rows(rows),
        })
    };
    Ok(Extraction {
        ct: build("ct"),
        mri: build("mri"),
        failures,
    })
}

pub fn feature_table_to_csv(t: &FeatureTable) -> String {
    let mut out = String::from("sample_id");
    for n in &t.names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, id) in t.ids.iter().enumerate() {
        out.push_str(id);
        for c in 0..t.x.n_cols() {
            out.push(',');
            out.push_str(&format!("{}", t.x.get(i, c)));
        }
        out.push('\n');
    }
    out
}

pub fn load_feature_csv(path: &Path) -> Result<FeatureTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: 0,
        msg: e.to_string(),
    })?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            msg: e.to_string(),
        })?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let r = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: i + 1,
            msg: e.to_string(),
        })?;
        ids.push(r[0].to_string());
        let row: Vec<Real> = r
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<Real>().map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    row: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(FeatureTable {
        ids,
        names,
        x: Matrix::from_rows(&rows),
    })
}

/// labels.csv -> (patient_id, merged class or None for Null).
pub fn load_labels(path: &Path) -> Result<Vec<(String, Option<usize>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: 0,
        msg: e.to_string(),
    })?;
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let r = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: i + 1,
            msg: e.to_string(),
        })?;
        ids.push(r[0].to_string());
        raw.push(r.get(1).unwrap_or("").parse::<RawTnmLabel>()?);
    }
    let merged = merge_tnm_labels(&raw);
    Ok(ids
        .into_iter()
        .zip(merged.into_iter().map(|m| m.map(|c| c.index())))
        .collect())
}

/// Assemble the multimodal dataset: CT x MRI pair augmentation per labeled
/// patient, image feature blocks, and raw tabular rows repeated per sample.
/// Samples lacking an image on one side get a zero row in that block (the
/// generator never produces them; real cohorts can).
pub fn build_dataset(config: &RunConfig, extraction: &Extraction) -> Result<Dataset<Real>> {
    let labels = load_labels(&config.labels_csv)?;
    let labeled: BTreeMap<&str, usize> = labels
        .iter()
        .filter_map(|(id, c)| c.map(|c| (id.as_str(), c)))
        .collect();
    let records = load_image_index(&config.images_csv)?;
    let extracted_ok = |ft: &Option<FeatureTable>, id: &str| {
        ft.as_ref().map(|t| t.row_of(id).is_some()).unwrap_or(false)
    };
    let mut per_patient: BTreeMap<String, PatientImages> = BTreeMap::new();
    for (id, _) in labels.iter().filter(|(id, _)| labeled.contains_key(id.as_str())) {
        per_patient.insert(
            id.clone(),
            PatientImages {
                patient_id: id.clone(),
                ct_ids: Vec::new(),
                mri_ids: Vec::new(),
            },
        );
    }
    for rec in &records {
        let Some(p) = per_patient.get_mut(&rec.patient_id) else {
            continue; // unlabeled patient
        };
        match rec.modality.as_str() {
            "ct" if extracted_ok(&extraction.ct, &rec.image_id) => {
                p.ct_ids.push(rec.image_id.clone())
            }
            "mri" if extracted_ok(&extraction.mri, &rec.image_id) => {
                p.mri_ids.push(rec.image_id.clone())
            }
            _ => {}
        }
    }
    let patients: Vec<PatientImages> = per_patient.into_values().collect();
    let stubs = augment_pairs(&patients);
    if stubs.is_empty() {
        return Err(Error::Input("no labeled samples to assemble".into()));
    }
    let sample_ids: Vec<String> = stubs.iter().map(|s| s.sample_id.clone()).collect();
    let patient_ids: Vec<String> = stubs.iter().map(|s| s.patient_id.clone()).collect();
    let y: Vec<usize> = stubs.iter().map(|s| labeled[s.patient_id.as_str()]).collect();

    let image_block = |ft: &Option<FeatureTable>, pick: fn(&crate::tabular::SampleStub) -> Option<&String>| {
        ft.as_ref().map(|t| {
            let rows: Vec<Vec<Real>> = stubs
                .iter()
                .map(|s| match pick(s).and_then(|id| t.row_of(id)) {
                    Some(r) => t.x.row(r).to_vec(),
                    None => vec![0.0; t.names.len()],
                })
                .collect();
            ImageBlock {
                names: t.names.clone(),
                x: Matrix::from_rows(&rows),
            }
        })
    };
    let ct = image_block(&extraction.ct, |s| s.ct_id.as_ref());
    let mri = image_block(&extraction.mri, |s| s.mri_id.as_ref());

    let load_tab = |path: &Path, schema: Option<&LabSchema>| -> Result<Table<Real>> {
        let t = load_table::<Real>(path, schema)?;
        t.select_patients(&patient_ids)
    };
    let redcap = if config.modalities.redcap {
        Some(load_tab(&config.redcap_csv, None)?)
    } else {
        None
    };
    let schema = LabSchema::standard();
    let lab = if config.modalities.lab {
        Some(load_tab(&config.lab_csv, Some(&schema))?)
    } else {
        None
    };
    let ds = Dataset {
        sample_ids,
        patient_ids,
        y,
        ct,
        mri,
        redcap,
        lab,
    };
    ds.validate()?;
    Ok(ds)
}

/// Collects written artifacts and their SHA-256 hashes.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl ArtifactWriter {
    pub fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(ArtifactWriter {
            out_dir: out_dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        let hash = Sha256::digest(bytes);
        self.entries.push((rel.to_string(), format!("{hash:x}")));
        Ok(())
    }

    /// Write `run_manifest.json` listing every artifact with its hash.
    pub fn finish(mut self) -> Result<Vec<(String, String)>> {
        self.entries.sort();
        #[derive(Serialize)]
        struct ManifestEntry<'a> {
            path: &'a str,
            sha256: &'a str,
        }
        let listing: Vec<ManifestEntry> = self
            .entries
            .iter()
            .map(|(p, h)| ManifestEntry { path: p, sha256: h })
            .collect();
        let bytes = serde_json::to_vec_pretty(&listing)?;
        fs::write(self.out_dir.join("run_manifest.json"), &bytes)?;
        Ok(self.entries)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub modalities: String,
    pub acc_mean: Real,
    pub acc_std: Real,
    pub auc_mean: Real,
    pub auc_std: Real,
    pub round_acc: Vec<Real>,
    pub round_auc: Vec<Real>,
}

pub fn cell_summary_of(report: &CVReport<Real>) -> CellSummary {
    CellSummary {
        modalities: report.modalities.clone(),
        acc_mean: report.summary.acc_mean,
        acc_std: report.summary.acc_std,
        auc_mean: report.summary.auc_mean,
        auc_std: report.summary.auc_std,
        round_acc: report.rounds.iter().map(|r| r.acc).collect(),
        round_auc: report.rounds.iter().map(|r| r.macro_auc).collect(),
    }
}

fn write_report_artifacts(w: &mut ArtifactWriter, report: &CVReport<Real>) -> Result<()> {
    for round in &report.rounds {
        let r = round.round;
        for rc in &round.roc {
            if rc.auc.is_none() {
                continue;
            }
            let mut csv = String::from("fpr,tpr,threshold\n");
            for &(fpr, tpr, thr) in &rc.points {
                csv.push_str(&format!("{fpr},{tpr},{thr}\n"));
            }
            w.write(&format!("roc_class{}_round{r}.csv", rc.class), csv.as_bytes())?;
        }
        let mut proba = String::from("sample_id");
        for k in 0..round.proba.n_cols() {
            proba.push_str(&format!(",p{k}"));
        }
        proba.push('\n');
        for (i, id) in round.test_sample_ids.iter().enumerate() {
            proba.push_str(id);
            for k in 0..round.proba.n_cols() {
                proba.push_str(&format!(",{}", round.proba.get(i, k)));
            }
            proba.push('\n');
        }
        w.write(&format!("proba_round{r}.csv"), proba.as_bytes())?;
        let mut imp = String::from("feature,gain\n");
        let mut sorted = round.importance.clone();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (name, gain) in &sorted {
            imp.push_str(&format!("{name},{gain}\n"));
        }
        w.write(&format!("importance_round{r}.csv"), imp.as_bytes())?;
        #[derive(Serialize)]
        struct SelectionDump<'a> {
            round: usize,
            k: usize,
            selected: &'a [String],
        }
        let dump = SelectionDump {
            round: r,
            k: round.selected.len(),
            selected: &round.selected,
        };
        w.write(
            &format!("selection_round{r}.json"),
            &serde_json::to_vec_pretty(&dump)?,
        )?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub primary: CVReport<Real>,
    pub grid: Option<GridReport<Real>>,
    pub failures: Vec<ExtractionFailure>,
    pub artifacts: Vec<(String, String)>,
}

/// Extraction stage as a standalone run: write per-modality feature CSVs
/// and a failure report.
pub fn run_extract(config: &RunConfig) -> Result<(Extraction, Vec<(String, String)>)> {
    config.validate()?;
    let extraction = extract_all(config)?;
    let mut w = ArtifactWriter::new(&config.out_dir)?;
    if let Some(t) = &extraction.ct {
        w.write("ct_features.csv", feature_table_to_csv(t).as_bytes())?;
    }
    if let Some(t) = &extraction.mri {
        w.write("mri_features.csv", feature_table_to_csv(t).as_bytes())?;
    }
    w.write(
        "extraction_failures.json",
        &serde_json::to_vec_pretty(&extraction.failures)?,
    )?;
    let artifacts = w.finish()?;
    Ok((extraction, artifacts))
}

/// Whole-dataset MI + RFECV (no CV split): the standalone `select` command.
pub fn run_select(config: &RunConfig) -> Result<SelectionResult<Real>> {
    config.validate()?;
    let extraction = extract_all(config)?;
    let ds = build_dataset(config, &extraction)?;
    let (x, names, y) = flatten_dataset(&ds, config)?;
    let scores = mi_scores(&x, &names, &y, config.mi_neighbors, config.seed)?;
    let selection = rfecv_select_with_params(
        &x,
        &y,
        &scores,
        config.inner_folds,
        config.seed,
        &config.selection_boost,
    )?;
    let mut w = ArtifactWriter::new(&config.out_dir)?;
    w.write("mi_scores.json", &serde_json::to_vec_pretty(&scores)?)?;
    w.write("selection.json", &serde_json::to_vec_pretty(&selection)?)?;
    w.finish()?;
    Ok(selection)
}

/// Fit one booster on the full dataset after selection: the `train` command.
pub fn run_train(config: &RunConfig) -> Result<Booster<Real>> {
    config.validate()?;
    let extraction = extract_all(config)?;
    let ds = build_dataset(config, &extraction)?;
    let (x, names, y) = flatten_dataset(&ds, config)?;
    let scores = mi_scores(&x, &names, &y, config.mi_neighbors, config.seed)?;
    let selection = rfecv_select_with_params(
        &x,
        &y,
        &scores,
        config.inner_folds,
        config.seed,
        &config.selection_boost,
    )?;
    let xs = x.select_columns(&selection.chosen_indices);
    let (booster, log) = train_booster(&xs, &y, &config.boost, None)?;
    let feature_hash = {
        let joined = selection.chosen.join("\n");
        format!("{:x}", Sha256::digest(joined.as_bytes()))
    };
    #[derive(Serialize)]
    struct ModelFile<'a> {
        feature_names: &'a [String],
        feature_manifest_sha256: String,
        booster: &'a Booster<Real>,
        train_ce: &'a [Real],
    }
    let model = ModelFile {
        feature_names: &selection.chosen,
        feature_manifest_sha256: feature_hash,
        booster: &booster,
        train_ce: &log.train_ce,
    };
    let mut w = ArtifactWriter::new(&config.out_dir)?;
    w.write("model.json", &serde_json::to_vec_pretty(&model)?)?;
    w.finish()?;
    Ok(booster)
}

/// Fit the per-fold preprocessing on the whole dataset once — used only by
/// the standalone select/train commands, which have no held-out side.
fn flatten_dataset(
    ds: &Dataset<Real>,
    config: &RunConfig,
) -> Result<(Matrix<Real>, Vec<String>, Vec<usize>)> {
    use crate::tabular::fit_tabular;
    let mut blocks: Vec<(Vec<String>, Matrix<Real>)> = Vec::new();
    for (on, block) in [(config.modalities.ct, &ds.ct), (config.modalities.mri, &ds.mri)] {
        if !on {
            continue;
        }
        let b = block
            .as_ref()
            .ok_or_else(|| Error::Input("image modality requested but absent".into()))?;
        blocks.push((b.names.clone(), b.x.clone()));
    }
    for (on, table, prefix) in [
        (config.modalities.redcap, &ds.redcap, "redcap_"),
        (config.modalities.lab, &ds.lab, "lab_"),
    ] {
        if !on {
            continue;
        }
        let t = table
            .as_ref()
            .ok_or_else(|| Error::Input("tabular modality requested but absent".into()))?;
        let fitted = fit_tabular(t, &config.filter)?;
        let names = fitted
            .feature_names
            .iter()
            .map(|n| format!("{prefix}{n}"))
            .collect();
        blocks.push((names, fitted.transform(t)?));
    }
    if blocks.is_empty() {
        return Err(Error::Config("no modality enabled".into()));
    }
    let n = blocks[0].1.n_rows();
    let total: usize = blocks.iter().map(|(_, m)| m.n_cols()).sum();
    let mut names = Vec::with_capacity(total);
    let mut x = Matrix::zeros(n, total);
    let mut at = 0;
    for (bn, m) in blocks {
        for r in 0..n {
            for c in 0..m.n_cols() {
                x.set(r, at + c, m.get(r, c));
            }
        }
        at += m.n_cols();
        names.extend(bn);
    }
    Ok((x, names, ds.y.clone()))
}

/// Cross-validated evaluation over already-extracted features, writing
/// metrics and per-round artifacts.
pub fn run_evaluate(
    config: &RunConfig,
    extraction: &Extraction,
    grid: bool,
) -> Result<PipelineOutput> {
    let ds = build_dataset(config, extraction)?;
    let eval = config.eval_config();
    let primary = cross_validate(&ds, &eval)?;
    let grid_report = if grid { Some(ablation_grid(&ds, &eval)?) } else { None };

    let mut w = ArtifactWriter::new(&config.out_dir)?;
    let mut cells: Vec<CellSummary> = Vec::new();
    match &grid_report {
        Some(g) => cells.extend(g.cells.iter().map(|c| cell_summary_of(&c.report))),
        None => cells.push(cell_summary_of(&primary)),
    }
    w.write("metrics.json", &serde_json::to_vec_pretty(&cells)?)?;
    write_report_artifacts(&mut w, &primary)?;
    w.write(
        "config.json",
        &serde_json::to_vec_pretty(&config)?,
    )?;
    let artifacts = w.finish()?;
    Ok(PipelineOutput {
        primary,
        grid: grid_report,
        failures: Vec::new(),
        artifacts,
    })
}

/// Full run: extract, then evaluate (optionally the whole ablation grid).
pub fn run_pipeline(config: &RunConfig, grid: bool) -> Result<PipelineOutput> {
    config.validate()?;
    let extraction = extract_all(config)?;
    let mut out = run_evaluate(config, &extraction, grid)?;
    let mut w = ArtifactWriter::new(&config.out_dir)?;
    if let Some(t) = &extraction.ct {
        w.write("ct_features.csv", feature_table_to_csv(t).as_bytes())?;
    }
    if let Some(t) = &extraction.mri {
        w.write("mri_features.csv", feature_table_to_csv(t).as_bytes())?;
    }
    w.write(
        "extraction_failures.json",
        &serde_json::to_vec_pretty(&extraction.failures)?,
    )?;
    out.failures = extraction.failures;
    out.artifacts = w.finish()?;
    Ok(out)
}

/// Plain-text summary table: one line per cell with mean±std metrics.
pub fn format_summary(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>14} {:>14}\n",
        "modalities", "ACC", "AUC"
    ));
    for c in cells {
        out.push_str(&format!(
            "{:<22} {:>6.3} ± {:<5.3} {:>6.3} ± {:<5.3}\n",
            c.modalities, c.acc_mean, c.acc_std, c.auc_mean, c.auc_std
        ));
    }
    out
}
