//! Run configuration: one JSON file drives every pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boost::BoostParams;
use crate::error::{Error, Result};
use crate::evaluate::{EvalConfig, ModalityMask};
use crate::radiomics::RadiomicsParams;
use crate::tabular::FilterPolicy;
use crate::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub images_csv: PathBuf,
    pub redcap_csv: PathBuf,
    pub lab_csv: PathBuf,
    pub labels_csv: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub modalities: ModalityMask,
    pub radiomics: RadiomicsParams,
    pub filter: FilterPolicy,
    pub rounds: usize,
    pub stratified: bool,
    pub mi_neighbors: usize,
    pub inner_folds: usize,
    /// classifier used inside RFECV's inner CV (kept small: it runs once
    /// per candidate subset per fold)
    pub selection_boost: BoostParams<Real>,
    /// final per-round classifier
    pub boost: BoostParams<Real>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            images_csv: PathBuf::new(),
            redcap_csv: PathBuf::new(),
            lab_csv: PathBuf::new(),
            labels_csv: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            modalities: ModalityMask::all(),
            radiomics: RadiomicsParams::default(),
            filter: FilterPolicy::default(),
            rounds: 5,
            stratified: true,
            mi_neighbors: 3,
            inner_folds: 5,
            selection_boost: BoostParams {
                rounds: 15,
                max_depth: 3,
                ..BoostParams::default()
            },
            // shallow, slow-learning trees hold up much better than the
            // library defaults at desk-scale cohort sizes
            boost: BoostParams {
                eta: 0.1,
                max_depth: 2,
                lambda: 3.0,
                rounds: 300,
                ..BoostParams::default()
            },
        }
    }
}

impl RunConfig {
    /// Point every data path at a cohort directory laid out like the
    /// generator's output.
    pub fn for_cohort(cohort_dir: &Path, out_dir: &Path) -> Self {
        RunConfig {
            images_csv: cohort_dir.join("images.csv"),
            redcap_csv: cohort_dir.join("redcap.csv"),
            lab_csv: cohort_dir.join("lab.csv"),
            labels_csv: cohort_dir.join("labels.csv"),
            out_dir: out_dir.to_path_buf(),
            ..RunConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Check that every referenced input exists. `out_dir` is created later.
    pub fn validate(&self) -> Result<()> {
        let mut required = vec![("images_csv", &self.images_csv), ("labels_csv", &self.labels_csv)];
        if self.modalities.redcap {
            required.push(("redcap_csv", &self.redcap_csv));
        }
        if self.modalities.lab {
            required.push(("lab_csv", &self.lab_csv));
        }
        for (name, p) in required {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "{name} path {} does not exist",
                    p.display()
                )));
            }
        }
        if !self.modalities.any() {
            return Err(Error::Config("no modality enabled".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig<Real> {
        EvalConfig {
            rounds: self.rounds,
            seed: self.seed,
            stratified: self.stratified,
            filter: self.filter.clone(),
            mi_neighbors: self.mi_neighbors,
            inner_folds: self.inner_folds,
            selection_params: self.selection_boost.clone(),
            boost: self.boost.clone(),
            modalities: self.modalities,
        }
    }
}
