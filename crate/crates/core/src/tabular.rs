//! Clinical tabular data: CSV loading, column filtering, categorical
//! encoding, mean imputation, stage-label merging, and multimodal sample
//! augmentation.
//!
//! CSV convention: UTF-8, first row headers, first column `patient_id`,
//! empty cell = missing value, `.` decimal separator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell<S> {
    Num(S),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column<S> {
    pub name: String,
    pub kind: ColumnKind,
    pub cells: Vec<Option<Cell<S>>>,
}

impl<S: Scalar> Column<S> {
    pub fn coverage(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|c| c.is_some()).count() as f64 / self.cells.len() as f64
    }

    fn value_key(cell: &Cell<S>) -> String {
        match cell {
            Cell::Num(v) => format!("{v}"),
            Cell::Text(t) => t.clone(),
        }
    }

    /// (number of distinct non-missing values, modal share among non-missing)
    pub fn value_stats(&self) -> (usize, f64) {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0usize;
        for cell in self.cells.iter().flatten() {
            *counts.entry(Self::value_key(cell)).or_insert(0) += 1;
            total += 1;
        }
        if total == 0 {
            return (0, 0.0);
        }
        let modal = counts.values().copied().max().unwrap_or(0);
        (counts.len(), modal as f64 / total as f64)
    }
}

/// Column-oriented table with per-row patient ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<S> {
    pub patient_ids: Vec<String>,
    pub columns: Vec<Column<S>>,
}

impl<S: Scalar> Table<S> {
    pub fn n_rows(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column<S>> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if c.cells.len() != self.patient_ids.len() {
                return Err(Error::Schema(format!(
                    "column {} has {} cells for {} rows",
                    c.name,
                    c.cells.len(),
                    self.patient_ids.len()
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
        }
        if let Some(i) = self.patient_ids.iter().position(|p| p.is_empty()) {
            return Err(Error::Schema(format!("empty patient_id at row {i}")));
        }
        Ok(())
    }

    /// Row subset by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Table<S> {
        Table {
            patient_ids: idx.iter().map(|&r| self.patient_ids[r].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    cells: idx.iter().map(|&r| c.cells[r].clone()).collect(),
                })
                .collect(),
        }
    }

    /// Rows restricted to the given patient ids (first occurrence each).
    pub fn select_patients(&self, ids: &[String]) -> Result<Table<S>> {
        let mut row_of = BTreeMap::new();
        for (i, p) in self.patient_ids.iter().enumerate() {
            row_of.entry(p.as_str()).or_insert(i);
        }
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let &r = row_of
                .get(id.as_str())
                .ok_or_else(|| Error::Input(format!("patient {id} missing from table")))?;
            rows.push(r);
        }
        Ok(Table {
            patient_ids: ids.to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    cells: rows.iter().map(|&r| c.cells[r].clone()).collect(),
                })
                .collect(),
        })
    }

    /// Dense numeric matrix; every column must be numeric and complete.
    pub fn to_matrix(&self) -> Result<Matrix<S>> {
        let mut rows = Vec::with_capacity(self.n_rows());
        for r in 0..self.n_rows() {
            let mut row = Vec::with_capacity(self.columns.len());
            for c in &self.columns {
                match &c.cells[r] {
                    Some(Cell::Num(v)) => row.push(*v),
                    Some(Cell::Text(t)) => {
                        return Err(Error::Input(format!(
                            "column {} still categorical (value {t:?})",
                            c.name
                        )))
                    }
                    None => {
                        return Err(Error::Input(format!(
                            "column {} still has missing values",
                            c.name
                        )))
                    }
                }
            }
            rows.push(row);
        }
        Ok(Matrix::from_rows(&rows))
    }
}

/// Load a CSV table, inferring column kinds (numeric when every non-missing
/// cell parses as a number). With a [`LabSchema`], every schema variable
/// present must come out numeric.
pub fn load_table<S: Scalar>(path: &Path, schema: Option<&LabSchema>) -> Result<Table<S>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            msg: e.to_string(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.first().map(String::as_str) != Some("patient_id") {
        return Err(Error::Schema(format!(
            "{}: first column must be patient_id, got {:?}",
            path.display(),
            headers.first()
        )));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::Schema(format!(
                    "{}: duplicate column name {h:?}",
                    path.display()
                )));
            }
        }
    }
    let n_cols = headers.len() - 1;
    let mut patient_ids = Vec::new();
    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); n_cols];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row: i + 1,
            msg: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: i + 1,
                msg: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let pid = record.get(0).unwrap_or("").trim().to_string();
        if pid.is_empty() {
            return Err(Error::Schema(format!(
                "{}: empty patient_id at row {}",
                path.display(),
                i + 1
            )));
        }
        patient_ids.push(pid);
        for c in 0..n_cols {
            let field = record.get(c + 1).unwrap_or("").trim();
            raw[c].push(if field.is_empty() {
                None
            } else {
                Some(field.to_string())
            });
        }
    }
    let mut columns = Vec::with_capacity(n_cols);
    for (c, name) in headers.iter().skip(1).enumerate() {
        let numeric = raw[c]
            .iter()
            .flatten()
            .all(|v| v.parse::<f64>().map(|x| x.is_finite()).unwrap_or(false));
        let cells: Vec<Option<Cell<S>>> = raw[c]
            .iter()
            .map(|v| {
                v.as_ref().map(|text| {
                    if numeric {
                        Cell::Num(S::cast(text.parse::<f64>().unwrap()))
                    } else {
                        Cell::Text(text.clone())
                    }
                })
            })
            .collect();
        columns.push(Column {
            name: name.clone(),
            kind: if numeric {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            },
            cells,
        });
    }
    let table = Table {
        patient_ids,
        columns,
    };
    table.validate()?;
    if let Some(schema) = schema {
        for var in &schema.variables {
            if let Some(col) = table.column(&var.name) {
                if col.kind != ColumnKind::Numeric {
                    return Err(Error::Schema(format!(
                        "{}: lab variable {} ({}) must be numeric",
                        path.display(),
                        var.name,
                        var.unit
                    )));
                }
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub coverage_min: f64,
    pub near_constant_max: f64,
    #[serde(default)]
    pub exclude_names: Vec<String>,
    #[serde(default)]
    pub whitelist: Vec<String>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            coverage_min: 0.80,
            near_constant_max: 0.95,
            exclude_names: Vec::new(),
            whitelist: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Excluded,
    Coverage,
    Constant,
    NearConstant,
}

impl fmt::Display for FilterReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FilterReason::Excluded => "excluded",
            FilterReason::Coverage => "coverage",
            FilterReason::Constant => "constant",
            FilterReason::NearConstant => "near_constant",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRemoval {
    pub column: String,
    pub reason: FilterReason,
}

/// Drop name-excluded, low-coverage, constant, and (non-whitelisted)
/// near-constant columns. The report lists every removal with the rule that
/// fired first.
pub fn filter_columns<S: Scalar>(
    t: &Table<S>,
    policy: &FilterPolicy,
) -> (Table<S>, Vec<FilterRemoval>) {
    assert!(
        policy.coverage_min > 0.0 && policy.coverage_min <= 1.0,
        "coverage_min must be in (0,1]"
    );
    assert!(
        policy.near_constant_max > 0.0 && policy.near_constant_max <= 1.0,
        "near_constant_max must be in (0,1]"
    );
    let mut kept = Vec::new();
    let mut removals = Vec::new();
    for col in &t.columns {
        let reason = if policy.exclude_names.iter().any(|n| n == &col.name) {
            Some(FilterReason::Excluded)
        } else if col.coverage() < policy.coverage_min {
            Some(FilterReason::Coverage)
        } else {
            let (distinct, modal_share) = col.value_stats();
            if distinct <= 1 {
                Some(FilterReason::Constant)
            } else if modal_share > policy.near_constant_max
                && !policy.whitelist.iter().any(|n| n == &col.name)
            {
                Some(FilterReason::NearConstant)
            } else {
                None
            }
        };
        match reason {
            Some(reason) => removals.push(FilterRemoval {
                column: col.name.clone(),
                reason,
            }),
            None => kept.push(col.clone()),
        }
    }
    (
        Table {
            patient_ids: t.patient_ids.clone(),
            columns: kept,
        },
        removals,
    )
}

/// Per-column value lists in first-appearance order; a value's code is its
/// position in the list.
pub type EncodingMaps = BTreeMap<String, Vec<String>>;

/// Convert every categorical column to 0-based numeric codes assigned by
/// first appearance. Missing cells stay missing.
pub fn encode_categoricals<S: Scalar>(t: &Table<S>) -> (Table<S>, EncodingMaps) {
    let mut maps = EncodingMaps::new();
    let mut columns = Vec::with_capacity(t.columns.len());
    for col in &t.columns {
        if col.kind == ColumnKind::Numeric {
            columns.push(col.clone());
            continue;
        }
        let mut order: Vec<String> = Vec::new();
        let cells = col
            .cells
            .iter()
            .map(|cell| {
                cell.as_ref().map(|c| {
                    let key = Column::value_key(c);
                    let code = match order.iter().position(|v| v == &key) {
                        Some(i) => i,
                        None => {
                            order.push(key);
                            order.len() - 1
                        }
                    };
                    Cell::Num(S::cast(code as f64))
                })
            })
            .collect();
        maps.insert(col.name.clone(), order);
        columns.push(Column {
            name: col.name.clone(),
            kind: ColumnKind::Numeric,
            cells,
        });
    }
    (
        Table {
            patient_ids: t.patient_ids.clone(),
            columns,
        },
        maps,
    )
}

/// Apply a fitted encoding to another table (typically the test rows).
/// Values unseen during fitting become missing.
pub fn apply_encoding<S: Scalar>(t: &Table<S>, maps: &EncodingMaps) -> Table<S> {
    let columns = t
        .columns
        .iter()
        .map(|col| match maps.get(&col.name) {
            None => col.clone(),
            Some(order) => Column {
                name: col.name.clone(),
                kind: ColumnKind::Numeric,
                cells: col
                    .cells
                    .iter()
                    .map(|cell| {
                        cell.as_ref().and_then(|c| {
                            let key = Column::value_key(c);
                            order
                                .iter()
                                .position(|v| v == &key)
                                .map(|code| Cell::Num(S::cast(code as f64)))
                        })
                    })
                    .collect(),
            },
        })
        .collect();
    Table {
        patient_ids: t.patient_ids.clone(),
        columns,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputeReport<S> {
    /// per-column mean used for replacement
    pub means: Vec<(String, S)>,
    /// columns that were entirely missing and became zeros
    pub all_missing: Vec<String>,
}

/// Column means over non-missing entries; an all-missing column gets mean 0
/// and is flagged. Errors if any column is still categorical.
pub fn fit_impute<S: Scalar>(t: &Table<S>) -> Result<ImputeReport<S>> {
    let mut means = Vec::with_capacity(t.columns.len());
    let mut all_missing = Vec::new();
    for col in &t.columns {
        let mut sum = S::zero();
        let mut n = 0usize;
        for cell in col.cells.iter().flatten() {
            match cell {
                Cell::Num(v) => {
                    sum += *v;
                    n += 1;
                }
                Cell::Text(_) => {
                    return Err(Error::Input(format!(
                        "column {} is categorical; encode before imputing",
                        col.name
                    )))
                }
            }
        }
        if n == 0 {
            all_missing.push(col.name.clone());
            means.push((col.name.clone(), S::zero()));
        } else {
            means.push((col.name.clone(), sum / S::cast(n as f64)));
        }
    }
    Ok(ImputeReport { means, all_missing })
}

/// Replace missing cells with the provided per-column means.
pub fn apply_impute<S: Scalar>(t: &Table<S>, report: &ImputeReport<S>) -> Result<Table<S>> {
    let mut columns = Vec::with_capacity(t.columns.len());
    for col in &t.columns {
        let &(_, mean) = report
            .means
            .iter()
            .find(|(name, _)| name == &col.name)
            .ok_or_else(|| Error::Input(format!("no fitted mean for column {}", col.name)))?;
        columns.push(Column {
            name: col.name.clone(),
            kind: ColumnKind::Numeric,
            cells: col
                .cells
                .iter()
                .map(|cell| match cell {
                    Some(c) => Some(c.clone()),
                    None => Some(Cell::Num(mean)),
                })
                .collect(),
        });
    }
    Ok(Table {
        patient_ids: t.patient_ids.clone(),
        columns,
    })
}

/// Mean-impute a table against its own column means.
pub fn impute_mean<S: Scalar>(t: &Table<S>) -> Result<(Table<S>, ImputeReport<S>)> {
    let report = fit_impute(t)?;
    let imputed = apply_impute(t, &report)?;
    Ok((imputed, report))
}

/// Raw T-stage labels as recorded in the cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RawTnmLabel {
    T0,
    T1,
    T2,
    T3,
    T4,
    TX,
    Null,
}

impl std::str::FromStr for RawTnmLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T0" => Ok(RawTnmLabel::T0),
            "T1" => Ok(RawTnmLabel::T1),
            "T2" => Ok(RawTnmLabel::T2),
            "T3" => Ok(RawTnmLabel::T3),
            "T4" => Ok(RawTnmLabel::T4),
            "TX" => Ok(RawTnmLabel::TX),
            "" | "Null" | "null" => Ok(RawTnmLabel::Null),
            other => Err(Error::Input(format!("unknown T-stage label {other:?}"))),
        }
    }
}

impl fmt::Display for RawTnmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RawTnmLabel::T0 => "T0",
            RawTnmLabel::T1 => "T1",
            RawTnmLabel::T2 => "T2",
            RawTnmLabel::T3 => "T3",
            RawTnmLabel::T4 => "T4",
            RawTnmLabel::TX => "TX",
            RawTnmLabel::Null => "Null",
        };
        f.write_str(s)
    }
}

/// Merged 3-class stage target: {TX,T0,T1} / {T2} / {T3,T4}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageClass {
    TxT0T1 = 0,
    T2 = 1,
    T3T4 = 2,
}

pub const N_CLASSES: usize = 3;

impl StageClass {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<StageClass> {
        match i {
            0 => Ok(StageClass::TxT0T1),
            1 => Ok(StageClass::T2),
            2 => Ok(StageClass::T3T4),
            other => Err(Error::Input(format!("stage class index {other} out of range"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StageClass::TxT0T1 => "TX_T0_T1",
            StageClass::T2 => "T2",
            StageClass::T3T4 => "T3_T4",
        }
    }
}

/// Merge raw labels into the 3-class target; Null maps to `None` (the
/// patient is excluded downstream).
pub fn merge_tnm_labels(raw: &[RawTnmLabel]) -> Vec<Option<StageClass>> {
    raw.iter()
        .map(|r| match r {
            RawTnmLabel::T0 | RawTnmLabel::T1 | RawTnmLabel::TX => Some(StageClass::TxT0T1),
            RawTnmLabel::T2 => Some(StageClass::T2),
            RawTnmLabel::T3 | RawTnmLabel::T4 => Some(StageClass::T3T4),
            RawTnmLabel::Null => None,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabVariable {
    pub name: String,
    pub definition: String,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub unit: String,
}

/// Reference schema of the 18 selected laboratory variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabSchema {
    pub variables: Vec<LabVariable>,
}

impl LabSchema {
    pub fn standard() -> LabSchema {
        let v = |name: &str, definition: &str, low: Option<f64>, high: Option<f64>, unit: &str| {
            LabVariable {
                name: name.into(),
                definition: definition.into(),
                low,
                high,
                unit: unit.into(),
            }
        };
        LabSchema {
            variables: vec![
                v("hemoglobin", "Protein in red blood cells that carries oxygen", Some(13.2), Some(16.7), "g/dL"),
                v("hematocrit", "Proportion of red blood cells in the blood", Some(33.4), Some(46.2), "%"),
                v("creatinine", "Waste product from muscle metabolism, kidney function marker", Some(0.7), Some(1.3), "mg/dL"),
                v("sodium", "Electrolyte for fluid balance and nerve function", Some(136.0), Some(145.0), "mmol/L"),
                v("alt", "Alanine aminotransferase, liver enzyme", Some(7.0), Some(40.0), "U/L"),
                v("ggt", "Gamma-glutamyl transferase, liver and bile duct enzyme", Some(0.0), Some(73.0), "U/L"),
                v("crp", "C-reactive protein, inflammation marker", Some(0.0), Some(5.0), "mg/dL"),
                v("total_bilirubin", "Hemoglobin breakdown product, liver function marker", Some(0.2), Some(1.0), "mg/dL"),
                v("alp", "Alkaline phosphatase, bile duct and bone enzyme", Some(40.0), Some(130.0), "U/L"),
                v("ast", "Aspartate aminotransferase, liver and muscle enzyme", Some(13.0), Some(40.0), "U/L"),
                v("inr", "International normalized ratio of clotting time", Some(0.9), Some(1.15), ""),
                v("albumin", "Main plasma protein", Some(35.0), Some(48.0), "g/L"),
                v("cholesterol", "Blood lipid", None, Some(200.0), "mg/dL"),
                v("triglycerides", "Blood lipid", None, Some(150.0), "mg/dL"),
                v("hba1c", "Average blood glucose over 2-3 months", Some(4.0), Some(5.6), "%"),
                v("afp", "Alpha-fetoprotein, elevated in liver disease and cancers", Some(0.0), Some(8.1), "ng/mL"),
                v("direct_bilirubin", "Conjugated bilirubin, hepatic excretion marker", Some(0.0), Some(0.3), "mg/dL"),
                v("ferritin", "Iron storage protein", Some(26.0), Some(388.0), "ng/mL"),
            ],
        }
    }
}

/// One augmented sample: a CT/MRI image pairing for a patient, before
/// feature blocks are attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStub {
    pub sample_id: String,
    pub patient_id: String,
    pub ct_id: Option<String>,
    pub mri_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientImages {
    pub patient_id: String,
    pub ct_ids: Vec<String>,
    pub mri_ids: Vec<String>,
}

/// Cartesian CT x MRI pairing per patient; a patient lacking one modality
/// contributes singleton pairs with that side absent. Patients with no
/// images at all contribute a single image-free sample.
pub fn augment_pairs(patients: &[PatientImages]) -> Vec<SampleStub> {
    let mut out = Vec::new();
    for p in patients {
        let cts: Vec<Option<&String>> = if p.ct_ids.is_empty() {
            vec![None]
        } else {
            p.ct_ids.iter().map(Some).collect()
        };
        let mris: Vec<Option<&String>> = if p.mri_ids.is_empty() {
            vec![None]
        } else {
            p.mri_ids.iter().map(Some).collect()
        };
        for ct in &cts {
            for mri in &mris {
                let ct_part = ct.map(String::as_str).unwrap_or("-");
                let mri_part = mri.map(String::as_str).unwrap_or("-");
                out.push(SampleStub {
                    sample_id: format!("{}:{}:{}", p.patient_id, ct_part, mri_part),
                    patient_id: p.patient_id.clone(),
                    ct_id: ct.cloned(),
                    mri_id: mri.cloned(),
                });
            }
        }
    }
    out
}

/// Fitted tabular preprocessing: filtering, encoding, and imputation
/// statistics, all derived from the training rows only.
#[derive(Debug, Clone)]
pub struct FittedTabular<S> {
    pub removals: Vec<FilterRemoval>,
    pub encoding: EncodingMaps,
    pub impute: ImputeReport<S>,
    pub feature_names: Vec<String>,
    /// patient ids whose rows the fit actually consumed
    pub fit_patient_ids: Vec<String>,
}

/// Fit filter + encoding + imputation on training rows.
pub fn fit_tabular<S: Scalar>(train: &Table<S>, policy: &FilterPolicy) -> Result<FittedTabular<S>> {
    train.validate()?;
    let (filtered, removals) = filter_columns(train, policy);
    let (encoded, encoding) = encode_categoricals(&filtered);
    let impute = fit_impute(&encoded)?;
    Ok(FittedTabular {
        removals,
        encoding,
        impute,
        feature_names: encoded.columns.iter().map(|c| c.name.clone()).collect(),
        fit_patient_ids: train.patient_ids.clone(),
    })
}

impl<S: Scalar> FittedTabular<S> {
    /// Apply the fitted preprocessing to any table (train or test rows).
    pub fn transform(&self, t: &Table<S>) -> Result<Matrix<S>> {
        let keep: Vec<Column<S>> = self
            .feature_names
            .iter()
            .map(|name| {
                t.column(name)
                    .cloned()
                    .ok_or_else(|| Error::Input(format!("column {name} missing at transform time")))
            })
            .collect::<Result<_>>()?;
        let selected = Table {
            patient_ids: t.patient_ids.clone(),
            columns: keep,
        };
        let encoded = apply_encoding(&selected, &self.encoding);
        let imputed = apply_impute(&encoded, &self.impute)?;
        imputed.to_matrix()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn write_csv(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn num_col(name: &str, values: &[Option<f64>]) -> Column<f64> {
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric,
            cells: values.iter().map(|v| v.map(Cell::Num)).collect(),
        }
    }

    fn cat_col(name: &str, values: &[Option<&str>]) -> Column<f64> {
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical,
            cells: values
                .iter()
                .map(|v| v.map(|s| Cell::Text(s.to_string())))
                .collect(),
        }
    }

    #[test]
    fn load_infers_kinds_and_missing() {
        let f = write_csv("patient_id,age,sex\np1,63,male\np2,,female\np3,71,male\n");
        let t: Table<f64> = load_table(f.path(), None).unwrap();
        assert_eq!(t.n_rows(), 3);
        let age = t.column("age").unwrap();
        assert_eq!(age.kind, ColumnKind::Numeric);
        assert_eq!(age.cells[1], None);
        assert_eq!(t.column("sex").unwrap().kind, ColumnKind::Categorical);
    }

    #[test]
    fn duplicate_header_is_schema_error() {
        let f = write_csv("patient_id,afp,afp\np1,1,2\n");
        assert!(matches!(
            load_table::<f64>(f.path(), None),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ragged_row_is_parse_error_with_row_index() {
        let f = write_csv("patient_id,a,b\np1,1,2\np2,3\n");
        match load_table::<f64>(f.path(), None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lab_schema_has_18_numeric_variables() {
        let schema = LabSchema::standard();
        assert_eq!(schema.variables.len(), 18);
        let header: Vec<String> = std::iter::once("patient_id".to_string())
            .chain(schema.variables.iter().map(|v| v.name.clone()))
            .collect();
        let mut content = header.join(",") + "\n";
        content += "p1";
        for i in 0..18 {
            content += &format!(",{}", i as f64 + 0.5);
        }
        content += "\n";
        let f = write_csv(&content);
        let t: Table<f64> = load_table(f.path(), Some(&schema)).unwrap();
        assert_eq!(t.columns.len(), 18);
        assert!(t.columns.iter().all(|c| c.kind == ColumnKind::Numeric));
    }

    #[test]
    fn schema_rejects_non_numeric_lab_column() {
        let f = write_csv("patient_id,afp\np1,high\n");
        let schema = LabSchema::standard();
        assert!(matches!(
            load_table::<f64>(f.path(), Some(&schema)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn filter_drops_by_rule_with_reasons() {
        let t = Table {
            patient_ids: (0..100).map(|i| format!("p{i}")).collect(),
            columns: vec![
                num_col("low_coverage", &{
                    let mut v = vec![Some(1.0); 79];
                    v.extend(vec![None; 21]);
                    v
                }),
                num_col("constant", &vec![Some(7.0); 100]),
                num_col("near_constant", &{
                    let mut v = vec![Some(1.0); 96];
                    v.extend((0..4).map(|i| Some(i as f64 + 2.0)));
                    v
                }),
                num_col("whitelisted", &{
                    let mut v = vec![Some(1.0); 96];
                    v.extend((0..4).map(|i| Some(i as f64 + 2.0)));
                    v
                }),
                num_col("by_name", &(0..100).map(|i| Some(i as f64)).collect::<Vec<_>>()),
                num_col("kept", &(0..100).map(|i| Some(i as f64)).collect::<Vec<_>>()),
            ],
        };
        let policy = FilterPolicy {
            exclude_names: vec!["by_name".into()],
            whitelist: vec!["whitelisted".into()],
            ..FilterPolicy::default()
        };
        let (out, removals) = filter_columns(&t, &policy);
        let names: Vec<&str> = out.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["whitelisted", "kept"]);
        let reason_of = |n: &str| {
            removals
                .iter()
                .find(|r| r.column == n)
                .map(|r| r.reason)
                .unwrap()
        };
        assert_eq!(reason_of("low_coverage"), FilterReason::Coverage);
        assert_eq!(reason_of("constant"), FilterReason::Constant);
        assert_eq!(reason_of("near_constant"), FilterReason::NearConstant);
        assert_eq!(reason_of("by_name"), FilterReason::Excluded);
        // exactly 80% coverage is kept
        let t80 = Table {
            patient_ids: (0..100).map(|i| format!("p{i}")).collect(),
            columns: vec![num_col("cov80", &{
                let mut v: Vec<Option<f64>> = (0..80).map(|i| Some(i as f64)).collect();
                v.extend(vec![None; 20]);
                v
            })],
        };
        let (out, removals) = filter_columns(&t80, &FilterPolicy::default());
        assert_eq!(out.columns.len(), 1);
        assert!(removals.is_empty());
    }

    #[test]
    fn filter_is_idempotent() {
        let t = Table {
            patient_ids: (0..50).map(|i| format!("p{i}")).collect(),
            columns: vec![
                num_col("a", &(0..50).map(|i| Some((i % 7) as f64)).collect::<Vec<_>>()),
                num_col("c", &vec![Some(1.0); 50]),
            ],
        };
        let (once, _) = filter_columns(&t, &FilterPolicy::default());
        let (twice, removals) = filter_columns(&once, &FilterPolicy::default());
        assert_eq!(once, twice);
        assert!(removals.is_empty());
    }

    #[test]
    fn encode_first_appearance_order() {
        let t = Table {
            patient_ids: vec!["p1".into(), "p2".into(), "p3".into()],
            columns: vec![cat_col("sex", &[Some("male"), Some("female"), Some("male")])],
        };
        let (out, maps) = encode_categoricals(&t);
        let cells = &out.columns[0].cells;
        assert_eq!(cells[0], Some(Cell::Num(0.0)));
        assert_eq!(cells[1], Some(Cell::Num(1.0)));
        assert_eq!(cells[2], Some(Cell::Num(0.0)));
        assert_eq!(maps["sex"], vec!["male".to_string(), "female".to_string()]);
    }

    #[test]
    fn encode_keeps_missing_and_numeric_identity() {
        let t = Table {
            patient_ids: (0..4).map(|i| format!("p{i}")).collect(),
            columns: vec![
                cat_col("g", &[Some("B"), Some("A"), Some("B"), None]),
                num_col("x", &[Some(1.0), Some(2.0), None, Some(4.0)]),
            ],
        };
        let (out, _) = encode_categoricals(&t);
        let g = &out.columns[0].cells;
        assert_eq!(g[0], Some(Cell::Num(0.0)));
        assert_eq!(g[1], Some(Cell::Num(1.0)));
        assert_eq!(g[2], Some(Cell::Num(0.0)));
        assert_eq!(g[3], None);
        assert_eq!(out.columns[1], t.columns[1]);
    }

    #[test]
    fn encoding_is_a_per_column_bijection() {
        let t = Table {
            patient_ids: (0..6).map(|i| format!("p{i}")).collect(),
            columns: vec![cat_col(
                "g",
                &[Some("c"), Some("a"), Some("b"), Some("a"), Some("c"), Some("b")],
            )],
        };
        let (out, maps) = encode_categoricals(&t);
        // distinct raw values <-> distinct codes
        let mut pairs = std::collections::HashMap::new();
        for (raw, enc) in t.columns[0].cells.iter().zip(&out.columns[0].cells) {
            let raw = match raw.as_ref().unwrap() {
                Cell::Text(s) => s.clone(),
                _ => unreachable!(),
            };
            let code = match enc.as_ref().unwrap() {
                Cell::Num(v) => *v,
                _ => unreachable!(),
            };
            assert_eq!(*pairs.entry(raw.clone()).or_insert(code), code);
            assert_eq!(maps["g"][code as usize], raw);
        }
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn impute_replaces_with_column_mean() {
        let t = Table {
            patient_ids: (0..3).map(|i| format!("p{i}")).collect(),
            columns: vec![num_col("x", &[Some(1.0), None, Some(3.0)])],
        };
        let (out, report) = impute_mean(&t).unwrap();
        assert_eq!(out.columns[0].cells[1], Some(Cell::Num(2.0)));
        assert_abs_diff_eq!(report.means[0].1, 2.0);
        assert!(report.all_missing.is_empty());
    }

    #[test]
    fn impute_no_missing_is_identity_and_preserves_mean() {
        let t = Table {
            patient_ids: (0..4).map(|i| format!("p{i}")).collect(),
            columns: vec![num_col("x", &[Some(1.0), Some(5.0), Some(2.0), Some(8.0)])],
        };
        let (out, _) = impute_mean(&t).unwrap();
        assert_eq!(out, t);
        // mean over originally-non-missing entries is preserved exactly after
        // imputing a table that does have holes
        let t2 = Table {
            patient_ids: (0..4).map(|i| format!("p{i}")).collect(),
            columns: vec![num_col("x", &[Some(1.0), None, Some(2.0), Some(8.0)])],
        };
        let (out2, _) = impute_mean(&t2).unwrap();
        let vals: Vec<f64> = out2.columns[0]
            .cells
            .iter()
            .map(|c| match c.as_ref().unwrap() {
                Cell::Num(v) => *v,
                _ => unreachable!(),
            })
            .collect();
        let original_mean = (1.0 + 2.0 + 8.0) / 3.0;
        assert_abs_diff_eq!(vals[1], original_mean);
        assert_abs_diff_eq!(
            vals.iter().sum::<f64>() / 4.0,
            original_mean,
            epsilon = 1e-12
        );
    }

    #[test]
    fn all_missing_column_becomes_zeros_with_flag() {
        let t = Table {
            patient_ids: vec!["p1".into(), "p2".into()],
            columns: vec![num_col("x", &[None, None])],
        };
        let (out, report) = impute_mean(&t).unwrap();
        assert_eq!(out.columns[0].cells, vec![Some(Cell::Num(0.0)); 2]);
        assert_eq!(report.all_missing, vec!["x".to_string()]);
    }

    #[test]
    fn merge_labels_matches_cohort_distribution() {
        // distribution {T0:1, T1:53, T2:22, T3:13, T4:5, TX:1, Null:5}
        let mut raw = Vec::new();
        raw.extend(std::iter::repeat(RawTnmLabel::T0).take(1));
        raw.extend(std::iter::repeat(RawTnmLabel::T1).take(53));
        raw.extend(std::iter::repeat(RawTnmLabel::T2).take(22));
        raw.extend(std::iter::repeat(RawTnmLabel::T3).take(13));
        raw.extend(std::iter::repeat(RawTnmLabel::T4).take(5));
        raw.extend(std::iter::repeat(RawTnmLabel::TX).take(1));
        raw.extend(std::iter::repeat(RawTnmLabel::Null).take(5));
        let merged = merge_tnm_labels(&raw);
        let mut counts = [0usize; 3];
        let mut labeled = 0usize;
        for m in merged.iter().flatten() {
            counts[m.index()] += 1;
            labeled += 1;
        }
        assert_eq!(counts, [55, 22, 18]);
        assert_eq!(labeled, 95);
        // class counts sum to the number of non-Null inputs
        assert_eq!(labeled, raw.len() - 5);
        assert_eq!(merge_tnm_labels(&[RawTnmLabel::T2]), vec![Some(StageClass::T2)]);
        assert_eq!(merge_tnm_labels(&[RawTnmLabel::Null]), vec![None]);
    }

    #[test]
    fn augment_counts() {
        let p = |id: &str, ct: usize, mri: usize| PatientImages {
            patient_id: id.into(),
            ct_ids: (0..ct).map(|i| format!("{id}_ct{i}")).collect(),
            mri_ids: (0..mri).map(|i| format!("{id}_mri{i}")).collect(),
        };
        assert_eq!(augment_pairs(&[p("a", 3, 2)]).len(), 6);
        let singles = augment_pairs(&[p("b", 0, 2)]);
        assert_eq!(singles.len(), 2);
        assert!(singles.iter().all(|s| s.ct_id.is_none() && s.mri_id.is_some()));
    }

    #[test]
    fn augment_count_matches_brute_force_over_random_cohort() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // a cohort shaped like ~179 MRI / ~127 CT over 95 patients
        let patients: Vec<PatientImages> = (0..95)
            .map(|i| PatientImages {
                patient_id: format!("p{i}"),
                ct_ids: (0..rng.gen_range(0..=3usize)).map(|j| format!("p{i}c{j}")).collect(),
                mri_ids: (0..rng.gen_range(1..=3usize)).map(|j| format!("p{i}m{j}")).collect(),
            })
            .collect();
        let expected: usize = patients
            .iter()
            .map(|p| p.ct_ids.len().max(1) * p.mri_ids.len().max(1))
            .sum();
        assert_eq!(augment_pairs(&patients).len(), expected);
    }

    #[test]
    fn fitted_pipeline_handles_unseen_category() {
        let train = Table {
            patient_ids: (1..=5).map(|i| format!("p{i}")).collect(),
            columns: vec![
                cat_col("g", &[Some("a"), Some("b"), Some("a"), Some("b"), Some("a")]),
                num_col("x", &[Some(1.0), Some(2.0), Some(3.0), None, Some(4.0)]),
            ],
        };
        let fitted = fit_tabular(&train, &FilterPolicy::default()).unwrap();
        assert_eq!(fitted.fit_patient_ids.len(), 5);
        let test = Table {
            patient_ids: vec!["q1".into()],
            columns: vec![
                cat_col("g", &[Some("zzz")]),
                num_col("x", &[None]),
            ],
        };
        let m = fitted.transform(&test).unwrap();
        // unseen category -> missing -> imputed with train mean of codes
        assert_abs_diff_eq!(m.get(0, 0), 0.4);
        assert_abs_diff_eq!(m.get(0, 1), 2.5);
    }
}
