//! Seeded synthetic multimodal cohort: rasterized ellipsoid lesions whose
//! size grows with stage class, class-dependent Gaussian tabular signal
//! columns, noise/near-constant/low-coverage bait columns, and a manifest
//! recording the ground truth.
//!
//! The lesion radius is a patient-level latent (per-image rasterizations
//! jitter around it), so size/shape radiomics carry real class signal while
//! intensity texture does not.

use std::fs;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tabular::LabSchema;
use crate::volumes::{linear_index, save_mask, save_volume, Mask, Volume3D};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub class_priors: [f64; 3],
    /// index = image count per patient; probabilities
    pub ct_count_probs: Vec<f64>,
    pub mri_count_probs: Vec<f64>,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// patient-level lesion radius mean per class (voxels)
    pub lesion_radius_means: [f64; 3],
    pub lesion_radius_std: f64,
    pub redcap_signal_cols: usize,
    pub redcap_noise_cols: usize,
    pub lab_signal_cols: usize,
    /// class-conditional mean shift of each signal column (per class step,
    /// in units of the column's noise std)
    pub signal_delta: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_patients: 95,
            class_priors: [55.0 / 95.0, 22.0 / 95.0, 18.0 / 95.0],
            ct_count_probs: vec![0.0, 0.7, 0.3],
            mri_count_probs: vec![0.0, 0.35, 0.5, 0.15],
            dims: [22, 22, 22],
            spacing: [1.0, 1.0, 1.0],
            lesion_radius_means: [3.1, 4.1, 5.1],
            lesion_radius_std: 0.42,
            redcap_signal_cols: 2,
            redcap_noise_cols: 3,
            lab_signal_cols: 1,
            signal_delta: 1.355,
            missing_rate: 0.05,
            seed: 7,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.class_priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_priors.iter().any(|&p| p < 0.0) {
            return Err(Error::Config(format!(
                "class priors must be non-negative and sum to 1, got {:?}",
                self.class_priors
            )));
        }
        if self.n_patients < 1 {
            return Err(Error::Config("n_patients must be positive".into()));
        }
        for probs in [&self.ct_count_probs, &self.mri_count_probs] {
            let s: f64 = probs.iter().sum();
            if probs.is_empty() || (s - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
                return Err(Error::Config("image count probabilities must sum to 1".into()));
            }
        }
        if self.lesion_radius_std <= 0.0 || self.lesion_radius_means.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("lesion radii must be positive".into()));
        }
        if self.dims.iter().any(|&d| d < 8) {
            return Err(Error::Config("volume dims must be at least 8".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must be in [0,1)".into()));
        }
        if self.lab_signal_cols > LabSchema::standard().variables.len() {
            return Err(Error::Config("more lab signal columns than lab variables".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub class: usize,
    pub raw_label: String,
    pub radius: f64,
    pub ct_ids: Vec<String>,
    pub mri_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortManifest {
    pub spec: CohortSpec,
    pub patients: Vec<PatientTruth>,
    pub files: Vec<String>,
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn raw_label_for_class(rng: &mut ChaCha8Rng, class: usize) -> String {
    // raw T-stage distribution within each merged class mirrors the
    // cohort's label table
    match class {
        0 => {
            let u: f64 = rng.gen_range(0.0..1.0);
            if u < 1.0 / 55.0 {
                "T0"
            } else if u < 2.0 / 55.0 {
                "TX"
            } else {
                "T1"
            }
        }
        1 => "T2",
        _ => {
            if rng.gen_range(0.0..1.0) < 13.0 / 18.0 {
                "T3"
            } else {
                "T4"
            }
        }
    }
    .to_string()
}

fn rasterize_lesion(
    rng: &mut ChaCha8Rng,
    dims: [usize; 3],
    spacing: [f64; 3],
    radius: f64,
) -> (Volume3D<f64>, Mask) {
    let n = dims[0] * dims[1] * dims[2];
    // per-image wobble around the patient-level radius
    let axes: Vec<f64> = (0..3)
        .map(|_| radius * rng.gen_range(0.93..1.07))
        .collect();
    let center: Vec<f64> = dims
        .iter()
        .zip(&axes)
        .map(|(&d, &a)| {
            let margin = a + 1.5;
            let mid = d as f64 / 2.0;
            let slack = (mid - margin).max(0.0).min(1.5);
            mid + rng.gen_range(-slack..=slack)
        })
        .collect();
    let mut voxels = vec![0.0f64; n];
    let mut mask = vec![0u8; n];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = linear_index(dims, x, y, z);
                let noise: f64 = rng.sample(StandardNormal);
                let d = [x, y, z]
                    .iter()
                    .zip(&center)
                    .zip(&axes)
                    .map(|((&c, &m), &a)| {
                        let t = (c as f64 - m) / a;
                        t * t
                    })
                    .sum::<f64>();
                if d <= 1.0 {
                    mask[i] = 1;
                    voxels[i] = 70.0 + 8.0 * noise; // texture independent of class
                } else {
                    voxels[i] = 50.0 + 5.0 * noise;
                }
            }
        }
    }
    // guarantee a non-empty mask even for tiny radii
    if mask.iter().all(|&m| m == 0) {
        let c = linear_index(
            dims,
            center[0].round() as usize,
            center[1].round() as usize,
            center[2].round() as usize,
        );
        mask[c] = 1;
    }
    (
        Volume3D {
            dims,
            spacing,
            voxels,
        },
        Mask {
            dims,
            spacing,
            voxels: mask,
        },
    )
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Generate the cohort under `out_dir`. Deterministic per spec+seed; the
/// returned manifest (also written as `manifest.json`) lists every file and
/// the per-patient ground truth.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<CohortManifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir.join("volumes"))?;
    fs::create_dir_all(out_dir.join("masks"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schema = LabSchema::standard();
    let mut patients = Vec::with_capacity(spec.n_patients);
    let mut files: Vec<String> = Vec::new();
    let mut images_rows =
        vec!["image_id,patient_id,modality,volume_header,volume_raw,mask_header,mask_raw"
            .to_string()];
    let mut labels_rows = vec!["patient_id,t_stage".to_string()];
    let mut redcap_rows = Vec::new();
    let mut lab_rows = Vec::new();

    for pi in 0..spec.n_patients {
        let patient_id = format!("qh{pi:04}");
        let class = draw_index(&mut rng, &spec.class_priors);
        let raw_label = raw_label_for_class(&mut rng, class);
        let z: f64 = rng.sample(StandardNormal);
        let radius = (spec.lesion_radius_means[class] + spec.lesion_radius_std * z).max(1.0);

        let write_images = |rng: &mut ChaCha8Rng,
                                modality: &str,
                                count: usize,
                                files: &mut Vec<String>,
                                images_rows: &mut Vec<String>|
         -> Result<Vec<String>> {
            let mut ids = Vec::with_capacity(count);
            for k in 0..count {
                let image_id = format!("{patient_id}_{modality}{k}");
                let (vol, mask) = rasterize_lesion(rng, spec.dims, spec.spacing, radius);
                let vol_h = format!("volumes/{image_id}.json");
                let vol_r = format!("volumes/{image_id}.raw");
                let mask_h = format!("masks/{image_id}_mask.json");
                let mask_r = format!("masks/{image_id}_mask.raw");
                save_volume(&vol, &out_dir.join(&vol_h), &out_dir.join(&vol_r))?;
                save_mask(&mask, &out_dir.join(&mask_h), &out_dir.join(&mask_r))?;
                images_rows.push(format!(
                    "{image_id},{patient_id},{modality},{vol_h},{vol_r},{mask_h},{mask_r}"
                ));
                files.extend([vol_h, vol_r, mask_h, mask_r]);
                ids.push(image_id);
            }
            Ok(ids)
        };
        let ct_n = draw_index(&mut rng, &spec.ct_count_probs);
        let mri_n = draw_index(&mut rng, &spec.mri_count_probs);
        let ct_ids = write_images(&mut rng, "ct", ct_n, &mut files, &mut images_rows)?;
        let mri_ids = write_images(&mut rng, "mri", mri_n, &mut files, &mut images_rows)?;

        labels_rows.push(format!("{patient_id},{raw_label}"));

        // redcap row: age/sex/etiology demographics, signal markers, noise
        // covariates, and three filter-bait columns
        let mut red = vec![patient_id.clone()];
        red.push(format!("{:.1}", 60.0 + 10.0 * rng.sample::<f64, _>(StandardNormal)));
        red.push(if rng.gen_bool(0.72) { "male" } else { "female" }.to_string());
        red.push(["hbv", "hcv", "alcohol"][draw_index(&mut rng, &[0.5, 0.3, 0.2])].to_string());
        for _ in 0..spec.redcap_signal_cols {
            let v = spec.signal_delta * class as f64 + rng.sample::<f64, _>(StandardNormal);
            let miss = rng.gen_range(0.0..1.0) < spec.missing_rate;
            red.push(csv_cell((!miss).then_some(v)));
        }
        for _ in 0..spec.redcap_noise_cols {
            let v: f64 = rng.sample(StandardNormal);
            let miss = rng.gen_range(0.0..1.0) < spec.missing_rate;
            red.push(csv_cell((!miss).then_some(v)));
        }
        red.push("QH".to_string()); // constant site
        red.push(if rng.gen_bool(0.03) { "1" } else { "0" }.to_string()); // near-constant
        red.push(if rng.gen_bool(0.5) {
            format!("note{}", rng.gen_range(0..4))
        } else {
            String::new() // ~50% coverage -> dropped by the filter
        });
        redcap_rows.push(red.join(","));

        // lab row: first lab_signal_cols variables carry the class signal,
        // scaled into each variable's plausible range
        let mut lab = vec![patient_id.clone()];
        for (vi, var) in schema.variables.iter().enumerate() {
            let lo = var.low.unwrap_or(0.0);
            let hi = var.high.unwrap_or(lo + 100.0);
            let mid = (lo + hi) / 2.0;
            let width = (hi - lo).max(1e-6);
            let z: f64 = rng.sample(StandardNormal);
            let standardized = if vi < spec.lab_signal_cols {
                spec.signal_delta * class as f64 + z
            } else {
                z
            };
            let v = mid + 0.15 * width * standardized;
            let miss = rng.gen_range(0.0..1.0) < spec.missing_rate;
            lab.push(csv_cell((!miss).then_some(v)));
        }
        lab_rows.push(lab.join(","));

        patients.push(PatientTruth {
            patient_id,
            class,
            raw_label,
            radius,
            ct_ids,
            mri_ids,
        });
    }

    let mut redcap_header = vec!["patient_id", "age", "sex", "etiology"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    redcap_header.extend((0..spec.redcap_signal_cols).map(|i| format!("marker_{i}")));
    redcap_header.extend((0..spec.redcap_noise_cols).map(|i| format!("covar_{i}")));
    redcap_header.extend(["site", "rare_flag", "note"].map(String::from));
    let mut lab_header = vec!["patient_id".to_string()];
    lab_header.extend(schema.variables.iter().map(|v| v.name.clone()));

    let write_text = |rel: &str, lines: &[String], files: &mut Vec<String>| -> Result<PathBuf> {
        let path = out_dir.join(rel);
        fs::write(&path, lines.join("\n") + "\n")?;
        files.push(rel.to_string());
        Ok(path)
    };
    let mut redcap_all = vec![redcap_header.join(",")];
    redcap_all.extend(redcap_rows);
    write_text("redcap.csv", &redcap_all, &mut files)?;
    let mut lab_all = vec![lab_header.join(",")];
    lab_all.extend(lab_rows);
    write_text("lab.csv", &lab_all, &mut files)?;
    write_text("labels.csv", &labels_rows, &mut files)?;
    write_text("images.csv", &images_rows, &mut files)?;

    files.sort();
    let manifest = CohortManifest {
        spec: spec.clone(),
        patients,
        files,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Monte-Carlo estimate of the generator's Bayes-optimal accuracy using the
/// closed-form class posterior of the Gaussian signal model (patient-level
/// radius + all tabular signal columns).
pub fn bayes_accuracy<S: Scalar>(spec: &CohortSpec, n_draws: usize, seed: u64) -> Result<S> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_signal = spec.redcap_signal_cols + spec.lab_signal_cols;
    let mut correct = 0usize;
    for _ in 0..n_draws {
        let class = draw_index(&mut rng, &spec.class_priors);
        let radius =
            spec.lesion_radius_means[class] + spec.lesion_radius_std * rng.sample::<f64, _>(StandardNormal);
        let signals: Vec<f64> = (0..n_signal)
            .map(|_| spec.signal_delta * class as f64 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        // log posterior per class: log prior + Gaussian log likelihoods
        let mut best = (0usize, f64::NEG_INFINITY);
        for c in 0..3 {
            if spec.class_priors[c] <= 0.0 {
                continue;
            }
            let mut lp = spec.class_priors[c].ln();
            let dr = (radius - spec.lesion_radius_means[c]) / spec.lesion_radius_std;
            lp -= 0.5 * dr * dr;
            for &s in &signals {
                let ds = s - spec.signal_delta * c as f64;
                lp -= 0.5 * ds * ds;
            }
            if lp > best.1 {
                best = (c, lp);
            }
        }
        if best.0 == class {
            correct += 1;
        }
    }
    Ok(S::cast(correct as f64 / n_draws as f64))
}
