//! Radiomics feature extraction: seven feature classes over a masked 3D
//! volume, produced in the fixed order given by [`FeatureManifest`].

pub mod firstorder;
pub mod gldm;
pub mod glcm;
pub mod glrlm;
pub mod glszm;
pub mod manifest;
pub mod ngtdm;
pub mod shape;

pub use firstorder::first_order;
pub use gldm::{gldm_counts, gldm_features};
pub use glcm::{glcm_counts, glcm_features, glcm_matrix, OFFSETS_13};
pub use glrlm::{glrlm_counts, glrlm_features};
pub use glszm::{glszm_features, glszm_zones};
pub use manifest::{FeatureClass, FeatureManifest};
pub use ngtdm::{ngtdm_features, ngtdm_table};
pub use shape::shape3d;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volumes::{discretize, largest_lesion, roi_intensities, Mask, Volume3D};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiomicsParams {
    /// gray-level count for discretization and histogram features
    pub ng: u32,
    /// level-difference tolerance of the dependence matrix
    pub gldm_alpha: u32,
}

impl Default for RadiomicsParams {
    fn default() -> Self {
        RadiomicsParams {
            ng: 32,
            gldm_alpha: 0,
        }
    }
}

/// Fixed-order named feature values; length and order follow
/// [`FeatureManifest::standard`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> FeatureVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        let manifest = FeatureManifest::standard();
        if values.len() != manifest.len() {
            return Err(Error::Input(format!(
                "feature vector length {} != manifest length {}",
                values.len(),
                manifest.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite feature {}",
                manifest.names().nth(i).unwrap()
            )));
        }
        Ok(FeatureVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Full extraction for one image: largest lesion, discretization, then all
/// seven feature classes in manifest order (61 values).
pub fn extract_feature_vector<S: Scalar>(
    volume: &Volume3D<S>,
    mask: &Mask,
    params: &RadiomicsParams,
    sample_id: &str,
) -> Result<FeatureVector<S>> {
    if volume.dims != mask.dims {
        return Err(Error::Input(format!(
            "sample {sample_id}: volume dims {:?} != mask dims {:?}",
            volume.dims, mask.dims
        )));
    }
    let tag_sample = |e: Error| match e {
        Error::NoLesion(msg) => Error::NoLesion(format!("{sample_id}: {msg}")),
        Error::FeatureUndefined { msg, .. } => Error::FeatureUndefined {
            sample: sample_id.to_string(),
            msg,
        },
        other => other,
    };
    let lesion = largest_lesion(mask).map_err(tag_sample)?;
    let intensities = roi_intensities(volume, &lesion)?;
    let d = discretize(volume, &lesion, params.ng)?;

    let mut values = Vec::with_capacity(61);
    values.extend(first_order(&intensities, params.ng)?);
    values.extend(shape3d::<S>(&lesion, volume.spacing)?);
    values.extend(glcm_features::<S>(&d, sample_id)?);
    values.extend(glrlm_features::<S>(&d)?);
    values.extend(glszm_features::<S>(&d)?);
    values.extend(gldm_features::<S>(&d, params.gldm_alpha)?);
    values.extend(ngtdm_features::<S>(&d).map_err(tag_sample)?);
    FeatureVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volumes::linear_index;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_case(seed: u64, dims: [usize; 3]) -> (Volume3D<f64>, Mask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims[0] * dims[1] * dims[2];
        let voxels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let mut mask = vec![0u8; n];
        // a solid blob plus scattered noise voxels
        for z in 2..dims[2] - 2 {
            for y in 2..dims[1] - 2 {
                for x in 2..dims[0] - 2 {
                    mask[linear_index(dims, x, y, z)] = 1;
                }
            }
        }
        for m in mask.iter_mut() {
            if rng.gen_bool(0.02) {
                *m = 1;
            }
        }
        (
            Volume3D {
                dims,
                spacing: [1.0, 1.2, 0.8],
                voxels,
            },
            Mask {
                dims,
                spacing: [1.0, 1.2, 0.8],
                voxels: mask,
            },
        )
    }

    #[test]
    fn vector_has_61_finite_values_and_is_deterministic() {
        let (v, m) = random_case(1, [10, 9, 8]);
        let params = RadiomicsParams::default();
        let f1 = extract_feature_vector(&v, &m, &params, "s").unwrap();
        let f2 = extract_feature_vector(&v, &m, &params, "s").unwrap();
        assert_eq!(f1.len(), 61);
        assert!(f1.values.iter().all(|x| x.is_finite()));
        assert_eq!(f1, f2, "extraction must be bitwise deterministic");
    }

    #[test]
    fn translation_invariance_of_texture_features() {
        let dims = [12, 12, 12];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // small blob at origin corner
        let blob: Vec<([usize; 3], f64)> = (0..5)
            .flat_map(|z| (0..4).flat_map(move |y| (0..4).map(move |x| [x, y, z])))
            .map(|c| (c, rng.gen_range(0.0..50.0)))
            .collect();
        let build = |shift: usize| {
            let n = dims[0] * dims[1] * dims[2];
            let mut voxels = vec![0.0f64; n];
            let mut mask = vec![0u8; n];
            for (c, val) in &blob {
                let i = linear_index(dims, c[0] + shift, c[1] + shift, c[2] + shift);
                voxels[i] = *val;
                mask[i] = 1;
            }
            (
                Volume3D {
                    dims,
                    spacing: [1.0; 3],
                    voxels,
                },
                Mask {
                    dims,
                    spacing: [1.0; 3],
                    voxels: mask,
                },
            )
        };
        let (v0, m0) = build(0);
        let (v3, m3) = build(3);
        let params = RadiomicsParams::default();
        let f0 = extract_feature_vector(&v0, &m0, &params, "a").unwrap();
        let f3 = extract_feature_vector(&v3, &m3, &params, "b").unwrap();
        // shape axis lengths and texture features are all translation
        // invariant; diameters/volumes too
        for (i, (a, b)) in f0.values.iter().zip(f3.values.iter()).enumerate() {
            assert!(
                (a - b).abs() < 1e-9,
                "feature {} differs under translation: {a} vs {b}",
                FeatureManifest::standard().names().nth(i).unwrap()
            );
        }
    }

    #[test]
    fn dim_mismatch_is_input_error() {
        let (v, _) = random_case(2, [6, 6, 6]);
        let (_, m) = random_case(2, [5, 6, 6]);
        assert!(matches!(
            extract_feature_vector(&v, &m, &RadiomicsParams::default(), "x"),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn multi_component_mask_uses_largest_lesion() {
        // two blobs; features must equal extraction on the larger blob alone
        let dims = [14, 8, 8];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = dims[0] * dims[1] * dims[2];
        let voxels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let mut both = vec![0u8; n];
        let mut large_only = vec![0u8; n];
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..5 {
                    both[linear_index(dims, x, y, z)] = 1;
                    large_only[linear_index(dims, x, y, z)] = 1;
                }
            }
        }
        for z in 5..7 {
            for y in 5..7 {
                both[linear_index(dims, 11, y, z)] = 1;
            }
        }
        let mk = |voxels| Mask {
            dims,
            spacing: [1.0; 3],
            voxels,
        };
        let v = Volume3D {
            dims,
            spacing: [1.0; 3],
            voxels,
        };
        let params = RadiomicsParams::default();
        let f_both = extract_feature_vector(&v, &mk(both), &params, "s").unwrap();
        let f_large = extract_feature_vector(&v, &mk(large_only), &params, "s").unwrap();
        assert_eq!(f_both, f_large);
    }
}
