use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureClass {
    FirstOrder,
    Shape,
    Glcm,
    Glrlm,
    Glszm,
    Gldm,
    Ngtdm,
}

/// Fixed-order list of (class, name) pairs: the single source of truth for
/// feature identity. 16 + 10 + 10 + 7 + 7 + 6 + 5 = 61 entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    entries: Vec<(FeatureClass, String)>,
}

pub const FIRST_ORDER_NAMES: [&str; 16] = [
    "energy",
    "entropy",
    "minimum",
    "maximum",
    "mean",
    "median",
    "range",
    "variance",
    "skewness",
    "kurtosis",
    "rms",
    "uniformity",
    "p10",
    "p90",
    "iqr",
    "mad",
];

pub const SHAPE_NAMES: [&str; 10] = [
    "volume",
    "surface_area",
    "surface_volume_ratio",
    "sphericity",
    "max_diameter_3d",
    "major_axis_length",
    "minor_axis_length",
    "least_axis_length",
    "elongation",
    "flatness",
];

pub const GLCM_NAMES: [&str; 10] = [
    "energy",
    "contrast",
    "correlation",
    "joint_entropy",
    "homogeneity",
    "dissimilarity",
    "cluster_shade",
    "cluster_prominence",
    "sum_average",
    "max_probability",
];

pub const GLRLM_NAMES: [&str; 7] = ["sre", "lre", "gln", "rln", "rp", "lglre", "hglre"];

pub const GLSZM_NAMES: [&str; 7] = ["sae", "lae", "gln", "szn", "zp", "lglze", "hglze"];

pub const GLDM_NAMES: [&str; 6] = ["sde", "lde", "gln", "dn", "lgle", "hgle"];

pub const NGTDM_NAMES: [&str; 5] = ["coarseness", "contrast", "busyness", "complexity", "strength"];

impl FeatureManifest {
    /// The standard 61-feature manifest, stable across runs.
    pub fn standard() -> &'static FeatureManifest {
        static MANIFEST: OnceLock<FeatureManifest> = OnceLock::new();
        MANIFEST.get_or_init(|| {
            let mut entries = Vec::with_capacity(61);
            let groups: [(FeatureClass, &str, &[&str]); 7] = [
                (FeatureClass::FirstOrder, "firstorder", &FIRST_ORDER_NAMES),
                (FeatureClass::Shape, "shape", &SHAPE_NAMES),
                (FeatureClass::Glcm, "glcm", &GLCM_NAMES),
                (FeatureClass::Glrlm, "glrlm", &GLRLM_NAMES),
                (FeatureClass::Glszm, "glszm", &GLSZM_NAMES),
                (FeatureClass::Gldm, "gldm", &GLDM_NAMES),
                (FeatureClass::Ngtdm, "ngtdm", &NGTDM_NAMES),
            ];
            for (class, prefix, names) in groups {
                for name in names {
                    entries.push((class, format!("{prefix}_{name}")));
                }
            }
            FeatureManifest { entries }
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(_, n)| n.as_str())
    }

    pub fn entries(&self) -> &[(FeatureClass, String)] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn manifest_has_61_unique_names_in_stable_order() {
        let m = FeatureManifest::standard();
        assert_eq!(m.len(), 61);
        let names: Vec<&str> = m.names().collect();
        let unique: HashSet<&str> = names.iter().copied().collect();
        assert_eq!(unique.len(), 61);
        assert_eq!(names[0], "firstorder_energy");
        assert_eq!(names[16], "shape_volume");
        assert_eq!(names[60], "ngtdm_strength");
        // class block sizes 16/10/10/7/7/6/5
        let counts = [16, 10, 10, 7, 7, 6, 5];
        let mut offset = 0;
        for (i, class) in [
            FeatureClass::FirstOrder,
            FeatureClass::Shape,
            FeatureClass::Glcm,
            FeatureClass::Glrlm,
            FeatureClass::Glszm,
            FeatureClass::Gldm,
            FeatureClass::Ngtdm,
        ]
        .iter()
        .enumerate()
        {
            for j in 0..counts[i] {
                assert_eq!(m.entries()[offset + j].0, *class);
            }
            offset += counts[i];
        }
    }
}
