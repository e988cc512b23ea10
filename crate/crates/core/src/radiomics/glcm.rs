//! Gray level co-occurrence matrix features.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volumes::DiscretizedRoi;

/// The 13 unique 3D offsets at Chebyshev distance 1 (one per direction pair).
pub const OFFSETS_13: [[i64; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// Symmetrized pair counts for one offset: `counts[(i-1)*ng + (j-1)]` is the
/// number of ordered ROI voxel pairs at `offset` or `-offset` with levels
/// (i, j). Row-sums count each voxel pair twice by construction.
pub fn glcm_counts(d: &DiscretizedRoi, offset: [i64; 3]) -> Vec<u64> {
    let ng = d.ng as usize;
    let mut counts = vec![0u64; ng * ng];
    for c in &d.coords {
        let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
        let i = d.level_at(x, y, z);
        let j = d.level_at(x + offset[0], y + offset[1], z + offset[2]);
        if j != 0 {
            counts[(i as usize - 1) * ng + (j as usize - 1)] += 1;
            counts[(j as usize - 1) * ng + (i as usize - 1)] += 1;
        }
    }
    counts
}

/// Normalized symmetric GLCM for one offset; `None` when the offset has no
/// in-ROI pairs.
pub fn glcm_matrix<S: Scalar>(d: &DiscretizedRoi, offset: [i64; 3]) -> Option<Vec<S>> {
    let counts = glcm_counts(d, offset);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let t = S::cast(total as f64);
    Some(counts.iter().map(|&c| S::cast(c as f64) / t).collect())
}

fn features_of_matrix<S: Scalar>(p: &[S], ng: usize) -> [S; 10] {
    let mut energy = S::zero();
    let mut contrast = S::zero();
    let mut entropy = S::zero();
    let mut homogeneity = S::zero();
    let mut dissimilarity = S::zero();
    let mut sum_average = S::zero();
    let mut max_prob = S::zero();
    // symmetric matrix: both marginals coincide
    let mut mu = S::zero();
    for i in 0..ng {
        for j in 0..ng {
            let pij = p[i * ng + j];
            mu = mu + S::cast((i + 1) as f64) * pij;
        }
    }
    let mut var = S::zero();
    let mut corr_acc = S::zero();
    let mut shade = S::zero();
    let mut prominence = S::zero();
    for i in 0..ng {
        for j in 0..ng {
            let pij = p[i * ng + j];
            if pij > max_prob {
                max_prob = pij;
            }
            if pij <= S::zero() {
                continue;
            }
            let fi = S::cast((i + 1) as f64);
            let fj = S::cast((j + 1) as f64);
            let diff = (fi - fj).abs();
            energy = energy + pij * pij;
            contrast = contrast + diff * diff * pij;
            entropy = entropy - pij * pij.log2();
            homogeneity = homogeneity + pij / (S::one() + diff);
            dissimilarity = dissimilarity + diff * pij;
            sum_average = sum_average + (fi + fj) * pij;
            var = var + (fi - mu) * (fi - mu) * pij;
            corr_acc = corr_acc + fi * fj * pij;
            let s = fi + fj - mu - mu;
            shade = shade + s * s * s * pij;
            prominence = prominence + s * s * s * s * pij;
        }
    }
    let correlation = if var > S::zero() {
        (corr_acc - mu * mu) / var
    } else {
        S::zero()
    };
    [
        energy,
        contrast,
        correlation,
        entropy,
        homogeneity,
        dissimilarity,
        shade,
        prominence,
        sum_average,
        max_prob,
    ]
}

/// The 10 GLCM features, averaged over the offsets that have at least one
/// in-ROI pair. A ROI where no offset produces a pair (a single isolated
/// voxel) is a feature-undefined error.
pub fn glcm_features<S: Scalar>(d: &DiscretizedRoi, sample: &str) -> Result<[S; 10]> {
    let ng = d.ng as usize;
    let mut acc = [S::zero(); 10];
    let mut n_valid = 0usize;
    for offset in OFFSETS_13 {
        if let Some(p) = glcm_matrix::<S>(d, offset) {
            let f = features_of_matrix(&p, ng);
            for (a, v) in acc.iter_mut().zip(f) {
                *a = *a + v;
            }
            n_valid += 1;
        }
    }
    if n_valid == 0 {
        return Err(Error::FeatureUndefined {
            sample: sample.to_string(),
            msg: "no co-occurring voxel pairs in any offset".into(),
        });
    }
    let nf = S::cast(n_valid as f64);
    for a in acc.iter_mut() {
        *a = *a / nf;
    }
    Ok(acc)
}
