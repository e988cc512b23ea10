//! Neighboring gray tone difference matrix features.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volumes::{neighbors26, DiscretizedRoi};

const EPS: f64 = 1e-12;
const COARSENESS_CAP: f64 = 1e6;

/// Per-level table `(n_i, s_i)`: `n_i` counts ROI voxels of level `i+1`,
/// `s_i` sums |level - mean level of the in-ROI 26-neighbors|. Voxels with
/// no in-ROI neighbor are excluded from both.
pub fn ngtdm_table(d: &DiscretizedRoi) -> (Vec<u64>, Vec<f64>) {
    let ng = d.ng as usize;
    let mut n = vec![0u64; ng];
    let mut s = vec![0.0f64; ng];
    let offsets = neighbors26();
    for c in &d.coords {
        let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
        let level = d.level_at(x, y, z);
        let mut sum = 0u64;
        let mut cnt = 0u64;
        for o in &offsets {
            let q = d.level_at(x + o[0], y + o[1], z + o[2]);
            if q != 0 {
                sum += q as u64;
                cnt += 1;
            }
        }
        if cnt == 0 {
            continue;
        }
        let mean = sum as f64 / cnt as f64;
        n[level as usize - 1] += 1;
        s[level as usize - 1] += (level as f64 - mean).abs();
    }
    (n, s)
}

/// The 5 NGTDM features in manifest order: coarseness, contrast, busyness,
/// complexity, strength. Divisions are guarded at 1e-12; coarseness is
/// capped at 1e6 when its denominator vanishes.
pub fn ngtdm_features<S: Scalar>(d: &DiscretizedRoi) -> Result<[S; 5]> {
    if d.coords.is_empty() {
        return Err(Error::NoLesion("empty ROI in ngtdm".into()));
    }
    let (n, s) = ngtdm_table(d);
    let ng = d.ng as usize;
    let nvc: u64 = n.iter().sum();
    if nvc == 0 {
        // every ROI voxel is isolated
        return Err(Error::FeatureUndefined {
            sample: String::new(),
            msg: "no ROI voxel has an in-ROI neighbor".into(),
        });
    }
    let nvc_f = nvc as f64;
    let p: Vec<f64> = n.iter().map(|&c| c as f64 / nvc_f).collect();
    let ngp = p.iter().filter(|&&x| x > 0.0).count();
    let s_total: f64 = s.iter().sum();

    let psi_sum: f64 = (0..ng).map(|i| p[i] * s[i]).sum();
    let coarseness = if psi_sum > EPS {
        (1.0 / psi_sum).min(COARSENESS_CAP)
    } else {
        COARSENESS_CAP
    };

    let mut contrast = 0.0;
    if ngp > 1 {
        let mut pair = 0.0;
        for i in 0..ng {
            for j in 0..ng {
                let di = (i as f64) - (j as f64);
                pair += p[i] * p[j] * di * di;
            }
        }
        contrast = pair / (ngp as f64 * (ngp as f64 - 1.0)) * (s_total / nvc_f);
    }

    let mut busy_den = 0.0;
    let mut complexity = 0.0;
    let mut strength_num = 0.0;
    for i in 0..ng {
        if p[i] <= 0.0 {
            continue;
        }
        let fi = (i + 1) as f64;
        for j in 0..ng {
            if p[j] <= 0.0 {
                continue;
            }
            let fj = (j + 1) as f64;
            busy_den += (fi * p[i] - fj * p[j]).abs();
            complexity += (fi - fj).abs() * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]);
            strength_num += (p[i] + p[j]) * (fi - fj) * (fi - fj);
        }
    }
    let busyness = if busy_den > EPS { psi_sum / busy_den } else { 0.0 };
    complexity /= nvc_f;
    let strength = if s_total > EPS {
        strength_num / s_total
    } else {
        0.0
    };

    Ok([
        S::cast(coarseness),
        S::cast(contrast),
        S::cast(busyness),
        S::cast(complexity),
        S::cast(strength),
    ])
}
