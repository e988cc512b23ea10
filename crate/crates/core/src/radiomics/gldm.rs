//! Gray level dependence matrix features.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volumes::{neighbors26, DiscretizedRoi};

/// Dependence counts: `counts[(i-1)*27 + k]` is the number of ROI voxels of
/// level `i` whose 26-neighborhood contains exactly `k` in-ROI voxels with
/// absolute level difference <= `alpha`. Every ROI voxel is counted once.
pub fn gldm_counts(d: &DiscretizedRoi, alpha: u32) -> Vec<u64> {
    let ng = d.ng as usize;
    let mut counts = vec![0u64; ng * 27];
    let offsets = neighbors26();
    for c in &d.coords {
        let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
        let level = d.level_at(x, y, z);
        let mut dep = 0usize;
        for o in &offsets {
            let q = d.level_at(x + o[0], y + o[1], z + o[2]);
            if q != 0 && q.abs_diff(level) <= alpha {
                dep += 1;
            }
        }
        counts[(level as usize - 1) * 27 + dep] += 1;
    }
    counts
}

/// The 6 GLDM features in manifest order: SDE, LDE, GLN, DN, LGLE, HGLE.
/// The dependence axis is indexed as `k + 1` in the size-weighted formulas.
pub fn gldm_features<S: Scalar>(d: &DiscretizedRoi, alpha: u32) -> Result<[S; 6]> {
    if d.coords.is_empty() {
        return Err(Error::NoLesion("empty ROI in gldm".into()));
    }
    let counts = gldm_counts(d, alpha);
    let ng = d.ng as usize;
    let nd = S::cast(d.coords.len() as f64);
    let mut sde = S::zero();
    let mut lde = S::zero();
    let mut gln = S::zero();
    let mut dn = S::zero();
    let mut lgle = S::zero();
    let mut hgle = S::zero();
    for i in 0..ng {
        let mut row = S::zero();
        let gf = S::cast((i + 1) as f64);
        for k in 0..27 {
            let c = counts[i * 27 + k];
            if c == 0 {
                continue;
            }
            let cf = S::cast(c as f64);
            let kf = S::cast((k + 1) as f64);
            sde = sde + cf / (kf * kf);
            lde = lde + cf * kf * kf;
            lgle = lgle + cf / (gf * gf);
            hgle = hgle + cf * gf * gf;
            row = row + cf;
        }
        gln = gln + row * row;
    }
    for k in 0..27 {
        let mut col = S::zero();
        for i in 0..ng {
            col = col + S::cast(counts[i * 27 + k] as f64);
        }
        dn = dn + col * col;
    }
    Ok([sde / nd, lde / nd, gln / nd, dn / nd, lgle / nd, hgle / nd])
}
