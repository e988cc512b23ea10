//! Gray level run length matrix features.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volumes::DiscretizedRoi;

use super::glcm::OFFSETS_13;

/// Run counts summed over the 13 directions: `counts[(i-1)*max_len + (l-1)]`
/// is the number of runs of level `i` with length `l`. A run breaks when the
/// scan leaves the ROI or the level changes.
pub fn glrlm_counts(d: &DiscretizedRoi) -> (Vec<u64>, usize) {
    let ng = d.ng as usize;
    let max_len = *d.dims.iter().max().unwrap();
    let mut counts = vec![0u64; ng * max_len];
    for dir in OFFSETS_13 {
        for c in &d.coords {
            let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
            let level = d.level_at(x, y, z);
            // only count from the start of a run
            if d.level_at(x - dir[0], y - dir[1], z - dir[2]) == level {
                continue;
            }
            let mut len = 1usize;
            let (mut qx, mut qy, mut qz) = (x + dir[0], y + dir[1], z + dir[2]);
            while d.level_at(qx, qy, qz) == level {
                len += 1;
                qx += dir[0];
                qy += dir[1];
                qz += dir[2];
            }
            counts[(level as usize - 1) * max_len + (len - 1)] += 1;
        }
    }
    (counts, max_len)
}

/// The 7 GLRLM features in manifest order: SRE, LRE, GLN, RLN, RP, LGLRE,
/// HGLRE. RP normalizes the run count by `Np * 13` (runs per voxel per
/// direction).
pub fn glrlm_features<S: Scalar>(d: &DiscretizedRoi) -> Result<[S; 7]> {
    if d.coords.is_empty() {
        return Err(Error::NoLesion("empty ROI in glrlm".into()));
    }
    let (counts, max_len) = glrlm_counts(d);
    let ng = d.ng as usize;
    let nr: u64 = counts.iter().sum();
    let nr_f = S::cast(nr as f64);
    let np = S::cast(d.coords.len() as f64);
    let mut sre = S::zero();
    let mut lre = S::zero();
    let mut lglre = S::zero();
    let mut hglre = S::zero();
    let mut gln = S::zero();
    let mut rln = S::zero();
    for i in 0..ng {
        let mut row = S::zero();
        for l in 0..max_len {
            let c = counts[i * max_len + l];
            if c == 0 {
                continue;
            }
            let cf = S::cast(c as f64);
            let lf = S::cast((l + 1) as f64);
            let gf = S::cast((i + 1) as f64);
            sre = sre + cf / (lf * lf);
            lre = lre + cf * lf * lf;
            lglre = lglre + cf / (gf * gf);
            hglre = hglre + cf * gf * gf;
            row = row + cf;
        }
        gln = gln + row * row;
    }
    for l in 0..max_len {
        let mut col = S::zero();
        for i in 0..ng {
            col = col + S::cast(counts[i * max_len + l] as f64);
        }
        rln = rln + col * col;
    }
    let thirteen = S::cast(13.0);
    Ok([
        sre / nr_f,
        lre / nr_f,
        gln / nr_f,
        rln / nr_f,
        nr_f / (np * thirteen),
        lglre / nr_f,
        hglre / nr_f,
    ])
}
