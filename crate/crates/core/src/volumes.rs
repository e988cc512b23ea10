//! 3D volumes and masks: MVOL disk format, largest-lesion isolation, and
//! gray-level discretization.
//!
//! MVOL is a deliberately simple pair of files: a JSON header
//! `{"dims":[x,y,z],"spacing":[sx,sy,sz],"dtype":"f32le"|"u8"}` and a raw
//! little-endian binary with voxels in x-fastest order.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MvolHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
}

/// Dense 3D scalar field with voxel spacing in millimetres, x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D<S> {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub voxels: Vec<S>,
}

/// Integer-labeled segmentation aligned with a volume; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub voxels: Vec<u8>,
}

/// ROI voxels mapped to gray levels 1..=ng, with a dense lookup grid
/// (0 = outside the ROI) for neighborhood scans.
#[derive(Debug, Clone)]
pub struct DiscretizedRoi {
    pub dims: [usize; 3],
    pub ng: u32,
    /// level per grid voxel, 0 outside the ROI
    pub grid: Vec<u32>,
    /// coordinates of ROI voxels, ascending linear index
    pub coords: Vec<[usize; 3]>,
}

impl DiscretizedRoi {
    #[inline]
    pub fn level_at(&self, x: i64, y: i64, z: i64) -> u32 {
        let [nx, ny, nz] = self.dims;
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            return 0;
        }
        self.grid[(z as usize * ny + y as usize) * nx + x as usize]
    }

    pub fn n_voxels(&self) -> usize {
        self.coords.len()
    }
}

#[inline]
pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    (z * dims[1] + y) * dims[0] + x
}

fn check_header(h: &MvolHeader) -> Result<()> {
    if h.dims.iter().any(|&d| d == 0) {
        return Err(Error::Format(format!("non-positive dims {:?}", h.dims)));
    }
    if h.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Format(format!("non-positive spacing {:?}", h.spacing)));
    }
    Ok(())
}

fn read_header(header_path: &Path) -> Result<MvolHeader> {
    let text = fs::read_to_string(header_path)?;
    let h: MvolHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
    check_header(&h)?;
    Ok(h)
}

pub fn load_volume<S: Scalar>(header_path: &Path, raw_path: &Path) -> Result<Volume3D<S>> {
    let h = read_header(header_path)?;
    if h.dtype != "f32le" {
        return Err(Error::Format(format!(
            "{}: expected dtype f32le for a volume, got {:?}",
            header_path.display(),
            h.dtype
        )));
    }
    let n = h.dims[0] * h.dims[1] * h.dims[2];
    let bytes = fs::read(raw_path)?;
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "{}: raw length {} != expected {} ({} voxels * 4 bytes)",
            raw_path.display(),
            bytes.len(),
            n * 4,
            n
        )));
    }
    let mut voxels = Vec::with_capacity(n);
    for chunk in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::Format(format!(
                "{}: non-finite voxel value",
                raw_path.display()
            )));
        }
        voxels.push(S::cast(v as f64));
    }
    Ok(Volume3D {
        dims: h.dims,
        spacing: h.spacing,
        voxels,
    })
}

pub fn save_volume<S: Scalar>(v: &Volume3D<S>, header_path: &Path, raw_path: &Path) -> Result<()> {
    let h = MvolHeader {
        dims: v.dims,
        spacing: v.spacing,
        dtype: "f32le".into(),
    };
    check_header(&h)?;
    fs::write(header_path, serde_json::to_string_pretty(&h)?)?;
    let mut bytes = Vec::with_capacity(v.voxels.len() * 4);
    for &x in &v.voxels {
        bytes.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
    fs::write(raw_path, bytes)?;
    Ok(())
}

pub fn load_mask(header_path: &Path, raw_path: &Path) -> Result<Mask> {
    let h = read_header(header_path)?;
    if h.dtype != "u8" {
        return Err(Error::Format(format!(
            "{}: expected dtype u8 for a mask, got {:?}",
            header_path.display(),
            h.dtype
        )));
    }
    let n = h.dims[0] * h.dims[1] * h.dims[2];
    let bytes = fs::read(raw_path)?;
    if bytes.len() != n {
        return Err(Error::Format(format!(
            "{}: raw length {} != expected {}",
            raw_path.display(),
            bytes.len(),
            n
        )));
    }
    Ok(Mask {
        dims: h.dims,
        spacing: h.spacing,
        voxels: bytes,
    })
}

pub fn save_mask(m: &Mask, header_path: &Path, raw_path: &Path) -> Result<()> {
    let h = MvolHeader {
        dims: m.dims,
        spacing: m.spacing,
        dtype: "u8".into(),
    };
    check_header(&h)?;
    fs::write(header_path, serde_json::to_string_pretty(&h)?)?;
    fs::write(raw_path, &m.voxels)?;
    Ok(())
}

/// The 26-neighborhood offsets.
pub fn neighbors26() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Keep only the largest 26-connected component of nonzero voxels, as a
/// binary mask. Ties break toward the component containing the smallest
/// linear voxel index.
pub fn largest_lesion(m: &Mask) -> Result<Mask> {
    let [nx, ny, nz] = m.dims;
    let n = nx * ny * nz;
    let mut comp = vec![u32::MAX; n];
    let offsets = neighbors26();
    let mut best: Option<(usize, usize, u32)> = None; // (size, min_index, id)
    let mut next_id = 0u32;
    for start in 0..n {
        if m.voxels[start] == 0 || comp[start] != u32::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        let mut size = 0usize;
        let mut queue = VecDeque::new();
        comp[start] = id;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let z = idx / (nx * ny);
            let y = (idx / nx) % ny;
            let x = idx % nx;
            for o in &offsets {
                let (qx, qy, qz) = (x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as i64 || qy >= ny as i64 || qz >= nz as i64
                {
                    continue;
                }
                let qi = linear_index(m.dims, qx as usize, qy as usize, qz as usize);
                if m.voxels[qi] != 0 && comp[qi] == u32::MAX {
                    comp[qi] = id;
                    queue.push_back(qi);
                }
            }
        }
        // start is the minimum linear index of this component by scan order
        let better = match best {
            None => true,
            Some((bs, bmin, _)) => size > bs || (size == bs && start < bmin),
        };
        if better {
            best = Some((size, start, id));
        }
    }
    let (_, _, keep) = best.ok_or_else(|| Error::NoLesion("empty mask".into()))?;
    let voxels = comp
        .iter()
        .map(|&c| if c == keep { 1u8 } else { 0u8 })
        .collect();
    Ok(Mask {
        dims: m.dims,
        spacing: m.spacing,
        voxels,
    })
}

/// Fixed-bin-count discretization of ROI intensities into levels 1..=ng.
/// level = 1 + floor(ng * (x - min) / (max - min)), clamped to ng; a constant
/// ROI maps entirely to level 1.
pub fn discretize<S: Scalar>(v: &Volume3D<S>, roi: &Mask, ng: u32) -> Result<DiscretizedRoi> {
    if v.dims != roi.dims {
        return Err(Error::Input(format!(
            "volume dims {:?} != mask dims {:?}",
            v.dims, roi.dims
        )));
    }
    assert!(ng >= 2, "ng must be >= 2");
    let [nx, ny, nz] = v.dims;
    let mut coords = Vec::new();
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = linear_index(v.dims, x, y, z);
                if roi.voxels[i] != 0 {
                    coords.push([x, y, z]);
                    let val = v.voxels[i];
                    if val < lo {
                        lo = val;
                    }
                    if val > hi {
                        hi = val;
                    }
                }
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::NoLesion("empty ROI in discretize".into()));
    }
    let mut grid = vec![0u32; nx * ny * nz];
    let range = hi - lo;
    for c in &coords {
        let i = linear_index(v.dims, c[0], c[1], c[2]);
        let level = if range <= S::zero() {
            1
        } else {
            let frac = ((v.voxels[i] - lo) / range).as_f64();
            let lvl = 1 + (ng as f64 * frac).floor() as u32;
            lvl.min(ng)
        };
        grid[i] = level;
    }
    Ok(DiscretizedRoi {
        dims: v.dims,
        ng,
        grid,
        coords,
    })
}

/// Intensities of the ROI voxels, in ascending linear-index order.
pub fn roi_intensities<S: Scalar>(v: &Volume3D<S>, roi: &Mask) -> Result<Vec<S>> {
    if v.dims != roi.dims {
        return Err(Error::Input(format!(
            "volume dims {:?} != mask dims {:?}",
            v.dims, roi.dims
        )));
    }
    let out: Vec<S> = v
        .voxels
        .iter()
        .zip(roi.voxels.iter())
        .filter(|(_, &m)| m != 0)
        .map(|(&v, _)| v)
        .collect();
    if out.is_empty() {
        return Err(Error::NoLesion("empty ROI".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn mask_from(dims: [usize; 3], nonzero: &[[usize; 3]]) -> Mask {
        let mut voxels = vec![0u8; dims[0] * dims[1] * dims[2]];
        for c in nonzero {
            voxels[linear_index(dims, c[0], c[1], c[2])] = 1;
        }
        Mask {
            dims,
            spacing: [1.0, 1.0, 1.0],
            voxels,
        }
    }

    #[test]
    fn mvol_round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let v = Volume3D {
            dims: [2, 2, 1],
            spacing: [1.0, 1.0, 1.0],
            voxels: vec![0.25f64, -1.5, 3.75, 10.0],
        };
        let hp = dir.path().join("v.mvol.json");
        let rp = dir.path().join("v.mvol.raw");
        save_volume(&v, &hp, &rp).unwrap();
        let back: Volume3D<f64> = load_volume(&hp, &rp).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn short_raw_file_is_a_format_error() {
        let dir = tempdir().unwrap();
        let hp = dir.path().join("v.mvol.json");
        let rp = dir.path().join("v.mvol.raw");
        std::fs::write(
            &hp,
            r#"{"dims":[2,2,1],"spacing":[1,1,1],"dtype":"f32le"}"#,
        )
        .unwrap();
        std::fs::write(&rp, vec![0u8; 15]).unwrap();
        let err = load_volume::<f64>(&hp, &rp).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn four_voxel_header_loads() {
        let dir = tempdir().unwrap();
        let hp = dir.path().join("v.mvol.json");
        let rp = dir.path().join("v.mvol.raw");
        std::fs::write(
            &hp,
            r#"{"dims":[2,2,1],"spacing":[1,1,1],"dtype":"f32le"}"#,
        )
        .unwrap();
        std::fs::write(&rp, vec![0u8; 16]).unwrap();
        let v: Volume3D<f32> = load_volume(&hp, &rp).unwrap();
        assert_eq!(v.voxels.len(), 4);
    }

    #[test]
    fn non_positive_spacing_rejected() {
        let dir = tempdir().unwrap();
        let hp = dir.path().join("v.mvol.json");
        std::fs::write(
            &hp,
            r#"{"dims":[2,2,1],"spacing":[1,0,1],"dtype":"f32le"}"#,
        )
        .unwrap();
        let err = load_volume::<f64>(&hp, &dir.path().join("x")).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn largest_of_two_components_wins() {
        // component A: 9 voxels in a 3x3 plate; component B: 5 voxels far away
        let mut cells = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                cells.push([x, y, 0]);
            }
        }
        for x in 0..5 {
            cells.push([x, 7, 7]);
        }
        let m = mask_from([8, 8, 8], &cells);
        let l = largest_lesion(&m).unwrap();
        let count: usize = l.voxels.iter().map(|&v| v as usize).sum();
        assert_eq!(count, 9);
        assert_eq!(l.voxels[linear_index(m.dims, 1, 1, 0)], 1);
        assert_eq!(l.voxels[linear_index(m.dims, 1, 7, 7)], 0);
    }

    #[test]
    fn single_voxel_mask_is_identity() {
        let m = mask_from([4, 4, 4], &[[2, 1, 3]]);
        let l = largest_lesion(&m).unwrap();
        assert_eq!(l.voxels, m.voxels);
    }

    #[test]
    fn empty_mask_is_no_lesion() {
        let m = mask_from([4, 4, 4], &[]);
        assert!(matches!(largest_lesion(&m), Err(Error::NoLesion(_))));
    }

    /// Independent flood-fill oracle: component of `start` by repeated
    /// scanning, no queue shared with the implementation.
    fn flood_fill_oracle(m: &Mask, start: usize) -> Vec<bool> {
        let [nx, ny, nz] = m.dims;
        let n = nx * ny * nz;
        let mut in_comp = vec![false; n];
        in_comp[start] = true;
        loop {
            let mut changed = false;
            for idx in 0..n {
                if m.voxels[idx] == 0 || in_comp[idx] {
                    continue;
                }
                let z = idx / (nx * ny);
                let y = (idx / nx) % ny;
                let x = idx % nx;
                'outer: for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let (qx, qy, qz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if qx < 0
                                || qy < 0
                                || qz < 0
                                || qx >= nx as i64
                                || qy >= ny as i64
                                || qz >= nz as i64
                            {
                                continue;
                            }
                            let qi = linear_index(m.dims, qx as usize, qy as usize, qz as usize);
                            if in_comp[qi] {
                                in_comp[idx] = true;
                                changed = true;
                                break 'outer;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        in_comp
    }

    #[test]
    fn random_masks_match_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let dims = [16, 16, 16];
            let mut voxels = vec![0u8; 16 * 16 * 16];
            for v in voxels.iter_mut() {
                if rng.gen_bool(0.18) {
                    *v = 1;
                }
            }
            if voxels.iter().all(|&v| v == 0) {
                voxels[0] = 1;
            }
            let m = Mask {
                dims,
                spacing: [1.0; 3],
                voxels,
            };
            let l = largest_lesion(&m).unwrap();
            // the result must be 26-connected and a subset of nonzero voxels
            let first = l.voxels.iter().position(|&v| v == 1).unwrap();
            let oracle = flood_fill_oracle(&m, first);
            for i in 0..l.voxels.len() {
                assert!(l.voxels[i] == 0 || m.voxels[i] != 0);
                assert_eq!(l.voxels[i] == 1, oracle[i], "voxel {i} disagrees with oracle");
            }
            // and it must be a maximal-size component: count every component
            // via the oracle and compare
            let mut seen = vec![false; m.voxels.len()];
            let mut max_size = 0usize;
            for i in 0..m.voxels.len() {
                if m.voxels[i] != 0 && !seen[i] {
                    let comp = flood_fill_oracle(&m, i);
                    let size = comp.iter().filter(|&&b| b).count();
                    for (s, c) in seen.iter_mut().zip(comp.iter()) {
                        *s |= c;
                    }
                    max_size = max_size.max(size);
                }
            }
            let got: usize = l.voxels.iter().map(|&v| v as usize).sum();
            assert_eq!(got, max_size);
        }
    }

    #[test]
    fn discretize_constant_roi_is_all_level_one() {
        let dims = [3, 1, 1];
        let v = Volume3D {
            dims,
            spacing: [1.0; 3],
            voxels: vec![5.0f64; 3],
        };
        let m = mask_from(dims, &[[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        let d = discretize(&v, &m, 8).unwrap();
        assert!(d.coords.iter().all(|c| d.level_at(c[0] as i64, c[1] as i64, c[2] as i64) == 1));
    }

    #[test]
    fn discretize_endpoints() {
        let dims = [2, 1, 1];
        let v = Volume3D {
            dims,
            spacing: [1.0; 3],
            voxels: vec![0.0f64, 1.0],
        };
        let m = mask_from(dims, &[[0, 0, 0], [1, 0, 0]]);
        let d = discretize(&v, &m, 2).unwrap();
        assert_eq!(d.level_at(0, 0, 0), 1);
        assert_eq!(d.level_at(1, 0, 0), 2);
    }

    #[test]
    fn discretize_matches_direct_binning_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = [6, 6, 6];
        let voxels: Vec<f64> = (0..216).map(|_| rng.gen_range(-3.0..9.0)).collect();
        let v = Volume3D {
            dims,
            spacing: [1.0; 3],
            voxels: voxels.clone(),
        };
        let mut mask_vox = vec![0u8; 216];
        for mv in mask_vox.iter_mut() {
            if rng.gen_bool(0.5) {
                *mv = 1;
            }
        }
        mask_vox[0] = 1;
        let m = Mask {
            dims,
            spacing: [1.0; 3],
            voxels: mask_vox.clone(),
        };
        let ng = 32u32;
        let d = discretize(&v, &m, ng).unwrap();
        let in_roi: Vec<f64> = voxels
            .iter()
            .zip(&mask_vox)
            .filter(|(_, &m)| m != 0)
            .map(|(&v, _)| v)
            .collect();
        let lo = in_roi.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = in_roi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut hist_impl = vec![0usize; ng as usize + 1];
        let mut hist_oracle = vec![0usize; ng as usize + 1];
        for i in 0..216 {
            if mask_vox[i] == 0 {
                continue;
            }
            hist_impl[d.grid[i] as usize] += 1;
            let lvl = (1 + ((ng as f64) * (voxels[i] - lo) / (hi - lo)).floor() as usize).min(ng as usize);
            hist_oracle[lvl] += 1;
        }
        assert_eq!(hist_impl, hist_oracle);
    }

    #[test]
    fn discretize_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = [5, 5, 5];
        let voxels: Vec<f64> = (0..125).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = Mask {
            dims,
            spacing: [1.0; 3],
            voxels: vec![1u8; 125],
        };
        let v1 = Volume3D {
            dims,
            spacing: [1.0; 3],
            voxels: voxels.clone(),
        };
        let v2 = Volume3D {
            dims,
            spacing: [1.0; 3],
            voxels: voxels.iter().map(|&x| 3.5 * x - 11.0).collect(),
        };
        let d1 = discretize(&v1, &m, 16).unwrap();
        let d2 = discretize(&v2, &m, 16).unwrap();
        assert_eq!(d1.grid, d2.grid);
    }
}
