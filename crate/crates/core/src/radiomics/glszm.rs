//! Gray level size zone matrix features.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volumes::{linear_index, neighbors26, DiscretizedRoi};

/// Zone sizes per level: zones are 26-connected components of equal level
/// inside the ROI. Returns `(sizes_per_level, max_zone_size)` where
/// `sizes_per_level[i]` lists the zone sizes of level `i+1`.
pub fn glszm_zones(d: &DiscretizedRoi) -> Vec<Vec<usize>> {
    let ng = d.ng as usize;
    let [nx, ny, nz] = d.dims;
    let n = nx * ny * nz;
    let mut visited = vec![false; n];
    let mut zones: Vec<Vec<usize>> = vec![Vec::new(); ng];
    let offsets = neighbors26();
    for c in &d.coords {
        let start = linear_index(d.dims, c[0], c[1], c[2]);
        if visited[start] {
            continue;
        }
        let level = d.grid[start];
        visited[start] = true;
        let mut size = 0usize;
        let mut queue = VecDeque::new();
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
                let qi = linear_index(d.dims, qx as usize, qy as usize, qz as usize);
                if !visited[qi] && d.grid[qi] == level {
                    visited[qi] = true;
                    queue.push_back(qi);
                }
            }
        }
        zones[level as usize - 1].push(size);
    }
    zones
}

/// The 7 GLSZM features in manifest order: SAE, LAE, GLN, SZN, ZP, LGLZE,
/// HGLZE.
pub fn glszm_features<S: Scalar>(d: &DiscretizedRoi) -> Result<[S; 7]> {
    if d.coords.is_empty() {
        return Err(Error::NoLesion("empty ROI in glszm".into()));
    }
    let zones = glszm_zones(d);
    let np = S::cast(d.coords.len() as f64);
    let nz: usize = zones.iter().map(|z| z.len()).sum();
    let nz_f = S::cast(nz as f64);
    let max_size = zones
        .iter()
        .flat_map(|z| z.iter())
        .copied()
        .max()
        .unwrap_or(0);
    let mut sae = S::zero();
    let mut lae = S::zero();
    let mut gln = S::zero();
    let mut lglze = S::zero();
    let mut hglze = S::zero();
    for (i, sizes) in zones.iter().enumerate() {
        let gf = S::cast((i + 1) as f64);
        let row = S::cast(sizes.len() as f64);
        gln = gln + row * row;
        for &s in sizes {
            let sf = S::cast(s as f64);
            sae = sae + S::one() / (sf * sf);
            lae = lae + sf * sf;
            lglze = lglze + S::one() / (gf * gf);
            hglze = hglze + gf * gf;
        }
    }
    let mut szn = S::zero();
    for s in 1..=max_size {
        let col: usize = zones
            .iter()
            .map(|sizes| sizes.iter().filter(|&&x| x == s).count())
            .sum();
        let cf = S::cast(col as f64);
        szn = szn + cf * cf;
    }
    Ok([
        sae / nz_f,
        lae / nz_f,
        gln / nz_f,
        szn / nz_f,
        nz_f / np,
        lglze / nz_f,
        hglze / nz_f,
    ])
}
