//! 3D shape features of a binary ROI on its native grid.

use crate::error::{Error, Result};
use crate::scalar::{sym3_eigenvalues, Scalar};
use crate::volumes::{linear_index, Mask};

/// The 10 shape features, in manifest order: volume, surface area,
/// surface/volume ratio, sphericity, max 3D diameter, major/minor/least axis
/// lengths, elongation, flatness.
///
/// Surface area counts exposed faces between ROI and non-ROI voxels (grid
/// boundary counts as non-ROI), each weighted by its physical face area.
/// The maximum diameter is exact over boundary voxel centers. Axis lengths
/// are 4*sqrt(eigenvalue) of the physical coordinate covariance, descending.
pub fn shape3d<S: Scalar>(roi: &Mask, spacing: [f64; 3]) -> Result<[S; 10]> {
    let [nx, ny, nz] = roi.dims;
    let [sx, sy, sz] = spacing;
    let mut coords: Vec<[usize; 3]> = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if roi.voxels[linear_index(roi.dims, x, y, z)] != 0 {
                    coords.push([x, y, z]);
                }
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::NoLesion("empty mask in shape3d".into()));
    }
    let count = coords.len();
    let voxel_volume = sx * sy * sz;
    let volume = count as f64 * voxel_volume;

    let inside = |x: i64, y: i64, z: i64| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            return false;
        }
        roi.voxels[linear_index(roi.dims, x as usize, y as usize, z as usize)] != 0
    };

    let face_areas = [sy * sz, sx * sz, sx * sy];
    let face_offsets: [[i64; 3]; 6] = [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ];
    let mut surface = 0.0;
    let mut boundary: Vec<[f64; 3]> = Vec::new();
    for c in &coords {
        let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
        let mut exposed = false;
        for (axis, o) in face_offsets.iter().enumerate() {
            if !inside(x + o[0], y + o[1], z + o[2]) {
                surface += face_areas[axis / 2];
                exposed = true;
            }
        }
        if exposed {
            boundary.push([x as f64 * sx, y as f64 * sy, z as f64 * sz]);
        }
    }

    let mut max_diam2 = 0.0f64;
    for i in 0..boundary.len() {
        for j in (i + 1)..boundary.len() {
            let d2 = (boundary[i][0] - boundary[j][0]).powi(2)
                + (boundary[i][1] - boundary[j][1]).powi(2)
                + (boundary[i][2] - boundary[j][2]).powi(2);
            if d2 > max_diam2 {
                max_diam2 = d2;
            }
        }
    }
    let max_diameter = max_diam2.sqrt();

    // population covariance of physical voxel-center coordinates
    let mut mean = [0.0f64; 3];
    let phys: Vec<[f64; 3]> = coords
        .iter()
        .map(|c| [c[0] as f64 * sx, c[1] as f64 * sy, c[2] as f64 * sz])
        .collect();
    for p in &phys {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    for a in mean.iter_mut() {
        *a /= count as f64;
    }
    let mut cov = [[0.0f64; 3]; 3];
    for p in &phys {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= count as f64;
        }
    }
    let eig = sym3_eigenvalues(cov).map(|e| e.max(0.0));
    let major = 4.0 * eig[0].sqrt();
    let minor = 4.0 * eig[1].sqrt();
    let least = 4.0 * eig[2].sqrt();
    let (elongation, flatness) = if eig[0] > 0.0 {
        ((eig[1] / eig[0]).sqrt(), (eig[2] / eig[0]).sqrt())
    } else {
        (0.0, 0.0)
    };

    let sphericity =
        std::f64::consts::PI.powf(1.0 / 3.0) * (6.0 * volume).powf(2.0 / 3.0) / surface;

    Ok([
        S::cast(volume),
        S::cast(surface),
        S::cast(surface / volume),
        S::cast(sphericity),
        S::cast(max_diameter),
        S::cast(major),
        S::cast(minor),
        S::cast(least),
        S::cast(elongation),
        S::cast(flatness),
    ])
}
