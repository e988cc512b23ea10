//! First-order intensity statistics over the raw ROI voxel values.

use crate::error::{Error, Result};
use crate::scalar::{mean, percentile_sorted, Scalar};

/// The 16 first-order features, in manifest order:
/// energy, entropy, min, max, mean, median, range, variance, skewness,
/// kurtosis (Fisher), rms, uniformity, p10, p90, iqr, mad.
///
/// Entropy and uniformity are taken over the `ng`-bin histogram of the raw
/// intensities (base-2 entropy, 0*log0 = 0). Variance is the population
/// variance; a degenerate distribution yields skewness = kurtosis = 0.
pub fn first_order<S: Scalar>(intensities: &[S], ng: u32) -> Result<[S; 16]> {
    if intensities.is_empty() {
        return Err(Error::NoLesion("empty ROI in first_order".into()));
    }
    let n = intensities.len();
    let nf = S::cast(n as f64);
    let mut sorted = intensities.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let minimum = sorted[0];
    let maximum = sorted[n - 1];
    let m = mean(intensities);
    let energy = intensities.iter().map(|&x| x * x).sum::<S>();
    let rms = (energy / nf).sqrt();
    let median = percentile_sorted(&sorted, 50.0);
    let range = maximum - minimum;
    // a constant ROI is exactly variance 0; the moment sum can leave ulp dust
    let var = if range > S::zero() {
        intensities.iter().map(|&x| (x - m) * (x - m)).sum::<S>() / nf
    } else {
        S::zero()
    };
    let sd = var.sqrt();
    let (skewness, kurtosis) = if sd > S::zero() {
        let m3 = intensities
            .iter()
            .map(|&x| (x - m) * (x - m) * (x - m))
            .sum::<S>()
            / nf;
        let m4 = intensities
            .iter()
            .map(|&x| {
                let d = x - m;
                d * d * d * d
            })
            .sum::<S>()
            / nf;
        (m3 / (sd * sd * sd), m4 / (var * var) - S::cast(3.0))
    } else {
        (S::zero(), S::zero())
    };

    // ng-bin histogram with the same binning rule as discretization
    let mut hist = vec![0usize; ng as usize];
    if range > S::zero() {
        for &x in intensities {
            let frac = ((x - minimum) / range).as_f64();
            let bin = ((ng as f64 * frac).floor() as usize).min(ng as usize - 1);
            hist[bin] += 1;
        }
    } else {
        hist[0] = n;
    }
    let mut entropy = S::zero();
    let mut uniformity = S::zero();
    for &c in &hist {
        if c > 0 {
            let p = S::cast(c as f64 / n as f64);
            entropy = entropy - p * p.log2();
            uniformity = uniformity + p * p;
        }
    }

    let p10 = percentile_sorted(&sorted, 10.0);
    let p90 = percentile_sorted(&sorted, 90.0);
    let iqr = percentile_sorted(&sorted, 75.0) - percentile_sorted(&sorted, 25.0);
    let mad = intensities.iter().map(|&x| (x - m).abs()).sum::<S>() / nf;

    Ok([
        energy, entropy, minimum, maximum, m, median, range, var, skewness, kurtosis, rms,
        uniformity, p10, p90, iqr, mad,
    ])
}
