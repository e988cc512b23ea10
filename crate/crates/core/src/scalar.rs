//! Scalar abstraction: all numeric kernels are generic over the floating
//! point type, with `f64` as the default alias at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + FromStr
    + Display
    + Debug
    + Copy
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy cast from `f64`; panics only on values unrepresentable as any float.
    fn cast(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 -> scalar cast")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar -> f64 cast")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Digamma function psi(x) for x > 0.
///
/// Recurrence up to x >= 6, then the standard asymptotic series. Absolute
/// error is below 1e-12 for x >= 1, which is far tighter than anything the
/// kNN mutual-information estimator needs.
pub fn digamma(mut x: f64) -> f64 {
    assert!(x > 0.0, "digamma domain: x > 0, got {x}");
    let mut result = 0.0;
    while x < 10.0 {
        result -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    result += x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    result
}

pub fn mean<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    xs.iter().copied().sum::<S>() / S::cast(xs.len() as f64)
}

/// Population (biased) variance.
pub fn variance<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<S>() / S::cast(xs.len() as f64)
}

/// Percentile with linear interpolation between closest ranks, `p` in [0,100].
/// `sorted` must be ascending and non-empty.
pub fn percentile_sorted<S: Scalar>(sorted: &[S], p: f64) -> S {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = S::cast(rank - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Eigenvalues of a symmetric 3x3 matrix, descending. Trigonometric
/// closed-form solution for the characteristic cubic.
pub fn sym3_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 <= f64::EPSILON * (q * q).max(1.0) {
        // already (numerically) diagonal
        let mut eig = [m[0][0], m[1][1], m[2][2]];
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        return eig;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = m;
    for i in 0..3 {
        b[i][i] -= q;
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / (p * p * p) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let eig1 = q + 2.0 * p * phi.cos();
    let eig3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let eig2 = 3.0 * q - eig1 - eig3;
    let mut eig = [eig1, eig2, eig3];
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}
