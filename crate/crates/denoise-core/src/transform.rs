//! Separable 2D patch transforms and the 1D group-axis transform.
//!
//! The default patch transform in both filter steps is the orthonormal
//! 2D DCT-II. A periodized bi-orthogonal spline wavelet (full-depth
//! separable decomposition, Haar synthesis / 5-dual-moment analysis pair)
//! is available behind the same interface as an alternative second-step
//! transform. Along the group axis an orthonormal multilevel Haar
//! transform is used; it requires dyadic lengths.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformError {
    /// Data length does not match the configured patch size.
    SizeMismatch { expected: usize, got: usize },
    /// The requested transform needs a power-of-two length.
    NonDyadicLength { got: usize },
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformError::SizeMismatch { expected, got } => {
                write!(f, "expected {expected} samples, got {got}")
            }
            TransformError::NonDyadicLength { got } => {
                write!(f, "length {got} is not a power of two")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TransformError {}

/// Which separable 2D transform to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform2dKind {
    #[default]
    Dct,
    BiorSpline,
}

/// A separable 2D patch transform `C = F X F^T` with precomputed forward
/// and inverse axis matrices.
#[derive(Debug, Clone)]
pub struct Transform2d {
    k: usize,
    fwd: Vec<f64>,
    inv: Vec<f64>,
}

impl Transform2d {
    pub fn new(kind: Transform2dKind, k: usize) -> Result<Self, TransformError> {
        match kind {
            Transform2dKind::Dct => Ok(Self::dct(k)),
            Transform2dKind::BiorSpline => Self::bior_spline(k),
        }
    }

    /// Orthonormal DCT-II along both axes.
    pub fn dct(k: usize) -> Self {
        assert!(k >= 1);
        let mut fwd = vec![0.0; k * k];
        for u in 0..k {
            let scale = if u == 0 {
                math::sqrt(1.0 / k as f64)
            } else {
                math::sqrt(2.0 / k as f64)
            };
            for n in 0..k {
                let angle = core::f64::consts::PI * (2 * n + 1) as f64 * u as f64 / (2 * k) as f64;
                fwd[u * k + n] = scale * math::cos(angle);
            }
        }
        let inv = transpose(&fwd, k);
        Transform2d { k, fwd, inv }
    }

    /// Full-depth periodized bi-orthogonal spline wavelet along both axes.
    /// Needs a power-of-two patch size.
    pub fn bior_spline(k: usize) -> Result<Self, TransformError> {
        if !k.is_power_of_two() || k < 2 {
            return Err(TransformError::NonDyadicLength { got: k });
        }
        let fwd = bior_analysis_matrix(k);
        let inv = invert(&fwd, k);
        Ok(Transform2d { k, fwd, inv })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// In-place forward transform of a row-major `k x k` patch.
    pub fn forward(&self, patch: &mut [f64]) -> Result<(), TransformError> {
        self.apply(patch, &self.fwd)
    }

    /// In-place inverse transform; `inverse(forward(x)) == x` within 1e-10.
    pub fn inverse(&self, patch: &mut [f64]) -> Result<(), TransformError> {
        self.apply(patch, &self.inv)
    }

    fn apply(&self, patch: &mut [f64], m: &[f64]) -> Result<(), TransformError> {
        let k = self.k;
        if patch.len() != k * k {
            return Err(TransformError::SizeMismatch {
                expected: k * k,
                got: patch.len(),
            });
        }
        // tmp = M X
        let mut tmp = vec![0.0; k * k];
        for u in 0..k {
            for n in 0..k {
                let c = m[u * k + n];
                if c == 0.0 {
                    continue;
                }
                for x in 0..k {
                    tmp[u * k + x] += c * patch[n * k + x];
                }
            }
        }
        // out = tmp M^T
        for row in patch.iter_mut() {
            *row = 0.0;
        }
        for u in 0..k {
            for v in 0..k {
                let mut acc = 0.0;
                for x in 0..k {
                    acc += tmp[u * k + x] * m[v * k + x];
                }
                patch[u * k + v] = acc;
            }
        }
        Ok(())
    }
}

fn transpose(m: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = m[i * n + j];
        }
    }
    t
}

/// Dense inverse by Gauss-Jordan with partial pivoting; inputs here are
/// tiny (at most the patch size) and well conditioned.
fn invert(m: &[f64], n: usize) -> Vec<f64> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if math::abs(a[row * n + col]) > math::abs(a[pivot * n + col]) {
                pivot = row;
            }
        }
        assert!(math::abs(a[pivot * n + col]) > 1e-12, "singular transform matrix");
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
        }
        let d = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[row * n + j] -= f * a[col * n + j];
                inv[row * n + j] -= f * inv[col * n + j];
            }
        }
    }
    inv
}

/// Analysis low-pass of the spline (1,5) pair: Haar synthesis side, five
/// dual vanishing moments. DC gain sqrt(2).
const BIOR_DEC_LO: [f64; 10] = [
    3.0 / 128.0,
    -3.0 / 128.0,
    -11.0 / 64.0,
    11.0 / 64.0,
    1.0,
    1.0,
    11.0 / 64.0,
    -11.0 / 64.0,
    -3.0 / 128.0,
    3.0 / 128.0,
];
/// Offset of the tap that aligns with sample `2k` in the low-pass
/// correlation.
const BIOR_DEC_LO_CENTER: usize = 4;

/// Full-depth analysis matrix: per decomposition level the current
/// low band (front of the vector) is split by periodized correlation into
/// approximation and detail halves, composed into one dense matrix.
fn bior_analysis_matrix(k: usize) -> Vec<f64> {
    let inv_sqrt2 = 1.0 / math::sqrt(2.0);
    let mut composed = vec![0.0; k * k];
    for i in 0..k {
        composed[i * k + i] = 1.0;
    }
    let mut len = k;
    while len >= 2 {
        // Level matrix acting on the first `len` coordinates.
        let mut level = vec![0.0; k * k];
        for i in len..k {
            level[i * k + i] = 1.0;
        }
        let half = len / 2;
        for out in 0..half {
            // Approximation row. The 8*len bias keeps the index positive
            // before the periodic wrap.
            for (j, tap) in BIOR_DEC_LO.iter().enumerate() {
                let src = (2 * out + j + 8 * len - BIOR_DEC_LO_CENTER) % len;
                level[out * k + src] += tap * inv_sqrt2;
            }
            // Detail row (Haar high-pass).
            level[(half + out) * k + 2 * out] += inv_sqrt2;
            level[(half + out) * k + 2 * out + 1] -= inv_sqrt2;
        }
        composed = matmul(&level, &composed, k);
        len = half;
    }
    composed
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let v = a[i * n + l];
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += v * b[l * n + j];
            }
        }
    }
    c
}

/// In-place orthonormal multilevel Haar transform along a dyadic-length
/// vector. `scratch` must be at least as long as `data`.
pub fn haar_forward(data: &mut [f64], scratch: &mut [f64]) -> Result<(), TransformError> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(TransformError::NonDyadicLength { got: n });
    }
    let inv_sqrt2 = 1.0 / math::sqrt(2.0);
    let mut len = n;
    while len >= 2 {
        let half = len / 2;
        for i in 0..half {
            scratch[i] = (data[2 * i] + data[2 * i + 1]) * inv_sqrt2;
            scratch[half + i] = (data[2 * i] - data[2 * i + 1]) * inv_sqrt2;
        }
        data[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
    Ok(())
}

/// Inverse of [`haar_forward`].
pub fn haar_inverse(data: &mut [f64], scratch: &mut [f64]) -> Result<(), TransformError> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(TransformError::NonDyadicLength { got: n });
    }
    let inv_sqrt2 = 1.0 / math::sqrt(2.0);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for i in 0..half {
            scratch[2 * i] = (data[i] + data[half + i]) * inv_sqrt2;
            scratch[2 * i + 1] = (data[i] - data[half + i]) * inv_sqrt2;
        }
        data[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
    Ok(())
}
