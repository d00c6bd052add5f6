//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Sizes here are small (patch dimension squared, at most a few dozen),
//! where Jacobi is simple, accurate and deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Eigendecomposition `A = V diag(values) V^T` of a symmetric matrix.
/// `vectors` is row-major with eigenvector `j` in column `j`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl SymmetricEigen {
    /// Decomposes the row-major symmetric `n x n` matrix `a`.
    /// Only the upper triangle is read.
    pub fn new(a: &[f64], n: usize) -> Self {
        assert_eq!(a.len(), n * n);
        let mut m = a.to_vec();
        // Symmetrize so tiny asymmetries from accumulation do not bias the sweep.
        for i in 0..n {
            for j in i + 1..n {
                let s = 0.5 * (m[i * n + j] + m[j * n + i]);
                m[i * n + j] = s;
                m[j * n + i] = s;
            }
        }
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }

        let frob: f64 = m.iter().map(|x| x * x).sum::<f64>();
        let tol = 1e-30 * frob.max(f64::MIN_POSITIVE);
        const MAX_SWEEPS: usize = 64;

        for _ in 0..MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += m[p * n + q] * m[p * n + q];
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + math::sqrt(1.0 + theta * theta))
                    } else {
                        1.0 / (theta - math::sqrt(1.0 + theta * theta))
                    };
                    let c = 1.0 / math::sqrt(1.0 + t * t);
                    let s = t * c;

                    for i in 0..n {
                        let aip = m[i * n + p];
                        let aiq = m[i * n + q];
                        m[i * n + p] = c * aip - s * aiq;
                        m[i * n + q] = s * aip + c * aiq;
                    }
                    for j in 0..n {
                        let apj = m[p * n + j];
                        let aqj = m[q * n + j];
                        m[p * n + j] = c * apj - s * aqj;
                        m[q * n + j] = s * apj + c * aqj;
                    }
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = c * vip - s * viq;
                        v[i * n + q] = s * vip + c * viq;
                    }
                }
            }
        }

        let values = (0..n).map(|i| m[i * n + i]).collect();
        SymmetricEigen { values, vectors: v, n }
    }

    /// `out = V^T x`.
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (j, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate().take(n) {
                acc += self.vectors[i * n + j] * xi;
            }
            *o = acc;
        }
    }

    /// `out = V x`.
    pub fn reconstruct(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.vectors[i * n..i * n + n];
            let mut acc = 0.0;
            for (v, xj) in row.iter().zip(x) {
                acc += v * xj;
            }
            *o = acc;
        }
    }
}
