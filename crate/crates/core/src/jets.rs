//! Symmetric matrices, ordered eigenvalues and gradient-free 2-jets.
//!
//! `SymMat` stores the upper triangle of a dense symmetric `N x N` matrix;
//! the eigensolver is a cyclic Jacobi iteration, which is robust and more
//! than fast enough for the small dimensions (`N <= 8`) this crate targets.
//! A [`Jet`] is the pair `(r, A)` and its norm is
//! `||(r, A)|| = max(|r|, max_i |lambda_i(A)|)`.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Off-diagonal Frobenius tolerance for the Jacobi sweep (relative).
const JACOBI_TOL: f64 = 1e-13;
/// Sweep cap; a breach is an internal defect, not an input error.
const JACOBI_MAX_SWEEPS: usize = 64;

/// Dense symmetric matrix, upper triangle stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    dim: usize,
    entries: Vec<f64>,
}

/// Eigendecomposition `A = Q diag(values) Q^T` with `values` non-decreasing
/// and the columns of `Q` orthonormal.
#[derive(Debug, Clone)]
pub struct Eig {
    pub values: Vec<f64>,
    /// Row-major `N x N` orthogonal factor; column `k` is the eigenvector
    /// paired with `values[k]`.
    pub vectors: Vec<f64>,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMat dimension must be positive");
        SymMat {
            dim,
            entries: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMat::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = SymMat::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.set(i, i, *d);
        }
        m
    }

    /// Builds from an upper triangle given row-major (`N(N+1)/2` values).
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: dim * (dim + 1) / 2,
                got: upper.len(),
            });
        }
        Ok(SymMat {
            dim,
            entries: upper.to_vec(),
        })
    }

    /// Builds from a row-major dense matrix, symmetrizing by averaging.
    pub fn from_dense(dim: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: dense.len(),
            });
        }
        let mut m = SymMat::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, 0.5 * (dense[i * dim + j] + dense[j * dim + i]));
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.dim - i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.entries[k] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        assert_eq!(self.dim, other.dim);
        SymMat {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat {
            dim: self.dim,
            entries: self.entries.iter().map(|a| a * s).collect(),
        }
    }

    /// `self + t * I`.
    pub fn add_scaled_identity(&self, t: f64) -> SymMat {
        let mut m = self.clone();
        for i in 0..self.dim {
            let v = m.get(i, i);
            m.set(i, i, v + t);
        }
        m
    }

    pub fn neg(&self) -> SymMat {
        self.scale(-1.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = self.get(i, j);
            }
        }
        d
    }

    /// Ordered eigenvalues, smallest first.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eig().values
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Spectral radius `max_i |lambda_i|`.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, l| acc.max(l.abs()))
    }

    /// Determinant via the eigenvalue product. Conditioning is acceptable
    /// for the small dimensions in scope.
    pub fn det(&self) -> f64 {
        self.eigenvalues().iter().product()
    }

    /// Full eigendecomposition by cyclic Jacobi with threshold sweeps.
    ///
    /// Always converges for symmetric input; the sweep cap is only a guard
    /// against an internal defect and breaching it panics. The 2x2 case
    /// is a single exact rotation.
    pub fn eig(&self) -> Eig {
        let n = self.dim;
        if n == 2 {
            return self.eig_2x2();
        }
        let mut a = self.to_dense();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }

        if n > 1 {
            let scale: f64 = 1.0 + a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut converged = false;
            for _sweep in 0..JACOBI_MAX_SWEEPS {
                let off: f64 = {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            s += a[i * n + j] * a[i * n + j];
                        }
                    }
                    s.sqrt()
                };
                if off <= JACOBI_TOL * scale {
                    converged = true;
                    break;
                }
                // One cyclic sweep over the strict upper triangle.
                let threshold = off / (n * n) as f64;
                for p in 0..n {
                    for r in (p + 1)..n {
                        let apr = a[p * n + r];
                        if apr.abs() <= threshold * 1e-3 {
                            continue;
                        }
                        let app = a[p * n + p];
                        let arr = a[r * n + r];
                        let theta = (arr - app) / (2.0 * apr);
                        let t = if theta >= 0.0 {
                            1.0 / (theta + (theta * theta + 1.0).sqrt())
                        } else {
                            -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                        };
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;

                        for k in 0..n {
                            let akp = a[k * n + p];
                            let akr = a[k * n + r];
                            a[k * n + p] = c * akp - s * akr;
                            a[k * n + r] = s * akp + c * akr;
                        }
                        for k in 0..n {
                            let apk = a[p * n + k];
                            let ark = a[r * n + k];
                            a[p * n + k] = c * apk - s * ark;
                            a[r * n + k] = s * apk + c * ark;
                        }
                        for k in 0..n {
                            let qkp = q[k * n + p];
                            let qkr = q[k * n + r];
                            q[k * n + p] = c * qkp - s * qkr;
                            q[k * n + r] = s * qkp + c * qkr;
                        }
                    }
                }
            }
            if !converged {
                let off: f64 = {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            s += a[i * n + j] * a[i * n + j];
                        }
                    }
                    s.sqrt()
                };
                if off > JACOBI_TOL * scale * 1e3 {
                    panic!(
                        "internal defect: Jacobi eigensolver failed to converge \
                         (dim={n}, residual off-diagonal norm {off:e})"
                    );
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
        self.sorted_eig(n, &a, &q, &order)
    }

    fn sorted_eig(&self, n: usize, a: &[f64], q: &[f64], order: &[usize]) -> Eig {
        let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
        let mut vectors = vec![0.0; n * n];
        for (new_col, &old_col) in order.iter().enumerate() {
            for row in 0..n {
                vectors[row * n + new_col] = q[row * n + old_col];
            }
        }
        Eig { values, vectors }
    }

    /// One exact Jacobi rotation diagonalizes a 2x2 symmetric matrix.
    fn eig_2x2(&self) -> Eig {
        let (app, apq, aqq) = (self.entries[0], self.entries[1], self.entries[2]);
        if apq == 0.0 {
            return if app <= aqq {
                Eig {
                    values: vec![app, aqq],
                    vectors: vec![1.0, 0.0, 0.0, 1.0],
                }
            } else {
                Eig {
                    values: vec![aqq, app],
                    vectors: vec![0.0, 1.0, 1.0, 0.0],
                }
            };
        }
        let theta = (aqq - app) / (2.0 * apq);
        let t = if theta >= 0.0 {
            1.0 / (theta + (theta * theta + 1.0).sqrt())
        } else {
            -1.0 / (-theta + (theta * theta + 1.0).sqrt())
        };
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        // Rotation R = [[c, s], [-s, c]] applied as R^T A R.
        let l1 = app - t * apq;
        let l2 = aqq + t * apq;
        // Columns of Q are the eigenvectors of l1 and l2.
        let (values, vectors) = if l1 <= l2 {
            (vec![l1, l2], vec![c, s, -s, c])
        } else {
            (vec![l2, l1], vec![s, c, c, -s])
        };
        Eig { values, vectors }
    }
}

impl Eig {
    /// Reassembles `Q diag(values) Q^T` (row-major dense), for verification.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.values.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.vectors[i * n + k] * self.values[k] * self.vectors[j * n + k];
                }
                out[i * n + j] = s;
            }
        }
        out
    }
}

/// The gradient-free 2-jet `(r, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub r: f64,
    pub a: SymMat,
}

impl Jet {
    pub fn new(r: f64, a: SymMat) -> Self {
        Jet { r, a }
    }

    pub fn zero(dim: usize) -> Self {
        Jet {
            r: 0.0,
            a: SymMat::zeros(dim),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// `||(r, A)|| = max(|r|, max_i |lambda_i(A)|)`.
    pub fn norm(&self) -> f64 {
        self.r.abs().max(self.a.spectral_radius())
    }

    pub fn add(&self, other: &Jet) -> Jet {
        Jet {
            r: self.r + other.r,
            a: self.a.add(&other.a),
        }
    }

    pub fn neg(&self) -> Jet {
        Jet {
            r: -self.r,
            a: self.a.neg(),
        }
    }

    /// `(r, A) + t * (-1, I)`, the monotone ray every proper elliptic set
    /// is eventually entered along.
    pub fn translate_ray(&self, t: f64) -> Jet {
        Jet {
            r: self.r - t,
            a: self.a.add_scaled_identity(t),
        }
    }

    /// `(r - s, A + p * I)` with independent scalar and matrix steps.
    pub fn translate(&self, s: f64, p: f64) -> Jet {
        Jet {
            r: self.r - s,
            a: self.a.add_scaled_identity(p),
        }
    }

    /// Short human-readable form used in witnesses and error messages.
    pub fn summary(&self) -> String {
        format!("(r={:.6e}, diag-free upper={:?})", self.r, self.a.upper())
    }
}

pub fn jet_norm(j: &Jet) -> f64 {
    j.norm()
}
