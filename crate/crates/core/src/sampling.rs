//! Reproducible random jet generation and low-discrepancy point sets.
//!
//! Eigenvalues are drawn sign-symmetric with log-uniform magnitude so that
//! near-degenerate and large-eigenvalue regimes are both exercised; phase
//! checks on the arctan operator depend on the large tail. Streams are
//! deterministic functions of the seed, and batch work derives per-task
//! sub-seeds so results do not depend on thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::jets::{Jet, SymMat};
use crate::Result;

/// Ratio between the smallest and largest sampled eigenvalue magnitude.
const EIG_FLOOR_RATIO: f64 = 1e-3;

/// Parameters of a reproducible jet sample stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleBox {
    /// Closed range the zeroth-order slot is drawn from (uniformly).
    pub r_range: (f64, f64),
    /// Bound on sampled eigenvalue magnitudes; must be positive.
    pub eig_scale: f64,
    pub seed: u64,
    pub count: usize,
}

impl SampleBox {
    pub fn new(r_range: (f64, f64), eig_scale: f64, seed: u64, count: usize) -> Self {
        SampleBox {
            r_range,
            eig_scale,
            seed,
            count,
        }
    }

    /// Opens the deterministic stream. Identical parameters reproduce the
    /// identical sequence of jets.
    pub fn stream(&self, dim: usize) -> Result<JetStream> {
        if !(self.eig_scale > 0.0) {
            return Err(Error::invalid(format!(
                "eig_scale must be positive, got {}",
                self.eig_scale
            )));
        }
        if self.r_range.0 > self.r_range.1 {
            return Err(Error::invalid("empty r_range"));
        }
        if dim == 0 {
            return Err(Error::invalid("jet dimension must be >= 1"));
        }
        Ok(JetStream {
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            r_range: self.r_range,
            eig_scale: self.eig_scale,
            dim,
            remaining: self.count,
        })
    }
}

/// Iterator over reproducible random jets.
pub struct JetStream {
    rng: ChaCha8Rng,
    r_range: (f64, f64),
    eig_scale: f64,
    dim: usize,
    remaining: usize,
}

impl Iterator for JetStream {
    type Item = Jet;

    fn next(&mut self) -> Option<Jet> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = if self.r_range.0 == self.r_range.1 {
            self.r_range.0
        } else {
            self.rng.random_range(self.r_range.0..=self.r_range.1)
        };
        let a = random_sym(&mut self.rng, self.dim, self.eig_scale, false);
        Some(Jet::new(r, a))
    }
}

/// Sign-symmetric log-uniform magnitude in `[floor_ratio*scale, scale]`.
fn log_uniform_eig(rng: &mut impl Rng, scale: f64, nonneg: bool) -> f64 {
    let lo = (EIG_FLOOR_RATIO * scale).ln();
    let hi = scale.ln();
    let mag = (rng.random_range(lo..=hi)).exp();
    if nonneg || rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Random symmetric matrix `Q diag(lambda) Q^T` with a Haar-ish orthogonal
/// factor (Gram-Schmidt of a Gaussian matrix).
pub fn random_sym(rng: &mut impl Rng, dim: usize, eig_scale: f64, nonneg: bool) -> SymMat {
    let lambda: Vec<f64> = (0..dim)
        .map(|_| log_uniform_eig(rng, eig_scale, nonneg))
        .collect();
    let q = random_orthogonal(rng, dim);
    conjugate_diag(dim, &lambda, &q)
}

/// Row-major orthogonal matrix from Gram-Schmidt on standard normals.
pub fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut ok = true;
        for _ in 0..dim {
            let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= dot * ci;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            cols.push(v);
        }
        if ok {
            let mut q = vec![0.0; dim * dim];
            for (c, col) in cols.iter().enumerate() {
                for r in 0..dim {
                    q[r * dim + c] = col[r];
                }
            }
            return q;
        }
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; cheap and dependency-free.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn conjugate_diag(dim: usize, lambda: &[f64], q: &[f64]) -> SymMat {
    let mut m = SymMat::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            let mut s = 0.0;
            for k in 0..dim {
                s += q[i * dim + k] * lambda[k] * q[j * dim + k];
            }
            m.set(i, j, s);
        }
    }
    m
}

/// A random element `(s, P)` of the monotonicity cone `Q = N x P`
/// (`s <= 0`, `P >= 0`), at the given scale.
pub fn random_q_translate(rng: &mut impl Rng, dim: usize, scale: f64) -> Jet {
    let s = -rng.random_range(0.0..=scale);
    let p = random_sym(rng, dim, scale, true);
    Jet::new(s, p)
}

/// Deterministic sub-seed derivation (splitmix64 over a tag chain), so
/// parallel batches reproduce regardless of scheduling.
pub fn subseed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    for &t in tags {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

pub fn rng_for(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(master, tags))
}

/// Radical-inverse Halton point, index `i`, in `[0,1]^dim`.
pub fn halton(i: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut n = i + 1;
            while n > 0 {
                f /= base as f64;
                r += f * (n % base) as f64;
                n /= base;
            }
            r
        })
        .collect()
}
