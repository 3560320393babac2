//! Grid functions on uniform tensor grids and discrete 2-jets.
//!
//! Viscosity-level checks are performed on twice-differentiable or
//! semiconvex grid samples: for such functions the classical and weak
//! notions coincide, so the discrete jet `(u(x), D^2_h u(x))` is the
//! faithful test object. A grid pass certifies necessary conditions of the
//! continuum statement on the sampled nodes; it is evidence, not proof,
//! and every report header states this.

mod checks;

pub use checks::*;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::jets::SymMat;
use crate::map::BoxDomain;
use crate::Result;

/// Real values on a uniform tensor grid over a box, row-major with the
/// last axis fastest.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub domain: BoxDomain,
    pub resolution: Vec<usize>,
    pub values: Vec<f64>,
}

/// Discrete 2-jet at a grid node: the value and the central-difference
/// Hessian (mixed terms by the standard 4-point cross). Exact for
/// quadratics.
#[derive(Debug, Clone)]
pub struct DiscreteJet {
    pub node: usize,
    pub value: f64,
    pub hessian: SymMat,
}

impl GridFunction {
    pub fn new(domain: BoxDomain, resolution: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: resolution.len(),
            });
        }
        if resolution.iter().any(|r| *r < 2) {
            return Err(Error::invalid("grid needs at least 2 nodes per axis"));
        }
        let n: usize = resolution.iter().product();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        Ok(GridFunction {
            domain,
            resolution,
            values,
        })
    }

    pub fn from_fn(
        domain: BoxDomain,
        resolution: Vec<usize>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let n: usize = resolution.iter().product();
        let proto = GridFunction {
            domain: domain.clone(),
            resolution: resolution.clone(),
            values: vec![0.0; n],
        };
        let mut values = Vec::with_capacity(n);
        for node in 0..n {
            values.push(f(&proto.coords(node)));
        }
        GridFunction::new(domain, resolution, values)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.domain.upper[axis] - self.domain.lower[axis]) / (self.resolution[axis] - 1) as f64
    }

    pub fn max_step(&self) -> f64 {
        (0..self.dim()).map(|a| self.step(a)).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.resolution[k + 1];
        }
        s
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut rem = node;
        strides
            .iter()
            .map(|s| {
                let i = rem / s;
                rem %= s;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(a, i)| self.domain.lower[a] + *i as f64 * self.step(a))
            .collect()
    }

    /// True when the node sits on a face of the box.
    pub fn is_boundary(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.resolution)
            .any(|(i, r)| *i == 0 || *i == r - 1)
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|n| self.is_boundary(*n))
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|n| !self.is_boundary(*n))
    }

    /// Central-difference discrete jet. The node must be interior so the
    /// full stencil exists.
    pub fn discrete_jet(&self, node: usize) -> Result<DiscreteJet> {
        if self.is_boundary(node) {
            return Err(Error::invalid(format!(
                "discrete jet requires an interior node, got boundary node {node}"
            )));
        }
        let d = self.dim();
        let strides = self.strides();
        let mut hess = SymMat::zeros(d);
        let u0 = self.values[node];
        for i in 0..d {
            let hi = self.step(i);
            let up = self.values[node + strides[i]];
            let dn = self.values[node - strides[i]];
            hess.set(i, i, (up - 2.0 * u0 + dn) / (hi * hi));
            for j in (i + 1)..d {
                let hj = self.step(j);
                let pp = self.values[node + strides[i] + strides[j]];
                let pm = self.values[node + strides[i] - strides[j]];
                let mp = self.values[node - strides[i] + strides[j]];
                let mm = self.values[node - strides[i] - strides[j]];
                hess.set(i, j, (pp - pm - mp + mm) / (4.0 * hi * hj));
            }
        }
        Ok(DiscreteJet {
            node,
            value: u0,
            hessian: hess,
        })
    }

    /// Multilinear interpolation; coordinates are clamped to the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let h = self.step(a);
            let t = ((x[a] - self.domain.lower[a]) / h).clamp(0.0, (self.resolution[a] - 1) as f64);
            let i = (t.floor() as usize).min(self.resolution[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let strides = self.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut node = 0usize;
            for a in 0..d {
                if corner & (1 << a) != 0 {
                    w *= frac[a];
                    node += (base[a] + 1) * strides[a];
                } else {
                    w *= 1.0 - frac[a];
                    node += base[a] * strides[a];
                }
            }
            acc += w * self.values[node];
        }
        acc
    }

    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> GridFunction {
        GridFunction {
            domain: self.domain.clone(),
            resolution: self.resolution.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_values(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        if self.resolution != other.resolution {
            return Err(Error::invalid("grid resolutions differ"));
        }
        Ok(GridFunction {
            domain: self.domain.clone(),
            resolution: self.resolution.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let file = GridFile {
            dims: self.dim(),
            lower: self.domain.lower.clone(),
            upper: self.domain.upper.clone(),
            resolution: self.resolution.clone(),
            values: None,
            values_b64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("grid file: {e}")))?;
        let values = match (&file.values, &file.values_b64) {
            (Some(v), _) => v.clone(),
            (None, Some(b64)) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|e| Error::Parse(format!("grid values_b64: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::Parse("values_b64 length not a multiple of 8".into()));
                }
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            }
            (None, None) => {
                return Err(Error::Parse("grid file missing values / values_b64".into()))
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("grid contains non-finite values".into()));
        }
        let domain = BoxDomain::new(file.lower, file.upper)?;
        GridFunction::new(domain, file.resolution, values)
    }
}

/// On-disk format: JSON header plus a row-major float64 array, either
/// plain (`values`) or base64 little-endian (`values_b64`).
#[derive(Debug, Serialize, Deserialize)]
struct GridFile {
    dims: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values_b64: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_grid() -> GridFunction {
        let dom = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        GridFunction::from_fn(dom, vec![33, 33], |x| 0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap()
    }

    #[test]
    fn discrete_jet_exact_for_quadratics() {
        let u = quad_grid();
        for node in u.interior_nodes() {
            let j = u.discrete_jet(node).unwrap();
            assert!((j.hessian.get(0, 0) - 1.0).abs() < 1e-10);
            assert!((j.hessian.get(1, 1) - 1.0).abs() < 1e-10);
            assert!(j.hessian.get(0, 1).abs() < 1e-10);
        }
    }

    #[test]
    fn discrete_jet_zero_for_affine() {
        let dom = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let u = GridFunction::from_fn(dom, vec![9, 9], |x| 3.0 * x[0] - 2.0 * x[1] + 1.0).unwrap();
        for node in u.interior_nodes() {
            let j = u.discrete_jet(node).unwrap();
            for i in 0..2 {
                for k in 0..2 {
                    assert!(j.hessian.get(i, k).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn discrete_jet_cubic_mixed_term() {
        // u = x^2 y has Hessian [[2y, 2x], [2x, 0]].
        let dom = BoxDomain::unit(2);
        let u = GridFunction::from_fn(dom, vec![65, 65], |x| x[0] * x[0] * x[1]).unwrap();
        for node in u.interior_nodes() {
            let x = u.coords(node);
            let j = u.discrete_jet(node).unwrap();
            assert!((j.hessian.get(0, 0) - 2.0 * x[1]).abs() < 1e-3);
            assert!((j.hessian.get(0, 1) - 2.0 * x[0]).abs() < 1e-3);
            assert!(j.hessian.get(1, 1).abs() < 1e-3);
        }
    }

    #[test]
    fn boundary_node_rejected() {
        let u = quad_grid();
        assert!(u.discrete_jet(0).is_err());
    }

    #[test]
    fn json_roundtrip_bit_exact() {
        let u = quad_grid();
        let text = u.to_json().unwrap();
        let v = GridFunction::from_json(&text).unwrap();
        assert_eq!(u.values, v.values);
        assert_eq!(u.resolution, v.resolution);
        // Determinism: the encoder is a pure function of the content.
        assert_eq!(text, v.to_json().unwrap());
    }

    #[test]
    fn json_plain_values_accepted_and_nan_rejected() {
        let text =
            r#"{"dims":1,"lower":[0.0],"upper":[1.0],"resolution":[3],"values":[0.0,0.5,1.0]}"#;
        let u = GridFunction::from_json(text).unwrap();
        assert_eq!(u.values, vec![0.0, 0.5, 1.0]);
        let bad =
            r#"{"dims":1,"lower":[0.0],"upper":[1.0],"resolution":[3],"values":[0.0,null,1.0]}"#;
        assert!(GridFunction::from_json(bad).is_err());
    }

    #[test]
    fn interpolation_matches_nodes_and_is_linear() {
        let u = quad_grid();
        for node in [0usize, 17, 33 * 16 + 5] {
            let x = u.coords(node);
            assert!((u.interpolate(&x) - u.values[node]).abs() < 1e-12);
        }
        let dom = BoxDomain::unit(1);
        let lin = GridFunction::from_fn(dom, vec![5], |x| 2.0 * x[0] - 0.3).unwrap();
        assert!((lin.interpolate(&[0.37]) - (2.0 * 0.37 - 0.3)).abs() < 1e-12);
    }
}
