//! Single-fiber set algebra.
//!
//! A constraint set is the closed region `{ (r, A) : g(r, A) >= 0 }` of a
//! continuous defining function. Sets are represented only through `g`,
//! never through point clouds: the sets in scope are unbounded, and the
//! defining-function view turns the Dirichlet dual into the one-line
//! reflection `g~(j) = -g(-j)`. Closure subtleties between `{g >= 0}` and
//! the closure of `{g > 0}` are absorbed into the boundary tolerance band.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::jets::Jet;
use crate::sampling::{random_q_translate, rng_for, SampleBox};
use crate::Result;

/// Default tolerance (in `g`-units) separating Inside / Boundary / Outside.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;
/// Identity checks use a band this many times wider than `boundary_tol`.
pub const IDENTITY_BAND: f64 = 10.0;

pub type DefiningFn = Arc<dyn Fn(&Jet) -> f64 + Send + Sync>;

/// One fiber `Theta = { g >= 0 }` with membership tolerance and hints.
#[derive(Clone)]
pub struct ConstraintSet {
    dim: usize,
    g: DefiningFn,
    /// Verdict band: Inside iff `g > tol`, Outside iff `g < -tol`.
    pub boundary_tol: f64,
    /// Declared Q-monotonicity; `check_q_monotone` must pass when set.
    pub q_monotone_declared: bool,
    /// Marks the improper all-of-jet-space sentinel.
    pub improper: bool,
    pub label: String,
}

impl std::fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("boundary_tol", &self.boundary_tol)
            .field("improper", &self.improper)
            .finish()
    }
}

/// Three-way membership with the signed margin that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub region: Region,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Inside,
    Boundary,
    Outside,
}

impl MembershipVerdict {
    #[inline]
    pub fn in_set(&self) -> bool {
        self.region != Region::Outside
    }
}

/// The built-in canonical sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalKind {
    /// `Q = N x P`: `r <= 0` and `A >= 0`.
    Q,
    /// The dual `Q~`: `r <= 0` or `lambda_N(A) >= 0`.
    Qdual,
    /// The positive cone, ignoring `r`.
    PCone,
    /// All of jet space; improper, used as the unconstrained sentinel.
    FullJ,
}

impl ConstraintSet {
    pub fn new(dim: usize, label: impl Into<String>, g: DefiningFn) -> Self {
        ConstraintSet {
            dim,
            g,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            q_monotone_declared: false,
            improper: false,
            label: label.into(),
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.boundary_tol = tol;
        self
    }

    pub fn declare_q_monotone(mut self) -> Self {
        self.q_monotone_declared = true;
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw defining-function value.
    #[inline]
    pub fn margin(&self, jet: &Jet) -> f64 {
        (self.g)(jet)
    }

    /// Membership with the default tolerance band.
    pub fn membership(&self, jet: &Jet) -> Result<MembershipVerdict> {
        self.membership_with_tol(jet, self.boundary_tol)
    }

    /// Membership with an explicit band (identity checks widen it).
    pub fn membership_with_tol(&self, jet: &Jet, tol: f64) -> Result<MembershipVerdict> {
        if jet.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: jet.dim(),
            });
        }
        let margin = (self.g)(jet);
        if !margin.is_finite() {
            return Err(Error::Evaluation { jet: jet.summary() });
        }
        let region = if margin > tol {
            Region::Inside
        } else if margin < -tol {
            Region::Outside
        } else {
            Region::Boundary
        };
        Ok(MembershipVerdict { region, margin })
    }

    /// The Dirichlet dual `-[interior]^complement`, realized as the
    /// reflection `g~(r, A) = -g(-r, -A)`.
    pub fn dual(&self) -> ConstraintSet {
        let g = self.g.clone();
        ConstraintSet {
            dim: self.dim,
            g: Arc::new(move |jet: &Jet| -(g)(&jet.neg())),
            boundary_tol: self.boundary_tol,
            q_monotone_declared: self.q_monotone_declared,
            improper: self.improper,
            label: format!("{}~", self.label),
        }
    }

    pub fn canonical(kind: CanonicalKind, dim: usize) -> ConstraintSet {
        match kind {
            CanonicalKind::Q => {
                ConstraintSet::new(dim, "Q", Arc::new(|j: &Jet| (-j.r).min(j.a.lambda_min())))
                    .declare_q_monotone()
            }
            CanonicalKind::Qdual => {
                ConstraintSet::new(dim, "Q~", Arc::new(|j: &Jet| (-j.r).max(j.a.lambda_max())))
                    .declare_q_monotone()
            }
            CanonicalKind::PCone => {
                ConstraintSet::new(dim, "P", Arc::new(|j: &Jet| j.a.lambda_min()))
                    .declare_q_monotone()
            }
            CanonicalKind::FullJ => {
                let mut s = ConstraintSet::new(dim, "J", Arc::new(|_: &Jet| 1.0));
                s.improper = true;
                s.q_monotone_declared = true;
                s
            }
        }
    }

    /// Walks `jet + t(-1, I)` to the first `t >= 0` that is not Outside.
    /// Returns `None` if the ray never enters within the growth cap.
    pub fn project_into(&self, jet: &Jet) -> Option<Jet> {
        let v = self.membership(jet).ok()?;
        if v.in_set() {
            return Some(jet.clone());
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64.max(jet.norm() * 1e-3);
        let t_cap = 1e9 * (1.0 + jet.norm());
        let mut entered = false;
        while hi <= t_cap {
            let v = self.membership(&jet.translate_ray(hi)).ok()?;
            if v.in_set() {
                entered = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if !entered {
            return None;
        }
        for _ in 0..52 {
            let mid = 0.5 * (lo + hi);
            let v = self.membership(&jet.translate_ray(mid)).ok()?;
            if v.in_set() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(jet.translate_ray(hi))
    }

    /// Walks the monotone ray from `jet` to a point with near-zero margin
    /// (the numerical boundary). The defining functions of all built-in
    /// sets are non-decreasing along `(-1, I)`, so bisection applies.
    pub fn project_to_boundary(&self, jet: &Jet) -> Option<Jet> {
        let v = self.membership(jet).ok()?;
        if v.region == Region::Boundary {
            return Some(jet.clone());
        }
        // Bracket a sign flip of the verdict along the ray; the travel
        // distance scales with the jet magnitude.
        let t_cap = 1e9 * (1.0 + jet.norm());
        let (mut t_out, mut t_in) = if v.in_set() {
            let mut t = -(1.0_f64.max(jet.norm() * 1e-3));
            loop {
                let w = self.membership(&jet.translate_ray(t)).ok()?;
                if !w.in_set() {
                    break (t, 0.0);
                }
                t *= 2.0;
                if t < -t_cap {
                    return None;
                }
            }
        } else {
            let mut t = 1.0_f64.max(jet.norm() * 1e-3);
            loop {
                let w = self.membership(&jet.translate_ray(t)).ok()?;
                if w.in_set() {
                    break (0.0, t);
                }
                t *= 2.0;
                if t > t_cap {
                    return None;
                }
            }
        };
        for _ in 0..52 {
            let mid = 0.5 * (t_out + t_in);
            let w = self.membership(&jet.translate_ray(mid)).ok()?;
            if w.in_set() {
                t_in = mid;
            } else {
                t_out = mid;
            }
        }
        Some(jet.translate_ray(t_in))
    }
}

/// Outcome of a sampled check, carrying a replayable counterexample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub pass: bool,
    pub samples: usize,
    /// `(jet, translate)` with the jet in the set and the translated jet
    /// Outside beyond tolerance.
    pub counterexample: Option<(Jet, Jet)>,
}

/// Checks `Theta + Q subset Theta` on a sample batch: translates of
/// members by cone elements must not land Outside.
pub fn check_q_monotone(set: &ConstraintSet, sample: &SampleBox) -> Result<MonotoneReport> {
    let mut rng = rng_for(sample.seed, &[0x71]);
    let mut tested = 0usize;
    for jet in sample.stream(set.dim())? {
        let candidate = match set.project_into(&jet) {
            Some(j) => j,
            None => continue,
        };
        let v = set.membership(&candidate)?;
        if !v.in_set() {
            continue;
        }
        tested += 1;
        let q = random_q_translate(&mut rng, set.dim(), sample.eig_scale);
        let moved = Jet::new(candidate.r + q.r, candidate.a.add(&q.a));
        let w = set.membership_with_tol(&moved, IDENTITY_BAND * set.boundary_tol)?;
        if !w.in_set() {
            return Ok(MonotoneReport {
                pass: false,
                samples: tested,
                counterexample: Some((candidate, q)),
            });
        }
    }
    Ok(MonotoneReport {
        pass: true,
        samples: tested,
        counterexample: None,
    })
}

/// Report of the sampled duality identities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    /// Members of the set plus members of the dual always land in `Q~`.
    pub sum_of_duals_ok: bool,
    /// Boundary verdicts coincide with membership in both the set and the
    /// negated dual, inside the widened band.
    pub boundary_identity_ok: bool,
    /// Double dual agrees with the set away from the boundary band.
    pub double_dual_ok: bool,
    pub samples: usize,
    pub violation: Option<(String, Jet)>,
}

impl DualityReport {
    pub fn pass(&self) -> bool {
        self.sum_of_duals_ok && self.boundary_identity_ok && self.double_dual_ok
    }
}

/// Verifies the three pointwise duality identities on random samples:
/// sum of duals, the boundary decomposition, and double duality.
pub fn check_duality_identities(set: &ConstraintSet, sample: &SampleBox) -> Result<DualityReport> {
    let dim = set.dim();
    let dual = set.dual();
    let double = dual.dual();
    let qdual = ConstraintSet::canonical(CanonicalKind::Qdual, dim);
    let band = IDENTITY_BAND * set.boundary_tol;

    let mut report = DualityReport {
        sum_of_duals_ok: true,
        boundary_identity_ok: true,
        double_dual_ok: true,
        samples: 0,
        violation: None,
    };

    let mut pair_stream = SampleBox {
        seed: sample.seed ^ 0x5d,
        ..sample.clone()
    }
    .stream(dim)?;

    for jet in sample.stream(dim)? {
        report.samples += 1;

        // (i) sum of duals: j1 in Theta, j2 in Theta~ => j1 + j2 in Q~.
        if let (Some(j1), Some(raw2)) = (set.project_into(&jet), pair_stream.next()) {
            if let Some(j2) = dual.project_into(&raw2) {
                let sum = j1.add(&j2);
                let w = qdual.membership_with_tol(&sum, band)?;
                if !w.in_set() {
                    report.sum_of_duals_ok = false;
                    report.violation.get_or_insert(("sum_of_duals".into(), sum));
                }
            }
        }

        // (ii) boundary identity within the widened band.
        let v = set.membership_with_tol(&jet, band)?;
        let in_set = v.in_set();
        // Membership in -Theta~ evaluated at j is dual membership at -j.
        let in_neg_dual = dual.membership_with_tol(&jet.neg(), band)?.in_set();
        let lhs = v.region == Region::Boundary;
        let rhs = in_set && in_neg_dual;
        if lhs != rhs {
            report.boundary_identity_ok = false;
            report
                .violation
                .get_or_insert(("boundary_identity".into(), jet.clone()));
        }

        // (iii) double dual agreement away from the boundary band.
        if v.margin.abs() > band {
            let w = double.membership(&jet)?;
            let orig = set.membership(&jet)?;
            if w.region != orig.region {
                report.double_dual_ok = false;
                report
                    .violation
                    .get_or_insert(("double_dual".into(), jet.clone()));
            }
        }
    }
    Ok(report)
}
