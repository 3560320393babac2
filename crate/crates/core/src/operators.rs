//! Built-in gradient-free operators `F(x, r, A)` with admissibility
//! constraints, and sampled certification of the structural conditions
//! that make the constraint-map machinery applicable:
//!
//! * properness/ellipticity of `F` restricted to the constraint (PEP),
//! * a zero of `F` inside each constraint fiber (PB1),
//! * `F <= 0` on the constraint boundary (PB2, constrained case),
//! * non-degeneracy `F > 0` on the interior of the induced branch (NDC),
//! * a negative value somewhere (properness of the branch, unconstrained
//!   case),
//! * the translation regularity `F(y, r - eta, A + eta I) >= F(x, r, A)`
//!   for `|x - y| < delta(eta)` (RC).
//!
//! Coefficients are grids with multilinear interpolation rather than
//! closures, so operator specs are serializable and CLI-loadable;
//! analytic coefficients are sampled onto the grid at load.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{CanonicalKind, ConstraintSet, MembershipVerdict, Region};
use crate::error::Error;
use crate::grid::GridFunction;
use crate::jets::{Jet, SymMat};
use crate::map::{
    member_jets, BoxDomain, ContinuityCertificate, JetMap, JetMode, SearchBudget, SearchEngine,
};
use crate::sampling::{random_q_translate, rng_for};
use crate::Result;

/// Absolute floor for the strict-positivity side of non-degeneracy.
const F_STRICT_TOL: f64 = 1e-12;
/// Depth of the translate-based interior test on branch fibers.
const INTERIOR_DEPTH: f64 = 0.1;

fn f_tol(value: f64) -> f64 {
    1e-9 * (1.0 + value.abs())
}

/// Scalar coefficient field: grid values plus multilinear interpolation.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: GridFunction,
}

impl ScalarField {
    pub fn from_grid(grid: GridFunction) -> Self {
        ScalarField { grid }
    }

    pub fn sample(
        domain: &BoxDomain,
        resolution: &[usize],
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        Ok(ScalarField {
            grid: GridFunction::from_fn(domain.clone(), resolution.to_vec(), f)?,
        })
    }

    pub fn constant(domain: &BoxDomain, value: f64) -> Self {
        let res = vec![2usize; domain.dim()];
        ScalarField {
            grid: GridFunction::from_fn(domain.clone(), res, |_| value).unwrap(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(x)
    }

    pub fn min_value(&self) -> f64 {
        self.grid
            .values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.grid
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }
}

/// Symmetric-matrix coefficient field, one scalar grid per upper-triangle
/// slot.
#[derive(Debug, Clone)]
pub struct MatrixField {
    n: usize,
    channels: Vec<GridFunction>,
}

impl MatrixField {
    pub fn sample(
        domain: &BoxDomain,
        resolution: &[usize],
        n: usize,
        f: impl Fn(&[f64]) -> SymMat,
    ) -> Result<Self> {
        let nn = n * (n + 1) / 2;
        let mut channels = Vec::with_capacity(nn);
        for c in 0..nn {
            channels.push(GridFunction::from_fn(
                domain.clone(),
                resolution.to_vec(),
                |x| f(x).upper()[c],
            )?);
        }
        Ok(MatrixField { n, channels })
    }

    pub fn eval(&self, x: &[f64]) -> SymMat {
        let upper: Vec<f64> = self.channels.iter().map(|g| g.interpolate(x)).collect();
        SymMat::from_upper(self.n, &upper).unwrap()
    }
}

/// Monotone 1-D profile table with linear interpolation and end-slope
/// extrapolation; must be strictly increasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GProfile {
    knots_t: Vec<f64>,
    knots_g: Vec<f64>,
}

impl GProfile {
    pub fn from_table(knots_t: Vec<f64>, knots_g: Vec<f64>) -> Result<Self> {
        if knots_t.len() != knots_g.len() || knots_t.len() < 2 {
            return Err(Error::invalid("g profile needs >= 2 aligned knots"));
        }
        for w in knots_t.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid("g profile abscissae must increase"));
            }
        }
        for w in knots_g.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid(
                    "g profile must be strictly increasing (monotonicity of the zeroth-order factor)",
                ));
            }
        }
        Ok(GProfile { knots_t, knots_g })
    }

    pub fn identity(range: (f64, f64)) -> Self {
        GProfile {
            knots_t: vec![range.0, range.1],
            knots_g: vec![range.0, range.1],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots_t.len();
        let seg = if t <= self.knots_t[0] {
            0
        } else if t >= self.knots_t[n - 1] {
            n - 2
        } else {
            self.knots_t.partition_point(|k| *k <= t) - 1
        };
        let (t0, t1) = (self.knots_t[seg], self.knots_t[seg + 1]);
        let (g0, g1) = (self.knots_g[seg], self.knots_g[seg + 1]);
        g0 + (t - t0) * (g1 - g0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `(-r)^(N+2) det(A) = h(x)` on the cone `Q`.
    HyperbolicAffineSphere,
    /// `(-r) det(A) = h(x)` on the cone `Q`.
    MongeAmpere,
    /// `g(m(x) - r) det(A + M(x)) = h(x)` on the shifted cone.
    PerturbedMongeAmpere,
    /// `sum arctan(lambda_i(A)) = h(x)`, unconstrained.
    SpecialLagrangian,
    /// `tr(A) - c(x) r = 0`, unconstrained.
    LinearTrace,
    /// User-supplied evaluation; not serializable.
    Custom,
}

type EvalFn = Arc<dyn Fn(&[f64], &Jet) -> f64 + Send + Sync>;
type AnchorFn = Arc<dyn Fn(&[f64]) -> Jet + Send + Sync>;

/// A gradient-free operator together with its admissibility constraint
/// map and a canonical constraint-extreme jet used to seed searches.
#[derive(Clone)]
pub struct OperatorSpec {
    pub dim: usize,
    pub kind: OperatorKind,
    pub label: String,
    pub domain: BoxDomain,
    pub constrained: bool,
    eval: EvalFn,
    phi: JetMap,
    anchor: AnchorFn,
}

impl std::fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("constrained", &self.constrained)
            .finish()
    }
}

impl OperatorSpec {
    pub fn eval(&self, x: &[f64], jet: &Jet) -> f64 {
        (self.eval)(x, jet)
    }

    pub fn phi(&self) -> &JetMap {
        &self.phi
    }

    pub fn anchor(&self, x: &[f64]) -> Jet {
        (self.anchor)(x)
    }

    /// Fully custom operator; `phi = None` means unconstrained.
    pub fn custom(
        domain: BoxDomain,
        dim: usize,
        label: impl Into<String>,
        eval: EvalFn,
        phi: Option<JetMap>,
    ) -> Self {
        let constrained = phi.is_some();
        let phi = phi.unwrap_or_else(|| {
            JetMap::constant(
                domain.clone(),
                ConstraintSet::canonical(CanonicalKind::FullJ, dim),
            )
        });
        OperatorSpec {
            dim,
            kind: OperatorKind::Custom,
            label: label.into(),
            domain,
            constrained,
            eval,
            phi,
            anchor: Arc::new(move |_| Jet::zero(dim)),
        }
    }

    /// `(-r)^(N+2) det A - h(x)` constrained to `Q`. A sign-violating `h`
    /// is not a construction error: it surfaces as a PB1 refutation.
    pub fn hyperbolic_affine_sphere(domain: BoxDomain, dim: usize, h: ScalarField) -> Self {
        let power = (dim + 2) as i32;
        let h2 = h.clone();
        OperatorSpec {
            dim,
            kind: OperatorKind::HyperbolicAffineSphere,
            label: "hyperbolic_affine_sphere".into(),
            domain: domain.clone(),
            constrained: true,
            eval: Arc::new(move |x: &[f64], j: &Jet| (-j.r).powi(power) * j.a.det() - h2.eval(x)),
            phi: JetMap::constant(domain, ConstraintSet::canonical(CanonicalKind::Q, dim)),
            anchor: Arc::new(move |_| Jet::zero(dim)),
        }
    }

    /// `(-r) det A - h(x)` constrained to `Q`.
    pub fn monge_ampere(domain: BoxDomain, dim: usize, h: ScalarField) -> Self {
        let h2 = h.clone();
        OperatorSpec {
            dim,
            kind: OperatorKind::MongeAmpere,
            label: "monge_ampere".into(),
            domain: domain.clone(),
            constrained: true,
            eval: Arc::new(move |x: &[f64], j: &Jet| (-j.r) * j.a.det() - h2.eval(x)),
            phi: JetMap::constant(domain, ConstraintSet::canonical(CanonicalKind::Q, dim)),
            anchor: Arc::new(move |_| Jet::zero(dim)),
        }
    }

    /// `g(m(x) - r) det(A + M(x)) - h(x)` constrained to the shifted cone
    /// `{ r <= m(x) - r0, A >= -M(x) }`. Requires `g` strictly increasing
    /// with `g(r0) = 0`.
    pub fn perturbed_monge_ampere(
        domain: BoxDomain,
        dim: usize,
        g: GProfile,
        r0: f64,
        m: ScalarField,
        m_mat: MatrixField,
        h: ScalarField,
    ) -> Result<Self> {
        let g_at_r0 = g.eval(r0);
        if g_at_r0.abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "g profile must vanish at r0 = {r0}: g(r0) = {g_at_r0}"
            )));
        }
        let (ge, me, mme, he) = (g.clone(), m.clone(), m_mat.clone(), h.clone());
        let (mp, mmp) = (m.clone(), m_mat.clone());
        let (ma, mma) = (m, m_mat);
        Ok(OperatorSpec {
            dim,
            kind: OperatorKind::PerturbedMongeAmpere,
            label: "perturbed_monge_ampere".into(),
            domain: domain.clone(),
            constrained: true,
            eval: Arc::new(move |x: &[f64], j: &Jet| {
                ge.eval(me.eval(x) - j.r) * j.a.add(&mme.eval(x)).det() - he.eval(x)
            }),
            phi: JetMap::new(
                domain,
                "Phi(gmae)",
                Arc::new(move |x: &[f64]| {
                    let cap = mp.eval(x) - r0;
                    let shift = mmp.eval(x);
                    ConstraintSet::new(
                        dim,
                        "gmae-phi",
                        Arc::new(move |j: &Jet| (cap - j.r).min(j.a.add(&shift).lambda_min())),
                    )
                    .declare_q_monotone()
                }),
            ),
            anchor: Arc::new(move |x: &[f64]| Jet::new(ma.eval(x) - r0, mma.eval(x).neg())),
        })
    }

    /// `sum arctan(lambda_i(A)) - h(x)`, unconstrained; `h` must take
    /// values strictly inside the phase range `(-N*pi/2, N*pi/2)`.
    pub fn special_lagrangian(domain: BoxDomain, dim: usize, h: ScalarField) -> Result<Self> {
        let cap = dim as f64 * std::f64::consts::FRAC_PI_2;
        if h.min_value() <= -cap || h.max_value() >= cap {
            return Err(Error::invalid(
                "phase values must lie strictly inside (-N*pi/2, N*pi/2)",
            ));
        }
        let h2 = h.clone();
        Ok(OperatorSpec {
            dim,
            kind: OperatorKind::SpecialLagrangian,
            label: "special_lagrangian".into(),
            domain: domain.clone(),
            constrained: false,
            eval: Arc::new(move |x: &[f64], j: &Jet| {
                j.a.eigenvalues().iter().map(|l| l.atan()).sum::<f64>() - h2.eval(x)
            }),
            phi: JetMap::constant(domain, ConstraintSet::canonical(CanonicalKind::FullJ, dim)),
            anchor: Arc::new(move |_| Jet::zero(dim)),
        })
    }

    /// `tr(A) - c(x) r`, unconstrained.
    pub fn linear_trace(domain: BoxDomain, dim: usize, c: ScalarField) -> Self {
        let c2 = c.clone();
        OperatorSpec {
            dim,
            kind: OperatorKind::LinearTrace,
            label: "linear_trace".into(),
            domain: domain.clone(),
            constrained: false,
            eval: Arc::new(move |x: &[f64], j: &Jet| j.a.trace() - c2.eval(x) * j.r),
            phi: JetMap::constant(domain, ConstraintSet::canonical(CanonicalKind::FullJ, dim)),
            anchor: Arc::new(move |_| Jet::zero(dim)),
        }
    }

    /// The branch map `Theta(x) = {(r, A) in Phi(x): F(x, r, A) >= 0}`,
    /// realized as `min(g_Phi, F)` in the constrained case and `F` alone
    /// in the unconstrained one.
    pub fn theta_from_pair(&self) -> JetMap {
        let eval = self.eval.clone();
        let label = format!("Theta({})", self.label);
        if self.constrained {
            let phi = self.phi.clone();
            JetMap::new(
                self.domain.clone(),
                label,
                Arc::new(move |x: &[f64]| {
                    let fiber = phi.fiber(x);
                    let eval = eval.clone();
                    let xv = x.to_vec();
                    ConstraintSet::new(
                        fiber.dim(),
                        "theta-fiber",
                        Arc::new(move |j: &Jet| fiber.margin(j).min(eval(&xv, j))),
                    )
                    .declare_q_monotone()
                }),
            )
        } else {
            let dim = self.dim;
            JetMap::new(
                self.domain.clone(),
                label,
                Arc::new(move |x: &[f64]| {
                    let eval = eval.clone();
                    let xv = x.to_vec();
                    ConstraintSet::new(dim, "theta-fiber", Arc::new(move |j: &Jet| eval(&xv, j)))
                        .declare_q_monotone()
                }),
            )
        }
    }
}

/// Admissibility flags of one jet at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibleVerdict {
    /// `F >= 0` and the jet lies in the constraint fiber.
    pub sub: bool,
    /// `F <= 0` or the jet misses the constraint interior.
    pub sup: bool,
    pub f_value: f64,
    pub phi_verdict: MembershipVerdict,
}

/// Classifies a jet per the admissible sub/supersolution definition.
pub fn classify_jet(op: &OperatorSpec, x: &[f64], jet: &Jet) -> Result<AdmissibleVerdict> {
    if !op.domain.contains(x) {
        return Err(Error::invalid("classification point outside the domain"));
    }
    let f_value = op.eval(x, jet);
    let phi_verdict = op.phi.fiber(x).membership(jet)?;
    let tol = f_tol(f_value);
    Ok(AdmissibleVerdict {
        sub: f_value >= -tol && phi_verdict.in_set(),
        sup: f_value <= tol || phi_verdict.region != Region::Inside,
        f_value,
        phi_verdict,
    })
}

/// One sampled structural condition with a replayable witness on failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionResult {
    pub pass: bool,
    pub samples: usize,
    pub witness: Option<PairWitness>,
}

impl ConditionResult {
    fn pass(samples: usize) -> Self {
        ConditionResult {
            pass: true,
            samples,
            witness: None,
        }
    }

    fn fail(samples: usize, witness: PairWitness) -> Self {
        ConditionResult {
            pass: false,
            samples,
            witness: Some(witness),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairWitness {
    pub x: Vec<f64>,
    pub jet: Jet,
    pub translate: Option<Jet>,
    pub value: f64,
    pub detail: String,
}

/// Verdicts for the fiberwise hypotheses of the branch construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCertificate {
    pub label: String,
    pub constrained: bool,
    /// Properness/ellipticity of `F` on the constraint.
    pub pep: ConditionResult,
    /// A zero of `F` inside each constraint fiber.
    pub pb1: ConditionResult,
    /// `F <= 0` on the constraint boundary (constrained case).
    pub pb2: Option<ConditionResult>,
    /// `F > 0` on the interior of the branch fibers.
    pub ndc: ConditionResult,
    /// `F < 0` somewhere (unconstrained case).
    pub f_uc: Option<ConditionResult>,
    pub budget: SearchBudget,
}

impl PairCertificate {
    pub fn pass(&self) -> bool {
        self.pep.pass
            && self.pb1.pass
            && self.pb2.as_ref().is_none_or(|c| c.pass)
            && self.ndc.pass
            && self.f_uc.as_ref().is_none_or(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn region_points(region: &BoxDomain, count: usize) -> Vec<Vec<f64>> {
    let mut pts = region.corners();
    for i in 0..count.saturating_sub(pts.len()) {
        pts.push(region.halton_point(i));
    }
    pts.truncate(count.max(1));
    pts
}

/// Sampled verification of PEP, PB1, PB2, NDC and the unconstrained
/// properness condition. Negative findings are witnesses, not errors.
pub fn certify_pair(
    op: &OperatorSpec,
    region: &BoxDomain,
    budget: &SearchBudget,
) -> Result<PairCertificate> {
    if !op.domain.contains_box(region) {
        return Err(Error::invalid("region must be contained in the domain"));
    }
    let x_points = region_points(region, budget.pairs_per_cell.max(4));
    let theta = op.theta_from_pair();

    let mut pep = ConditionResult::pass(0);
    let mut pb1 = ConditionResult::pass(0);
    let mut pb2 = ConditionResult::pass(0);
    let mut ndc = ConditionResult::pass(0);
    let mut f_uc = ConditionResult::pass(0);

    for (xi, x) in x_points.iter().enumerate() {
        let mut rng = rng_for(budget.seed, &[0xcf, xi as u64]);
        let phi_fiber = op.phi.fiber(x);
        let theta_fiber = theta.fiber(x);

        // PEP: cone translates never decrease F on constraint members.
        if pep.pass {
            let jets = member_jets(&phi_fiber, budget, JetMode::Full, &mut rng);
            for jet in &jets {
                pep.samples += 1;
                let f0 = op.eval(x, jet);
                let q = random_q_translate(&mut rng, op.dim, budget.jet_box.eig_scale.min(10.0));
                let moved = Jet::new(jet.r + q.r, jet.a.add(&q.a));
                let f1 = op.eval(x, &moved);
                if f1 < f0 - f_tol(f0) {
                    pep = ConditionResult::fail(
                        pep.samples,
                        PairWitness {
                            x: x.clone(),
                            jet: jet.clone(),
                            translate: Some(q),
                            value: f1 - f0,
                            detail: "cone translate decreased F on the constraint".into(),
                        },
                    );
                    break;
                }
            }
        }

        // PB1: bisect F = 0 along the monotone ray from the anchor.
        if pb1.pass {
            pb1.samples += 1;
            match find_root_on_ray(op, x, &phi_fiber) {
                Some(_root) => {}
                None => {
                    pb1 = ConditionResult::fail(
                        pb1.samples,
                        PairWitness {
                            x: x.clone(),
                            jet: op.anchor(x),
                            translate: None,
                            value: op.eval(x, &op.anchor(x)),
                            detail: "no zero of F inside the constraint fiber along the ray".into(),
                        },
                    );
                }
            }
        }

        // PB2: the constraint boundary sits in {F <= 0}.
        if op.constrained && pb2.pass {
            let mut boundary = vec![op.anchor(x)];
            let raws = member_jets(&phi_fiber, budget, JetMode::Full, &mut rng);
            for raw in raws {
                if let Some(b) = crate::map::project_boundary_dir(&phi_fiber, &raw, (1.0, 1.0)) {
                    boundary.push(b);
                }
            }
            for jet in &boundary {
                // Only genuine near-boundary jets qualify.
                let v = phi_fiber.membership(jet)?;
                if v.region == Region::Inside && v.margin > 1e-6 * (1.0 + jet.norm()) {
                    continue;
                }
                pb2.samples += 1;
                let f0 = op.eval(x, jet);
                if f0 > 10.0 * f_tol(f0) {
                    pb2 = ConditionResult::fail(
                        pb2.samples,
                        PairWitness {
                            x: x.clone(),
                            jet: jet.clone(),
                            translate: None,
                            value: f0,
                            detail: "F positive on the constraint boundary".into(),
                        },
                    );
                    break;
                }
            }
        }

        // NDC: F strictly positive at jets strictly inside the branch.
        if ndc.pass {
            let mut candidates = member_jets(&theta_fiber, budget, JetMode::Full, &mut rng);
            if let Some(root) = find_root_on_ray(op, x, &phi_fiber) {
                // Push the compatible-boundary jet inward at several depths.
                for depth in [0.2, 0.5, 1.0] {
                    candidates.push(root.translate(depth, depth));
                }
            }
            for jet in &candidates {
                let probe = jet.translate(-INTERIOR_DEPTH, -INTERIOR_DEPTH);
                let deep_interior = theta_fiber.membership(&probe)?.in_set();
                if !deep_interior {
                    continue;
                }
                ndc.samples += 1;
                let f0 = op.eval(x, jet);
                if f0 <= F_STRICT_TOL {
                    ndc = ConditionResult::fail(
                        ndc.samples,
                        PairWitness {
                            x: x.clone(),
                            jet: jet.clone(),
                            translate: Some(probe),
                            value: f0,
                            detail: "F not strictly positive inside the branch".into(),
                        },
                    );
                    break;
                }
            }
        }

        // Unconstrained properness: F takes a negative value.
        if !op.constrained && f_uc.pass {
            f_uc.samples += 1;
            let mut found = false;
            let mut t = 1.0_f64;
            while t <= 1e8 {
                let probe = Jet::new(t, SymMat::identity(op.dim).scale(-t));
                if op.eval(x, &probe) < -f_tol(0.0) {
                    found = true;
                    break;
                }
                t *= 2.0;
            }
            if !found {
                f_uc = ConditionResult::fail(
                    f_uc.samples,
                    PairWitness {
                        x: x.clone(),
                        jet: op.anchor(x),
                        translate: None,
                        value: 0.0,
                        detail: "F never negative along the anti-monotone ray".into(),
                    },
                );
            }
        }
    }

    Ok(PairCertificate {
        label: op.label.clone(),
        constrained: op.constrained,
        pep,
        pb1,
        pb2: op.constrained.then_some(pb2),
        ndc,
        f_uc: (!op.constrained).then_some(f_uc),
        budget: budget.clone(),
    })
}

/// Root of `t -> F(x, anchor + t(-1, I))` inside the constraint fiber.
/// Q-monotonicity makes `F` non-decreasing along the ray, so bisection
/// applies; the bracket grows geometrically to 1e8 before giving up.
fn find_root_on_ray(op: &OperatorSpec, x: &[f64], phi_fiber: &ConstraintSet) -> Option<Jet> {
    let anchor = op.anchor(x);
    let f_at = |t: f64| op.eval(x, &anchor.translate_ray(t));
    let f0 = f_at(0.0);
    if f0.abs() <= 10.0 * f_tol(f0) {
        return Some(anchor);
    }
    let (mut lo, mut hi);
    if f0 < 0.0 {
        // Walk up: stays inside the fiber by Q-monotonicity.
        let mut t = 1.0;
        loop {
            if f_at(t) >= 0.0 {
                lo = if t == 1.0 { 0.0 } else { t / 2.0 };
                hi = t;
                break;
            }
            t *= 2.0;
            if t > 1e8 {
                return None;
            }
        }
    } else {
        // Walk down toward the fiber boundary looking for a sign change.
        let mut t = -1.0;
        loop {
            let inside = phi_fiber
                .membership(&anchor.translate_ray(t))
                .map(|v| v.in_set())
                .unwrap_or(false);
            if !inside {
                // Bisect the fiber exit point, then test just inside it.
                let mut t_in = if t == -1.0 { 0.0 } else { t / 2.0 };
                let mut t_out = t;
                for _ in 0..80 {
                    let mid = 0.5 * (t_in + t_out);
                    if phi_fiber
                        .membership(&anchor.translate_ray(mid))
                        .map(|v| v.in_set())
                        .unwrap_or(false)
                    {
                        t_in = mid;
                    } else {
                        t_out = mid;
                    }
                }
                if f_at(t_in) > 0.0 {
                    return None;
                }
                lo = t_in;
                hi = 0.0;
                break;
            }
            if f_at(t) <= 0.0 {
                lo = t;
                hi = if t == -1.0 { 0.0 } else { t / 2.0 };
                break;
            }
            t *= 2.0;
            if t < -1e8 {
                return None;
            }
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f_at(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = anchor.translate_ray(hi);
    let value = op.eval(x, &root);
    (value.abs() <= 1e3 * f_tol(value)).then_some(root)
}

/// Translation regularity of `F` on the constraint: for `|x - y| < delta`,
/// `F(y, r - eta, A + eta I) >= F(x, r, A)` up to tolerance.
pub fn check_rc(
    op: &OperatorSpec,
    etas: &[f64],
    region: &BoxDomain,
    budget: &SearchBudget,
) -> Result<ContinuityCertificate> {
    if !op.domain.contains_box(region) {
        return Err(Error::invalid("region must be contained in the domain"));
    }
    if etas.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("etas must be positive"));
    }
    let jets_for = move |x: &[f64], rng: &mut ChaCha8Rng| -> Vec<Jet> {
        let fiber = op.phi.fiber(x);
        let mut jets = member_jets(&fiber, budget, JetMode::Full, rng);
        // Anchor-seeded multiscale family: the minimal-gain corner of the
        // constraint at every magnitude.
        let anchor = op.anchor(x);
        let mut s = 1e-4;
        while s <= 10.0 {
            jets.push(anchor.translate_ray(s));
            s *= 10.0;
        }
        jets
    };
    let violation = move |x: &[f64], y: &[f64], jet: &Jet, eta: f64| -> Option<f64> {
        let f0 = op.eval(x, jet);
        let f1 = op.eval(y, &jet.translate(eta, eta));
        let tol = f_tol(f0.abs().max(f1.abs()));
        (f1 < f0 - tol).then_some(f0 - f1)
    };
    let engine = SearchEngine {
        region,
        etas,
        budget,
        label: format!("RC({})", op.label),
        jets_for: &jets_for,
        violation: &violation,
    };
    Ok(engine.run())
}

/// Mismatch between the admissible supersolution flag and the topological
/// complement-of-interior of the branch fiber.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrespondenceMismatch {
    pub x: Vec<f64>,
    pub jet: Jet,
    pub sup_flag: bool,
    pub interior: bool,
    pub f_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub samples: usize,
    pub skipped: usize,
    pub mismatches: Vec<CorrespondenceMismatch>,
    pub pass: bool,
}

/// Checks the supersolution flag against "not interior of the branch
/// fiber" on sampled jets away from the boundary. Interior is probed by a
/// fixed-depth anti-monotone translate, which stays meaningful when the
/// defining-function margin degenerates; with a certified non-degeneracy
/// condition the report must be mismatch-free.
pub fn correspondence_check(
    op: &OperatorSpec,
    region: &BoxDomain,
    budget: &SearchBudget,
) -> Result<CorrespondenceReport> {
    if !op.domain.contains_box(region) {
        return Err(Error::invalid("region must be contained in the domain"));
    }
    let theta = op.theta_from_pair();
    let x_points = region_points(region, budget.pairs_per_cell.max(4));
    let mut report = CorrespondenceReport {
        samples: 0,
        skipped: 0,
        mismatches: Vec::new(),
        pass: true,
    };
    for (xi, x) in x_points.iter().enumerate() {
        let fiber = theta.fiber(x);
        let phi_fiber = op.phi.fiber(x);
        let mut jets: Vec<Jet> = Vec::new();
        let raw_box = crate::sampling::SampleBox {
            seed: crate::sampling::subseed(budget.seed, &[0xc1, xi as u64]),
            count: budget.jets_per_pair,
            ..budget.jet_box.clone()
        };
        jets.extend(raw_box.stream(op.dim)?);
        if let Some(root) = find_root_on_ray(op, x, &phi_fiber) {
            for depth in [0.3, 1.0, 3.0] {
                jets.push(root.translate(depth, depth));
                jets.push(root.translate(-depth, -depth));
            }
        }
        for jet in &jets {
            let probe = jet.translate(-INTERIOR_DEPTH, -INTERIOR_DEPTH);
            let deep_interior = fiber.membership(&probe)?.in_set();
            let clearly_outside = {
                let v = fiber.membership_with_tol(jet, 10.0 * f_tol(jet.norm()))?;
                v.region == Region::Outside
            };
            if !deep_interior && !clearly_outside {
                report.skipped += 1;
                continue;
            }
            report.samples += 1;
            let verdict = classify_jet(op, x, jet)?;
            if verdict.sup == deep_interior {
                report.mismatches.push(CorrespondenceMismatch {
                    x: x.clone(),
                    jet: jet.clone(),
                    sup_flag: verdict.sup,
                    interior: deep_interior,
                    f_value: verdict.f_value,
                });
            }
        }
    }
    report.pass = report.mismatches.is_empty();
    Ok(report)
}

// ---------------------------------------------------------------------
// Serializable operator descriptions (the CLI schema).
// ---------------------------------------------------------------------

/// Coefficient grid: node counts per axis and row-major values. Matrix
/// coefficients carry a trailing component axis of length `N(N+1)/2`
/// (upper triangle, row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffGrid {
    pub grid_shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Operator spec file: `{kind, dim, domain, coefficients, params}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpecFile {
    pub kind: OperatorKind,
    pub dim: usize,
    pub domain: DomainSpec,
    #[serde(default)]
    pub coefficients: BTreeMap<String, CoeffGrid>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub label: Option<String>,
}

impl OperatorSpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("operator spec: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn scalar(&self, name: &str, domain: &BoxDomain) -> Result<ScalarField> {
        let cg = self
            .coefficients
            .get(name)
            .ok_or_else(|| Error::Parse(format!("missing coefficient '{name}'")))?;
        if cg.grid_shape.len() != domain.dim() {
            return Err(Error::Parse(format!(
                "coefficient '{name}' shape rank {} does not match domain dim {}",
                cg.grid_shape.len(),
                domain.dim()
            )));
        }
        let grid = GridFunction::new(domain.clone(), cg.grid_shape.clone(), cg.values.clone())
            .map_err(|e| Error::Parse(format!("coefficient '{name}': {e}")))?;
        Ok(ScalarField::from_grid(grid))
    }

    fn matrix(&self, name: &str, domain: &BoxDomain, n: usize) -> Result<MatrixField> {
        let cg = self
            .coefficients
            .get(name)
            .ok_or_else(|| Error::Parse(format!("missing coefficient '{name}'")))?;
        let nn = n * (n + 1) / 2;
        let d = domain.dim();
        if cg.grid_shape.len() != d + 1 || cg.grid_shape[d] != nn {
            return Err(Error::Parse(format!(
                "matrix coefficient '{name}' needs shape [nodes.., {nn}]"
            )));
        }
        let spatial: Vec<usize> = cg.grid_shape[..d].to_vec();
        let nodes: usize = spatial.iter().product();
        if cg.values.len() != nodes * nn {
            return Err(Error::Parse(format!(
                "matrix coefficient '{name}' has {} values, expected {}",
                cg.values.len(),
                nodes * nn
            )));
        }
        let mut channels = Vec::with_capacity(nn);
        for c in 0..nn {
            let vals: Vec<f64> = (0..nodes).map(|i| cg.values[i * nn + c]).collect();
            channels.push(
                GridFunction::new(domain.clone(), spatial.clone(), vals)
                    .map_err(|e| Error::Parse(format!("matrix coefficient '{name}': {e}")))?,
            );
        }
        Ok(MatrixField { n, channels })
    }

    fn g_profile(&self) -> Result<GProfile> {
        let cg = self
            .coefficients
            .get("g_profile")
            .ok_or_else(|| Error::Parse("missing coefficient 'g_profile'".into()))?;
        if cg.grid_shape.len() != 2 || cg.grid_shape[1] != 2 {
            return Err(Error::Parse("g_profile needs shape [K, 2]".into()));
        }
        let k = cg.grid_shape[0];
        if cg.values.len() != 2 * k {
            return Err(Error::Parse("g_profile values do not match shape".into()));
        }
        let ts: Vec<f64> = (0..k).map(|i| cg.values[2 * i]).collect();
        let gs: Vec<f64> = (0..k).map(|i| cg.values[2 * i + 1]).collect();
        GProfile::from_table(ts, gs)
    }

    /// Builds the runnable operator. Parameter-shape problems are parse
    /// errors; sign conditions the theorems assume (such as `h >= 0`) are
    /// not checked here, they surface as certification refutations.
    pub fn build(&self) -> Result<OperatorSpec> {
        let domain = BoxDomain::new(self.domain.lower.clone(), self.domain.upper.clone())?;
        let mut op = match self.kind {
            OperatorKind::HyperbolicAffineSphere => {
                let h = self.scalar("h", &domain)?;
                OperatorSpec::hyperbolic_affine_sphere(domain, self.dim, h)
            }
            OperatorKind::MongeAmpere => {
                let h = self.scalar("h", &domain)?;
                OperatorSpec::monge_ampere(domain, self.dim, h)
            }
            OperatorKind::PerturbedMongeAmpere => {
                let g = self.g_profile()?;
                let r0 = *self.params.get("r0").unwrap_or(&0.0);
                let m = self.scalar("m", &domain)?;
                let m_mat = self.matrix("M", &domain, self.dim)?;
                let h = self.scalar("h", &domain)?;
                OperatorSpec::perturbed_monge_ampere(domain, self.dim, g, r0, m, m_mat, h)?
            }
            OperatorKind::SpecialLagrangian => {
                let h = self.scalar("h", &domain)?;
                OperatorSpec::special_lagrangian(domain, self.dim, h)?
            }
            OperatorKind::LinearTrace => {
                let c = self.scalar("c", &domain)?;
                OperatorSpec::linear_trace(domain, self.dim, c)
            }
            OperatorKind::Custom => {
                return Err(Error::Parse(
                    "custom operators cannot be loaded from spec files".into(),
                ))
            }
        };
        if let Some(label) = &self.label {
            op.label = label.clone();
        }
        Ok(op)
    }
}

/// Serializes a scalar coefficient sampled on a grid.
pub fn coeff_from_fn(
    domain: &BoxDomain,
    resolution: &[usize],
    f: impl Fn(&[f64]) -> f64,
) -> CoeffGrid {
    let g = GridFunction::from_fn(domain.clone(), resolution.to_vec(), f).unwrap();
    CoeffGrid {
        grid_shape: resolution.to_vec(),
        values: g.values,
    }
}

/// Serializes a matrix coefficient sampled on a grid (trailing component
/// axis, upper triangle row-major).
pub fn matrix_coeff_from_fn(
    domain: &BoxDomain,
    resolution: &[usize],
    n: usize,
    f: impl Fn(&[f64]) -> SymMat,
) -> CoeffGrid {
    let probe = GridFunction::from_fn(domain.clone(), resolution.to_vec(), |_| 0.0).unwrap();
    let nn = n * (n + 1) / 2;
    let mut values = Vec::with_capacity(probe.len() * nn);
    for node in 0..probe.len() {
        let m = f(&probe.coords(node));
        values.extend_from_slice(m.upper());
    }
    let mut shape = resolution.to_vec();
    shape.push(nn);
    CoeffGrid {
        grid_shape: shape,
        values,
    }
}
