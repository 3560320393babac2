//! Grid-level potential theory checks.
//!
//! Discrete Hessian tolerances scale as `C*h^2` with the grid step to match
//! truncation error (`C = 10 * (1 + max|u|)`). The sup-convolution search
//! is restricted to the ball `|z| <= sqrt(2*eps*M)` (offsets beyond it
//! cannot compete) plus a two-step slack so the discrete semiconvexity
//! identity holds exactly at interior nodes.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid::GridFunction;
use crate::jets::Jet;
use crate::map::JetMap;
use crate::Result;

/// Stated in every grid report: a pass certifies necessary conditions of
/// the continuum statement on sampled nodes.
pub const EVIDENCE_NOTE: &str =
    "grid check: necessary conditions verified on sampled nodes; a pass is evidence, not proof";

fn hess_tol(u: &GridFunction) -> f64 {
    let h = u.max_step();
    10.0 * (1.0 + u.max_abs()) * h * h
}

fn value_tol(u: &GridFunction) -> f64 {
    1e-9 * (1.0 + u.max_abs())
}

/// A node where a pointwise check failed, with enough data to replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeViolation {
    pub node: usize,
    pub coords: Vec<f64>,
    pub value: f64,
}

/// Pointwise check over grid nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeReport {
    pub pass: bool,
    pub checked: usize,
    pub violations: Vec<NodeViolation>,
    pub note: String,
}

impl NodeReport {
    fn from_violations(checked: usize, violations: Vec<NodeViolation>) -> Self {
        NodeReport {
            pass: violations.is_empty(),
            checked,
            violations,
            note: EVIDENCE_NOTE.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    /// The hypothesis of the statement was not met, nothing to test.
    VacuousPass,
    Violations,
    PreconditionFailed,
}

/// Verdict of a comparison-type check (zero maximum principle, comparison
/// principle). A nonempty violation list with verified preconditions is a
/// theorem contradiction and is flagged as such; it indicates tolerance or
/// discretization artifacts and carries full data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub status: CheckStatus,
    pub violations: Vec<NodeViolation>,
    pub max_violation: f64,
    pub precondition: Option<String>,
    pub theorem_contradiction: bool,
    pub note: String,
}

impl ComparisonVerdict {
    pub fn pass(&self) -> bool {
        matches!(self.status, CheckStatus::Pass | CheckStatus::VacuousPass)
    }

    fn precondition_failed(what: String) -> Self {
        ComparisonVerdict {
            status: CheckStatus::PreconditionFailed,
            violations: Vec::new(),
            max_violation: 0.0,
            precondition: Some(what),
            theorem_contradiction: false,
            note: EVIDENCE_NOTE.to_string(),
        }
    }
}

/// Sup-convolution `u^eps(x) = max_z { u(x-z) - |z|^2/eps }` over grid
/// offsets, `u = -inf` off-grid. Pointwise `>= u` and decreasing as `eps`
/// decreases to zero.
pub fn sup_convolution(u: &GridFunction, eps: f64) -> Result<GridFunction> {
    if !(eps > 0.0) {
        return Err(Error::invalid("sup-convolution needs eps > 0"));
    }
    let d = u.dim();
    let m_bound = u.max_abs();
    let radius = (2.0 * eps * m_bound).sqrt() + 2.0 * u.max_step();
    let ranges: Vec<i64> = (0..d).map(|a| (radius / u.step(a)).ceil() as i64).collect();
    let strides = u.strides();

    let mut out = vec![f64::NEG_INFINITY; u.len()];
    let mut offset = vec![0i64; d];
    for (node, slot) in out.iter_mut().enumerate() {
        let idx = u.multi_index(node);
        for (o, r) in offset.iter_mut().zip(&ranges) {
            *o = -r;
        }
        // Odometer over the offset box, skipping off-grid and far offsets.
        let mut best = f64::NEG_INFINITY;
        'outer: loop {
            let mut z_sq = 0.0;
            let mut target = 0usize;
            let mut valid = true;
            for a in 0..d {
                let za = offset[a] as f64 * u.step(a);
                z_sq += za * za;
                let t = idx[a] as i64 - offset[a];
                if t < 0 || t >= u.resolution[a] as i64 {
                    valid = false;
                    break;
                }
                target += t as usize * strides[a];
            }
            if valid && z_sq <= radius * radius {
                let cand = u.values[target] - z_sq / eps;
                if cand > best {
                    best = cand;
                }
            }
            // Advance the odometer.
            for a in 0..d {
                offset[a] += 1;
                if offset[a] <= ranges[a] {
                    continue 'outer;
                }
                offset[a] = -ranges[a];
            }
            break;
        }
        *slot = best;
    }
    GridFunction::new(u.domain.clone(), u.resolution.clone(), out)
}

/// Verifies that `u + lambda * |x|^2 / 2` has non-negative second
/// differences along every axis and axis-pair diagonal.
pub fn check_semiconvex(u: &GridFunction, lambda: f64) -> Result<NodeReport> {
    if lambda < 0.0 {
        return Err(Error::invalid("semiconvexity parameter must be >= 0"));
    }
    let w = {
        let mut vals = Vec::with_capacity(u.len());
        for node in 0..u.len() {
            let x = u.coords(node);
            let sq: f64 = x.iter().map(|v| v * v).sum();
            vals.push(u.values[node] + 0.5 * lambda * sq);
        }
        GridFunction::new(u.domain.clone(), u.resolution.clone(), vals)?
    };
    let d = u.dim();
    let strides = u.strides();
    let hmin = (0..d).map(|a| u.step(a)).fold(f64::INFINITY, f64::min);
    let floor = -1e-9 * (1.0 + u.max_abs()) / (hmin * hmin);

    // Stencil directions: axes and axis-pair diagonals.
    let mut dirs: Vec<(Vec<i64>, f64)> = Vec::new();
    for i in 0..d {
        let mut v = vec![0i64; d];
        v[i] = 1;
        dirs.push((v, u.step(i) * u.step(i)));
        for j in (i + 1)..d {
            for sj in [1i64, -1] {
                let mut v = vec![0i64; d];
                v[i] = 1;
                v[j] = sj;
                let len_sq = u.step(i) * u.step(i) + u.step(j) * u.step(j);
                dirs.push((v, len_sq));
            }
        }
    }

    let mut violations = Vec::new();
    let mut checked = 0usize;
    for node in 0..u.len() {
        let idx = u.multi_index(node);
        for (dir, len_sq) in &dirs {
            let fits = idx.iter().zip(dir).zip(&u.resolution).all(|((i, s), r)| {
                let t = *i as i64 + s;
                let b = *i as i64 - s;
                t >= 0 && (t as usize) < *r && b >= 0 && (b as usize) < *r
            });
            if !fits {
                continue;
            }
            checked += 1;
            let shift: i64 = dir.iter().zip(&strides).map(|(s, st)| s * *st as i64).sum();
            let plus = w.values[(node as i64 + shift) as usize];
            let minus = w.values[(node as i64 - shift) as usize];
            let quot = (plus - 2.0 * w.values[node] + minus) / len_sq;
            if quot < floor {
                violations.push(NodeViolation {
                    node,
                    coords: u.coords(node),
                    value: quot,
                });
            }
        }
    }
    Ok(NodeReport::from_violations(checked, violations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubaffineMode {
    /// `lambda_N(D^2_h w) >= 0` at interior nodes.
    Hessian,
    /// Comparison with lifted least-squares affine majorants over a dyadic
    /// sub-box family.
    AffineComparison,
    /// The chosen pointwise test applied to the positive part `w+`.
    Plus,
}

/// Subaffine check in the requested mode.
pub fn check_subaffine(w: &GridFunction, mode: SubaffineMode) -> Result<NodeReport> {
    match mode {
        SubaffineMode::Hessian => subaffine_hessian(w),
        SubaffineMode::AffineComparison => subaffine_affine(w),
        SubaffineMode::Plus => subaffine_hessian(&w.map_values(|v| v.max(0.0))),
    }
}

fn subaffine_hessian(w: &GridFunction) -> Result<NodeReport> {
    let tol = hess_tol(w);
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for node in w.interior_nodes() {
        checked += 1;
        let jet = w.discrete_jet(node)?;
        let top = jet.hessian.lambda_max();
        if top < -tol {
            violations.push(NodeViolation {
                node,
                coords: w.coords(node),
                value: top,
            });
        }
    }
    Ok(NodeReport::from_violations(checked, violations))
}

/// Dyadic sub-box family down to 4 nodes per axis: for each sub-box, fit a
/// least-squares plane through the boundary nodes, lift it to dominate
/// them, and require interior values to stay below it.
fn subaffine_affine(w: &GridFunction) -> Result<NodeReport> {
    let d = w.dim();
    let tol = hess_tol(w);
    let mut violations = Vec::new();
    let mut checked = 0usize;

    let mut level = 0u32;
    loop {
        let parts = 1usize << level;
        let min_nodes = w
            .resolution
            .iter()
            .map(|r| (r - 1) / parts + 1)
            .min()
            .unwrap();
        if min_nodes < 4 {
            break;
        }
        // Axis segment boundaries by node index.
        let seg_bounds: Vec<Vec<(usize, usize)>> = (0..d)
            .map(|a| {
                (0..parts)
                    .map(|p| {
                        let lo = p * (w.resolution[a] - 1) / parts;
                        let hi = (p + 1) * (w.resolution[a] - 1) / parts;
                        (lo, hi)
                    })
                    .collect()
            })
            .collect();
        let mut sel = vec![0usize; d];
        'boxes: loop {
            let bounds: Vec<(usize, usize)> = (0..d).map(|a| seg_bounds[a][sel[a]]).collect();
            check_one_subbox(w, &bounds, tol, &mut checked, &mut violations);
            for a in 0..d {
                sel[a] += 1;
                if sel[a] < parts {
                    continue 'boxes;
                }
                sel[a] = 0;
            }
            break;
        }
        level += 1;
    }
    Ok(NodeReport::from_violations(checked, violations))
}

fn check_one_subbox(
    w: &GridFunction,
    bounds: &[(usize, usize)],
    tol: f64,
    checked: &mut usize,
    violations: &mut Vec<NodeViolation>,
) {
    let d = w.dim();
    // Gather nodes of the sub-box, split into faces and interior.
    let mut boundary: Vec<usize> = Vec::new();
    let mut interior: Vec<usize> = Vec::new();
    let mut idx: Vec<usize> = bounds.iter().map(|(lo, _)| *lo).collect();
    'nodes: loop {
        let node = w.flat_index(&idx);
        let on_face = idx
            .iter()
            .zip(bounds)
            .any(|(i, (lo, hi))| i == lo || i == hi);
        if on_face {
            boundary.push(node);
        } else {
            interior.push(node);
        }
        for a in 0..d {
            idx[a] += 1;
            if idx[a] <= bounds[a].1 {
                continue 'nodes;
            }
            idx[a] = bounds[a].0;
        }
        break;
    }
    if interior.is_empty() || boundary.len() < d + 1 {
        return;
    }

    // Least-squares affine a(x) = c + b.x through the boundary values.
    let k = d + 1;
    let mut ata = vec![0.0; k * k];
    let mut atb = vec![0.0; k];
    for &node in &boundary {
        let x = w.coords(node);
        let mut row = vec![1.0];
        row.extend_from_slice(&x);
        let val = w.values[node];
        for i in 0..k {
            atb[i] += row[i] * val;
            for j in 0..k {
                ata[i * k + j] += row[i] * row[j];
            }
        }
    }
    let coeff = match solve_dense(k, &mut ata, &mut atb) {
        Some(c) => c,
        None => return,
    };
    let affine = |x: &[f64]| coeff[0] + x.iter().zip(&coeff[1..]).map(|(a, b)| a * b).sum::<f64>();
    // Lift to dominate the boundary.
    let lift = boundary
        .iter()
        .map(|&n| w.values[n] - affine(&w.coords(n)))
        .fold(f64::NEG_INFINITY, f64::max);

    for &node in &interior {
        *checked += 1;
        let bound = affine(&w.coords(node)) + lift + tol;
        if w.values[node] > bound {
            violations.push(NodeViolation {
                node,
                coords: w.coords(node),
                value: w.values[node] - bound,
            });
        }
    }
}

fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in (col + 1)..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

/// Pointwise characterization of dual-cone subharmonicity: at each interior
/// node `w <= 0` or the discrete Hessian has `lambda_N >= 0`.
pub fn check_qdual_subharmonic(w: &GridFunction) -> Result<NodeReport> {
    let vtol = value_tol(w);
    let htol = hess_tol(w);
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for node in w.interior_nodes() {
        checked += 1;
        if w.values[node] <= vtol {
            continue;
        }
        let jet = w.discrete_jet(node)?;
        if jet.hessian.lambda_max() < -htol {
            violations.push(NodeViolation {
                node,
                coords: w.coords(node),
                value: jet.hessian.lambda_max(),
            });
        }
    }
    Ok(NodeReport::from_violations(checked, violations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Sub,
    Super,
}

/// Checks the differential inclusion on every interior node: for `Sub` the
/// discrete jet must not leave the fiber, for `Super` the negated jet must
/// not leave the dual fiber.
pub fn check_subharmonic(u: &GridFunction, map: &JetMap, side: Side) -> Result<NodeReport> {
    let probe = map.fiber(&u.coords(0));
    if probe.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: probe.dim(),
            got: u.dim(),
        });
    }
    let htol = hess_tol(u);
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for node in u.interior_nodes() {
        checked += 1;
        let x = u.coords(node);
        let jet = u.discrete_jet(node)?;
        let fiber = map.fiber(&x);
        let tol = fiber.boundary_tol.max(htol);
        let test_jet = match side {
            Side::Sub => Jet::new(jet.value, jet.hessian.clone()),
            Side::Super => Jet::new(-jet.value, jet.hessian.neg()),
        };
        let set = match side {
            Side::Sub => fiber,
            Side::Super => fiber.dual(),
        };
        let v = set.membership_with_tol(&test_jet, tol)?;
        if !v.in_set() {
            violations.push(NodeViolation {
                node,
                coords: x,
                value: v.margin,
            });
        }
    }
    Ok(NodeReport::from_violations(checked, violations))
}

/// Zero maximum principle: a dual-cone subharmonic that is `<= 0` on the
/// boundary stays `<= 0` inside. Inputs failing the subharmonicity
/// precondition are flagged, not tested.
pub fn zmp_check(w: &GridFunction) -> Result<ComparisonVerdict> {
    let pre = check_qdual_subharmonic(w)?;
    if !pre.pass {
        let first = &pre.violations[0];
        return Ok(ComparisonVerdict::precondition_failed(format!(
            "input is not dual-cone subharmonic at node {} {:?}",
            first.node, first.coords
        )));
    }
    let vtol = value_tol(w);
    let boundary_max = w
        .boundary_nodes()
        .map(|n| w.values[n])
        .fold(f64::NEG_INFINITY, f64::max);
    if boundary_max > vtol {
        return Ok(ComparisonVerdict {
            status: CheckStatus::VacuousPass,
            violations: Vec::new(),
            max_violation: 0.0,
            precondition: None,
            theorem_contradiction: false,
            note: EVIDENCE_NOTE.to_string(),
        });
    }
    let mut violations = Vec::new();
    let mut max_violation = 0.0_f64;
    for node in w.interior_nodes() {
        if w.values[node] > vtol {
            max_violation = max_violation.max(w.values[node]);
            violations.push(NodeViolation {
                node,
                coords: w.coords(node),
                value: w.values[node],
            });
        }
    }
    let status = if violations.is_empty() {
        CheckStatus::Pass
    } else {
        CheckStatus::Violations
    };
    Ok(ComparisonVerdict {
        theorem_contradiction: status == CheckStatus::Violations,
        status,
        violations,
        max_violation,
        precondition: None,
        note: EVIDENCE_NOTE.to_string(),
    })
}

/// Subharmonic addition: if `u` is subharmonic for the map and `utilde`
/// for its dual, the sum is dual-cone subharmonic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditionReport {
    pub status: CheckStatus,
    /// Which precondition input failed, when one did.
    pub failing_input: Option<String>,
    pub sum_violations: Vec<NodeViolation>,
    pub note: String,
}

pub fn subharmonic_addition_test(
    u: &GridFunction,
    utilde: &GridFunction,
    map: &JetMap,
) -> Result<AdditionReport> {
    let pre_u = check_subharmonic(u, map, Side::Sub)?;
    if !pre_u.pass {
        return Ok(AdditionReport {
            status: CheckStatus::PreconditionFailed,
            failing_input: Some(format!(
                "u is not subharmonic for {} at node {}",
                map.label, pre_u.violations[0].node
            )),
            sum_violations: Vec::new(),
            note: EVIDENCE_NOTE.to_string(),
        });
    }
    let dual = map.dual_map();
    let pre_t = check_subharmonic(utilde, &dual, Side::Sub)?;
    if !pre_t.pass {
        return Ok(AdditionReport {
            status: CheckStatus::PreconditionFailed,
            failing_input: Some(format!(
                "utilde is not subharmonic for {} at node {}",
                dual.label, pre_t.violations[0].node
            )),
            sum_violations: Vec::new(),
            note: EVIDENCE_NOTE.to_string(),
        });
    }
    let sum = u.zip_values(utilde, |a, b| a + b)?;
    let rep = check_qdual_subharmonic(&sum)?;
    Ok(AdditionReport {
        status: if rep.pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Violations
        },
        failing_input: None,
        sum_violations: rep.violations,
        note: EVIDENCE_NOTE.to_string(),
    })
}

/// Comparison principle harness: with `u` subharmonic and `v`
/// superharmonic for the map, `u <= v` on the boundary forces `u <= v`
/// everywhere. Precondition failures are localized to their first node.
pub fn compare(u: &GridFunction, v: &GridFunction, map: &JetMap) -> Result<ComparisonVerdict> {
    compare_with_tol(u, v, map, None)
}

/// [`compare`] with an explicit value-tolerance override.
pub fn compare_with_tol(
    u: &GridFunction,
    v: &GridFunction,
    map: &JetMap,
    tol_override: Option<f64>,
) -> Result<ComparisonVerdict> {
    if u.resolution != v.resolution {
        return Err(Error::invalid("comparison inputs live on different grids"));
    }
    let pre_u = check_subharmonic(u, map, Side::Sub)?;
    if !pre_u.pass {
        let n = &pre_u.violations[0];
        return Ok(ComparisonVerdict::precondition_failed(format!(
            "u fails sub-harmonicity for {} at node {} {:?}",
            map.label, n.node, n.coords
        )));
    }
    let pre_v = check_subharmonic(v, map, Side::Super)?;
    if !pre_v.pass {
        let n = &pre_v.violations[0];
        return Ok(ComparisonVerdict::precondition_failed(format!(
            "v fails super-harmonicity for {} at node {} {:?}",
            map.label, n.node, n.coords
        )));
    }
    let tol = tol_override.unwrap_or_else(|| value_tol(u).max(value_tol(v)));
    let boundary_ok = u.boundary_nodes().all(|n| u.values[n] <= v.values[n] + tol);
    if !boundary_ok {
        return Ok(ComparisonVerdict {
            status: CheckStatus::VacuousPass,
            violations: Vec::new(),
            max_violation: 0.0,
            precondition: None,
            theorem_contradiction: false,
            note: EVIDENCE_NOTE.to_string(),
        });
    }
    let mut violations = Vec::new();
    let mut max_violation = 0.0_f64;
    for node in 0..u.len() {
        let gap = u.values[node] - v.values[node];
        if gap > tol {
            max_violation = max_violation.max(gap);
            violations.push(NodeViolation {
                node,
                coords: u.coords(node),
                value: gap,
            });
        }
    }
    let status = if violations.is_empty() {
        CheckStatus::Pass
    } else {
        CheckStatus::Violations
    };
    Ok(ComparisonVerdict {
        theorem_contradiction: status == CheckStatus::Violations,
        status,
        violations,
        max_violation,
        precondition: None,
        note: EVIDENCE_NOTE.to_string(),
    })
}

/// Translate-and-perturb `u_{y;eta}(x) = u(x+y) + (eta/2)(|x|^2 - omega)`
/// on the margin-shrunk grid, with `omega = 2 + sup |x|^2` over the
/// original grid.
pub fn translate_perturb(u: &GridFunction, y: &[f64], eta: f64) -> Result<GridFunction> {
    if y.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: y.len(),
        });
    }
    let margin = u.domain.margin;
    let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(margin > 0.0) || y_norm >= margin {
        return Err(Error::invalid(format!(
            "translate requires |y| < margin (|y| = {y_norm}, margin = {margin})"
        )));
    }
    let d = u.dim();
    // Shrink by whole node layers so the new grid aligns with the old one.
    let layers: Vec<usize> = (0..d)
        .map(|a| ((margin / u.step(a)) - 1e-12).ceil() as usize)
        .collect();
    let new_res: Vec<usize> = u
        .resolution
        .iter()
        .zip(&layers)
        .map(|(r, l)| r.saturating_sub(2 * l))
        .collect();
    if new_res.iter().any(|r| *r < 2) {
        return Err(Error::invalid("margin leaves fewer than 2 nodes per axis"));
    }
    let new_lower: Vec<f64> = (0..d)
        .map(|a| u.domain.lower[a] + layers[a] as f64 * u.step(a))
        .collect();
    let new_upper: Vec<f64> = (0..d)
        .map(|a| u.domain.upper[a] - layers[a] as f64 * u.step(a))
        .collect();
    let domain = crate::map::BoxDomain::new(new_lower, new_upper)?;

    let omega = 2.0
        + (0..u.len())
            .map(|n| u.coords(n).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0_f64, f64::max);

    GridFunction::from_fn(domain, new_res, |x| {
        let shifted: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        u.interpolate(&shifted) + 0.5 * eta * (sq - omega)
    })
}
