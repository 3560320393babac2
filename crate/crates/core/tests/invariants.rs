//! Property-level invariants that tie the modules together: duality
//! transfer of continuity certificates, bounded-harmonic levels, the
//! sup-convolution subharmonicity chain, truncation stability, and the
//! branch-boundary decomposition.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use jetcert::constraint::{check_q_monotone, CanonicalKind, ConstraintSet, Region};
use jetcert::grid::{
    check_qdual_subharmonic, check_subharmonic, sup_convolution, translate_perturb, GridFunction,
    Side,
};
use jetcert::jets::{Jet, SymMat};
use jetcert::map::{
    check_relaxed_continuity, check_translation_continuity, default_probe_points, find_tau,
    replay_witness, windowed_hausdorff, BoxDomain, CertVerdict, JetMap, SearchBudget,
};
use jetcert::operators::{classify_jet, OperatorSpec, ScalarField};
use jetcert::sampling::{random_q_translate, rng_for, SampleBox};
use jetcert::slag::phase_map;

fn sl_positive_map() -> JetMap {
    phase_map(
        BoxDomain::unit(2),
        2,
        Arc::new(|x: &[f64]| FRAC_PI_2 + 0.3 * (2.0 * PI * x[0]).sin()),
    )
}

#[test]
fn continuity_certificate_transfers_to_the_dual_map() {
    let map = sl_positive_map();
    let dual = map.dual_map();
    let region = BoxDomain::unit(2);
    let budget = SearchBudget::new(31).with_pairs(96, 12);
    // Small eta keeps the violation window wide, so the sampled delta is a
    // stable estimate on both sides of the duality.
    let etas = [0.1];
    let a = check_translation_continuity(&map, &etas, &region, &budget).unwrap();
    let b = check_translation_continuity(&dual, &etas, &region, &budget).unwrap();
    assert_eq!(a.verdict, CertVerdict::Certified);
    assert_eq!(a.verdict, b.verdict, "verdicts must transfer to the dual");
    let (da, db) = (a.delta_for_eta[0].unwrap(), b.delta_for_eta[0].unwrap());
    let ratio = da / db;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "deltas must agree within one halving step: {da} vs {db}"
    );
}

#[test]
fn phase_map_crossing_is_refuted_with_replayable_witness() {
    // The generic translation check finds the block-form witness of the
    // discontinuity once the eigenvalue scale reaches the blow-up regime.
    let map = phase_map(BoxDomain::unit(2), 2, Arc::new(|x: &[f64]| 0.5 - x[0]));
    let region = BoxDomain::unit(2);
    let budget = SearchBudget::new(37)
        .with_pairs(96, 12)
        .with_jet_box((-10.0, 10.0), 1e6);
    let cert = check_translation_continuity(&map, &[1.0], &region, &budget).unwrap();
    assert_eq!(cert.verdict, CertVerdict::Refuted);
    let w = cert.witness.unwrap();
    assert!(replay_witness(&map, &w).unwrap(), "witness must replay");
    // Block form: eigenvalues of both signs, large in magnitude.
    let eigs = w.jet.a.eigenvalues();
    assert!(eigs[0] < 0.0 && *eigs.last().unwrap() > 0.0, "{eigs:?}");
}

#[test]
fn dual_of_phase_map_is_the_reflected_level_set() {
    let map = sl_positive_map();
    let dual = map.dual_map();
    let x = [0.3, 0.8];
    let level = FRAC_PI_2 + 0.3 * (2.0 * PI * 0.3).sin();
    let reflected = ConstraintSet::new(
        2,
        "reflected",
        Arc::new(move |j: &Jet| j.a.eigenvalues().iter().map(|l| l.atan()).sum::<f64>() + level),
    );
    let sample = SampleBox::new((-4.0, 4.0), 30.0, 9, 2000);
    for jet in sample.stream(2).unwrap() {
        let a = dual.fiber(&x).membership(&jet).unwrap();
        let b = reflected.membership(&jet).unwrap();
        assert_eq!(a.region, b.region);
    }
}

#[test]
fn slag_fiber_is_q_monotone_by_sampled_oracle() {
    let fiber = ConstraintSet::new(
        2,
        "slag0",
        Arc::new(|j: &Jet| j.a.eigenvalues().iter().map(|l| l.atan()).sum::<f64>()),
    );
    let sample = SampleBox::new((-5.0, 5.0), 50.0, 13, 10_000);
    let rep = check_q_monotone(&fiber, &sample).unwrap();
    assert!(rep.pass, "counterexample: {:?}", rep.counterexample);
}

#[test]
fn tau_levels_for_model_maps() {
    // Affine-sphere with unit curvature: tau^(2N+2) = 1.
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::hyperbolic_affine_sphere(
        domain.clone(),
        2,
        ScalarField::constant(&domain, 1.0),
    );
    let map = op.theta_from_pair();
    let tau = find_tau(&map, &default_probe_points(&map.domain, 8)).unwrap();
    assert!((tau.tau - 1.0).abs() <= 2e-6, "tau = {}", tau.tau);

    // Phase operator at level N*pi/4: N*arctan(tau) = N*pi/4.
    let map = phase_map(domain, 2, Arc::new(|_: &[f64]| 2.0 * PI / 4.0));
    let tau = find_tau(&map, &default_probe_points(&map.domain, 8)).unwrap();
    assert!((tau.tau - 1.0).abs() <= 2e-6, "tau = {}", tau.tau);
    // The associated quadratic is -tau + (tau/2)|x|^2.
    assert!((tau.phi(&[1.0, 1.0]) - 0.0).abs() <= 3e-6);
}

#[test]
fn tau_membership_never_fails_on_fresh_points() {
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::hyperbolic_affine_sphere(
        domain.clone(),
        2,
        ScalarField::sample(&domain, &[9, 9], |x| 1.0 + x[0] * x[1]).unwrap(),
    );
    let map = op.theta_from_pair();
    let tau = find_tau(&map, &default_probe_points(&map.domain, 8)).unwrap();
    let dual = map.dual_map();
    let probe = Jet::new(-tau.tau, SymMat::identity(2).scale(tau.tau));
    for i in 0..1000 {
        let x = map.domain.halton_point(i + 100);
        assert!(map.fiber(&x).membership(&probe).unwrap().in_set());
        assert!(dual.fiber(&x).membership(&probe).unwrap().in_set());
    }
}

/// Extracts the centered sub-grid `layers` nodes in from every face.
fn crop(u: &GridFunction, layers: usize) -> GridFunction {
    let d = u.dim();
    let new_res: Vec<usize> = u.resolution.iter().map(|r| r - 2 * layers).collect();
    let lower: Vec<f64> = (0..d)
        .map(|a| u.domain.lower[a] + layers as f64 * u.step(a))
        .collect();
    let upper: Vec<f64> = (0..d)
        .map(|a| u.domain.upper[a] - layers as f64 * u.step(a))
        .collect();
    let domain = BoxDomain::new(lower, upper).unwrap();
    let proto = GridFunction::from_fn(domain.clone(), new_res.clone(), |_| 0.0).unwrap();
    let values: Vec<f64> = (0..proto.len())
        .map(|node| {
            let mut idx = proto.multi_index(node);
            for i in idx.iter_mut() {
                *i += layers;
            }
            u.values[u.flat_index(&idx)]
        })
        .collect();
    GridFunction::new(domain, new_res, values).unwrap()
}

#[test]
fn sup_convolution_chain_stays_subharmonic() {
    // Lemma-style chain: for bounded subharmonics of a certified map, the
    // sup-convolution plus the quadratic tilt stays subharmonic on the
    // shrunk domain for eps below delta(2 eta)^2 / (2 M).
    let eta = 0.2_f64;

    // Constant-phase map: delta is the full diameter.
    let dom = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let h0 = FRAC_PI_2;
    let map = phase_map(dom.clone(), 2, Arc::new(move |_: &[f64]| h0));
    let a = ((h0 + 0.1) / 2.0).tan();
    let u = GridFunction::from_fn(dom.clone(), vec![33, 33], |x| {
        0.5 * a * (x[0] * x[0] + x[1] * x[1]) - a
    })
    .unwrap();
    assert!(check_subharmonic(&u, &map, Side::Sub).unwrap().pass);
    run_chain(&u, &map, eta);

    // Constant-curvature affine sphere: the value slot matters here.
    let dom = BoxDomain::new(vec![-0.7, -0.7], vec![0.7, 0.7]).unwrap();
    let op =
        OperatorSpec::hyperbolic_affine_sphere(dom.clone(), 2, ScalarField::constant(&dom, 0.01));
    let map = op.theta_from_pair();
    let u = GridFunction::from_fn(dom.clone(), vec![33, 33], |x| {
        0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.81
    })
    .unwrap();
    assert!(check_subharmonic(&u, &map, Side::Sub).unwrap().pass);
    run_chain(&u, &map, eta);
}

fn run_chain(u: &GridFunction, map: &JetMap, eta: f64) {
    let m_bound = u.max_abs();
    let diam = u.domain.diameter();
    // Constant fibers certify at the diameter; cap eps by eta/2 so the
    // quadratic tilt dominates the convolution drift.
    let eps = (diam * diam / (2.0 * m_bound)).min(0.5 * eta);
    let shrink = (2.0 * eps * m_bound).sqrt();
    let omega = 2.0
        + (0..u.len())
            .map(|n| u.coords(n).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0_f64, f64::max);
    let s = sup_convolution(u, eps).unwrap();
    let tilted = GridFunction::from_fn(s.domain.clone(), s.resolution.clone(), |x| {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        s.interpolate(x) + eta * (sq - omega)
    })
    .unwrap();
    let layers = (shrink / u.step(0)).ceil() as usize;
    let inner = crop(&tilted, layers);
    let rep = check_subharmonic(&inner, map, Side::Sub).unwrap();
    assert!(
        rep.pass,
        "chain failed on {} at eps={eps}: {:?}",
        map.label,
        rep.violations.first()
    );
}

#[test]
fn decreasing_truncations_stay_dual_cone_subharmonic() {
    // max(u, phi - m) with phi from the bounded-harmonic search of the
    // dual-cone map (tau = 0, phi = 0) stays subharmonic at every finite
    // stage and stabilizes to u.
    let dom = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let map = JetMap::constant(
        dom.clone(),
        ConstraintSet::canonical(CanonicalKind::Qdual, 2),
    );
    let tau = find_tau(&map, &default_probe_points(&dom, 4)).unwrap();
    assert_eq!(tau.tau, 0.0);
    let saddle = GridFunction::from_fn(dom, vec![17, 17], |x| x[0] * x[0] - x[1] * x[1]).unwrap();
    let bmax = saddle
        .boundary_nodes()
        .map(|n| saddle.values[n])
        .fold(f64::NEG_INFINITY, f64::max);
    let u = saddle.map_values(|v| v - bmax);
    assert!(check_qdual_subharmonic(&u).unwrap().pass);
    let range = u.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for stage in 0..6 {
        let m = stage as f64;
        let phi_m: Vec<f64> = (0..u.len()).map(|n| tau.phi(&u.coords(n)) - m).collect();
        let truncated = GridFunction::new(
            u.domain.clone(),
            u.resolution.clone(),
            u.values
                .iter()
                .zip(&phi_m)
                .map(|(a, b)| a.max(*b))
                .collect(),
        )
        .unwrap();
        assert!(
            check_qdual_subharmonic(&truncated).unwrap().pass,
            "stage {stage}"
        );
        if m > range {
            assert_eq!(truncated.values, u.values, "sequence must stabilize");
        }
    }
}

#[test]
fn translate_perturb_preserves_subharmonicity() {
    let dom = BoxDomain::new(vec![-0.7, -0.7], vec![0.7, 0.7])
        .unwrap()
        .with_margin(0.25)
        .unwrap();
    let op = OperatorSpec::hyperbolic_affine_sphere(
        dom.clone(),
        2,
        ScalarField::sample(&dom, &[33, 33], |x| {
            (0.81 - 0.5 * (x[0] * x[0] + x[1] * x[1])).powi(4)
        })
        .unwrap(),
    );
    let map = op.theta_from_pair();
    let u = GridFunction::from_fn(dom.clone(), vec![33, 33], |x| {
        0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.81
    })
    .unwrap();
    assert!(check_subharmonic(&u, &map, Side::Sub).unwrap().pass);
    // Grid-aligned shift below the margin, with the quadratic tilt.
    let step = u.step(0);
    let moved = translate_perturb(&u, &[2.0 * step, 0.0], 0.2).unwrap();
    let rep = check_subharmonic(&moved, &map, Side::Sub).unwrap();
    assert!(rep.pass, "{:?}", rep.violations.first());
}

#[test]
fn windowed_hausdorff_vanishes_on_every_builtin() {
    let sample = SampleBox::new((0.0, 0.0), 1.0, 3, 800);
    for kind in [CanonicalKind::Q, CanonicalKind::Qdual, CanonicalKind::PCone] {
        let s = ConstraintSet::canonical(kind, 2);
        let est = windowed_hausdorff(&s, &s, 4.0, &sample).unwrap();
        assert_eq!(est.estimate, 0.0);
    }
}

#[test]
fn canonical_q_defining_function_is_monotone_exactly() {
    let mut rng = rng_for(55, &[1]);
    let q = ConstraintSet::canonical(CanonicalKind::Q, 3);
    let jets = SampleBox::new((-4.0, 4.0), 5.0, 19, 500);
    for jet in jets.stream(3).unwrap() {
        let t = random_q_translate(&mut rng, 3, 2.0);
        let moved = Jet::new(jet.r + t.r, jet.a.add(&t.a));
        assert!(
            q.margin(&moved) >= q.margin(&jet) - 1e-12,
            "min(-r, lambda_1) must be monotone along the cone"
        );
    }
}

#[test]
fn branch_boundary_decomposes_into_zero_level_and_constraint_boundary() {
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::hyperbolic_affine_sphere(
        domain.clone(),
        2,
        ScalarField::sample(&domain, &[9, 9], |x| 0.1 + x[0] * x[0] + x[1] * x[1]).unwrap(),
    );
    let theta = op.theta_from_pair();
    let phi = op.phi();
    let jets = SampleBox::new((-6.0, 6.0), 10.0, 23, 400);
    for (i, raw) in jets.stream(2).unwrap().enumerate() {
        let x = domain.halton_point(i);
        let fiber = theta.fiber(&x);
        let Some(b) = fiber.project_to_boundary(&raw) else {
            continue;
        };
        let f = op.eval(&x, &b);
        let band = 1e-6 * (1.0 + f.abs());
        let on_zero_level = f.abs() <= band;
        let phi_margin = phi.fiber(&x).margin(&b);
        let on_phi_boundary = phi_margin.abs() <= band && f >= -band;
        assert!(
            on_zero_level || on_phi_boundary,
            "boundary jet at {x:?} with F = {f}, phi margin = {phi_margin}"
        );
    }
}

#[test]
fn admissible_subsolutions_are_stable_under_cone_translates() {
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::hyperbolic_affine_sphere(
        domain.clone(),
        2,
        ScalarField::constant(&domain, 1.0),
    );
    let mut rng = rng_for(61, &[2]);
    let jets = SampleBox::new((-6.0, 0.0), 4.0, 29, 500);
    let x = [0.4, 0.6];
    for jet in jets.stream(2).unwrap() {
        let v = classify_jet(&op, &x, &jet).unwrap();
        if !v.sub {
            continue;
        }
        let t = random_q_translate(&mut rng, 2, 2.0);
        let moved = Jet::new(jet.r + t.r, jet.a.add(&t.a));
        let w = classify_jet(&op, &x, &moved).unwrap();
        assert!(w.sub, "sub flag must survive cone translates");
    }
}

#[test]
fn rc_refuted_for_the_linear_operator_via_large_r_witness() {
    let dom = BoxDomain::unit(1);
    let op = OperatorSpec::linear_trace(
        dom.clone(),
        1,
        ScalarField::sample(&dom, &[17], |x| 1.0 + x[0]).unwrap(),
    );
    let budget = SearchBudget::new(43)
        .with_pairs(48, 8)
        .with_jet_box((-1e12, 1e12), 1e3);
    let cert = jetcert::operators::check_rc(&op, &[0.5], &dom, &budget).unwrap();
    assert_eq!(cert.verdict, CertVerdict::Refuted);
    let w = cert.witness.unwrap();
    assert!(w.jet.r.abs() > 1e3, "witness must use the large-|r| regime");
    let f0 = op.eval(&w.x, &w.jet);
    let f1 = op.eval(&w.y, &w.jet.translate(w.eta, w.eta));
    assert!(f1 < f0, "witness inequality must replay");
}

#[test]
fn correspondence_is_clean_for_the_phase_operator() {
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::special_lagrangian(
        domain.clone(),
        2,
        ScalarField::sample(&domain, &[17, 17], |x| {
            FRAC_PI_2 + 0.3 * (2.0 * PI * x[0]).sin()
        })
        .unwrap(),
    )
    .unwrap();
    let budget = SearchBudget::new(47).with_pairs(24, 8);
    let rep = jetcert::operators::correspondence_check(&op, &domain, &budget).unwrap();
    assert!(rep.pass, "mismatch: {:?}", rep.mismatches.first());
    // Unconstrained identity: branch-boundary jets sit on the zero level.
    let theta = op.theta_from_pair();
    let jets = SampleBox::new((-3.0, 3.0), 20.0, 53, 200);
    for (i, raw) in jets.stream(2).unwrap().enumerate() {
        let x = domain.halton_point(i);
        if let Some(b) = theta.fiber(&x).project_to_boundary(&raw) {
            let f = op.eval(&x, &b);
            assert!(f.abs() <= 1e-6, "boundary jet must satisfy F = 0, got {f}");
        }
    }
}

#[test]
fn positive_parabola_is_not_subharmonic_for_the_cone_map() {
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::monge_ampere(domain.clone(), 2, ScalarField::constant(&domain, 1.0));
    let map = op.theta_from_pair();
    let u = GridFunction::from_fn(domain, vec![17, 17], |x| x[0] * x[0] + x[1] * x[1]).unwrap();
    let rep = check_subharmonic(&u, &map, Side::Sub).unwrap();
    assert!(!rep.pass, "positive values leave the cone");
}

#[test]
fn relaxed_continuity_is_free_for_r_independent_maps() {
    let map = sl_positive_map();
    let region = BoxDomain::unit(2);
    let budget = SearchBudget::new(41).with_pairs(32, 6);
    for r_cap in [1.0, 100.0] {
        let cert = check_relaxed_continuity(&map, r_cap, &[0.5], &region, &budget).unwrap();
        assert_eq!(cert.verdict, CertVerdict::Certified, "R = {r_cap}");
    }
}

#[test]
fn ma_harmonic_addition_pair() {
    use jetcert::grid::{subharmonic_addition_test, CheckStatus};
    let dom = BoxDomain::new(vec![-0.7, -0.7], vec![0.7, 0.7]).unwrap();
    let op = OperatorSpec::hyperbolic_affine_sphere(
        dom.clone(),
        2,
        ScalarField::sample(&dom, &[17, 17], |x| {
            (0.6 - 0.5 * (x[0] * x[0] + x[1] * x[1])).powi(4)
        })
        .unwrap(),
    );
    let map = op.theta_from_pair();
    let star = GridFunction::from_fn(dom, vec![17, 17], |x| {
        0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.6
    })
    .unwrap();
    let utilde = star.map_values(|v| -v - 0.1);
    let rep = subharmonic_addition_test(&star, &utilde, &map).unwrap();
    assert_eq!(rep.status, CheckStatus::Pass, "{:?}", rep.failing_input);
}

#[test]
fn subharmonic_check_requires_matching_dimensions() {
    let map = sl_positive_map();
    let u = GridFunction::from_fn(BoxDomain::unit(1), vec![9], |x| -x[0]).unwrap();
    assert!(matches!(
        check_subharmonic(&u, &map, Side::Sub),
        Err(jetcert::Error::DimensionMismatch { .. })
    ));
}

#[test]
fn region_membership_verdicts_on_theta_for_affine_sphere() {
    // Direct evaluation: h = 1, jet (-2, I) is inside with margin 1.
    let domain = BoxDomain::unit(2);
    let op = OperatorSpec::hyperbolic_affine_sphere(
        domain.clone(),
        2,
        ScalarField::constant(&domain, 1.0),
    );
    let theta = op.theta_from_pair();
    let fiber = theta.fiber(&[0.5, 0.5]);
    let v = fiber
        .membership(&Jet::new(-2.0, SymMat::identity(2)))
        .unwrap();
    assert_eq!(v.region, Region::Inside);
}
