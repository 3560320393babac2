//! End-to-end CLI contract: exit codes, witness files, and byte-level
//! reproducibility of reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use jetcert::grid::GridFunction;
use jetcert::map::BoxDomain;
use jetcert::operators::{coeff_from_fn, DomainSpec, OperatorKind, OperatorSpecFile};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_jetcert")
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (out.status.code().unwrap_or(-1), text)
}

fn write_spec(dir: &Path, name: &str, file: &OperatorSpecFile) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, file.to_json().unwrap()).unwrap();
    path
}

fn ma_spec(h_value: impl Fn(&[f64]) -> f64) -> OperatorSpecFile {
    let domain = BoxDomain::unit(2);
    let mut coefficients = std::collections::BTreeMap::new();
    coefficients.insert("h".to_string(), coeff_from_fn(&domain, &[9, 9], h_value));
    OperatorSpecFile {
        kind: OperatorKind::MongeAmpere,
        dim: 2,
        domain: DomainSpec {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        },
        coefficients,
        params: Default::default(),
        label: None,
    }
}

const FAST: &[&str] = &["--samples", "24", "--jets", "6", "--etas", "0.5,1.0"];

#[test]
fn certify_operator_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // Nonnegative h certifies; exit 0 with summary and certificates.
    let good = write_spec(dir.path(), "ma_good.json", &ma_spec(|_| 1.0));
    let out = dir.path().join("good");
    let (code, log) = run([
        "certify-operator",
        "--spec",
        good.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]
    .iter()
    .chain(FAST)
    .cloned()
    .collect::<Vec<_>>()
    .as_slice());
    assert_eq!(code, 0, "log: {log}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("label,PEP,PB1,PB2,NDC,RC,correspondence"));
    assert!(summary.contains("pass"));
    assert!(out.join("pair_certificate.json").exists());
    assert!(out.join("rc_certificate.json").exists());

    // Negative h: the zero level never meets the constraint; exit 1 plus
    // a PB1 witness file.
    let bad = write_spec(dir.path(), "ma_bad.json", &ma_spec(|_| -1.0));
    let out = dir.path().join("bad");
    let (code, _) = run([
        "certify-operator",
        "--spec",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]
    .iter()
    .chain(FAST)
    .cloned()
    .collect::<Vec<_>>()
    .as_slice());
    assert_eq!(code, 1);
    assert!(out.join("witness_pb1.json").exists());

    // Malformed JSON: exit 2.
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ this is not json").unwrap();
    let (code, _) = run(&[
        "certify-operator",
        "--spec",
        broken.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn certify_operator_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "ma.json", &ma_spec(|x| x[0] * x[1]));
    let (out1, out2) = (dir.path().join("r1"), dir.path().join("r2"));
    // Identical configuration except the worker count: reports must not
    // depend on scheduling.
    for (out, threads) in [(&out1, "1"), (&out2, "3")] {
        let (code, log) = run([
            "certify-operator",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "11",
            "--threads",
            threads,
        ]
        .iter()
        .chain(FAST)
        .cloned()
        .collect::<Vec<_>>()
        .as_slice());
        assert!(code == 0 || code == 1, "log: {log}");
    }
    for name in [
        "pair_certificate.json",
        "rc_certificate.json",
        "correspondence.json",
        "summary.csv",
    ] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical across runs");
    }
}

#[test]
fn slag_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // Phase inside the top interval: certified, exit 0.
    let h = GridFunction::from_fn(BoxDomain::unit(2), vec![33, 33], |x| {
        std::f64::consts::FRAC_PI_2 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()
    })
    .unwrap();
    let good = dir.path().join("h_good.json");
    fs::write(&good, h.to_json().unwrap()).unwrap();
    let out = dir.path().join("slag_good");
    let (code, log) = run(&[
        "slag",
        "--grid",
        good.to_str().unwrap(),
        "--dim",
        "2",
        "--draws",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "log: {log}");
    assert!(out.join("phase_report.json").exists());

    // Phase crossing a special value: refuted, exit 1, witness carries the
    // block data (a, b, gap).
    let h = GridFunction::from_fn(BoxDomain::unit(2), vec![33, 33], |x| 0.5 - x[0]).unwrap();
    let crossing = dir.path().join("h_cross.json");
    fs::write(&crossing, h.to_json().unwrap()).unwrap();
    let out = dir.path().join("slag_cross");
    let (code, _) = run(&[
        "slag",
        "--grid",
        crossing.to_str().unwrap(),
        "--dim",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let witness = fs::read_to_string(out.join("witness_slag.json")).unwrap();
    for field in ["\"a\"", "\"b\"", "\"gap\""] {
        assert!(witness.contains(field), "witness missing {field}");
    }

    // Non-finite grid values: input error, exit 2.
    let nan = dir.path().join("h_nan.json");
    fs::write(
        &nan,
        r#"{"dims":1,"lower":[0.0],"upper":[1.0],"resolution":[3],"values":[0.0,null,0.2]}"#,
    )
    .unwrap();
    let (code, _) = run(&[
        "slag",
        "--grid",
        nan.to_str().unwrap(),
        "--dim",
        "2",
        "--out",
        dir.path().join("slag_nan").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let domain = BoxDomain::new(vec![-0.7, -0.7], vec![0.7, 0.7]).unwrap();
    let res = vec![17usize, 17];

    // Explicit affine-sphere solution pair.
    let mut coefficients = std::collections::BTreeMap::new();
    coefficients.insert(
        "h".to_string(),
        coeff_from_fn(&domain, &res, |x| {
            (0.6 - 0.5 * (x[0] * x[0] + x[1] * x[1])).powi(4)
        }),
    );
    let spec = OperatorSpecFile {
        kind: OperatorKind::HyperbolicAffineSphere,
        dim: 2,
        domain: DomainSpec {
            lower: domain.lower.clone(),
            upper: domain.upper.clone(),
        },
        coefficients,
        params: Default::default(),
        label: Some("ma-explicit".into()),
    };
    let spec_path = dir.path().join("spec.json");
    fs::write(&spec_path, spec.to_json().unwrap()).unwrap();

    let star = GridFunction::from_fn(domain.clone(), res.clone(), |x| {
        0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.6
    })
    .unwrap();
    let u = star.map_values(|v| v - 0.1);
    let u_path = dir.path().join("u.json");
    let v_path = dir.path().join("v.json");
    fs::write(&u_path, u.to_json().unwrap()).unwrap();
    fs::write(&v_path, star.to_json().unwrap()).unwrap();

    let out = dir.path().join("cmp_ok");
    let (code, log) = run(&[
        "compare",
        "--spec",
        spec_path.to_str().unwrap(),
        "--u",
        u_path.to_str().unwrap(),
        "--v",
        v_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "log: {log}");
    let csv = fs::read_to_string(out.join("violations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "no violations expected");

    // Corrupt one interior node of v: the precondition check names it.
    let mut corrupted = star.clone();
    let node = corrupted.interior_nodes().nth(40).unwrap();
    corrupted.values[node] -= 1.0;
    let bad_path = dir.path().join("v_bad.json");
    fs::write(&bad_path, corrupted.to_json().unwrap()).unwrap();
    let out = dir.path().join("cmp_bad");
    let (code, log) = run(&[
        "compare",
        "--spec",
        spec_path.to_str().unwrap(),
        "--u",
        u_path.to_str().unwrap(),
        "--v",
        bad_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(
        log.contains("precondition") && log.contains(&node.to_string()),
        "corruption must be localized: {log}"
    );

    // Dimension mismatch: exit 2.
    let one_d = GridFunction::from_fn(BoxDomain::unit(1), vec![9], |x| -x[0]).unwrap();
    let odd_path = dir.path().join("u1d.json");
    fs::write(&odd_path, one_d.to_json().unwrap()).unwrap();
    let (code, _) = run(&[
        "compare",
        "--spec",
        spec_path.to_str().unwrap(),
        "--u",
        odd_path.to_str().unwrap(),
        "--v",
        v_path.to_str().unwrap(),
        "--out",
        dir.path().join("cmp_dim").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}
