//! Command-line front end: load operator specs and grids, run
//! certifications and harnesses, emit JSON certificates and CSV summaries.
//!
//! Exit codes: 0 pass, 1 mathematical refutation (with witness files),
//! 2 input error, 3 inconclusive. Reports are byte-identical across runs
//! with the same configuration; wall-clock metadata goes to a separate
//! `run_meta.json` so the certificates themselves stay reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jetcert::grid::{compare_with_tol, CheckStatus, GridFunction};
use jetcert::map::{BoxDomain, CertVerdict, SearchBudget};
use jetcert::operators::{certify_pair, check_rc, correspondence_check, OperatorSpecFile};
use jetcert::slag::certify_slag_continuity;

const EXIT_PASS: u8 = 0;
const EXIT_REFUTED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "jetcert",
    about = "Certification toolkit for gradient-free nonlinear potential theory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Output directory for reports (created if missing).
    #[arg(long, default_value = "jetcert-out")]
    out: PathBuf,
    /// Master seed recorded in every report.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Per-cell sample budget: (x, y) pairs.
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Jets examined per sampled pair.
    #[arg(long, default_value_t = 16)]
    jets: usize,
    /// Translation sizes eta, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.5, 1.0])]
    etas: Vec<f64>,
    /// Jet sample |r| bound.
    #[arg(long, default_value_t = 10.0)]
    r_bound: f64,
    /// Jet sample eigenvalue scale.
    #[arg(long, default_value_t = 1e3)]
    eig_scale: f64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the structural conditions of an operator spec and write
    /// pair/RC/correspondence certificates plus a CSV summary.
    CertifyOperator {
        /// Operator spec JSON.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Phase analysis of a special Lagrangian phase grid: certify or
    /// refute continuity of the induced constraint map.
    Slag {
        /// Phase function grid JSON.
        #[arg(long)]
        grid: PathBuf,
        /// Matrix dimension N of the phase operator.
        #[arg(long)]
        dim: usize,
        /// Independent validation draws in the certified case.
        #[arg(long, default_value_t = 20000)]
        draws: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Comparison harness: check that u <= v propagates from the boundary
    /// for a subharmonic/superharmonic pair of an operator's branch map.
    Compare {
        /// Operator spec JSON defining the constraint map.
        #[arg(long)]
        spec: PathBuf,
        /// Candidate subharmonic grid JSON.
        #[arg(long)]
        u: PathBuf,
        /// Candidate superharmonic grid JSON.
        #[arg(long)]
        v: PathBuf,
        /// Absolute tolerance for the boundary and interior inequalities.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_INPUT
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8, jetcert::Error> {
    match cli.command {
        Command::CertifyOperator { spec, common } => {
            setup_threads(&common)?;
            cmd_certify_operator(&spec, &common)
        }
        Command::Slag {
            grid,
            dim,
            draws,
            common,
        } => {
            setup_threads(&common)?;
            cmd_slag(&grid, dim, draws, &common)
        }
        Command::Compare {
            spec,
            u,
            v,
            tol,
            common,
        } => {
            setup_threads(&common)?;
            cmd_compare(&spec, &u, &v, tol, &common)
        }
    }
}

fn setup_threads(common: &CommonOpts) -> Result<(), jetcert::Error> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| jetcert::Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn budget_from(common: &CommonOpts) -> SearchBudget {
    SearchBudget::new(common.seed)
        .with_pairs(common.samples, common.jets)
        .with_jet_box((-common.r_bound, common.r_bound), common.eig_scale)
}

fn write_report(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, jetcert::Error> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_meta(dir: &Path, command: &str, seed: u64) -> Result<(), jetcert::Error> {
    // Wall-clock data lives apart from the deterministic reports.
    let meta = serde_json::json!({
        "command": command,
        "seed": seed,
        "timestamp_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_report(dir, "run_meta.json", &serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn interior_region(domain: &BoxDomain) -> BoxDomain {
    // Compactly contained evaluation region: shave one percent per side.
    let mut lower = domain.lower.clone();
    let mut upper = domain.upper.clone();
    for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
        let pad = 0.01 * (*u - *l);
        *l += pad;
        *u -= pad;
    }
    BoxDomain::new(lower, upper).expect("domain shaving")
}

fn cmd_certify_operator(spec_path: &Path, common: &CommonOpts) -> Result<u8, jetcert::Error> {
    let text = fs::read_to_string(spec_path)?;
    let file = OperatorSpecFile::from_json(&text)?;
    let op = file.build()?;
    let budget = budget_from(common);
    let region = interior_region(&op.domain);

    let pair = certify_pair(&op, &region, &budget)?;
    let rc = check_rc(&op, &common.etas, &region, &budget)?;
    let corr = correspondence_check(&op, &region, &budget)?;

    write_meta(&common.out, "certify-operator", common.seed)?;
    write_report(&common.out, "pair_certificate.json", &pair.to_json()?)?;
    write_report(&common.out, "rc_certificate.json", &rc.to_json()?)?;
    write_report(
        &common.out,
        "correspondence.json",
        &serde_json::to_string_pretty(&corr)?,
    )?;

    let rc_pass = rc.verdict == CertVerdict::Certified;
    let cell = |b: bool| if b { "pass" } else { "fail" };
    let summary = format!(
        "label,PEP,PB1,PB2,NDC,RC,correspondence\n{},{},{},{},{},{},{}\n",
        pair.label,
        cell(pair.pep.pass),
        cell(pair.pb1.pass),
        pair.pb2
            .as_ref()
            .map_or("n/a".into(), |c| cell(c.pass).to_string()),
        cell(pair.ndc.pass),
        cell(rc_pass),
        cell(corr.pass),
    );
    write_report(&common.out, "summary.csv", &summary)?;

    let all_pass = pair.pass() && rc_pass && corr.pass;
    if all_pass {
        println!("certify-operator {}: all conditions pass", pair.label);
        return Ok(EXIT_PASS);
    }
    for (cond, result) in [
        ("pep", Some(&pair.pep)),
        ("pb1", Some(&pair.pb1)),
        ("pb2", pair.pb2.as_ref()),
        ("ndc", Some(&pair.ndc)),
        ("f_uc", pair.f_uc.as_ref()),
    ] {
        if let Some(r) = result {
            if !r.pass {
                write_report(
                    &common.out,
                    &format!("witness_{cond}.json"),
                    &serde_json::to_string_pretty(&r.witness)?,
                )?;
            }
        }
    }
    if !rc_pass {
        write_report(
            &common.out,
            "witness_rc.json",
            &serde_json::to_string_pretty(&rc.witness)?,
        )?;
    }
    if !corr.pass {
        write_report(
            &common.out,
            "witness_correspondence.json",
            &serde_json::to_string_pretty(&corr.mismatches)?,
        )?;
    }
    println!(
        "certify-operator {}: conditions failed; witnesses in {}",
        pair.label,
        common.out.display()
    );
    if rc.verdict == CertVerdict::Inconclusive && pair.pass() && corr.pass {
        return Ok(EXIT_INCONCLUSIVE);
    }
    Ok(EXIT_REFUTED)
}

fn cmd_slag(
    grid_path: &Path,
    dim: usize,
    draws: usize,
    common: &CommonOpts,
) -> Result<u8, jetcert::Error> {
    let text = fs::read_to_string(grid_path)?;
    let h = GridFunction::from_json(&text)?;
    let report = certify_slag_continuity(&h, dim, &common.etas, draws, common.seed)?;

    write_meta(&common.out, "slag", common.seed)?;
    write_report(&common.out, "phase_report.json", &report.to_json()?)?;
    match report.verdict {
        CertVerdict::Certified => {
            println!(
                "slag: certified (phase interval {:?})",
                report.interval_index_of_range
            );
            Ok(EXIT_PASS)
        }
        CertVerdict::Refuted => {
            write_report(
                &common.out,
                "witness_slag.json",
                &serde_json::to_string_pretty(&report.witness)?,
            )?;
            println!("slag: refuted; witness in {}", common.out.display());
            Ok(EXIT_REFUTED)
        }
        CertVerdict::Inconclusive => {
            println!("slag: inconclusive");
            Ok(EXIT_INCONCLUSIVE)
        }
    }
}

fn cmd_compare(
    spec_path: &Path,
    u_path: &Path,
    v_path: &Path,
    tol: Option<f64>,
    common: &CommonOpts,
) -> Result<u8, jetcert::Error> {
    let file = OperatorSpecFile::from_json(&fs::read_to_string(spec_path)?)?;
    let op = file.build()?;
    let u = GridFunction::from_json(&fs::read_to_string(u_path)?)?;
    let v = GridFunction::from_json(&fs::read_to_string(v_path)?)?;
    if u.dim() != op.dim || v.dim() != op.dim {
        return Err(jetcert::Error::DimensionMismatch {
            expected: op.dim,
            got: u.dim().max(v.dim()),
        });
    }
    let map = op.theta_from_pair();
    let verdict = compare_with_tol(&u, &v, &map, tol)?;

    write_meta(&common.out, "compare", common.seed)?;
    write_report(
        &common.out,
        "comparison_verdict.json",
        &serde_json::to_string_pretty(&verdict)?,
    )?;
    let mut csv = String::from("node,coords,violation\n");
    for viol in &verdict.violations {
        csv.push_str(&format!(
            "{},\"{:?}\",{}\n",
            viol.node, viol.coords, viol.value
        ));
    }
    write_report(&common.out, "violations.csv", &csv)?;

    match verdict.status {
        CheckStatus::Pass | CheckStatus::VacuousPass => {
            println!("compare: pass");
            Ok(EXIT_PASS)
        }
        CheckStatus::PreconditionFailed => {
            println!(
                "compare: precondition failed ({})",
                verdict.precondition.as_deref().unwrap_or("unknown")
            );
            Ok(EXIT_REFUTED)
        }
        CheckStatus::Violations => {
            println!(
                "compare: THEOREM-CONTRADICTION with {} violations (see violations.csv)",
                verdict.violations.len()
            );
            Ok(EXIT_REFUTED)
        }
    }
}
