use std::io::Write;

use confperf::audit::{
    audit_coverage, audit_full_conformal, audit_lemmas, audit_naive_cv_demo, AuditKind, AuditSpec,
    ConformalScore, CoverageReport, GeneratorSpec, LemmaReport,
};
use confperf::learners::{learner_by_name, LossFn, SymbolAlphabet};
use confperf::subroutines::QuantRegBackend;

use crate::commands::{generator_spec, learner_params, subroutines};
use crate::config::{ensure_dir, Generator, Kind, Opts, Suite};
use crate::fail::{CliError, CliResult};

pub const LEMMA_NS: [usize; 4] = [5, 10, 50, 200];
pub const LEMMA_ALPHAS: [f64; 4] = [0.05, 0.3, 0.5, 0.9];

fn audit_kind(kind: Kind) -> AuditKind {
    match kind {
        Kind::Candidate => AuditKind::Candidate,
        Kind::Zfree => AuditKind::ZFree,
        Kind::ZmodFixed => AuditKind::ZModFixed,
        Kind::ZmodVar => AuditKind::ZModVariable,
        Kind::Symbolic => AuditKind::Symbolic,
        Kind::Samplewise => AuditKind::SampleWise,
    }
}

/// Default workload of each kind: generator, learner, `n_cal`, block size.
fn defaults(kind: AuditKind) -> (Generator, &'static str, usize, usize) {
    match kind {
        AuditKind::Candidate => (Generator::LinearNormal, "gd_erm", 999, 0),
        AuditKind::ZFree => (Generator::LinearStudent, "gd_erm", 999, 20),
        AuditKind::ZModFixed => (Generator::LinearNormal, "gd_erm", 200, 20),
        AuditKind::ZModVariable => (Generator::LinearHetero, "gd_erm", 200, 20),
        AuditKind::Symbolic => (Generator::Blobs, "knn", 200, 20),
        AuditKind::SampleWise => (Generator::LinearNormal, "gd_erm", 200, 5),
    }
}

fn kind_audit(opts: &Opts, kind: AuditKind, alpha: f64, trials: usize, force_fail: bool) -> CliResult<CoverageReport> {
    let (default_gen, default_learner, n_cal, m) = defaults(kind);
    let symbolic = kind == AuditKind::Symbolic;
    // A generator flag applies to the kinds whose task it matches.
    let mut gen = generator_spec(&Opts { generator: None, ..opts.clone() }, default_gen);
    if let Some(g) = opts.generator {
        let candidate = generator_spec(opts, g);
        if candidate.is_classification() == symbolic {
            gen = candidate;
        }
    }
    if !symbolic && kind != AuditKind::ZModVariable && opts.generator.is_none() && opts.d.is_none() {
        gen = match gen {
            GeneratorSpec::LinearNormal { sigma, .. } => GeneratorSpec::LinearNormal { d: 5, sigma },
            other => other,
        };
    }
    let learner_name = opts.learner.first().map(String::as_str).unwrap_or(default_learner);
    let learner = learner_by_name::<f64>(learner_name, &learner_params(opts))?;
    let loss = if symbolic {
        LossFn::symbolic(SymbolAlphabet::binary())
    } else {
        LossFn::squared_error()
    };
    let n_cal = if kind == AuditKind::SampleWise {
        opts.k_blocks.or(opts.k).unwrap_or(n_cal)
    } else {
        opts.k.unwrap_or(n_cal)
    };
    let mut spec = AuditSpec::new(kind, gen, alpha, n_cal, opts.m.unwrap_or(m))
        .replications(trials)
        .seed(opts.seed());
    spec.subroutines = subroutines(opts);
    if kind == AuditKind::ZModVariable && opts.quantreg.is_none() {
        spec.subroutines.quantreg.backend = QuantRegBackend::Knn;
    }
    spec.force_fail = force_fail;
    Ok(audit_coverage(&spec, learner.as_ref(), &loss)?)
}

fn full_conformal(opts: &Opts, alpha: f64, trials: usize) -> CliResult<CoverageReport> {
    let gen = match opts.generator {
        Some(g) if !matches!(g, Generator::Blobs | Generator::Glyphs) => generator_spec(opts, g),
        _ => GeneratorSpec::linear_normal(opts.d.unwrap_or(5)),
    };
    let name = opts.learner.first().map(String::as_str).unwrap_or("gd_erm");
    let learner = learner_by_name::<f64>(name, &learner_params(opts))?;
    let n = opts.n.unwrap_or(30);
    Ok(audit_full_conformal(
        &gen,
        learner.as_ref(),
        &ConformalScore::AbsResidual,
        alpha,
        n,
        100,
        (trials / 4).max(100),
        opts.seed(),
    )?)
}

fn write_reports(path: &std::path::Path, reports: &[CoverageReport]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_lemmas(path: &std::path::Path, report: &LemmaReport) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_report(out: &mut impl Write, r: &CoverageReport) -> CliResult<()> {
    let upper = if r.calibration_checked {
        format!("{:.4}", r.theory_upper)
    } else {
        "unchecked".to_string()
    };
    writeln!(
        out,
        "{:<14} N={:<6} coverage {:.4}  band [{:.4}, {}]  3sigma {:.4}  empty {:<4} {}",
        r.kind,
        r.replications,
        r.coverage,
        r.theory_lower,
        upper,
        3.0 * r.mc_sigma,
        r.empty_sets,
        verdict(r.pass)
    )?;
    Ok(())
}

pub fn cmd_audit(opts: &Opts) -> CliResult<()> {
    let alpha = opts.alpha()?;
    let trials = opts.trials(2000)?;
    let dir = opts.out_dir();
    ensure_dir(&dir)?;
    let mut stdout = std::io::stdout().lock();
    let mut reports = Vec::new();
    let mut lemma_pass = true;

    let suite = match (opts.suite, opts.kind, opts.force_fail) {
        (_, _, true) => None,
        (Some(s), _, _) => Some(s),
        (None, Some(_), _) => None,
        (None, None, _) => Some(Suite::Full),
    };
    match suite {
        None => {
            let kind = if opts.force_fail {
                AuditKind::Candidate
            } else {
                audit_kind(opts.kind.expect("kind set"))
            };
            reports.push(kind_audit(opts, kind, alpha, trials, opts.force_fail)?);
        }
        Some(Suite::Full) => {
            for kind in AuditKind::ALL {
                reports.push(kind_audit(opts, kind, alpha, trials, false)?);
            }
            reports.push(full_conformal(opts, alpha, trials)?);
        }
        Some(Suite::Conformal) => reports.push(full_conformal(opts, alpha, trials)?),
        Some(Suite::Naive) => {
            let gen = match opts.generator {
                Some(g) => generator_spec(opts, g),
                None => GeneratorSpec::linear_normal(opts.d.unwrap_or(2)),
            };
            let name = opts.learner.first().map(String::as_str).unwrap_or("knn");
            let mut params = learner_params(opts);
            params.knn_k = params.knn_k.or(Some(1));
            let learner = learner_by_name::<f64>(name, &params)?;
            let spec = AuditSpec::new(AuditKind::ZFree, gen, alpha, opts.k.unwrap_or(200), opts.m.unwrap_or(10))
                .replications(trials)
                .seed(opts.seed());
            let r = audit_naive_cv_demo(&spec, learner.as_ref(), &LossFn::squared_error())?;
            write_reports(&dir.join("naive.csv"), &[r.correct.clone(), r.naive.clone()])?;
            print_report(&mut stdout, &r.correct)?;
            writeln!(
                stdout,
                "{:<14} N={:<6} coverage {:.4}  (reported only; gap {:+.4})",
                r.naive.kind,
                r.naive.replications,
                r.naive.coverage,
                r.naive.coverage - r.correct.coverage
            )?;
            reports.push(r.correct);
        }
        Some(Suite::Lemmas) => {}
    }
    if matches!(suite, Some(Suite::Full) | Some(Suite::Lemmas)) {
        let lemmas = audit_lemmas(&LEMMA_NS, &LEMMA_ALPHAS, 10 * trials, opts.seed())?;
        write_lemmas(&dir.join("lemmas.csv"), &lemmas)?;
        for r in &lemmas.rows {
            writeln!(
                stdout,
                "lemma n={:<4} alpha={:<5} on {:.4} (expect {:.4}) {}  off {:.4} in [{:.4}, {:.4}] {}",
                r.n,
                r.alpha,
                r.on_freq,
                r.on_expected,
                verdict(r.on_pass),
                r.off_freq,
                r.off_lower,
                r.off_upper,
                verdict(r.off_pass)
            )?;
        }
        lemma_pass = lemmas.all_pass();
    }
    if !reports.is_empty() && suite != Some(Suite::Naive) {
        write_reports(&dir.join("audit.csv"), &reports)?;
        for r in &reports {
            print_report(&mut stdout, r)?;
        }
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.kind.as_str()).collect();
    if !failed.is_empty() || !lemma_pass {
        let mut what = failed.join(", ");
        if !lemma_pass {
            if !what.is_empty() {
                what.push_str(", ");
            }
            what.push_str("quantile lemmas");
        }
        return Err(CliError::AuditFailed(what));
    }
    Ok(())
}
