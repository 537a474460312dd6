//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use confperf::audit::{
    audit_coverage, audit_full_conformal, audit_lemmas, generate, AuditKind, AuditSpec, ConformalScore, GeneratorSpec,
};
use confperf::cpp::{candidate_cpp_samplewise, candidate_cpp_with, interval_from_losses, zmod_fixed_fit, zmod_variable_fit};
use confperf::data::RngStream;
use confperf::learners::{learner_by_name, mse_gradient, mse_objective, softmax_objective, squared_error_gradient};
use confperf::learners::{LearnerParams, LossFn, SymbolAlphabet};
use confperf::subroutines::{pinball_objective, pinball_subgradient, QuantRegBackend, SubroutineConfig};
use confperf::{Dataset64, IntervalKind, LossSample64};
use rand::Rng;

const ALPHA: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn mc_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Coverage `hits / reps` inside `[1 - alpha - 3s, 1 - alpha + slack + 3s]`.
fn band(hits: usize, reps: usize, slack: Option<f64>) -> Outcome {
    let cov = hits as f64 / reps as f64;
    let s = mc_sigma(1.0 - ALPHA, reps);
    let lo = 1.0 - ALPHA - 3.0 * s;
    let hi = slack.map(|sl| 1.0 - ALPHA + sl + 3.0 * s);
    let pass = cov >= lo && hi.is_none_or(|h| cov <= h);
    let detail = match hi {
        Some(h) => format!("coverage {cov:.4} in [{lo:.4}, {h:.4}], N={reps}"),
        None => format!("coverage {cov:.4} >= {lo:.4}, N={reps}"),
    };
    Outcome { pass, detail }
}

fn coverage(kind: AuditKind, gen: GeneratorSpec, learner: &str, n_cal: usize, m: usize, reps: usize, cfg: SubroutineConfig) -> usize {
    let learner = learner_by_name::<f64>(learner, &LearnerParams::default()).unwrap();
    let loss = if kind == AuditKind::Symbolic {
        LossFn::symbolic(SymbolAlphabet::binary())
    } else {
        LossFn::squared_error()
    };
    let mut spec = AuditSpec::new(kind, gen, ALPHA, n_cal, m).replications(reps).seed(20261015);
    spec.subroutines = cfg;
    let r = audit_coverage(&spec, learner.as_ref(), &loss).unwrap();
    assert_eq!(r.replications, reps);
    r.hits
}

fn c1() -> Outcome {
    let n = 999;
    let hits = coverage(AuditKind::Candidate, GeneratorSpec::linear_normal(5), "gd_erm", n, 0, 5000, SubroutineConfig::default());
    band(hits, 5000, Some(2.0 / (n + 1) as f64))
}

fn c2() -> Outcome {
    let k = 999;
    let hits = coverage(AuditKind::ZFree, GeneratorSpec::linear_student(5), "gd_erm", k, 20, 2000, SubroutineConfig::default());
    band(hits, 2000, Some(2.0 / (k + 1) as f64))
}

fn c3() -> Outcome {
    let k = 200;
    let hits = coverage(AuditKind::ZModFixed, GeneratorSpec::linear_normal(5), "gd_erm", k, 20, 2000, SubroutineConfig::default());
    let mut out = band(hits, 2000, Some(1.0 / (k + 1) as f64));

    let s = RngStream::new(3);
    let data: Dataset64 = generate(&GeneratorSpec::linear_normal(5), 2 * k * 21, &mut s.derive(0).rng()).unwrap();
    let learner = learner_by_name::<f64>("gd_erm", &LearnerParams::default()).unwrap();
    let p = zmod_fixed_fit(&data, learner.as_ref(), &LossFn::squared_error(), ALPHA, k, &s.derive(1), &SubroutineConfig::default()).unwrap();
    let probe: Dataset64 = generate(&GeneratorSpec::linear_normal(5), 1000, &mut s.derive(2).rng()).unwrap();
    let widths: Vec<f64> = probe.records().map(|r| p.query(r).unwrap().width()).collect();
    let distinct = widths.iter().filter(|w| w.to_bits() != widths[0].to_bits()).count();
    out.pass &= distinct == 0;
    out.detail += &format!("; {distinct} of 1000 widths differ from {:.4}", widths[0]);
    out
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn knn_quantreg() -> SubroutineConfig {
    let mut cfg = SubroutineConfig::default();
    cfg.quantreg.backend = QuantRegBackend::Knn;
    cfg
}

fn c4() -> Outcome {
    let k = 200;
    let gen = GeneratorSpec::linear_hetero(2);
    let hits = coverage(AuditKind::ZModVariable, gen.clone(), "gd_erm", k, 20, 2000, knn_quantreg());
    let mut out = band(hits, 2000, Some(1.0 / (k + 1) as f64));

    let s = RngStream::new(4);
    let data: Dataset64 = generate(&gen, 2 * k * 21, &mut s.derive(0).rng()).unwrap();
    let learner = learner_by_name::<f64>("gd_erm", &LearnerParams::default()).unwrap();
    let p = zmod_variable_fit(&data, learner.as_ref(), &LossFn::squared_error(), ALPHA, k, &s.derive(1), &knn_quantreg()).unwrap();
    let probe: Dataset64 = generate(&gen, 1000, &mut s.derive(2).rng()).unwrap();
    let widths: Vec<f64> = probe.records().map(|r| p.query(r).unwrap().width()).collect();
    let scale: Vec<f64> = probe.records().map(|r| r.features[0].abs()).collect();
    let rho = spearman(&widths, &scale);
    out.pass &= rho > 0.0;
    out.detail += &format!("; spearman(width, |x1|) = {rho:.3}");
    out
}

fn c5() -> Outcome {
    let k = 200;
    let hits = coverage(AuditKind::Symbolic, GeneratorSpec::blobs(2), "knn", k, 20, 2000, SubroutineConfig::default());
    band(hits, 2000, Some(1.0 / (k + 1) as f64))
}

fn c6() -> Outcome {
    let hits = coverage(AuditKind::SampleWise, GeneratorSpec::linear_normal(5), "gd_erm", 200, 5, 2000, SubroutineConfig::default());
    let mut out = band(hits, 2000, None);

    let learner = learner_by_name::<f64>("gd_erm", &LearnerParams::default()).unwrap();
    let loss = LossFn::squared_error();
    let mut mismatches = 0;
    for seed in 0..20u64 {
        let s = RngStream::new(seed);
        let data: Dataset64 = generate(&GeneratorSpec::linear_normal(5), 400 + seed as usize, &mut s.derive(0).rng()).unwrap();
        let point = candidate_cpp_with(&data, learner.as_ref(), &loss, ALPHA, 0.5, &s.derive(1)).unwrap();
        let n_cp = point.plan.i_cp.len();
        let sw = candidate_cpp_samplewise(&data, learner.as_ref(), &loss, ALPHA, 0.5, n_cp, &s.derive(1)).unwrap();
        let same = point.interval.lower.to_bits() == sw.interval.lower.to_bits()
            && point.interval.upper.to_bits() == sw.interval.upper.to_bits();
        mismatches += usize::from(!same);
    }
    out.pass &= mismatches == 0;
    out.detail += &format!("; k_blocks=|I_CP| reduction mismatches {mismatches}/20");
    out
}

/// `x` rounded to the nearest integer when within `1e-9` of it.
fn snap(x: f64) -> f64 {
    if (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0) {
        x.round()
    } else {
        x
    }
}

fn c7() -> Outcome {
    let ns = [5, 10, 50, 200];
    let alphas = [0.05, 0.3, 0.5, 0.9];
    let reps = 20_000;
    let report = audit_lemmas(&ns, &alphas, reps, 7).unwrap();
    let mut bad = Vec::new();
    for row in &report.rows {
        let n = row.n as f64;
        let on = snap(n * row.alpha).ceil() / n;
        let on_ok = (row.on_freq - on).abs() <= 3.0 * mc_sigma(on, reps) + 1e-12;
        let (lo, hi) = (row.alpha, row.alpha + 1.0 / (n + 1.0));
        let s = mc_sigma(lo, reps).max(mc_sigma(hi.min(1.0), reps));
        let off_ok = row.off_freq >= lo - 3.0 * s && row.off_freq <= hi + 3.0 * s;
        if !(on_ok && off_ok) {
            bad.push(format!("(n={}, a={})", row.n, row.alpha));
        }
    }
    Outcome {
        pass: bad.is_empty() && report.rows.len() == ns.len() * alphas.len(),
        detail: format!("{} cells, N={reps} each, out of band: {:?}", report.rows.len(), bad),
    }
}

/// Sort-based order statistic `U_(ceil(n level))`, clamped to `1..=n`.
fn sorted_quantile(v: &[f64], level: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let r = (snap(s.len() as f64 * level).ceil() as usize).clamp(1, s.len());
    s[r - 1]
}

fn c8() -> Outcome {
    let mut rng = RngStream::new(8).rng();
    let alphas: Vec<f64> = (1..=25).map(|i| 0.02 * i as f64).collect();
    let draws = 10_000;
    let mut violations = 0;
    let mut checks = 0;
    for t in 0..draws {
        let n = 1 + t % 20;
        // Coarse values force ties on about half the draws.
        let coarse = t % 2 == 0;
        let mut draw = || if coarse { rng.random_range(0..5) as f64 } else { rng.random::<f64>() };
        let v: Vec<f64> = (0..n).map(|_| draw()).collect();
        let u = draw();
        let mut aug = v.clone();
        aug.push(u);
        let sample = LossSample64::new(v).unwrap();
        for &a in &alphas {
            let iv = interval_from_losses(&sample, a, IntervalKind::Candidate).unwrap();
            let left = iv.contains(u);
            let right = sorted_quantile(&aug, a / 2.0) <= u && u <= sorted_quantile(&aug, 1.0 - a / 2.0);
            violations += usize::from(left != right);
            checks += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations in {checks} checks, n <= 20"),
    }
}

fn c9() -> Outcome {
    let learner = learner_by_name::<f64>("gd_erm", &LearnerParams::default()).unwrap();
    let reps = 500;
    let r = audit_full_conformal(&GeneratorSpec::linear_normal(5), learner.as_ref(), &ConformalScore::AbsResidual, ALPHA, 30, 100, reps, 9)
        .unwrap();
    let mut out = band(r.hits, reps, None);
    out.detail += &format!("; empty grid sets {}", r.empty_sets);
    out
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn central<F: Fn(&[f64]) -> f64>(f: F, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let (mut a, mut b) = (w.to_vec(), w.to_vec());
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn worst(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(&a, &n)| rel_err(a, n)).fold(0.0, f64::max)
}

fn c10() -> Outcome {
    let mut rng = RngStream::new(10).rng();
    let (mut sq, mut sm, mut pb) = (0.0f64, 0.0f64, 0.0f64);
    let h = 1e-5;
    for _ in 0..100 {
        let d = rng.random_range(1..6);
        let n = rng.random_range(5..30);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        sq = sq.max(worst(&mse_gradient(&w, &x, &y), &central(|v| mse_objective(v, &x, &y), &w, h)));
        let g1 = squared_error_gradient(&w, &x[..d], y[0]);
        let f1 = |v: &[f64]| {
            let r: f64 = v.iter().zip(&x[..d]).map(|(a, b)| a * b).sum::<f64>() - y[0];
            r * r
        };
        sq = sq.max(worst(&g1, &central(f1, &w, h)));

        let c = rng.random_range(2..5);
        let weights: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let (_, gw, gb) = softmax_objective(&weights, &bias, &x, &labels);
        let fw = central(|v| softmax_objective(v, &bias, &x, &labels).0, &weights, h);
        let fb = central(|v| softmax_objective(&weights, v, &x, &labels).0, &bias, h);
        sm = sm.max(worst(&gw, &fw)).max(worst(&gb, &fb));

        // Redraw until every residual is far from the kink.
        let tau = rng.random_range(0.05..0.95);
        let theta = loop {
            let t: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let smooth = x.chunks(d).zip(&y).all(|(row, &yi)| {
                let pred = t[0] + t[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                (yi - pred).abs() > 1e-3
            });
            if smooth {
                break t;
            }
        };
        let g = pinball_subgradient(&theta, &x, &y, tau);
        pb = pb.max(worst(&g, &central(|v| pinball_objective(v, &x, &y, tau), &theta, h)));
    }
    Outcome {
        pass: sq <= 1e-6 && sm <= 1e-6 && pb <= 1e-5,
        detail: format!("max rel err: squared {sq:.2e}, softmax {sm:.2e}, pinball {pb:.2e} over 100 points"),
    }
}

fn confperf(args: &[&str], out: &Path) -> (Vec<u8>, i32) {
    let o = Command::new(env!("CARGO_BIN_EXE_confperf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn confperf");
    (o.stdout, o.status.code().unwrap_or(-1))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn c11() -> Outcome {
    let glyphs = concat!(env!("CARGO_MANIFEST_DIR"), "/data/glyphs.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--kind", "zfree", "--generator", "linear-student", "--trials", "40", "--seed", "5"],
        vec!["run", "--kind", "zmod-var", "--generator", "linear-hetero", "--trials", "20", "--seed", "6"],
        vec!["compare", "--data", glyphs, "--task", "classification", "--learner", "logistic", "--learner", "knn", "--kind", "candidate", "--trials", "20"],
        vec!["audit", "--trials", "200", "--seed", "3"],
        vec!["audit", "--suite", "naive", "--trials", "100"],
    ];
    let mut diffs = Vec::new();
    for args in &cases {
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let tmp = tempfile::tempdir().unwrap();
            let mut a = args.clone();
            a.extend(["--threads", threads]);
            let (stdout, code) = confperf(&a, tmp.path());
            outputs.push((stdout, code, dir_bytes(tmp.path())));
        }
        if outputs[0] != outputs[1] || outputs[0].2.is_empty() {
            diffs.push(args[..2].join(" "));
        }
    }
    Outcome {
        pass: diffs.is_empty(),
        detail: format!("{} invocations compared at 1 and 8 threads, differing: {:?}", cases.len(), diffs),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("candidate validity and calibration", c1),
        ("z-free algorithm coverage", c2),
        ("z-modulated fixed width", c3),
        ("z-modulated variable width", c4),
        ("symbolic coverage", c5),
        ("sample-wise candidate", c6),
        ("quantile lemma grid", c7),
        ("interval equivalence identity", c8),
        ("full conformal oracle", c9),
        ("gradient checks", c10),
        ("determinism across thread counts", c11),
    ];
    // Lets `cargo test <filter>` skip this target unless asked for.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        failed += usize::from(!out.pass);
        println!(
            "criterion {:>2} {}: {} ({}) [{:.1}s]",
            i + 1,
            name,
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
