use std::collections::HashMap;
use std::io::Write;

use confperf::audit::{generate, GeneratorSpec};
use confperf::data::{read_csv_path, GridShape, RngStream, TargetKind};
use confperf::learners::{learner_by_name, Learner, LearnerParams, LossFn, LossKind, SymbolAlphabet};
use confperf::subroutines::{QuantRegBackend, SubroutineConfig};
use rayon::prelude::*;

use crate::config::{ensure_dir, CoverMode, Generator, Kind, LossArg, Opts, QuantRegArg, TaskArg};
use crate::experiment::{run_trial, Plan, Source, TrialRow};
use crate::fail::{CliError, CliResult};
use crate::report;

pub fn generator_spec(opts: &Opts, default: Generator) -> GeneratorSpec {
    let g = opts.generator.unwrap_or(default);
    let d = opts.d;
    let spec = match g {
        Generator::LinearNormal => GeneratorSpec::linear_normal(d.unwrap_or(5)),
        Generator::LinearStudent => GeneratorSpec::linear_student(d.unwrap_or(5)),
        Generator::LinearHetero => GeneratorSpec::linear_hetero(d.unwrap_or(2)),
        Generator::Blobs => GeneratorSpec::blobs(d.unwrap_or(2)),
        Generator::Glyphs => GeneratorSpec::glyphs(),
    };
    if opts.noiseless {
        spec.noiseless()
    } else {
        spec
    }
}

pub fn learner_params(opts: &Opts) -> LearnerParams {
    LearnerParams {
        step: opts.step,
        epochs: opts.epochs,
        knn_k: opts.knn_k,
    }
}

pub fn subroutines(opts: &Opts) -> SubroutineConfig {
    let mut cfg = SubroutineConfig::default();
    if let Some(q) = opts.quantreg {
        cfg.quantreg.backend = match q {
            QuantRegArg::Pinball => QuantRegBackend::PinballLinear,
            QuantRegArg::Knn => QuantRegBackend::Knn,
        };
    }
    if let Some(k) = opts.knn_k {
        cfg.quantreg.knn_k = k;
    }
    cfg.inner_alpha = opts.inner_alpha;
    cfg
}

pub fn cmd_gen(opts: &Opts) -> CliResult<()> {
    let spec = generator_spec(opts, Generator::LinearNormal);
    let n = opts.n.unwrap_or(1000);
    if n == 0 {
        return Err(CliError::Config("n must be at least 1".into()));
    }
    let data = generate::<f64, _>(&spec, n, &mut RngStream::new(opts.seed()).rng())?;
    match &opts.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            let f = std::fs::File::create(path)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
            confperf::data::write_csv(&data, std::io::BufWriter::new(f)).map_err(CliError::data)?;
        }
        None => confperf::data::write_csv(&data, std::io::stdout().lock()).map_err(CliError::data)?,
    }
    Ok(())
}

fn load_source(opts: &Opts) -> CliResult<Source> {
    if let Some(path) = &opts.data {
        let kind = match opts.task.unwrap_or(TaskArg::Regression) {
            TaskArg::Regression => TargetKind::Regression,
            TaskArg::Classification => TargetKind::Classification,
        };
        let mut data = read_csv_path::<f64>(path, kind)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if let Some((w, h)) = opts.grid_shape()? {
            let pixel_max = opts
                .pixel_max
                .ok_or_else(|| CliError::Config("--grid needs --pixel-max".into()))?;
            data = data.with_grid(GridShape { w, h, pixel_max }).map_err(CliError::data)?;
        }
        let total = data.len();
        let n = opts.n.unwrap_or(total * 3 / 4);
        if n == 0 || n >= total {
            return Err(CliError::Config(format!("n must lie in 1..{total} for a dataset of {total} records")));
        }
        Ok(Source::File { data, n })
    } else {
        let spec = generator_spec(opts, Generator::LinearNormal);
        let n = opts.n.unwrap_or(7500);
        let n_test = opts.n_test.unwrap_or(2500);
        if n == 0 || n_test == 0 {
            return Err(CliError::Config("n and n-test must be positive".into()));
        }
        Ok(Source::Generated { spec, n, n_test })
    }
}

fn loss_for(opts: &Opts, kind: Kind, classification: bool, n_classes: usize) -> CliResult<LossFn> {
    if kind == Kind::Symbolic {
        if !classification {
            return Err(CliError::Config("the symbolic kind needs a classification dataset".into()));
        }
        return Ok(LossFn::symbolic(SymbolAlphabet::for_classes(n_classes)));
    }
    let l = match opts.loss {
        Some(LossArg::Symbolic) => {
            return Err(CliError::Config("the symbolic loss goes with --kind symbolic".into()));
        }
        Some(LossArg::Squared) => LossFn::new(LossKind::SquaredError),
        Some(LossArg::Logistic) => LossFn::new(LossKind::LogisticPointwise),
        Some(LossArg::ZeroOne) => LossFn::new(LossKind::ZeroOne),
        None if classification => LossFn::logistic(),
        None => LossFn::squared_error(),
    };
    Ok(l)
}

type Methods = Vec<(String, Box<dyn Learner<f64>>)>;

fn methods(opts: &Opts, classification: bool) -> CliResult<Methods> {
    let names = if opts.learner.is_empty() {
        vec![if classification { "logistic" } else { "gd_erm" }.to_string()]
    } else {
        opts.learner.clone()
    };
    let params = learner_params(opts);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for n in &names {
        *counts.entry(n.as_str()).or_default() += 1;
    }
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let learner = learner_by_name::<f64>(name, &params)?;
            let label = if counts[name.as_str()] > 1 { format!("{name}#{i}") } else { name.clone() };
            Ok((label, learner))
        })
        .collect()
}

struct Outcome {
    rows: Vec<TrialRow>,
    summaries: Vec<report::Summary>,
    symbolic: bool,
    query: bool,
}

fn execute(opts: &Opts, compare: bool) -> CliResult<Outcome> {
    let alpha = opts.alpha()?;
    let trials = opts.trials(if compare { 100 } else { 1000 })?;
    let kind = opts.kind.unwrap_or(Kind::Candidate);
    let source = load_source(opts)?;
    let layout = source.layout()?;
    let classification = layout.task().is_classification();
    let loss = loss_for(opts, kind, classification, layout.n_classes())?;
    let methods = methods(opts, classification)?;
    if compare && methods.len() < 2 {
        return Err(CliError::Config("compare needs at least two --learner values".into()));
    }
    if !compare && methods.len() > 1 {
        return Err(CliError::Config("run takes one --learner; use compare for several".into()));
    }
    let frac_tr = opts.frac_tr.unwrap_or(0.5);
    if !(frac_tr > 0.0 && frac_tr < 1.0) {
        return Err(CliError::Config(format!("frac-tr must lie in (0, 1), got {frac_tr}")));
    }
    let query = match &opts.query_point {
        Some(row) => Some(
            layout
                .parse_row(row)
                .map_err(|e| CliError::Config(format!("query point: {e}")))?,
        ),
        None => None,
    };
    let default_k = match kind {
        Kind::Zfree => 100,
        _ => 50,
    };
    let plan = Plan {
        kind,
        alpha,
        loss,
        frac_tr,
        k: opts.k.unwrap_or(default_k),
        k_blocks: opts.k_blocks.unwrap_or(50),
        subroutines: subroutines(opts),
        source: &source,
        query,
    };
    let root = RngStream::new(opts.seed());
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = root.derive(t as u64);
            methods
                .iter()
                .map(|(name, l)| run_trial(&plan, name, l.as_ref(), t, &s))
                .collect::<CliResult<Vec<_>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    let full = opts.cover_mode == Some(CoverMode::Full);
    let kind_name = kind_name(kind);
    let summaries = methods
        .iter()
        .map(|(name, _)| {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| &r.method == name).collect();
            report::summarize(name, kind_name, alpha, full, &mine)
        })
        .collect();
    Ok(Outcome {
        rows,
        summaries,
        symbolic: kind == Kind::Symbolic,
        query: plan.query.is_some(),
    })
}

pub fn kind_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Candidate => "candidate",
        Kind::Zfree => "zfree",
        Kind::ZmodFixed => "zmod-fixed",
        Kind::ZmodVar => "zmod-var",
        Kind::Symbolic => "symbolic",
        Kind::Samplewise => "samplewise",
    }
}

fn print_summaries(summaries: &[report::Summary]) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    for s in summaries {
        writeln!(
            out,
            "{:<12} {:<10} trials {:>5}  cover rate {:.4} ({})  mean test coverage {:.4}  median width {}",
            s.method, s.kind, s.trials, s.cover_rate, s.cover_mode, s.mean_test_coverage, s.median_width
        )?;
    }
    Ok(())
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

pub fn cmd_run(opts: &Opts) -> CliResult<()> {
    let out = execute(opts, false)?;
    let dir = opts.out_dir();
    ensure_dir(&dir)?;
    let bins = opts.bins()?;
    report::write_trials(&dir.join("trials.csv"), &out.rows, out.symbolic)?;
    report::write_summary(&dir.join("summary.csv"), &out.summaries)?;
    report::write_jsonl(&dir.join("intervals.jsonl"), &out.rows)?;
    let widths: Vec<f64> = out.rows.iter().map(|r| r.set.width()).collect();
    report::write_histogram(&dir.join("width_hist.txt"), &out.summaries[0].method, &widths, bins)?;
    if out.query {
        report::write_query(&dir.join("query.csv"), &out.rows, out.symbolic)?;
    }
    print_summaries(&out.summaries)
}

pub fn cmd_compare(opts: &Opts) -> CliResult<()> {
    let out = execute(opts, true)?;
    let dir = opts.out_dir();
    ensure_dir(&dir)?;
    let bins = opts.bins()?;
    report::write_trials(&dir.join("compare.csv"), &out.rows, out.symbolic)?;
    report::write_summary(&dir.join("summary.csv"), &out.summaries)?;
    report::write_jsonl(&dir.join("intervals.jsonl"), &out.rows)?;
    for s in &out.summaries {
        let widths: Vec<f64> = out.rows.iter().filter(|r| r.method == s.method).map(|r| r.set.width()).collect();
        let path = dir.join(format!("width_hist_{}.txt", file_safe(&s.method)));
        report::write_histogram(&path, &s.method, &widths, bins)?;
    }
    if out.query {
        report::write_query(&dir.join("query.csv"), &out.rows, out.symbolic)?;
    }
    print_summaries(&out.summaries)
}
