use std::io::Write;
use std::path::Path;

use confperf::cpp::format_endpoint;
use serde::Serialize;

use crate::experiment::{Observed, Set, TrialRow};
use crate::fail::{CliError, CliResult};

fn create(path: &Path) -> CliResult<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}

fn bound(v: f64) -> String {
    format_endpoint(v)
}

fn observed(o: &Observed) -> String {
    match o {
        Observed::Real(v) => bound(*v),
        Observed::Symbol(s) => s.clone(),
    }
}

/// Set columns: `lower, upper, width` for intervals, `set, set_size` for
/// symbol sets.
fn set_fields(set: &Set) -> Vec<String> {
    match set {
        Set::Interval(iv) => vec![bound(iv.lower), bound(iv.upper), bound(iv.width())],
        Set::Symbols(s) => vec![s.join("|"), s.len().to_string()],
    }
}

fn set_header(symbolic: bool) -> Vec<&'static str> {
    if symbolic {
        vec!["set", "set_size"]
    } else {
        vec!["lower", "upper", "width"]
    }
}

/// Per-trial records, in trial order.
pub fn write_trials(path: &Path, rows: &[TrialRow], symbolic: bool) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["trial_id", "method"];
    header.extend(set_header(symbolic));
    header.extend(["new_loss", "covered", "test_coverage_fraction", "avg_test_loss"]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.trial_id.to_string(), r.method.clone()];
        rec.extend(set_fields(&r.set));
        rec.extend([
            observed(&r.new_loss),
            u8::from(r.covered).to_string(),
            r.test_coverage_fraction.to_string(),
            r.avg_test_loss.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Interval at the `--query-point` for each trial and method.
pub fn write_query(path: &Path, rows: &[TrialRow], symbolic: bool) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["trial_id", "method"];
    header.extend(set_header(symbolic));
    w.write_record(&header)?;
    for r in rows {
        if let Some(q) = &r.query {
            let mut rec = vec![r.trial_id.to_string(), r.method.clone()];
            rec.extend(set_fields(q));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    trial_id: usize,
    method: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<&'a confperf::Interval64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    set: Option<&'a [String]>,
}

pub fn write_jsonl(path: &Path, rows: &[TrialRow]) -> CliResult<()> {
    let mut w = create(path)?;
    for r in rows {
        let (interval, set) = match &r.set {
            Set::Interval(iv) => (Some(iv), None),
            Set::Symbols(s) => (None, Some(s.as_slice())),
        };
        let j = JsonRow {
            trial_id: r.trial_id,
            method: &r.method,
            interval,
            set,
        };
        serde_json::to_writer(&mut w, &j)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub method: String,
    pub kind: String,
    pub alpha: f64,
    pub trials: usize,
    pub cover_mode: String,
    /// `new_loss_cover_rate` in single mode, `mean_test_coverage` in full.
    pub cover_rate: f64,
    pub new_loss_cover_rate: f64,
    pub mean_test_coverage: f64,
    pub mean_width: f64,
    pub median_width: f64,
    pub finite_sets: usize,
    pub empty_sets: usize,
    pub mean_avg_test_loss: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn summarize(method: &str, kind: &str, alpha: f64, full: bool, rows: &[&TrialRow]) -> Summary {
    let n = rows.len() as f64;
    let covered = rows.iter().filter(|r| r.covered).count() as f64 / n;
    let test_cov = rows.iter().map(|r| r.test_coverage_fraction).sum::<f64>() / n;
    let widths: Vec<f64> = rows.iter().map(|r| r.set.width()).filter(|w| w.is_finite()).collect();
    Summary {
        method: method.to_string(),
        kind: kind.to_string(),
        alpha,
        trials: rows.len(),
        cover_mode: if full { "full" } else { "single" }.to_string(),
        cover_rate: if full { test_cov } else { covered },
        new_loss_cover_rate: covered,
        mean_test_coverage: test_cov,
        mean_width: if widths.is_empty() { f64::NAN } else { widths.iter().sum::<f64>() / widths.len() as f64 },
        median_width: median(widths.clone()),
        finite_sets: widths.len(),
        empty_sets: rows.iter().filter(|r| r.set.is_empty()).count(),
        mean_avg_test_loss: rows.iter().map(|r| r.avg_test_loss).sum::<f64>() / n,
    }
}

pub fn write_summary(path: &Path, rows: &[Summary]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for s in rows {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// `bins` equal-width bins spanning the finite values; `(lo, hi, count)`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![(lo, hi, finite.len())];
    }
    let step = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in finite {
        let b = (((v - lo) / step) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + step * i as f64, if i + 1 == bins { hi } else { lo + step * (i + 1) as f64 }, c))
        .collect()
}

/// Plain-text histogram of set widths: comment lines, then `lo hi count`.
pub fn write_histogram(path: &Path, method: &str, widths: &[f64], bins: usize) -> CliResult<()> {
    let mut w = create(path)?;
    let finite = widths.iter().filter(|v| v.is_finite()).count();
    writeln!(w, "# method {method}")?;
    writeln!(w, "# finite {finite} of {}", widths.len())?;
    writeln!(w, "# lo hi count")?;
    for (lo, hi, c) in histogram(widths, bins) {
        writeln!(w, "{lo} {hi} {c}")?;
    }
    w.flush()?;
    Ok(())
}
