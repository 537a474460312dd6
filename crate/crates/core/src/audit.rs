//! Monte Carlo audits of the coverage guarantees.
//!
//! Each audit repeats a construction on freshly generated data and counts
//! how often the prediction set contains the loss actually incurred. The
//! observed rate is compared with the theoretical band widened by three
//! binomial standard errors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::Serialize;

use crate::cpp::{
    candidate_cpp, candidate_cpp_samplewise, symbolic_cpp, zfree_cpp, zmod_fixed_fit, zmod_variable_fit,
    interval_from_losses, IntervalKind,
};
use crate::data::{split_zfree, Dataset, GridShape, Record, RngStream, Target};
use crate::error::{Error, Result};
use crate::learners::{loss_eval_sample, Candidate, Learner, LossFn};
use crate::quantile::{off_sample_level, quantile_rank, LossSample, QuantileLevel, Rank};
use crate::scalar::Real;
use crate::subroutines::SubroutineConfig;

/// Synthetic data generators. Linear models use `w* = (1, ..., 1)` and
/// isotropic standard normal inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum GeneratorSpec {
    /// `y = <w*, x> + e`, `e ~ N(0, sigma^2)`.
    LinearNormal { d: usize, sigma: f64 },
    /// `y = <w*, x> + e`, `e` Student-t with `df` degrees of freedom.
    LinearStudentT { d: usize, df: f64 },
    /// Noise standard deviation `sigma * |x_1|`.
    LinearHetero { d: usize, sigma: f64 },
    /// Gaussian clusters with unit spread around well separated centres.
    Blobs { d: usize, classes: usize, spread: f64 },
    /// 8x8 stroke images in four classes with pixel values in `0..=16`.
    Glyphs { noise: f64 },
}

impl GeneratorSpec {
    pub fn linear_normal(d: usize) -> Self {
        GeneratorSpec::LinearNormal { d, sigma: 2.2 }
    }

    pub fn linear_student(d: usize) -> Self {
        GeneratorSpec::LinearStudentT { d, df: 2.1 }
    }

    pub fn linear_hetero(d: usize) -> Self {
        GeneratorSpec::LinearHetero { d, sigma: 2.0 }
    }

    pub fn blobs(d: usize) -> Self {
        GeneratorSpec::Blobs { d, classes: 2, spread: 1.0 }
    }

    pub fn glyphs() -> Self {
        GeneratorSpec::Glyphs { noise: 6.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::LinearNormal { .. } => "linear-normal",
            GeneratorSpec::LinearStudentT { .. } => "linear-student",
            GeneratorSpec::LinearHetero { .. } => "linear-hetero",
            GeneratorSpec::Blobs { .. } => "blobs",
            GeneratorSpec::Glyphs { .. } => "glyphs",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, GeneratorSpec::Blobs { .. } | GeneratorSpec::Glyphs { .. })
    }

    /// Same family with the noise switched off.
    pub fn noiseless(self) -> Self {
        match self {
            GeneratorSpec::LinearNormal { d, .. }
            | GeneratorSpec::LinearStudentT { d, .. }
            | GeneratorSpec::LinearHetero { d, .. } => GeneratorSpec::LinearNormal { d, sigma: 0.0 },
            GeneratorSpec::Blobs { d, classes, .. } => GeneratorSpec::Blobs { d, classes, spread: 0.0 },
            GeneratorSpec::Glyphs { .. } => GeneratorSpec::Glyphs { noise: 0.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("{}: {m}", self.name())));
        match *self {
            GeneratorSpec::LinearNormal { d, sigma } | GeneratorSpec::LinearHetero { d, sigma } => {
                if d == 0 {
                    return bad("d must be positive");
                }
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return bad("sigma must be finite and non-negative");
                }
            }
            GeneratorSpec::LinearStudentT { d, df } => {
                if d == 0 {
                    return bad("d must be positive");
                }
                if !(df > 0.0 && df.is_finite()) {
                    return bad("df must be positive");
                }
            }
            GeneratorSpec::Blobs { d, classes, spread } => {
                if d == 0 || classes < 2 {
                    return bad("need d >= 1 and at least two classes");
                }
                if !(spread >= 0.0 && spread.is_finite()) {
                    return bad("spread must be finite and non-negative");
                }
            }
            GeneratorSpec::Glyphs { noise } => {
                if !(noise >= 0.0 && noise.is_finite()) {
                    return bad("noise must be finite and non-negative");
                }
            }
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

const GLYPH_SIDE: usize = 8;
pub const GLYPH_CLASSES: usize = 4;

fn glyph_template(class: usize, r: i64, c: i64) -> f64 {
    let on = match class {
        0 => (3..=4).contains(&c) && (1..=6).contains(&r),
        1 => (3..=4).contains(&r) && (1..=6).contains(&c),
        2 => (r + c - 7).abs() <= 1 && (1..=6).contains(&r),
        _ => {
            let border = r == 1 || r == 6 || c == 1 || c == 6;
            border && (1..=6).contains(&r) && (1..=6).contains(&c)
        }
    };
    if on {
        1.0
    } else {
        0.0
    }
}

/// Draws `n` records from `spec`.
pub fn generate<T: Real, R: Rng + ?Sized>(spec: &GeneratorSpec, n: usize, rng: &mut R) -> Result<Dataset<T>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::DatasetTooSmall { need: 1, have: 0 });
    }
    match *spec {
        GeneratorSpec::LinearNormal { d, .. }
        | GeneratorSpec::LinearStudentT { d, .. }
        | GeneratorSpec::LinearHetero { d, .. } => {
            let student = match *spec {
                GeneratorSpec::LinearStudentT { df, .. } => {
                    Some(StudentT::new(df).map_err(|e| Error::InvalidParameter(e.to_string()))?)
                }
                _ => None,
            };
            let mut x = Vec::with_capacity(n * d);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
                let noise = match *spec {
                    GeneratorSpec::LinearNormal { sigma, .. } => sigma * normal(rng),
                    GeneratorSpec::LinearHetero { sigma, .. } => sigma * row[0].abs() * normal(rng),
                    _ => student.as_ref().expect("student-t noise").sample(rng),
                };
                y.push(T::of(row.iter().sum::<f64>() + noise));
                x.extend(row.into_iter().map(T::of));
            }
            Dataset::regression(x, d, y)
        }
        GeneratorSpec::Blobs { d, classes, spread } => {
            let mut x = Vec::with_capacity(n * d);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let label = rng.random_range(0..classes);
                let axis = label % d;
                let sign = if (label / d) % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..d {
                    let centre = if j == axis { 1.5 * sign } else { 0.0 };
                    x.push(T::of(centre + spread * normal(rng)));
                }
                y.push(label);
            }
            let names = (0..classes).map(|c| c.to_string()).collect();
            Dataset::classification(x, d, y, names)
        }
        GeneratorSpec::Glyphs { noise } => {
            let side = GLYPH_SIDE as i64;
            let mut x = Vec::with_capacity(n * GLYPH_SIDE * GLYPH_SIDE);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let label = rng.random_range(0..GLYPH_CLASSES);
                let dr = rng.random_range(-1..=1i64);
                let dc = rng.random_range(-1..=1i64);
                let ink = 16.0 * rng.random_range(0.6..=1.0);
                for r in 0..side {
                    for c in 0..side {
                        let v = ink * glyph_template(label, r - dr, c - dc) + noise * normal(rng);
                        x.push(T::of(v.round().clamp(0.0, 16.0)));
                    }
                }
                y.push(label);
            }
            let names = (0..GLYPH_CLASSES).map(|c| c.to_string()).collect();
            Dataset::classification(x, GLYPH_SIDE * GLYPH_SIDE, y, names)?.with_grid(GridShape {
                w: GLYPH_SIDE,
                h: GLYPH_SIDE,
                pixel_max: 16.0,
            })
        }
    }
}

/// Construction under audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AuditKind {
    Candidate,
    ZFree,
    ZModFixed,
    ZModVariable,
    Symbolic,
    SampleWise,
}

impl AuditKind {
    pub const ALL: [AuditKind; 6] = [
        AuditKind::Candidate,
        AuditKind::ZFree,
        AuditKind::ZModFixed,
        AuditKind::ZModVariable,
        AuditKind::Symbolic,
        AuditKind::SampleWise,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AuditKind::Candidate => "candidate",
            AuditKind::ZFree => "zfree",
            AuditKind::ZModFixed => "zmod-fixed",
            AuditKind::ZModVariable => "zmod-var",
            AuditKind::Symbolic => "symbolic",
            AuditKind::SampleWise => "samplewise",
        }
    }

    /// Calibration slack above `1 - alpha` for `n_cal` calibration scores.
    pub fn slack(&self, n_cal: usize) -> f64 {
        let n = n_cal as f64;
        match self {
            AuditKind::Candidate | AuditKind::ZFree | AuditKind::SampleWise => 2.0 / (n + 1.0),
            AuditKind::ZModFixed | AuditKind::ZModVariable | AuditKind::Symbolic => 1.0 / (n + 1.0),
        }
    }

    /// Dataset size that gives exactly `n_cal` calibration scores with
    /// blocks of `m` records.
    pub fn dataset_size(&self, n_cal: usize, m: usize) -> usize {
        match self {
            AuditKind::Candidate => 2 * n_cal,
            AuditKind::ZFree => n_cal * (m + 1),
            AuditKind::ZModFixed | AuditKind::ZModVariable => 2 * n_cal * (m + 1),
            AuditKind::Symbolic => 3 * n_cal * (m + 1),
            AuditKind::SampleWise => 2 * n_cal * m,
        }
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuditKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AuditKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown kind `{s}`")))
    }
}

/// Everything an audit needs besides the learner and the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditSpec {
    pub kind: AuditKind,
    pub generator: GeneratorSpec,
    pub alpha: f64,
    /// Number of calibration scores: `|I_CP|` for candidate, `k` for the
    /// anchored kinds, `k_blocks` for sample-wise.
    pub n_cal: usize,
    /// Block size `m` of the anchored and sample-wise kinds.
    pub block_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub subroutines: SubroutineConfig,
    /// Negative control: replaces the candidate upper level by `1 - 2 alpha`.
    pub force_fail: bool,
}

impl AuditSpec {
    pub fn new(kind: AuditKind, generator: GeneratorSpec, alpha: f64, n_cal: usize, block_size: usize) -> Self {
        Self {
            kind,
            generator,
            alpha,
            n_cal,
            block_size,
            replications: 2000,
            seed: 0,
            subroutines: SubroutineConfig::default(),
            force_fail: false,
        }
    }

    pub fn replications(mut self, n: usize) -> Self {
        self.replications = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Observed coverage against the theoretical band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub kind: String,
    pub alpha: f64,
    pub n_cal: usize,
    pub replications: usize,
    pub hits: usize,
    pub coverage: f64,
    pub theory_lower: f64,
    pub theory_upper: f64,
    pub mc_sigma: f64,
    /// The upper bound needs tie-free scores; it is not checked otherwise.
    pub calibration_checked: bool,
    pub empty_sets: usize,
    pub pass: bool,
}

impl CoverageReport {
    pub fn new(kind: &str, alpha: f64, n_cal: usize, slack: f64, hits: usize, replications: usize, calibration_checked: bool) -> Self {
        let coverage = hits as f64 / replications as f64;
        let mut r = Self {
            kind: kind.to_string(),
            alpha,
            n_cal,
            replications,
            hits,
            coverage,
            theory_lower: 1.0 - alpha,
            theory_upper: 1.0 - alpha + slack,
            mc_sigma: (coverage * (1.0 - coverage) / replications as f64).sqrt(),
            calibration_checked,
            empty_sets: 0,
            pass: false,
        };
        r.pass = r.recompute_pass();
        r
    }

    /// The pass flag as implied by the other fields.
    pub fn recompute_pass(&self) -> bool {
        let tol = 3.0 * self.mc_sigma;
        let low = self.coverage >= self.theory_lower - tol;
        let high = !self.calibration_checked || self.coverage <= self.theory_upper + tol;
        low && high
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Outcome {
    covered: bool,
    empty: bool,
}

fn check_replications(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidParameter(format!("need at least {min} replications, got {n}")));
    }
    Ok(())
}

fn run_replications<F>(n: usize, root: RngStream, f: F) -> Result<Vec<Outcome>>
where
    F: Fn(RngStream) -> Result<Outcome> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            f(root.derive(i as u64)).map_err(|e| Error::Replication {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn fresh_candidate(
    spec: &AuditSpec,
    learner: &dyn Learner<f64>,
    m: usize,
    stream: &RngStream,
) -> Result<(Candidate<f64>, Dataset<f64>)> {
    let sample = generate::<f64, _>(&spec.generator, m, &mut stream.derive_named("sample").rng())?;
    let cand = learner.fit(&sample, &mut stream.derive_named("fit").rng())?;
    let point = generate::<f64, _>(&spec.generator, 1, &mut stream.derive_named("point").rng())?;
    Ok((cand, point))
}

fn replicate(spec: &AuditSpec, learner: &dyn Learner<f64>, loss: &LossFn, stream: RngStream) -> Result<Outcome> {
    let n = spec.kind.dataset_size(spec.n_cal, spec.block_size);
    let data = generate::<f64, _>(&spec.generator, n, &mut stream.derive_named("data").rng())?;
    let cpp = stream.derive_named("cpp");
    let fresh = stream.derive_named("fresh");
    let (k, m, alpha, cfg) = (spec.n_cal, spec.block_size, spec.alpha, &spec.subroutines);
    let interval_outcome = |lower: f64, upper: f64, l: f64| Outcome {
        covered: lower <= l && l <= upper,
        empty: lower > upper,
    };
    Ok(match spec.kind {
        AuditKind::Candidate => {
            let out = candidate_cpp(&data, learner, loss, alpha, &cpp)?;
            let mut iv = out.interval;
            if spec.force_fail {
                iv.upper = out.calibration.quantile(QuantileLevel::saturating(1.0 - 2.0 * alpha));
            }
            let z = generate::<f64, _>(&spec.generator, 1, &mut fresh.rng())?;
            let l = loss.real(&out.candidate, z.record(0))?;
            interval_outcome(iv.lower, iv.upper, l)
        }
        AuditKind::ZFree => {
            let iv = zfree_cpp(&data, learner, loss, alpha, k, &cpp)?.interval;
            let (cand, z) = fresh_candidate(spec, learner, m, &fresh)?;
            interval_outcome(iv.lower, iv.upper, loss.real(&cand, z.record(0))?)
        }
        AuditKind::ZModFixed | AuditKind::ZModVariable => {
            let p = if spec.kind == AuditKind::ZModFixed {
                zmod_fixed_fit(&data, learner, loss, alpha, k, &cpp, cfg)?
            } else {
                zmod_variable_fit(&data, learner, loss, alpha, k, &cpp, cfg)?
            };
            let (cand, z) = fresh_candidate(spec, learner, p.plan.block_size, &fresh)?;
            let iv = p.query(z.record(0))?;
            interval_outcome(iv.lower, iv.upper, loss.real(&cand, z.record(0))?)
        }
        AuditKind::Symbolic => {
            let p = symbolic_cpp(&data, learner, loss, alpha, k, &cpp, cfg)?;
            let (cand, z) = fresh_candidate(spec, learner, p.plan.block_size, &fresh)?;
            let set = p.query(z.record(0))?;
            Outcome {
                covered: set.contains(loss.symbol(&cand, z.record(0))?),
                empty: set.is_empty(),
            }
        }
        AuditKind::SampleWise => {
            let out = candidate_cpp_samplewise(&data, learner, loss, alpha, 0.5, k, &cpp)?;
            let block = generate::<f64, _>(&spec.generator, out.plan.block_size, &mut fresh.rng())?;
            let l = loss_eval_sample(loss, &out.candidate, block.records())?;
            interval_outcome(out.interval.lower, out.interval.upper, l)
        }
    })
}

/// Coverage of one construction over `spec.replications` independent
/// replications. Every replication draws a fresh dataset, runs the
/// construction, and then draws the fresh quantities its guarantee is about:
/// a new point for candidate CPP; a new training sample of the block size
/// and a new point for the algorithm kinds; a new block for sample-wise.
pub fn audit_coverage(spec: &AuditSpec, learner: &dyn Learner<f64>, loss: &LossFn) -> Result<CoverageReport> {
    check_replications(spec.replications, 100)?;
    if spec.kind != AuditKind::Candidate && spec.block_size == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    let root = RngStream::new(spec.seed).derive_named(spec.kind.as_str());
    let outcomes = run_replications(spec.replications, root, |s| replicate(spec, learner, loss, s))?;
    let hits = outcomes.iter().filter(|o| o.covered).count();
    let calibration_checked = (loss.is_continuous() || spec.kind == AuditKind::Symbolic) && !spec.force_fail;
    let mut report = CoverageReport::new(
        spec.kind.as_str(),
        spec.alpha,
        spec.n_cal,
        spec.kind.slack(spec.n_cal),
        hits,
        spec.replications,
        calibration_checked,
    );
    report.empty_sets = outcomes.iter().filter(|o| o.empty).count();
    Ok(report)
}

/// One cell of the quantile lemma audit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub n: usize,
    pub alpha: f64,
    pub replications: usize,
    /// Frequency of `U_1 <= Q_alpha[U_n]`.
    pub on_freq: f64,
    pub on_expected: f64,
    pub on_sigma: f64,
    pub on_pass: bool,
    /// Frequency of `U <= Q_{(1 + 1/n) alpha}[U_n]` for a fresh `U`.
    pub off_freq: f64,
    pub off_lower: f64,
    pub off_upper: f64,
    pub off_expected: f64,
    pub off_sigma: f64,
    pub off_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
}

impl LemmaReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.on_pass && r.off_pass)
    }
}

fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn within(freq: f64, expected: f64, sigma: f64) -> bool {
    (freq - expected).abs() <= 3.0 * sigma + 1e-12
}

fn lemma_cell(n: usize, alpha: f64, replications: usize, stream: RngStream) -> Result<LemmaRow> {
    let on_level = QuantileLevel::saturating(alpha);
    let off_level = off_sample_level(alpha, n)?;
    let mut rng = stream.rng();
    let (mut on_hits, mut off_hits) = (0usize, 0usize);
    let mut buf = vec![0.0f64; n];
    for _ in 0..replications {
        buf.iter_mut().for_each(|v| *v = rng.random());
        let u: f64 = rng.random();
        let first = buf[0];
        let sample = LossSample::new(std::mem::take(&mut buf))?;
        on_hits += usize::from(first <= sample.quantile(on_level));
        off_hits += usize::from(u <= sample.quantile(off_level));
        buf = sample.into_values();
    }
    let on_expected = match quantile_rank(n, on_level) {
        Rank::At(k) => k as f64 / n as f64,
        Rank::PosInf => 1.0,
        Rank::NegInf => 0.0,
    };
    let off_expected = match quantile_rank(n, off_level) {
        Rank::At(k) => k as f64 / (n + 1) as f64,
        Rank::PosInf => 1.0,
        Rank::NegInf => 0.0,
    };
    let on_freq = on_hits as f64 / replications as f64;
    let off_freq = off_hits as f64 / replications as f64;
    let on_sigma = binomial_sigma(on_expected, replications);
    let off_sigma = binomial_sigma(off_expected, replications);
    let off_lower = alpha;
    let off_upper = alpha + 1.0 / (n + 1) as f64;
    let band_sigma = binomial_sigma(alpha, replications);
    Ok(LemmaRow {
        n,
        alpha,
        replications,
        on_freq,
        on_expected,
        on_sigma,
        on_pass: on_freq >= alpha - 3.0 * band_sigma && within(on_freq, on_expected, on_sigma),
        off_freq,
        off_lower,
        off_upper,
        off_expected,
        off_sigma,
        off_pass: off_freq >= off_lower - 3.0 * band_sigma
            && off_freq <= off_upper + 3.0 * off_sigma
            && within(off_freq, off_expected, off_sigma),
    })
}

/// On-sample and off-sample quantile frequencies for i.i.d. uniform samples
/// over an `(n, alpha)` grid.
pub fn audit_lemmas(n_grid: &[usize], alpha_grid: &[f64], replications: usize, seed: u64) -> Result<LemmaReport> {
    if n_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::InvalidParameter("lemma grids must be nonempty".into()));
    }
    if n_grid.contains(&0) {
        return Err(Error::EmptySample);
    }
    if let Some(&a) = alpha_grid.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidLevel(a));
    }
    check_replications(replications, 1)?;
    let root = RngStream::new(seed).derive_named("lemmas");
    let cells: Vec<(usize, f64)> = n_grid
        .iter()
        .flat_map(|&n| alpha_grid.iter().map(move |&a| (n, a)))
        .collect();
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n, a))| lemma_cell(n, a, replications, root.derive(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LemmaReport { rows })
}

/// Non-conformity score of the full conformal oracle.
#[derive(Clone, Debug, PartialEq)]
pub enum ConformalScore {
    /// `|y - f(x)|`.
    AbsResidual,
    /// Any real-valued loss of the refitted candidate.
    Loss(LossFn),
}

impl ConformalScore {
    fn eval(&self, cand: &Candidate<f64>, rec: Record<'_, f64>) -> Result<f64> {
        match self {
            ConformalScore::AbsResidual => match rec.target {
                Target::Real(y) => Ok((y - cand.predict_value(rec.features)?).abs()),
                Target::Label(_) => Err(Error::WrongTask("absolute residuals need real targets".into())),
            },
            ConformalScore::Loss(l) => l.real(cand, rec),
        }
    }
}

pub const FULL_CONFORMAL_MAX_N: usize = 50;
pub const FULL_CONFORMAL_MAX_GRID: usize = 200;

fn check_full_conformal_size(n: usize, grid: usize) -> Result<()> {
    if n > FULL_CONFORMAL_MAX_N {
        return Err(Error::GridTooLarge(format!("{n} records exceeds {FULL_CONFORMAL_MAX_N}")));
    }
    if grid > FULL_CONFORMAL_MAX_GRID {
        return Err(Error::GridTooLarge(format!("{grid} grid points exceeds {FULL_CONFORMAL_MAX_GRID}")));
    }
    Ok(())
}

/// Whether the candidate response `y` at `x` is accepted: the learner is
/// refitted on the data plus `(x, y)` and the new point's score is compared
/// with `Q_{1-alpha}` of the other scores together with `+inf`.
pub fn full_conformal_accepts(
    data: &Dataset<f64>,
    learner: &dyn Learner<f64>,
    score: &ConformalScore,
    alpha: f64,
    x: &[f64],
    y: f64,
    rng: &RngStream,
) -> Result<bool> {
    check_full_conformal_size(data.len(), 1)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    let aug = data.with_record(x, Target::Real(y))?;
    let cand = learner.fit(&aug, &mut rng.rng())?;
    let n = data.len();
    let scores = (0..n)
        .map(|i| score.eval(&cand, aug.record(i)))
        .collect::<Result<Vec<_>>>()?;
    let new_score = score.eval(&cand, aug.record(n))?;
    let threshold = LossSample::new(scores)?
        .with_infinity()
        .quantile(QuantileLevel::saturating(1.0 - alpha));
    Ok(new_score <= threshold)
}

/// The grid values accepted by the full conformal test at `x`.
pub fn full_conformal_oracle(
    data: &Dataset<f64>,
    learner: &dyn Learner<f64>,
    score: &ConformalScore,
    alpha: f64,
    y_grid: &[f64],
    x: &[f64],
    rng: &RngStream,
) -> Result<Vec<f64>> {
    check_full_conformal_size(data.len(), y_grid.len())?;
    let mut accepted = Vec::new();
    for &y in y_grid {
        if full_conformal_accepts(data, learner, score, alpha, x, y, rng)? {
            accepted.push(y);
        }
    }
    Ok(accepted)
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Full conformal coverage on tiny regression problems. Each replication
/// draws `n + 1` records, builds the grid set for the last one from the
/// first `n`, and checks the exact test at its true response. Empty grid
/// sets are counted.
#[allow(clippy::too_many_arguments)]
pub fn audit_full_conformal(
    generator: &GeneratorSpec,
    learner: &dyn Learner<f64>,
    score: &ConformalScore,
    alpha: f64,
    n: usize,
    grid: usize,
    replications: usize,
    seed: u64,
) -> Result<CoverageReport> {
    check_full_conformal_size(n, grid)?;
    check_replications(replications, 100)?;
    if generator.is_classification() {
        return Err(Error::WrongTask("full conformal audit needs a regression generator".into()));
    }
    let outcomes = run_replications(replications, RngStream::new(seed).derive_named("full-conformal"), |s| {
        let all = generate::<f64, _>(generator, n + 1, &mut s.derive_named("data").rng())?;
        let idx: Vec<usize> = (0..n).collect();
        let train = all.subset(&idx);
        let test = all.record(n);
        let Target::Real(y) = test.target else { unreachable!() };
        let fit = s.derive_named("fit");
        let ys: Vec<f64> = train
            .records()
            .map(|r| match r.target {
                Target::Real(v) => v,
                Target::Label(_) => unreachable!(),
            })
            .collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let spread = (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(1.0);
        let y_grid = linear_grid(mean - 4.0 * spread, mean + 4.0 * spread, grid);
        let set = full_conformal_oracle(&train, learner, score, alpha, &y_grid, test.features, &fit)?;
        Ok(Outcome {
            covered: full_conformal_accepts(&train, learner, score, alpha, test.features, y, &fit)?,
            empty: set.is_empty(),
        })
    })?;
    let hits = outcomes.iter().filter(|o| o.covered).count();
    let mut report = CoverageReport::new("full-conformal", alpha, n, 1.0 / (n + 1) as f64, hits, replications, true);
    report.empty_sets = outcomes.iter().filter(|o| o.empty).count();
    Ok(report)
}

/// Correct Z-free coverage next to a naive variant that trains each
/// evaluation point's candidate on a block that contains the point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NaiveCvReport {
    pub correct: CoverageReport,
    pub naive: CoverageReport,
}

fn naive_interval(
    data: &Dataset<f64>,
    learner: &dyn Learner<f64>,
    loss: &LossFn,
    alpha: f64,
    k: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    let plan = split_zfree(data.len(), &mut rng.derive_named("split").rng(), k)?;
    let fit = rng.derive_named("fit");
    let losses = plan
        .tr_blocks
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            let anchor = b.anchor.expect("anchored block");
            let mut idx = b.indices.clone();
            idx.push(anchor);
            let cand = learner.fit(&data.subset(&idx), &mut fit.derive(j as u64).rng())?;
            loss.real(&cand, data.record(anchor))
        })
        .collect::<Result<Vec<_>>>()?;
    let iv = interval_from_losses(&LossSample::new(losses)?, alpha, IntervalKind::ZFree)?;
    Ok((iv.lower, iv.upper))
}

/// Compares [`zfree_cpp`] with the naive variant on shared data and shared
/// fresh draws.
pub fn audit_naive_cv_demo(spec: &AuditSpec, learner: &dyn Learner<f64>, loss: &LossFn) -> Result<NaiveCvReport> {
    check_replications(spec.replications, 1)?;
    if spec.block_size == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    let k = spec.n_cal;
    let n = AuditKind::ZFree.dataset_size(k, spec.block_size);
    let root = RngStream::new(spec.seed).derive_named("naive");
    let pairs = (0..spec.replications)
        .into_par_iter()
        .map(|i| {
            let s = root.derive(i as u64);
            let run = || -> Result<(bool, bool)> {
                let data = generate::<f64, _>(&spec.generator, n, &mut s.derive_named("data").rng())?;
                let cpp = s.derive_named("cpp");
                let good = zfree_cpp(&data, learner, loss, spec.alpha, k, &cpp)?.interval;
                let (lo, hi) = naive_interval(&data, learner, loss, spec.alpha, k, &cpp)?;
                let (cand, z) = fresh_candidate(spec, learner, spec.block_size, &s.derive_named("fresh"))?;
                let l = loss.real(&cand, z.record(0))?;
                Ok((good.contains(l), lo <= l && l <= hi))
            };
            run().map_err(|e| Error::Replication { index: i, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let slack = AuditKind::ZFree.slack(k);
    let checked = loss.is_continuous();
    let count = |f: fn(&(bool, bool)) -> bool| pairs.iter().filter(|p| f(p)).count();
    Ok(NaiveCvReport {
        correct: CoverageReport::new("zfree", spec.alpha, k, slack, count(|p| p.0), spec.replications, checked),
        naive: CoverageReport::new("zfree-naive", spec.alpha, k, slack, count(|p| p.1), spec.replications, checked),
    })
}
