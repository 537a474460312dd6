use confperf::audit::{generate, GeneratorSpec};
use confperf::cpp::{
    candidate_cpp_samplewise, candidate_cpp_with, symbolic_cpp, zfree_cpp, zmod_fixed_fit, zmod_variable_fit,
    PredictionInterval, SymbolicPredictor, ZModPredictor,
};
use confperf::data::{Dataset, Record, RngStream};
use confperf::learners::{loss_eval_sample, Candidate, Learner, LossFn};
use confperf::subroutines::SubroutineConfig;
use rand::seq::SliceRandom;

use crate::config::Kind;
use crate::fail::{CliError, CliResult};

/// Where each trial's `Z_n` and test pool come from.
pub enum Source {
    /// Fresh draws of `n` training and `n_test` test records per trial.
    Generated { spec: GeneratorSpec, n: usize, n_test: usize },
    /// A random `n`-subset of the file per trial, the rest for testing.
    File { data: Dataset<f64>, n: usize },
}

impl Source {
    fn draw(&self, stream: &RngStream) -> CliResult<(Dataset<f64>, Dataset<f64>)> {
        Ok(match self {
            Source::Generated { spec, n, n_test } => (
                generate(spec, *n, &mut stream.derive_named("train").rng())?,
                generate(spec, *n_test, &mut stream.derive_named("test").rng())?,
            ),
            Source::File { data, n } => {
                let mut idx: Vec<usize> = (0..data.len()).collect();
                idx.shuffle(&mut stream.derive_named("pool").rng());
                (data.subset(&idx[..*n]), data.subset(&idx[*n..]))
            }
        })
    }

    /// A dataset with the layout of every trial's data, for parsing rows.
    pub fn layout(&self) -> CliResult<Dataset<f64>> {
        Ok(match self {
            Source::Generated { spec, .. } => generate(spec, 1, &mut RngStream::new(0).rng())?,
            Source::File { data, .. } => data.clone(),
        })
    }
}

/// Everything that stays fixed across trials.
pub struct Plan<'a> {
    pub kind: Kind,
    pub alpha: f64,
    pub loss: LossFn,
    pub frac_tr: f64,
    pub k: usize,
    pub k_blocks: usize,
    pub subroutines: SubroutineConfig,
    pub source: &'a Source,
    pub query: Option<Dataset<f64>>,
}

/// The prediction set of one trial at one point.
#[derive(Clone, Debug, PartialEq)]
pub enum Set {
    Interval(PredictionInterval<f64>),
    Symbols(Vec<String>),
}

impl Set {
    pub fn width(&self) -> f64 {
        match self {
            Set::Interval(iv) => iv.width(),
            Set::Symbols(s) => s.len() as f64,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Set::Interval(iv) => iv.is_empty(),
            Set::Symbols(s) => s.is_empty(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observed {
    Real(f64),
    Symbol(String),
}

#[derive(Clone, Debug)]
pub struct TrialRow {
    pub trial_id: usize,
    pub method: String,
    pub set: Set,
    pub new_loss: Observed,
    pub covered: bool,
    pub test_coverage_fraction: f64,
    pub avg_test_loss: f64,
    pub query: Option<Set>,
}

enum Built {
    Fixed { cand: Candidate<f64>, iv: PredictionInterval<f64>, block: usize },
    Algo { iv: PredictionInterval<f64>, m: usize },
    ZMod(ZModPredictor),
    Symbolic(SymbolicPredictor),
}

fn build(plan: &Plan<'_>, train: &Dataset<f64>, learner: &dyn Learner<f64>, s: &RngStream) -> CliResult<Built> {
    let (a, l, cfg) = (plan.alpha, &plan.loss, &plan.subroutines);
    Ok(match plan.kind {
        Kind::Candidate => {
            let out = candidate_cpp_with(train, learner, l, a, plan.frac_tr, s)?;
            Built::Fixed { cand: out.candidate, iv: out.interval, block: 1 }
        }
        Kind::Samplewise => {
            let out = candidate_cpp_samplewise(train, learner, l, a, plan.frac_tr, plan.k_blocks, s)?;
            Built::Fixed { cand: out.candidate, iv: out.interval, block: out.plan.block_size }
        }
        Kind::Zfree => {
            let out = zfree_cpp(train, learner, l, a, plan.k, s)?;
            Built::Algo { iv: out.interval, m: out.plan.block_size }
        }
        Kind::ZmodFixed => Built::ZMod(zmod_fixed_fit(train, learner, l, a, plan.k, s, cfg)?),
        Kind::ZmodVar => Built::ZMod(zmod_variable_fit(train, learner, l, a, plan.k, s, cfg)?),
        Kind::Symbolic => Built::Symbolic(symbolic_cpp(train, learner, l, a, plan.k, s, cfg)?),
    })
}

fn symbol_names(p: &SymbolicPredictor, rec: Record<'_, f64>) -> CliResult<Vec<String>> {
    Ok(p.query(rec)?.symbols.iter().map(|s| s.to_string()).collect())
}

fn query_set(built: &Built, rec: Record<'_, f64>) -> CliResult<Set> {
    Ok(match built {
        Built::Fixed { iv, .. } | Built::Algo { iv, .. } => Set::Interval(*iv),
        Built::ZMod(p) => Set::Interval(p.query(rec)?),
        Built::Symbolic(p) => Set::Symbols(symbol_names(p, rec)?),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs trial `trial_id` for one learner. All randomness comes from
/// `stream`, so methods sharing a stream see the same data and draws.
pub fn run_trial(
    plan: &Plan<'_>,
    method: &str,
    learner: &dyn Learner<f64>,
    trial_id: usize,
    stream: &RngStream,
) -> CliResult<TrialRow> {
    let (train, test) = plan.source.draw(stream)?;
    let built = build(plan, &train, learner, &stream.derive_named("cpp"))?;
    let loss = &plan.loss;
    let mut rng = stream.derive_named("eval").rng();
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(&mut rng);

    let row = |set: Set, new_loss: Observed, covered: bool, frac: f64, avg: f64| TrialRow {
        trial_id,
        method: method.to_string(),
        set,
        new_loss,
        covered,
        test_coverage_fraction: frac,
        avg_test_loss: avg,
        query: None,
    };

    let mut out = match &built {
        Built::Fixed { cand, iv, block } if *block <= 1 => {
            let losses = test
                .records()
                .map(|r| loss.real(cand, r))
                .collect::<confperf::Result<Vec<_>>>()?;
            let new = losses[order[0]];
            let frac = losses.iter().filter(|&&l| iv.contains(l)).count() as f64 / losses.len() as f64;
            row(Set::Interval(*iv), Observed::Real(new), iv.contains(new), frac, mean(&losses))
        }
        Built::Fixed { cand, iv, block } => {
            if test.len() < *block {
                return Err(CliError::Config(format!("test pool of {} is smaller than a block of {block}", test.len())));
            }
            let block_mean = |idx: &[usize]| loss_eval_sample(loss, cand, idx.iter().map(|&i| test.record(i)));
            let new = block_mean(&order[..*block])?;
            let means = order
                .chunks_exact(*block)
                .map(block_mean)
                .collect::<confperf::Result<Vec<_>>>()?;
            let frac = means.iter().filter(|&&l| iv.contains(l)).count() as f64 / means.len() as f64;
            let pointwise = test
                .records()
                .map(|r| loss.real(cand, r))
                .collect::<confperf::Result<Vec<_>>>()?;
            row(Set::Interval(*iv), Observed::Real(new), iv.contains(new), frac, mean(&pointwise))
        }
        _ => {
            let m = match &built {
                Built::Algo { m, .. } => *m,
                Built::ZMod(p) => p.plan.block_size,
                Built::Symbolic(p) => p.plan.block_size,
                Built::Fixed { .. } => unreachable!(),
            };
            if test.len() < m + 2 {
                return Err(CliError::Config(format!(
                    "test pool of {} cannot hold a fresh sample of {m} plus test points",
                    test.len()
                )));
            }
            // Fresh training sample from the test pool, disjoint from the
            // points it is evaluated on.
            let fresh = test.subset(&order[1..=m]);
            let cand = learner.fit(&fresh, &mut stream.derive_named("fresh").rng())?;
            let eval: Vec<usize> = std::iter::once(order[0]).chain(order[m + 1..].iter().copied()).collect();
            if let Built::Symbolic(p) = &built {
                let mut hits = 0usize;
                let mut wrong = 0usize;
                let mut first = None;
                for &i in &eval {
                    let rec = test.record(i);
                    let set = p.query(rec)?;
                    let sym = loss.symbol(&cand, rec)?;
                    hits += usize::from(set.contains(sym));
                    wrong += usize::from(sym != confperf::learners::Symbol::Correct);
                    if first.is_none() {
                        first = Some((Set::Symbols(symbol_names(p, rec)?), sym.to_string(), set.contains(sym)));
                    }
                }
                let (set, sym, covered) = first.expect("nonempty evaluation set");
                let n = eval.len() as f64;
                row(set, Observed::Symbol(sym), covered, hits as f64 / n, wrong as f64 / n)
            } else {
                let mut losses = Vec::with_capacity(eval.len());
                let mut hits = 0usize;
                let mut first = None;
                for &i in &eval {
                    let rec = test.record(i);
                    let l = loss.real(&cand, rec)?;
                    let Set::Interval(iv) = query_set(&built, rec)? else { unreachable!() };
                    hits += usize::from(iv.contains(l));
                    losses.push(l);
                    if first.is_none() {
                        first = Some((iv, l));
                    }
                }
                let (iv, l) = first.expect("nonempty evaluation set");
                row(Set::Interval(iv), Observed::Real(l), iv.contains(l), hits as f64 / eval.len() as f64, mean(&losses))
            }
        }
    };
    if let Some(q) = &plan.query {
        out.query = Some(query_set(&built, q.record(0))?);
    }
    Ok(out)
}
