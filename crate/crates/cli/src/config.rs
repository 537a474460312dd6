use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::fail::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "confperf", version, about = "Conformal prediction intervals for learning performance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(Opts),
    /// Repeated trials of one construction with one learner.
    Run(Opts),
    /// Repeated trials of one construction across several learners.
    Compare(Opts),
    /// Monte Carlo coverage audits.
    Audit(Opts),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Candidate,
    Zfree,
    ZmodFixed,
    ZmodVar,
    Symbolic,
    Samplewise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    LinearNormal,
    LinearStudent,
    LinearHetero,
    Blobs,
    Glyphs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CoverMode {
    Single,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Full,
    Lemmas,
    Conformal,
    Naive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Squared,
    Logistic,
    ZeroOne,
    Symbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum QuantRegArg {
    Pinball,
    Knn,
}

/// Flags shared by every subcommand. Each one can also be set as
/// `key = value` in a `--config` file, with the flag taking precedence.
#[derive(Args, Debug, Default, Clone)]
pub struct Opts {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub learner: Vec<String>,
    /// Calibration anchors for the anchored kinds, `|I_CP|` for audits of
    /// the candidate kind.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_blocks: Option<usize>,
    #[arg(long)]
    pub frac_tr: Option<f64>,
    /// Records per trial (generator runs) or size of `Z_n` (dataset runs).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Block size for audits.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Image layout of the feature columns, `WxH`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub pixel_max: Option<f64>,
    #[arg(long, value_enum)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// A `features..., target` row to query Z-modulated predictors at.
    #[arg(long, allow_hyphen_values = true)]
    pub query_point: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub cover_mode: Option<CoverMode>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Audit with a deliberately wrong upper level.
    #[arg(long)]
    pub force_fail: bool,
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long, value_enum)]
    pub quantreg: Option<QuantRegArg>,
    #[arg(long)]
    pub inner_alpha: Option<f64>,
}

/// Parses `key = value` lines; `#` starts a comment. Repeated keys
/// accumulate, which is how several learners are listed.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        out.entry(key).or_default().push(v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("config key `{key}`: cannot parse `{v}`")))
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> CliResult<T> {
    T::from_str(v, false).map_err(|_| CliError::Config(format!("config key `{key}`: unknown value `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("config key `{key}`: expected true or false"))),
    }
}

macro_rules! fill {
    ($opts:ident, $map:ident, $key:ident, $name:literal, $parse:expr) => {
        if let Some(vals) = $map.remove($name) {
            if $opts.$key.is_none() {
                let v = vals.last().expect("nonempty");
                $opts.$key = Some($parse($name, v)?);
            }
        }
    };
}

impl Opts {
    /// Fills unset flags from the `--config` file, if any.
    pub fn resolve(mut self) -> CliResult<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.merge(parse_config_text(&text)?)?;
        Ok(self)
    }

    pub fn merge(&mut self, mut map: BTreeMap<String, Vec<String>>) -> CliResult<()> {
        let o = self;
        fill!(o, map, alpha, "alpha", parse_value);
        fill!(o, map, seed, "seed", parse_value);
        fill!(o, map, trials, "trials", parse_value);
        fill!(o, map, kind, "kind", parse_enum);
        fill!(o, map, k, "k", parse_value);
        fill!(o, map, k_blocks, "k-blocks", parse_value);
        fill!(o, map, frac_tr, "frac-tr", parse_value);
        fill!(o, map, n, "n", parse_value);
        fill!(o, map, n_test, "n-test", parse_value);
        fill!(o, map, m, "m", parse_value);
        fill!(o, map, d, "d", parse_value);
        fill!(o, map, data, "data", |_: &str, v: &str| Ok::<_, CliError>(PathBuf::from(v)));
        fill!(o, map, task, "task", parse_enum);
        fill!(o, map, grid, "grid", |_: &str, v: &str| Ok::<_, CliError>(v.to_string()));
        fill!(o, map, pixel_max, "pixel-max", parse_value);
        fill!(o, map, generator, "generator", parse_enum);
        fill!(o, map, out, "out", |_: &str, v: &str| Ok::<_, CliError>(PathBuf::from(v)));
        fill!(o, map, query_point, "query-point", |_: &str, v: &str| Ok::<_, CliError>(v.to_string()));
        fill!(o, map, threads, "threads", parse_value);
        fill!(o, map, cover_mode, "cover-mode", parse_enum);
        fill!(o, map, bins, "bins", parse_value);
        fill!(o, map, suite, "suite", parse_enum);
        fill!(o, map, loss, "loss", parse_enum);
        fill!(o, map, step, "step", parse_value);
        fill!(o, map, epochs, "epochs", parse_value);
        fill!(o, map, knn_k, "knn-k", parse_value);
        fill!(o, map, quantreg, "quantreg", parse_enum);
        fill!(o, map, inner_alpha, "inner-alpha", parse_value);
        if let Some(vals) = map.remove("learner") {
            if o.learner.is_empty() {
                o.learner = vals
                    .iter()
                    .flat_map(|v| v.split(','))
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
        }
        for (flag, name) in [(&mut o.force_fail, "force-fail"), (&mut o.noiseless, "noiseless")] {
            if let Some(vals) = map.remove(name) {
                *flag = *flag || parse_bool(name, vals.last().expect("nonempty"))?;
            }
        }
        if map.contains_key("config") {
            return Err(CliError::Config("config files cannot include other config files".into()));
        }
        if let Some(key) = map.keys().next() {
            return Err(CliError::Config(format!("unknown config key `{key}`")));
        }
        Ok(())
    }

    pub fn alpha(&self) -> CliResult<f64> {
        let a = self.alpha.unwrap_or(0.1);
        if a > 0.0 && a < 1.0 {
            Ok(a)
        } else {
            Err(CliError::Config(format!("alpha must lie in (0, 1), got {a}")))
        }
    }

    pub fn trials(&self, default: usize) -> CliResult<usize> {
        match self.trials.unwrap_or(default) {
            0 => Err(CliError::Config("trials must be at least 1".into())),
            t => Ok(t),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn bins(&self) -> CliResult<usize> {
        match self.bins.unwrap_or(20) {
            0 => Err(CliError::Config("bins must be positive".into())),
            b => Ok(b),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn grid_shape(&self) -> CliResult<Option<(usize, usize)>> {
        let Some(g) = &self.grid else { return Ok(None) };
        let parsed = g
            .split_once(['x', 'X'])
            .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)));
        match parsed {
            Some((w, h)) if w > 0 && h > 0 => Ok(Some((w, h))),
            _ => Err(CliError::Config(format!("grid must look like 8x8, got `{g}`"))),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}
