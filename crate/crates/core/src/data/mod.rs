//! Datasets of (feature vector, target) records, CSV ingestion, seeded
//! streams and index partitions.

mod rng;
mod split;

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use rng::RngStream;
pub use split::{
    split_cal_blocks, split_symbolic, split_two, split_zfree, split_zmod, Block, SplitPlan,
};

/// Learning task of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    /// Targets are indices into `labels`.
    Classification { labels: Arc<[String]> },
}

impl Task {
    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Task::Regression => 0,
            Task::Classification { labels } => labels.len(),
        }
    }
}

/// Image layout of grid datasets, whose features are `w * h` pixels in
/// row-major order with intensities in `[0, pixel_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridShape {
    pub w: usize,
    pub h: usize,
    pub pixel_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    Real(Vec<T>),
    Label(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target<T> {
    Real(T),
    Label(usize),
}

/// Borrowed view of one record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record<'a, T> {
    pub features: &'a [T],
    pub target: Target<T>,
}

/// An ordered list of records sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    dim: usize,
    targets: Targets<T>,
    task: Task,
    grid: Option<GridShape>,
}

impl<T: Real> Dataset<T> {
    /// Regression dataset from row-major features.
    pub fn regression(features: Vec<T>, dim: usize, targets: Vec<T>) -> Result<Self> {
        check_rows(&features, dim, targets.len())?;
        if let Some(index) = features
            .iter()
            .chain(&targets)
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            features,
            dim,
            targets: Targets::Real(targets),
            task: Task::Regression,
            grid: None,
        })
    }

    /// Classification dataset; `labels[i]` indexes into `names`.
    pub fn classification(
        features: Vec<T>,
        dim: usize,
        labels: Vec<usize>,
        names: Vec<String>,
    ) -> Result<Self> {
        check_rows(&features, dim, labels.len())?;
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= names.len()) {
            return Err(Error::InvalidParameter(format!(
                "label index {bad} outside a label set of size {}",
                names.len()
            )));
        }
        Ok(Self {
            features,
            dim,
            targets: Targets::Label(labels),
            task: Task::Classification {
                labels: names.into(),
            },
            grid: None,
        })
    }

    /// Declares the features to be `w x h` images.
    pub fn with_grid(mut self, grid: GridShape) -> Result<Self> {
        if grid.w * grid.h != self.dim {
            return Err(Error::ShapeMismatch {
                expected: grid.w * grid.h,
                got: self.dim,
            });
        }
        if !(grid.pixel_max > 0.0) {
            return Err(Error::InvalidParameter("pixel_max must be positive".into()));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        match &self.targets {
            Targets::Real(y) => y.len(),
            Targets::Label(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    pub fn n_classes(&self) -> usize {
        self.task.n_classes()
    }

    pub fn label_names(&self) -> &[String] {
        match &self.task {
            Task::Regression => &[],
            Task::Classification { labels } => labels,
        }
    }

    pub fn targets(&self) -> &Targets<T> {
        &self.targets
    }

    pub fn features(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> Target<T> {
        match &self.targets {
            Targets::Real(y) => Target::Real(y[i]),
            Targets::Label(y) => Target::Label(y[i]),
        }
    }

    pub fn record(&self, i: usize) -> Record<'_, T> {
        Record {
            features: self.features(i),
            target: self.target(i),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_, T>> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Records at `indices`, in that order. Indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.features(i));
        }
        let targets = match &self.targets {
            Targets::Real(y) => Targets::Real(indices.iter().map(|&i| y[i]).collect()),
            Targets::Label(y) => Targets::Label(indices.iter().map(|&i| y[i]).collect()),
        };
        Self {
            features,
            dim: self.dim,
            targets,
            task: self.task.clone(),
            grid: self.grid,
        }
    }

    /// Copy of the dataset with one record appended.
    pub fn with_record(&self, features: &[T], target: Target<T>) -> Result<Self> {
        self.check_record(features, target)?;
        let mut out = self.clone();
        out.features.extend_from_slice(features);
        match (&mut out.targets, target) {
            (Targets::Real(y), Target::Real(v)) => y.push(v),
            (Targets::Label(y), Target::Label(l)) => y.push(l),
            _ => unreachable!("checked above"),
        }
        Ok(out)
    }

    /// One-record dataset with the same task and layout.
    pub fn single(&self, features: &[T], target: Target<T>) -> Result<Self> {
        self.check_record(features, target)?;
        let targets = match target {
            Target::Real(v) => Targets::Real(vec![v]),
            Target::Label(l) => Targets::Label(vec![l]),
        };
        Ok(Self {
            features: features.to_vec(),
            dim: self.dim,
            targets,
            task: self.task.clone(),
            grid: self.grid,
        })
    }

    fn check_record(&self, features: &[T], target: Target<T>) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                got: features.len(),
            });
        }
        match (&self.task, target) {
            (Task::Regression, Target::Real(_)) => Ok(()),
            (Task::Classification { labels }, Target::Label(l)) if l < labels.len() => Ok(()),
            (Task::Classification { .. }, Target::Label(l)) => Err(Error::InvalidParameter(
                format!("label index {l} outside the declared label set"),
            )),
            _ => Err(Error::WrongTask(
                "record target does not match the dataset task".into(),
            )),
        }
    }

    /// Parses a comma-separated `features..., target` row against this
    /// dataset's layout.
    pub fn parse_row(&self, row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != self.dim + 1 {
            return Err(Error::ShapeMismatch {
                expected: self.dim + 1,
                got: fields.len(),
            });
        }
        let features = fields[..self.dim]
            .iter()
            .map(|s| parse_real::<T>(s, 1))
            .collect::<Result<Vec<_>>>()?;
        let raw = fields[self.dim];
        let target = match &self.task {
            Task::Regression => Target::Real(parse_real(raw, 1)?),
            Task::Classification { labels } => Target::Label(
                labels
                    .iter()
                    .position(|l| l == raw)
                    .ok_or_else(|| Error::Parse {
                        line: 1,
                        message: format!("unknown label `{raw}`"),
                    })?,
            ),
        };
        self.single(&features, target)
    }
}

fn check_rows<T>(features: &[T], dim: usize, n: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("feature dimension must be positive".into()));
    }
    if features.len() != n * dim {
        return Err(Error::ShapeMismatch {
            expected: n * dim,
            got: features.len(),
        });
    }
    Ok(())
}

fn parse_real<T: Real>(s: &str, line: u64) -> Result<T> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("`{s}` is not finite"),
        });
    }
    Ok(T::of(v))
}

/// How the target column of a CSV file is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    Regression,
    Classification,
}

/// Reads a dataset: a header row, then one row per record holding the
/// feature columns followed by a single target column.
///
/// Classification labels become the sorted set of distinct target strings
/// (numerically when every label parses as a number).
pub fn read_csv<T: Real, R: Read>(reader: R, kind: TargetKind) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one feature column and a target column".into(),
        });
    }
    let dim = width - 1;
    let mut features = Vec::new();
    let mut raw_targets = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", row.len()),
            });
        }
        for field in row.iter().take(dim) {
            features.push(parse_real::<T>(field, line)?);
        }
        raw_targets.push((row[dim].to_string(), line));
    }
    if raw_targets.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no records".into(),
        });
    }
    match kind {
        TargetKind::Regression => {
            let y = raw_targets
                .iter()
                .map(|(s, line)| parse_real::<T>(s, *line))
                .collect::<Result<Vec<_>>>()?;
            Dataset::regression(features, dim, y)
        }
        TargetKind::Classification => {
            let mut names: Vec<String> = raw_targets.iter().map(|(s, _)| s.clone()).collect();
            sort_labels(&mut names);
            names.dedup();
            let labels = raw_targets
                .iter()
                .map(|(s, _)| names.binary_search_by(|n| label_order(n, s)).unwrap())
                .collect();
            Dataset::classification(features, dim, labels, names)
        }
    }
}

pub fn read_csv_path<T: Real>(path: &Path, kind: TargetKind) -> Result<Dataset<T>> {
    read_csv(std::fs::File::open(path)?, kind)
}

fn label_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn sort_labels(names: &mut [String]) {
    names.sort_by(|a, b| label_order(a, b));
}

/// Writes the dataset in the format accepted by [`read_csv`].
pub fn write_csv<T: Real, W: Write>(data: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    let names = data.label_names();
    let mut row = Vec::with_capacity(data.dim() + 1);
    for rec in data.records() {
        row.clear();
        row.extend(rec.features.iter().map(|v| v.to_string()));
        row.push(match rec.target {
            Target::Real(v) => v.to_string(),
            Target::Label(l) => names[l].clone(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
