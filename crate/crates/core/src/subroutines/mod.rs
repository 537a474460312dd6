//! Auxiliary fitting routines used by the Z-modulated and symbolic
//! constructions: a point regressor, conditional quantile regressors and a
//! symbol scorer, all operating on encoded records.
//!
//! These routines work in `f64` regardless of the dataset scalar. Their
//! quality only affects interval widths, never coverage.

mod encode;
mod quantreg;
mod regression;
mod scoring;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{ClampMode, LossSample, QuantileLevel};

pub use encode::ZEncoder;
pub use quantreg::{fit_quantreg, pinball_loss, pinball_objective, pinball_subgradient};
pub use regression::fit_regression;
pub use scoring::{fit_scoring, ScoreFn};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionBackend {
    #[default]
    Ols,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantRegBackend {
    #[default]
    PinballLinear,
    Knn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantRegConfig {
    pub backend: QuantRegBackend,
    pub knn_k: usize,
    pub pinball_epochs: usize,
}

impl Default for QuantRegConfig {
    fn default() -> Self {
        Self {
            backend: QuantRegBackend::PinballLinear,
            knn_k: 50,
            pinball_epochs: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub step: f64,
    pub epochs: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            epochs: 100,
        }
    }
}

/// All subroutine settings of the Z-modulated and symbolic constructions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubroutineConfig {
    pub regression: RegressionBackend,
    pub quantreg: QuantRegConfig,
    pub scoring: ScoringConfig,
    /// Level `a` of the quantile pair `(a/2, 1 - a/2)`; defaults to the
    /// interval's own level.
    pub inner_alpha: Option<f64>,
}

/// A fitted map from an encoded record to a real response.
#[derive(Clone, Debug, PartialEq)]
pub enum PointPredictor {
    Linear {
        intercept: f64,
        coef: Vec<f64>,
    },
    /// Empirical quantile of the responses of the `k` nearest training
    /// inputs, in standardized coordinates.
    KnnQuantile {
        points: Vec<f64>,
        responses: Vec<f64>,
        dim: usize,
        k: usize,
        level: f64,
        shift: Vec<f64>,
        scale: Vec<f64>,
    },
}

impl PointPredictor {
    pub fn dim(&self) -> usize {
        match self {
            PointPredictor::Linear { coef, .. } => coef.len(),
            PointPredictor::KnnQuantile { dim, .. } => *dim,
        }
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(match self {
            PointPredictor::Linear { intercept, coef } => {
                intercept + coef.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            }
            PointPredictor::KnnQuantile {
                points,
                responses,
                dim,
                k,
                level,
                shift,
                scale,
            } => {
                let zs: Vec<f64> = (0..*dim).map(|j| (z[j] - shift[j]) / scale[j]).collect();
                let mut dist: Vec<(f64, usize)> = points
                    .chunks(*dim)
                    .enumerate()
                    .map(|(i, p)| {
                        let d = p.iter().zip(&zs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        (d, i)
                    })
                    .collect();
                let k = (*k).min(dist.len());
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < dist.len() {
                    dist.select_nth_unstable_by(k - 1, cmp);
                }
                let near: Vec<f64> = dist[..k].iter().map(|&(_, i)| responses[i]).collect();
                LossSample::new(near)
                    .expect("responses are finite")
                    .quantile(QuantileLevel::new(*level, ClampMode::Saturate))
            }
        })
    }
}

/// Lower and upper conditional quantile predictors at levels `(a/2, 1 - a/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantilePair {
    pub q_lo: PointPredictor,
    pub q_hi: PointPredictor,
    pub levels: (f64, f64),
}

impl QuantilePair {
    pub fn fit(z: &[Vec<f64>], y: &[f64], alpha: f64, cfg: &QuantRegConfig) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidLevel(alpha));
        }
        let levels = (alpha / 2.0, 1.0 - alpha / 2.0);
        Ok(Self {
            q_lo: fit_quantreg(z, y, levels.0, cfg)?,
            q_hi: fit_quantreg(z, y, levels.1, cfg)?,
            levels,
        })
    }

    /// `(lo, hi)` at `z`, swapped if the two predictors cross there.
    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64)> {
        let lo = self.q_lo.predict(z)?;
        let hi = self.q_hi.predict(z)?;
        Ok(if lo <= hi { (lo, hi) } else { (hi, lo) })
    }
}

pub(crate) fn standardize(z: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = z.len() as f64;
    let mut shift = vec![0.0; dim];
    for row in z {
        for j in 0..dim {
            shift[j] += row[j];
        }
    }
    shift.iter_mut().for_each(|v| *v /= n);
    let mut scale = vec![0.0; dim];
    for row in z {
        for j in 0..dim {
            scale[j] += (row[j] - shift[j]).powi(2);
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / n).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    }
    (shift, scale)
}

pub(crate) fn check_pairs(z: &[Vec<f64>], n_responses: usize) -> Result<usize> {
    if z.len() != n_responses {
        return Err(Error::ShapeMismatch {
            expected: z.len(),
            got: n_responses,
        });
    }
    if z.len() < 2 {
        return Err(Error::DatasetTooSmall {
            need: 2,
            have: z.len(),
        });
    }
    let dim = z[0].len();
    for row in z {
        if row.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    Ok(dim)
}
