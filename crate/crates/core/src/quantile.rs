//! Exact empirical quantiles and order statistics.
//!
//! For a sample `u_1..u_n` and a level `a` in `(0, 1]` the empirical quantile
//! is the `ceil(n a)`-th smallest element, and the right-quantile is the
//! `(floor(n a) + 1)`-th smallest element. Levels produced by the inflation and
//! deflation formulas of the interval constructions can leave `(0, 1]`; how
//! such a level is read is fixed by its [`ClampMode`].
//!
//! Rank arithmetic snaps `n a` to the nearest integer when it lies within a
//! relative distance of `1e-9`, so that levels like `(1 + 1/n)(1 - a/2)` that
//! are integral multiples of `1/n` in exact arithmetic select the intended
//! order statistic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cmp_real, Real};

const RANK_SNAP_TOL: f64 = 1e-9;

/// Default jitter magnitude for [`TieBreak::Jitter`].
pub const DEFAULT_JITTER: f64 = 1e-12;

/// How a level outside `(0, 1]` is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampMode {
    /// A rank below 1 yields `-inf`; a rank above `n` saturates to the maximum.
    LowerUnbounded,
    /// A rank above `n` yields `+inf`; a rank below 1 saturates to the minimum.
    UpperUnbounded,
    /// Ranks are clipped into `1..=n`, i.e. the level into `[1/n, 1]`.
    Saturate,
}

/// A probability level together with its out-of-range convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileLevel {
    pub raw: f64,
    pub clamp: ClampMode,
}

impl QuantileLevel {
    pub fn new(raw: f64, clamp: ClampMode) -> Self {
        Self { raw, clamp }
    }

    /// A level in `(0, 1]` read with saturating semantics.
    pub fn saturating(raw: f64) -> Self {
        Self::new(raw, ClampMode::Saturate)
    }
}

/// Position of a queried order statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rank {
    NegInf,
    /// 1-based rank into the sorted sample.
    At(usize),
    PosInf,
}

fn snap(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() <= RANK_SNAP_TOL * x.abs().max(1.0)).then_some(r)
}

pub(crate) fn snapped_ceil(x: f64) -> f64 {
    snap(x).unwrap_or_else(|| x.ceil())
}

pub(crate) fn snapped_floor(x: f64) -> f64 {
    snap(x).unwrap_or_else(|| x.floor())
}

fn resolve_rank(k: f64, n: usize, clamp: ClampMode) -> Rank {
    if k < 1.0 {
        match clamp {
            ClampMode::LowerUnbounded => Rank::NegInf,
            _ => Rank::At(1),
        }
    } else if k > n as f64 {
        match clamp {
            ClampMode::UpperUnbounded => Rank::PosInf,
            _ => Rank::At(n),
        }
    } else {
        Rank::At(k as usize)
    }
}

/// Rank selected by the empirical quantile at `level` over `n` values.
pub fn quantile_rank(n: usize, level: QuantileLevel) -> Rank {
    resolve_rank(snapped_ceil(n as f64 * level.raw), n, level.clamp)
}

/// Rank selected by the empirical right-quantile at `level` over `n` values.
pub fn right_quantile_rank(n: usize, level: QuantileLevel) -> Rank {
    resolve_rank(snapped_floor(n as f64 * level.raw) + 1.0, n, level.clamp)
}

/// A nonempty multiset of NaN-free losses.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSample<T> {
    values: Vec<T>,
}

impl<T: Real> LossSample<T> {
    /// Builds a sample of finite values.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    /// Appends the `+inf` sentinel used by full conformal prediction sets.
    pub fn with_infinity(mut self) -> Self {
        self.values.push(T::infinity());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    fn at_rank(&self, rank: Rank) -> T {
        match rank {
            Rank::NegInf => T::neg_infinity(),
            Rank::PosInf => T::infinity(),
            Rank::At(k) => select(&self.values, k),
        }
    }

    pub fn quantile(&self, level: QuantileLevel) -> T {
        self.at_rank(quantile_rank(self.len(), level))
    }

    pub fn right_quantile(&self, level: QuantileLevel) -> T {
        self.at_rank(right_quantile_rank(self.len(), level))
    }

    pub fn kth_smallest(&self, k: usize) -> Result<T> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::IndexOutOfRange { k, n });
        }
        Ok(select(&self.values, k))
    }

    pub fn kth_largest(&self, k: usize) -> Result<T> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::IndexOutOfRange { k, n });
        }
        Ok(select(&self.values, n - k + 1))
    }

    /// Perturbs every value by independent noise, see [`TieBreak`].
    pub fn jittered<R: Rng + ?Sized>(&self, rng: &mut R, magnitude: f64) -> Self {
        let mut values = self.values.clone();
        jitter(&mut values, rng, magnitude);
        Self { values }
    }
}

/// k-th smallest (1-based) via selection over a copied buffer.
fn select<T: Real>(values: &[T], k: usize) -> T {
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, cmp_real);
    *kth
}

/// Tie handling for loss samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    None,
    /// Adds i.i.d. `Uniform[-m, m] * max(1, |v|)` noise to every value.
    Jitter(f64),
}

pub fn jitter<T: Real, R: Rng + ?Sized>(values: &mut [T], rng: &mut R, magnitude: f64) {
    for v in values.iter_mut() {
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let scale = v.abs().as_f64().max(1.0);
        *v += T::of(u * magnitude * scale);
    }
}

impl TieBreak {
    pub fn apply<T: Real, R: Rng + ?Sized>(&self, values: &mut [T], rng: &mut R) {
        if let TieBreak::Jitter(m) = *self {
            jitter(values, rng, m);
        }
    }
}

/// Empirical quantile: the `ceil(n a)`-th smallest element.
pub fn empirical_quantile<T: Real>(sample: &LossSample<T>, level: QuantileLevel) -> T {
    sample.quantile(level)
}

/// Empirical right-quantile: the `(floor(n a) + 1)`-th smallest element.
pub fn empirical_right_quantile<T: Real>(sample: &LossSample<T>, level: QuantileLevel) -> T {
    sample.right_quantile(level)
}

pub fn kth_smallest<T: Real>(sample: &LossSample<T>, k: usize) -> Result<T> {
    sample.kth_smallest(k)
}

pub fn kth_largest<T: Real>(sample: &LossSample<T>, k: usize) -> Result<T> {
    sample.kth_largest(k)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(alpha))
    }
}

/// Deflated lower and inflated upper levels for two-sided intervals over
/// `n_cal` exchangeable calibration losses:
/// `a_lo = a/2 - (1 - a/2)/n_cal` and `a_hi = (1 + 1/n_cal)(1 - a/2)`.
pub fn candidate_levels(alpha: f64, n_cal: usize) -> Result<(QuantileLevel, QuantileLevel)> {
    check_alpha(alpha)?;
    if n_cal == 0 {
        return Err(Error::EmptySample);
    }
    let n = n_cal as f64;
    let lo = alpha / 2.0 - (1.0 - alpha / 2.0) / n;
    let hi = (1.0 + 1.0 / n) * (1.0 - alpha / 2.0);
    Ok((
        QuantileLevel::new(lo, ClampMode::LowerUnbounded),
        QuantileLevel::new(hi, ClampMode::UpperUnbounded),
    ))
}

/// Inflated one-sided level `min{1, (1 - a)(1 + 1/n_cal)}` for split conformal
/// thresholds.
pub fn split_level(alpha: f64, n_cal: usize) -> Result<QuantileLevel> {
    check_alpha(alpha)?;
    if n_cal == 0 {
        return Err(Error::EmptySample);
    }
    let raw = ((1.0 - alpha) * (1.0 + 1.0 / n_cal as f64)).min(1.0);
    Ok(QuantileLevel::saturating(raw))
}

/// Off-sample level `(1 + 1/n) a`; levels above one read as `+inf`.
pub fn off_sample_level(alpha: f64, n: usize) -> Result<QuantileLevel> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    Ok(QuantileLevel::new(
        (1.0 + 1.0 / n as f64) * alpha,
        ClampMode::UpperUnbounded,
    ))
}
