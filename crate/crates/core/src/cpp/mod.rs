//! Prediction sets for losses.
//!
//! * [`candidate_cpp`]: the loss of one trained candidate at a new point.
//! * [`zfree_cpp`]: the loss of the algorithm retrained on a fresh sample,
//!   at a fresh point, without looking at that point.
//! * [`zmod_fixed_fit`] / [`zmod_variable_fit`]: the same quantity, with an
//!   interval located (and in the variable case, sized) by the query point.
//! * [`symbolic_cpp`]: categorical losses such as `{Correct, FP, FN}`.
//! * [`candidate_cpp_samplewise`]: mean loss over a fresh block of points.

mod candidate;
mod symbolic;
mod zfree;
mod zmod;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::data::{Block, Dataset, RngStream};
use crate::error::Result;
use crate::learners::{Candidate, Learner};
use crate::quantile::{candidate_levels, LossSample};
use crate::scalar::Real;

pub use candidate::{candidate_cpp, candidate_cpp_samplewise, candidate_cpp_with, CandidateCpp, SampleWiseCpp};
pub use symbolic::{symbolic_cpp, SymbolSet, SymbolicPredictor};
pub use zfree::{zfree_cpp, ZFreeCpp};
pub use zmod::{zmod_fixed_fit, zmod_query, zmod_variable_fit, ZModBody, ZModPredictor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum IntervalKind {
    Candidate,
    ZFree,
    ZModFixed,
    ZModVariable,
    SampleWise,
}

impl IntervalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntervalKind::Candidate => "candidate",
            IntervalKind::ZFree => "zfree",
            IntervalKind::ZModFixed => "zmod-fixed",
            IntervalKind::ZModVariable => "zmod-var",
            IntervalKind::SampleWise => "samplewise",
        }
    }
}

/// A closed interval `[lower, upper]` whose endpoints may be infinite.
///
/// Variable-width intervals with a negative margin can have
/// `lower > upper`; such intervals are empty and cover nothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionInterval<T> {
    pub lower: T,
    pub upper: T,
    pub alpha: f64,
    pub kind: IntervalKind,
}

impl<T: Real> PredictionInterval<T> {
    pub fn contains(&self, u: T) -> bool {
        self.lower <= u && u <= self.upper
    }

    pub fn width(&self) -> T {
        if self.is_empty() {
            T::zero()
        } else {
            self.upper - self.lower
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }
}

/// Renders a value with `+inf` / `-inf` tokens for infinities.
pub fn format_endpoint<T: Real>(v: T) -> String {
    if v == T::infinity() {
        "+inf".into()
    } else if v == T::neg_infinity() {
        "-inf".into()
    } else {
        v.to_string()
    }
}

struct Endpoint(f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&format_endpoint(self.0))
        }
    }
}

impl<T: Real> Serialize for PredictionInterval<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("PredictionInterval", 4)?;
        st.serialize_field("lower", &Endpoint(self.lower.as_f64()))?;
        st.serialize_field("upper", &Endpoint(self.upper.as_f64()))?;
        st.serialize_field("alpha", &self.alpha)?;
        st.serialize_field("kind", self.kind.as_str())?;
        st.end()
    }
}

/// Two-sided interval from the deflated and inflated empirical quantiles of
/// `losses`.
pub fn interval_from_losses<T: Real>(
    losses: &LossSample<T>,
    alpha: f64,
    kind: IntervalKind,
) -> Result<PredictionInterval<T>> {
    let (lo, hi) = candidate_levels(alpha, losses.len())?;
    Ok(PredictionInterval {
        lower: losses.quantile(lo),
        upper: losses.quantile(hi),
        alpha,
        kind,
    })
}

/// Fits one candidate per block, in parallel, using `stream.derive(j)` for
/// block `j`.
pub(crate) fn fit_blocks<T: Real>(
    data: &Dataset<T>,
    blocks: &[Block],
    learner: &dyn Learner<T>,
    stream: RngStream,
) -> Result<Vec<Candidate<T>>> {
    blocks
        .par_iter()
        .enumerate()
        .map(|(j, b)| learner.fit(&data.subset(&b.indices), &mut stream.derive(j as u64).rng()))
        .collect()
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(crate::Error::InvalidLevel(alpha))
    }
}
