//! Conformalized performance prediction.
//!
//! Distribution-free prediction intervals for the loss a learning algorithm
//! will incur: for a fixed trained candidate at a new point, or for the
//! algorithm itself when retrained on a fresh sample. The [`audit`] module
//! checks the finite-sample coverage guarantees by Monte Carlo.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the common instantiations.

pub mod audit;
pub mod cpp;
pub mod data;
pub mod error;
pub mod learners;
pub mod quantile;
mod scalar;
pub mod subroutines;

pub use error::{Error, Result};
pub use scalar::Real;

pub use cpp::{IntervalKind, PredictionInterval};
pub use data::{Dataset, RngStream, SplitPlan};
pub use learners::{Candidate, LossFn, LossKind};
pub use quantile::{ClampMode, LossSample, QuantileLevel};

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type LossSample64 = quantile::LossSample<f64>;
pub type LossSample32 = quantile::LossSample<f32>;
pub type Interval64 = cpp::PredictionInterval<f64>;
pub type Interval32 = cpp::PredictionInterval<f32>;
pub type Candidate64 = learners::Candidate<f64>;
pub type Candidate32 = learners::Candidate<f32>;
