//! Symmetric learners, fitted candidates and loss functions.
//!
//! Every learner draws a uniform permutation of its training records before
//! touching them, and afterwards reads records only through that order. Its
//! output distribution is therefore invariant to the order of the input.

mod knn;
mod linear;
mod loss;
mod softmax;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

pub use knn::{Knn, KnnModel};
pub use linear::{
    mse_gradient, mse_objective, squared_error_gradient, ConstantLearner, GdErm, SgdErm,
};
pub use loss::{loss_eval, loss_eval_sample, LossFn, LossKind, LossValue, Symbol, SymbolAlphabet};
pub use softmax::{fit_softmax, softmax_objective, Logistic, SoftmaxModel};

/// Smallest probability used when taking logarithms.
pub const PROB_FLOOR: f64 = 1e-15;

/// A learning algorithm mapping a training sample to a candidate.
pub trait Learner<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// Fits using the records of `train` visited in `order`.
    fn fit_ordered(
        &self,
        train: &Dataset<T>,
        order: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Candidate<T>>;

    /// Shuffles the record order with `rng`, then fits.
    fn fit(&self, train: &Dataset<T>, rng: &mut ChaCha8Rng) -> Result<Candidate<T>> {
        if train.is_empty() {
            return Err(Error::DatasetTooSmall { need: 1, have: 0 });
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(rng);
        self.fit_ordered(train, &order, rng)
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model<T> {
    /// `y = <weights, x> + intercept`.
    Linear { weights: Vec<T>, intercept: T },
    Softmax(SoftmaxModel<T>),
    Knn(KnnModel<T>),
    Constant(T),
}

/// A fitted hypothesis with bookkeeping about how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate<T> {
    pub model: Model<T>,
    pub learner: String,
    pub train_size: usize,
    /// Per-example gradient evaluations spent during fitting.
    pub grad_evals: u64,
    /// Parameter updates performed.
    pub updates: u64,
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}

impl<T: Real> Candidate<T> {
    /// Real-valued prediction of a regression candidate.
    pub fn predict_value(&self, x: &[T]) -> Result<T> {
        match &self.model {
            Model::Linear { weights, intercept } => {
                check_dim(weights.len(), x.len())?;
                Ok(dot(weights, x) + *intercept)
            }
            Model::Knn(m) => m.predict_value(x),
            Model::Constant(c) => Ok(*c),
            Model::Softmax(_) => Err(Error::WrongTask(
                "classifier has no real-valued prediction".into(),
            )),
        }
    }

    /// Class probabilities of a classification candidate.
    pub fn class_probs(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.model {
            Model::Softmax(m) => m.probs(x),
            Model::Knn(m) => m.class_probs(x),
            _ => Err(Error::WrongTask(
                "regression candidate has no class probabilities".into(),
            )),
        }
    }

    /// Most probable class; ties go to the smallest label index.
    pub fn predict_label(&self, x: &[T]) -> Result<usize> {
        let p = self.class_probs(x)?;
        Ok(argmax(&p))
    }

    pub fn is_finite(&self) -> bool {
        match &self.model {
            Model::Linear { weights, intercept } => {
                intercept.is_finite() && weights.iter().all(|w| w.is_finite())
            }
            Model::Softmax(m) => m.is_finite(),
            Model::Knn(_) => true,
            Model::Constant(c) => c.is_finite(),
        }
    }
}

pub(crate) fn argmax<T: Real>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn real_targets<T: Real>(data: &Dataset<T>, who: &str) -> Result<Vec<T>> {
    match data.targets() {
        Targets::Real(y) => Ok(y.clone()),
        Targets::Label(_) => Err(Error::WrongTask(format!("{who} needs a regression dataset"))),
    }
}

pub(crate) fn label_targets<T: Real>(data: &Dataset<T>, who: &str) -> Result<Vec<usize>> {
    match data.targets() {
        Targets::Label(y) => Ok(y.clone()),
        Targets::Real(_) => Err(Error::WrongTask(format!(
            "{who} needs a classification dataset"
        ))),
    }
}

/// Hyperparameter overrides for [`learner_by_name`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearnerParams {
    pub step: Option<f64>,
    pub epochs: Option<usize>,
    pub knn_k: Option<usize>,
}

pub const LEARNER_NAMES: [&str; 4] = ["gd_erm", "sgd_erm", "logistic", "knn"];

/// Looks up a built-in learner.
pub fn learner_by_name<T: Real>(name: &str, params: &LearnerParams) -> Result<Box<dyn Learner<T>>> {
    Ok(match name {
        "gd_erm" => {
            let mut l = GdErm::default();
            if let Some(s) = params.step {
                l.step = s;
            }
            if let Some(e) = params.epochs {
                l.budget_multiplier = e;
            }
            Box::new(l)
        }
        "sgd_erm" => {
            let mut l = SgdErm::default();
            if let Some(s) = params.step {
                l.step = s;
            }
            if let Some(e) = params.epochs {
                l.passes = e;
            }
            Box::new(l)
        }
        "logistic" => {
            let mut l = Logistic::default();
            if let Some(s) = params.step {
                l.step = s;
            }
            if let Some(e) = params.epochs {
                l.epochs = e;
            }
            Box::new(l)
        }
        "knn" => {
            let mut l = Knn::default();
            if let Some(k) = params.knn_k {
                l.k = k;
            }
            Box::new(l)
        }
        other => return Err(Error::UnknownLearner(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngStream;

    #[test]
    fn registry_knows_builtins() {
        for name in LEARNER_NAMES {
            let l = learner_by_name::<f64>(name, &LearnerParams::default()).unwrap();
            assert_eq!(l.name(), name);
            assert!(l.is_symmetric());
        }
        assert!(matches!(
            learner_by_name::<f64>("svm", &LearnerParams::default()),
            Err(Error::UnknownLearner(_))
        ));
    }

    #[test]
    fn fit_rejects_empty() {
        let d = Dataset::<f64>::regression(vec![], 1, vec![]).unwrap();
        let r = GdErm::default().fit(&d, &mut RngStream::new(0).rng());
        assert!(matches!(r, Err(Error::DatasetTooSmall { .. })));
    }
}
