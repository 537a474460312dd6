use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{real_targets, Candidate, Learner, Model};
use crate::data::Dataset;
use crate::error::Result;
use crate::scalar::{dot, Real};

const INIT_RANGE: f64 = 5.0;

fn random_init<T: Real>(dim: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..dim)
        .map(|_| T::of(rng.random_range(-INIT_RANGE..=INIT_RANGE)))
        .collect()
}

/// Mean squared error of the linear map `w` over row-major `features`.
pub fn mse_objective<T: Real>(w: &[T], features: &[T], targets: &[T]) -> T {
    let d = w.len();
    let total: T = features
        .chunks(d)
        .zip(targets)
        .map(|(x, &y)| {
            let r = dot(w, x) - y;
            r * r
        })
        .sum();
    total / T::of_usize(targets.len())
}

/// Gradient of [`mse_objective`] in `w`.
pub fn mse_gradient<T: Real>(w: &[T], features: &[T], targets: &[T]) -> Vec<T> {
    let d = w.len();
    let mut g = vec![T::zero(); d];
    for (x, &y) in features.chunks(d).zip(targets) {
        let r = dot(w, x) - y;
        for (gj, &xj) in g.iter_mut().zip(x) {
            *gj += r * xj;
        }
    }
    let scale = T::of(2.0) / T::of_usize(targets.len());
    g.iter_mut().for_each(|v| *v *= scale);
    g
}

/// Gradient of `(<w, x> - y)^2` in `w`.
pub fn squared_error_gradient<T: Real>(w: &[T], x: &[T], y: T) -> Vec<T> {
    let r = T::of(2.0) * (dot(w, x) - y);
    x.iter().map(|&xj| r * xj).collect()
}

/// Full-batch gradient descent on the squared error, no intercept.
///
/// The budget is `budget_multiplier * n` per-example gradient evaluations,
/// spent as `budget_multiplier` full-batch updates.
#[derive(Clone, Debug, PartialEq)]
pub struct GdErm {
    pub step: f64,
    pub budget_multiplier: usize,
}

impl Default for GdErm {
    fn default() -> Self {
        Self {
            step: 0.1,
            budget_multiplier: 5,
        }
    }
}

impl<T: Real> Learner<T> for GdErm {
    fn name(&self) -> &str {
        "gd_erm"
    }

    fn fit_ordered(
        &self,
        train: &Dataset<T>,
        order: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Candidate<T>> {
        let y = real_targets(train, "gd_erm")?;
        let d = train.dim();
        let n = order.len();
        let step = T::of(self.step);
        let scale = T::of(2.0) / T::of_usize(n);
        let mut w = random_init::<T>(d, rng);
        let mut g = vec![T::zero(); d];
        for _ in 0..self.budget_multiplier {
            g.iter_mut().for_each(|v| *v = T::zero());
            for &i in order {
                let x = train.features(i);
                let r = dot(&w, x) - y[i];
                for (gj, &xj) in g.iter_mut().zip(x) {
                    *gj += r * xj;
                }
            }
            for (wj, &gj) in w.iter_mut().zip(&g) {
                *wj -= step * scale * gj;
            }
        }
        Ok(Candidate {
            model: Model::Linear {
                weights: w,
                intercept: T::zero(),
            },
            learner: "gd_erm".into(),
            train_size: n,
            grad_evals: (self.budget_multiplier * n) as u64,
            updates: self.budget_multiplier as u64,
        })
    }
}

/// Stochastic gradient descent on the squared error, no intercept; one
/// reshuffled pass over the data per epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdErm {
    pub step: f64,
    pub passes: usize,
}

impl Default for SgdErm {
    fn default() -> Self {
        Self {
            step: 0.01,
            passes: 5,
        }
    }
}

impl<T: Real> Learner<T> for SgdErm {
    fn name(&self) -> &str {
        "sgd_erm"
    }

    fn fit_ordered(
        &self,
        train: &Dataset<T>,
        order: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Candidate<T>> {
        let y = real_targets(train, "sgd_erm")?;
        let n = order.len();
        let step = T::of(self.step);
        let two = T::of(2.0);
        let mut w = random_init::<T>(train.dim(), rng);
        let mut positions: Vec<usize> = (0..n).collect();
        for _ in 0..self.passes {
            positions.shuffle(rng);
            for &p in &positions {
                let i = order[p];
                let x = train.features(i);
                let r = two * (dot(&w, x) - y[i]);
                for (wj, &xj) in w.iter_mut().zip(x) {
                    *wj -= step * r * xj;
                }
            }
        }
        let evals = (self.passes * n) as u64;
        Ok(Candidate {
            model: Model::Linear {
                weights: w,
                intercept: T::zero(),
            },
            learner: "sgd_erm".into(),
            train_size: n,
            grad_evals: evals,
            updates: evals,
        })
    }
}

/// Ignores its training data and always predicts `value`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstantLearner {
    pub value: f64,
}

impl<T: Real> Learner<T> for ConstantLearner {
    fn name(&self) -> &str {
        "constant"
    }

    fn fit_ordered(
        &self,
        train: &Dataset<T>,
        order: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Result<Candidate<T>> {
        real_targets(train, "constant")?;
        Ok(Candidate {
            model: Model::Constant(T::of(self.value)),
            learner: "constant".into(),
            train_size: order.len(),
            grad_evals: 0,
            updates: 0,
        })
    }
}
