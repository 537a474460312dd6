use rand_chacha::ChaCha8Rng;

use super::{check_dim, Candidate, Learner, Model};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// k-nearest-neighbour classifier (class frequencies among the neighbours)
/// or regressor (neighbour mean).
#[derive(Clone, Debug, PartialEq)]
pub struct Knn {
    pub k: usize,
}

impl Default for Knn {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Training records stored in the learner's shuffled order. Equidistant
/// neighbours are ranked by that order.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel<T> {
    pub k: usize,
    pub dim: usize,
    pub points: Vec<T>,
    pub targets: Targets<T>,
    pub n_classes: usize,
}

impl<T: Real> KnnModel<T> {
    fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// Positions of the `k` nearest stored points.
    pub fn neighbors(&self, x: &[T]) -> Result<Vec<usize>> {
        check_dim(self.dim, x.len())?;
        let mut dist: Vec<(T, usize)> = self
            .points
            .chunks(self.dim)
            .enumerate()
            .map(|(i, p)| {
                let d = p.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                (d, i)
            })
            .collect();
        let k = self.k.min(self.len());
        let cmp = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }

    pub fn class_probs(&self, x: &[T]) -> Result<Vec<T>> {
        let Targets::Label(labels) = &self.targets else {
            return Err(Error::WrongTask("k-NN regressor has no class probabilities".into()));
        };
        let nb = self.neighbors(x)?;
        let mut p = vec![T::zero(); self.n_classes];
        for &i in &nb {
            p[labels[i]] += T::one();
        }
        let k = T::of_usize(nb.len());
        p.iter_mut().for_each(|v| *v /= k);
        Ok(p)
    }

    pub fn predict_value(&self, x: &[T]) -> Result<T> {
        let Targets::Real(y) = &self.targets else {
            return Err(Error::WrongTask("k-NN classifier has no real-valued prediction".into()));
        };
        let nb = self.neighbors(x)?;
        Ok(nb.iter().map(|&i| y[i]).sum::<T>() / T::of_usize(nb.len()))
    }
}

impl<T: Real> Learner<T> for Knn {
    fn name(&self) -> &str {
        "knn"
    }

    fn fit_ordered(
        &self,
        train: &Dataset<T>,
        order: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Result<Candidate<T>> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k-NN needs k >= 1".into()));
        }
        if train.task().is_classification() && train.n_classes() < 2 {
            return Err(Error::DegenerateLabels(
                "a classifier needs at least two classes".into(),
            ));
        }
        let sub = train.subset(order);
        let mut points = Vec::with_capacity(order.len() * train.dim());
        for i in 0..sub.len() {
            points.extend_from_slice(sub.features(i));
        }
        Ok(Candidate {
            model: Model::Knn(KnnModel {
                k: self.k,
                dim: train.dim(),
                points,
                targets: sub.targets().clone(),
                n_classes: train.n_classes(),
            }),
            learner: "knn".into(),
            train_size: order.len(),
            grad_evals: 0,
            updates: 0,
        })
    }
}
