use rand_chacha::ChaCha8Rng;

use super::{check_dim, label_targets, Candidate, Learner, Model};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Multiclass linear softmax classifier over standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel<T> {
    pub n_classes: usize,
    pub dim: usize,
    /// Row-major `n_classes x dim`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub shift: Vec<T>,
    pub scale: Vec<T>,
}

fn softmax_in_place<T: Real>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

impl<T: Real> SoftmaxModel<T> {
    fn standardize_into(&self, x: &[T], out: &mut [T]) {
        for j in 0..self.dim {
            out[j] = (x[j] - self.shift[j]) / self.scale[j];
        }
    }

    fn logits_std(&self, xs: &[T], out: &mut [T]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(&self.weights[c * self.dim..(c + 1) * self.dim], xs) + self.bias[c];
        }
    }

    pub fn probs(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim, x.len())?;
        let mut xs = vec![T::zero(); self.dim];
        self.standardize_into(x, &mut xs);
        let mut p = vec![T::zero(); self.n_classes];
        self.logits_std(&xs, &mut p);
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Mean log-loss of a softmax model on already standardized features, with
/// its gradients in the weights and the bias.
pub fn softmax_objective<T: Real>(
    weights: &[T],
    bias: &[T],
    features: &[T],
    labels: &[usize],
) -> (T, Vec<T>, Vec<T>) {
    let c = bias.len();
    let d = weights.len() / c;
    let mut gw = vec![T::zero(); weights.len()];
    let mut gb = vec![T::zero(); c];
    let mut loss = T::zero();
    let mut z = vec![T::zero(); c];
    for (x, &y) in features.chunks(d).zip(labels) {
        for k in 0..c {
            z[k] = dot(&weights[k * d..(k + 1) * d], x) + bias[k];
        }
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - z[y];
        for k in 0..c {
            let p = (z[k] - lse).exp();
            let r = if k == y { p - T::one() } else { p };
            gb[k] += r;
            for j in 0..d {
                gw[k * d + j] += r * x[j];
            }
        }
    }
    let n = T::of_usize(labels.len());
    gw.iter_mut().chain(gb.iter_mut()).for_each(|v| *v /= n);
    (loss / n, gw, gb)
}

/// Full-batch gradient descent on the mean log-loss from zero weights.
///
/// Features are standardized with statistics of the visited records; the
/// records are accumulated in `order`.
pub fn fit_softmax<T: Real>(
    features: &[T],
    dim: usize,
    labels: &[usize],
    n_classes: usize,
    order: &[usize],
    step: f64,
    epochs: usize,
) -> SoftmaxModel<T> {
    let n = T::of_usize(order.len());
    let mut shift = vec![T::zero(); dim];
    for &i in order {
        for j in 0..dim {
            shift[j] += features[i * dim + j];
        }
    }
    shift.iter_mut().for_each(|v| *v /= n);
    let mut scale = vec![T::zero(); dim];
    for &i in order {
        for j in 0..dim {
            let r = features[i * dim + j] - shift[j];
            scale[j] += r * r;
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / n).sqrt();
        *s = if sd > T::of(1e-12) { sd } else { T::one() };
    }
    let mut xs = Vec::with_capacity(order.len() * dim);
    let mut ys = Vec::with_capacity(order.len());
    for &i in order {
        for j in 0..dim {
            xs.push((features[i * dim + j] - shift[j]) / scale[j]);
        }
        ys.push(labels[i]);
    }
    let mut weights = vec![T::zero(); n_classes * dim];
    let mut bias = vec![T::zero(); n_classes];
    let lr = T::of(step);
    for _ in 0..epochs {
        let (_, gw, gb) = softmax_objective(&weights, &bias, &xs, &ys);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= lr * *g;
        }
        for (b, g) in bias.iter_mut().zip(&gb) {
            *b -= lr * *g;
        }
    }
    SoftmaxModel {
        n_classes,
        dim,
        weights,
        bias,
        shift,
        scale,
    }
}

/// Linear softmax classifier trained by full-batch gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct Logistic {
    pub step: f64,
    pub epochs: usize,
}

impl Default for Logistic {
    fn default() -> Self {
        Self {
            step: 0.5,
            epochs: 100,
        }
    }
}

impl<T: Real> Learner<T> for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }

    fn fit_ordered(
        &self,
        train: &Dataset<T>,
        order: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Result<Candidate<T>> {
        let labels = label_targets(train, "logistic")?;
        let c = train.n_classes();
        if c < 2 {
            return Err(Error::DegenerateLabels(format!(
                "a classifier needs at least two classes, the label set has {c}"
            )));
        }
        let d = train.dim();
        let mut features = Vec::with_capacity(train.len() * d);
        for i in 0..train.len() {
            features.extend_from_slice(train.features(i));
        }
        let model = fit_softmax(&features, d, &labels, c, order, self.step, self.epochs);
        let n = order.len();
        Ok(Candidate {
            model: Model::Softmax(model),
            learner: "logistic".into(),
            train_size: n,
            grad_evals: (self.epochs * n) as u64,
            updates: self.epochs as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngStream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(12).rng();
        for _ in 0..100 {
            let (c, d, n) = (3, 4, 20);
            let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let w: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, gw, gb) = softmax_objective(&w, &b, &x, &y);
            let h = 1e-6;
            for j in 0..w.len() {
                let (mut a, mut m) = (w.clone(), w.clone());
                a[j] += h;
                m[j] -= h;
                let fd = (softmax_objective(&a, &b, &x, &y).0 - softmax_objective(&m, &b, &x, &y).0) / (2.0 * h);
                assert!((gw[j] - fd).abs() <= 1e-6 * gw[j].abs().max(1.0), "{} vs {}", gw[j], fd);
            }
            for j in 0..b.len() {
                let (mut a, mut m) = (b.clone(), b.clone());
                a[j] += h;
                m[j] -= h;
                let fd = (softmax_objective(&w, &a, &x, &y).0 - softmax_objective(&w, &m, &x, &y).0) / (2.0 * h);
                assert!((gb[j] - fd).abs() <= 1e-6 * gb[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn separable_blobs_fit_well() {
        let mut rng = RngStream::new(4).rng();
        let n = 400;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let center = if label == 0 { -3.0 } else { 3.0 };
            for _ in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                x.push(center + 0.5 * e);
            }
            y.push(label);
        }
        let data = Dataset::classification(x, 2, y, vec!["a".into(), "b".into()]).unwrap();
        let cand = Logistic::default().fit(&data, &mut rng).unwrap();
        let errors = (0..n)
            .filter(|&i| cand.predict_label(data.features(i)).unwrap() != match data.target(i) {
                crate::data::Target::Label(l) => l,
                _ => unreachable!(),
            })
            .count();
        assert!((errors as f64 / n as f64) < 0.05);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = Dataset::<f64>::classification(vec![0.0, 1.0], 1, vec![0, 0], vec!["only".into()]).unwrap();
        let r = Logistic::default().fit(&data, &mut RngStream::new(0).rng());
        assert!(matches!(r, Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = SoftmaxModel {
            n_classes: 10,
            dim: 2,
            weights: vec![0.0; 20],
            bias: vec![0.0; 10],
            shift: vec![0.0; 2],
            scale: vec![1.0; 2],
        };
        let p = m.probs(&[3.0, -1.0]).unwrap();
        assert!(p.iter().all(|v: &f64| (v - 0.1).abs() < 1e-15));
        assert!(matches!(m.probs(&[1.0]), Err(Error::ShapeMismatch { .. })));
    }
}
