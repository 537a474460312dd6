use std::fmt;

use serde::{Deserialize, Serialize};

use super::{argmax, Candidate, PROB_FLOOR};
use crate::data::{Record, Target};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    SquaredError,
    /// Negative log-probability of the true class.
    LogisticPointwise,
    ZeroOne,
    /// Categorical outcome, see [`Symbol`].
    Symbolic,
}

/// Categorical evaluation outcome. In binary problems label index 1 is the
/// positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Correct,
    FalsePositive,
    FalseNegative,
    Incorrect,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Symbol::Correct => "Correct",
            Symbol::FalsePositive => "FP",
            Symbol::FalseNegative => "FN",
            Symbol::Incorrect => "Incorrect",
        })
    }
}

/// The finite set of symbols a categorical loss can take.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolAlphabet {
    symbols: Vec<Symbol>,
}

impl SymbolAlphabet {
    pub fn binary() -> Self {
        Self {
            symbols: vec![Symbol::Correct, Symbol::FalsePositive, Symbol::FalseNegative],
        }
    }

    pub fn multiclass() -> Self {
        Self {
            symbols: vec![Symbol::Correct, Symbol::Incorrect],
        }
    }

    /// The default alphabet for a problem with `n_classes` labels.
    pub fn for_classes(n_classes: usize) -> Self {
        if n_classes == 2 {
            Self::binary()
        } else {
            Self::multiclass()
        }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, s: Symbol) -> Option<usize> {
        self.symbols.iter().position(|&x| x == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossValue<T> {
    Real(T),
    Symbol(Symbol),
}

/// A pointwise loss `l(h; z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossFn {
    pub kind: LossKind,
    pub alphabet: Option<SymbolAlphabet>,
}

impl LossFn {
    pub fn new(kind: LossKind) -> Self {
        let alphabet = (kind == LossKind::Symbolic).then(SymbolAlphabet::multiclass);
        Self { kind, alphabet }
    }

    pub fn squared_error() -> Self {
        Self::new(LossKind::SquaredError)
    }

    pub fn logistic() -> Self {
        Self::new(LossKind::LogisticPointwise)
    }

    pub fn zero_one() -> Self {
        Self::new(LossKind::ZeroOne)
    }

    pub fn symbolic(alphabet: SymbolAlphabet) -> Self {
        Self {
            kind: LossKind::Symbolic,
            alphabet: Some(alphabet),
        }
    }

    /// Whether the loss takes a continuum of values, so that ties have
    /// probability zero on continuous data.
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, LossKind::SquaredError | LossKind::LogisticPointwise)
    }

    pub fn eval<T: Real>(&self, cand: &Candidate<T>, rec: Record<'_, T>) -> Result<LossValue<T>> {
        loss_eval(self, cand, rec)
    }

    /// Real-valued loss; fails for symbolic losses.
    pub fn real<T: Real>(&self, cand: &Candidate<T>, rec: Record<'_, T>) -> Result<T> {
        match loss_eval(self, cand, rec)? {
            LossValue::Real(v) => Ok(v),
            LossValue::Symbol(_) => Err(Error::WrongTask("symbolic loss has no real value".into())),
        }
    }

    pub fn symbol<T: Real>(&self, cand: &Candidate<T>, rec: Record<'_, T>) -> Result<Symbol> {
        match loss_eval(self, cand, rec)? {
            LossValue::Symbol(s) => Ok(s),
            LossValue::Real(_) => Err(Error::WrongTask("numerical loss is not categorical".into())),
        }
    }
}

fn label_of<T>(rec: &Record<'_, T>, what: &str) -> Result<usize> {
    match rec.target {
        Target::Label(l) => Ok(l),
        Target::Real(_) => Err(Error::WrongTask(format!("{what} needs a labelled record"))),
    }
}

pub fn loss_eval<T: Real>(loss: &LossFn, cand: &Candidate<T>, rec: Record<'_, T>) -> Result<LossValue<T>> {
    match loss.kind {
        LossKind::SquaredError => {
            let Target::Real(y) = rec.target else {
                return Err(Error::WrongTask("squared error needs a real target".into()));
            };
            let r = cand.predict_value(rec.features)? - y;
            Ok(LossValue::Real(r * r))
        }
        LossKind::LogisticPointwise => {
            let y = label_of(&rec, "log-loss")?;
            let p = cand.class_probs(rec.features)?;
            let py = p.get(y).copied().ok_or(Error::ShapeMismatch {
                expected: p.len(),
                got: y + 1,
            })?;
            Ok(LossValue::Real(-py.max(T::of(PROB_FLOOR)).ln()))
        }
        LossKind::ZeroOne => {
            let y = label_of(&rec, "zero-one loss")?;
            let yhat = cand.predict_label(rec.features)?;
            Ok(LossValue::Real(if yhat == y { T::zero() } else { T::one() }))
        }
        LossKind::Symbolic => {
            let y = label_of(&rec, "symbolic loss")?;
            let p = cand.class_probs(rec.features)?;
            let yhat = argmax(&p);
            let binary = loss
                .alphabet
                .as_ref()
                .is_some_and(|a| a.index_of(Symbol::FalsePositive).is_some());
            let s = if yhat == y {
                Symbol::Correct
            } else if binary && p.len() == 2 {
                if yhat == 1 {
                    Symbol::FalsePositive
                } else {
                    Symbol::FalseNegative
                }
            } else {
                Symbol::Incorrect
            };
            Ok(LossValue::Symbol(s))
        }
    }
}

/// Mean pointwise loss over a block of records.
pub fn loss_eval_sample<'a, T: Real>(
    loss: &LossFn,
    cand: &Candidate<T>,
    records: impl IntoIterator<Item = Record<'a, T>>,
) -> Result<T> {
    let mut total = T::zero();
    let mut count = 0usize;
    for rec in records {
        total += loss.real(cand, rec)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyBlock);
    }
    Ok(total / T::of_usize(count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{KnnModel, Model, SoftmaxModel};
    use crate::data::{Dataset, RngStream, Targets};
    use rand::Rng;

    fn linear(w: Vec<f64>) -> Candidate<f64> {
        Candidate {
            model: Model::Linear { weights: w, intercept: 0.0 },
            learner: "test".into(),
            train_size: 0,
            grad_evals: 0,
            updates: 0,
        }
    }

    fn binary_knn(label: usize) -> Candidate<f64> {
        Candidate {
            model: Model::Knn(KnnModel {
                k: 1,
                dim: 1,
                points: vec![0.0],
                targets: Targets::Label(vec![label]),
                n_classes: 2,
            }),
            learner: "test".into(),
            train_size: 1,
            grad_evals: 0,
            updates: 0,
        }
    }

    #[test]
    fn squared_error_perfect_prediction() {
        let c = linear(vec![1.0, 2.0]);
        let rec = Record { features: &[1.0, 1.0], target: Target::Real(3.0) };
        assert_eq!(LossFn::squared_error().real(&c, rec).unwrap(), 0.0);
        let bad = Record { features: &[1.0], target: Target::Real(3.0) };
        assert!(matches!(LossFn::squared_error().real(&c, bad), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn uniform_softmax_log_loss() {
        let c = Candidate {
            model: Model::Softmax(SoftmaxModel {
                n_classes: 10,
                dim: 1,
                weights: vec![0.0; 10],
                bias: vec![0.0; 10],
                shift: vec![0.0],
                scale: vec![1.0],
            }),
            learner: "test".into(),
            train_size: 0,
            grad_evals: 0,
            updates: 0,
        };
        let rec = Record { features: &[0.3], target: Target::Label(4) };
        let v = LossFn::logistic().real(&c, rec).unwrap();
        assert!((v - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn floor_keeps_log_loss_finite() {
        let c = binary_knn(1);
        let rec = Record { features: &[0.0], target: Target::Label(0) };
        let v = LossFn::logistic().real(&c, rec).unwrap();
        assert!((v + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn symbolic_outcomes() {
        let loss = LossFn::symbolic(SymbolAlphabet::binary());
        let pos = binary_knn(1);
        let neg = binary_knn(0);
        let r0 = Record { features: &[0.0], target: Target::Label(0) };
        let r1 = Record { features: &[0.0], target: Target::Label(1) };
        assert_eq!(loss.symbol(&pos, r0).unwrap(), Symbol::FalsePositive);
        assert_eq!(loss.symbol(&neg, r1).unwrap(), Symbol::FalseNegative);
        assert_eq!(loss.symbol(&pos, r1).unwrap(), Symbol::Correct);
        let multi = LossFn::symbolic(SymbolAlphabet::multiclass());
        assert_eq!(multi.symbol(&pos, r0).unwrap(), Symbol::Incorrect);
        assert_eq!(LossFn::zero_one().real(&pos, r0).unwrap(), 1.0);
    }

    #[test]
    fn sample_loss_is_mean() {
        let c = linear(vec![1.0]);
        let data = Dataset::regression(vec![0.0, 0.0], 1, vec![2f64.sqrt(), 2.0]).unwrap();
        let v = loss_eval_sample(&LossFn::squared_error(), &c, data.records()).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let one = loss_eval_sample(&LossFn::squared_error(), &c, data.subset(&[1]).records()).unwrap();
        assert_eq!(one, LossFn::squared_error().real(&c, data.record(1)).unwrap());
        assert!(matches!(
            loss_eval_sample(&LossFn::squared_error(), &c, std::iter::empty()),
            Err(Error::EmptyBlock)
        ));
    }

    #[test]
    fn random_blocks_match_direct_mean_and_ranges() {
        let mut rng = RngStream::new(21).rng();
        for _ in 0..10_000 {
            let w = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let c = linear(w);
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let rec = Record { features: &x, target: Target::Real(rng.random_range(-9.0..9.0)) };
            assert!(LossFn::squared_error().real(&c, rec).unwrap() >= 0.0);

            let label = rng.random_range(0..2);
            let k = binary_knn(rng.random_range(0..2));
            let r = Record { features: &[0.0], target: Target::Label(label) };
            assert!(LossFn::logistic().real(&k, r).unwrap() >= 0.0);
            let z = LossFn::zero_one().real(&k, r).unwrap();
            assert!(z == 0.0 || z == 1.0);
            let s = LossFn::symbolic(SymbolAlphabet::binary()).symbol(&k, r).unwrap();
            assert!(SymbolAlphabet::binary().index_of(s).is_some());
        }
        for _ in 0..200 {
            let c = linear(vec![rng.random_range(-2.0..2.0)]);
            let m = rng.random_range(1..20);
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let data = Dataset::regression(x.clone(), 1, y.clone()).unwrap();
            let direct: f64 = x.iter().zip(&y).map(|(a, b)| {
                let p = c.predict_value(&[*a]).unwrap();
                (p - b) * (p - b)
            }).sum::<f64>() / m as f64;
            let v = loss_eval_sample(&LossFn::squared_error(), &c, data.records()).unwrap();
            assert!((v - direct).abs() < 1e-12);
        }
    }
}
