use serde::Serialize;

use super::{check_alpha, fit_blocks};
use crate::data::{split_symbolic, Block, Dataset, Record, RngStream, SplitPlan};
use crate::error::{Error, Result};
use crate::learners::{Learner, LossFn, LossKind, Symbol, SymbolAlphabet};
use crate::quantile::{split_level, LossSample};
use crate::scalar::Real;
use crate::subroutines::{fit_quantreg, fit_scoring, PointPredictor, ScoreFn, SubroutineConfig, ZEncoder};

/// A subset of the loss alphabet; may be empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SymbolSet {
    pub symbols: Vec<Symbol>,
}

impl SymbolSet {
    pub fn contains(&self, s: Symbol) -> bool {
        self.symbols.contains(&s)
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }
}

/// Calibrated prediction sets for a categorical loss.
///
/// A symbol `l` is in the set at `z` when `s(z, l) >= q_hi(z) - threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicPredictor {
    pub score: ScoreFn,
    pub q_hi: PointPredictor,
    pub threshold: f64,
    pub alphabet: SymbolAlphabet,
    pub encoder: ZEncoder,
    pub alpha: f64,
    pub n_cal: usize,
    pub plan: SplitPlan,
}

impl SymbolicPredictor {
    pub fn query<T: Real>(&self, z: Record<'_, T>) -> Result<SymbolSet> {
        let e = self.encoder.encode(z)?;
        let cut = self.q_hi.predict(&e)? - self.threshold;
        let scores = self.score.scores(&e)?;
        let symbols = self
            .alphabet
            .symbols()
            .iter()
            .zip(scores)
            .filter(|(_, s)| *s >= cut)
            .map(|(&l, _)| l)
            .collect();
        Ok(SymbolSet { symbols })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

fn anchor_symbols<T: Real>(
    data: &Dataset<T>,
    blocks: &[Block],
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alphabet: &SymbolAlphabet,
    encoder: &ZEncoder,
    stream: RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let candidates = fit_blocks(data, blocks, learner, stream)?;
    let mut z = Vec::with_capacity(blocks.len());
    let mut s = Vec::with_capacity(blocks.len());
    for (b, c) in blocks.iter().zip(&candidates) {
        let j = b.anchor.expect("anchored block");
        z.push(encoder.encode(data.record(j))?);
        let sym = loss.symbol(c, data.record(j))?;
        s.push(alphabet.index_of(sym).ok_or_else(|| {
            Error::InvalidParameter(format!("symbol {sym} outside the declared alphabet"))
        })?);
    }
    Ok((z, s))
}

/// Symbolic CPP over a three-way anchored split: scores are learned on the
/// first part, a conditional level-`alpha` quantile of the scores on the
/// second, and the threshold is calibrated on the third.
pub fn symbolic_cpp<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    k: usize,
    rng: &RngStream,
    cfg: &SubroutineConfig,
) -> Result<SymbolicPredictor> {
    check_alpha(alpha)?;
    if !data.task().is_classification() {
        return Err(Error::WrongTask("symbolic CPP needs a classification dataset".into()));
    }
    if loss.kind != LossKind::Symbolic {
        return Err(Error::WrongTask("symbolic CPP needs a symbolic loss".into()));
    }
    let alphabet = loss
        .alphabet
        .clone()
        .unwrap_or_else(|| SymbolAlphabet::for_classes(data.n_classes()));
    let plan = split_symbolic(data.len(), &mut rng.derive_named("split").rng(), k)?;
    let encoder = ZEncoder::for_dataset(data);
    let fit = rng.derive_named("fit");

    let (z_tr, s_tr) = anchor_symbols(data, &plan.tr_blocks, learner, loss, &alphabet, &encoder, fit.derive_named("tr"))?;
    let score = fit_scoring(&z_tr, &s_tr, alphabet.len(), &cfg.scoring)?;

    let (z_ev, s_ev) = anchor_symbols(data, &plan.ev_blocks, learner, loss, &alphabet, &encoder, fit.derive_named("ev"))?;
    let ev_scores = z_ev
        .iter()
        .zip(&s_ev)
        .map(|(z, &s)| score.score(z, s))
        .collect::<Result<Vec<_>>>()?;
    let q_hi = fit_quantreg(&z_ev, &ev_scores, alpha, &cfg.quantreg)?;

    let (z_cp, s_cp) = anchor_symbols(data, &plan.cp_blocks, learner, loss, &alphabet, &encoder, fit.derive_named("cp"))?;
    let cal = z_cp
        .iter()
        .zip(&s_cp)
        .map(|(z, &s)| Ok(q_hi.predict(z)? - score.score(z, s)?))
        .collect::<Result<Vec<_>>>()?;
    let threshold = LossSample::new(cal)?.quantile(split_level(alpha, k)?);

    Ok(SymbolicPredictor {
        score,
        q_hi,
        threshold,
        alphabet,
        encoder,
        alpha,
        n_cal: k,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Knn;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = RngStream::new(seed).rng();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let l = rng.random_range(0..2usize);
            let c = if l == 0 { -1.0 } else { 1.0 };
            x.push(c + rng.random_range(-1.5..1.5));
            x.push(rng.random_range(-1.0..1.0));
            y.push(l);
        }
        Dataset::classification(x, 2, y, vec!["0".into(), "1".into()]).unwrap()
    }

    #[test]
    fn builds_and_queries() {
        let d = blobs(1500, 1);
        let loss = LossFn::symbolic(SymbolAlphabet::binary());
        let p = symbolic_cpp(&d, &Knn::default(), &loss, 0.1, 20, &RngStream::new(2), &SubroutineConfig::default()).unwrap();
        p.plan.validate().unwrap();
        for i in 0..100 {
            let set = p.query(d.record(i)).unwrap();
            assert!(set.symbols.iter().all(|s| p.alphabet.index_of(*s).is_some()));
        }
    }

    #[test]
    fn infinite_threshold_returns_full_alphabet() {
        let d = blobs(600, 3);
        let loss = LossFn::symbolic(SymbolAlphabet::binary());
        let p = symbolic_cpp(&d, &Knn::default(), &loss, 0.1, 10, &RngStream::new(2), &SubroutineConfig::default())
            .unwrap()
            .with_threshold(f64::INFINITY);
        assert_eq!(p.query(d.record(0)).unwrap().len(), 3);
        let p = p.with_threshold(f64::NEG_INFINITY);
        assert!(p.query(d.record(0)).unwrap().is_empty());
    }

    #[test]
    fn rejects_regression_data() {
        let d = Dataset::regression(vec![0.0; 100], 1, vec![0.0; 100]).unwrap();
        let loss = LossFn::symbolic(SymbolAlphabet::binary());
        assert!(matches!(
            symbolic_cpp(&d, &Knn::default(), &loss, 0.1, 5, &RngStream::new(0), &SubroutineConfig::default()),
            Err(Error::WrongTask(_))
        ));
    }
}
