use super::{check_pairs, ScoringConfig};
use crate::error::{Error, Result};
use crate::learners::{fit_softmax, SoftmaxModel, PROB_FLOOR};

/// Learned conformity score `s(z, l)`: the log-probability of symbol `l` at
/// `z` under a softmax classifier. Higher means more typical.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFn {
    n_symbols: usize,
    /// Symbols seen during fitting, in increasing order.
    present: Vec<usize>,
    model: Option<SoftmaxModel<f64>>,
}

impl ScoreFn {
    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    /// Symbols that never occurred in the fitting data; they score the floor.
    pub fn absent(&self) -> Vec<usize> {
        (0..self.n_symbols).filter(|s| !self.present.contains(s)).collect()
    }

    pub fn score(&self, z: &[f64], symbol: usize) -> Result<f64> {
        if symbol >= self.n_symbols {
            return Err(Error::InvalidParameter(format!(
                "symbol {symbol} outside an alphabet of size {}",
                self.n_symbols
            )));
        }
        let floor = PROB_FLOOR.ln();
        let Some(pos) = self.present.iter().position(|&s| s == symbol) else {
            return Ok(floor);
        };
        match &self.model {
            None => Ok(0.0),
            Some(m) => {
                let p = m.probs(z)?;
                Ok(p[pos].max(PROB_FLOOR).ln())
            }
        }
    }

    pub fn scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        (0..self.n_symbols).map(|s| self.score(z, s)).collect()
    }
}

/// Fits a softmax classifier from encoded inputs to symbol indices in
/// `0..n_symbols`.
pub fn fit_scoring(z: &[Vec<f64>], symbols: &[usize], n_symbols: usize, cfg: &ScoringConfig) -> Result<ScoreFn> {
    let d = check_pairs(z, symbols.len())?;
    if let Some(&bad) = symbols.iter().find(|&&s| s >= n_symbols) {
        return Err(Error::InvalidParameter(format!(
            "symbol {bad} outside an alphabet of size {n_symbols}"
        )));
    }
    let mut present: Vec<usize> = symbols.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Ok(ScoreFn {
            n_symbols,
            present,
            model: None,
        });
    }
    let compact: Vec<usize> = symbols
        .iter()
        .map(|s| present.binary_search(s).unwrap())
        .collect();
    let features: Vec<f64> = z.iter().flatten().copied().collect();
    let order: Vec<usize> = (0..z.len()).collect();
    let model = fit_softmax(&features, d, &compact, present.len(), &order, cfg.step, cfg.epochs);
    Ok(ScoreFn {
        n_symbols,
        present,
        model: Some(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngStream;
    use rand::Rng;

    #[test]
    fn separable_symbols_score_highest() {
        let mut rng = RngStream::new(3).rng();
        let mut z = Vec::new();
        let mut s = Vec::new();
        for i in 0..300 {
            let sym = i % 3;
            z.push(vec![sym as f64 * 4.0 + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
            s.push(sym);
        }
        let f = fit_scoring(&z, &s, 3, &ScoringConfig::default()).unwrap();
        for (zi, &si) in z.iter().zip(&s) {
            let sc = f.scores(zi).unwrap();
            assert!(sc.iter().enumerate().all(|(l, v)| l == si || *v < sc[si]));
            assert!(sc.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn single_symbol_corpus() {
        let z = vec![vec![0.0], vec![1.0], vec![2.0]];
        let f = fit_scoring(&z, &[1, 1, 1], 3, &ScoringConfig::default()).unwrap();
        assert_eq!(f.score(&[5.0], 1).unwrap(), 0.0);
        assert_eq!(f.score(&[5.0], 0).unwrap(), PROB_FLOOR.ln());
        assert_eq!(f.absent(), vec![0, 2]);
    }

    #[test]
    fn duplication_preserves_ordering() {
        let mut rng = RngStream::new(4).rng();
        let z: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let s: Vec<usize> = z.iter().map(|r| usize::from(r[0] + rng.random_range(-0.5..0.5) > 0.0)).collect();
        let f1 = fit_scoring(&z, &s, 2, &ScoringConfig::default()).unwrap();
        let z2: Vec<Vec<f64>> = z.iter().chain(&z).cloned().collect();
        let s2: Vec<usize> = s.iter().chain(&s).copied().collect();
        let f2 = fit_scoring(&z2, &s2, 2, &ScoringConfig::default()).unwrap();
        for q in [-1.5, -0.2, 0.0, 0.3, 1.7] {
            let a = f1.scores(&[q]).unwrap();
            let b = f2.scores(&[q]).unwrap();
            assert_eq!(a[0] < a[1], b[0] < b[1]);
        }
    }
}
