use super::{check_pairs, standardize, PointPredictor, QuantRegBackend, QuantRegConfig};
use crate::error::{Error, Result};
use crate::quantile::{LossSample, QuantileLevel};

/// Pinball loss `r (tau - 1{r < 0})` of a residual `r = y - prediction`.
pub fn pinball_loss(r: f64, tau: f64) -> f64 {
    if r < 0.0 {
        (tau - 1.0) * r
    } else {
        tau * r
    }
}

fn predict_linear(theta: &[f64], x: &[f64]) -> f64 {
    theta[0] + theta[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Mean pinball loss of the affine map `theta = [intercept, coef...]` over
/// row-major inputs `x`.
pub fn pinball_objective(theta: &[f64], x: &[f64], y: &[f64], tau: f64) -> f64 {
    let d = theta.len() - 1;
    x.chunks(d)
        .zip(y)
        .map(|(row, &yi)| pinball_loss(yi - predict_linear(theta, row), tau))
        .sum::<f64>()
        / y.len() as f64
}

/// A subgradient of [`pinball_objective`]; the gradient wherever no residual
/// is zero.
pub fn pinball_subgradient(theta: &[f64], x: &[f64], y: &[f64], tau: f64) -> Vec<f64> {
    let d = theta.len() - 1;
    let mut g = vec![0.0; d + 1];
    for (row, &yi) in x.chunks(d).zip(y) {
        let r = yi - predict_linear(theta, row);
        let w = if r < 0.0 { 1.0 - tau } else { -tau };
        g[0] += w;
        for j in 0..d {
            g[j + 1] += w * row[j];
        }
    }
    let n = y.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// Conditional `level`-quantile regression.
///
/// The linear backend runs averaged subgradient descent with step
/// `0.5 / sqrt(t)` on standardized inputs and responses centred at their
/// empirical `level`-quantile and scaled by their interquartile range. The
/// k-NN backend returns the empirical quantile over the nearest inputs.
pub fn fit_quantreg(z: &[Vec<f64>], y: &[f64], level: f64, cfg: &QuantRegConfig) -> Result<PointPredictor> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let d = check_pairs(z, y.len())?;
    let (shift, scale) = standardize(z, d);
    let xs: Vec<f64> = z
        .iter()
        .flat_map(|row| (0..d).map(|j| (row[j] - shift[j]) / scale[j]).collect::<Vec<_>>())
        .collect();
    match cfg.backend {
        QuantRegBackend::Knn => {
            if cfg.knn_k == 0 {
                return Err(Error::InvalidParameter("knn_k must be positive".into()));
            }
            Ok(PointPredictor::KnnQuantile {
                points: xs,
                responses: y.to_vec(),
                dim: d,
                k: cfg.knn_k,
                level,
                shift,
                scale,
            })
        }
        QuantRegBackend::PinballLinear => {
            let sample = LossSample::new(y.to_vec())?;
            let center = sample.quantile(QuantileLevel::saturating(level));
            let iqr = sample.quantile(QuantileLevel::saturating(0.75))
                - sample.quantile(QuantileLevel::saturating(0.25));
            let spread = if iqr > 1e-12 {
                iqr
            } else {
                let m = y.iter().sum::<f64>() / y.len() as f64;
                let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            };
            let ys: Vec<f64> = y.iter().map(|v| (v - center) / spread).collect();
            let mut theta = vec![0.0; d + 1];
            let mut avg = vec![0.0; d + 1];
            for t in 1..=cfg.pinball_epochs {
                let g = pinball_subgradient(&theta, &xs, &ys, level);
                let eta = 0.5 / (t as f64).sqrt();
                for (p, gj) in theta.iter_mut().zip(&g) {
                    *p -= eta * gj;
                }
                let w = 1.0 / t as f64;
                for (a, p) in avg.iter_mut().zip(&theta) {
                    *a += w * (p - *a);
                }
            }
            // Undo the response and input transforms.
            let coef: Vec<f64> = (0..d).map(|j| spread * avg[j + 1] / scale[j]).collect();
            let intercept = center + spread * avg[0]
                - coef.iter().zip(&shift).map(|(c, s)| c * s).sum::<f64>();
            Ok(PointPredictor::Linear { intercept, coef })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngStream;
    use rand::Rng;

    fn flat(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = RngStream::new(seed).rng();
        let z = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let y = (0..n).map(|_| rng.random::<f64>()).collect();
        (z, y)
    }

    #[test]
    fn median_of_independent_responses() {
        let (z, y) = flat(1000, 1);
        let s = LossSample::new(y.clone()).unwrap();
        let med = s.quantile(QuantileLevel::saturating(0.5));
        let iqr = s.quantile(QuantileLevel::saturating(0.75)) - s.quantile(QuantileLevel::saturating(0.25));
        for backend in [QuantRegBackend::PinballLinear, QuantRegBackend::Knn] {
            let cfg = QuantRegConfig { backend, knn_k: 400, ..Default::default() };
            let f = fit_quantreg(&z, &y, 0.5, &cfg).unwrap();
            let p = f.predict(&[0.0, 0.0]).unwrap();
            assert!((p - med).abs() < 0.05 * iqr, "{backend:?}: {p} vs {med}");
        }
    }

    #[test]
    fn low_level_on_uniform_responses() {
        let (z, y) = flat(2000, 2);
        let f = fit_quantreg(&z, &y, 0.05, &QuantRegConfig::default()).unwrap();
        let p = f.predict(&[0.1, -0.2]).unwrap();
        assert!((0.0..=0.15).contains(&p), "{p}");
    }

    #[test]
    fn held_out_fraction_below_prediction() {
        for tau in [0.1, 0.5, 0.9] {
            let (z, y) = flat(2000, 3);
            let f = fit_quantreg(&z, &y, tau, &QuantRegConfig::default()).unwrap();
            let (zt, yt) = flat(4000, 4);
            let below = zt.iter().zip(&yt).filter(|(r, v)| **v <= f.predict(r).unwrap()).count();
            let frac = below as f64 / yt.len() as f64;
            assert!((frac - tau).abs() < 0.05, "tau {tau}: {frac}");
        }
    }

    #[test]
    fn subgradient_matches_finite_differences_at_smooth_points() {
        let mut rng = RngStream::new(5).rng();
        let mut checked = 0;
        while checked < 100 {
            let d = 3;
            let n = 25;
            let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let theta: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tau = rng.random_range(0.05..0.95);
            let h = 1e-7;
            let smooth = x.chunks(d).zip(&y).all(|(r, v)| (v - predict_linear(&theta, r)).abs() > 1e-3);
            if !smooth {
                continue;
            }
            let g = pinball_subgradient(&theta, &x, &y, tau);
            for j in 0..=d {
                let (mut a, mut b) = (theta.clone(), theta.clone());
                a[j] += h;
                b[j] -= h;
                let fd = (pinball_objective(&a, &x, &y, tau) - pinball_objective(&b, &x, &y, tau)) / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-5 * g[j].abs().max(1.0));
            }
            checked += 1;
        }
    }

    #[test]
    fn rejects_bad_level() {
        let (z, y) = flat(10, 1);
        assert!(matches!(fit_quantreg(&z, &y, 1.0, &QuantRegConfig::default()), Err(Error::InvalidLevel(_))));
    }
}
