use nalgebra::{DMatrix, DVector};

use super::{check_pairs, PointPredictor};
use crate::error::Result;

const PIVOT_TOL: f64 = 1e-10;
const RIDGE: f64 = 1e-8;

/// Least squares with intercept on centred inputs.
///
/// The normal equations are solved by Cholesky. When a pivot falls below
/// `1e-10` of the largest diagonal entry the design is treated as degenerate
/// and `1e-8 * trace / d` is added to the diagonal.
pub fn fit_regression(z: &[Vec<f64>], y: &[f64]) -> Result<PointPredictor> {
    let d = check_pairs(z, y.len())?;
    let n = z.len() as f64;
    let mut xbar = vec![0.0; d];
    for row in z {
        for j in 0..d {
            xbar[j] += row[j] / n;
        }
    }
    let ybar = y.iter().sum::<f64>() / n;
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (row, &yi) in z.iter().zip(y) {
        let xc = DVector::from_iterator(d, row.iter().zip(&xbar).map(|(x, m)| x - m));
        a.ger(1.0, &xc, &xc, 1.0);
        b.axpy(yi - ybar, &xc, 1.0);
    }
    let coef = solve_damped(a, &b);
    let intercept = ybar - coef.iter().zip(&xbar).map(|(c, m)| c * m).sum::<f64>();
    Ok(PointPredictor::Linear {
        intercept,
        coef: coef.iter().copied().collect(),
    })
}

fn solve_damped(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let d = a.nrows();
    let max_diag = a.diagonal().max();
    if max_diag <= 0.0 {
        return DVector::zeros(d);
    }
    if let Some(ch) = a.clone().cholesky() {
        let min_pivot = ch.l_dirty().diagonal().map(|v| v * v).min();
        if min_pivot > PIVOT_TOL * max_diag {
            return ch.solve(b);
        }
    }
    let lambda = RIDGE * a.trace() / d as f64;
    let damped = a + DMatrix::identity(d, d) * lambda;
    damped
        .cholesky()
        .map(|ch| ch.solve(b))
        .unwrap_or_else(|| DVector::zeros(d))
}
