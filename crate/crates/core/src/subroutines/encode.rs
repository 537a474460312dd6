use crate::data::{Dataset, GridShape, Record, Target};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Turns a record `z = (x, y)` into the real vector seen by the subroutines.
///
/// Grid images are summarised as `[vertical symmetry, horizontal symmetry,
/// mean, std]` of the pixels scaled to `[0, 1]`, where a symmetry is the
/// negated mean absolute difference between the image and its mirror.
/// Tabular records keep their features. Either way the target is appended,
/// one-hot for labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ZEncoder {
    dim: usize,
    n_classes: usize,
    grid: Option<GridShape>,
}

impl ZEncoder {
    pub fn for_dataset<T: Real>(data: &Dataset<T>) -> Self {
        Self {
            dim: data.dim(),
            n_classes: data.n_classes(),
            grid: data.grid(),
        }
    }

    /// Length of encoded vectors.
    pub fn width(&self) -> usize {
        let base = if self.grid.is_some() { 4 } else { self.dim };
        base + self.n_classes.max(1)
    }

    pub fn encode<T: Real>(&self, rec: Record<'_, T>) -> Result<Vec<f64>> {
        if rec.features.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                got: rec.features.len(),
            });
        }
        let mut out = Vec::with_capacity(self.width());
        match self.grid {
            Some(g) => out.extend(grid_summary(rec.features, g)),
            None => out.extend(rec.features.iter().map(|v| v.as_f64())),
        }
        match rec.target {
            Target::Real(y) if self.n_classes == 0 => out.push(y.as_f64()),
            Target::Label(l) if l < self.n_classes => {
                out.extend((0..self.n_classes).map(|c| if c == l { 1.0 } else { 0.0 }))
            }
            _ => {
                return Err(Error::WrongTask(
                    "record target does not match the encoder".into(),
                ))
            }
        }
        Ok(out)
    }

    pub fn encode_all<T: Real>(&self, data: &Dataset<T>, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        indices.iter().map(|&i| self.encode(data.record(i))).collect()
    }
}

fn grid_summary<T: Real>(pixels: &[T], g: GridShape) -> [f64; 4] {
    let (w, h) = (g.w, g.h);
    let p = |r: usize, c: usize| pixels[r * w + c].as_f64() / g.pixel_max;
    let count = (w * h) as f64;
    let mut v_diff = 0.0;
    let mut h_diff = 0.0;
    let mut sum = 0.0;
    for r in 0..h {
        for c in 0..w {
            let x = p(r, c);
            v_diff += (x - p(r, w - 1 - c)).abs();
            h_diff += (x - p(h - 1 - r, c)).abs();
            sum += x;
        }
    }
    let mean = sum / count;
    let var = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| (p(r, c) - mean).powi(2))
        .sum::<f64>()
        / count;
    [-v_diff / count, -h_diff / count, mean, var.sqrt()]
}
