use super::{check_alpha, fit_blocks, IntervalKind, PredictionInterval};
use crate::data::{split_zmod, Block, Dataset, Record, RngStream, SplitPlan};
use crate::error::Result;
use crate::learners::{Learner, LossFn};
use crate::quantile::{split_level, LossSample};
use crate::scalar::Real;
use crate::subroutines::{fit_regression, PointPredictor, QuantilePair, SubroutineConfig, ZEncoder};

#[derive(Clone, Debug, PartialEq)]
pub enum ZModBody {
    /// `f(z) +- margin`.
    Fixed { f: PointPredictor },
    /// `[q_lo(z) - margin, q_hi(z) + margin]`.
    Variable { pair: QuantilePair },
}

/// A calibrated Z-modulated interval, queried at any record `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZModPredictor {
    pub body: ZModBody,
    pub encoder: ZEncoder,
    pub alpha: f64,
    /// Number of calibration anchors `|I'_CP|`.
    pub n_cal: usize,
    /// Conformal quantile of the calibration scores, shared by all queries.
    pub margin: f64,
    pub plan: SplitPlan,
}

impl ZModPredictor {
    pub fn kind(&self) -> IntervalKind {
        match self.body {
            ZModBody::Fixed { .. } => IntervalKind::ZModFixed,
            ZModBody::Variable { .. } => IntervalKind::ZModVariable,
        }
    }

    pub fn query<T: Real>(&self, z: Record<'_, T>) -> Result<PredictionInterval<T>> {
        let e = self.encoder.encode(z)?;
        let (lo, hi) = match &self.body {
            ZModBody::Fixed { f } => {
                let c = f.predict(&e)?;
                (c - self.margin, c + self.margin)
            }
            ZModBody::Variable { pair } => {
                let (lo, hi) = pair.predict(&e)?;
                (lo - self.margin, hi + self.margin)
            }
        };
        Ok(PredictionInterval {
            lower: T::of(lo),
            upper: T::of(hi),
            alpha: self.alpha,
            kind: self.kind(),
        })
    }
}

pub fn zmod_query<T: Real>(pred: &ZModPredictor, z: Record<'_, T>) -> Result<PredictionInterval<T>> {
    pred.query(z)
}

/// Encoded anchors and the losses of their block-trained candidates.
fn anchor_pairs<T: Real>(
    data: &Dataset<T>,
    blocks: &[Block],
    learner: &dyn Learner<T>,
    loss: &LossFn,
    encoder: &ZEncoder,
    stream: RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let candidates = fit_blocks(data, blocks, learner, stream)?;
    let mut z = Vec::with_capacity(blocks.len());
    let mut y = Vec::with_capacity(blocks.len());
    for (b, c) in blocks.iter().zip(&candidates) {
        let j = b.anchor.expect("anchored block");
        z.push(encoder.encode(data.record(j))?);
        y.push(loss.real(c, data.record(j))?.as_f64());
    }
    Ok((z, y))
}

struct Prepared {
    plan: SplitPlan,
    encoder: ZEncoder,
    train: (Vec<Vec<f64>>, Vec<f64>),
    cal: (Vec<Vec<f64>>, Vec<f64>),
}

fn prepare<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    k: usize,
    rng: &RngStream,
) -> Result<Prepared> {
    check_alpha(alpha)?;
    let plan = split_zmod(data.len(), &mut rng.derive_named("split").rng(), k)?;
    let encoder = ZEncoder::for_dataset(data);
    let fit = rng.derive_named("fit");
    let train = anchor_pairs(data, &plan.tr_blocks, learner, loss, &encoder, fit.derive_named("tr"))?;
    let cal = anchor_pairs(data, &plan.cp_blocks, learner, loss, &encoder, fit.derive_named("cp"))?;
    Ok(Prepared {
        plan,
        encoder,
        train,
        cal,
    })
}

fn conformal_margin(scores: Vec<f64>, alpha: f64) -> Result<f64> {
    let n = scores.len();
    Ok(LossSample::new(scores)?.quantile(split_level(alpha, n)?))
}

/// Fixed-width Z-modulated CPP: a regression of anchor losses on encoded
/// anchors, widened by the conformal quantile of absolute residuals.
pub fn zmod_fixed_fit<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    k: usize,
    rng: &RngStream,
    _cfg: &SubroutineConfig,
) -> Result<ZModPredictor> {
    let p = prepare(data, learner, loss, alpha, k, rng)?;
    let f = fit_regression(&p.train.0, &p.train.1)?;
    let scores = p
        .cal
        .0
        .iter()
        .zip(&p.cal.1)
        .map(|(z, &l)| Ok((f.predict(z)? - l).abs()))
        .collect::<Result<Vec<_>>>()?;
    let margin = conformal_margin(scores, alpha)?;
    Ok(ZModPredictor {
        body: ZModBody::Fixed { f },
        encoder: p.encoder,
        alpha,
        n_cal: k,
        margin,
        plan: p.plan,
    })
}

/// Variable-width Z-modulated CPP: conformalized quantile regression of the
/// anchor losses.
pub fn zmod_variable_fit<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    k: usize,
    rng: &RngStream,
    cfg: &SubroutineConfig,
) -> Result<ZModPredictor> {
    let p = prepare(data, learner, loss, alpha, k, rng)?;
    let inner = cfg.inner_alpha.unwrap_or(alpha);
    let pair = QuantilePair::fit(&p.train.0, &p.train.1, inner, &cfg.quantreg)?;
    let scores = p
        .cal
        .0
        .iter()
        .zip(&p.cal.1)
        .map(|(z, &l)| {
            let (lo, hi) = pair.predict(z)?;
            Ok((l - hi).max(lo - l))
        })
        .collect::<Result<Vec<_>>>()?;
    let margin = conformal_margin(scores, alpha)?;
    Ok(ZModPredictor {
        body: ZModBody::Variable { pair },
        encoder: p.encoder,
        alpha,
        n_cal: k,
        margin,
        plan: p.plan,
    })
}
