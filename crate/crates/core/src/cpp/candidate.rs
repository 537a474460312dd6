use super::{check_alpha, interval_from_losses, IntervalKind, PredictionInterval};
use crate::data::{split_cal_blocks, split_two, Dataset, RngStream, SplitPlan};
use crate::error::{Error, Result};
use crate::learners::{loss_eval_sample, Candidate, Learner, LossFn};
use crate::quantile::LossSample;
use crate::scalar::Real;

/// Output of candidate CPP: the trained candidate and its loss interval.
#[derive(Clone, Debug)]
pub struct CandidateCpp<T> {
    pub candidate: Candidate<T>,
    pub interval: PredictionInterval<T>,
    pub plan: SplitPlan,
    pub calibration: LossSample<T>,
}

/// Candidate CPP with an even train/calibration split.
pub fn candidate_cpp<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    rng: &RngStream,
) -> Result<CandidateCpp<T>> {
    candidate_cpp_with(data, learner, loss, alpha, 0.5, rng)
}

fn fit_candidate<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    alpha: f64,
    frac_tr: f64,
    rng: &RngStream,
) -> Result<(SplitPlan, Candidate<T>)> {
    check_alpha(alpha)?;
    if data.len() < 4 {
        return Err(Error::DatasetTooSmall {
            need: 4,
            have: data.len(),
        });
    }
    let plan = split_two(data.len(), &mut rng.derive_named("split").rng(), frac_tr)?;
    let candidate = learner.fit(&data.subset(&plan.i_tr), &mut rng.derive_named("fit").rng())?;
    Ok((plan, candidate))
}

/// Fits once on `I_TR` and returns `[Q_lo(L_CP), Q_hi(L_CP)]` over the
/// calibration losses.
pub fn candidate_cpp_with<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    frac_tr: f64,
    rng: &RngStream,
) -> Result<CandidateCpp<T>> {
    let (plan, candidate) = fit_candidate(data, learner, alpha, frac_tr, rng)?;
    let losses = plan
        .i_cp
        .iter()
        .map(|&i| loss.real(&candidate, data.record(i)))
        .collect::<Result<Vec<_>>>()?;
    let calibration = LossSample::new(losses)?;
    let interval = interval_from_losses(&calibration, alpha, IntervalKind::Candidate)?;
    Ok(CandidateCpp {
        candidate,
        interval,
        plan,
        calibration,
    })
}

#[derive(Clone, Debug)]
pub struct SampleWiseCpp<T> {
    pub candidate: Candidate<T>,
    pub interval: PredictionInterval<T>,
    pub plan: SplitPlan,
    pub calibration: LossSample<T>,
}

/// Candidate CPP for the mean loss over a fresh block of
/// `|I_CP| / k_blocks` points, calibrated on `k_blocks` block means.
///
/// With `k_blocks = |I_CP|` this reproduces [`candidate_cpp_with`] exactly.
pub fn candidate_cpp_samplewise<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    frac_tr: f64,
    k_blocks: usize,
    rng: &RngStream,
) -> Result<SampleWiseCpp<T>> {
    let (plan, candidate) = fit_candidate(data, learner, alpha, frac_tr, rng)?;
    let plan = split_cal_blocks(&plan, &mut rng.derive_named("blocks").rng(), k_blocks)?;
    let losses = plan
        .cp_blocks
        .iter()
        .map(|b| loss_eval_sample(loss, &candidate, b.indices.iter().map(|&i| data.record(i))))
        .collect::<Result<Vec<_>>>()?;
    let calibration = LossSample::new(losses)?;
    let interval = interval_from_losses(&calibration, alpha, IntervalKind::SampleWise)?;
    Ok(SampleWiseCpp {
        candidate,
        interval,
        plan,
        calibration,
    })
}
