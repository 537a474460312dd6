use super::{check_alpha, fit_blocks, interval_from_losses, IntervalKind, PredictionInterval};
use crate::data::{split_zfree, Dataset, RngStream, SplitPlan};
use crate::error::Result;
use crate::learners::{Learner, LossFn};
use crate::quantile::LossSample;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct ZFreeCpp<T> {
    pub interval: PredictionInterval<T>,
    pub plan: SplitPlan,
    /// `l(A(Z_TR^(j)); Z_j)` for each evaluation point `j`, in plan order.
    pub losses: LossSample<T>,
}

/// Interval for `l(A(Z); Z)` with both the training sample and the point
/// fresh, from `k` disjoint trainings each evaluated at its own held-out point.
pub fn zfree_cpp<T: Real>(
    data: &Dataset<T>,
    learner: &dyn Learner<T>,
    loss: &LossFn,
    alpha: f64,
    k: usize,
    rng: &RngStream,
) -> Result<ZFreeCpp<T>> {
    check_alpha(alpha)?;
    let plan = split_zfree(data.len(), &mut rng.derive_named("split").rng(), k)?;
    let candidates = fit_blocks(data, &plan.tr_blocks, learner, rng.derive_named("fit"))?;
    let losses = plan
        .i_ev
        .iter()
        .zip(&candidates)
        .map(|(&j, c)| loss.real(c, data.record(j)))
        .collect::<Result<Vec<_>>>()?;
    let losses = LossSample::new(losses)?;
    let interval = interval_from_losses(&losses, alpha, IntervalKind::ZFree)?;
    Ok(ZFreeCpp {
        interval,
        plan,
        losses,
    })
}
