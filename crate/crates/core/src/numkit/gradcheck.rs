use super::mlp::loss_value;
use super::{Gradients, Loss, Matrix, Mlp};
use crate::Result;

const STEP: f64 = 1e-5;

/// Largest relative error between backprop and central differences.
///
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check(net: &Mlp, batch: &Matrix, targets: &Matrix, loss: Loss) -> Result<f64> {
    let grads = net.backward(&net.forward_trace(batch)?, targets, loss)?;
    gradient_check_against(net, batch, targets, loss, &grads)
}

/// Same as [`gradient_check`] but compares a caller-supplied gradient.
pub fn gradient_check_against(
    net: &Mlp,
    batch: &Matrix,
    targets: &Matrix,
    loss: Loss,
    grads: &Gradients,
) -> Result<f64> {
    // Validates head/targets once up front.
    net.loss(batch, targets, loss)?;
    let analytic: Vec<f64> = grads.values().collect();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(i);
        *probe.param_mut(i) = original + STEP;
        let plus = loss_value(&probe.forward(batch)?, targets, loss);
        *probe.param_mut(i) = original - STEP;
        let minus = loss_value(&probe.forward(batch)?, targets, loss);
        *probe.param_mut(i) = original;
        let numeric = (plus - minus) / (2.0 * STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
