use super::{FieldError, SpectrogramTarget};

/// Weight of the decay-profile term.
pub const DECAY_WEIGHT: f64 = 0.1;

/// Backward-integrated frame energy in natural-log units, relative to the
/// total: `D[t] = ln(sum_{t' >= t} E[t']) - ln(sum E)` with
/// `E[t] = sum_f exp(2 v[t, f])`. Invariant to a constant offset of `v`.
pub fn decay_profile(s: &SpectrogramTarget) -> Vec<f64> {
    let (tail, _, _) = tail_sums(s);
    let total = tail[0];
    tail.iter().map(|&e| (e / total).ln()).collect()
}

// Tail sums of frame energies scaled by exp(-2 max), the scaled cell
// energies, and the max itself.
fn tail_sums(s: &SpectrogramTarget) -> (Vec<f64>, Vec<f64>, f64) {
    let m = s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cell: Vec<f64> = s.values.iter().map(|v| (2.0 * (v - m)).exp()).collect();
    let mut tail = vec![0.0; s.frames];
    let mut acc = 0.0;
    for t in (0..s.frames).rev() {
        acc += cell[t * s.bins..(t + 1) * s.bins].iter().sum::<f64>();
        tail[t] = acc;
    }
    (tail, cell, m)
}

fn check_shapes(pred: &SpectrogramTarget, target: &SpectrogramTarget) -> Result<(), FieldError> {
    if pred.frames != target.frames || pred.bins != target.bins {
        return Err(FieldError::ShapeError(format!(
            "prediction {}x{} vs target {}x{}",
            pred.frames, pred.bins, target.frames, target.bins
        )));
    }
    Ok(())
}

// sign with sign(0) = 0, the subgradient used at ties
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over the grid plus `DECAY_WEIGHT` times the mean
/// absolute difference of the decay profiles.
pub fn loss(pred: &SpectrogramTarget, target: &SpectrogramTarget) -> Result<f64, FieldError> {
    loss_with_grad(pred, target).map(|(l, _)| l)
}

/// Loss and its gradient with respect to every prediction cell.
pub fn loss_with_grad(
    pred: &SpectrogramTarget,
    target: &SpectrogramTarget,
) -> Result<(f64, Vec<f64>), FieldError> {
    check_shapes(pred, target)?;
    let n = pred.values.len() as f64;
    let mut grad: Vec<f64> = pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(p, t)| sign(p - t) / n)
        .collect();
    let mae = pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n;

    let (tail, cell, _) = tail_sums(pred);
    let dp: Vec<f64> = tail.iter().map(|&e| (e / tail[0]).ln()).collect();
    let dt = decay_profile(target);
    let frames = pred.frames as f64;
    let decay = dp.iter().zip(&dt).map(|(a, b)| (a - b).abs()).sum::<f64>() / frames;

    // dD[t]/dv[t', f] = 2 e(t', f) ([t' >= t] / S_t - 1 / S_0)
    let g: Vec<f64> = dp
        .iter()
        .zip(&dt)
        .map(|(a, b)| DECAY_WEIGHT * sign(a - b) / frames)
        .collect();
    let g_total: f64 = g.iter().sum();
    let mut running = 0.0;
    for t in 0..pred.frames {
        running += g[t] / tail[t];
        let coeff = running - g_total / tail[0];
        if coeff == 0.0 {
            continue;
        }
        for f in 0..pred.bins {
            let i = t * pred.bins + f;
            grad[i] += 2.0 * cell[i] * coeff;
        }
    }
    Ok((mae + DECAY_WEIGHT * decay, grad))
}
