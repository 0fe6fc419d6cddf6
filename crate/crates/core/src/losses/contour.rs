use crate::error::{Error, Result};
use crate::grid::{shared_mask, Grid, ProbGrid};

use super::{clamp_prob, AlphaMode, AttentionParams, LossResult};

/// Attention loss of one pixel.
///
/// `-α β^((1-p̂)^γ) ln p̂` for a contour pixel and
/// `-(1-α) β^(p̂^γ) ln(1-p̂)` otherwise, with `p̂` clamped first.
pub fn attention_loss_pixel(phat: f64, label: bool, params: &AttentionParams) -> f64 {
    attention_loss_pixel_grad(phat, label, params).0
}

/// Attention loss of one pixel and its derivative in `phat`.
///
/// The derivative is zero where the clamp is active.
pub fn attention_loss_pixel_grad(phat: f64, label: bool, params: &AttentionParams) -> (f64, f64) {
    let (p, clamped) = clamp_prob(phat);
    let ln_beta = params.beta.ln();
    let (value, slope) = if label {
        let q = 1.0 - p;
        let u = q.powf(params.gamma);
        let focus = params.beta.powf(u);
        let value = -params.alpha * focus * p.ln();
        // d/dp of β^u with u = (1-p)^γ
        let dfocus = focus * ln_beta * (-params.gamma * q.powf(params.gamma - 1.0));
        let slope = -params.alpha * (dfocus * p.ln() + focus / p);
        (value, slope)
    } else {
        let q = 1.0 - p;
        let v = p.powf(params.gamma);
        let focus = params.beta.powf(v);
        let value = -(1.0 - params.alpha) * focus * q.ln();
        let dfocus = focus * ln_beta * params.gamma * p.powf(params.gamma - 1.0);
        let slope = -(1.0 - params.alpha) * (dfocus * q.ln() - focus / q);
        (value, slope)
    };
    (value, if clamped { 0.0 } else { slope })
}

fn labels(gt: &ProbGrid, mask: &[bool]) -> Result<Vec<bool>> {
    let w = gt.width();
    gt.values()
        .iter()
        .zip(mask)
        .enumerate()
        .map(|(i, (&v, &m))| {
            if !m || v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::InvalidValue {
                    x: i % w,
                    y: i / w,
                    value: v,
                    reason: "contour label must be 0 or 1",
                })
            }
        })
        .collect()
}

/// Mean attention loss over the shared valid pixels.
///
/// `alpha` is chosen per image according to `mode`.
pub fn contour_loss(
    pred: &ProbGrid,
    gt: &ProbGrid,
    params: &AttentionParams,
    mode: AlphaMode,
) -> Result<LossResult> {
    params.validate()?;
    pred.check_shape(gt)?;
    let mask = shared_mask(pred.mask(), gt.mask());
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyDomain("contour loss needs a shared valid pixel"));
    }
    let labels = labels(gt, &mask)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let fraction = positives as f64 / n as f64;
    let params = AttentionParams {
        alpha: match mode {
            AlphaMode::ContourFraction => fraction,
            AlphaMode::NonContourFraction => 1.0 - fraction,
            AlphaMode::Fixed => params.alpha,
        },
        ..*params
    };

    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        let (v, s) = attention_loss_pixel_grad(pred.values()[i], labels[i], &params);
        value += v;
        grad[i] = s * inv_n;
    }
    let mut result = LossResult::new(value * inv_n);
    result.grad_contours = Some(Grid::new(
        pred.width(),
        pred.height(),
        grad,
        pred.mask().to_vec(),
    )?);
    Ok(result)
}
