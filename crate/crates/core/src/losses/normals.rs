use crate::error::{Error, Result};
use crate::grid::{norm3, shared_mask, Grid, NormalGrid, VecField3};

use super::LossResult;

/// Mean of `1 - cos(N̂, N)` over shared valid pixels.
///
/// `pred` need not be normalized; the gradient is taken with respect to the
/// raw predicted vectors.
pub fn normals_loss(pred: &VecField3, gt: &NormalGrid) -> Result<LossResult> {
    pred.check_shape(gt.grid())?;
    let w = pred.width();
    let mask = shared_mask(pred.mask(), gt.mask());
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyDomain("normals loss needs a shared valid pixel"));
    }
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = vec![[0.0; 3]; pred.len()];
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        let a = pred.values()[i];
        let b = gt.values()[i];
        let (la, lb) = (norm3(a), norm3(b));
        if la == 0.0 || lb == 0.0 {
            return Err(Error::ZeroNormal { x: i % w, y: i / w });
        }
        let cos = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (la * lb);
        value += (1.0 - cos).max(0.0);
        // d cos / d a = b / (|a||b|) - cos a / |a|²
        for k in 0..3 {
            grad[i][k] = -inv_n * (b[k] / (la * lb) - cos * a[k] / (la * la));
        }
    }
    let mut result = LossResult::new(value * inv_n);
    result.grad_normals = Some(Grid::new(
        pred.width(),
        pred.height(),
        grad,
        pred.mask().to_vec(),
    )?);
    Ok(result)
}
