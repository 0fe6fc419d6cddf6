use crate::error::{Error, Result};
use crate::grid::{gradient_adjoint, gradient_of, shared_mask, DepthGrid, Grid};

use super::LossResult;

/// Reverse Huber: `|x|` for `|x| <= c`, `(x² + c²) / (2c)` beyond.
///
/// Returns the value and its derivative in `x`.
pub fn berhu(x: f64, c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!(
            "berhu switch point must be positive, got {c}"
        )));
    }
    Ok(berhu_unchecked(x, c))
}

#[inline]
fn berhu_unchecked(x: f64, c: f64) -> (f64, f64) {
    let a = x.abs();
    if a <= c {
        let sign = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        (a, sign)
    } else {
        ((x * x + c * c) / (2.0 * c), x / c)
    }
}

/// Switch point for the depth loss: one fifth of the largest absolute log
/// residual over the valid pixels.
pub(crate) fn berhu_switch(residuals: &[f64], mask: &[bool]) -> f64 {
    residuals
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold(0.0f64, |acc, (r, _)| acc.max(r.abs()))
        / 5.0
}

/// BerHu on log residuals plus the squared difference of log-depth gradients.
///
/// The switch point `c` is treated as a constant when differentiating.
pub fn depth_loss(pred: &DepthGrid, gt: &DepthGrid) -> Result<LossResult> {
    pred.check_shape(gt)?;
    let (w, h) = (pred.width(), pred.height());
    let mask = shared_mask(pred.mask(), gt.mask());
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyDomain("depth loss needs a shared valid pixel"));
    }
    let inv_n = 1.0 / n as f64;

    let log_of = |d: &DepthGrid| -> Result<Grid<f64>> {
        let values = d
            .values()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v.ln() } else { 0.0 })
            .collect();
        Grid::new(w, h, values, mask.clone())
    };
    let log_pred = log_of(pred)?;
    let log_gt = log_of(gt)?;

    let residuals: Vec<f64> = log_pred
        .values()
        .iter()
        .zip(log_gt.values())
        .map(|(a, b)| a - b)
        .collect();
    let c = berhu_switch(&residuals, &mask);

    // d(loss)/d(log D̂)
    let mut grad_log = vec![0.0; w * h];
    let mut value = 0.0;
    if c > 0.0 {
        for i in 0..w * h {
            if mask[i] {
                let (v, s) = berhu_unchecked(residuals[i], c);
                value += v;
                grad_log[i] = s * inv_n;
            }
        }
    }

    let gp = gradient_of(&log_pred)?;
    let gg = gradient_of(&log_gt)?;
    let mut upstream = Grid::filled(w, h, [0.0; 2]).with_mask(gp.mask().to_vec())?;
    for i in 0..w * h {
        if !gp.mask()[i] {
            continue;
        }
        let [px, py] = gp.values()[i];
        let [qx, qy] = gg.values()[i];
        let (dx, dy) = (px - qx, py - qy);
        value += dx * dx + dy * dy;
        upstream.values_mut()[i] = [2.0 * dx * inv_n, 2.0 * dy * inv_n];
    }
    gradient_adjoint(&upstream, &mut grad_log);

    let grad: Vec<f64> = grad_log
        .iter()
        .zip(pred.values())
        .zip(&mask)
        .map(|((g, d), &m)| if m { g / d } else { 0.0 })
        .collect();

    let mut result = LossResult::new(value * inv_n);
    result.grad_depth = Some(Grid::new(w, h, grad, pred.mask().to_vec())?);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn berhu_branches() {
        assert_eq!(berhu(0.5, 1.0).unwrap(), (0.5, 1.0));
        assert_eq!(berhu(-0.5, 1.0).unwrap(), (0.5, -1.0));
        let (v, d) = berhu(1.0, 1.0).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!((1.0f64 * 1.0 + 1.0) / 2.0, v);
        assert_eq!(d, 1.0);
        assert_eq!(berhu(2.0, 1.0).unwrap(), (2.5, 2.0));
        assert_eq!(berhu(0.0, 1.0).unwrap(), (0.0, 0.0));
        assert!(berhu(1.0, 0.0).is_err());
        assert!(berhu(1.0, -2.0).is_err());
    }

    #[test]
    fn identical_depths_give_zero() {
        let d = DepthGrid::new(Grid::from_fn(5, 4, |x, y| 1.0 + 0.1 * (x * y) as f64)).unwrap();
        let r = depth_loss(&d, &d).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad_depth.unwrap().values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_log_offset_hits_l2_branch() {
        let a: f64 = 0.05;
        let gt = DepthGrid::new(Grid::from_fn(6, 5, |x, y| 1.0 + 0.3 * x as f64 + 0.2 * y as f64))
            .unwrap();
        let pred = DepthGrid::new(gt.map(|v| v * a.exp())).unwrap();
        let r = depth_loss(&pred, &gt).unwrap();
        let c = a / 5.0;
        let expect = (a * a + c * c) / (2.0 * c);
        assert!((r.value - expect).abs() < 1e-12, "{} vs {expect}", r.value);
    }

    // Straight per-pixel re-implementation.
    fn brute(pred: &[f64], gt: &[f64], w: usize, h: usize) -> f64 {
        let r: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p.ln() - g.ln()).collect();
        let c = r.iter().map(|v| v.abs()).fold(0.0, f64::max) / 5.0;
        let mut total = 0.0;
        for v in &r {
            total += if v.abs() <= c {
                v.abs()
            } else {
                (v * v + c * c) / (2.0 * c)
            };
        }
        let d = |x: usize, y: usize| r[y * w + x];
        for y in 0..h {
            for x in 0..w {
                let gx = if x == 0 {
                    d(1, y) - d(0, y)
                } else if x == w - 1 {
                    d(x, y) - d(x - 1, y)
                } else {
                    (d(x + 1, y) - d(x - 1, y)) / 2.0
                };
                let gy = if y == 0 {
                    d(x, 1) - d(x, 0)
                } else if y == h - 1 {
                    d(x, y) - d(x, y - 1)
                } else {
                    (d(x, y + 1) - d(x, y - 1)) / 2.0
                };
                total += gx * gx + gy * gy;
            }
        }
        total / (w * h) as f64
    }

    #[test]
    fn matches_brute_force_on_random_pair() {
        let vals = [
            1.31, 2.07, 0.88, 1.52, 2.44, 1.09, 1.77, 0.93, 1.25, 2.81, 1.66, 1.02, 0.75, 1.98,
            2.29, 1.41,
        ];
        let gt_vals = [
            1.20, 2.31, 1.05, 1.49, 2.10, 1.33, 1.62, 0.99, 1.18, 2.55, 1.91, 0.97, 0.81, 2.20,
            2.05, 1.37,
        ];
        let pred = DepthGrid::from_values(4, 4, vals.to_vec()).unwrap();
        let gt = DepthGrid::from_values(4, 4, gt_vals.to_vec()).unwrap();
        let r = depth_loss(&pred, &gt).unwrap();
        let b = brute(&vals, &gt_vals, 4, 4);
        assert!((r.value - b).abs() < 1e-13, "{} vs {b}", r.value);
    }

    #[test]
    fn masked_pixels_are_ignored() {
        let gt = DepthGrid::from_values(3, 3, vec![1.0; 9]).unwrap();
        let mut vals = vec![1.0; 9];
        vals[4] = 50.0;
        let mut mask = vec![true; 9];
        mask[4] = false;
        let pred = DepthGrid::new(Grid::new(3, 3, vals, mask).unwrap()).unwrap();
        let r = depth_loss(&pred, &gt).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let gt = DepthGrid::from_samples(2, 2, vec![0.0; 4]).unwrap();
        let pred = DepthGrid::from_values(2, 2, vec![1.0; 4]).unwrap();
        assert!(matches!(depth_loss(&pred, &gt), Err(Error::EmptyDomain(_))));
    }
}
