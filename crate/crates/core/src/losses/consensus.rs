//! Consensus terms coupling the depth head to the contour and normal heads.

use crate::error::{Error, Result};
use crate::grid::{
    gradient_adjoint, gradient_of, laplacian_adjoint, laplacian_of, DepthGrid, Grid, ProbGrid,
    VecField3,
};

use super::{clamp_prob, ContourNorm, LossResult, NormalConvention, CONSENSUS_GRAD_EPS};

/// Depth-contours consensus.
///
/// ```text
/// L = -1/N Σ ln(Ĉ)·‖∇D̂‖²·|ΔD̂|  +  μ·( ‖Ĉ‖ - 1/N Σ ln(1-Ĉ)·exp(-|ΔD̂|) )
/// ```
///
/// The sums run over pixels where the Laplacian is defined and Ĉ is valid.
/// `‖Ĉ‖` is realized according to `norm`. The subderivative of `|ΔD̂|` at zero
/// is taken as zero.
pub fn depth_contour_consensus(
    depth: &DepthGrid,
    contours: &ProbGrid,
    mu: f64,
    norm: ContourNorm,
) -> Result<LossResult> {
    depth.check_shape(contours.grid())?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::Parameter(format!("mu must be >= 0, got {mu}")));
    }
    let (w, h) = (depth.width(), depth.height());
    let grad = gradient_of(depth)?;
    let lap = laplacian_of(depth)?;
    let domain: Vec<bool> = (0..w * h)
        .map(|i| lap.mask()[i] && grad.mask()[i] && contours.mask()[i])
        .collect();
    let n = domain.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyDomain(
            "depth-contours consensus needs an interior valid pixel",
        ));
    }
    let inv_n = 1.0 / n as f64;

    let probs: Vec<(f64, bool)> = contours.values().iter().map(|&p| clamp_prob(p)).collect();

    let (norm_value, norm_scale) = {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..w * h {
            if domain[i] {
                s1 += probs[i].0;
                s2 += probs[i].0 * probs[i].0;
            }
        }
        match norm {
            ContourNorm::Mean => (s1 * inv_n, 0.0),
            ContourNorm::RootMeanSquare => {
                let rms = (s2 * inv_n).sqrt();
                (rms, if rms > 0.0 { inv_n / rms } else { 0.0 })
            }
        }
    };

    let mut value = 0.0;
    let mut grad_c = vec![0.0; w * h];
    let mut up_grad = Grid::filled(w, h, [0.0; 2]).with_mask(domain.clone())?;
    let mut up_lap = Grid::filled(w, h, 0.0).with_mask(domain.clone())?;

    for i in 0..w * h {
        if !domain[i] {
            continue;
        }
        let (c, clamped) = probs[i];
        let [gx, gy] = grad.values()[i];
        let g2 = gx * gx + gy * gy;
        let l = lap.values()[i];
        let a = l.abs();
        let sign = if l > 0.0 {
            1.0
        } else if l < 0.0 {
            -1.0
        } else {
            0.0
        };
        let ln_c = c.ln();
        let ln_1c = (1.0 - c).ln();
        let decay = (-a).exp();

        value += -ln_c * g2 * a - mu * ln_1c * decay;

        if !clamped {
            let norm_slope = match norm {
                ContourNorm::Mean => inv_n,
                ContourNorm::RootMeanSquare => norm_scale * c,
            };
            grad_c[i] = inv_n * (-g2 * a / c + mu * decay / (1.0 - c)) + mu * norm_slope;
        }

        // ∂L/∂‖∇‖² and ∂L/∂|Δ|
        let d_g2 = -inv_n * ln_c * a;
        let d_abs = inv_n * (-ln_c * g2 + mu * ln_1c * decay);
        up_grad.values_mut()[i] = [2.0 * gx * d_g2, 2.0 * gy * d_g2];
        up_lap.values_mut()[i] = sign * d_abs;
    }
    value = value * inv_n + mu * norm_value;

    let mut grad_d = vec![0.0; w * h];
    gradient_adjoint(&up_grad, &mut grad_d);
    laplacian_adjoint(&up_lap, &mut grad_d);

    let mut result = LossResult::new(value);
    result.grad_depth = Some(Grid::new(w, h, grad_d, depth.mask().to_vec())?);
    result.grad_contours = Some(Grid::new(w, h, grad_c, contours.mask().to_vec())?);
    Ok(result)
}

/// Depth-normals consensus under the orthographic assumption.
///
/// Mean of `1 - cos(û, s·n̂)` where `û` is the finite-difference depth gradient,
/// `n̂` the image-plane part of the predicted normal and `s` the sign of the
/// orientation convention. Pixels where either 2-vector is shorter than
/// [`CONSENSUS_GRAD_EPS`] are skipped; if none remain the loss is zero.
pub fn depth_normal_consensus(
    depth: &DepthGrid,
    normals: &VecField3,
    convention: NormalConvention,
) -> Result<LossResult> {
    depth.check_shape(normals)?;
    let (w, h) = (depth.width(), depth.height());
    let grad = gradient_of(depth)?;
    let s = convention.sign();
    let contributing: Vec<bool> = (0..w * h)
        .map(|i| {
            if !(grad.mask()[i] && normals.mask()[i]) {
                return false;
            }
            let [ux, uy] = grad.values()[i];
            let [nx, ny, _] = normals.values()[i];
            ux.hypot(uy) >= CONSENSUS_GRAD_EPS && nx.hypot(ny) >= CONSENSUS_GRAD_EPS
        })
        .collect();
    let m = contributing.iter().filter(|&&c| c).count();

    let mut grad_d = vec![0.0; w * h];
    let mut grad_n = vec![[0.0; 3]; w * h];
    let mut value = 0.0;
    if m > 0 {
        let inv_m = 1.0 / m as f64;
        let mut upstream = Grid::filled(w, h, [0.0; 2]).with_mask(contributing.clone())?;
        for i in 0..w * h {
            if !contributing[i] {
                continue;
            }
            let [ux, uy] = grad.values()[i];
            let [nx, ny, _] = normals.values()[i];
            let (nx, ny) = (s * nx, s * ny);
            let lu = ux.hypot(uy);
            let ln = nx.hypot(ny);
            let cos = (ux * nx + uy * ny) / (lu * ln);
            value += 1.0 - cos;
            let k = lu * ln;
            upstream.values_mut()[i] = [
                -inv_m * (nx / k - cos * ux / (lu * lu)),
                -inv_m * (ny / k - cos * uy / (lu * lu)),
            ];
            grad_n[i] = [
                -inv_m * s * (ux / k - cos * nx / (ln * ln)),
                -inv_m * s * (uy / k - cos * ny / (ln * ln)),
                0.0,
            ];
        }
        value *= inv_m;
        gradient_adjoint(&upstream, &mut grad_d);
    }

    let mut result = LossResult::new(value);
    result.grad_depth = Some(Grid::new(w, h, grad_d, depth.mask().to_vec())?);
    result.grad_normals = Some(Grid::new(w, h, grad_n, normals.mask().to_vec())?);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::PROB_EPS;

    #[test]
    fn flat_depth_without_contours_is_near_zero() {
        let d = DepthGrid::filled(6, 6, 2.0).unwrap();
        let c = ProbGrid::from_values(6, 6, vec![PROB_EPS; 36]).unwrap();
        let r = depth_contour_consensus(&d, &c, 1.0, ContourNorm::Mean).unwrap();
        assert!(r.value.abs() < 1e-5, "{}", r.value);
    }

    #[test]
    fn flat_depth_at_half_probability() {
        let d = DepthGrid::filled(6, 6, 2.0).unwrap();
        let c = ProbGrid::from_values(6, 6, vec![0.5; 36]).unwrap();
        let r = depth_contour_consensus(&d, &c, 1.0, ContourNorm::Mean).unwrap();
        let expect = 0.5 - 0.5f64.ln();
        assert!((r.value - expect).abs() < 1e-14);
        assert!((r.value - 1.193).abs() < 1e-3);
    }

    // Per-pixel evaluation written directly from the formula.
    fn brute_dc(d: &[f64], c: &[f64], w: usize, h: usize, mu: f64) -> f64 {
        let v = |x: usize, y: usize| d[y * w + x];
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        let mut cs = 0.0;
        let mut n = 0.0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = (v(x + 1, y) - v(x - 1, y)) / 2.0;
                let gy = (v(x, y + 1) - v(x, y - 1)) / 2.0;
                let lap = v(x + 1, y) + v(x - 1, y) + v(x, y + 1) + v(x, y - 1) - 4.0 * v(x, y);
                let p = c[y * w + x].clamp(PROB_EPS, 1.0 - PROB_EPS);
                t1 += -p.ln() * (gx * gx + gy * gy) * lap.abs();
                t2 += (1.0 - p).ln() * (-lap.abs()).exp();
                cs += p;
                n += 1.0;
            }
        }
        t1 / n + mu * (cs / n - t2 / n)
    }

    #[test]
    fn step_edge_matches_brute_force() {
        let (w, h) = (8, 8);
        let d: Vec<f64> = (0..64)
            .map(|i| if i % 8 < 4 { 1.0 } else { 2.5 } + 0.01 * (i / 8) as f64)
            .collect();
        let mut s = 99u64;
        let c: Vec<f64> = (0..64)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(7);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let dg = DepthGrid::from_values(w, h, d.clone()).unwrap();
        let cg = ProbGrid::from_values(w, h, c.clone()).unwrap();
        for mu in [0.0, 1.0, 2.5] {
            let r = depth_contour_consensus(&dg, &cg, mu, ContourNorm::Mean).unwrap();
            let b = brute_dc(&d, &c, w, h, mu);
            assert!((r.value - b).abs() < 1e-12, "mu={mu}: {} vs {b}", r.value);
        }
    }

    #[test]
    fn rms_norm_variant() {
        let d = DepthGrid::filled(5, 5, 1.0).unwrap();
        let c = ProbGrid::from_values(5, 5, vec![0.3; 25]).unwrap();
        let mean = depth_contour_consensus(&d, &c, 1.0, ContourNorm::Mean).unwrap();
        let rms = depth_contour_consensus(&d, &c, 1.0, ContourNorm::RootMeanSquare).unwrap();
        // Constant Ĉ: mean and RMS coincide.
        assert!((mean.value - rms.value).abs() < 1e-12);
    }

    #[test]
    fn ramp_with_matching_normals_is_zero() {
        let (a, b) = (0.2, -0.05);
        let d = DepthGrid::new(Grid::from_fn(7, 6, |x, y| 3.0 + a * x as f64 + b * y as f64))
            .unwrap();
        let l = (1.0 + a * a + b * b).sqrt();
        let n = Grid::filled(7, 6, [a / l, b / l, -1.0 / l]);
        let r = depth_normal_consensus(&d, &n, NormalConvention::CameraFacing).unwrap();
        assert!(r.value.abs() < 1e-12);
        let flipped = n.map(|v| [-v[0], -v[1], -v[2]]);
        let r = depth_normal_consensus(&d, &flipped, NormalConvention::Outward).unwrap();
        assert!(r.value.abs() < 1e-12);
        let r = depth_normal_consensus(&d, &flipped, NormalConvention::CameraFacing).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_normals_give_one() {
        let d = DepthGrid::new(Grid::from_fn(5, 5, |x, _| 1.0 + 0.1 * x as f64)).unwrap();
        let n = Grid::filled(5, 5, [0.0, 0.6, -0.8]);
        let r = depth_normal_consensus(&d, &n, NormalConvention::CameraFacing).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fronto_parallel_depth_has_empty_support() {
        let d = DepthGrid::filled(5, 5, 2.0).unwrap();
        let n = Grid::filled(5, 5, [0.3, 0.1, -0.9]);
        let r = depth_normal_consensus(&d, &n, NormalConvention::CameraFacing).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad_depth.unwrap().values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn normal_scale_invariance() {
        let d = DepthGrid::new(Grid::from_fn(6, 6, |x, y| {
            1.0 + 0.1 * x as f64 + 0.03 * (x * y) as f64
        }))
        .unwrap();
        let n = Grid::from_fn(6, 6, |x, y| [0.1 * x as f64 - 0.2, 0.3 - 0.05 * y as f64, -1.0]);
        let scaled = Grid::from_fn(6, 6, |x, y| {
            let k = 0.5 + (x + 2 * y) as f64;
            let v = n.get(x, y);
            [v[0] * k, v[1] * k, v[2] * k]
        });
        let a = depth_normal_consensus(&d, &n, NormalConvention::CameraFacing).unwrap();
        let b = depth_normal_consensus(&d, &scaled, NormalConvention::CameraFacing).unwrap();
        assert!((a.value - b.value).abs() < 1e-14);
    }
}
