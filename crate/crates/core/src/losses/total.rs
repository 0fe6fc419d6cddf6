use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{DepthGrid, Grid, NormalGrid, ProbGrid, ScalarField, VecField3};

use super::{
    contour_loss, depth_contour_consensus, depth_loss, depth_normal_consensus, normals_loss,
    LossConfig,
};

/// Outputs of the three prediction heads.
#[derive(Clone, Debug)]
pub struct Predictions {
    pub depth: DepthGrid,
    pub contours: ProbGrid,
    pub normals: VecField3,
}

/// Ground truth for the supervised terms.
#[derive(Clone, Debug)]
pub struct Targets {
    pub depth: DepthGrid,
    pub contours: ProbGrid,
    pub normals: NormalGrid,
}

/// Unweighted value of every term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub depth: f64,
    pub contour: f64,
    pub normals: f64,
    pub depth_contour: f64,
    pub depth_normal: f64,
}

#[derive(Clone, Debug)]
pub struct TotalLoss {
    pub value: f64,
    pub terms: LossBreakdown,
    pub grad_depth: ScalarField,
    pub grad_contours: ScalarField,
    pub grad_normals: Grid<[f64; 3]>,
}

fn axpy(out: &mut [f64], k: f64, g: Option<&ScalarField>) {
    if let Some(g) = g {
        for (o, v) in out.iter_mut().zip(g.values()) {
            *o += k * v;
        }
    }
}

fn axpy3(out: &mut [[f64; 3]], k: f64, g: Option<&Grid<[f64; 3]>>) {
    if let Some(g) = g {
        for (o, v) in out.iter_mut().zip(g.values()) {
            for c in 0..3 {
                o[c] += k * v[c];
            }
        }
    }
}

/// `λ_d L_d + λ_c L_c + λ_n L_n + L_dc + L_dn` with per-term breakdown.
pub fn total_loss(pred: &Predictions, gt: &Targets, cfg: &LossConfig) -> Result<TotalLoss> {
    let wts = &cfg.weights;
    wts.validate()?;
    let ld = depth_loss(&pred.depth, &gt.depth)?;
    let lc = contour_loss(&pred.contours, &gt.contours, &cfg.attention, cfg.alpha_mode)?;
    let ln = normals_loss(&pred.normals, &gt.normals)?;
    let ldc = depth_contour_consensus(&pred.depth, &pred.contours, wts.mu, cfg.contour_norm)?;
    let ldn = depth_normal_consensus(&pred.depth, &pred.normals, cfg.convention)?;

    let terms = LossBreakdown {
        depth: ld.value,
        contour: lc.value,
        normals: ln.value,
        depth_contour: ldc.value,
        depth_normal: ldn.value,
    };
    let value = wts.lambda_d * terms.depth
        + wts.lambda_c * terms.contour
        + wts.lambda_n * terms.normals
        + terms.depth_contour
        + terms.depth_normal;

    let (w, h) = (pred.depth.width(), pred.depth.height());
    let mut gd = vec![0.0; w * h];
    axpy(&mut gd, wts.lambda_d, ld.grad_depth.as_ref());
    axpy(&mut gd, 1.0, ldc.grad_depth.as_ref());
    axpy(&mut gd, 1.0, ldn.grad_depth.as_ref());
    let mut gc = vec![0.0; w * h];
    axpy(&mut gc, wts.lambda_c, lc.grad_contours.as_ref());
    axpy(&mut gc, 1.0, ldc.grad_contours.as_ref());
    let mut gn = vec![[0.0; 3]; w * h];
    axpy3(&mut gn, wts.lambda_n, ln.grad_normals.as_ref());
    axpy3(&mut gn, 1.0, ldn.grad_normals.as_ref());

    Ok(TotalLoss {
        value,
        terms,
        grad_depth: Grid::new(w, h, gd, pred.depth.mask().to_vec())?,
        grad_contours: Grid::new(w, h, gc, pred.contours.mask().to_vec())?,
        grad_normals: Grid::new(w, h, gn, pred.normals.mask().to_vec())?,
    })
}
