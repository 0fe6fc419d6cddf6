//! Central finite-difference verification of the analytic loss gradients.
//!
//! Each input pixel (and each normal component) is perturbed by `±step`; the
//! resulting symmetric difference quotient of the forward value is compared to
//! the analytic gradient. Perturbations that could cross a non-smooth locus
//! are skipped: the BerHu switch and the pixel that sets `c`, sign changes of
//! the Laplacian, the consensus inclusion threshold, and the probability clamp.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_of, laplacian_of, DepthGrid, Grid, NormalGrid, ProbGrid};

use super::depth::berhu_switch;
use super::{
    contour_loss, depth_contour_consensus, depth_loss, depth_normal_consensus, normals_loss,
    total_loss, LossConfig, Predictions, Targets, CONSENSUS_GRAD_EPS, PROB_EPS,
};

/// Denominator floor of the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossTerm {
    Depth,
    Contour,
    Normals,
    DepthContour,
    DepthNormal,
    Total,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::Depth,
        LossTerm::Contour,
        LossTerm::Normals,
        LossTerm::DepthContour,
        LossTerm::DepthNormal,
        LossTerm::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Depth => "depth",
            LossTerm::Contour => "contour",
            LossTerm::Normals => "normals",
            LossTerm::DepthContour => "depth-contour",
            LossTerm::DepthNormal => "depth-normal",
            LossTerm::Total => "total",
        }
    }

    fn reads(self) -> (bool, bool, bool) {
        match self {
            LossTerm::Depth => (true, false, false),
            LossTerm::Contour => (false, true, false),
            LossTerm::Normals => (false, false, true),
            LossTerm::DepthContour => (true, true, false),
            LossTerm::DepthNormal => (true, false, true),
            LossTerm::Total => (true, true, true),
        }
    }
}

impl fmt::Display for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossTerm::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown loss term '{s}'")))
    }
}

/// Which prediction a checked coordinate belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradInput {
    Depth,
    Contours,
    Normal(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSite {
    pub input: GradInput,
    pub x: usize,
    pub y: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub term: LossTerm,
    pub max_rel_error: f64,
    pub checked: usize,
    pub excluded: usize,
    pub worst: Option<GradSite>,
}

struct Eval {
    value: f64,
    depth: Option<Vec<f64>>,
    contours: Option<Vec<f64>>,
    normals: Option<Vec<[f64; 3]>>,
}

fn evaluate(term: LossTerm, p: &Predictions, t: &Targets, cfg: &LossConfig) -> Result<Eval> {
    let r = match term {
        LossTerm::Depth => depth_loss(&p.depth, &t.depth)?,
        LossTerm::Contour => contour_loss(&p.contours, &t.contours, &cfg.attention, cfg.alpha_mode)?,
        LossTerm::Normals => normals_loss(&p.normals, &t.normals)?,
        LossTerm::DepthContour => {
            depth_contour_consensus(&p.depth, &p.contours, cfg.weights.mu, cfg.contour_norm)?
        }
        LossTerm::DepthNormal => depth_normal_consensus(&p.depth, &p.normals, cfg.convention)?,
        LossTerm::Total => {
            let tl = total_loss(p, t, cfg)?;
            return Ok(Eval {
                value: tl.value,
                depth: Some(tl.grad_depth.values().to_vec()),
                contours: Some(tl.grad_contours.values().to_vec()),
                normals: Some(tl.grad_normals.values().to_vec()),
            });
        }
    };
    Ok(Eval {
        value: r.value,
        depth: r.grad_depth.map(|g| g.values().to_vec()),
        contours: r.grad_contours.map(|g| g.values().to_vec()),
        normals: r.grad_normals.map(|g| g.values().to_vec()),
    })
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
}

/// Pixels of the depth prediction whose perturbation may cross a branch of
/// `term`.
fn depth_exclusions(
    term: LossTerm,
    p: &Predictions,
    t: &Targets,
    step: f64,
) -> Result<Vec<bool>> {
    let (w, h) = (p.depth.width(), p.depth.height());
    let n = w * h;
    let margin = 10.0 * step;
    let mut out = vec![false; n];
    let neighborhood = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut v = vec![i];
        if x > 0 {
            v.push(i - 1);
        }
        if x + 1 < w {
            v.push(i + 1);
        }
        if y > 0 {
            v.push(i - w);
        }
        if y + 1 < h {
            v.push(i + w);
        }
        v
    };

    if matches!(term, LossTerm::Depth | LossTerm::Total) {
        let mask: Vec<bool> = (0..n).map(|i| p.depth.mask()[i] && t.depth.mask()[i]).collect();
        let r: Vec<f64> = (0..n)
            .map(|i| {
                if mask[i] {
                    p.depth.values()[i].ln() - t.depth.values()[i].ln()
                } else {
                    0.0
                }
            })
            .collect();
        let c = berhu_switch(&r, &mask);
        let cmax = 5.0 * c;
        for i in 0..n {
            let a = r[i].abs();
            let scale = margin / p.depth.values()[i];
            if mask[i] && (cmax - a < scale || (a - c).abs() < scale) {
                out[i] = true;
            }
        }
    }
    if matches!(term, LossTerm::DepthContour | LossTerm::Total) {
        let lap = laplacian_of(&p.depth)?;
        for (i, o) in out.iter_mut().enumerate() {
            if neighborhood(i)
                .into_iter()
                .any(|j| lap.mask()[j] && lap.values()[j].abs() < 100.0 * step)
            {
                *o = true;
            }
        }
    }
    if matches!(term, LossTerm::DepthNormal | LossTerm::Total) {
        let g = gradient_of(&p.depth)?;
        for (i, o) in out.iter_mut().enumerate() {
            // One-sided border stencils reach one pixel further inward.
            let mut reach = neighborhood(i);
            let (x, y) = (i % w, i / w);
            if x == 1 {
                reach.push(i - 1);
            }
            if x + 2 == w {
                reach.push(i + 1);
            }
            if y == 1 {
                reach.push(i - w);
            }
            if y + 2 == h {
                reach.push(i + w);
            }
            if reach.into_iter().any(|j| {
                let [ux, uy] = g.values()[j];
                g.mask()[j] && (ux.hypot(uy) - CONSENSUS_GRAD_EPS).abs() < 100.0 * step
            }) {
                *o = true;
            }
        }
    }
    Ok(out)
}

/// Compares analytic gradients of `term` to central differences at the given
/// inputs.
pub fn check_gradients(
    term: LossTerm,
    pred: &Predictions,
    gt: &Targets,
    cfg: &LossConfig,
    step: f64,
) -> Result<GradcheckReport> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::Parameter(format!(
            "finite-difference step must lie in (0, 1e-2], got {step}"
        )));
    }
    let base = evaluate(term, pred, gt, cfg)?;
    let (reads_d, reads_c, reads_n) = term.reads();
    let w = pred.depth.width();
    let n = pred.depth.len();
    let mut report = GradcheckReport {
        term,
        max_rel_error: 0.0,
        checked: 0,
        excluded: 0,
        worst: None,
    };
    let record = |report: &mut GradcheckReport, input, i: usize, analytic: f64, numeric: f64| {
        let e = rel_error(analytic, numeric);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = Some(GradSite {
                input,
                x: i % w,
                y: i / w,
                analytic,
                numeric,
            });
        }
    };
    let fd = |lo: f64, hi: f64| (hi - lo) / (2.0 * step);

    if reads_d {
        let skip = depth_exclusions(term, pred, gt, step)?;
        let analytic = base.depth.as_ref().expect("depth gradient");
        let mut p = pred.clone();
        for i in 0..n {
            if !pred.depth.mask()[i] {
                continue;
            }
            if skip[i] {
                report.excluded += 1;
                continue;
            }
            let v0 = pred.depth.values()[i];
            let mut values = pred.depth.values().to_vec();
            values[i] = v0 + step;
            p.depth = DepthGrid::new(pred.depth.grid().clone_with(values.clone()))?;
            let hi = evaluate(term, &p, gt, cfg)?.value;
            values[i] = v0 - step;
            p.depth = DepthGrid::new(pred.depth.grid().clone_with(values))?;
            let lo = evaluate(term, &p, gt, cfg)?.value;
            record(&mut report, GradInput::Depth, i, analytic[i], fd(lo, hi));
        }
    }
    if reads_c {
        let analytic = base.contours.as_ref().expect("contour gradient");
        let mut p = pred.clone();
        for i in 0..n {
            if !pred.contours.mask()[i] {
                continue;
            }
            let v0 = pred.contours.values()[i];
            if v0 - step <= PROB_EPS + step || v0 + step >= 1.0 - PROB_EPS - step {
                report.excluded += 1;
                continue;
            }
            let mut values = pred.contours.values().to_vec();
            values[i] = v0 + step;
            p.contours = ProbGrid::new(pred.contours.grid().clone_with(values.clone()))?;
            let hi = evaluate(term, &p, gt, cfg)?.value;
            values[i] = v0 - step;
            p.contours = ProbGrid::new(pred.contours.grid().clone_with(values))?;
            let lo = evaluate(term, &p, gt, cfg)?.value;
            record(&mut report, GradInput::Contours, i, analytic[i], fd(lo, hi));
        }
    }
    if reads_n {
        let analytic = base.normals.as_ref().expect("normal gradient");
        let consensus = matches!(term, LossTerm::DepthNormal | LossTerm::Total);
        let mut p = pred.clone();
        for i in 0..n {
            if !pred.normals.mask()[i] {
                continue;
            }
            let v0 = pred.normals.values()[i];
            if consensus && (v0[0].hypot(v0[1]) - CONSENSUS_GRAD_EPS).abs() < 100.0 * step {
                report.excluded += 3;
                continue;
            }
            for k in 0..3 {
                let mut values = pred.normals.values().to_vec();
                values[i][k] = v0[k] + step;
                p.normals = pred.normals.clone_with(values.clone());
                let hi = evaluate(term, &p, gt, cfg)?.value;
                values[i][k] = v0[k] - step;
                p.normals = pred.normals.clone_with(values);
                let lo = evaluate(term, &p, gt, cfg)?.value;
                record(&mut report, GradInput::Normal(k), i, analytic[i][k], fd(lo, hi));
            }
        }
    }
    Ok(report)
}

/// Seeded random predictions and targets on a `size x size` canvas.
pub fn random_inputs(seed: u64, size: usize) -> Result<(Predictions, Targets)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size * size;
    let mut u = || rng.random::<f64>();
    let gt_depth: Vec<f64> = (0..n).map(|_| 1.0 + 2.0 * u()).collect();
    let pred_depth: Vec<f64> = gt_depth.iter().map(|g| g * (0.6 * (u() - 0.5)).exp()).collect();
    let labels: Vec<bool> = (0..n).map(|_| u() < 0.3).collect();
    let pred_c: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * u()).collect();
    let gt_n: Vec<[f64; 3]> = (0..n).map(|_| [u() - 0.5, u() - 0.5, -1.0]).collect();
    let pred_n: Vec<[f64; 3]> = (0..n)
        .map(|_| [2.0 * u() - 1.0, 2.0 * u() - 1.0, -0.5 - u()])
        .collect();
    Ok((
        Predictions {
            depth: DepthGrid::from_values(size, size, pred_depth)?,
            contours: ProbGrid::from_values(size, size, pred_c)?,
            normals: Grid::from_values(size, size, pred_n)?,
        },
        Targets {
            depth: DepthGrid::from_values(size, size, gt_depth)?,
            contours: ProbGrid::from_labels(size, size, &labels)?,
            normals: NormalGrid::normalized(Grid::from_values(size, size, gt_n)?),
        },
    ))
}

/// Gradient check of `term` on seeded random `size x size` inputs with the
/// default loss configuration.
pub fn gradcheck(term: LossTerm, seed: u64, size: usize, step: f64) -> Result<GradcheckReport> {
    if size < 4 {
        return Err(Error::Parameter(format!(
            "gradient check needs at least 4x4, got {size}"
        )));
    }
    let (p, t) = random_inputs(seed, size)?;
    check_gradients(term, &p, &t, &LossConfig::default(), step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_gradient_is_tight() {
        let r = gradcheck(LossTerm::Normals, 1, 6, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert_eq!(r.checked, 6 * 6 * 3);
    }

    #[test]
    fn depth_contour_gradient() {
        let r = gradcheck(LossTerm::DepthContour, 2, 8, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.checked > 64);
    }

    #[test]
    fn depth_gradient_skips_the_switch_pixel() {
        let r = gradcheck(LossTerm::Depth, 3, 8, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert!(r.excluded >= 1);
    }

    #[test]
    fn every_term_passes() {
        for term in LossTerm::ALL {
            for seed in 0..3 {
                let r = gradcheck(term, seed, 8, 1e-6).unwrap();
                assert!(r.max_rel_error < 1e-4, "{term} seed {seed}: {r:?}");
            }
        }
    }

    #[test]
    fn term_names_round_trip() {
        for t in LossTerm::ALL {
            assert_eq!(t.name().parse::<LossTerm>().unwrap(), t);
        }
        assert!("bogus".parse::<LossTerm>().is_err());
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        assert!(gradcheck(LossTerm::Depth, 0, 8, 0.0).is_err());
        assert!(gradcheck(LossTerm::Depth, 0, 8, 0.5).is_err());
        assert!(gradcheck(LossTerm::Depth, 0, 3, 1e-6).is_err());
    }
}
