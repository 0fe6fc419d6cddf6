use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edges::{canny, dde, edt, normalize_depth, truncated_chamfer, DistanceField, EdgeMap};
use crate::error::{Error, Result};
use crate::grid::{DepthGrid, ScalarField};
use crate::imageio::DatasetEntry;

use super::{clip_depth, crop_depth, standard_metrics, Aggregation, EvalConfig, Rect};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the reference boundaries came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSource {
    /// An annotated contour map.
    Annotation,
    /// Canny edges of the ground-truth depth, with the same thresholds.
    Depth,
    /// Aggregate over entries using both.
    Mixed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelCounts {
    /// Pixels inside the crop.
    pub total: usize,
    /// Pixels valid in both prediction and ground truth inside the crop.
    pub valid: usize,
    /// Predicted edge pixels per threshold pair.
    pub pred_edges: BTreeMap<String, usize>,
    /// Reference edge pixels per threshold pair.
    pub gt_edges: BTreeMap<String, usize>,
}

/// Metric record for one image, or an aggregate over many.
///
/// Boundary entries are keyed by [`CannyParams::key`](crate::edges::CannyParams::key)
/// and hold `None` where the score is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub id: String,
    pub images: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub rel: f64,
    pub log10: f64,
    pub rmse_lin: f64,
    pub rmse_log: f64,
    pub dbe_acc: BTreeMap<String, Option<f64>>,
    pub dbe_comp: BTreeMap<String, Option<f64>>,
    /// Fraction of predicted edge pixels whose distance was truncated.
    pub dbe_truncated: BTreeMap<String, Option<f64>>,
    /// Set when truncation dominates either direction of the chamfer, for
    /// instance when no edge was detected at all.
    pub degenerate: BTreeMap<String, bool>,
    pub dde_0: f64,
    pub dde_minus: f64,
    pub dde_plus: f64,
    pub pixels: PixelCounts,
    pub edge_source: EdgeSource,
    pub config: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Loads an entry and evaluates it.
pub fn evaluate(entry: &DatasetEntry, cfg: &EvalConfig) -> Result<EvalReport> {
    let loaded = entry.load()?;
    evaluate_grids(&entry.id, &loaded.pred, &loaded.gt, loaded.contours.as_ref(), cfg)
}

/// Evaluates entries on the current rayon pool. Results come back in entry
/// order whatever the completion order; a failing entry does not stop the
/// others.
pub fn evaluate_batch(entries: &[DatasetEntry], cfg: &EvalConfig) -> Vec<Result<EvalReport>> {
    entries.par_iter().map(|e| evaluate(e, cfg)).collect()
}

fn crop_edges(e: &EdgeMap, r: Rect) -> EdgeMap {
    EdgeMap::from_fn(r.x1 - r.x0, r.y1 - r.y0, |x, y| e.get(x + r.x0, y + r.y0))
}

fn edges_of(norm: Option<&ScalarField>, w: usize, h: usize, p: &crate::edges::CannyParams) -> Result<EdgeMap> {
    match norm {
        Some(n) => canny(n, p),
        None => Ok(EdgeMap::empty(w, h)),
    }
}

fn normalized(d: &DepthGrid) -> Result<Option<ScalarField>> {
    match normalize_depth(d) {
        Ok(n) => Ok(Some(n)),
        Err(Error::DegenerateRange(_) | Error::EmptyDomain(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Clip, crop, standard metrics, boundary scores for every configured
/// threshold pair, and the directed depth error.
///
/// The prediction is clipped; the ground truth is not. Boundary scores are
/// computed inside the crop. Without `contours`, reference boundaries are
/// Canny edges of the ground-truth depth.
pub fn evaluate_grids(
    id: &str,
    pred: &DepthGrid,
    gt: &DepthGrid,
    contours: Option<&EdgeMap>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    pred.check_shape(gt)?;
    let (w, h) = (gt.width(), gt.height());
    if let Some(c) = contours {
        if (c.width(), c.height()) != (w, h) {
            return Err(Error::Dimension(format!(
                "contours {}x{} vs depth {w}x{h}",
                c.width(),
                c.height()
            )));
        }
    }
    let rect = cfg.crop.rect(w, h)?;
    let pred = crop_depth(&clip_depth(pred, cfg.clip)?, rect)?;
    let gt = crop_depth(gt, rect)?;
    let (cw, ch) = (gt.width(), gt.height());
    let std = standard_metrics(&pred, &gt)?;
    let dd = dde(&pred, &gt, cfg.d_ref)?;

    let pred_norm = normalized(&pred)?;
    let annotated = contours.map(|c| crop_edges(c, rect));
    let annotated_field = annotated.as_ref().map(edt);
    let gt_norm = if annotated.is_none() { normalized(&gt)? } else { None };

    let mut report = EvalReport {
        schema_version: SCHEMA_VERSION,
        id: id.to_string(),
        images: 1,
        delta1: std.delta[0],
        delta2: std.delta[1],
        delta3: std.delta[2],
        rel: std.errors.rel,
        log10: std.errors.log10,
        rmse_lin: std.errors.rmse_lin,
        rmse_log: std.errors.rmse_log,
        dbe_acc: BTreeMap::new(),
        dbe_comp: BTreeMap::new(),
        dbe_truncated: BTreeMap::new(),
        degenerate: BTreeMap::new(),
        dde_0: dd.eps0,
        dde_minus: dd.eps_minus,
        dde_plus: dd.eps_plus,
        pixels: PixelCounts {
            total: cw * ch,
            valid: std.pixels,
            ..PixelCounts::default()
        },
        edge_source: if annotated.is_some() {
            EdgeSource::Annotation
        } else {
            EdgeSource::Depth
        },
        config: cfg.clone(),
        timestamp: None,
    };

    for p in &cfg.canny {
        let key = p.key();
        let pe = edges_of(pred_norm.as_ref(), cw, ch, p)?;
        let (ge, gfield): (EdgeMap, DistanceField) = match (&annotated, &annotated_field) {
            (Some(a), Some(f)) => (a.clone(), f.clone()),
            _ => {
                let e = edges_of(gt_norm.as_ref(), cw, ch, p)?;
                let f = edt(&e);
                (e, f)
            }
        };
        let acc = truncated_chamfer(&pe, &gfield, cfg.theta);
        let comp = truncated_chamfer(&ge, &edt(&pe), cfg.theta);
        let frac = acc.map(|s| s.truncated_fraction());
        report.dbe_acc.insert(key.clone(), acc.map(|s| s.value));
        report.dbe_comp.insert(key.clone(), comp.map(|s| s.value));
        report.dbe_truncated.insert(key.clone(), frac);
        let too_many = |f: f64| f > cfg.degenerate_ratio;
        let degenerate = frac.is_some_and(too_many) || comp.is_some_and(|s| too_many(s.truncated_fraction()));
        report.degenerate.insert(key.clone(), degenerate);
        report.pixels.pred_edges.insert(key.clone(), pe.count());
        report.pixels.gt_edges.insert(key, ge.count());
    }
    Ok(report)
}

fn weighted_mean(items: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0.0);
    for (v, w) in items {
        s += v * w;
        n += w;
    }
    (n > 0.0).then(|| s / n)
}

/// Combines per-image reports in the given order.
///
/// Per-image aggregation averages every value with equal weight; boundary
/// scores average over the images where they are defined. Pixel-weighted
/// aggregation weighs standard metrics and the directed depth error by valid
/// pixels (pooling squared errors for the RMSEs), accuracy by predicted edge
/// pixels and completeness by reference edge pixels.
pub fn aggregate(id: &str, reports: &[EvalReport], mode: Aggregation) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or(Error::EmptyDomain("aggregating an empty set of reports"))?;
    let per_image = mode == Aggregation::PerImage;
    let weight = |r: &EvalReport| if per_image { 1.0 } else { r.pixels.valid as f64 };
    let mean = |f: &dyn Fn(&EvalReport) -> f64| {
        weighted_mean(reports.iter().map(|r| (f(r), weight(r)))).unwrap_or(0.0)
    };
    let rms = |f: &dyn Fn(&EvalReport) -> f64| {
        if per_image {
            mean(f)
        } else {
            mean(&|r| f(r) * f(r)).sqrt()
        }
    };
    let keyed_mean = |get: &dyn Fn(&EvalReport) -> Option<f64>,
                      count: &dyn Fn(&EvalReport) -> usize| {
        weighted_mean(reports.iter().filter_map(|r| {
            get(r).map(|v| (v, if per_image { 1.0 } else { count(r) as f64 }))
        }))
    };

    let mut out = EvalReport {
        schema_version: SCHEMA_VERSION,
        id: id.to_string(),
        images: reports.iter().map(|r| r.images).sum(),
        delta1: mean(&|r| r.delta1),
        delta2: mean(&|r| r.delta2),
        delta3: mean(&|r| r.delta3),
        rel: mean(&|r| r.rel),
        log10: mean(&|r| r.log10),
        rmse_lin: rms(&|r| r.rmse_lin),
        rmse_log: rms(&|r| r.rmse_log),
        dbe_acc: BTreeMap::new(),
        dbe_comp: BTreeMap::new(),
        dbe_truncated: BTreeMap::new(),
        degenerate: BTreeMap::new(),
        dde_0: mean(&|r| r.dde_0),
        dde_minus: mean(&|r| r.dde_minus),
        dde_plus: mean(&|r| r.dde_plus),
        pixels: PixelCounts {
            total: reports.iter().map(|r| r.pixels.total).sum(),
            valid: reports.iter().map(|r| r.pixels.valid).sum(),
            ..PixelCounts::default()
        },
        edge_source: if reports.iter().all(|r| r.edge_source == first.edge_source) {
            first.edge_source
        } else {
            EdgeSource::Mixed
        },
        config: first.config.clone(),
        timestamp: None,
    };
    for key in first.dbe_acc.keys() {
        let pred_n = |r: &EvalReport| r.pixels.pred_edges.get(key).copied().unwrap_or(0);
        let gt_n = |r: &EvalReport| r.pixels.gt_edges.get(key).copied().unwrap_or(0);
        let acc = keyed_mean(&|r| r.dbe_acc.get(key).copied().flatten(), &pred_n);
        let comp = keyed_mean(&|r| r.dbe_comp.get(key).copied().flatten(), &gt_n);
        let frac = keyed_mean(&|r| r.dbe_truncated.get(key).copied().flatten(), &pred_n);
        out.dbe_acc.insert(key.clone(), acc);
        out.dbe_comp.insert(key.clone(), comp);
        out.dbe_truncated.insert(key.clone(), frac);
        out.degenerate.insert(
            key.clone(),
            reports
                .iter()
                .any(|r| r.degenerate.get(key).copied().unwrap_or(false)),
        );
        out.pixels
            .pred_edges
            .insert(key.clone(), reports.iter().map(pred_n).sum());
        out.pixels
            .gt_edges
            .insert(key.clone(), reports.iter().map(gt_n).sum());
    }
    Ok(out)
}
