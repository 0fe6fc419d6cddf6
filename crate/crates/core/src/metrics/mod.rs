//! Standard monocular-depth metrics with crop and clip conventions, and the
//! per-image evaluation pipeline that also scores depth boundaries.

mod eval;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::edges::{default_presets, CannyParams, DEFAULT_DDE_REFERENCE, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::grid::{shared_mask, DepthGrid};

pub use eval::{
    aggregate, evaluate, evaluate_batch, evaluate_grids, EdgeSource, EvalReport, PixelCounts, SCHEMA_VERSION,
};

/// Depth range predictions are clamped into before scoring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    pub min: f64,
    pub max: f64,
}

impl Default for ClipRange {
    fn default() -> Self {
        ClipRange { min: 0.7, max: 10.0 }
    }
}

impl ClipRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let r = ClipRange { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.min && self.min < self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "clip range needs 0 < min < max, got [{}, {}]",
                self.min, self.max
            )))
        }
    }
}

impl FromStr for ClipRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("clip range {s:?} is not \"min,max\""));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let min = a.trim().parse().map_err(|_| bad())?;
        let max = b.trim().parse().map_err(|_| bad())?;
        ClipRange::new(min, max)
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Reference frame and rectangle of the conventional NYUv2 center crop.
pub const EIGEN_FRAME: (usize, usize) = (640, 480);
pub const EIGEN_RECT: Rect = Rect {
    x0: 41,
    y0: 45,
    x1: 601,
    y1: 471,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crop {
    #[default]
    None,
    /// [`EIGEN_RECT`] scaled proportionally to the image size.
    Eigen,
    Rect(Rect),
}

impl Crop {
    /// Rectangle this crop selects on a `width x height` image.
    pub fn rect(&self, width: usize, height: usize) -> Result<Rect> {
        let r = match *self {
            Crop::None => Rect {
                x0: 0,
                y0: 0,
                x1: width,
                y1: height,
            },
            Crop::Eigen => {
                let (fw, fh) = EIGEN_FRAME;
                let sx = |v: usize| (2 * v * width + fw) / (2 * fw);
                let sy = |v: usize| (2 * v * height + fh) / (2 * fh);
                Rect {
                    x0: sx(EIGEN_RECT.x0),
                    y0: sy(EIGEN_RECT.y0),
                    x1: sx(EIGEN_RECT.x1),
                    y1: sy(EIGEN_RECT.y1),
                }
            }
            Crop::Rect(r) => r,
        };
        if r.x0 < r.x1 && r.y0 < r.y1 && r.x1 <= width && r.y1 <= height {
            Ok(r)
        } else {
            Err(Error::OutOfBounds {
                x0: r.x0,
                y0: r.y0,
                x1: r.x1,
                y1: r.y1,
                width,
                height,
            })
        }
    }
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crop::None => f.write_str("none"),
            Crop::Eigen => f.write_str("eigen"),
            Crop::Rect(r) => write!(f, "{},{},{},{}", r.x0, r.y0, r.x1, r.y1),
        }
    }
}

impl FromStr for Crop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => return Ok(Crop::None),
            "eigen" => return Ok(Crop::Eigen),
            _ => {}
        }
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parameter(format!("crop {s:?} is not none, eigen or x0,y0,x1,y1")))?;
        match parts[..] {
            [x0, y0, x1, y1] if x0 < x1 && y0 < y1 => Ok(Crop::Rect(Rect { x0, y0, x1, y1 })),
            _ => Err(Error::Parameter(format!(
                "crop {s:?} needs four corners with x0 < x1 and y0 < y1"
            ))),
        }
    }
}

/// How per-image values are combined over a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Unweighted mean of per-image values.
    #[default]
    PerImage,
    /// Every valid pixel (or edge pixel, for boundary scores) weighs the same.
    PixelWeighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub crop: Crop,
    pub clip: ClipRange,
    /// Canny threshold pairs, in report column order.
    pub canny: Vec<CannyParams>,
    pub theta: f64,
    pub d_ref: f64,
    /// Accuracy scores whose truncated fraction exceeds this are flagged.
    pub degenerate_ratio: f64,
    pub aggregation: Aggregation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            crop: Crop::None,
            clip: ClipRange::default(),
            canny: default_presets(),
            theta: DEFAULT_THETA,
            d_ref: DEFAULT_DDE_REFERENCE,
            degenerate_ratio: 0.5,
            aggregation: Aggregation::PerImage,
        }
    }
}

impl EvalConfig {
    /// The benchmark protocol: center crop, default clip and presets.
    pub fn benchmark() -> Self {
        EvalConfig {
            crop: Crop::Eigen,
            ..EvalConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.clip.validate()?;
        for c in &self.canny {
            c.validate()?;
        }
        if !(self.theta > 0.0) {
            return Err(Error::Parameter(format!(
                "truncation radius must be positive, got {}",
                self.theta
            )));
        }
        if !(self.d_ref > 0.0 && self.d_ref.is_finite()) {
            return Err(Error::Parameter(format!(
                "reference distance must be positive, got {}",
                self.d_ref
            )));
        }
        if !(0.0..=1.0).contains(&self.degenerate_ratio) {
            return Err(Error::Parameter(format!(
                "degeneracy ratio must lie in [0, 1], got {}",
                self.degenerate_ratio
            )));
        }
        Ok(())
    }
}

/// Clamps valid depths into `range`; the mask is unchanged.
pub fn clip_depth(d: &DepthGrid, range: ClipRange) -> Result<DepthGrid> {
    range.validate()?;
    DepthGrid::new(d.map(|v| v.clamp(range.min, range.max)))
}

pub fn crop_depth(d: &DepthGrid, r: Rect) -> Result<DepthGrid> {
    DepthGrid::new(d.crop(r.x0, r.y0, r.x1, r.y1)?)
}

fn paired(pred: &DepthGrid, gt: &DepthGrid) -> Result<Vec<(f64, f64)>> {
    pred.check_shape(gt)?;
    let mask = shared_mask(pred.mask(), gt.mask());
    let pairs: Vec<(f64, f64)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (pred.values()[i], gt.values()[i]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDomain("depth metrics need a shared valid pixel"));
    }
    Ok(pairs)
}

fn delta_hits(pairs: &[(f64, f64)], i: i32) -> usize {
    let t = 1.25f64.powi(i);
    pairs.iter().filter(|(p, g)| (p / g).max(g / p) < t).count()
}

/// Fraction of shared valid pixels with `max(p/g, g/p) < 1.25^i`.
pub fn threshold_accuracy(pred: &DepthGrid, gt: &DepthGrid, i: u32) -> Result<f64> {
    if !(1..=3).contains(&i) {
        return Err(Error::Parameter(format!("threshold index must be 1, 2 or 3, got {i}")));
    }
    let pairs = paired(pred, gt)?;
    Ok(delta_hits(&pairs, i as i32) as f64 / pairs.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rel: f64,
    pub log10: f64,
    pub rmse_lin: f64,
    pub rmse_log: f64,
}

pub fn error_metrics(pred: &DepthGrid, gt: &DepthGrid) -> Result<ErrorMetrics> {
    let pairs = paired(pred, gt)?;
    Ok(errors_of(&pairs))
}

fn errors_of(pairs: &[(f64, f64)]) -> ErrorMetrics {
    let n = pairs.len() as f64;
    let (mut rel, mut log10, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    for &(p, g) in pairs {
        rel += (p - g).abs() / g;
        log10 += (p.log10() - g.log10()).abs();
        sq += (p - g) * (p - g);
        let l = p.ln() - g.ln();
        sq_log += l * l;
    }
    ErrorMetrics {
        rel: rel / n,
        log10: log10 / n,
        rmse_lin: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
    }
}

/// All seven standard metrics over the shared valid pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardMetrics {
    pub delta: [f64; 3],
    pub errors: ErrorMetrics,
    pub pixels: usize,
}

pub fn standard_metrics(pred: &DepthGrid, gt: &DepthGrid) -> Result<StandardMetrics> {
    let pairs = paired(pred, gt)?;
    let n = pairs.len() as f64;
    Ok(StandardMetrics {
        delta: [1, 2, 3].map(|i| delta_hits(&pairs, i) as f64 / n),
        errors: errors_of(&pairs),
        pixels: pairs.len(),
    })
}
