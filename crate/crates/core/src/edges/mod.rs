//! Edge extraction from depth maps and contour-localization metrics.
//!
//! The depth-boundary metrics compare a binary edge map detected on a
//! predicted depth map against annotated occluding contours through a
//! truncated chamfer distance computed on an exact Euclidean distance field.

mod canny;
mod dbe;
mod dde;
mod edt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DepthGrid, Grid, ScalarField};

pub use canny::canny;
pub use dbe::{dbe_accuracy, dbe_completeness, truncated_chamfer, ChamferScore};
pub use dde::{dde, DdeScores, DEFAULT_DDE_REFERENCE};
pub use edt::{edt, squared_edt};

/// Canny hysteresis thresholds, as fractions of the image's maximum gradient
/// magnitude, and the Gaussian pre-smoothing width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma_low: f64,
    pub sigma_high: f64,
    #[serde(default = "default_gauss_sigma")]
    pub gauss_sigma: f64,
}

fn default_gauss_sigma() -> f64 {
    1.0
}

impl CannyParams {
    pub fn new(sigma_low: f64, sigma_high: f64) -> Self {
        CannyParams {
            sigma_low,
            sigma_high,
            gauss_sigma: default_gauss_sigma(),
        }
    }

    pub fn with_gauss_sigma(self, gauss_sigma: f64) -> Self {
        CannyParams {
            gauss_sigma,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_low >= 0.0
            && self.sigma_low < self.sigma_high
            && self.sigma_high <= 1.0
            && self.gauss_sigma >= 0.0
            && self.gauss_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "canny needs 0 <= low < high <= 1 and gauss_sigma >= 0, got {{{}, {}}} / {}",
                self.sigma_low, self.sigma_high, self.gauss_sigma
            )))
        }
    }

    /// `"low,high"` key used in reports.
    pub fn key(&self) -> String {
        format!("{},{}", self.sigma_low, self.sigma_high)
    }
}

/// The four benchmark threshold pairs, in report column order.
pub const PRESETS: [(&str, f64, f64); 4] = [
    ("coarse", 0.1, 0.2),
    ("medium", 0.01, 0.1),
    ("fine", 0.005, 0.06),
    ("narrow", 0.03, 0.05),
];

/// Looks up a named preset.
pub fn preset(name: &str) -> Option<CannyParams> {
    PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|&(_, lo, hi)| CannyParams::new(lo, hi))
}

/// All four presets with the default smoothing.
pub fn default_presets() -> Vec<CannyParams> {
    PRESETS
        .iter()
        .map(|&(_, lo, hi)| CannyParams::new(lo, hi))
        .collect()
}

/// Default truncation radius in pixels.
pub const DEFAULT_THETA: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbeParams {
    pub theta: f64,
    pub canny: CannyParams,
}

impl DbeParams {
    pub fn new(canny: CannyParams) -> Self {
        DbeParams {
            theta: DEFAULT_THETA,
            canny,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::Parameter(format!(
                "truncation radius must be positive, got {}",
                self.theta
            )));
        }
        self.canny.validate()
    }
}

/// Binary edge map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{}x{} edge map with {} bits",
                width,
                height,
                bits.len()
            )));
        }
        Ok(EdgeMap {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        EdgeMap {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &EdgeMap) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Moves every edge pixel by `(dx, dy)`; pixels leaving the canvas are dropped.
    pub fn translated(&self, dx: isize, dy: isize) -> EdgeMap {
        let mut out = EdgeMap::empty(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height
                {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
        out
    }

    pub fn check_shape(&self, other: &EdgeMap) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "edge maps {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

/// Per-pixel Euclidean distance to the nearest edge pixel, `f64::INFINITY`
/// everywhere when the source map is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Rescales valid depths to `[0, 1]`; invalid pixels read as 0.
pub fn normalize_depth(d: &DepthGrid) -> Result<ScalarField> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&v, &m) in d.values().iter().zip(d.mask()) {
        if m {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        return Err(Error::EmptyDomain("normalizing a depth map without valid pixels"));
    }
    if lo == hi {
        return Err(Error::DegenerateRange(lo));
    }
    let span = hi - lo;
    let values = d
        .values()
        .iter()
        .zip(d.mask())
        .map(|(&v, &m)| if m { (v - lo) / span } else { 0.0 })
        .collect();
    Grid::new(d.width(), d.height(), values, d.mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_two_levels() {
        let d = DepthGrid::from_values(2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(normalize_depth(&d).unwrap().values(), &[0.0, 1.0]);
    }

    #[test]
    fn normalize_is_affine_invariant() {
        let d = DepthGrid::new(Grid::from_fn(5, 4, |x, y| 1.0 + (x * y) as f64 * 0.25)).unwrap();
        let e = DepthGrid::new(d.map(|v| 3.0 * v + 0.5)).unwrap();
        let a = normalize_depth(&d).unwrap();
        let b = normalize_depth(&e).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - q).abs() < 1e-14);
        }
        assert_eq!(a.values().iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(a.values().iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn normalize_constant_is_degenerate() {
        let d = DepthGrid::filled(3, 3, 2.0).unwrap();
        assert!(matches!(normalize_depth(&d), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn presets_are_valid() {
        for p in default_presets() {
            p.validate().unwrap();
        }
        assert_eq!(preset("narrow"), Some(CannyParams::new(0.03, 0.05)));
        assert!(preset("nope").is_none());
        assert!(CannyParams::new(0.2, 0.1).validate().is_err());
    }

    #[test]
    fn translation_drops_outside_pixels() {
        let e = EdgeMap::from_fn(4, 2, |x, _| x == 3);
        let t = e.translated(1, 0);
        assert_eq!(t.count(), 0);
        let t = e.translated(-2, 0);
        assert!(t.get(1, 0) && t.get(1, 1));
    }
}
