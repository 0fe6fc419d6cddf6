//! TOML run configuration. Command-line flags override every value here.

use std::path::Path;

use depth_contours::edges::{default_presets, preset, CannyParams};
use depth_contours::losses::{AlphaMode, ContourNorm, LossConfig, NormalConvention};
use depth_contours::metrics::{Aggregation, ClipRange, Crop, EvalConfig};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub eval: EvalSection,
    pub losses: LossSection,
    pub canny: CannySection,
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// `none`, `eigen` or `x0,y0,x1,y1`.
    pub crop: Option<String>,
    pub clip: Option<[f64; 2]>,
    pub theta: Option<f64>,
    pub d_ref: Option<f64>,
    pub degenerate_ratio: Option<f64>,
    pub aggregation: Option<Aggregation>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda_d: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_n: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha_mode: Option<AlphaMode>,
    pub contour_norm: Option<ContourNorm>,
    pub convention: Option<NormalConvention>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannySection {
    /// Preset names, e.g. `["coarse", "fine"]`.
    pub presets: Option<Vec<String>>,
    /// Explicit `[low, high]` pairs, used after the presets.
    pub pairs: Option<Vec<[f64; 2]>>,
    pub gauss_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

/// Threshold choices given on the command line.
#[derive(Debug, Default)]
pub struct CannyFlags {
    pub presets: Vec<String>,
    pub sigma_low: Option<f64>,
    pub sigma_high: Option<f64>,
    pub gauss_sigma: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn canny(&self, flags: &CannyFlags) -> Result<Vec<CannyParams>, String> {
        let mut out = Vec::new();
        if !flags.presets.is_empty() || flags.sigma_low.is_some() || flags.sigma_high.is_some() {
            for name in &flags.presets {
                out.push(named(name)?);
            }
            match (flags.sigma_low, flags.sigma_high) {
                (Some(lo), Some(hi)) => out.push(CannyParams::new(lo, hi)),
                (None, None) => {}
                _ => return Err("--sigma-low and --sigma-high go together".into()),
            }
        } else if self.canny.presets.is_some() || self.canny.pairs.is_some() {
            for name in self.canny.presets.iter().flatten() {
                out.push(named(name)?);
            }
            for &[lo, hi] in self.canny.pairs.iter().flatten() {
                out.push(CannyParams::new(lo, hi));
            }
        } else {
            out = default_presets();
        }
        if let Some(g) = flags.gauss_sigma.or(self.canny.gauss_sigma) {
            out = out.into_iter().map(|p| p.with_gauss_sigma(g)).collect();
        }
        if out.is_empty() {
            return Err("no canny thresholds configured".into());
        }
        for p in &out {
            p.validate().map_err(|e| e.to_string())?;
        }
        Ok(out)
    }

    pub fn eval(
        &self,
        crop: Option<Crop>,
        clip: Option<ClipRange>,
        theta: Option<f64>,
        canny: Vec<CannyParams>,
    ) -> Result<EvalConfig, String> {
        let s = &self.eval;
        let mut cfg = EvalConfig {
            canny,
            ..EvalConfig::default()
        };
        cfg.crop = match (crop, &s.crop) {
            (Some(c), _) => c,
            (None, Some(c)) => c.parse().map_err(|e: depth_contours::Error| e.to_string())?,
            (None, None) => cfg.crop,
        };
        cfg.clip = match (clip, s.clip) {
            (Some(c), _) => c,
            (None, Some([lo, hi])) => ClipRange::new(lo, hi).map_err(|e| e.to_string())?,
            (None, None) => cfg.clip,
        };
        cfg.theta = theta.or(s.theta).unwrap_or(cfg.theta);
        cfg.d_ref = s.d_ref.unwrap_or(cfg.d_ref);
        cfg.degenerate_ratio = s.degenerate_ratio.unwrap_or(cfg.degenerate_ratio);
        cfg.aggregation = s.aggregation.unwrap_or(cfg.aggregation);
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn losses(&self) -> Result<LossConfig, String> {
        let s = &self.losses;
        let mut cfg = LossConfig::default();
        let w = &mut cfg.weights;
        w.lambda_d = s.lambda_d.unwrap_or(w.lambda_d);
        w.lambda_c = s.lambda_c.unwrap_or(w.lambda_c);
        w.lambda_n = s.lambda_n.unwrap_or(w.lambda_n);
        w.mu = s.mu.unwrap_or(w.mu);
        let a = &mut cfg.attention;
        a.alpha = s.alpha.unwrap_or(a.alpha);
        a.beta = s.beta.unwrap_or(a.beta);
        a.gamma = s.gamma.unwrap_or(a.gamma);
        cfg.alpha_mode = s.alpha_mode.unwrap_or(cfg.alpha_mode);
        cfg.contour_norm = s.contour_norm.unwrap_or(cfg.contour_norm);
        cfg.convention = s.convention.unwrap_or(cfg.convention);
        cfg.weights.validate().map_err(|e| e.to_string())?;
        cfg.attention.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn named(name: &str) -> Result<CannyParams, String> {
    preset(name).ok_or_else(|| format!("unknown canny preset {name:?} (coarse, medium, fine, narrow)"))
}
