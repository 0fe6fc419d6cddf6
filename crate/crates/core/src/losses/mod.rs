//! Forward values and analytic gradients for the training objective.
//!
//! The objective is
//! `λ_d·L_d(D, D̂) + λ_c·L_c(C, Ĉ) + λ_n·L_n(N, N̂) + L_dc(D̂, Ĉ) + L_dn(D̂, N̂)`
//! where the first three terms supervise each prediction head and the last
//! two couple the heads to each other without ground truth.
//!
//! Every kernel returns a [`LossResult`] carrying the value together with the
//! gradient with respect to each predicted input it reads. All means are taken
//! over valid pixels only.

mod consensus;
mod contour;
mod depth;
pub mod gradcheck;
mod normals;
mod total;

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, ScalarField};

pub use consensus::{depth_contour_consensus, depth_normal_consensus};
pub use contour::{attention_loss_pixel, attention_loss_pixel_grad, contour_loss};
pub use depth::{berhu, depth_loss};
pub use gradcheck::{gradcheck, GradcheckReport, LossTerm};
pub use normals::normals_loss;
pub use total::{total_loss, LossBreakdown, Predictions, Targets, TotalLoss};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-6;

/// Minimum length of the depth gradient and of the normal's image-plane part
/// for a pixel to take part in the depth-normals consensus.
pub const CONSENSUS_GRAD_EPS: f64 = 1e-6;

#[inline]
pub(crate) fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, true)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, true)
    } else {
        (p, false)
    }
}

/// Term weights of the total objective plus the consensus weight `mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_n: f64,
    pub mu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_d: 1.0,
            lambda_c: 1.0,
            lambda_n: 1.0,
            mu: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("lambda_d", self.lambda_d),
            ("lambda_c", self.lambda_c),
            ("lambda_n", self.lambda_n),
            ("mu", self.mu),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(crate::Error::Parameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the class-balanced attention loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionParams {
    /// Weight of the positive (contour) class.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for AttentionParams {
    fn default() -> Self {
        AttentionParams {
            alpha: 0.5,
            beta: 4.0,
            gamma: 0.5,
        }
    }
}

impl AttentionParams {
    pub fn validate(&self) -> crate::Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(crate::Error::Parameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.gamma > 0.0) {
            return Err(crate::Error::Parameter(format!(
                "beta and gamma must be positive, got ({}, {})",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

/// How the contour loss picks `alpha` for an image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// Fraction of valid pixels labelled as contour.
    #[default]
    ContourFraction,
    /// Fraction of valid pixels labelled as non-contour.
    NonContourFraction,
    /// Use [`AttentionParams::alpha`] unchanged.
    Fixed,
}

/// Realization of `‖Ĉ‖` in the depth-contours consensus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContourNorm {
    /// Mean of Ĉ over the valid domain.
    #[default]
    Mean,
    /// Root mean square of Ĉ over the valid domain.
    RootMeanSquare,
}

/// Orientation of normals relative to the depth gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalConvention {
    /// `n ∝ (∂x D, ∂y D, -1)`: the image-plane part points along the depth gradient.
    #[default]
    CameraFacing,
    /// `n ∝ (-∂x D, -∂y D, 1)`.
    Outward,
}

impl NormalConvention {
    pub(crate) fn sign(self) -> f64 {
        match self {
            NormalConvention::CameraFacing => 1.0,
            NormalConvention::Outward => -1.0,
        }
    }
}

/// Everything besides the input grids that shapes the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub attention: AttentionParams,
    pub alpha_mode: AlphaMode,
    pub contour_norm: ContourNorm,
    pub convention: NormalConvention,
}

/// Value of one loss term and its gradients with respect to the predictions
/// it depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `∂loss/∂D̂`
    pub grad_depth: Option<ScalarField>,
    /// `∂loss/∂Ĉ`
    pub grad_contours: Option<ScalarField>,
    /// `∂loss/∂N̂`
    pub grad_normals: Option<Grid<[f64; 3]>>,
}

impl LossResult {
    pub(crate) fn new(value: f64) -> Self {
        LossResult {
            value,
            grad_depth: None,
            grad_contours: None,
            grad_normals: None,
        }
    }
}
