//! Loss kernels with analytic gradients for joint depth, occluding-contour and
//! normal prediction, together with an evaluation toolkit for monocular depth:
//! standard error metrics, depth-boundary accuracy via Canny edges and an
//! exact Euclidean distance transform, and synthetic scenes with
//! pixel-perfect ground truth.

pub mod error;
pub mod grid;
pub mod imageio;
pub mod edges;
pub mod losses;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{DepthGrid, Grid, NormalGrid, ProbGrid, ScalarField, VecField2, VecField3};
