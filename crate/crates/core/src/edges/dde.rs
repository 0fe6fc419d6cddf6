use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{shared_mask, DepthGrid};

/// Percentages of pixels classified against a fronto-parallel reference plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdeScores {
    /// Prediction and truth on the same side of the plane.
    pub eps0: f64,
    /// Predicted nearer than the plane while the truth lies beyond it.
    pub eps_minus: f64,
    /// Predicted beyond the plane while the truth is nearer.
    pub eps_plus: f64,
}

/// Default reference plane distance in meters.
pub const DEFAULT_DDE_REFERENCE: f64 = 3.0;

/// Directed depth error. A depth is "near" when strictly below `d_ref`.
pub fn dde(pred: &DepthGrid, gt: &DepthGrid, d_ref: f64) -> Result<DdeScores> {
    if !(d_ref > 0.0 && d_ref.is_finite()) {
        return Err(Error::Parameter(format!(
            "reference distance must be positive, got {d_ref}"
        )));
    }
    pred.check_shape(gt)?;
    let mask = shared_mask(pred.mask(), gt.mask());
    let (mut agree, mut minus, mut plus, mut n) = (0usize, 0usize, 0usize, 0usize);
    for ((&m, &p), &g) in mask.iter().zip(pred.values()).zip(gt.values()) {
        if !m {
            continue;
        }
        n += 1;
        let (p_near, g_near) = (p < d_ref, g < d_ref);
        match (p_near, g_near) {
            (true, false) => minus += 1,
            (false, true) => plus += 1,
            _ => agree += 1,
        }
    }
    if n == 0 {
        return Err(Error::EmptyDomain("directed depth error needs a shared valid pixel"));
    }
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    Ok(DdeScores {
        eps0: pct(agree),
        eps_minus: pct(minus),
        eps_plus: pct(plus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn perfect_prediction() {
        let d = DepthGrid::new(Grid::from_fn(4, 4, |x, y| 1.0 + (x + y) as f64 * 0.5)).unwrap();
        let s = dde(&d, &d, 3.0).unwrap();
        assert_eq!((s.eps0, s.eps_minus, s.eps_plus), (100.0, 0.0, 0.0));
    }

    #[test]
    fn prediction_beyond_nearer_truth() {
        let gt = DepthGrid::filled(3, 3, 2.0).unwrap();
        let pred = DepthGrid::filled(3, 3, 4.0).unwrap();
        let s = dde(&pred, &gt, 3.0).unwrap();
        assert_eq!((s.eps0, s.eps_minus, s.eps_plus), (0.0, 0.0, 100.0));
    }

    #[test]
    fn half_split() {
        let gt = DepthGrid::filled(4, 2, 5.0).unwrap();
        let pred = DepthGrid::new(Grid::from_fn(4, 2, |x, _| if x < 2 { 5.0 } else { 1.0 })).unwrap();
        let s = dde(&pred, &gt, 3.0).unwrap();
        assert_eq!((s.eps0, s.eps_minus, s.eps_plus), (50.0, 50.0, 0.0));
    }

    #[test]
    fn empty_mask() {
        let gt = DepthGrid::from_samples(2, 2, vec![0.0; 4]).unwrap();
        let pred = DepthGrid::filled(2, 2, 1.0).unwrap();
        assert!(dde(&pred, &gt, 3.0).is_err());
    }
}
