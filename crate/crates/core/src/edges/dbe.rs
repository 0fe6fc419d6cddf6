use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{edt, DistanceField, EdgeMap};

/// Outcome of a truncated chamfer distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChamferScore {
    /// Mean truncated distance in pixels.
    pub value: f64,
    /// Pixels the mean runs over.
    pub edge_pixels: usize,
    /// Pixels whose distance exceeded the radius and was replaced by 0.
    pub truncated: usize,
}

impl ChamferScore {
    pub fn truncated_fraction(&self) -> f64 {
        self.truncated as f64 / self.edge_pixels as f64
    }
}

/// Mean over the set pixels of `from` of `field`, where distances strictly
/// greater than `theta` count as 0 but stay in the denominator.
///
/// Returns `None` when `from` has no set pixel.
pub fn truncated_chamfer(from: &EdgeMap, field: &DistanceField, theta: f64) -> Option<ChamferScore> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut truncated = 0usize;
    for (&on, &d) in from.bits().iter().zip(field.values()) {
        if !on {
            continue;
        }
        n += 1;
        if d > theta {
            truncated += 1;
        } else {
            sum += d;
        }
    }
    (n > 0).then(|| ChamferScore {
        value: sum / n as f64,
        edge_pixels: n,
        truncated,
    })
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "truncation radius must be positive, got {theta}"
        )))
    }
}

/// Depth-boundary accuracy: truncated chamfer from predicted edges to the
/// ground-truth contours.
pub fn dbe_accuracy(pred: &EdgeMap, gt: &EdgeMap, theta: f64) -> Result<ChamferScore> {
    check_theta(theta)?;
    pred.check_shape(gt)?;
    truncated_chamfer(pred, &edt(gt), theta)
        .ok_or(Error::UndefinedMetric("accuracy needs at least one predicted edge pixel"))
}

/// Depth-boundary completeness: truncated chamfer from the ground-truth
/// contours to the predicted edges.
pub fn dbe_completeness(pred: &EdgeMap, gt: &EdgeMap, theta: f64) -> Result<ChamferScore> {
    check_theta(theta)?;
    pred.check_shape(gt)?;
    truncated_chamfer(gt, &edt(pred), theta)
        .ok_or(Error::UndefinedMetric("completeness needs at least one ground-truth edge pixel"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(x0: usize) -> EdgeMap {
        EdgeMap::from_fn(32, 20, |x, _| x == x0)
    }

    // Chamfer by exhaustive nearest-pixel search.
    fn brute_chamfer(from: &EdgeMap, to: &EdgeMap, theta: f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 0..from.height() {
            for x in 0..from.width() {
                if !from.get(x, y) {
                    continue;
                }
                let mut best = f64::INFINITY;
                for v in 0..to.height() {
                    for u in 0..to.width() {
                        if to.get(u, v) {
                            let d = ((x as f64 - u as f64).powi(2) + (y as f64 - v as f64).powi(2)).sqrt();
                            best = best.min(d);
                        }
                    }
                }
                sum += if best > theta { 0.0 } else { best };
                n += 1.0;
            }
        }
        sum / n
    }

    #[test]
    fn identical_maps_score_zero() {
        let e = EdgeMap::from_fn(16, 16, |x, y| x == y || x == 3);
        assert_eq!(dbe_accuracy(&e, &e, 10.0).unwrap().value, 0.0);
        assert_eq!(dbe_completeness(&e, &e, 10.0).unwrap().value, 0.0);
    }

    #[test]
    fn offset_lines() {
        let s = dbe_accuracy(&column(13), &column(10), 10.0).unwrap();
        assert_eq!(s.value, 3.0);
        assert_eq!(s.value, brute_chamfer(&column(13), &column(10), 10.0));
        let s = dbe_completeness(&column(14), &column(10), 10.0).unwrap();
        assert_eq!(s.value, 4.0);
        assert_eq!(s.value, brute_chamfer(&column(10), &column(14), 10.0));
    }

    #[test]
    fn far_prediction_is_truncated_to_zero() {
        let s = dbe_accuracy(&column(25), &column(5), 10.0).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.truncated_fraction(), 1.0);
    }

    #[test]
    fn empty_prediction() {
        let empty = EdgeMap::empty(32, 20);
        assert!(matches!(
            dbe_accuracy(&empty, &column(3), 10.0),
            Err(Error::UndefinedMetric(_))
        ));
        let s = dbe_completeness(&empty, &column(3), 10.0).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.truncated, 20);
        assert!(matches!(
            dbe_completeness(&column(3), &empty, 10.0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn irregular_maps_match_brute_force() {
        let a = EdgeMap::from_fn(32, 20, |x, y| (x * 5 + y * 3) % 17 == 0);
        let b = EdgeMap::from_fn(32, 20, |x, y| (x + 2 * y) % 13 == 1 && x > 6);
        for theta in [1.5, 4.0, 10.0] {
            let s = dbe_accuracy(&a, &b, theta).unwrap();
            assert!((s.value - brute_chamfer(&a, &b, theta)).abs() < 1e-12);
        }
    }
}
