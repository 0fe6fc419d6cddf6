use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::{taps, ScalarField};

use super::{CannyParams, EdgeMap};

/// Magnitudes closer than this fraction of the image maximum count as equal.
const TIE_TOLERANCE: f64 = 1e-9;
const INTENSITY_TOLERANCE: f64 = 1e-12;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicated borders.
fn smooth(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return values.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &values[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * row[clamp(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let src = clamp(y as isize + j as isize - r, h) * w;
            let dst = y * w;
            for x in 0..w {
                out[dst + x] += kv * tmp[src + x];
            }
        }
    }
    out
}

/// Pixel that carries the edge found at the local maximum `i`.
///
/// A parabola through the magnitudes at `lo`, `i` and `hi` (the neighbours
/// along the gradient) locates the sub-pixel peak. A peak displaced toward
/// the lower-intensity neighbour lies on the boundary between `i` and that
/// neighbour, and the neighbour takes the edge; otherwise `i` keeps it.
#[inline]
fn relocate(i: usize, m: f64, (lo, m_lo): (usize, f64), (hi, m_hi): (usize, f64), s: &[f64]) -> usize {
    let curvature = m_lo - 2.0 * m + m_hi;
    if curvature >= 0.0 {
        return i;
    }
    // offset toward `hi`, in (-0.5, 0.5]
    let delta = (m_lo - m_hi) / (2.0 * curvature);
    let fall = s[lo] - s[hi];
    if delta > 0.0 && fall > INTENSITY_TOLERANCE {
        hi
    } else if delta < 0.0 && fall < -INTENSITY_TOLERANCE {
        lo
    } else {
        i
    }
}

/// Neighbor offset along the gradient direction, quantized to 4 directions.
#[inline]
fn direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Canny edge detector.
///
/// Gaussian smoothing, finite-difference gradients, non-maximum suppression
/// along 4 quantized directions, then 8-connected hysteresis with thresholds
/// `sigma_low * G` and `sigma_high * G`, where `G` is the largest gradient
/// magnitude in the image. A pixel must exceed a threshold strictly.
///
/// Edge pixels sit on the lower-intensity side of the gradient peak: where
/// two pixels tie in magnitude the darker one survives suppression, and a
/// surviving pixel whose sub-pixel peak leans toward its darker neighbour
/// hands the edge to that neighbour. On depth maps this puts every edge on
/// the occluding (nearer) side of the discontinuity.
pub fn canny(img: &ScalarField, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "canny needs at least 3x3, got {w}x{h}"
        )));
    }
    let raw: Vec<f64> = img
        .values()
        .iter()
        .zip(img.mask())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    let s = smooth(&raw, w, h, params.gauss_sigma);

    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    let mut gmax = 0.0f64;
    for y in 0..h {
        let ty = taps(y, h);
        for x in 0..w {
            let tx = taps(x, w);
            let i = y * w + x;
            gx[i] = tx.scale * (s[y * w + tx.hi] - s[y * w + tx.lo]);
            gy[i] = ty.scale * (s[ty.hi * w + x] - s[ty.lo * w + x]);
            mag[i] = gx[i].hypot(gy[i]);
            gmax = gmax.max(mag[i]);
        }
    }
    let mut out = EdgeMap::empty(w, h);
    if gmax <= 0.0 {
        return Ok(out);
    }
    let tol = TIE_TOLERANCE * gmax;
    let low = params.sigma_low * gmax;
    let high = params.sigma_high * gmax;

    // 0 = suppressed, 1 = weak, 2 = strong, indexed by the relocated pixel
    let mut class = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= low {
                continue;
            }
            let (dx, dy) = direction(gx[i], gy[i]);
            let mut keep = true;
            let mut side_mag = [0.0; 2];
            let mut side_idx = [None; 2];
            for (k, (side, (ox, oy))) in [(-1isize, (-dx, -dy)), (1, (dx, dy))].into_iter().enumerate() {
                let (nx, ny) = (x as isize + ox, y as isize + oy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                let n = mag[j];
                side_mag[k] = n;
                side_idx[k] = Some(j);
                if n > m + tol {
                    keep = false;
                } else if (n - m).abs() <= tol {
                    let ds = s[j] - s[i];
                    if ds < -INTENSITY_TOLERANCE || (ds.abs() <= INTENSITY_TOLERANCE && side < 0) {
                        keep = false;
                    }
                }
                if !keep {
                    break;
                }
            }
            if !keep {
                continue;
            }
            let mut target = match side_idx {
                [Some(a), Some(b)] => relocate(i, m, (a, side_mag[0]), (b, side_mag[1]), &s),
                _ => i,
            };
            // a diagonal hand-over crosses the boundary at a corner; the
            // darker of the two edge-adjacent pixels is the one across it
            let (tx, ty) = (target % w, target / w);
            if tx != x && ty != y {
                let (a, b) = (y * w + tx, ty * w + x);
                target = if s[a] <= s[b] { a } else { b };
            }
            class[target] = class[target].max(if m > high { 2 } else { 1 });
        }
    }

    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| class[i] == 2).collect();
    let mut on: Vec<bool> = class.iter().map(|&c| c == 2).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for oy in -1..=1 {
            for ox in -1..=1 {
                let (nx, ny) = (x + ox, y + oy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] == 1 && !on[j] {
                    on[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    for (i, &valid) in img.mask().iter().enumerate() {
        if on[i] && valid {
            out.set(i % w, i / w, true);
        }
    }
    Ok(out)
}
