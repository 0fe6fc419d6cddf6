//! Masked pixel grids and the finite-difference operators shared by the
//! losses and the edge pipeline.
//!
//! All grids are row-major with `index = y * width + x`. Every grid carries a
//! validity mask; operators never read values at masked-out pixels, and any
//! output pixel whose stencil touches an invalid pixel is itself invalid.

use std::ops::Deref;

use crate::error::{Error, Result};

/// A row-major grid of per-pixel values with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    mask: Vec<bool>,
}

/// Per-pixel real values (log residuals, Laplacians, normalized depth).
pub type ScalarField = Grid<f64>;
/// Per-pixel 2-vectors in value units per pixel.
pub type VecField2 = Grid<[f64; 2]>;
/// Per-pixel 3-vectors with no length constraint (raw normal predictions).
pub type VecField3 = Grid<[f64; 3]>;

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || mask.len() != n {
            return Err(Error::Dimension(format!(
                "{}x{} grid needs {n} values and mask bits, got {} and {}",
                width,
                height,
                values.len(),
                mask.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            values,
            mask,
        })
    }

    /// A fully valid grid.
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(width, height, values, vec![true; n])
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            values: vec![value; width * height],
            mask: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            values,
            mask: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[self.index(x, y)]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[self.index(x, y)]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::Dimension(format!(
                "mask of length {} for {}x{} grid",
                mask.len(),
                self.width,
                self.height
            )));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            values: self.values.iter().copied().map(f).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Same shape and mask with new values.
    pub fn clone_with(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.values.len(), "value count mismatch");
        Grid {
            width: self.width,
            height: self.height,
            values,
            mask: self.mask.clone(),
        }
    }

    pub fn into_parts(self) -> (usize, usize, Vec<T>, Vec<bool>) {
        (self.width, self.height, self.values, self.mask)
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Sub-grid over the half-open rectangle `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 || x1 > self.width || y1 > self.height {
            return Err(Error::OutOfBounds {
                x0,
                y0,
                x1,
                y1,
                width: self.width,
                height: self.height,
            });
        }
        let w = x1 - x0;
        let h = y1 - y0;
        let mut values = Vec::with_capacity(w * h);
        let mut mask = Vec::with_capacity(w * h);
        for y in y0..y1 {
            let row = self.index(x0, y);
            values.extend_from_slice(&self.values[row..row + w]);
            mask.extend_from_slice(&self.mask[row..row + w]);
        }
        Ok(Grid {
            width: w,
            height: h,
            values,
            mask,
        })
    }
}

/// Elementwise AND of two validity masks.
pub fn shared_mask(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(&p, &q)| p && q).collect()
}

macro_rules! grid_newtype_common {
    ($name:ident, $t:ty) => {
        impl Deref for $name {
            type Target = Grid<$t>;

            fn deref(&self) -> &Grid<$t> {
                &self.0
            }
        }

        impl $name {
            pub fn grid(&self) -> &Grid<$t> {
                &self.0
            }

            pub fn into_grid(self) -> Grid<$t> {
                self.0
            }
        }
    };
}

/// Metric depths; every valid pixel holds a finite, strictly positive value.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthGrid(Grid<f64>);

grid_newtype_common!(DepthGrid, f64);

impl DepthGrid {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        for (i, (&v, &m)) in grid.values.iter().zip(&grid.mask).enumerate() {
            if m && !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositiveDepth {
                    x: i % grid.width,
                    y: i / grid.width,
                    value: v,
                });
            }
        }
        Ok(DepthGrid(grid))
    }

    /// Fully valid depth grid from raw values.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_values(width, height, values)?)
    }

    /// Sensor-style construction: zero, negative or non-finite samples become
    /// invalid pixels instead of errors.
    pub fn from_samples(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let mask = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Ok(DepthGrid(Grid::new(width, height, values, mask)?))
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(Grid::filled(width, height, depth))
    }
}

/// Probabilities; every valid pixel holds a value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbGrid(Grid<f64>);

grid_newtype_common!(ProbGrid, f64);

impl ProbGrid {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        for (i, (&v, &m)) in grid.values.iter().zip(&grid.mask).enumerate() {
            if m && !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue {
                    x: i % grid.width,
                    y: i / grid.width,
                    value: v,
                    reason: "probability outside [0, 1]",
                });
            }
        }
        Ok(ProbGrid(grid))
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_values(width, height, values)?)
    }

    /// Binary grid from boolean labels.
    pub fn from_labels(width: usize, height: usize, labels: &[bool]) -> Result<Self> {
        let values = labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::from_values(width, height, values)
    }
}

/// Length tolerance for unit normals.
pub const UNIT_NORMAL_TOLERANCE: f64 = 1e-6;

/// Unit surface normals; every valid pixel has length within
/// [`UNIT_NORMAL_TOLERANCE`] of one.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalGrid(Grid<[f64; 3]>);

grid_newtype_common!(NormalGrid, [f64; 3]);

impl NormalGrid {
    pub fn new(grid: Grid<[f64; 3]>) -> Result<Self> {
        for (i, (v, &m)) in grid.values.iter().zip(&grid.mask).enumerate() {
            if !m {
                continue;
            }
            let len = norm3(*v);
            if !((len - 1.0).abs() <= UNIT_NORMAL_TOLERANCE) {
                return Err(Error::InvalidValue {
                    x: i % grid.width,
                    y: i / grid.width,
                    value: len,
                    reason: "normal is not unit length",
                });
            }
        }
        Ok(NormalGrid(grid))
    }

    /// Normalizes every valid vector; zero vectors become invalid pixels.
    pub fn normalized(grid: Grid<[f64; 3]>) -> Self {
        let (w, h, mut values, mut mask) = grid.into_parts();
        for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
            let len = norm3(*v);
            if *m && len > 0.0 && len.is_finite() {
                *v = [v[0] / len, v[1] / len, v[2] / len];
            } else {
                *m = false;
            }
        }
        NormalGrid(Grid {
            width: w,
            height: h,
            values,
            mask,
        })
    }
}

#[inline]
pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Two-tap finite-difference stencil along one axis: `scale * (v[hi] - v[lo])`.
///
/// Central at interior samples, one-sided at the two ends.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Taps {
    pub lo: usize,
    pub hi: usize,
    pub scale: f64,
}

#[inline]
pub(crate) fn taps(i: usize, n: usize) -> Taps {
    debug_assert!(n >= 2 && i < n);
    if i == 0 {
        Taps {
            lo: 0,
            hi: 1,
            scale: 1.0,
        }
    } else if i == n - 1 {
        Taps {
            lo: n - 2,
            hi: n - 1,
            scale: 1.0,
        }
    } else {
        Taps {
            lo: i - 1,
            hi: i + 1,
            scale: 0.5,
        }
    }
}

fn require_size<T: Copy>(g: &Grid<T>, min: usize) -> Result<()> {
    if g.width < min || g.height < min {
        return Err(Error::Dimension(format!(
            "operator needs at least {min}x{min}, got {}x{}",
            g.width, g.height
        )));
    }
    Ok(())
}

/// Finite-difference gradient of a depth grid, in depth units per pixel.
pub fn gradient(d: &DepthGrid) -> Result<VecField2> {
    gradient_of(d)
}

/// Finite-difference gradient of any scalar grid.
///
/// Central differences at interior pixels, one-sided at the borders. An
/// output pixel is valid only if it and all four of its taps are valid.
pub fn gradient_of(f: &ScalarField) -> Result<VecField2> {
    require_size(f, 2)?;
    let (w, h) = (f.width, f.height);
    let mut values = vec![[0.0; 2]; w * h];
    let mut mask = vec![false; w * h];
    for y in 0..h {
        let ty = taps(y, h);
        for x in 0..w {
            let tx = taps(x, w);
            let i = y * w + x;
            let (xl, xh) = (y * w + tx.lo, y * w + tx.hi);
            let (yl, yh) = (ty.lo * w + x, ty.hi * w + x);
            if !(f.mask[i] && f.mask[xl] && f.mask[xh] && f.mask[yl] && f.mask[yh]) {
                continue;
            }
            values[i] = [
                tx.scale * (f.values[xh] - f.values[xl]),
                ty.scale * (f.values[yh] - f.values[yl]),
            ];
            mask[i] = true;
        }
    }
    Ok(Grid {
        width: w,
        height: h,
        values,
        mask,
    })
}

/// Accumulates `J^T upstream` of [`gradient_of`] into `out`, reading only
/// pixels where `upstream` is valid.
pub(crate) fn gradient_adjoint(upstream: &VecField2, out: &mut [f64]) {
    let (w, h) = (upstream.width, upstream.height);
    for y in 0..h {
        let ty = taps(y, h);
        for x in 0..w {
            let i = y * w + x;
            if !upstream.mask[i] {
                continue;
            }
            let tx = taps(x, w);
            let [gx, gy] = upstream.values[i];
            out[y * w + tx.hi] += tx.scale * gx;
            out[y * w + tx.lo] -= tx.scale * gx;
            out[ty.hi * w + x] += ty.scale * gy;
            out[ty.lo * w + x] -= ty.scale * gy;
        }
    }
}

/// Five-point Laplacian of a depth grid.
pub fn laplacian(d: &DepthGrid) -> Result<ScalarField> {
    laplacian_of(d)
}

/// Five-point Laplacian `v[x-1] + v[x+1] + v[y-1] + v[y+1] - 4 v`.
///
/// Border pixels and pixels with an invalid stencil tap are invalid.
pub fn laplacian_of(f: &ScalarField) -> Result<ScalarField> {
    require_size(f, 3)?;
    let (w, h) = (f.width, f.height);
    let mut values = vec![0.0; w * h];
    let mut mask = vec![false; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let taps = [i - 1, i + 1, i - w, i + w];
            if !f.mask[i] || taps.iter().any(|&j| !f.mask[j]) {
                continue;
            }
            values[i] = taps.iter().map(|&j| f.values[j]).sum::<f64>() - 4.0 * f.values[i];
            mask[i] = true;
        }
    }
    Ok(Grid {
        width: w,
        height: h,
        values,
        mask,
    })
}

/// Accumulates `J^T upstream` of [`laplacian_of`] into `out`.
pub(crate) fn laplacian_adjoint(upstream: &ScalarField, out: &mut [f64]) {
    let w = upstream.width;
    for (i, (&g, &m)) in upstream.values.iter().zip(&upstream.mask).enumerate() {
        if !m {
            continue;
        }
        out[i - 1] += g;
        out[i + 1] += g;
        out[i - w] += g;
        out[i + w] += g;
        out[i] -= 4.0 * g;
    }
}

/// Arithmetic mean over valid pixels.
pub fn masked_mean(f: &ScalarField) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&v, &m) in f.values.iter().zip(&f.mask) {
        if m {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDomain("masked mean over an empty mask"));
    }
    Ok(sum / n as f64)
}
