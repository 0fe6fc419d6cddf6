//! Synthetic scenes with pixel-exact depth, normals and occluding contours.
//!
//! Rendering is orthographic: each pixel takes the nearest of the background
//! plane and the primitives covering it. A pixel is an occluding contour when
//! one of its 4-neighbours is farther by more than the scene's gap threshold,
//! half the smallest depth gap between two surfaces. The contour therefore
//! sits on the near side of every discontinuity.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::edges::EdgeMap;
use crate::error::{Error, Result};
use crate::grid::{taps, DepthGrid, Grid, NormalGrid};
use crate::imageio::{write_depth, write_mask, write_normals, DepthFormat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    /// Axis-aligned rectangle `[x0, x1) x [y0, y1)` at constant depth.
    Rect {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        depth: f64,
    },
    /// Pixels within `radius` of the center, at constant depth.
    Disk {
        cx: f64,
        cy: f64,
        radius: f64,
        depth: f64,
    },
    /// Rectangle on the plane `depth + a (x - xc) + b (y - yc)`, where
    /// `(xc, yc)` is the rectangle center; slopes in meters per pixel.
    Slanted {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        depth: f64,
        a: f64,
        b: f64,
    },
    /// Spherical cap bulging toward the camera: `depth` at the rim and
    /// `depth - height` at the apex.
    Hemisphere {
        cx: f64,
        cy: f64,
        radius: f64,
        depth: f64,
        height: f64,
    },
}

impl Primitive {
    fn covers(&self, x: usize, y: usize) -> bool {
        let (xf, yf) = (x as f64, y as f64);
        match *self {
            Primitive::Rect { x0, y0, x1, y1, .. } | Primitive::Slanted { x0, y0, x1, y1, .. } => {
                (x0..x1).contains(&x) && (y0..y1).contains(&y)
            }
            Primitive::Disk { cx, cy, radius, .. } | Primitive::Hemisphere { cx, cy, radius, .. } => {
                (xf - cx).powi(2) + (yf - cy).powi(2) <= radius * radius
            }
        }
    }

    /// Closed-form depth; meaningful wherever the primitive covers the pixel.
    fn depth_at(&self, x: f64, y: f64) -> f64 {
        match *self {
            Primitive::Rect { depth, .. } | Primitive::Disk { depth, .. } => depth,
            Primitive::Slanted {
                x0,
                y0,
                x1,
                y1,
                depth,
                a,
                b,
            } => {
                let xc = (x0 + x1 - 1) as f64 / 2.0;
                let yc = (y0 + y1 - 1) as f64 / 2.0;
                depth + a * (x - xc) + b * (y - yc)
            }
            Primitive::Hemisphere {
                cx,
                cy,
                radius,
                depth,
                height,
            } => {
                let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (radius * radius);
                depth - height * (1.0 - r2).max(0.0).sqrt()
            }
        }
    }

    /// Depth slope `(dD/dx, dD/dy)` used for the surface normal at a pixel.
    ///
    /// Planes use their exact slope. The cap uses the symmetric difference of
    /// its closed form, the same stencil that a depth-gradient operator
    /// applies to rendered pixels, so normals and rendered depth agree exactly.
    fn slope(&self, x: usize, y: usize) -> [f64; 2] {
        match *self {
            Primitive::Rect { .. } | Primitive::Disk { .. } => [0.0, 0.0],
            Primitive::Slanted { a, b, .. } => [a, b],
            Primitive::Hemisphere { .. } => {
                let (xf, yf) = (x as f64, y as f64);
                [
                    0.5 * (self.depth_at(xf + 1.0, yf) - self.depth_at(xf - 1.0, yf)),
                    0.5 * (self.depth_at(xf, yf + 1.0) - self.depth_at(xf, yf - 1.0)),
                ]
            }
        }
    }

    fn translated(&self, k: usize) -> Primitive {
        let kf = k as f64;
        match self.clone() {
            Primitive::Rect { x0, y0, x1, y1, depth } => Primitive::Rect {
                x0: x0 + k,
                y0,
                x1: x1 + k,
                y1,
                depth,
            },
            Primitive::Slanted {
                x0,
                y0,
                x1,
                y1,
                depth,
                a,
                b,
            } => Primitive::Slanted {
                x0: x0 + k,
                y0,
                x1: x1 + k,
                y1,
                depth,
                a,
                b,
            },
            Primitive::Disk { cx, cy, radius, depth } => Primitive::Disk {
                cx: cx + kf,
                cy,
                radius,
                depth,
            },
            Primitive::Hemisphere {
                cx,
                cy,
                radius,
                depth,
                height,
            } => Primitive::Hemisphere {
                cx: cx + kf,
                cy,
                radius,
                depth,
                height,
            },
        }
    }

    /// Free columns to the right of the primitive, or `None` if it does
    /// not fit the canvas.
    fn right_margin(&self, w: usize, h: usize) -> Option<usize> {
        match *self {
            Primitive::Rect { x0, y0, x1, y1, .. } | Primitive::Slanted { x0, y0, x1, y1, .. } => {
                (x0 < x1 && y0 < y1 && x1 <= w && y1 <= h).then(|| w - x1)
            }
            Primitive::Disk { cx, cy, radius, .. } => {
                let ok = radius > 0.0
                    && cx - radius >= 0.0
                    && cy - radius >= 0.0
                    && cx + radius <= (w - 1) as f64
                    && cy + radius <= (h - 1) as f64;
                ok.then(|| ((w - 1) as f64 - cx - radius).floor() as usize)
            }
            // one free pixel around the cap keeps its normals' stencil on canvas
            Primitive::Hemisphere { cx, cy, radius, .. } => {
                let ok = radius > 0.0
                    && cx - radius >= 1.0
                    && cy - radius >= 1.0
                    && cx + radius <= (w - 2) as f64
                    && cy + radius <= (h - 2) as f64;
                ok.then(|| ((w - 2) as f64 - cx - radius).floor() as usize)
            }
        }
    }
}

/// Sensor-style corruption applied by [`perturb`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    /// Standard deviation of additive depth noise in meters.
    #[serde(default)]
    pub sigma: f64,
    /// Foreground depth bleeds this many pixels across occluding contours.
    #[serde(default)]
    pub fatten: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background: f64,
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Noise>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, background: f64) -> Self {
        SceneSpec {
            width,
            height,
            background,
            primitives: Vec::new(),
            noise: None,
            seed: 0,
        }
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.primitives.push(p);
        self
    }

    /// Smallest number of columns every primitive can move right.
    pub fn margin(&self) -> Result<usize> {
        let mut m = self.width;
        for (i, p) in self.primitives.iter().enumerate() {
            m = m.min(p.right_margin(self.width, self.height).ok_or_else(|| {
                Error::Scene(format!("primitive {i} does not fit the {}x{} canvas", self.width, self.height))
            })?);
        }
        Ok(m)
    }

    /// The same scene with every primitive moved `k` pixels right.
    pub fn translated(&self, k: usize) -> Result<SceneSpec> {
        let m = self.margin()?;
        if k > m {
            return Err(Error::Scene(format!("shift {k} exceeds the canvas margin {m}")));
        }
        Ok(SceneSpec {
            primitives: self.primitives.iter().map(|p| p.translated(k)).collect(),
            ..self.clone()
        })
    }
}

/// Pixel-exact ground truth of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneTruth {
    pub depth: DepthGrid,
    /// Camera-facing unit normals; pixels whose gradient stencil straddles
    /// two surfaces are invalid.
    pub normals: NormalGrid,
    pub contours: EdgeMap,
    pub mask: Vec<bool>,
    /// Depth step above which neighbouring pixels count as separate surfaces.
    pub gap_threshold: f64,
}

impl SceneTruth {
    /// Writes `depth/<stem>.<ext>`, `contours/<stem>.pbm` and
    /// `normals/<stem>.pfm` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str, format: DepthFormat) -> Result<()> {
        for sub in ["depth", "contours", "normals"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::from(e).in_file(dir.join(sub)))?;
        }
        write_depth(
            &dir.join("depth").join(format!("{stem}.{}", format.extension())),
            &self.depth,
            format,
        )?;
        write_mask(&dir.join("contours").join(format!("{stem}.pbm")), &self.contours)?;
        write_normals(&dir.join("normals").join(format!("{stem}.pfm")), &self.normals)
    }
}

struct Surfaces {
    /// Range of depths each surface takes on its own footprint.
    ranges: Vec<(f64, f64)>,
    /// Largest depth change between 4-neighbours inside each footprint.
    steps: Vec<f64>,
}

fn survey(spec: &SceneSpec) -> Surfaces {
    let (w, h) = (spec.width, spec.height);
    let mut ranges = vec![(spec.background, spec.background)];
    let mut steps = vec![0.0];
    for p in &spec.primitives {
        let (mut lo, mut hi, mut step) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                if !p.covers(x, y) {
                    continue;
                }
                let d = p.depth_at(x as f64, y as f64);
                lo = lo.min(d);
                hi = hi.max(d);
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx < w && ny < h && p.covers(nx, ny) {
                        step = step.max((p.depth_at(nx as f64, ny as f64) - d).abs());
                    }
                }
            }
        }
        ranges.push((lo, hi));
        steps.push(step);
    }
    Surfaces { ranges, steps }
}

/// Checks the spec and returns its gap threshold (infinite for a scene with
/// a single surface).
pub fn validate(spec: &SceneSpec) -> Result<f64> {
    if spec.width < 3 || spec.height < 3 {
        return Err(Error::Scene(format!("canvas {}x{} is below 3x3", spec.width, spec.height)));
    }
    if !(spec.background > 0.0 && spec.background.is_finite()) {
        return Err(Error::Scene(format!("background depth {} is not positive", spec.background)));
    }
    spec.margin()?;
    for (i, p) in spec.primitives.iter().enumerate() {
        if let Primitive::Hemisphere { height, radius, .. } = *p {
            if !(height >= 0.0 && radius > 0.0) {
                return Err(Error::Scene(format!("cap {i} needs positive radius and height >= 0")));
            }
        }
    }
    if let Some(n) = &spec.noise {
        if !(n.sigma >= 0.0 && n.sigma.is_finite()) {
            return Err(Error::Scene(format!("noise sigma {} is negative", n.sigma)));
        }
    }
    let s = survey(spec);
    for (i, &(lo, hi)) in s.ranges.iter().enumerate().skip(1) {
        if lo > hi {
            return Err(Error::Scene(format!("primitive {} covers no pixel", i - 1)));
        }
        if !(lo > 0.0 && hi < spec.background) {
            return Err(Error::Scene(format!(
                "primitive {} spans depths [{lo}, {hi}], outside (0, background)",
                i - 1
            )));
        }
    }
    let mut gap = f64::INFINITY;
    for i in 0..s.ranges.len() {
        for j in i + 1..s.ranges.len() {
            let (a, b) = (s.ranges[i], s.ranges[j]);
            let g = (b.0 - a.1).max(a.0 - b.1);
            if g > 0.0 {
                gap = gap.min(g);
            } else if !(a.0 == a.1 && a == b) {
                return Err(Error::Scene(format!(
                    "surfaces {i} and {j} overlap in depth ([{}, {}] vs [{}, {}])",
                    a.0, a.1, b.0, b.1
                )));
            }
        }
    }
    let threshold = gap / 2.0;
    for (i, &step) in s.steps.iter().enumerate().skip(1) {
        if step >= threshold {
            return Err(Error::Scene(format!(
                "primitive {} changes depth by {step} between neighbours, not below the gap threshold {threshold}",
                i - 1
            )));
        }
    }
    Ok(threshold)
}

/// Pixels with a 4-neighbour farther than `own depth + threshold`.
pub fn depth_step_contours(depth: &DepthGrid, threshold: f64) -> EdgeMap {
    let (w, h) = (depth.width(), depth.height());
    EdgeMap::from_fn(w, h, |x, y| {
        if !depth.is_valid(x, y) {
            return false;
        }
        let d = depth.get(x, y);
        let farther = |nx: usize, ny: usize| depth.is_valid(nx, ny) && depth.get(nx, ny) > d + threshold;
        (x > 0 && farther(x - 1, y))
            || (x + 1 < w && farther(x + 1, y))
            || (y > 0 && farther(x, y - 1))
            || (y + 1 < h && farther(x, y + 1))
    })
}

pub fn render(spec: &SceneSpec) -> Result<SceneTruth> {
    let threshold = validate(spec)?;
    let (w, h) = (spec.width, spec.height);
    let mut depth = vec![spec.background; w * h];
    // 0 is the background, k the k-th primitive
    let mut owner = vec![0usize; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for (k, p) in spec.primitives.iter().enumerate() {
                if p.covers(x, y) {
                    let d = p.depth_at(x as f64, y as f64);
                    if d < depth[i] {
                        depth[i] = d;
                        owner[i] = k + 1;
                    }
                }
            }
        }
    }
    let depth = DepthGrid::from_values(w, h, depth)?;

    let mut normals = vec![[0.0, 0.0, -1.0]; w * h];
    let mut nmask = vec![true; w * h];
    for y in 0..h {
        let ty = taps(y, h);
        for x in 0..w {
            let tx = taps(x, w);
            let i = y * w + x;
            let o = owner[i];
            let stencil = [y * w + tx.lo, y * w + tx.hi, ty.lo * w + x, ty.hi * w + x];
            if stencil.iter().any(|&j| owner[j] != o) {
                nmask[i] = false;
                continue;
            }
            if o > 0 {
                let [gx, gy] = spec.primitives[o - 1].slope(x, y);
                let len = (gx * gx + gy * gy + 1.0).sqrt();
                normals[i] = [gx / len, gy / len, -1.0 / len];
            }
        }
    }
    let normals = NormalGrid::new(Grid::new(w, h, normals, nmask)?)?;
    let contours = depth_step_contours(&depth, threshold);
    Ok(SceneTruth {
        depth,
        normals,
        contours,
        mask: vec![true; w * h],
        gap_threshold: threshold,
    })
}

/// Moves every primitive `k` pixels right and renders the result.
pub fn shift_edges(spec: &SceneSpec, k: usize) -> Result<SceneTruth> {
    render(&spec.translated(k)?)
}

/// Simulated sensor depth: foreground depth bleeds `fatten` pixels
/// (Euclidean) across every occluding contour, then seeded Gaussian noise is
/// added. Samples pushed to non-positive values become invalid.
pub fn perturb(truth: &SceneTruth, noise: &Noise, seed: u64) -> Result<DepthGrid> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma {} is negative", noise.sigma)));
    }
    let d = &truth.depth;
    let (w, h) = (d.width(), d.height());
    let mut out = d.values().to_vec();
    let r = noise.fatten as isize;
    if r > 0 {
        for y in 0..h {
            for x in 0..w {
                if !truth.contours.get(x, y) {
                    continue;
                }
                let c = d.get(x, y);
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx * dx + dy * dy > r * r {
                            continue;
                        }
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if d.values()[j] > c + truth.gap_threshold && c < out[j] {
                            out[j] = c;
                        }
                    }
                }
            }
        }
    }
    if noise.sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        for v in out.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let mask: Vec<bool> = out
        .iter()
        .zip(d.mask())
        .map(|(v, &m)| m && *v > 0.0)
        .collect();
    DepthGrid::new(Grid::new(w, h, out, mask)?)
}

/// Renders a scene and applies its own noise settings, if any.
pub fn render_noisy(spec: &SceneSpec) -> Result<(SceneTruth, DepthGrid)> {
    let truth = render(spec)?;
    let noisy = match &spec.noise {
        Some(n) => perturb(&truth, n, spec.seed)?,
        None => truth.depth.clone(),
    };
    Ok((truth, noisy))
}

/// Seeded random scene: a background plane with one to four separated
/// primitives of every kind, at distinct depth levels half a meter apart.
pub fn random_scene(seed: u64, width: usize, height: usize) -> Result<SceneSpec> {
    if width < 48 || height < 48 {
        return Err(Error::Scene(format!("random scenes need at least 48x48, got {width}x{height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4usize);
    let mut levels = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
    levels.shuffle(&mut rng);
    let mut spec = SceneSpec::new(width, height, 4.0);
    spec.seed = seed;
    let mut boxes: Vec<(usize, usize, usize, usize)> = Vec::new();
    let max_side = (width.min(height) / 3).max(16);
    let mut attempts = 0;
    while spec.primitives.len() < n && attempts < 200 {
        attempts += 1;
        let side = rng.random_range(14..=max_side);
        let (bw, bh) = (side, rng.random_range(14..=max_side));
        let x0 = rng.random_range(6..width - bw - 6);
        let y0 = rng.random_range(6..height - bh - 6);
        let b = (x0, y0, x0 + bw, y0 + bh);
        // keep a few pixels between footprints
        let clear = boxes
            .iter()
            .all(|o| b.0 >= o.2 + 6 || o.0 >= b.2 + 6 || b.1 >= o.3 + 6 || o.1 >= b.3 + 6);
        if !clear {
            continue;
        }
        let depth = levels[spec.primitives.len()];
        let p = match rng.random_range(0..4) {
            0 => Primitive::Rect {
                x0: b.0,
                y0: b.1,
                x1: b.2,
                y1: b.3,
                depth,
            },
            1 => {
                let r = (bw.min(bh) as f64 - 1.0) / 2.0;
                Primitive::Disk {
                    cx: b.0 as f64 + r,
                    cy: b.1 as f64 + r,
                    radius: r,
                    depth,
                }
            }
            2 => {
                let span = bw.max(bh) as f64;
                Primitive::Slanted {
                    x0: b.0,
                    y0: b.1,
                    x1: b.2,
                    y1: b.3,
                    depth,
                    a: rng.random_range(-0.15..0.15) / span,
                    b: rng.random_range(-0.15..0.15) / span,
                }
            }
            _ => {
                let r = (bw.min(bh) as f64 - 1.0) / 2.0;
                Primitive::Hemisphere {
                    cx: b.0 as f64 + r,
                    cy: b.1 as f64 + r,
                    radius: r,
                    depth,
                    height: rng.random_range(0.02..0.08),
                }
            }
        };
        boxes.push(b);
        spec.primitives.push(p);
    }
    validate(&spec)?;
    Ok(spec)
}
