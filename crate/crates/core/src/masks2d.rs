//! Binary rasters and the random 2D occluder generator.
//!
//! Occluders are the union of randomly placed lines, circles, and ellipses
//! (1 to 3 of each by default) followed by 3 to 7 rectangles that are
//! dilated with a square structuring element. Rasterization tests pixel
//! centers `(x + 0.5, y + 0.5)` against each shape, so masks are strictly
//! binary.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, shape};
use crate::io::pgm::GrayImage;
use crate::rng::rng_from_seed;
use crate::Result;

/// A row-major binary raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// An all-zero mask.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(param(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        Ok(Self { width, height, bits: vec![value; width * height] })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(param(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(shape(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(shape(format!(
                "mask dimensions differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// In-place logical OR.
    pub fn or_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// Morphological dilation with a `(2r+1)²` square structuring element.
    /// Pixels outside the raster count as unset.
    pub fn dilate(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        // separable: horizontal pass then vertical pass
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            let row = &self.bits[y * w..(y + 1) * w];
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                horiz[y * w + x] = row[lo..=hi].iter().any(|&b| b);
            }
        }
        let mut bits = vec![false; w * h];
        for x in 0..w {
            for y in 0..h {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius).min(h - 1);
                bits[y * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
            }
        }
        Self { width: w, height: h, bits }
    }

    /// 0 for unset, 255 for set.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Any nonzero sample is set.
    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        Self::from_bits(img.width, img.height, img.data.iter().map(|&v| v != 0).collect())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        self.to_gray().to_pgm()
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        Self::from_gray(&GrayImage::from_pgm(bytes)?)
    }
}

/// `obj AND NOT occ`, pixel-wise.
pub fn visible_mask(obj: &BinaryMask, occ: &BinaryMask) -> Result<BinaryMask> {
    obj.check_same_dims(occ)?;
    let bits = obj.bits.iter().zip(&occ.bits).map(|(&o, &c)| o && !c).collect();
    Ok(BinaryMask { width: obj.width, height: obj.height, bits })
}

/// Fraction of set pixels.
pub fn mask_ratio(mask: &BinaryMask) -> f64 {
    mask.count_ones() as f64 / (mask.width * mask.height) as f64
}

/// Three-level composite: visible 255, occluded 128, background 0.
pub fn composite(vis: &BinaryMask, occ: &BinaryMask) -> Result<GrayImage> {
    vis.check_same_dims(occ)?;
    let data = vis
        .bits
        .iter()
        .zip(&occ.bits)
        .map(|(&v, &o)| if v { 255 } else if o { 128 } else { 0 })
        .collect();
    Ok(GrayImage { width: vis.width, height: vis.height, data })
}

/// Inclusive integer range for shape counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

impl CountRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }
}

/// Inclusive real range, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRange {
    pub min: f64,
    pub max: f64,
}

impl SizeRange {
    fn validate(&self, what: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min < 0.0 || self.min > self.max {
            return Err(param(format!("{what} range [{}, {}] is invalid", self.min, self.max)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut crate::rng::Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionParams {
    pub n_lines: CountRange,
    pub n_circles: CountRange,
    pub n_ellipses: CountRange,
    pub n_rects: CountRange,
    /// Square dilation radius applied to rectangles. `None` scales 4 px at
    /// 512² to the raster's shorter side, rounded.
    pub dilation_radius: Option<usize>,
    /// Line thickness; default `[1, max(1, short/32)]`.
    pub line_width: Option<SizeRange>,
    /// Upper bound on any shape extent as a fraction of the shorter side.
    pub max_size_frac: f64,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            n_lines: CountRange::new(1, 3),
            n_circles: CountRange::new(1, 3),
            n_ellipses: CountRange::new(1, 3),
            n_rects: CountRange::new(3, 7),
            dilation_radius: None,
            line_width: None,
            max_size_frac: 0.5,
        }
    }
}

impl OcclusionParams {
    /// No shapes at all.
    pub fn empty() -> Self {
        let zero = CountRange::new(0, 0);
        Self { n_lines: zero, n_circles: zero, n_ellipses: zero, n_rects: zero, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("n_lines", self.n_lines),
            ("n_circles", self.n_circles),
            ("n_ellipses", self.n_ellipses),
            ("n_rects", self.n_rects),
        ] {
            if r.min > r.max {
                return Err(param(format!("{name} range {}..={} is empty", r.min, r.max)));
            }
        }
        if let Some(lw) = &self.line_width {
            lw.validate("line_width")?;
        }
        if !(self.max_size_frac > 0.0 && self.max_size_frac <= 1.0) {
            return Err(param(format!("max_size_frac {} not in (0, 1]", self.max_size_frac)));
        }
        Ok(())
    }

    pub fn dilation_for(&self, width: usize, height: usize) -> usize {
        self.dilation_radius
            .unwrap_or_else(|| (4.0 * width.min(height) as f64 / 512.0).round() as usize)
    }
}

/// A single occluder primitive in pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Capsule: points within `width / 2` of the segment.
    Line { x0: f64, y0: f64, x1: f64, y1: f64, width: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
    /// Rotated ellipse with semi-axes `a`, `b` and rotation `angle` (radians).
    Ellipse { cx: f64, cy: f64, a: f64, b: f64, angle: f64 },
    /// Axis-aligned, closed on all sides.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        match *self {
            Shape::Line { x0, y0, x1, y1, width } => {
                let (dx, dy) = (x1 - x0, y1 - y0);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 {
                    (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (x0 + t * dx - px, y0 + t * dy - py);
                let half = 0.5 * width;
                qx * qx + qy * qy <= half * half
            }
            Shape::Circle { cx, cy, r } => {
                let (dx, dy) = (px - cx, py - cy);
                dx * dx + dy * dy <= r * r
            }
            Shape::Ellipse { cx, cy, a, b, angle } => {
                if a <= 0.0 || b <= 0.0 {
                    return false;
                }
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (px - cx, py - cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => px >= x0 && px <= x1 && py >= y0 && py <= y1,
        }
    }

    /// Conservative pixel-space bounding box `(x0, y0, x1, y1)`.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Line { x0, y0, x1, y1, width } => {
                let h = 0.5 * width;
                (x0.min(x1) - h, y0.min(y1) - h, x0.max(x1) + h, y0.max(y1) + h)
            }
            Shape::Circle { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Shape::Ellipse { cx, cy, a, b, .. } => {
                let m = a.max(b);
                (cx - m, cy - m, cx + m, cy + m)
            }
            Shape::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        }
    }

    /// Sets every pixel whose center lies inside the shape.
    pub fn rasterize_into(&self, mask: &mut BinaryMask) {
        let (bx0, by0, bx1, by1) = self.bounds();
        let clamp = |v: f64, n: usize| -> usize { v.floor().clamp(0.0, n as f64) as usize };
        let (xa, xb) = (clamp(bx0 - 1.0, mask.width), clamp(bx1 + 1.0, mask.width));
        let (ya, yb) = (clamp(by0 - 1.0, mask.height), clamp(by1 + 1.0, mask.height));
        for y in ya..yb.min(mask.height) {
            for x in xa..xb.min(mask.width) {
                if self.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    mask.set(x, y, true);
                }
            }
        }
    }
}

/// A sampled shape together with the dilation applied to its raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedShape {
    pub shape: Shape,
    pub dilation: usize,
}

impl PlacedShape {
    pub fn rasterize(&self, width: usize, height: usize) -> Result<BinaryMask> {
        let mut m = BinaryMask::new(width, height)?;
        self.shape.rasterize_into(&mut m);
        Ok(m.dilate(self.dilation))
    }
}

fn sample_count(rng: &mut crate::rng::Rng, r: CountRange) -> u32 {
    rng.random_range(r.min..=r.max)
}

/// Draws the occluder shapes for `(width, height, params, seed)` without
/// rasterizing them. Order: lines, circles, ellipses, rectangles.
pub fn sample_occlusion_shapes(
    width: usize,
    height: usize,
    params: &OcclusionParams,
    seed: u64,
) -> Result<Vec<PlacedShape>> {
    if width == 0 || height == 0 {
        return Err(param(format!("mask dimensions must be positive, got {width}x{height}")));
    }
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let (w, h) = (width as f64, height as f64);
    let short = w.min(h);
    let cap = params.max_size_frac * short;
    let line_width = params
        .line_width
        .unwrap_or(SizeRange { min: 1.0, max: (short / 32.0).max(1.0) });
    let dilation = params.dilation_for(width, height);
    let mut shapes = Vec::new();
    let point = |rng: &mut crate::rng::Rng| (rng.random_range(0.0..w), rng.random_range(0.0..h));

    for _ in 0..sample_count(&mut rng, params.n_lines) {
        let (x0, y0) = point(&mut rng);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let len = rng.random_range(0.0..=cap);
        let width = line_width.sample(&mut rng);
        let shape = Shape::Line { x0, y0, x1: x0 + len * angle.cos(), y1: y0 + len * angle.sin(), width };
        shapes.push(PlacedShape { shape, dilation: 0 });
    }
    for _ in 0..sample_count(&mut rng, params.n_circles) {
        let (cx, cy) = point(&mut rng);
        let r = rng.random_range(1.0f64.min(cap / 2.0)..=cap / 2.0);
        shapes.push(PlacedShape { shape: Shape::Circle { cx, cy, r }, dilation: 0 });
    }
    for _ in 0..sample_count(&mut rng, params.n_ellipses) {
        let (cx, cy) = point(&mut rng);
        let lo = 1.0f64.min(cap / 2.0);
        let a = rng.random_range(lo..=cap / 2.0);
        let b = rng.random_range(lo..=cap / 2.0);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        shapes.push(PlacedShape { shape: Shape::Ellipse { cx, cy, a, b, angle }, dilation: 0 });
    }
    for _ in 0..sample_count(&mut rng, params.n_rects) {
        let (x0, y0) = point(&mut rng);
        let lo = 1.0f64.min(cap);
        let rw = rng.random_range(lo..=cap);
        let rh = rng.random_range(lo..=cap);
        let shape = Shape::Rect { x0, y0, x1: x0 + rw, y1: y0 + rh };
        shapes.push(PlacedShape { shape, dilation });
    }
    Ok(shapes)
}

/// Random occluder mask: the OR of the shapes drawn by
/// [`sample_occlusion_shapes`].
pub fn gen_random_occlusion(
    width: usize,
    height: usize,
    params: &OcclusionParams,
    seed: u64,
) -> Result<BinaryMask> {
    let shapes = sample_occlusion_shapes(width, height, params, seed)?;
    let mut mask = BinaryMask::new(width, height)?;
    let mut scratch = BinaryMask::new(width, height)?;
    for s in &shapes {
        if s.dilation == 0 {
            s.shape.rasterize_into(&mut mask);
        } else {
            scratch.bits.fill(false);
            s.shape.rasterize_into(&mut scratch);
            mask.or_assign(&scratch.dilate(s.dilation))?;
        }
    }
    Ok(mask)
}
