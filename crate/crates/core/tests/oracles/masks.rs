use occlusym::masks2d::{sample_occlusion_shapes, OcclusionParams, Shape};

/// Pixel-center membership, evaluated independently of the library.
pub fn inside(shape: &Shape, px: f64, py: f64) -> bool {
    match *shape {
        Shape::Line { x0, y0, x1, y1, width } => {
            let (dx, dy) = (x1 - x0, y1 - y0);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (qx, qy) = (x0 + t * dx - px, y0 + t * dy - py);
            qx * qx + qy * qy <= (0.5 * width) * (0.5 * width)
        }
        Shape::Circle { cx, cy, r } => (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r,
        Shape::Ellipse { cx, cy, a, b, angle } => {
            let (s, c) = angle.sin_cos();
            let (dx, dy) = (px - cx, py - cy);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            a > 0.0 && b > 0.0 && (u / a).powi(2) + (v / b).powi(2) <= 1.0
        }
        Shape::Rect { x0, y0, x1, y1 } => x0 <= px && px <= x1 && y0 <= py && py <= y1,
    }
}

/// Union of per-shape rasters, each dilated by brute force over the full
/// `(2r+1)²` neighbourhood.
pub fn union_oracle(w: usize, h: usize, params: &OcclusionParams, seed: u64) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for placed in sample_occlusion_shapes(w, h, params, seed).unwrap() {
        let raw: Vec<bool> = (0..w * h).map(|i| inside(&placed.shape, (i % w) as f64 + 0.5, (i / w) as f64 + 0.5)).collect();
        let r = placed.dilation as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let hit = (-r..=r).any(|dy| {
                    (-r..=r).any(|dx| {
                        let (xx, yy) = (x + dx, y + dy);
                        xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 && raw[(yy * w as i64 + xx) as usize]
                    })
                });
                out[(y * w as i64 + x) as usize] |= hit;
            }
        }
    }
    out
}
