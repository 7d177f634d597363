//! Deterministic synthetic herbarium sheets with known plant stencils.
//!
//! Plants are dark (luminance roughly 25 to 55) stems with attached
//! elliptical leaves, composited onto textured paper (roughly 185 to 230)
//! with a pale collection label in the bottom band.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imagecore::{BinaryMask, Raster, RasterImage};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSheet {
    /// Plant on paper.
    pub image: RasterImage,
    /// Ground-truth plant pixels.
    pub stencil: BinaryMask,
}

impl SyntheticSheet {
    /// Plant pixels on black, as produced by a segmentation export.
    pub fn segmented(&self) -> RasterImage {
        self.image.masked(&self.stencil).expect("same geometry")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SheetOptions {
    pub width: u32,
    pub height: u32,
    /// Separate plants laid out side by side.
    pub plants: u32,
}

impl Default for SheetOptions {
    fn default() -> Self {
        Self {
            width: 900,
            height: 1200,
            plants: 2,
        }
    }
}

/// Filled ellipse with semi-axes `(a, b)` rotated by `angle` radians.
pub fn ellipse(width: u32, height: u32, cx: f64, cy: f64, a: f64, b: f64) -> BinaryMask {
    rotated_ellipse(width, height, cx, cy, a, b, 0.0)
}

pub fn rotated_ellipse(width: u32, height: u32, cx: f64, cy: f64, a: f64, b: f64, angle: f64) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    fill_rotated_ellipse(&mut m, cx, cy, a, b, angle, (0, 0, width, height));
    m
}

/// Draws into `mask`, restricted to the half-open region `(x0, y0, x1, y1)`.
fn fill_rotated_ellipse(mask: &mut BinaryMask, cx: f64, cy: f64, a: f64, b: f64, angle: f64, region: (u32, u32, u32, u32)) {
    let (s, c) = angle.sin_cos();
    let r = a.max(b).ceil() as i64 + 1;
    let (x0, y0, x1, y1) = region;
    let xs = (cx as i64 - r).max(x0 as i64)..(cx as i64 + r + 1).min(x1 as i64);
    for y in (cy as i64 - r).max(y0 as i64)..(cy as i64 + r + 1).min(y1 as i64) {
        for x in xs.clone() {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
}

fn fill_disk(mask: &mut BinaryMask, cx: f64, cy: f64, r: f64, region: (u32, u32, u32, u32)) {
    fill_rotated_ellipse(mask, cx, cy, r, r, 0.0, region);
}

/// One connected plant inside `region`: a wandering stem with leaves.
fn draw_plant(mask: &mut BinaryMask, rng: &mut ChaCha8Rng, region: (u32, u32, u32, u32)) {
    let (x0, y0, x1, y1) = region;
    let (rw, rh) = ((x1 - x0) as f64, (y1 - y0) as f64);
    let margin = 6.0;
    let clamp_x = |x: f64| x.clamp(x0 as f64 + margin, x1 as f64 - margin);
    let thickness = rng.random_range(2.5..4.0);

    let steps = 40;
    let mut x = x0 as f64 + rw * rng.random_range(0.4..0.6);
    let mut y = y1 as f64 - margin;
    let top = y0 as f64 + rh * rng.random_range(0.05..0.2);
    let dy = (y - top) / steps as f64;
    let mut stem = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        stem.push((x, y));
        x = clamp_x(x + rng.random_range(-0.35..0.35) * dy);
        y -= dy;
    }
    for w in stem.windows(2) {
        let ((ax, ay), (bx, by)) = (w[0], w[1]);
        for t in 0..=8 {
            let t = t as f64 / 8.0;
            fill_disk(mask, ax + (bx - ax) * t, ay + (by - ay) * t, thickness, region);
        }
    }

    let leaves = rng.random_range(4..9);
    for _ in 0..leaves {
        let &(px, py) = &stem[rng.random_range(3..stem.len())];
        let a = rw * rng.random_range(0.08..0.16);
        let b = a * rng.random_range(0.3..0.5);
        let side = if rng.random_bool(0.5) { 0.0 } else { std::f64::consts::PI };
        let angle = side + rng.random_range(-0.9..0.9);
        let (s, c) = angle.sin_cos();
        // leaf base overlaps the stem
        let (cx, cy) = (px + c * a * 0.8, py + s * a * 0.8);
        fill_rotated_ellipse(mask, cx, cy, a, b, angle, region);
    }
}

fn paper(rng: &mut ChaCha8Rng, x: u32, y: u32, tint: f64) -> [u8; 3] {
    let wave = ((x as f64 * 0.013).sin() + (y as f64 * 0.009).cos()) * 6.0;
    let v = (207.0 + tint + wave + rng.random_range(-12.0..12.0)).round().clamp(185.0, 232.0) as i32;
    [v as u8, (v - 3) as u8, (v - 14) as u8]
}

fn plant_pixel(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let v: i32 = rng.random_range(30..48);
    [(v - 6) as u8, (v + 7) as u8, (v - 12) as u8]
}

/// Sheet with `options.plants` separated plants in the top three quarters
/// and a label in the bottom band.
pub fn herbarium_sheet(seed: u64, options: SheetOptions) -> SyntheticSheet {
    let SheetOptions { width, height, plants } = options;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stencil = BinaryMask::new(width, height);
    let band = height * 3 / 4;
    let n = plants.max(1);
    let gap = 12;
    let col = width / n;
    for i in 0..n {
        let region = (i * col + gap, gap, (i + 1) * col - gap, band);
        if region.2 > region.0 + 2 * gap {
            draw_plant(&mut stencil, &mut rng, region);
        }
    }
    composite(&mut rng, stencil, true)
}

/// Sheet holding a single convex blob, so that every patch sees at most
/// one connected piece of it.
pub fn single_blob_sheet(seed: u64, width: u32, height: u32) -> SyntheticSheet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let a = w * rng.random_range(0.15..0.35);
    let b = h * rng.random_range(0.15..0.35);
    let stencil = rotated_ellipse(
        width,
        height,
        w * rng.random_range(0.4..0.6),
        h * rng.random_range(0.4..0.6),
        a,
        b,
        rng.random_range(0.0..std::f64::consts::PI),
    );
    composite(&mut rng, stencil, false)
}

fn composite(rng: &mut ChaCha8Rng, stencil: BinaryMask, with_label: bool) -> SyntheticSheet {
    let (width, height) = stencil.dimensions();
    let tint = rng.random_range(-6.0..6.0);
    let label = (width * 55 / 100, height * 82 / 100, width * 95 / 100, height * 95 / 100);
    let image = RasterImage::from_fn(width, height, 3, |x, y| {
        if stencil.get(x, y) {
            return plant_pixel(rng);
        }
        let (lx0, ly0, lx1, ly1) = label;
        if with_label && (lx0..lx1).contains(&x) && (ly0..ly1).contains(&y) {
            let border = x == lx0 || x + 1 == lx1 || y == ly0 || y + 1 == ly1;
            return if border { [150, 150, 145] } else { [246, 245, 238] };
        }
        paper(rng, x, y, tint)
    });
    SyntheticSheet { image, stencil }
}

/// 80x60 patch with a dark ellipse ("shape", luminance 30) and an attached
/// lighter rectangle ("artifact", luminance 62) on paper. Returns the image,
/// the shape and the artifact pixels.
pub fn two_blob() -> (RasterImage, BinaryMask, BinaryMask) {
    let shape = ellipse(80, 60, 28.0, 30.0, 16.0, 12.0);
    let artifact = BinaryMask::from_fn(80, 60, |x, y| (42..=58).contains(&x) && (24..=36).contains(&y))
        .difference(&shape)
        .expect("same geometry");
    let img = RasterImage::from_fn(80, 60, 3, |x, y| {
        if shape.get(x, y) {
            [30, 30, 30]
        } else if artifact.get(x, y) {
            [62, 62, 62]
        } else {
            [210, 210, 205]
        }
    });
    (img, shape, artifact)
}
