//! Erosion and dilation with square structuring elements.
//!
//! Pixels outside the grid count as background for both operations, so
//! erosion shrinks foreground touching the border. Color images are
//! filtered per channel.

use serde::{Deserialize, Serialize};

use super::raster::Raster;
use crate::error::{Error, Result};

/// Square element of side `2 * radius + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    radius: u32,
}

impl StructuringElement {
    pub fn square(radius: u32) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidArgument("structuring element radius must be >= 1".into()));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn side(&self) -> u32 {
        2 * self.radius + 1
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self { radius: 1 }
    }
}

/// Opening parameters: `passes` erosions followed by `passes` dilations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphologyConfig {
    pub element: StructuringElement,
    pub passes: u32,
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self {
            element: StructuringElement::default(),
            passes: 1,
        }
    }
}

impl MorphologyConfig {
    pub fn disabled() -> Self {
        Self {
            element: StructuringElement::default(),
            passes: 0,
        }
    }

    pub fn apply<R>(&self, input: &R) -> R
    where
        R: Raster + Clone,
        R::Sample: Ord,
    {
        let mut out = input.clone();
        for _ in 0..self.passes {
            out = erode(&out, self.element);
        }
        for _ in 0..self.passes {
            out = dilate(&out, self.element);
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

impl Extremum {
    #[inline]
    fn pick<T: Ord>(self, a: T, b: T) -> T {
        match self {
            Extremum::Min => a.min(b),
            Extremum::Max => a.max(b),
        }
    }
}

fn filter_1d<T: Copy + Default + Ord>(src: &[T], dst: &mut [T], len: usize, stride: usize, radius: usize, op: Extremum) {
    let background = T::default();
    for i in 0..len {
        let mut acc = src[i * stride];
        if i < radius || i + radius >= len {
            acc = op.pick(acc, background);
        }
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(len - 1);
        for j in lo..=hi {
            acc = op.pick(acc, src[j * stride]);
        }
        dst[i * stride] = acc;
    }
}

fn separable<R>(input: &R, element: StructuringElement, op: Extremum) -> R
where
    R: Raster,
    R::Sample: Ord,
{
    let (w, h) = (input.width() as usize, input.height() as usize);
    let spp = input.samples_per_pixel();
    let radius = element.radius() as usize;
    let mut tmp = input.blank_like(input.width(), input.height());
    let mut out = input.blank_like(input.width(), input.height());

    let src = input.samples();
    let mid = tmp.samples_mut();
    let row_len = w * spp;
    for y in 0..h {
        let row = y * row_len;
        for c in 0..spp {
            filter_1d(&src[row + c..row + row_len], &mut mid[row + c..row + row_len], w, spp, radius, op);
        }
    }

    // Column pass: gather each column into a scratch buffer so the 1-d
    // filter sees contiguous data.
    let mid = tmp.samples();
    let dst = out.samples_mut();
    let mut col_in = vec![R::Sample::default(); h];
    let mut col_out = vec![R::Sample::default(); h];
    for x in 0..w * spp {
        for y in 0..h {
            col_in[y] = mid[y * row_len + x];
        }
        filter_1d(&col_in, &mut col_out, h, 1, radius, op);
        for y in 0..h {
            dst[y * row_len + x] = col_out[y];
        }
    }
    out
}

/// Minimum filter over the element's window (binary: AND).
pub fn erode<R>(input: &R, element: StructuringElement) -> R
where
    R: Raster,
    R::Sample: Ord,
{
    separable(input, element, Extremum::Min)
}

/// Maximum filter over the element's window (binary: OR).
pub fn dilate<R>(input: &R, element: StructuringElement) -> R
where
    R: Raster,
    R::Sample: Ord,
{
    separable(input, element, Extremum::Max)
}

pub fn opening<R>(input: &R, element: StructuringElement) -> R
where
    R: Raster,
    R::Sample: Ord,
{
    dilate(&erode(input, element), element)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{BinaryMask, RasterImage};

    fn brute<R>(input: &R, radius: u32, min: bool) -> Vec<R::Sample>
    where
        R: Raster,
        R::Sample: Ord,
    {
        let (w, h) = (input.width() as i64, input.height() as i64);
        let spp = input.samples_per_pixel();
        let r = radius as i64;
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                for c in 0..spp {
                    let mut vals = Vec::new();
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (xx, yy) = (x + dx, y + dy);
                            if xx < 0 || yy < 0 || xx >= w || yy >= h {
                                vals.push(R::Sample::default());
                            } else {
                                vals.push(input.samples()[(yy * w + xx) as usize * spp + c]);
                            }
                        }
                    }
                    out.push(if min {
                        *vals.iter().min().unwrap()
                    } else {
                        *vals.iter().max().unwrap()
                    });
                }
            }
        }
        out
    }

    fn square(n: u32, lo: u32, hi: u32) -> BinaryMask {
        BinaryMask::from_fn(n, n, |x, y| (lo..=hi).contains(&x) && (lo..=hi).contains(&y))
    }

    #[test]
    fn radius_zero_rejected() {
        assert!(StructuringElement::square(0).is_err());
        assert_eq!(StructuringElement::square(1).unwrap().side(), 3);
    }

    #[test]
    fn erode_empty_stays_empty() {
        let m = BinaryMask::new(9, 7);
        assert!(erode(&m, StructuringElement::default()).is_empty());
        assert!(dilate(&m, StructuringElement::default()).is_empty());
    }

    #[test]
    fn erode_isolated_pixel() {
        let m = square(5, 2, 2);
        assert!(erode(&m, StructuringElement::default()).is_empty());
    }

    #[test]
    fn erode_square_to_inner_square() {
        let m = square(7, 1, 5);
        let out = erode(&m, StructuringElement::default());
        assert_eq!(out, square(7, 2, 4));
        assert_eq!(out.bits(), brute(&m, 1, true).as_slice());
    }

    #[test]
    fn dilate_pixel_to_square() {
        let m = square(5, 2, 2);
        let out = dilate(&m, StructuringElement::default());
        assert_eq!(out, square(5, 1, 3));
        assert_eq!(out.bits(), brute(&m, 1, false).as_slice());
    }

    #[test]
    fn erosion_shrinks_at_border() {
        let m = BinaryMask::full(4, 4);
        let out = erode(&m, StructuringElement::default());
        assert_eq!(out, square(4, 1, 2));
    }

    #[test]
    fn gray_and_color_match_brute_force() {
        let gray = RasterImage::from_fn(11, 9, 1, |x, y| [((x * 31 + y * 17) % 256) as u8, 0, 0]);
        let color = RasterImage::from_fn(9, 6, 3, |x, y| {
            [((x * 31) % 256) as u8, ((y * 57) % 256) as u8, ((x * y * 7) % 256) as u8]
        });
        for r in 1..=2 {
            let se = StructuringElement::square(r).unwrap();
            assert_eq!(erode(&gray, se).data(), brute(&gray, r, true).as_slice());
            assert_eq!(dilate(&gray, se).data(), brute(&gray, r, false).as_slice());
            assert_eq!(erode(&color, se).data(), brute(&color, r, true).as_slice());
            assert_eq!(dilate(&color, se).data(), brute(&color, r, false).as_slice());
        }
    }

    #[test]
    fn disabled_config_is_identity() {
        let m = square(6, 1, 1);
        assert_eq!(MorphologyConfig::disabled().apply(&m), m);
        assert!(MorphologyConfig::default().apply(&m).is_empty());
    }
}
