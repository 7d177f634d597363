use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::BoundingBox;

/// Row-major grid of samples with a fixed number of samples per pixel.
///
/// Implemented by [`RasterImage`] (u8 samples, 1 or 3 per pixel) and
/// [`BinaryMask`] (bool samples, 1 per pixel) so that tiling and cropping
/// are written once.
pub trait Raster: Sized {
    type Sample: Copy + Default + PartialEq + Send + Sync;

    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn samples_per_pixel(&self) -> usize;
    fn samples(&self) -> &[Self::Sample];
    fn samples_mut(&mut self) -> &mut [Self::Sample];

    /// A background-filled raster with the same pixel layout as `self`.
    fn blank_like(&self, width: u32, height: u32) -> Self;

    fn dimensions(&self) -> (u32, u32) {
        (self.width(), self.height())
    }

    /// Copies the `width`x`height` window whose top-left corner is at
    /// (`x`, `y`). Parts of the window outside `self` are background.
    fn window(&self, x: u32, y: u32, width: u32, height: u32) -> Self {
        let mut out = self.blank_like(width, height);
        let spp = self.samples_per_pixel();
        let copy_w = self.width().saturating_sub(x).min(width) as usize;
        let copy_h = self.height().saturating_sub(y).min(height);
        if copy_w == 0 {
            return out;
        }
        let src_stride = self.width() as usize * spp;
        let dst_stride = width as usize * spp;
        let src = self.samples();
        let dst = out.samples_mut();
        for row in 0..copy_h {
            let s = (y + row) as usize * src_stride + x as usize * spp;
            let d = row as usize * dst_stride;
            dst[d..d + copy_w * spp].copy_from_slice(&src[s..s + copy_w * spp]);
        }
        out
    }

    /// Writes `tile` with its top-left corner at (`x`, `y`), discarding the
    /// parts that fall outside `self`.
    fn paste(&mut self, tile: &Self, x: u32, y: u32) {
        let spp = self.samples_per_pixel();
        debug_assert_eq!(spp, tile.samples_per_pixel());
        let copy_w = self.width().saturating_sub(x).min(tile.width()) as usize;
        let copy_h = self.height().saturating_sub(y).min(tile.height());
        if copy_w == 0 {
            return;
        }
        let dst_stride = self.width() as usize * spp;
        let src_stride = tile.width() as usize * spp;
        let src = tile.samples();
        let dst = self.samples_mut();
        for row in 0..copy_h {
            let d = (y + row) as usize * dst_stride + x as usize * spp;
            let s = row as usize * src_stride;
            dst[d..d + copy_w * spp].copy_from_slice(&src[s..s + copy_w * spp]);
        }
    }

    fn crop_box(&self, bbox: &BoundingBox) -> Self {
        self.window(bbox.x_min, bbox.y_min, bbox.width(), bbox.height())
    }
}

/// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("image must be non-empty, got {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!("channels must be 1 or 3, got {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidRaster(format!("expected {expected} samples, got {}", data.len())));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// # Panics
    /// If the dimensions are zero or `channels` is not 1 or 3.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Self {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len]).expect("valid image geometry")
    }

    pub fn from_fn(width: u32, height: u32, channels: u8, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut img = Self::filled(width, height, channels, 0);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                img.set_pixel(x, y, &px[..channels as usize]);
            }
        }
        img
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        self.data[i..i + c].copy_from_slice(&value[..c]);
    }

    /// Integer BT.601 luma of one pixel.
    pub fn luminance(&self, x: u32, y: u32) -> u8 {
        let p = self.pixel(x, y);
        match p {
            [g] => *g,
            [r, g, b] => ((299 * *r as u32 + 587 * *g as u32 + 114 * *b as u32 + 500) / 1000) as u8,
            _ => unreachable!("channels are 1 or 3"),
        }
    }

    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width as usize * self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                data.push(self.luminance(x, y));
            }
        }
        RasterImage::new(self.width, self.height, 1, data).expect("same geometry")
    }

    /// Copy of `self` with every pixel outside `mask` set to black.
    pub fn masked(&self, mask: &BinaryMask) -> Result<RasterImage> {
        mask.ensure_dimensions(self.dimensions())?;
        let c = self.channels as usize;
        let mut out = self.clone();
        for (px, &on) in out.data.chunks_exact_mut(c).zip(mask.bits()) {
            if !on {
                px.fill(0);
            }
        }
        Ok(out)
    }
}

impl Raster for RasterImage {
    type Sample = u8;

    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn samples_per_pixel(&self) -> usize {
        self.channels as usize
    }
    fn samples(&self) -> &[u8] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }
    fn blank_like(&self, width: u32, height: u32) -> Self {
        RasterImage::filled(width, height, self.channels, 0)
    }
}

/// Foreground (plant) / background flags, row-major.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("foreground", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidRaster(format!(
                "expected {} mask bits, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = y as usize * self.width as usize + x as usize;
        self.bits[i] = value;
    }

    pub fn fill_box(&mut self, bbox: &BoundingBox, value: bool) {
        for y in bbox.y_min..=bbox.y_max.min(self.height.saturating_sub(1)) {
            for x in bbox.x_min..=bbox.x_max.min(self.width.saturating_sub(1)) {
                self.set(x, y, value);
            }
        }
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        other.ensure_dimensions(self.dimensions())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight inclusive bounding box of the foreground, `None` if empty.
    pub fn foreground_bbox(&self) -> Option<BoundingBox> {
        let mut bbox: Option<BoundingBox> = None;
        for y in 0..self.height {
            let row = &self.bits[y as usize * self.width as usize..(y as usize + 1) * self.width as usize];
            let Some(first) = row.iter().position(|&b| b) else {
                continue;
            };
            let last = row.iter().rposition(|&b| b).unwrap_or(first);
            let b = BoundingBox::new(first as u32, y, last as u32, y);
            bbox = Some(match bbox {
                Some(acc) => acc.hull(&b),
                None => b,
            });
        }
        bbox
    }

    /// Foreground pixel count inside an inclusive box (clipped to the mask).
    pub fn count_in_box(&self, bbox: &BoundingBox) -> u64 {
        if bbox.x_min >= self.width || bbox.y_min >= self.height {
            return 0;
        }
        let x1 = bbox.x_max.min(self.width - 1) as usize;
        let y1 = bbox.y_max.min(self.height - 1);
        let mut n = 0u64;
        for y in bbox.y_min..=y1 {
            let row = y as usize * self.width as usize;
            n += self.bits[row + bbox.x_min as usize..=row + x1].iter().filter(|&&b| b).count() as u64;
        }
        n
    }

    pub(crate) fn ensure_dimensions(&self, expected: (u32, u32)) -> Result<()> {
        if self.dimensions() != expected {
            return Err(Error::mismatch(expected, self.dimensions()));
        }
        Ok(())
    }
}

impl Raster for BinaryMask {
    type Sample = bool;

    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn samples_per_pixel(&self) -> usize {
        1
    }
    fn samples(&self) -> &[bool] {
        &self.bits
    }
    fn samples_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }
    fn blank_like(&self, width: u32, height: u32) -> Self {
        BinaryMask::new(width, height)
    }
}

/// Pixel is foreground iff its brightest channel exceeds `threshold`.
pub fn mask_from_nonblack(image: &RasterImage, threshold: u8) -> BinaryMask {
    let c = image.channels() as usize;
    let bits = image
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().copied().max().unwrap_or(0) > threshold)
        .collect();
    BinaryMask::from_bits(image.width(), image.height(), bits).expect("same geometry")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_invariants_are_checked() {
        assert!(RasterImage::new(0, 4, 1, vec![]).is_err());
        assert!(RasterImage::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(RasterImage::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(RasterImage::new(2, 2, 3, vec![0; 12]).is_ok());
        assert!(BinaryMask::from_bits(3, 3, vec![false; 8]).is_err());
    }

    #[test]
    fn nonblack_all_black_is_empty() {
        let img = RasterImage::filled(8, 6, 3, 0);
        assert!(mask_from_nonblack(&img, 0).is_empty());
    }

    #[test]
    fn nonblack_single_white_pixel() {
        let mut img = RasterImage::filled(8, 6, 3, 0);
        img.set_pixel(5, 2, &[255, 255, 255]);
        let m = mask_from_nonblack(&img, 0);
        assert_eq!(m.count(), 1);
        assert!(m.get(5, 2));
    }

    #[test]
    fn nonblack_recovers_paste_stencil() {
        let stencil = BinaryMask::from_fn(40, 30, |x, y| (x * 7 + y * 3) % 5 == 0 || (x > 10 && x < 20));
        let img = RasterImage::from_fn(40, 30, 3, |x, y| {
            if stencil.get(x, y) {
                // plant colors include channels that are zero
                [((x * 13) % 200 + 1) as u8, 0, (y % 3) as u8]
            } else {
                [0, 0, 0]
            }
        });
        assert_eq!(mask_from_nonblack(&img, 0), stencil);
    }

    #[test]
    fn window_pads_with_background() {
        let img = RasterImage::filled(3, 2, 1, 9);
        let w = img.window(2, 1, 3, 3);
        assert_eq!(w.data(), &[9, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn bbox_and_count_in_box() {
        let mut m = BinaryMask::new(10, 10);
        m.set(2, 3, true);
        m.set(7, 5, true);
        let b = m.foreground_bbox().unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (2, 3, 7, 5));
        assert_eq!(m.count_in_box(&b), 2);
        assert_eq!(m.count_in_box(&BoundingBox::new(0, 0, 2, 3)), 1);
    }
}
