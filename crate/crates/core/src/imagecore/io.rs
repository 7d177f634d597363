//! PNG/JPEG loading and saving.
//!
//! Masks are stored as single-channel 8-bit PNG with 0 = background and
//! 255 = foreground; any nonzero value reads as foreground.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::raster::{BinaryMask, Raster, RasterImage};
use crate::error::{Error, Result};

fn from_dynamic(img: DynamicImage) -> Result<RasterImage> {
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(g) => RasterImage::new(w, h, 1, g.into_raw()),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            RasterImage::new(w, h, 1, img.to_luma8().into_raw())
        }
        other => RasterImage::new(w, h, 3, other.to_rgb8().into_raw()),
    }
}

fn to_dynamic(image: &RasterImage) -> DynamicImage {
    let (w, h) = (image.width(), image.height());
    match image.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, image.data().to_vec()).expect("geometry")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, image.data().to_vec()).expect("geometry")),
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_image(path: &Path) -> Result<RasterImage> {
    let img = image::open(path).map_err(image_err(path))?;
    from_dynamic(img)
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let img = image::load_from_memory(bytes).map_err(image_err(Path::new("<memory>")))?;
    from_dynamic(img)
}

/// Saves as PNG or JPEG according to the file extension.
pub fn save_image(image: &RasterImage, path: &Path) -> Result<()> {
    to_dynamic(image).save(path).map_err(image_err(path))
}

pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_dynamic(image)
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(image_err(Path::new("<memory>")))?;
    Ok(buf.into_inner())
}

pub fn mask_to_image(mask: &BinaryMask) -> RasterImage {
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    RasterImage::new(mask.width(), mask.height(), 1, data).expect("mask geometry")
}

fn image_to_mask(image: &RasterImage) -> BinaryMask {
    super::raster::mask_from_nonblack(image, 0)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    Ok(image_to_mask(&load_image(path)?))
}

pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    Ok(image_to_mask(&decode_image(bytes)?))
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    save_image(&mask_to_image(mask), path)
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    encode_png(&mask_to_image(mask))
}
