//! Taxon heatmaps, plant coverage statistics and crop-to-content.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Raster, RasterImage};
use crate::prompting::BoundingBox;
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Center each mask on the canvas (padding or cropping evenly).
    #[default]
    Center,
    /// Top-left corners coincide.
    None,
}

/// Per-pixel foreground frequency over a set of aligned masks.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap<T> {
    pub width: u32,
    pub height: u32,
    pub values: Vec<T>,
    pub sample_count: usize,
}

impl<T: Scalar> HeatMap<T> {
    pub fn value(&self, x: u32, y: u32) -> T {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// 8-bit index into [`HEAT_RAMP`] per pixel.
    pub fn quantize(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|v| (v.to_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn render(&self) -> RasterImage {
        let mut data = Vec::with_capacity(self.values.len() * 3);
        for i in self.quantize() {
            data.extend_from_slice(&HEAT_RAMP[i as usize]);
        }
        RasterImage::new(self.width, self.height, 3, data).expect("heatmap geometry")
    }

    /// Row-major little-endian `f32` values.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| (v.to_f64() as f32).to_le_bytes()).collect()
    }

    /// Writes `<path>` (color PNG) and `<path>.f32` (raw values).
    pub fn save(&self, png_path: &Path) -> Result<()> {
        crate::imagecore::io::save_image(&self.render(), png_path)?;
        let mut sidecar = png_path.as_os_str().to_owned();
        sidecar.push(".f32");
        fs::write(sidecar, self.to_f32_bytes())?;
        Ok(())
    }
}

/// Black → red → yellow → white lookup table used for heatmap PNGs.
pub static HEAT_RAMP: [[u8; 3]; 256] = build_ramp();

const fn build_ramp() -> [[u8; 3]; 256] {
    let mut lut = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        let v = i as i32 * 3;
        lut[i] = [clamp_u8(v), clamp_u8(v - 255), clamp_u8(v - 510)];
        i += 1;
    }
    lut
}

const fn clamp_u8(v: i32) -> u8 {
    if v < 0 {
        0
    } else if v > 255 {
        255
    } else {
        v as u8
    }
}

fn placement(canvas: u32, size: u32, alignment: Alignment) -> i64 {
    match alignment {
        Alignment::Center => (canvas as i64 - size as i64).div_euclid(2),
        Alignment::None => 0,
    }
}

/// Aggregates masks onto a common canvas. The canvas defaults to the
/// largest width and height among the masks.
pub fn heatmap<T: Scalar>(masks: &[BinaryMask], canvas: Option<(u32, u32)>, alignment: Alignment) -> Result<HeatMap<T>> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("heatmap needs at least one mask"));
    }
    let (cw, ch) = canvas.unwrap_or_else(|| {
        (
            masks.iter().map(|m| m.width()).max().unwrap_or(1),
            masks.iter().map(|m| m.height()).max().unwrap_or(1),
        )
    });
    if cw == 0 || ch == 0 {
        return Err(Error::InvalidArgument("heatmap canvas must be non-empty".into()));
    }
    let mut counts = vec![0u64; cw as usize * ch as usize];
    for m in masks {
        let ox = placement(cw, m.width(), alignment);
        let oy = placement(ch, m.height(), alignment);
        for y in 0..m.height() {
            let cy = oy + y as i64;
            if cy < 0 || cy >= ch as i64 {
                continue;
            }
            for x in 0..m.width() {
                let cx = ox + x as i64;
                if cx >= 0 && cx < cw as i64 && m.get(x, y) {
                    counts[cy as usize * cw as usize + cx as usize] += 1;
                }
            }
        }
    }
    let n = masks.len() as u64;
    Ok(HeatMap {
        width: cw,
        height: ch,
        values: counts.into_iter().map(|c| T::from_ratio(c, n)).collect(),
        sample_count: masks.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStat<T> {
    pub taxon: String,
    pub plant_pct: T,
    pub background_pct: T,
    pub image_count: usize,
}

/// Mean plant coverage per taxon in percent, sorted by descending plant
/// coverage (ties by taxon name).
pub fn coverage<T: Scalar>(groups: &[(String, Vec<BinaryMask>)]) -> Result<Vec<CoverageStat<T>>> {
    let mut out = Vec::with_capacity(groups.len());
    for (taxon, masks) in groups {
        let fractions = masks.iter().map(|m| T::from_ratio(m.count(), m.area()));
        let plant = mean(fractions).ok_or(Error::EmptyInput("coverage group without masks"))? * T::hundred();
        out.push(CoverageStat {
            taxon: taxon.clone(),
            plant_pct: plant,
            background_pct: T::hundred() - plant,
            image_count: masks.len(),
        });
    }
    out.sort_by(|a, b| {
        b.plant_pct
            .partial_cmp(&a.plant_pct)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.taxon.cmp(&b.taxon))
    });
    Ok(out)
}

/// `taxon,n,plant_pct,background_pct` with two-decimal percentages.
pub fn write_coverage<T: Scalar, W: Write>(stats: &[CoverageStat<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["taxon", "n", "plant_pct", "background_pct"])?;
    for s in stats {
        w.write_record([
            s.taxon.clone(),
            s.image_count.to_string(),
            format!("{:.2}", s.plant_pct.to_f64()),
            format!("{:.2}", s.background_pct.to_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropOptions {
    pub margin: u32,
    /// Black out pixels outside the mask.
    pub zero_background: bool,
}

impl Default for CropOptions {
    fn default() -> Self {
        Self {
            margin: 0,
            zero_background: true,
        }
    }
}

/// Crops image and mask to the mask's tight box grown by `margin` and
/// clamped to the image.
pub fn crop_to_content(image: &RasterImage, mask: &BinaryMask, options: CropOptions) -> Result<(RasterImage, BinaryMask, BoundingBox)> {
    mask.ensure_dimensions(image.dimensions())?;
    let tight = mask
        .foreground_bbox()
        .ok_or(Error::EmptyInput("crop_to_content needs a non-empty mask"))?;
    let m = options.margin;
    let bbox = BoundingBox::new(
        tight.x_min.saturating_sub(m),
        tight.y_min.saturating_sub(m),
        tight.x_max.saturating_add(m).min(image.width() - 1),
        tight.y_max.saturating_add(m).min(image.height() - 1),
    );
    let cropped_mask = mask.crop_box(&bbox);
    let mut cropped = image.crop_box(&bbox);
    if options.zero_background {
        cropped = cropped.masked(&cropped_mask)?;
    }
    Ok((cropped, cropped_mask, bbox))
}
