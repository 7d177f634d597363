//! Patch-size selection, patch grids and reconstruction.
//!
//! Tiles never overlap. Images are padded with background at the right and
//! bottom edges so that every tile has the same square size; stitching
//! drops the padding again.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::io::save_image;
use crate::imagecore::{BinaryMask, MorphologyConfig, Raster, RasterImage};

pub const PATCH_SIZES: [u32; 3] = [1024, 512, 256];

/// Largest patch size `s` with `width / s > 3`, falling back to 256.
pub fn select_patch_size(width: u32) -> u32 {
    // width / s > 3  <=>  width > 3 * s  (exact in integers)
    if width > 3 * 1024 {
        1024
    } else if width > 3 * 512 {
        512
    } else {
        256
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchPlan {
    pub patch_size: u32,
    pub cols: u32,
    pub rows: u32,
    pub pad_right: u32,
    pub pad_bottom: u32,
    pub source_width: u32,
    pub source_height: u32,
}

impl PatchPlan {
    pub fn new(width: u32, height: u32, patch_size: u32) -> Result<Self> {
        if width == 0 || height == 0 || patch_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "plan needs positive sizes, got {width}x{height} / {patch_size}"
            )));
        }
        let cols = width.div_ceil(patch_size);
        let rows = height.div_ceil(patch_size);
        Ok(Self {
            patch_size,
            cols,
            rows,
            pad_right: cols * patch_size - width,
            pad_bottom: rows * patch_size - height,
            source_width: width,
            source_height: height,
        })
    }

    /// Plan with the patch size chosen from the image width.
    pub fn for_dimensions(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, select_patch_size(width))
    }

    pub fn patch_count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    /// Top-left corner of a tile in source coordinates.
    pub fn origin(&self, row: u32, col: u32) -> (u32, u32) {
        (col * self.patch_size, row * self.patch_size)
    }

    /// Grid cell (row, col) covering a source pixel.
    pub fn cell_of(&self, x: u32, y: u32) -> (u32, u32) {
        (y / self.patch_size, x / self.patch_size)
    }

    /// Grid cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
    }

    fn check_source<R: Raster>(&self, raster: &R) -> Result<()> {
        if raster.dimensions() != (self.source_width, self.source_height) {
            return Err(Error::mismatch((self.source_width, self.source_height), raster.dimensions()));
        }
        Ok(())
    }
}

/// Free-function form of [`PatchPlan::new`].
pub fn make_plan(width: u32, height: u32, patch_size: u32) -> Result<PatchPlan> {
    PatchPlan::new(width, height, patch_size)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch<R = RasterImage> {
    pub grid_row: u32,
    pub grid_col: u32,
    pub pixels: R,
}

impl<R> Patch<R> {
    pub fn id(&self, image_id: &str) -> String {
        patch_id(image_id, self.grid_row, self.grid_col)
    }
}

pub fn patch_id(image_id: &str, row: u32, col: u32) -> String {
    format!("{image_id}_r{row}_c{col}")
}

/// Cuts `raster` into `plan.cols * plan.rows` tiles in row-major order.
pub fn split<R: Raster>(raster: &R, plan: &PatchPlan) -> Result<Vec<Patch<R>>> {
    plan.check_source(raster)?;
    Ok(plan
        .cells()
        .map(|(row, col)| {
            let (x, y) = plan.origin(row, col);
            Patch {
                grid_row: row,
                grid_col: col,
                pixels: raster.window(x, y, plan.patch_size, plan.patch_size),
            }
        })
        .collect())
}

/// Reassembles row-major tiles into a `source_width`x`source_height` raster.
pub fn stitch<R: Raster>(tiles: &[R], plan: &PatchPlan) -> Result<R> {
    if tiles.len() != plan.patch_count() {
        return Err(Error::PatchCount {
            expected: plan.patch_count(),
            actual: tiles.len(),
        });
    }
    let Some(first) = tiles.first() else {
        return Err(Error::EmptyInput("stitch needs at least one tile"));
    };
    for tile in tiles {
        if tile.dimensions() != (plan.patch_size, plan.patch_size) {
            return Err(Error::mismatch((plan.patch_size, plan.patch_size), tile.dimensions()));
        }
        if tile.samples_per_pixel() != first.samples_per_pixel() {
            return Err(Error::InvalidRaster("tiles disagree on channel count".into()));
        }
    }
    let mut out = first.blank_like(plan.source_width, plan.source_height);
    for ((row, col), tile) in plan.cells().zip(tiles) {
        let (x, y) = plan.origin(row, col);
        out.paste(tile, x, y);
    }
    Ok(out)
}

/// Stitches binary masks; convenience wrapper over [`stitch`].
pub fn stitch_masks(masks: &[BinaryMask], plan: &PatchPlan) -> Result<BinaryMask> {
    stitch(masks, plan)
}

/// Morphological preprocessing followed by width-driven patching.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TilingConfig {
    pub morphology: MorphologyConfig,
    /// Overrides [`select_patch_size`] when set.
    pub patch_size: Option<u32>,
}

impl TilingConfig {
    pub fn plan_for(&self, width: u32, height: u32) -> Result<PatchPlan> {
        match self.patch_size {
            Some(s) => PatchPlan::new(width, height, s),
            None => PatchPlan::for_dimensions(width, height),
        }
    }
}

/// Opening, patch-size selection and split in one call.
pub fn preprocess_and_split(image: &RasterImage, config: &TilingConfig) -> Result<(PatchPlan, Vec<Patch>)> {
    let cleaned = config.morphology.apply(image);
    let plan = config.plan_for(image.width(), image.height())?;
    let patches = split(&cleaned, &plan)?;
    Ok((plan, patches))
}

/// Writes `{image_id}_r{row}_c{col}.png` for each patch plus the
/// `{image_id}.plan.json` sidecar.
pub fn dump_patches(dir: &Path, image_id: &str, plan: &PatchPlan, patches: &[Patch]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for p in patches {
        save_image(&p.pixels, &dir.join(format!("{}.png", p.id(image_id))))?;
    }
    let json = serde_json::to_string_pretty(plan)?;
    fs::write(dir.join(format!("{image_id}.plan.json")), json)?;
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<PatchPlan> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
