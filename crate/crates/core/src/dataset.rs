//! Detection dataset construction from segmented renderings (plant on
//! black) and seeded train/val/test splitting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::io::{load_image, save_image};
use crate::imagecore::{connected_components, mask_from_nonblack, Connectivity, RasterImage};
use crate::prompting::BoundingBox;
use crate::tiling::{preprocess_and_split, TilingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub tiling: TilingConfig,
    /// Brightest-channel value above which a pixel counts as plant.
    pub nonblack_threshold: u8,
    pub min_component_pixels: u64,
    pub connectivity: Connectivity,
    /// Keep patches without any box as negative examples.
    pub keep_negatives: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            tiling: TilingConfig::default(),
            nonblack_threshold: 0,
            min_component_pixels: 16,
            connectivity: Connectivity::Eight,
            keep_negatives: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub patch_id: String,
    pub boxes: Vec<BoundingBox>,
    pub patch_size: u32,
}

impl AnnotationRecord {
    /// One `0 cx cy w h` line per box, normalized by the patch size.
    pub fn to_yolo(&self) -> String {
        let s = self.patch_size as f64;
        let mut out = String::new();
        for b in &self.boxes {
            let cx = (b.x_min as f64 + b.x_max as f64 + 1.0) / 2.0 / s;
            let cy = (b.y_min as f64 + b.y_max as f64 + 1.0) / 2.0 / s;
            let _ = writeln!(out, "0 {cx:.6} {cy:.6} {:.6} {:.6}", b.width() as f64 / s, b.height() as f64 / s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionDataset {
    /// `(patch_id, pixels)` ordered by image id, then grid row and column.
    pub patches: Vec<(String, RasterImage)>,
    pub annotations: Vec<AnnotationRecord>,
}

impl DetectionDataset {
    pub fn patch_ids(&self) -> Vec<String> {
        self.patches.iter().map(|(id, _)| id.clone()).collect()
    }
}

fn annotate_image(image_id: &str, image: &RasterImage, config: &DatasetConfig) -> Result<Vec<(String, RasterImage, AnnotationRecord)>> {
    let (plan, patches) = preprocess_and_split(image, &config.tiling)?;
    let mut out = Vec::with_capacity(patches.len());
    for p in patches {
        let mask = mask_from_nonblack(&p.pixels, config.nonblack_threshold);
        let boxes: Vec<BoundingBox> = connected_components(&mask, config.connectivity)
            .into_iter()
            .filter(|c| c.pixel_count >= config.min_component_pixels)
            .map(|c| c.bbox)
            .collect();
        if boxes.is_empty() && !config.keep_negatives {
            continue;
        }
        let id = p.id(image_id);
        let record = AnnotationRecord {
            patch_id: id.clone(),
            boxes,
            patch_size: plan.patch_size,
        };
        out.push((id, p.pixels, record));
    }
    Ok(out)
}

/// Patches every segmented image and boxes its non-black components.
/// Images are processed in parallel; output order is by image id.
pub fn build_detection_dataset(images: &[(String, RasterImage)], config: &DatasetConfig) -> Result<DetectionDataset> {
    let mut order: Vec<&(String, RasterImage)> = images.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    if order.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate image id in dataset input".into()));
    }
    let per_image: Vec<_> = order
        .par_iter()
        .map(|(id, img)| annotate_image(id, img, config))
        .collect::<Result<_>>()?;
    let mut dataset = DetectionDataset {
        patches: Vec::new(),
        annotations: Vec::new(),
    };
    for (id, pixels, record) in per_image.into_iter().flatten() {
        dataset.patches.push((id, pixels));
        dataset.annotations.push(record);
    }
    Ok(dataset)
}

/// Loads segmented images keyed by file stem. Unreadable files are
/// skipped with a warning.
pub fn load_segmented(paths: &[impl AsRef<Path>]) -> Vec<(String, RasterImage)> {
    let mut out = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match load_image(path) {
            Ok(img) => out.push((id, img)),
            Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable image"),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl SplitManifest {
    pub fn split_of(&self, id: &str) -> Option<&'static str> {
        if self.train.iter().any(|x| x == id) {
            Some("train")
        } else if self.val.iter().any(|x| x == id) {
            Some("val")
        } else if self.test.iter().any(|x| x == id) {
            Some("test")
        } else {
            None
        }
    }
}

pub const PAPER_RATIOS: (f64, f64, f64) = (0.75, 0.20, 0.05);

/// Split sizes by largest remainder; fractional ties go to the earlier split.
pub fn split_counts(n: usize, ratios: (f64, f64, f64)) -> Result<[usize; 3]> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| x.is_nan() || x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got {r:?}"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("cannot split {n} patches three ways")));
    }
    let quotas: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    Ok(counts)
}

/// Seeded shuffle followed by a proportional partition. The result depends
/// only on the set of ids, the ratios and the seed.
pub fn split(patch_ids: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<SplitManifest> {
    let mut ids = patch_ids.to_vec();
    ids.sort();
    ids.dedup();
    let [train, val, _] = split_counts(ids.len(), ratios)?;
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = ids.split_off(train + val);
    let mut val = ids.split_off(train);
    let mut train = ids;
    train.sort();
    val.sort();
    test.sort();
    Ok(SplitManifest { train, val, test, seed })
}

/// Writes `images/{split}/{id}.png`, `labels/{split}/{id}.txt` and
/// `splits.json` under `root`.
pub fn write_dataset(root: &Path, dataset: &DetectionDataset, manifest: &SplitManifest) -> Result<()> {
    for split in ["train", "val", "test"] {
        fs::create_dir_all(root.join("images").join(split))?;
        fs::create_dir_all(root.join("labels").join(split))?;
    }
    let assignment: HashMap<&str, &str> = [("train", &manifest.train), ("val", &manifest.val), ("test", &manifest.test)]
        .into_iter()
        .flat_map(|(split, ids)| ids.iter().map(move |id| (id.as_str(), split)))
        .collect();
    dataset
        .patches
        .par_iter()
        .zip(&dataset.annotations)
        .try_for_each(|((id, pixels), record)| -> Result<()> {
            let split = *assignment
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("patch {id} missing from split manifest")))?;
            save_image(pixels, &root.join("images").join(split).join(format!("{id}.png")))?;
            fs::write(root.join("labels").join(split).join(format!("{id}.txt")), record.to_yolo())?;
            Ok(())
        })?;
    fs::write(root.join("splits.json"), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}
