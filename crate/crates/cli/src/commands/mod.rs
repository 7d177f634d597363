pub mod analytics;
pub mod dataset;
pub mod eval;
pub mod ratio;
pub mod segment;
pub mod serve;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use plantsam_core::imagecore::{MorphologyConfig, StructuringElement};
use plantsam_core::prompting::DetectorConfig;
use plantsam_core::{Connectivity, TilingConfig};

use crate::Common;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Image files in `input` (or `input` itself), sorted by path.
pub fn discover_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(input).with_context(|| format!("reading {}", input.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `{dir}/{stem}.png`, the mask matching an image.
pub fn mask_for(dir: &Path, image: &Path) -> PathBuf {
    dir.join(format!("{}.png", stem(image)))
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub input: String,
    pub error: String,
}

/// Run summary; printed as JSON with `--json`.
#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub command: String,
    pub succeeded: usize,
    pub failed: Vec<Failure>,
    pub items: Vec<Value>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub summary: serde_json::Map<String, Value>,
    #[serde(skip)]
    lines: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Self::default()
        }
    }

    /// Human-readable line, shown when not in JSON mode.
    pub fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), json!(value));
    }

    /// Prints the report and returns the exit code: 0 unless inputs were
    /// given and every one of them failed.
    pub fn finish(self, common: &Common) -> i32 {
        if common.json {
            println!("{}", serde_json::to_string_pretty(&self).expect("report serializes"));
        } else {
            for l in &self.lines {
                println!("{l}");
            }
            if !self.failed.is_empty() {
                println!("{} succeeded, {} failed", self.succeeded, self.failed.len());
            }
        }
        if !self.failed.is_empty() && self.succeeded == 0 {
            1
        } else {
            0
        }
    }
}

/// Applies `f` to every input in parallel and returns the successes in
/// input order. Without `--keep-going` the first failure aborts.
pub fn batch<T: Send>(
    inputs: &[PathBuf],
    common: &Common,
    report: &mut Report,
    f: impl Fn(&Path) -> Result<T> + Sync,
) -> Result<Vec<(PathBuf, T)>> {
    let out = batch_items(inputs, |p| p.display().to_string(), common, report, |p| f(p))?;
    Ok(out.into_iter().map(|(p, v)| (p.clone(), v)).collect())
}

/// [`batch`] over arbitrary items, labelled by `label` in diagnostics.
pub fn batch_items<'a, I: Sync, T: Send>(
    items: &'a [I],
    label: impl Fn(&I) -> String,
    common: &Common,
    report: &mut Report,
    f: impl Fn(&I) -> Result<T> + Sync,
) -> Result<Vec<(&'a I, T)>> {
    let results: Vec<Result<T>> = items.par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(results.len());
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(v) => {
                report.succeeded += 1;
                out.push((item, v));
            }
            Err(e) if common.keep_going => {
                eprintln!("error: {}: {e:#}", label(item));
                report.failed.push(Failure {
                    input: label(item),
                    error: format!("{e:#}"),
                });
            }
            Err(e) => return Err(e.context(label(item))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConnectivityArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Four => Connectivity::Four,
            ConnectivityArg::Eight => Connectivity::Eight,
        }
    }
}

/// Preprocessing and patching flags.
#[derive(Debug, Clone, Args)]
pub struct TilingFlags {
    /// Radius of the square opening element; 0 disables the opening.
    #[arg(long, default_value_t = 1, env = "PLANTSAM_MORPHOLOGY_RADIUS")]
    pub morphology_radius: u32,
    /// Fixed patch size instead of the width-based choice (256, 512 or 1024).
    #[arg(long, env = "PLANTSAM_PATCH_SIZE")]
    pub patch_size: Option<u32>,
}

impl TilingFlags {
    pub fn config(&self) -> Result<TilingConfig> {
        let morphology = if self.morphology_radius == 0 {
            MorphologyConfig::disabled()
        } else {
            MorphologyConfig {
                element: StructuringElement::square(self.morphology_radius)?,
                ..MorphologyConfig::default()
            }
        };
        if let Some(s) = self.patch_size {
            if s == 0 {
                bail!("--patch-size must be positive");
            }
        }
        Ok(TilingConfig {
            morphology,
            patch_size: self.patch_size,
        })
    }
}

/// Component and box filtering flags.
#[derive(Debug, Clone, Args)]
pub struct RegionFlags {
    #[arg(long, value_enum, default_value = "8", env = "PLANTSAM_CONNECTIVITY")]
    pub connectivity: ConnectivityArg,
    /// Components smaller than this are not boxed.
    #[arg(long, default_value_t = 16, env = "PLANTSAM_MIN_COMPONENT_PIXELS")]
    pub min_component_pixels: u64,
    /// Detector boxes below this confidence are dropped.
    #[arg(long, default_value_t = 0.25, env = "PLANTSAM_CONFIDENCE_THRESHOLD")]
    pub confidence_threshold: f32,
}

impl RegionFlags {
    pub fn config(&self) -> Result<DetectorConfig> {
        let c = DetectorConfig {
            confidence_threshold: self.confidence_threshold,
            min_component_pixels: self.min_component_pixels,
            connectivity: self.connectivity.into(),
        };
        c.validate()?;
        Ok(c)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes to `path`, or stdout when `None`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}
