//! On-disk layout under the data directory:
//!
//! ```text
//! images/{image_id}.{png,jpg,jpeg}   input sheets
//! masks/{image_id}.png               ground truth for the oracle detector
//! jobs/{job_id}.json, .png           job records and result masks
//! sessions/{session_id}/session.json session state
//! sessions/{session_id}/v{n}.png     one mask per version
//! exports/{image_id}.png, .json      accepted masks and their tags
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use plantsam_core::imagecore::io::{load_image, load_mask};
use plantsam_core::{BinaryMask, RasterImage};

use crate::error::{ServiceError, ServiceResult};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

/// Ids become file names, so they are restricted to a safe alphabet.
pub fn validate_id(kind: &str, id: &str) -> ServiceResult<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Validation(format!("invalid {kind} id {id:?}")))
    }
}

impl DataDir {
    pub fn open(root: impl Into<PathBuf>) -> ServiceResult<Self> {
        let root = root.into();
        for sub in ["images", "masks", "jobs", "sessions", "exports"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, image_id: &str) -> ServiceResult<PathBuf> {
        validate_id("image", image_id)?;
        IMAGE_EXTENSIONS
            .iter()
            .map(|ext| self.root.join("images").join(format!("{image_id}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| ServiceError::NotFound(format!("unknown image {image_id}")))
    }

    pub fn load_image(&self, image_id: &str) -> ServiceResult<RasterImage> {
        Ok(load_image(&self.image_path(image_id)?)?)
    }

    /// Stores uploaded image bytes after checking that they decode.
    pub fn put_image(&self, image_id: &str, bytes: &[u8]) -> ServiceResult<()> {
        validate_id("image", image_id)?;
        let format = image::guess_format(bytes).map_err(|e| ServiceError::Validation(format!("unrecognized image: {e}")))?;
        let ext = match format {
            image::ImageFormat::Png => "png",
            image::ImageFormat::Jpeg => "jpg",
            other => return Err(ServiceError::Validation(format!("unsupported image format {other:?}"))),
        };
        plantsam_core::imagecore::io::decode_image(bytes)?;
        for old in IMAGE_EXTENSIONS {
            let _ = fs::remove_file(self.root.join("images").join(format!("{image_id}.{old}")));
        }
        fs::write(self.root.join("images").join(format!("{image_id}.{ext}")), bytes)?;
        Ok(())
    }

    pub fn truth_mask(&self, image_id: &str) -> ServiceResult<BinaryMask> {
        validate_id("image", image_id)?;
        let path = self.root.join("masks").join(format!("{image_id}.png"));
        if !path.is_file() {
            return Err(ServiceError::Validation(format!("no ground-truth mask for image {image_id}")));
        }
        Ok(load_mask(&path)?)
    }

    pub fn jobs_dir(&self) -> PathBuf {
        self.root.join("jobs")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn exports_dir(&self) -> PathBuf {
        self.root.join("exports")
    }
}

/// MIME type from a file extension.
pub fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

/// Write-then-rename so a crash never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> ServiceResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
