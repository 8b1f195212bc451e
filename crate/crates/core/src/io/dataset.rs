//! Directory-of-images datasets.
//!
//! A dataset root holds one directory per split (matched case-insensitively,
//! so the Inria `Train/` and `Test/` layout works). Every PNG or JPEG below a
//! split directory is an image; its id is the relative path without the
//! extension. Only headers are read while building the manifest.

use std::path::{Path, PathBuf};

use advtex_autograd::Tensor;
use serde::{Deserialize, Serialize};

use super::imageio::load_rgb;
use crate::error::{Error, Result};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Fraction of unreadable files above which loading fails.
pub const MAX_CORRUPT_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub total: usize,
    pub unreadable: Vec<(PathBuf, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: String,
    records: Vec<ImageRecord>,
    pub report: LoadReport,
}

fn split_dir(root: &Path, split: &str) -> Result<Option<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        if entry.path().is_dir() && name.to_string_lossy().eq_ignore_ascii_case(split) {
            found.push(entry.path());
        }
    }
    found.sort();
    Ok(found.into_iter().next())
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn image_id(base: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Builds the manifest of `root/<split>`.
pub fn load_dataset(root: &Path, split: &str) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let mut records = Vec::new();
    let mut report = LoadReport::default();
    if let Some(dir) = split_dir(root, split)? {
        let mut paths = Vec::new();
        collect_images(&dir, &mut paths)?;
        report.total = paths.len();
        for path in paths {
            match image::image_dimensions(&path) {
                Ok((width, height)) if width > 0 && height > 0 => records.push(ImageRecord {
                    id: image_id(&dir, &path),
                    path,
                    width,
                    height,
                }),
                Ok(_) => report.unreadable.push((path, "zero-sized image".into())),
                Err(e) => report.unreadable.push((path, e.to_string())),
            }
        }
    }
    if report.total == 0 {
        log::warn!("dataset {} has no {split} images", root.display());
    }
    if !report.unreadable.is_empty() {
        for (p, why) in &report.unreadable {
            log::warn!("unreadable image {}: {why}", p.display());
        }
        if report.unreadable.len() as f64 > MAX_CORRUPT_FRACTION * report.total as f64 {
            return Err(Error::CorruptDataset {
                root: root.to_path_buf(),
                corrupt: report.unreadable.len(),
                total: report.total,
            });
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    if records.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidArgument(format!(
            "dataset {} has two files with the same id",
            root.display()
        )));
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        split: split.to_string(),
        records,
        report,
    })
}

impl DatasetManifest {
    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn load_image(&self, record: &ImageRecord) -> Result<Tensor> {
        load_rgb(&record.path)
    }

    /// Decodes an image and resizes it bilinearly to `(height, width)`.
    pub fn load_image_resized(&self, record: &ImageRecord, height: usize, width: usize) -> Result<Tensor> {
        let img = load_rgb(&record.path)?;
        let (_, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        if (h, w) == (height, width) {
            return Ok(img);
        }
        let map = crate::detector::resize_map(3, h, w, height, width);
        Ok(Tensor::new(&[3, height, width], map.apply(img.data())))
    }
}
