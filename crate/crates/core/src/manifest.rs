//! Dataset manifests: a CSV with header `image,clean_mask,noisy_mask,split`
//! listing paths relative to the manifest location, split in {train, test}.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, GrayImage};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!(
                "split must be train or test, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub clean_mask: PathBuf,
    pub noisy_mask: PathBuf,
    pub split: Split,
}

/// Parsed manifest with entry paths resolved against the manifest's
/// parent directory.
#[derive(Debug, Clone)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        {
            let headers = reader.headers()?.clone();
            let expect = ["image", "clean_mask", "noisy_mask", "split"];
            let got: Vec<&str> = headers.iter().collect();
            if got != expect {
                return Err(Error::Manifest(format!(
                    "bad header {got:?}, expected {expect:?}"
                )));
            }
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != 4 {
                return Err(Error::Manifest(format!(
                    "row has {} fields, expected 4",
                    record.len()
                )));
            }
            entries.push(ManifestEntry {
                image: base.join(&record[0]),
                clean_mask: base.join(&record[1]),
                noisy_mask: base.join(&record[2]),
                split: Split::parse(&record[3])?,
            });
        }
        if entries.is_empty() {
            return Err(Error::Manifest("manifest has no entries".into()));
        }
        Ok(Self { entries })
    }

    /// Writes the manifest with paths stored relative to `path`'s directory.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut writer = csv::Writer::from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        writer.write_record(["image", "clean_mask", "noisy_mask", "split"])?;
        for e in &self.entries {
            writer.write_record([
                relative_to(&e.image, base),
                relative_to(&e.clean_mask, base),
                relative_to(&e.noisy_mask, base),
                e.split.as_str().to_string(),
            ])?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Path of `path` relative to directory `base`, inserting `..`
/// components where needed; falls back to the absolute path when the
/// two share no usable prefix.
fn relative_to(path: &Path, base: &Path) -> String {
    let path = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
    let mut path_parts: Vec<_> = path.components().collect();
    let mut base_parts: Vec<_> = base.components().collect();
    let common = path_parts
        .iter()
        .zip(&base_parts)
        .take_while(|(a, b)| a == b)
        .count();
    if common == 0 {
        return path.to_string_lossy().into_owned();
    }
    path_parts.drain(..common);
    base_parts.drain(..common);
    let mut out = PathBuf::new();
    for _ in &base_parts {
        out.push("..");
    }
    for part in path_parts {
        out.push(part);
    }
    out.to_string_lossy().into_owned()
}

/// One fully loaded manifest entry.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: GrayImage,
    pub clean_mask: BinaryMask,
    pub noisy_mask: BinaryMask,
}

/// Loads all samples of a split, validating per-entry dimensions.
pub fn load_split(manifest: &Manifest, split: Split) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for entry in manifest.split(split) {
        let image = io::read_image(&entry.image)?;
        let clean_mask = io::read_mask(&entry.clean_mask)?;
        let noisy_mask = io::read_mask(&entry.noisy_mask)?;
        for (name, h, w) in [
            ("clean mask", clean_mask.height(), clean_mask.width()),
            ("noisy mask", noisy_mask.height(), noisy_mask.width()),
        ] {
            if h != image.height() || w != image.width() {
                return Err(Error::Manifest(format!(
                    "{}: {name} dims {h}x{w} do not match image {}x{}",
                    entry.image.display(),
                    image.height(),
                    image.width()
                )));
            }
        }
        out.push(Sample {
            image,
            clean_mask,
            noisy_mask,
        });
    }
    Ok(out)
}
