//! Image codecs, synthetic datasets, checkpoints and config files.

mod checkpoint;
mod config;
mod image;
mod synthetic;

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use self::checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use self::config::RunConfig;
pub use self::image::{load_image, save_image, tile_grid};
pub use self::synthetic::{
    make_synthetic_domain_pair, render_image, render_set, write_synthetic_set, ShapeKind,
    SyntheticSpec, TextureKind,
};

/// A list of labelled image files.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImageSet {
    pub items: Vec<(PathBuf, String)>,
    pub domain_tag: String,
}

impl ImageSet {
    pub fn new(domain_tag: impl Into<String>) -> Self {
        ImageSet {
            items: Vec::new(),
            domain_tag: domain_tag.into(),
        }
    }

    /// Every file in `dir` with a png/ppm extension, sorted by name, all labelled `label`.
    pub fn from_dir(dir: &Path, label: &str) -> Result<Self> {
        let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in rd {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            let ext = p
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| e.to_ascii_lowercase());
            if matches!(ext.as_deref(), Some("png" | "ppm")) {
                paths.push(p);
            }
        }
        paths.sort();
        Ok(ImageSet {
            items: paths.into_iter().map(|p| (p, label.to_string())).collect(),
            domain_tag: label.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, path: impl Into<PathBuf>, label: impl Into<String>) {
        self.items.push((path.into(), label.into()));
    }

    /// Sorted, de-duplicated labels.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.items.iter().map(|(_, l)| l.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    /// Items whose label equals `label`, keeping order.
    pub fn with_label(&self, label: &str) -> ImageSet {
        ImageSet {
            items: self
                .items
                .iter()
                .filter(|(_, l)| l == label)
                .cloned()
                .collect(),
            domain_tag: label.to_string(),
        }
    }

    pub fn load_all(&self) -> Result<Vec<Tensor>> {
        self.items.iter().map(|(p, _)| load_image(p)).collect()
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
