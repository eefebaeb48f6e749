//! On-disk dataset layout:
//!
//! ```text
//! <root>/manifest.txt        one id per line
//! <root>/images/<id>.ppm
//! <root>/masks/<id>.pgm
//! <root>/edges/<id>.pgm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use errnet_core::synth::Sample;

use crate::error::{CliError, Result};
use crate::pnm;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn image(&self, id: &str) -> PathBuf {
        self.root.join("images").join(format!("{id}.ppm"))
    }

    pub fn mask(&self, id: &str) -> PathBuf {
        self.root.join("masks").join(format!("{id}.pgm"))
    }

    pub fn edge(&self, id: &str) -> PathBuf {
        self.root.join("edges").join(format!("{id}.pgm"))
    }

    pub fn create_dirs(&self) -> Result<()> {
        for sub in ["images", "masks", "edges"] {
            let dir = self.root.join(sub);
            fs::create_dir_all(&dir).map_err(CliError::io(dir))?;
        }
        Ok(())
    }

    /// Writes one triple. Directories must already exist.
    pub fn write_sample(&self, s: &Sample) -> Result<()> {
        pnm::write_ppm(&self.image(&s.id), &s.image)?;
        pnm::write_pgm(&self.mask(&s.id), &s.mask)?;
        pnm::write_pgm(&self.edge(&s.id), &s.edge)
    }

    pub fn write_manifest<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let mut text = String::new();
        for id in ids {
            text.push_str(id);
            text.push('\n');
        }
        let path = self.manifest();
        fs::write(&path, text).map_err(CliError::io(path))
    }

    /// Ids in manifest order. Blank lines and `#` lines are skipped.
    pub fn read_manifest(&self) -> Result<Vec<String>> {
        let path = self.manifest();
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        let mut ids = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let id = line.trim();
            if id.is_empty() || id.starts_with('#') {
                continue;
            }
            if id.contains(['/', '\\']) {
                return Err(CliError::Config { path, line: n + 1, message: format!("id `{id}` contains a path separator") });
            }
            if ids.iter().any(|x| x == id) {
                return Err(CliError::Config { path, line: n + 1, message: format!("duplicate id `{id}`") });
            }
            ids.push(id.to_string());
        }
        if ids.is_empty() {
            return Err(CliError::Validation(format!("{}: manifest lists no ids", path.display())));
        }
        Ok(ids)
    }

    /// Checks that every file the manifest names exists, reporting all missing ones at once.
    pub fn preflight(&self) -> Result<Vec<String>> {
        let ids = self.read_manifest()?;
        let missing: Vec<String> = ids
            .iter()
            .flat_map(|id| [self.image(id), self.mask(id), self.edge(id)])
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Validation(format!(
                "dataset {} is incomplete; missing {} file(s):\n  {}",
                self.root.display(),
                missing.len(),
                missing.join("\n  ")
            )));
        }
        Ok(ids)
    }

    /// Loads one triple and checks that the three maps agree in size and the
    /// mask and edge are binary.
    pub fn load_sample(&self, id: &str) -> Result<Sample> {
        let image = pnm::read_ppm(&self.image(id))?;
        let mask = pnm::read_pgm(&self.mask(id))?;
        let edge = pnm::read_pgm(&self.edge(id))?;
        let si = image.shape();
        for (path, t) in [(self.mask(id), &mask), (self.edge(id), &edge)] {
            let s = t.shape();
            if (s.h, s.w) != (si.h, si.w) {
                return Err(CliError::Validation(format!(
                    "{}: size {}x{} differs from its image ({}x{})",
                    path.display(),
                    s.w,
                    s.h,
                    si.w,
                    si.h
                )));
            }
            if let Some(v) = t.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(CliError::Validation(format!("{}: not binary (found {v})", path.display())));
            }
        }
        Ok(Sample { id: id.to_string(), image, mask, edge })
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.preflight()?.iter().map(|id| self.load_sample(id)).collect()
    }
}

/// Files in `dir` with extension `ext`, keyed by stem and sorted.
pub fn files_by_stem(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(CliError::io(dir))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}
