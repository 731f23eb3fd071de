//! Output directories: one run at a time, each with a manifest.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::RunConfig;

const LOCK_NAME: &str = ".irtkit.lock";

/// Exclusive claim on an output directory, released on drop.
pub struct RunDir {
    dir: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let lock = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is in use by another run (remove {} if it is stale)",
                dir.display(),
                lock.display()
            ),
            Err(e) => return Err(e).with_context(|| format!("locking {}", dir.display())),
        }
        Ok(Self { dir: dir.to_owned(), lock })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    /// Echoes the resolved configuration with the dataset hash and tool
    /// version, enough to rerun the command.
    pub fn write_manifest(&self, command: &str, cfg: &RunConfig, dataset_hash: Option<&str>) -> Result<()> {
        let mut t = toml::Table::new();
        t.insert("command".into(), command.into());
        t.insert("irtkit_version".into(), env!("CARGO_PKG_VERSION").into());
        if let Some(h) = dataset_hash {
            t.insert("dataset_hash".into(), h.into());
        }
        t.insert("config".into(), toml::Value::try_from(cfg).context("serializing config")?);
        self.write_text("manifest.toml", &toml::to_string(&t).context("serializing manifest")?)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Dataset label and hash recorded in a run's manifest, if there is one.
pub fn read_manifest(dir: &Path) -> Option<(String, String)> {
    let text = fs::read_to_string(dir.join("manifest.toml")).ok()?;
    let t: toml::Table = toml::from_str(&text).ok()?;
    let hash = t.get("dataset_hash")?.as_str()?.to_owned();
    let label = t
        .get("config")
        .and_then(|c| c.get("dataset"))
        .and_then(|d| d.get("path"))
        .and_then(|p| p.as_str())
        .and_then(|p| Path::new(p).file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| hash.chars().take(12).collect());
    Some((label, hash))
}
