use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context as _, Result};
use serde::Serialize;

/// Provenance record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved options, defaults included.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub argv: Vec<String>,
    pub threads: usize,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

pub const MANIFEST: &str = "manifest.json";

/// Output directory that remembers what was written to it.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Writes a file through a library writer.
    pub fn with<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> coinfection_core::Result<()>,
    {
        let mut w = self.open(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut csv::Writer<BufWriter<File>>) -> Result<()>,
    {
        let mut w = csv::Writer::from_writer(self.open(name)?);
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish<C: Serialize>(
        mut self,
        ctx: &crate::commands::Context,
        subcommand: &str,
        config: &C,
        seed: Option<u64>,
        inputs: &[&Path],
    ) -> Result<()> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.written.clone(),
            argv: ctx.argv.clone(),
            threads: ctx.threads,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        self.json(MANIFEST, &manifest)
    }
}
