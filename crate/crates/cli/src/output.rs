use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

/// Data files go to `dir`; run metadata goes to `<name>.meta.json` beside them.
pub struct OutputDir {
    dir: PathBuf,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Version, command and wall time; kept apart so data files stay reproducible.
    pub fn write_meta(&self, command: &str, scenario: &Path) -> Result<()> {
        let meta = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": scenario.display().to_string(),
            "runtime_seconds": self.started.elapsed().as_secs_f64(),
        });
        self.write_json(&format!("{command}.meta.json"), &meta)?;
        Ok(())
    }
}

/// `row,col,value` for every entry of a dense matrix, with `base` added to indices.
pub fn matrix_csv(
    rows: usize,
    cols: usize,
    base: usize,
    get: impl Fn(usize, usize) -> f64,
) -> String {
    let mut out = String::from("row,col,value\n");
    for i in 0..rows {
        for j in 0..cols {
            writeln!(out, "{},{},{:e}", i + base, j + base, get(i, j)).unwrap();
        }
    }
    out
}
