use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// Output directory that deletes whatever it wrote unless [`OutDir::commit`]
/// is reached, so a failed command leaves no partial results behind.
pub struct OutDir {
    dir: PathBuf,
    created: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<OutDir> {
        let created = !dir.exists();
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            created,
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv<R, I>(&mut self, name: &str, header: &[String], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
        self.write(name, &bytes)
    }

    /// Writes the manifest and keeps the outputs.
    pub fn commit(mut self, command: &str, cfg: &RunConfig) -> Result<()> {
        let mut outputs: Vec<String> = self
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        outputs.sort();
        outputs.dedup();
        let manifest = Manifest {
            tool: "anchorscope",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: cfg,
            outputs,
        };
        self.write_json(MANIFEST, &manifest)?;
        self.committed = true;
        Ok(())
    }

    /// Keeps the outputs without writing a manifest.
    pub fn keep(mut self) {
        self.committed = true;
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

pub const MANIFEST: &str = "run_manifest.json";

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    outputs: Vec<String>,
}

/// Fixed-precision float formatting for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("run");
        {
            let mut out = OutDir::create(&dir).unwrap();
            out.write("a.json", b"{}").unwrap();
            assert!(dir.join("a.json").exists());
        }
        assert!(!dir.exists());
    }

    #[test]
    fn pre_existing_files_survive_a_failed_run() {
        let root = tempfile::tempdir().unwrap();
        std::fs::write(root.path().join("keep.txt"), "x").unwrap();
        {
            let mut out = OutDir::create(root.path()).unwrap();
            out.write("partial.csv", b"1").unwrap();
        }
        assert!(root.path().join("keep.txt").exists());
        assert!(!root.path().join("partial.csv").exists());
    }

    #[test]
    fn commit_writes_manifest() {
        let root = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(root.path()).unwrap();
        out.write("x.csv", b"a\n").unwrap();
        out.commit("discover", &RunConfig::default()).unwrap();
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(root.path().join(MANIFEST)).unwrap())
                .unwrap();
        assert_eq!(m["outputs"], serde_json::json!(["x.csv"]));
        assert_eq!(m["config"]["lambda2"], serde_json::json!([8.0]));
    }
}
