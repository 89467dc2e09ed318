//! Output directory bookkeeping: every file is stamped with the schema
//! version and configuration hash, and a failed run removes what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    config_hash: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    config_hash: String,
    experiment: &'a str,
    seed: u64,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path, config_hash: &str) -> std::io::Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            config_hash: config_hash.into(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        path
    }

    pub fn track(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    pub fn comment(&self) -> String {
        format!(
            "# schema={} config={}",
            OUTPUT_SCHEMA_VERSION, self.config_hash
        )
    }

    /// Writes a CSV through `write` and prepends the stamp line.
    pub fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&Path) -> albedo_lab::Result<()>,
    ) -> albedo_lab::Result<PathBuf> {
        let path = self.path(name);
        write(&path)?;
        let body = fs::read_to_string(&path)?;
        fs::write(&path, format!("{}\n{body}", self.comment()))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> albedo_lab::Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| albedo_lab::Error::Invalid(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    /// `key,value` rows.
    pub fn summary(&mut self, rows: &[(String, String)]) -> albedo_lab::Result<PathBuf> {
        let path = self.path("summary.csv");
        let mut text = format!("{}\nkey,value\n", self.comment());
        for (k, v) in rows {
            text.push_str(&format!("{k},{v}\n"));
        }
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn manifest(&mut self, experiment: &str, seed: u64) -> albedo_lab::Result<PathBuf> {
        let files = self
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let manifest = Manifest {
            schema_version: OUTPUT_SCHEMA_VERSION,
            config_hash: self.config_hash.clone(),
            experiment,
            seed,
            files,
        };
        self.json("manifest.json", &manifest)
    }

    /// Deletes every file written so far, and the directory if this run created it.
    pub fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
