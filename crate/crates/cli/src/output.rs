//! Artifact writing: temp file + rename, plus a metadata sidecar per file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub struct Artifacts {
    dir: PathBuf,
    config_hash: String,
    seed: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifacts {
    pub fn new(dir: &Path, config_text: &str, seed: u64) -> Self {
        Self { dir: dir.to_path_buf(), config_hash: sha256_hex(config_text.as_bytes()), seed }
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        Ok(())
    }

    /// Writes every file, each followed by `<name>.meta`.
    pub fn write_all(&self, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        for (name, bytes) in files {
            self.write_atomic(name, bytes)?;
            let meta = format!(
                "created = \"{created}\"\nconfig_sha256 = \"{}\"\nseed = {}\nversion = \"{}\"\n",
                self.config_hash,
                self.seed,
                env!("CARGO_PKG_VERSION")
            );
            self.write_atomic(&format!("{name}.meta"), meta.as_bytes())?;
        }
        Ok(())
    }
}
