//! Run artifacts: output directory, atomic writes, manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{config_hash, Resolved};
use crate::CliError;

pub struct RunDir {
    pub dir: PathBuf,
    pub hash: String,
}

pub fn prepare(resolved: &Resolved, out: Option<PathBuf>) -> Result<RunDir, CliError> {
    let hash = config_hash(resolved);
    let dir = out.unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-{}", resolved.command, &hash[..12]))
    });
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(RunDir { dir, hash })
}

impl RunDir {
    /// Writes via a temporary file and an atomic rename, so failed runs never
    /// leave partial artifacts behind.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, contents)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| CliError::io(format!("cannot finalize {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::io(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn write_manifest(&self, resolved: &Resolved) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            config: &'a Resolved,
            config_hash: &'a str,
            seed: u64,
            versions: Versions,
        }
        #[derive(Serialize)]
        struct Versions {
            core: &'static str,
            cli: &'static str,
        }
        self.write_json(
            "manifest.json",
            &Manifest {
                command: &resolved.command,
                config: resolved,
                config_hash: &self.hash,
                seed: resolved.seed,
                versions: Versions {
                    core: brownian_pillow::VERSION,
                    cli: env!("CARGO_PKG_VERSION"),
                },
            },
        )
    }
}

pub fn path_str(path: &Path) -> String {
    path.display().to_string()
}
