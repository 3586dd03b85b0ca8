//! Run directories and their records.
//!
//! A run id is `<subcommand>-<hash>`, where the hash covers the subcommand,
//! tool version, resolved configuration and input digests. Identical runs
//! therefore land in the same directory with byte-identical outputs; only
//! the timestamp in `run.json` differs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub subcommand: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub created_unix_s: u64,
    pub config: Config,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the run directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// An open run directory collecting outputs.
pub struct Run {
    pub id: String,
    pub dir: PathBuf,
    subcommand: String,
    config: Config,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Run {
    pub fn create(out: &Path, subcommand: &str, config: &Config, inputs: &[&Path]) -> Result<Self, CliError> {
        let inputs = inputs.iter().map(|p| digest_file(p)).collect::<Result<Vec<_>, _>>()?;
        let mut h = Sha256::new();
        for part in [subcommand, TOOL_VERSION, &config.to_toml()] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        // Inputs are identified by content, not by where they were read from.
        for i in &inputs {
            h.update(i.sha256.as_bytes());
        }
        let id = format!("{subcommand}-{}", &hex::encode(h.finalize())[..12]);
        let dir = out.join("runs").join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            id,
            dir,
            subcommand: subcommand.to_string(),
            config: config.clone(),
            inputs,
            outputs: Vec::new(),
        })
    }

    /// Writes `contents` to `name` inside the run directory.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    /// Writes `value` as pretty JSON tagged with the run id.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            run_id: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let text = serde_json::to_string_pretty(&Tagged {
            run_id: &self.id,
            value,
        })
        .map_err(|e| CliError::new("serialize", e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    /// Writes `config.toml` and `run.json`, consuming the run.
    pub fn finish(mut self) -> Result<RunRecord, CliError> {
        let snapshot = self.config.to_toml();
        self.write("config.toml", &snapshot)?;
        let created_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let record = RunRecord {
            run_id: self.id.clone(),
            subcommand: self.subcommand,
            tool_version: TOOL_VERSION.to_string(),
            created_unix_s,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let path = self.dir.join("run.json");
        let text = serde_json::to_string_pretty(&record).map_err(|e| CliError::new("serialize", e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(record)
    }
}

pub fn read_record(dir: &Path) -> Result<RunRecord, CliError> {
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_depends_on_config_not_out_dir() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = Config::default();
        let ra = Run::create(a.path(), "simulate", &c, &[]).unwrap();
        let rb = Run::create(b.path(), "simulate", &c, &[]).unwrap();
        assert_eq!(ra.id, rb.id);
        let mut c2 = c.clone();
        c2.run.seed = 1;
        assert_ne!(Run::create(a.path(), "simulate", &c2, &[]).unwrap().id, ra.id);
        assert_ne!(Run::create(a.path(), "synth", &c, &[]).unwrap().id, ra.id);
    }

    #[test]
    fn record_lists_outputs_with_digests() {
        let d = tempfile::tempdir().unwrap();
        let mut r = Run::create(d.path(), "x", &Config::default(), &[]).unwrap();
        r.write("a.txt", "hello").unwrap();
        let dir = r.dir.clone();
        let rec = r.finish().unwrap();
        assert_eq!(rec.outputs[0].sha256, sha256_hex(b"hello"));
        assert_eq!(read_record(&dir).unwrap(), rec);
    }
}
