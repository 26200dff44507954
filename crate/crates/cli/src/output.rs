//! Output staging. Files are rendered in memory and written only after
//! every computation succeeded, so a failed run leaves nothing behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{CliError, Resolved};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub config: Value,
}

impl Provenance {
    pub fn new<A>(resolved: &Resolved<A>, seed: Option<u64>) -> Self {
        Self {
            tool: "warpgp",
            version: env!("CARGO_PKG_VERSION"),
            command: resolved.command,
            seed,
            config_sha256: resolved.config_sha256.clone(),
            config: resolved.config.clone(),
        }
    }

    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("tool: {} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("seed: {}", self.seed.map_or("none".to_string(), |s| s.to_string())),
            format!("config_sha256: {}", self.config_sha256),
        ]
    }
}

/// Shortest round-trip decimal; non-finite values as `NaN`, `inf`, `-inf`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub struct Staged {
    dir: PathBuf,
    provenance: Provenance,
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn new(dir: &Path, provenance: Provenance) -> Self {
        Self {
            dir: dir.to_path_buf(),
            provenance,
            files: Vec::new(),
        }
    }

    /// CSV with a `#` provenance block, optional extra notes, a header row
    /// and pre-formatted cells.
    pub fn csv(&mut self, name: &str, notes: &[String], header: &[&str], rows: &[Vec<String>]) {
        let mut s = String::new();
        for line in self.provenance.header_lines().iter().chain(notes) {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{}", header.join(","));
        for row in rows {
            let _ = writeln!(s, "{}", row.join(","));
        }
        self.files.push((name.to_string(), s.into_bytes()));
    }

    /// JSON object with a leading `provenance` member.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        let mut map = Map::new();
        map.insert("provenance".into(), to_value(&self.provenance)?);
        match to_value(body)? {
            Value::Object(m) => map.extend(m),
            other => {
                map.insert("body".into(), other);
            }
        }
        let mut bytes = serde_json::to_vec_pretty(&Value::Object(map))
            .map_err(|e| CliError::data(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn commit(self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir)?;
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            let tmp = self.dir.join(format!(".{name}.tmp"));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::data(e.to_string()))
}
