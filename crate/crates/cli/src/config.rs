//! Config-file loading, flag merging and the error record written on failure.

use std::path::Path;

use clap::{Args, FromArgMatches};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 3, kind: "data", message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind, "exit_code": self.code, "message": self.message }
        })
        .to_string()
    }
}

impl From<warpgp::Error> for CliError {
    fn from(e: warpgp::Error) -> Self {
        if e.is_numerical() {
            Self { code: 4, kind: "numerical", message: e.to_string() }
        } else {
            Self::data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

/// Arguments after merging, with the canonical config used for provenance.
#[derive(Debug)]
pub struct Resolved<A> {
    pub args: A,
    pub command: &'static str,
    /// Merged settings without the output directory.
    pub config: Value,
    pub config_sha256: String,
}

fn known_keys<A: Args>(command: &'static str) -> clap::Command {
    A::augment_args(clap::Command::new(command).no_binary_name(true))
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// `key = value` lines go through the same parser as flags, so lists and
/// enums accept exactly the flag syntax.
fn parse_key_values<A>(text: &str, command: &'static str) -> Result<Map<String, Value>, CliError>
where
    A: Args + FromArgMatches + Serialize,
{
    let cmd = known_keys::<A>(command);
    let mut argv: Vec<String> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = normalize_key(key);
        let arg = cmd
            .get_arguments()
            .find(|a| a.get_id().as_str() == key)
            .ok_or_else(|| CliError::usage(format!("unknown config key '{key}' for {command}")))?;
        let long = arg.get_long().expect("every option has a long flag");
        argv.push(format!("--{long}"));
        argv.push(value.trim().trim_matches('"').to_string());
    }
    let matches = cmd
        .try_get_matches_from(argv)
        .map_err(|e| CliError::usage(format!("config: {}", e.render().to_string().trim_end())))?;
    let parsed = A::from_arg_matches(&matches).map_err(|e| CliError::usage(format!("config: {e}")))?;
    match serde_json::to_value(parsed) {
        Ok(Value::Object(m)) => Ok(m),
        _ => Err(CliError::usage("config: could not represent settings")),
    }
}

fn parse_json<A: Args>(text: &str, command: &'static str) -> Result<Map<String, Value>, CliError> {
    let map: Map<String, Value> =
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
    let cmd = known_keys::<A>(command);
    map.into_iter()
        .map(|(k, v)| {
            let key = normalize_key(&k);
            if cmd.get_arguments().any(|a| a.get_id().as_str() == key) {
                Ok((key, v))
            } else {
                Err(CliError::usage(format!("unknown config key '{k}' for {command}")))
            }
        })
        .collect()
}

/// Loads the optional config file and lets explicitly given flags win.
pub fn resolve<A>(flags: A, config: Option<&Path>, command: &'static str) -> Result<Resolved<A>, CliError>
where
    A: Args + FromArgMatches + Serialize + DeserializeOwned,
{
    let mut merged = match config {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
            if text.trim_start().starts_with('{') {
                parse_json::<A>(&text, command)?
            } else {
                parse_key_values::<A>(&text, command)?
            }
        }
    };
    match serde_json::to_value(&flags) {
        Ok(Value::Object(m)) => merged.extend(m),
        _ => return Err(CliError::usage("could not represent flags")),
    }
    let args: A = serde_json::from_value(Value::Object(merged.clone()))
        .map_err(|e| CliError::usage(format!("config: {e}")))?;
    merged.remove("out");
    let config = Value::Object(merged);
    let bytes = serde_json::to_vec(&config).expect("JSON values serialize");
    let digest = Sha256::digest(&bytes);
    Ok(Resolved {
        args,
        command,
        config,
        config_sha256: format!("{digest:x}"),
    })
}
