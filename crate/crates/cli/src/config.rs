//! Run configuration from a JSON file plus command-line overrides.
//!
//! The file is parsed strictly first so that syntax errors and misspelled
//! keys point at a line and column. Overrides are then merged one key at a
//! time, each followed by a strict re-parse, so a bad override names its
//! flag. Later overrides win.

use std::path::{Path, PathBuf};

use aif_core::batch::RunConfig;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("{path}:{line}:{col}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("--{flag}: {msg}")]
    Flag { flag: String, msg: String },
    #[error("unknown key `{key}` ({origin})")]
    UnknownKey { key: String, origin: String },
    #[error(transparent)]
    Invalid(#[from] aif_core::Error),
}

/// One `key = value` override; `flag` is how the user spelled it.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub flag: String,
    pub key: String,
    pub value: Value,
}

impl Override {
    pub fn new(flag: impl Into<String>, key: impl Into<String>, value: Value) -> Self {
        Self {
            flag: flag.into(),
            key: key.into(),
            value,
        }
    }

    /// Parses `--set key=value`. The value is read as JSON when it parses,
    /// otherwise as a bare string, so `--set system=random` works unquoted.
    pub fn from_assignment(s: &str) -> Result<Self, ConfigError> {
        let (key, raw) = s.split_once('=').ok_or_else(|| ConfigError::Flag {
            flag: "set".into(),
            msg: format!("expected KEY=VALUE, got {s:?}"),
        })?;
        let key = key.trim();
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        Ok(Self::new(format!("set {key}"), key, value))
    }
}

fn unknown_field(e: &serde_json::Error) -> Option<String> {
    let msg = e.to_string();
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest.split('`').next()?.to_string())
}

fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}

fn read_file(path: &Path) -> Result<Map<String, Value>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if let Err(e) = RunConfig::from_json_str(&text) {
        if let Some(key) = unknown_field(&e) {
            return Err(ConfigError::UnknownKey {
                key,
                origin: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            });
        }
        return Err(ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            col: e.column(),
            msg: strip_position(&e),
        });
    }
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(ConfigError::Parse {
            path: path.to_path_buf(),
            line: 1,
            col: 1,
            msg: "top level must be an object".into(),
        }),
    }
}

/// Builds and validates a config from an optional file and ordered overrides.
pub fn parse_config(file: Option<&Path>, overrides: &[Override]) -> Result<RunConfig, ConfigError> {
    let mut map = match file {
        Some(path) => read_file(path)?,
        None => Map::new(),
    };
    let mut cfg: RunConfig = serde_json::from_value(Value::Object(map.clone())).expect("checked above");
    for o in overrides {
        map.insert(o.key.clone(), o.value.clone());
        cfg = serde_json::from_value(Value::Object(map.clone())).map_err(|e| match unknown_field(&e) {
            Some(key) => ConfigError::UnknownKey {
                key,
                origin: format!("flag --{}", o.flag),
            },
            None => ConfigError::Flag {
                flag: o.flag.clone(),
                msg: e.to_string(),
            },
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}
