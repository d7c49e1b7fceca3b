//! Stamped artifacts. Text files open with `# gazelab <version> config=<hash>`;
//! JSON files carry `tool` and `config_hash` members. Reading a derived
//! artifact checks its hash against the current config.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const TOOL: &str = concat!("gazelab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct Stamp {
    pub hash: String,
    /// Flag overrides applied to the config, as `field=value`.
    pub overrides: Vec<String>,
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::at(path, e))
}

/// The hash in a `# gazelab … config=<hash>` line.
fn stamped_hash(first_line: &str) -> Option<&str> {
    first_line.strip_prefix("# gazelab ")?.split_once(" config=").map(|(_, h)| h.trim())
}

impl Stamp {
    pub fn header(&self) -> String {
        format!("# {TOOL} config={}\n", self.hash)
    }

    /// Write a text artifact (CSV or JSONL) after the stamp line.
    pub fn write_text(
        &self,
        path: &Path,
        body: impl FnOnce(&mut Vec<u8>) -> gazelab_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = self.header().into_bytes();
        body(&mut buf).map_err(|e| CliError::at(path, e))?;
        write(path, &buf)
    }

    /// Write a JSON object holding the stamp plus `fields`.
    pub fn write_json(&self, path: &Path, fields: Vec<(&str, Value)>) -> Result<(), CliError> {
        let mut obj = Map::new();
        obj.insert("tool".into(), TOOL.into());
        obj.insert("config_hash".into(), self.hash.clone().into());
        obj.insert("overrides".into(), self.overrides.clone().into());
        for (k, v) in fields {
            obj.insert(k.into(), v);
        }
        let mut bytes = serde_json::to_vec_pretty(&Value::Object(obj)).map_err(|e| CliError::at(path, e))?;
        bytes.push(b'\n');
        write(path, &bytes)
    }

    fn check(&self, path: &Path, found: Option<&str>) -> Result<(), CliError> {
        match found {
            Some(h) if h == self.hash => Ok(()),
            Some(h) => Err(CliError::at(
                path,
                format!("written under config {h}, but the current config is {}; rerun the stage that produces it", self.hash),
            )),
            None => Err(CliError::at(path, "carries no config stamp")),
        }
    }

    /// Contents of a stamped text artifact.
    pub fn read_text(&self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        self.check(path, text.lines().next().and_then(stamped_hash))?;
        Ok(text)
    }

    /// Member `key` of a stamped JSON artifact.
    pub fn read_json<T: DeserializeOwned>(&self, path: &Path, key: &str) -> Result<T, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::at(path, e))?;
        self.check(path, v.get("config_hash").and_then(Value::as_str))?;
        let member = v.get_mut(key).map(Value::take).ok_or_else(|| CliError::at(path, format!("no `{key}` member")))?;
        serde_json::from_value(member).map_err(|e| CliError::at(path, format!("`{key}`: {e}")))
    }
}
