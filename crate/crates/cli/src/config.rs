use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Context};

/// Flag values layered over a JSON config file. Each entry writes one
/// value at a path of object keys; later entries win.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(Vec<&'static str>, Value)>);

impl Overrides {
    pub fn set<V: Serialize>(&mut self, path: &[&'static str], value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.0.push((path.to_vec(), v));
        }
        self
    }

    /// Writes an explicit JSON `null` when `flag` is set.
    pub fn set_null(&mut self, path: &[&'static str], flag: bool) -> &mut Self {
        if flag {
            self.0.push((path.to_vec(), Value::Null));
        }
        self
    }

    fn apply(&self, root: &mut Value) -> CliResult<()> {
        for (path, v) in &self.0 {
            let mut node = &mut *root;
            for key in &path[..path.len() - 1] {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| CliError::Data(format!("config key '{key}' is not inside an object")))?;
                node = obj.entry(*key).or_insert_with(|| Value::Object(Map::new()));
            }
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CliError::Data(format!("config path {} is not an object", path.join("."))))?;
            obj.insert(path[path.len() - 1].to_string(), v.clone());
        }
        Ok(())
    }
}

/// Reads `path` (if any), applies `overrides` and deserializes the result.
pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, overrides: &Overrides) -> CliResult<T> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).context(format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).context(format!("parsing config {}", p.display()))?
        }
        None => Value::Object(Map::new()),
    };
    overrides.apply(&mut root)?;
    serde_json::from_value(root).context("invalid configuration")
}

/// Run identity written beside every output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the effective configuration, so equal runs hash equally
    /// whether settings came from a file or from flags.
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Self {
        let bytes = serde_json::to_vec(config).expect("configs serialize");
        let digest = Sha256::digest(&bytes);
        Self {
            tool: "cstk",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }

    /// Writes `<output>.prov.json`.
    pub fn write_sidecar(&self, output: &Path) -> CliResult<()> {
        let path = sibling(output, "prov.json");
        write_json(&path, self)
    }

    /// `report` as a JSON object with an added `provenance` member.
    pub fn wrap<T: Serialize>(&self, report: &T) -> CliResult<Value> {
        let mut obj = Map::new();
        obj.insert("provenance".into(), serde_json::to_value(self)?);
        match serde_json::to_value(report)? {
            Value::Object(fields) => obj.extend(fields),
            other => {
                obj.insert("result".into(), other);
            }
        }
        Ok(Value::Object(obj))
    }
}

/// `out` with `.suffix` appended to its file name.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).context(format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    serde_json::from_str(&text).context(format!("parsing {}", path.display()))
}

pub fn require_out(out: Option<&Path>) -> CliResult<&Path> {
    out.ok_or_else(|| CliError::Usage("this command needs --out".into()))
}
