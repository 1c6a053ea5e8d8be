//! Flags layered over an optional JSON document with the same keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{de::DeserializeOwned, Serialize};
use serde_json::Value;

/// Fields set on the command line win over the config document.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut base: Value =
        serde_json::from_str(&text).with_context(|| format!("{}: malformed JSON", path.display()))?;
    let Value::Object(map) = &mut base else {
        bail!("{}: expected a JSON object", path.display());
    };
    if let Value::Object(over) = serde_json::to_value(flags)? {
        for (k, v) in over {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).with_context(|| format!("{}: invalid configuration", path.display()))
}

pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().with_context(|| format!("missing required --{flag}"))
}

pub fn existing_file(path: &Path) -> Result<&Path> {
    if !path.is_file() {
        bail!("{}: no such file", path.display());
    }
    Ok(path)
}

/// Checks that the directory an output path will be written to exists.
pub fn writable_target(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        bail!("{}: output directory does not exist", parent.display());
    }
    Ok(())
}

/// `<prefix>_<suffix>`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push("_");
    s.push(suffix);
    PathBuf::from(s)
}
