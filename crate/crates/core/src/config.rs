//! Key-value (TOML) configuration files.
//!
//! Every config struct in this crate deserializes with `#[serde(default)]`, so
//! a file only needs to name the keys it overrides.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Parse a config value from TOML text. `origin` is used in error messages.
pub fn from_toml_str<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    toml::from_str(text).map_err(|source| Error::Config {
        path: origin.to_path_buf(),
        source,
    })
}

/// Read and parse a TOML config file.
pub fn load_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_toml_str(&text, path)
}
