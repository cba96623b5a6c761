//! Layered configuration: built-in preset, then the `--config` file, then
//! explicit flags.

use std::fs;
use std::path::Path;

use cpfn::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Parsed `--config` file. Each top-level table overrides the matching
/// section (`train`, `model`, `bench`) key by key.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    root: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(ConfigFile { root })
    }

    /// Applies the `section` table on top of `base`.
    pub fn overlay<T: Serialize + DeserializeOwned>(&self, section: &str, base: T) -> Result<T> {
        let Some(over) = self.root.get(section) else {
            return Ok(base);
        };
        let mut value = toml::Value::try_from(&base)
            .map_err(|e| Error::Config(format!("cannot express [{section}] defaults: {e}")))?;
        merge(&mut value, over);
        value
            .try_into()
            .map_err(|e| Error::Config(format!("[{section}]: {e}")))
    }
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}
