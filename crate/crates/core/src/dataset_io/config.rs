use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;

/// Flat `key value` file. Separators may be whitespace, `=` or `:`; `#`
/// starts a comment. Later keys override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    source: PathBuf,
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let split = line
                .find(|c: char| c == '=' || c == ':' || c.is_whitespace())
                .ok_or_else(|| Error::Parse {
                    path: source.clone(),
                    line: n + 1,
                    reason: format!("expected `key value`, got `{line}`"),
                })?;
            let key = line[..split].trim();
            let value = line[split + 1..]
                .trim_start_matches(|c: char| c == '=' || c == ':' || c.is_whitespace())
                .trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    path: source.clone(),
                    line: n + 1,
                    reason: format!("expected `key value`, got `{line}`"),
                });
            }
            entries.insert(key.to_string(), value.to_string());
        }
        Ok(Self { source, entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse().map_err(|_| Error::Parse {
                    path: self.source.clone(),
                    line: 0,
                    reason: format!("bad value `{v}` for `{key}`"),
                })
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Parse {
            path: self.source.clone(),
            line: 0,
            reason: format!("missing key `{key}`"),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl Intrinsics {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        Intrinsics::new(
            kv.require("fx")?,
            kv.require("fy")?,
            kv.require("cx")?,
            kv.require("cy")?,
            kv.require("width")?,
            kv.require("height")?,
        )
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "fx {}\nfy {}\ncx {}\ncy {}\nwidth {}\nheight {}\n",
            self.fx, self.fy, self.cx, self.cy, self.width, self.height
        )
    }
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    Intrinsics::from_key_values(&KeyValues::read(path)?)
}
