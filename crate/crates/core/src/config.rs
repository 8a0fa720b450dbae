//! Flat `key=value` configuration text.
//!
//! One entry per line, `#` starts a comment, keys are dotted paths such as
//! `net.depth` or `sweep.sensor_counts`. List values are comma-separated.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key=value`, found `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Keys come out sorted so the text is stable.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn set_list<T: Display>(&mut self, key: impl Into<String>, values: &[T]) {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.entries.insert(key.into(), joined);
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Entries of `other` override ours.
    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config {
                key: key.to_string(),
                msg: format!("cannot parse `{v}`"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|item| {
                item.trim().parse().map_err(|_| Error::Config {
                    key: key.to_string(),
                    msg: format!("cannot parse list item `{item}`"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key).map(|s| s.to_ascii_lowercase()) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" | "on" => Ok(Some(true)),
                "false" | "0" | "no" | "off" => Ok(Some(false)),
                _ => Err(Error::Config {
                    key: key.to_string(),
                    msg: format!("expected a boolean, found `{v}`"),
                }),
            },
        }
    }

    /// Errors on any key outside `known`; `prefixes` whitelists whole
    /// namespaces such as `scene.tx.`.
    pub fn reject_unknown(&self, known: &[&str], prefixes: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) && !prefixes.iter().any(|p| k.starts_with(p)) {
                return Err(Error::Config {
                    key: k.clone(),
                    msg: "unknown key".into(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_bools() {
        let text = "# sweep\nscene.seed = 7\nsweep.sensor_counts=20,40, 60,100\n\ntrain.suppress=on # trailing\n";
        let cfg = KvConfig::parse(text, Path::new("c")).unwrap();
        assert_eq!(cfg.get::<u64>("scene.seed").unwrap(), Some(7));
        assert_eq!(
            cfg.get_list::<usize>("sweep.sensor_counts").unwrap(),
            Some(vec![20, 40, 60, 100])
        );
        assert_eq!(cfg.get_bool("train.suppress").unwrap(), Some(true));
        assert_eq!(cfg.get::<u64>("missing").unwrap(), None);
    }

    #[test]
    fn errors_name_key_or_line() {
        let err = KvConfig::parse("a=1\nbroken\n", Path::new("c")).unwrap_err();
        assert!(err.to_string().starts_with("c:2"), "{err}");
        let cfg = KvConfig::parse("net.depth=six\n", Path::new("c")).unwrap();
        let err = cfg.get::<usize>("net.depth").unwrap_err();
        assert!(err.to_string().contains("net.depth"), "{err}");
        let err = cfg.reject_unknown(&["net.width"], &[]).unwrap_err();
        assert!(err.to_string().contains("net.depth"), "{err}");
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = KvConfig::new();
        cfg.set("b.x", 1.5);
        cfg.set_list("a.list", &[1, 2, 3]);
        let back = KvConfig::parse(&cfg.to_text(), Path::new("c")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.to_text(), "a.list=1,2,3\nb.x=1.5\n");
    }
}
