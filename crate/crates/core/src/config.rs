//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! [run]
//! command = sweep
//! seed = 7
//!
//! [sweep]
//! omegas = 0.05, 0.1, 0.2
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Keys are
//! validated against [`SCHEMA`]; every error carries the file and line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Allowed keys per section.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["command", "seed", "jobs", "label"]),
    ("model", &["d", "m", "alpha"]),
    ("domain", &["policy", "half_length", "n_x", "n_y"]),
    ("solver", &["tol", "max_iter", "constraint_tol", "modulus", "natural_gauge"]),
    ("groundstate", &["omega", "constraint"]),
    ("sweep", &["omegas", "warm_start"]),
    ("threshold", &["lo", "hi", "tol"]),
    ("masscurve", &["masses", "init"]),
    ("lf-check", &["omegas"]),
    (
        "evolve",
        &[
            "init", "mass", "sigma", "modulation", "t_end", "dt", "sample_every", "adaptive",
            "grad_cutoff", "classify_c", "classify_nu", "m_c",
        ],
    ),
    ("gn-test", &["samples"]),
    ("rho-test", &["a", "n_y"]),
    ("reference", &["d"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed configuration; `path` is used in diagnostics only.
#[derive(Debug, Clone, Default)]
pub struct Config {
    path: PathBuf,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Config {
            path: path.to_path_buf(),
            sections: BTreeMap::new(),
        };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(cfg.err(line, "unterminated section header"));
                };
                let name = name.trim();
                if !SCHEMA.iter().any(|(n, _)| *n == name) {
                    return Err(cfg.err(line, format!("unknown section [{name}]")));
                }
                if cfg.sections.contains_key(name) {
                    return Err(cfg.err(line, format!("duplicate section [{name}]")));
                }
                cfg.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(cfg.err(line, format!("expected `key = value`, found `{s}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(sec) = current.clone() else {
                return Err(cfg.err(line, format!("key `{k}` outside any section")));
            };
            let allowed = SCHEMA.iter().find(|(n, _)| *n == sec).map(|(_, keys)| *keys).unwrap_or(&[]);
            if !allowed.contains(&k) {
                return Err(cfg.err(line, format!("unknown key `{k}` in [{sec}]")));
            }
            let map = cfg.sections.get_mut(&sec).expect("section inserted above");
            if map.contains_key(k) {
                return Err(cfg.err(line, format!("duplicate key `{k}` in [{sec}]")));
            }
            map.insert(
                k.to_string(),
                Entry {
                    value: v.to_string(),
                    line,
                },
            );
        }
        Ok(cfg)
    }

    /// Empty configuration for programmatic use.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sets a value; `section` and `key` must be in [`SCHEMA`].
    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) -> Result<()> {
        let ok = SCHEMA
            .iter()
            .any(|(n, keys)| *n == section && keys.contains(&key));
        if !ok {
            return Err(self.err(0, format!("unknown key `{key}` in [{section}]")));
        }
        self.sections.entry(section.to_string()).or_default().insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|m| m.get(key))
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.entry(section, key).is_some()
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn require_str(&self, section: &str, key: &str) -> Result<&str> {
        self.get_str(section, key)
            .ok_or_else(|| self.err(0, format!("missing key `{key}` in [{section}]")))
    }

    /// Typed value, `None` when absent.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value.parse::<T>().map(Some).map_err(|_| {
            self.err(
                e.line,
                format!("[{section}] {key} = `{}` is not a valid {}", e.value, short_type::<T>()),
            )
        })
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?
            .ok_or_else(|| self.err(0, format!("missing key `{key}` in [{section}]")))
    }

    /// Comma-separated list; an empty value gives an empty list.
    pub fn get_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        if e.value.trim().is_empty() {
            return Ok(Some(Vec::new()));
        }
        e.value
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<T>().map_err(|_| {
                    self.err(
                        e.line,
                        format!("[{section}] {key}: `{item}` is not a valid {}", short_type::<T>()),
                    )
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Canonical text: sections and keys sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (sec, keys) in &self.sections {
            let _ = writeln!(s, "[{sec}]");
            for (k, e) in keys {
                let _ = writeln!(s, "{k} = {}", e.value);
            }
        }
        s
    }

    /// `section.key -> value`, for the manifest snapshot.
    pub fn flatten(&self) -> BTreeMap<String, String> {
        self.sections
            .iter()
            .flat_map(|(sec, keys)| keys.iter().map(move |(k, e)| (format!("{sec}.{k}"), e.value.clone())))
            .collect()
    }
}

fn short_type<T>() -> &'static str {
    let name = std::any::type_name::<T>();
    match name {
        "f64" | "f32" => "number",
        "bool" => "boolean (true/false)",
        n if n.starts_with('u') || n.starts_with('i') => "integer",
        _ => "value",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Config> {
        Config::parse(s, Path::new("t.ini"))
    }

    #[test]
    fn reads_sections_and_lists() {
        let c = parse("# c\n[run]\ncommand = sweep\n\n[sweep]\nomegas = 0.1, 0.2 ,0.4\n").unwrap();
        assert_eq!(c.get_str("run", "command"), Some("sweep"));
        assert_eq!(c.get_list::<f64>("sweep", "omegas").unwrap().unwrap(), vec![0.1, 0.2, 0.4]);
        assert_eq!(c.get::<f64>("sweep", "warm_start").unwrap(), None);
    }

    #[test]
    fn errors_carry_line_and_key() {
        let e = parse("[run]\nseed = x\n").unwrap().get::<u64>("run", "seed").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("t.ini:2"), "{msg}");
        assert!(msg.contains("seed"), "{msg}");
        let e = parse("[run]\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains(":2:") && e.contains("bogus"), "{e}");
        let e = parse("[run]\nno equals sign\n").unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
        let e = parse("seed = 1\n").unwrap_err().to_string();
        assert!(e.contains("outside any section"), "{e}");
        let e = parse("[nope]\n").unwrap_err().to_string();
        assert!(e.contains("unknown section"), "{e}");
    }

    #[test]
    fn canonical_ignores_order_and_comments() {
        let a = parse("[sweep]\nomegas = 1\n[run]\nseed = 3\ncommand = sweep\n").unwrap();
        let b = parse("; x\n[run]\ncommand = sweep\nseed = 3\n[sweep]\nomegas = 1\n").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
