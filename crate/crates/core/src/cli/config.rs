//! Flat dotted-key configuration with typed accessors.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{Error, Result};

/// Every key the toolkit understands. Anything else is a schema error.
pub const KNOWN_KEYS: &[&str] = &[
    "output.dir",
    "workers",
    "seed",
    "profile.kind",
    "profile.d",
    "profile.c",
    "profile.alpha",
    "profile.rate",
    "profile.path",
    "propd.k",
    "propd.rmax",
    "propd.grimaldi_r",
    "propd.shift_h",
    "geometry.dim",
    "geometry.extents",
    "geometry.metric",
    "geometry.boundary",
    "potential.kind",
    "potential.a",
    "potential.b",
    "potential.c",
    "potential.values",
    "potential.seed",
    "dos.t",
    "dos.estimators",
    "dos.radii",
    "dos.s_grid",
    "dos.surrogate",
    "dos.tail_fraction",
    "dos.kpm",
    "dos.kpm_moments",
    "dos.kpm_probes",
    "dos.kpm_bins",
    "dixmier.input",
    "dixmier.sequence",
    "dixmier.n",
    "dixmier.surrogate",
    "dixmier.tail_fraction",
    "verify.trials",
    "verify.r",
    "verify.q",
    "verify.n_max",
    "verify.n",
    "verify.t",
    "verify.spec",
    "verify.c",
    "verify.a",
    "verify.b",
    "verify.s_grid",
    "verify.eps_grid",
    "verify.nodes",
    "index.lx",
    "index.ly",
    "index.flux",
    "index.t",
    "index.mode",
    "index.radii",
    "index.surrogate",
    "seq.input",
    "seq.sequence",
    "seq.n",
    "seq.p",
    "seq.q",
    "seq.zeta_q",
    "seq.surrogate",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses a command-line value as a TOML literal, falling back to a string.
pub fn parse_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| text[s].trim().to_string()).unwrap_or_default();
            Error::config(if key.is_empty() { "config".into() } else { key }, e.message().to_string())
        })?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        let cfg = Self { values };
        cfg.check_keys()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn check_keys(&self) -> Result<()> {
        match self.values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            Some(k) => Err(Error::config(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// `KEY=VALUE` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        self.set(key.trim(), parse_value(raw.trim()))
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.values.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn entries(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    /// Hex SHA-256 of the canonical (sorted key) JSON rendering.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.values).expect("TOML values serialize to JSON");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.f64_opt(key).map(|v| v.unwrap_or(default))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(Value::String(s)) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("expected a number, got {s:?}"))),
            Some(v) => Err(Error::config(key, format!("expected a number, got {v}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.usize_opt(key).map(|v| v.unwrap_or(default))
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        match self.f64_opt(key)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= 9.0e15 => Ok(Some(x as usize)),
            Some(x) => Err(Error::config(key, format!("expected a non-negative integer, got {x}"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.usize_opt(key)?.map(|v| v as u64).unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.values.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(Value::String(s)) if s == "true" || s == "false" => Ok(s == "true"),
            Some(v) => Err(Error::config(key, format!("expected a boolean, got {v}"))),
        }
    }

    pub fn str_opt(&self, key: &str) -> Result<Option<String>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Error::config(key, format!("expected a string, got {v}"))),
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> Result<String> {
        Ok(self.str_opt(key)?.unwrap_or_else(|| default.to_string()))
    }

    /// Accepts an array, a single number or a comma-separated string.
    pub fn f64_list_opt(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let bad = |what: &str| Error::config(key, format!("expected a list of numbers, got {what}"));
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(bad(&other.to_string())),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::Float(f)) => Ok(Some(vec![*f])),
            Some(Value::Integer(i)) => Ok(Some(vec![*i as f64])),
            Some(Value::String(s)) => s
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| bad(s)))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(bad(&v.to_string())),
        }
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(self.f64_list_opt(key)?.unwrap_or_else(|| default.to_vec()))
    }

    /// Accepts an array of strings or a comma-separated string.
    pub fn str_list_or(&self, key: &str, default: &[&str]) -> Result<Vec<String>> {
        match self.values.get(key) {
            None => Ok(default.iter().map(|s| s.to_string()).collect()),
            Some(Value::String(s)) => Ok(s.split(',').map(|p| p.trim().to_string()).collect()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(Error::config(key, format!("expected strings, got {other}"))),
                })
                .collect(),
            Some(v) => Err(Error::config(key, format!("expected a list of strings, got {v}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_nested_keys_flatten_alike() {
        let a = Config::from_toml_str("geometry.dim = 2\n[dos]\nt = [0.5, 1]\n").unwrap();
        let b = Config::from_toml_str("[geometry]\ndim = 2\n[dos]\nt = [0.5, 1.0]\n").unwrap();
        assert_eq!(a.usize_or("geometry.dim", 0).unwrap(), 2);
        assert_eq!(a.f64_list_or("dos.t", &[]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(b.f64_list_or("dos.t", &[]).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_key() {
        match Config::from_toml_str("geometry.dimm = 2") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "geometry.dimm"),
            other => panic!("{other:?}"),
        }
        let c = Config::from_toml_str("geometry.dim = \"two\"").unwrap();
        match c.usize_or("geometry.dim", 1) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "geometry.dim"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_parse_literals() {
        let mut c = Config::default();
        c.apply_override("dos.t=0.5,1,2").unwrap();
        c.apply_override("verify.trials=1000").unwrap();
        c.apply_override("dos.estimators=all").unwrap();
        assert_eq!(c.f64_list_or("dos.t", &[]).unwrap(), vec![0.5, 1.0, 2.0]);
        assert_eq!(c.usize_or("verify.trials", 0).unwrap(), 1000);
        assert_eq!(c.str_list_or("dos.estimators", &[]).unwrap(), vec!["all".to_string()]);
        assert!(c.apply_override("nonsense").is_err());
        assert!(c.apply_override("no.such=1").is_err());
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = Config::from_toml_str("seed = 1\nworkers = 2").unwrap();
        let b = Config::from_toml_str("workers = 2\nseed = 1").unwrap();
        let c = Config::from_toml_str("workers = 2\nseed = 3").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
