//! Flat `key=value` run configuration. Values come from defaults, then an
//! optional config file, then `--set` flags and dedicated command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use robustdrive::perturb::{PerturbSpec, Scenario, UnseenKind};

/// Every fixed key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model.arch", "synthetic", "network layout: synthetic | desk | pilotnet"),
    ("model.seed", "0", "parameter initialization seed"),
    ("train.lr", "0.001", "Adam learning rate"),
    ("train.batch", "32", "minibatch size"),
    ("train.epochs", "50", "epochs for plain training"),
    ("train.seed", "0", "shuffle seed"),
    ("split.train", "20", "train split weight"),
    ("split.val", "1", "validation split weight"),
    ("split.test", "2", "test split weight"),
    ("split.seed", "0", "split shuffle seed"),
    ("minmax.T", "5", "maximum select/train iterations"),
    ("minmax.k", "10", "epochs per iteration"),
    ("minmax.stop_gap", "none", "stop when clean-minus-worst validation MA falls below this (or none)"),
    ("minmax.factors", "blur,noise,chan:V:darker", "factor families forming the candidate grids"),
    ("minmax.levels", "1,2,3,4,5", "candidate levels per factor"),
    ("minmax.seed", "0", "master seed for perturbing the grids"),
    ("fid.extractor", "thumb8x8-rgb", "feature extractor id"),
    ("bench.collection", "base", "collection directory name"),
    ("bench.seed", "0", "benchmark master seed"),
    ("bench.grid", "standard", "starting grid: standard (101 datasets) | none"),
    ("bench.clean", "true", "also emit the unperturbed copy"),
    ("bench.combined", "grid", "combined presets: grid (keep the grid's list) | none | list such as 1,3"),
    ("synth.count", "2000", "number of synthetic frames"),
    ("synth.width", "32", "synthetic frame width"),
    ("synth.height", "16", "synthetic frame height"),
    ("synth.max_angle", "30", "steering angle at full lane offset (degrees)"),
    ("synth.seed", "0", "synthetic task seed"),
    ("sweep.seed", "0", "master seed for perturbing the sweep sets"),
];

/// Key families with a variable suffix.
pub const PATTERN_KEYS: &[(&str, &str)] = &[
    ("bench.factor.<family>", "levels for a single-factor family, e.g. bench.factor.blur=1,3,5 (empty drops it)"),
    ("bench.unseen.<kind>", "levels for an unseen corruption, e.g. bench.unseen.fog=1,2 (empty drops it)"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn pattern_ok(key: &str) -> Result<()> {
    if let Some(family) = key.strip_prefix("bench.factor.") {
        let spec: PerturbSpec = format!("{family}:L1").parse().map_err(|_| anyhow!("unknown factor family in {key:?}"))?;
        if spec.scenario() != Scenario::Single {
            bail!("{key:?} does not name a single-factor family");
        }
        return Ok(());
    }
    if let Some(kind) = key.strip_prefix("bench.unseen.") {
        kind.parse::<UnseenKind>().map_err(|e| anyhow!("{key:?}: {e}"))?;
        return Ok(());
    }
    bail!("unknown config key {key:?}")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            pattern_ok(key)?;
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key=value, got {line:?}", i + 1))?;
            self.set(k, v).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| robustdrive::Error::Io { path: path.to_path_buf(), source: e })?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn merge_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for p in pairs {
            let (k, v) = p.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got {p:?}"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| anyhow!("config {key}={raw:?}: {e}"))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            "" | "none" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        parse_list(self.raw(key)).with_context(|| format!("config {key}"))
    }

    /// Entries whose key starts with `prefix`, with the prefix removed.
    pub fn with_prefix(&self, prefix: &str) -> Vec<(String, String)> {
        self.values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect()
    }

    /// Resolved values, one `key=value` per line, sorted by key.
    pub fn dump(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| anyhow!("bad list item {s:?}: {e}")))
        .collect()
}

/// Help text listing every configuration key.
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (config file lines or --set key=value):\n");
    for (k, d, doc) in KEYS {
        s.push_str(&format!("  {k:<18} {doc} [default: {d}]\n"));
    }
    for (k, doc) in PATTERN_KEYS {
        s.push_str(&format!("  {k:<18} {doc}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_unknown_keys() {
        let mut c = RunConfig::default();
        assert_eq!(c.get::<f64>("train.lr").unwrap(), 1e-3);
        c.merge_text("# comment\ntrain.lr = 0.01\n\nminmax.T=3\n", "file").unwrap();
        c.merge_overrides(&["train.lr=0.5".into()]).unwrap();
        assert_eq!(c.get::<f64>("train.lr").unwrap(), 0.5);
        assert_eq!(c.get::<usize>("minmax.T").unwrap(), 3);
        assert!(c.merge_text("train.rate=1\n", "file").is_err());
        assert!(c.merge_text("no equals sign\n", "file").is_err());
        assert!(c.merge_overrides(&["train.lr".into()]).is_err());
        assert_eq!(c.optional::<f64>("minmax.stop_gap").unwrap(), None);
    }

    #[test]
    fn pattern_keys() {
        let mut c = RunConfig::default();
        c.set("bench.factor.blur", "1,2").unwrap();
        c.set("bench.factor.chan:V:darker", "5").unwrap();
        c.set("bench.unseen.fog", "1").unwrap();
        assert!(c.set("bench.factor.comb", "1").is_err());
        assert!(c.set("bench.factor.wobble", "1").is_err());
        assert!(c.set("bench.unseen.snow", "1").is_err());
        assert_eq!(c.list::<u8>("bench.factor.blur").unwrap(), vec![1, 2]);
        assert_eq!(c.with_prefix("bench.factor.").len(), 2);
    }
}
