//! Flat key=value experiment configuration.
//!
//! One key per line, `#` starts a comment, sections are dotted prefixes
//! (`svgd.gamma=1.0`). Every key is validated against the registry before
//! any compute; unknown and duplicate keys are rejected. Resolution
//! materializes every default so the emitted `config-resolved.txt` re-runs
//! bit-identically.

use std::collections::BTreeMap;
use std::path::Path;

use amalgam_core::error::{Error, Result};

/// Registry of known keys and their static defaults. `None` means the
/// default is computed during resolution or the key is optional.
const KNOWN_KEYS: &[(&str, Option<&str>)] = &[
    ("mode", None),
    ("seed", Some("42")),
    ("threads", Some("1")),
    ("output_dir", None),
    ("dataset.kind", Some("moons")),
    ("dataset.n_train", Some("400")),
    ("dataset.n_test", Some("200")),
    ("dataset.noise", Some("0.08")),
    ("dataset.turns", Some("2.0")),
    ("dataset.train_path", None),
    ("dataset.test_path", None),
    ("student.widths", Some("16,2")),
    ("student.activation", Some("relu")),
    ("teacher.widths", Some("64,64,2")),
    ("teacher.activation", Some("relu")),
    ("teachers.n", Some("3")),
    ("students.n", Some("3")),
    ("train.alpha", Some("0.7")),
    ("train.beta", Some("1.0")),
    ("train.amalgamation", Some("soft")),
    ("train.epochs", Some("200")),
    ("train.batch_size", Some("64")),
    ("train.lr", Some("0.05")),
    ("train.lr_milestones", Some("140:10,170:10")),
    ("train.momentum", Some("0.9")),
    ("train.weight_decay", Some("0.0002")),
    ("attack.eps", Some("0.15")),
    ("attack.step", Some("0.01")),
    ("attack.iters", Some("20")),
    ("svgd.particles", None),
    ("svgd.sigma", Some("0.5")),
    ("svgd.gamma", Some("1.0")),
    ("svgd.pairing", Some("per_particle")),
    ("probe.eps", Some("0.15")),
    ("probe.step", Some("0.02")),
    ("probe.iters", Some("20")),
    ("probe.size", Some("200")),
    ("probe.restarts", Some("1")),
    ("eval.attacks", Some("fgsm,pgd")),
    ("models.paths", None),
    ("diversity.sources", Some("20")),
    ("boundary.resolution", Some("64")),
    ("boundary.lo", Some("0,0")),
    ("boundary.hi", Some("1,1")),
];

const MODES: &[&str] =
    &["natural", "sat", "distill1", "ataka", "cataka", "diversity", "evaluate", "boundary"];

/// A fully resolved configuration: every applicable key has a value.
#[derive(Clone, Debug)]
pub struct Config {
    map: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KNOWN_KEYS.iter().any(|(k, _)| *k == key)
}

/// Parses the raw key=value text, rejecting unknown and duplicate keys.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidConfig(format!(
            "line {}: expected key=value, got `{line}`",
            idx + 1
        )))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !known(&key) {
            return Err(Error::InvalidConfig(format!("unknown key `{key}`")));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

/// Loads, resolves and validates a config file.
pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    resolve(parse(&text)?)
}

/// Fills in every default and validates cross-key constraints.
pub fn resolve(mut map: BTreeMap<String, String>) -> Result<Config> {
    let mode = map
        .get("mode")
        .cloned()
        .ok_or_else(|| Error::InvalidConfig("missing required key `mode`".into()))?;
    if !MODES.contains(&mode.as_str()) {
        return Err(Error::InvalidConfig(format!(
            "mode `{mode}` is not one of {}",
            MODES.join("|")
        )));
    }
    for (key, default) in KNOWN_KEYS {
        if let Some(d) = default {
            map.entry((*key).to_string()).or_insert_with(|| (*d).to_string());
        }
    }
    // Computed defaults.
    let seed = map.get("seed").cloned().unwrap_or_default();
    map.entry("output_dir".to_string())
        .or_insert_with(|| format!("run_{mode}_seed{seed}"));
    if !map.contains_key("svgd.particles") {
        let n = match mode.as_str() {
            "cataka" => map.get("students.n").cloned(),
            "diversity" => map
                .get("models.paths")
                .map(|p| p.split(',').filter(|s| !s.trim().is_empty()).count().to_string()),
            _ => map.get("teachers.n").cloned(),
        };
        map.insert("svgd.particles".to_string(), n.unwrap_or_else(|| "3".to_string()));
    }

    let cfg = Config { map };
    cfg.validate_types()?;
    Ok(cfg)
}

impl Config {
    pub fn mode(&self) -> &str {
        self.map.get("mode").map(String::as_str).unwrap_or("")
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))
    }

    pub fn get_opt(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn u64_key(&self, key: &str) -> Result<u64> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("key `{key}` is not an integer")))
    }

    pub fn usize_key(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("key `{key}` is not an integer")))
    }

    pub fn f64_key(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("key `{key}` is not a number")))
    }

    /// Comma-separated positive integers, e.g. widths `64,64,2`.
    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("key `{key}`: bad integer `{t}`")))
            })
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("key `{key}`: bad number `{t}`")))
            })
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self
            .get(key)?
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect())
    }

    /// `epoch:divisor` pairs, e.g. `140:10,170:10`. Empty string = none.
    pub fn milestones(&self, key: &str) -> Result<Vec<(usize, f64)>> {
        let raw = self.get(key)?;
        if raw.trim().is_empty() || raw.trim() == "none" {
            return Ok(vec![]);
        }
        raw.split(',')
            .map(|pair| {
                let (e, d) = pair.split_once(':').ok_or_else(|| {
                    Error::InvalidConfig(format!("key `{key}`: expected epoch:divisor, got `{pair}`"))
                })?;
                let epoch = e.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("key `{key}`: bad epoch `{e}`"))
                })?;
                let div = d.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("key `{key}`: bad divisor `{d}`"))
                })?;
                Ok((epoch, div))
            })
            .collect()
    }

    fn validate_types(&self) -> Result<()> {
        self.u64_key("seed")?;
        self.usize_key("threads")?;
        match self.get("dataset.kind")? {
            "moons" | "spirals" => {
                self.usize_key("dataset.n_train")?;
                self.usize_key("dataset.n_test")?;
                self.f64_key("dataset.noise")?;
                self.f64_key("dataset.turns")?;
            }
            "csv" => {
                self.get("dataset.train_path")?;
                self.get("dataset.test_path")?;
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "dataset.kind `{other}` is not moons|spirals|csv"
                )))
            }
        }
        self.usize_list("student.widths")?;
        self.usize_list("teacher.widths")?;
        self.usize_key("teachers.n")?;
        self.usize_key("students.n")?;
        self.f64_key("train.alpha")?;
        self.f64_key("train.beta")?;
        amalgam_core::distill::Amalgamation::parse(self.get("train.amalgamation")?)?;
        self.usize_key("train.epochs")?;
        self.usize_key("train.batch_size")?;
        self.f64_key("train.lr")?;
        self.milestones("train.lr_milestones")?;
        self.f64_key("train.momentum")?;
        self.f64_key("train.weight_decay")?;
        self.f64_key("attack.eps")?;
        self.f64_key("attack.step")?;
        self.usize_key("attack.iters")?;
        self.usize_key("svgd.particles")?;
        self.f64_key("svgd.sigma")?;
        self.f64_key("svgd.gamma")?;
        match self.get("svgd.pairing")? {
            "per_particle" | "averaged" => {}
            other => {
                return Err(Error::InvalidConfig(format!(
                    "svgd.pairing `{other}` is not per_particle|averaged"
                )))
            }
        }
        self.f64_key("probe.eps")?;
        self.f64_key("probe.step")?;
        self.usize_key("probe.iters")?;
        self.usize_key("probe.size")?;
        self.usize_key("probe.restarts")?;
        self.usize_key("diversity.sources")?;
        self.usize_key("boundary.resolution")?;
        if self.f64_list("boundary.lo")?.len() != 2 || self.f64_list("boundary.hi")?.len() != 2 {
            return Err(Error::InvalidConfig("boundary.lo/boundary.hi need two numbers".into()));
        }
        for name in self.str_list("eval.attacks")? {
            if name != "fgsm" && name != "pgd" {
                return Err(Error::InvalidConfig(format!(
                    "eval.attacks entry `{name}` is not fgsm|pgd"
                )));
            }
        }
        Ok(())
    }

    /// The resolved document: sorted keys, one per line, seed in a comment.
    pub fn to_text(&self) -> String {
        let seed = self.map.get("seed").cloned().unwrap_or_default();
        let mut out = format!("# resolved experiment config; seed={seed}\n");
        for (k, v) in &self.map {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}
