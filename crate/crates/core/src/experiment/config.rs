//! Flat `key = value` run configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment (also allowed after a value)
//! key = value
//! value := "quoted string" | bare-word | integer | real | true | false | [value, value, ...]
//! ```
//!
//! Every problem found while reading a file is reported at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{PerturbKind, PerturbStrategy};

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigValue {
    Str(String),
    Int(i64),
    Real(f64),
    Bool(bool),
    List(Vec<ConfigValue>),
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigValue::Str(s) => write!(f, "\"{s}\""),
            ConfigValue::Int(i) => write!(f, "{i}"),
            ConfigValue::Real(r) => write!(f, "{r}"),
            ConfigValue::Bool(b) => write!(f, "{b}"),
            ConfigValue::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

fn parse_scalar(text: &str) -> std::result::Result<ConfigValue, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("missing value".into());
    }
    if let Some(rest) = text.strip_prefix('"') {
        return rest
            .strip_suffix('"')
            .filter(|s| !s.contains('"'))
            .map(|s| ConfigValue::Str(s.to_string()))
            .ok_or_else(|| format!("unterminated string `{text}`"));
    }
    match text {
        "true" => return Ok(ConfigValue::Bool(true)),
        "false" => return Ok(ConfigValue::Bool(false)),
        _ => {}
    }
    if let Ok(i) = text.parse::<i64>() {
        return Ok(ConfigValue::Int(i));
    }
    if let Ok(r) = text.parse::<f64>() {
        return Ok(ConfigValue::Real(r));
    }
    if text
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, '[' | ']' | ',' | '='))
    {
        return Err(format!("cannot parse value `{text}`"));
    }
    Ok(ConfigValue::Str(text.to_string()))
}

pub fn parse_value(text: &str) -> std::result::Result<ConfigValue, String> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix('[') {
        let inner = rest
            .strip_suffix(']')
            .ok_or_else(|| format!("unterminated list `{text}`"))?;
        if inner.trim().is_empty() {
            return Ok(ConfigValue::List(vec![]));
        }
        return inner
            .split(',')
            .map(parse_scalar)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(ConfigValue::List);
    }
    parse_scalar(text)
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses the text of a config file into raw entries. Errors carry 1-based
/// line numbers.
pub fn parse_entries(
    text: &str,
) -> std::result::Result<BTreeMap<String, ConfigValue>, Vec<String>> {
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`", n + 1));
            continue;
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            errors.push(format!("line {}: invalid key `{key}`", n + 1));
            continue;
        }
        match parse_value(value) {
            Ok(v) => {
                if out.insert(key.to_string(), v).is_some() {
                    errors.push(format!("line {}: duplicate key `{key}`", n + 1));
                }
            }
            Err(e) => errors.push(format!("line {}: {e}", n + 1)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Blobs {
        n_per_class: usize,
        classes: usize,
        dim: usize,
        spread: f64,
    },
    Spirals {
        n_per_class: usize,
        classes: usize,
        noise: f64,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    /// Train/val/test fractions.
    pub split: [f64; 3],
    pub hidden: Vec<usize>,
    pub optimizer: PerturbKind,
    /// `None` means the optimizer's default.
    pub rho: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub per_step: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Spirals {
                n_per_class: 625,
                classes: 3,
                noise: 0.2,
            },
            split: [0.8, 0.1, 0.1],
            hidden: vec![32, 32],
            optimizer: PerturbKind::AaceRaw,
            rho: None,
            epochs: 100,
            batch_size: 64,
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            per_step: false,
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "n_per_class",
    "classes",
    "dim",
    "spread",
    "noise",
    "csv_path",
    "split",
    "hidden",
    "optimizer",
    "rho",
    "epochs",
    "batch_size",
    "base_lr",
    "momentum",
    "weight_decay",
    "seed",
    "output_dir",
    "per_step",
];

struct Reader<'a> {
    entries: &'a BTreeMap<String, ConfigValue>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn real(&mut self, key: &str, default: f64) -> f64 {
        match self.entries.get(key) {
            None => default,
            Some(ConfigValue::Real(r)) => *r,
            Some(ConfigValue::Int(i)) => *i as f64,
            Some(v) => {
                self.errors
                    .push(format!("{key}: expected a number, got {v}"));
                default
            }
        }
    }

    fn uint(&mut self, key: &str, default: usize) -> usize {
        match self.entries.get(key) {
            None => default,
            Some(ConfigValue::Int(i)) if *i >= 0 => *i as usize,
            Some(v) => {
                self.errors
                    .push(format!("{key}: expected a non-negative integer, got {v}"));
                default
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.entries.get(key) {
            None => None,
            Some(ConfigValue::Str(s)) => Some(s.clone()),
            Some(v) => {
                self.errors
                    .push(format!("{key}: expected a string, got {v}"));
                None
            }
        }
    }

    fn list<T>(&mut self, key: &str, item: impl Fn(&ConfigValue) -> Option<T>) -> Option<Vec<T>> {
        match self.entries.get(key) {
            None => None,
            Some(ConfigValue::List(items)) => {
                let parsed: Option<Vec<T>> = items.iter().map(&item).collect();
                if parsed.is_none() {
                    self.errors
                        .push(format!("{key}: bad list element in {}", self.entries[key]));
                }
                parsed
            }
            Some(v) => {
                self.errors.push(format!("{key}: expected a list, got {v}"));
                None
            }
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let DatasetSpec::Csv { path: csv } = &mut cfg.dataset {
            if csv.is_relative() {
                if let Some(parent) = path.parent() {
                    *csv = parent.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text).map_err(Error::Config)?;
        let mut r = Reader {
            entries: &entries,
            errors: Vec::new(),
        };
        for key in entries.keys() {
            if !KEYS.contains(&key.as_str()) {
                r.errors.push(format!("unknown key `{key}`"));
            }
        }
        let d = RunConfig::default();

        let dataset = match r.string("dataset").as_deref().unwrap_or("spirals") {
            "blobs" => DatasetSpec::Blobs {
                n_per_class: r.uint("n_per_class", 200),
                classes: r.uint("classes", 3),
                dim: r.uint("dim", 2),
                spread: r.real("spread", 0.1),
            },
            "spirals" => DatasetSpec::Spirals {
                n_per_class: r.uint("n_per_class", 625),
                classes: r.uint("classes", 3),
                noise: r.real("noise", 0.2),
            },
            "csv" => match r.string("csv_path") {
                Some(p) => DatasetSpec::Csv { path: p.into() },
                None => {
                    r.errors
                        .push("csv_path: required when dataset = csv".into());
                    DatasetSpec::Csv {
                        path: PathBuf::new(),
                    }
                }
            },
            other => {
                r.errors.push(format!(
                    "dataset: unknown dataset `{other}` (blobs, spirals, csv)"
                ));
                d.dataset.clone()
            }
        };

        let real = |v: &ConfigValue| match v {
            ConfigValue::Real(x) => Some(*x),
            ConfigValue::Int(i) => Some(*i as f64),
            _ => None,
        };
        let split = match r.list("split", real) {
            None => d.split,
            Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
            Some(v) => {
                r.errors
                    .push(format!("split: expected 3 fractions, got {}", v.len()));
                d.split
            }
        };
        let hidden = r
            .list("hidden", |v| match v {
                ConfigValue::Int(i) if *i >= 0 => Some(*i as usize),
                _ => None,
            })
            .unwrap_or(d.hidden.clone());

        let optimizer = match r.string("optimizer") {
            None => d.optimizer,
            Some(s) => s.parse().unwrap_or_else(|e: String| {
                r.errors.push(format!("optimizer: {e}"));
                d.optimizer
            }),
        };
        let rho = entries.contains_key("rho").then(|| r.real("rho", f64::NAN));
        let per_step = match entries.get("per_step") {
            None => false,
            Some(ConfigValue::Bool(b)) => *b,
            Some(v) => {
                r.errors
                    .push(format!("per_step: expected true or false, got {v}"));
                false
            }
        };
        let seed = match entries.get("seed") {
            None => d.seed,
            Some(ConfigValue::Int(i)) if *i >= 0 => *i as u64,
            Some(v) => {
                r.errors
                    .push(format!("seed: expected a non-negative integer, got {v}"));
                d.seed
            }
        };

        let cfg = RunConfig {
            dataset,
            split,
            hidden,
            optimizer,
            rho,
            epochs: r.uint("epochs", d.epochs),
            batch_size: r.uint("batch_size", d.batch_size),
            base_lr: r.real("base_lr", d.base_lr),
            momentum: r.real("momentum", d.momentum),
            weight_decay: r.real("weight_decay", d.weight_decay),
            seed,
            output_dir: r.string("output_dir").map_or(d.output_dir, PathBuf::from),
            per_step,
        };
        let mut errors = r.errors;
        errors.extend(cfg.problems());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Every invalid field, as messages.
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.epochs < 1 {
            e.push("epochs: must be at least 1".into());
        }
        if self.batch_size < 1 {
            e.push("batch_size: must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            e.push(format!("base_lr: must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            e.push(format!(
                "momentum: must be in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            e.push(format!(
                "weight_decay: must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if self.optimizer != PerturbKind::None {
            if let Some(rho) = self.rho {
                if !(rho > 0.0 && rho.is_finite()) {
                    e.push(format!(
                        "rho: must be positive for {}, got {rho}",
                        self.optimizer
                    ));
                }
            }
        }
        if self.hidden.contains(&0) {
            e.push("hidden: layer widths must be at least 1".into());
        }
        if self.split.iter().any(|f| f.is_nan() || *f <= 0.0)
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            e.push(format!(
                "split: need three positive fractions summing to 1, got {:?}",
                self.split
            ));
        }
        match &self.dataset {
            DatasetSpec::Blobs {
                n_per_class,
                classes,
                dim,
                spread,
            } => {
                if *n_per_class < 1 {
                    e.push("n_per_class: must be at least 1".into());
                }
                if *classes < 2 {
                    e.push("classes: must be at least 2".into());
                }
                if *dim < 2 {
                    e.push("dim: must be at least 2".into());
                }
                if spread.is_nan() || *spread < 0.0 {
                    e.push("spread: must be non-negative".into());
                }
            }
            DatasetSpec::Spirals {
                n_per_class,
                classes,
                noise,
            } => {
                if *n_per_class < 1 {
                    e.push("n_per_class: must be at least 1".into());
                }
                if *classes < 2 {
                    e.push("classes: must be at least 2".into());
                }
                if noise.is_nan() || *noise < 0.0 {
                    e.push("noise: must be non-negative".into());
                }
            }
            DatasetSpec::Csv { .. } => {}
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn effective_rho(&self) -> Option<f64> {
        match self.optimizer {
            PerturbKind::None => None,
            k => self.rho.or(k.default_rho()),
        }
    }

    pub fn strategy(&self) -> Result<PerturbStrategy> {
        match self.effective_rho() {
            None => Ok(PerturbStrategy::sgd()),
            Some(rho) => PerturbStrategy::new(self.optimizer, rho),
        }
    }
}
