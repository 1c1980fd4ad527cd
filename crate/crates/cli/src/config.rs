//! Run configuration: JSON files with flat dotted keys, overridden by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use volpretext::Error;

/// Every accepted key. A config file may mix keys for several subcommands;
/// each subcommand only reads its own.
pub const KEYS: &[&str] = &[
    "seed",
    "preset",
    "out",
    "precision",
    "gen.role",
    "gen.subjects",
    "gen.grid",
    "gen.scans_min",
    "gen.scans_max",
    "gen.ad_fraction",
    "gen.noise_sigma",
    "gen.severity_min",
    "gen.severity_max",
    "prep.input",
    "prep.edge",
    "prep.clahe.tiles_per_axis",
    "prep.clahe.bins",
    "prep.clahe.clip_limit",
    "pretrain.data",
    "pretrain.task",
    "pretrain.epochs",
    "pretrain.batch_size",
    "pretrain.base_lr",
    "pretrain.lr_step",
    "pretrain.lr_gamma",
    "pretrain.crop_source",
    "pretrain.crop_target",
    "pretrain.label_scheme",
    "pretrain.dropout_p",
    "extract.model",
    "extract.data",
    "extract.cdr_threshold",
    "extract.batch",
    "eval.features",
    "eval.k",
    "eval.svm.c",
    "eval.svm.epochs",
    "eval.forest.trees",
    "eval.forest.min_samples_split",
    "audit.manifest",
    "audit.plan",
    "audit.pretrain_manifest",
    "audit.k",
    "report.inputs",
];

/// A failed run and the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_LEAKAGE: u8 = 5;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Parameter(_) | Error::Architecture { .. } => EXIT_CONFIG,
            Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
            Error::Leakage(_) => EXIT_LEAKAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Raw key/value pairs plus the values a subcommand actually resolved.
#[derive(Debug, Default)]
pub struct Settings {
    raw: BTreeMap<String, Value>,
    resolved: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, obj: &Map<String, Value>, out: &mut BTreeMap<String, Value>) {
    for (k, v) in obj {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Object(inner) => flatten(&key, inner, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl Settings {
    /// Parses a config file. Nested objects are accepted and flattened to
    /// dotted keys.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Failure::config(format!("config is not valid JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(Failure::config("config must be a JSON object"));
        };
        let mut raw = BTreeMap::new();
        flatten("", &obj, &mut raw);
        for key in raw.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(Failure::config(format!("unknown config key '{key}'")));
            }
        }
        Ok(Settings {
            raw,
            resolved: BTreeMap::new(),
        })
    }

    /// Command-line values win over the file.
    pub fn set(&mut self, key: &str, value: Option<impl Into<Value>>) {
        debug_assert!(KEYS.contains(&key), "{key}");
        if let Some(v) = value {
            self.raw.insert(key.to_string(), v.into());
        }
    }

    fn take(&mut self, key: &str, default: Value) -> Value {
        let v = self.raw.get(key).cloned().unwrap_or(default);
        self.resolved.insert(key.to_string(), v.clone());
        v
    }

    fn bad(key: &str, want: &str, got: &Value) -> Failure {
        Failure::config(format!("config key '{key}' must be {want}, got {got}"))
    }

    pub fn u64(&mut self, key: &str, default: u64) -> CliResult<u64> {
        let v = self.take(key, default.into());
        v.as_u64()
            .ok_or_else(|| Self::bad(key, "a non-negative integer", &v))
    }

    pub fn usize(&mut self, key: &str, default: usize) -> CliResult<usize> {
        self.u64(key, default as u64).map(|v| v as usize)
    }

    pub fn f64(&mut self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.take(key, default.into());
        v.as_f64().ok_or_else(|| Self::bad(key, "a number", &v))
    }

    pub fn string(&mut self, key: &str, default: &str) -> CliResult<String> {
        let v = self.take(key, default.into());
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| Self::bad(key, "a string", &v))
    }

    pub fn path(&mut self, key: &str) -> CliResult<PathBuf> {
        self.opt_path(key)?
            .ok_or_else(|| Failure::config(format!("missing required setting '{key}'")))
    }

    pub fn opt_path(&mut self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.take(key, Value::Null) {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(PathBuf::from(s))),
            other => Err(Self::bad(key, "a path string", &other)),
        }
    }

    pub fn paths(&mut self, key: &str) -> CliResult<Vec<PathBuf>> {
        match self.take(key, Value::Array(Vec::new())) {
            Value::Array(items) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(PathBuf::from)
                        .ok_or_else(|| Self::bad(key, "a list of path strings", v))
                })
                .collect(),
            other => Err(Self::bad(key, "a list of path strings", &other)),
        }
    }

    pub fn parsed<T>(&mut self, key: &str, default: &str) -> CliResult<T>
    where
        T: std::str::FromStr<Err = Error>,
    {
        let s = self.string(key, default)?;
        s.parse().map_err(Failure::from)
    }

    /// The settings a subcommand read, as a flat JSON object.
    pub fn resolved_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.resolved).expect("json values serialize");
        s.push('\n');
        s
    }
}
