//! Flat `key = value` configuration with `[command]` sections.
//!
//! Precedence: built-in defaults, then the config file, then flags. Keys
//! outside the tables below are rejected, in files and on the command line.

use crate::CliError;
use dpagg_core::sampler::{seed_from_hex, seed_to_hex, Seed};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Value,
    /// Boolean switch; presence on the command line means `true`.
    Switch,
    /// Comma-separated list also accepted as trailing positional arguments.
    Positional,
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub kind: KeyKind,
    pub help: &'static str,
}

const fn v(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        kind: KeyKind::Value,
        help,
    }
}

const fn switch(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: "false",
        kind: KeyKind::Switch,
        help,
    }
}

pub const GLOBAL_KEYS: &[Key] = &[
    v("seed", "0", "master seed, up to 64 hex digits"),
    v(
        "out_dir",
        ".",
        "directory for outputs and the resolved-config snapshot",
    ),
];

pub const AGGREGATE_KEYS: &[Key] = &[
    v("clients", "16", "number of clients k"),
    v("dim", "1024", "vector length m"),
    v("lwe_preset", "a", "LWE preset: a, b or c"),
    v("dropout", "0", "fraction of clients that drop out"),
    v(
        "dropout_round",
        "mask",
        "round before which dropouts vanish: mask, share, sum, result",
    ),
    v(
        "adversary",
        "none",
        "adversary spec, e.g. corrupt=3,behavior=bad_share_sum",
    ),
    v("mode", "semi-honest", "semi-honest or malicious"),
    v(
        "routing",
        "server",
        "share-sum routing: server or broadcast",
    ),
    switch("zero_error", "zero LWE error vectors (exact sums)"),
    switch("parallel", "run client computations on worker threads"),
    switch("streamed", "never materialize the public matrix"),
    v(
        "report",
        "",
        "communication report CSV (relative to out_dir)",
    ),
];

pub const BENCH_KEYS: &[Key] = &[
    v("clients", "8,32,128", "client counts"),
    v("dims", "1024,16384", "vector lengths"),
    v("dropouts", "0", "dropout fractions"),
    v(
        "dropout_round",
        "share",
        "round before which dropouts vanish",
    ),
    v("presets", "a", "LWE presets"),
    v("modes", "semi-honest", "security modes"),
    v("reps", "3", "repetitions per configuration (at least 3)"),
    switch("paper_scale", "allow k up to 1000 and m up to 100000"),
    v("output", "bench.csv", "output CSV (relative to out_dir)"),
];

pub const PARAMS_KEYS: &[Key] = &[
    v("preset", "a", "LWE preset, ignored when n and q are given"),
    v("n", "", "custom LWE dimension"),
    v("q", "", "custom prime modulus"),
    v("beta_q", "3.2", "error width"),
    v(
        "chi_width",
        "over-sqrt-2pi",
        "how beta_q maps to sd: over-sqrt-2pi or std-dev",
    ),
];

pub const ACCOUNTANT_KEYS: &[Key] = &[
    v("sigma", "1", "aggregate noise scale"),
    v("clip", "5", "clipping bound C"),
    v("batch", "64", "batch size b"),
    v("epochs", "1", "epochs E"),
    v("delta", "1e-5", "target delta"),
    v("dim", "1", "model parameter count d"),
    v("honest_fraction", "1", "fraction of clients adding noise"),
    switch("discrete", "headline the discrete-noise analysis"),
    v("curves", "", "write the RDP curves here instead of stdout"),
];

pub const TRAIN_KEYS: &[Key] = &[
    v("model", "logreg", "logreg, mlp or mlp:<hidden>"),
    v(
        "data",
        "synthetic",
        "synthetic or a CSV path (features..., label)",
    ),
    v("features", "99", "synthetic feature count"),
    v("examples", "2000", "synthetic example count"),
    v("margin", "0.1", "synthetic class margin"),
    v("validation", "0.2", "held-out fraction"),
    v("sigma", "1", "aggregate DP noise scale (0, 1, 2, 4, 8, 16)"),
    v("batch", "32", "batch size b (clients per round)"),
    v("epochs", "5", "epochs E"),
    v("learning_rate", "0.01", "learning rate"),
    v("momentum", "0.9", "momentum"),
    v("clip", "5", "clipping bound C"),
    v("delta", "1e-5", "target delta"),
    v("lwe_preset", "a", "LWE preset"),
    v("adversary", "none", "adversary spec"),
    v("mode", "semi-honest", "semi-honest or malicious"),
    v("aggregator", "secure", "secure or plain"),
    v(
        "gradients",
        "",
        "train from a gradient file instead of a model",
    ),
    v(
        "dump_gradients",
        "",
        "write raw per-example gradients to this file",
    ),
    v(
        "metrics",
        "metrics.csv",
        "per-epoch metrics CSV (relative to out_dir)",
    ),
];

pub const REPORT_KEYS: &[Key] = &[
    Key {
        name: "inputs",
        default: "",
        kind: KeyKind::Positional,
        help: "CSV files to merge",
    },
    v(
        "output",
        "report.csv",
        "grouped medians (relative to out_dir)",
    ),
    v(
        "curves",
        "",
        "expansion-vs-m curve CSV (relative to out_dir)",
    ),
];

pub const COMMANDS: &[(&str, &[Key], &str)] = &[
    ("aggregate", AGGREGATE_KEYS, "run one masking aggregation"),
    ("bench", BENCH_KEYS, "sweep configurations and record costs"),
    ("params", PARAMS_KEYS, "print LWE parameter facts"),
    (
        "accountant",
        ACCOUNTANT_KEYS,
        "compute epsilon for a training configuration",
    ),
    ("train", TRAIN_KEYS, "federated DP training"),
    (
        "report",
        REPORT_KEYS,
        "merge sweep CSVs into plot-ready aggregates",
    ),
];

pub fn keys_for(command: &str) -> Option<&'static [Key]> {
    COMMANDS
        .iter()
        .find(|(c, _, _)| *c == command)
        .map(|(_, k, _)| *k)
}

/// `(section, key, value)` triples of a config file; top-level keys have no
/// section.
pub fn parse_text(text: &str) -> Result<Vec<(Option<String>, String, String)>, CliError> {
    let mut section = None;
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if keys_for(name).is_none() {
                return Err(CliError::Config(format!(
                    "line {}: unknown section [{name}]",
                    no + 1
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, val) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "line {}: expected key = value, got {line:?}",
                no + 1
            ))
        })?;
        let key = k.trim().replace('-', "_");
        let table = match &section {
            None => GLOBAL_KEYS,
            Some(s) => keys_for(s).expect("section checked"),
        };
        if !table.iter().chain(GLOBAL_KEYS).any(|x| x.name == key) {
            let place = section
                .as_deref()
                .map_or("top level".to_string(), |s| format!("[{s}]"));
            return Err(CliError::Config(format!(
                "line {}: unknown key {key:?} in {place}",
                no + 1
            )));
        }
        out.push((section.clone(), key, val.trim().to_string()));
    }
    Ok(out)
}

/// Resolved settings of one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: String,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Defaults, then `file` (top-level keys and the command's own section),
    /// then `flags`.
    pub fn resolve(
        command: &str,
        file: Option<&Path>,
        flags: &[(String, String)],
    ) -> Result<Self, CliError> {
        let table = keys_for(command)
            .ok_or_else(|| CliError::Config(format!("unknown command {command:?}")))?;
        let mut values: BTreeMap<String, String> = GLOBAL_KEYS
            .iter()
            .chain(table)
            .map(|k| (k.name.to_string(), k.default.to_string()))
            .collect();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            for (section, key, val) in parse_text(&text)? {
                if section.is_none() || section.as_deref() == Some(command) {
                    values.insert(key, val);
                }
            }
        }
        for (key, val) in flags {
            if !values.contains_key(key) {
                return Err(CliError::Config(format!(
                    "unknown option {key:?} for {command}"
                )));
            }
            values.insert(key.clone(), val.clone());
        }
        let cfg = RunConfig {
            command: command.to_string(),
            values,
        };
        cfg.seed()?;
        Ok(cfg)
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key:?} is not declared"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.str(key);
        raw.parse()
            .map_err(|e| CliError::Config(format!("{key} = {raw:?}: {e}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        self.get(key)
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Config(format!("{key}: {s:?}: {e}")))
            })
            .collect()
    }

    /// Empty string means "not set".
    pub fn optional(&self, key: &str) -> Option<&str> {
        Some(self.str(key)).filter(|s| !s.is_empty())
    }

    pub fn seed(&self) -> Result<Seed, CliError> {
        seed_from_hex(self.str("seed")).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.str("out_dir"))
    }

    /// Joins relative output paths onto `out_dir`.
    pub fn output_path(&self, key: &str) -> Option<PathBuf> {
        self.optional(key).map(|p| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                self.out_dir().join(p)
            }
        })
    }

    /// Config-file text that reproduces this run; the seed is written in full.
    pub fn snapshot(&self) -> String {
        let table = keys_for(&self.command).expect("resolved command");
        let mut s = String::from("# resolved configuration\n");
        for k in GLOBAL_KEYS {
            let val = if k.name == "seed" {
                seed_to_hex(&self.seed().expect("validated"))
            } else {
                self.str(k.name).to_string()
            };
            s.push_str(&format!("{} = {}\n", k.name, val));
        }
        s.push_str(&format!("\n[{}]\n", self.command));
        for k in table {
            s.push_str(&format!("{} = {}\n", k.name, self.str(k.name)));
        }
        s
    }

    pub fn write_snapshot(&self) -> Result<PathBuf, CliError> {
        let dir = self.out_dir();
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.resolved.conf", self.command));
        fs::write(&path, self.snapshot())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
