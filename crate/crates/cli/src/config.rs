//! Experiment configuration files.
//!
//! The format is flat `key = value` text. A `[section]` line prefixes the
//! keys that follow with `section.`; keys before the first section are
//! top-level (`experiment`, `seed`, `output`, `threads`). `#` and `;` start
//! comment lines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::experiments::{lookup, Experiment};
use crate::params::{Param, Params};

pub const TOP_LEVEL: [&str; 4] = ["experiment", "seed", "output", "threads"];
pub const SEED_ENV: &str = "MLAB_SEED";
const DEFAULT_SEED: u64 = 1;

/// Where a setting came from, for error messages and the manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Line(usize),
    Env,
    Flag(String),
}

#[derive(Debug, Clone)]
pub struct Setting {
    pub value: String,
    pub origin: Origin,
}

/// A validation failure anchored to a file line, flag or variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Settings as written, before validation.
#[derive(Debug, Clone)]
pub struct RawConfig {
    pub path: String,
    pub settings: BTreeMap<String, Setting>,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            location: name.clone(),
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&name, &text)
    }

    pub fn parse(path: &str, text: &str) -> Result<Self, ConfigError> {
        let mut settings = BTreeMap::new();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let err = |message: String| ConfigError {
                location: format!("{path}:{n}"),
                message,
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(format!("malformed section header `{line}`")))?;
                let name = name.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(err(format!("invalid section name `{name}`")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if k.is_empty() || k.contains('.') || k.contains(char::is_whitespace) {
                return Err(err(format!("invalid key `{k}`")));
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            let setting = Setting {
                value: v.trim().to_string(),
                origin: Origin::Line(n),
            };
            if let Some(prev) = settings.insert(key.clone(), setting) {
                if let Origin::Line(p) = prev.origin {
                    return Err(err(format!("duplicate key `{key}` (first set on line {p})")));
                }
            }
        }
        Ok(Self {
            path: path.to_string(),
            settings,
        })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>, origin: Origin) {
        self.settings.insert(
            key.into(),
            Setting {
                value: value.into(),
                origin,
            },
        );
    }

    /// Anchor for messages about `key`.
    pub fn locate(&self, key: &str) -> String {
        match self.settings.get(key).map(|s| &s.origin) {
            Some(Origin::Line(n)) => format!("{}:{n}", self.path),
            Some(Origin::Env) => SEED_ENV.to_string(),
            Some(Origin::Flag(f)) => f.clone(),
            _ => self.path.clone(),
        }
    }

    fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            location: self.locate(key),
            message: message.into(),
        }
    }

    /// The seed from [`SEED_ENV`] overrides the file.
    pub fn apply_env(&mut self, seed: Option<String>) {
        if let Some(s) = seed {
            self.set("seed", s, Origin::Env);
        }
    }

    /// Applies `--key value` / `--key=value` overrides. Bare names resolve to
    /// the experiment's unique key with that name; dotted names are used as is.
    pub fn apply_flags(&mut self, flags: &[String]) -> Result<(), ConfigError> {
        let mut pairs = Vec::new();
        let mut it = flags.iter();
        while let Some(flag) = it.next() {
            let bad = |message: String| ConfigError {
                location: flag.clone(),
                message,
            };
            let body = flag
                .strip_prefix("--")
                .ok_or_else(|| bad("expected `--key value`".into()))?;
            let (name, value) = match body.split_once('=') {
                Some((n, v)) => (n.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| bad("missing value".into()))?;
                    (body.to_string(), v.clone())
                }
            };
            pairs.push((format!("--{name}"), name.replace('-', "_"), value));
        }
        if let Some((flag, _, v)) = pairs.iter().find(|p| p.1 == "experiment") {
            self.set("experiment", v.clone(), Origin::Flag(flag.clone()));
        }
        let experiment = self.experiment()?;
        for (flag, name, value) in pairs {
            if name == "experiment" {
                continue;
            }
            let key = if TOP_LEVEL.contains(&name.as_str()) || name.contains('.') {
                name
            } else {
                let hits: Vec<&Param> = experiment.params.iter().filter(|p| p.name() == name).collect();
                match hits.as_slice() {
                    [p] => p.key.to_string(),
                    [] => {
                        return Err(ConfigError {
                            location: flag,
                            message: format!("experiment `{}` has no parameter `{name}`", experiment.name),
                        })
                    }
                    _ => {
                        return Err(ConfigError {
                            location: flag,
                            message: format!(
                                "`{name}` is ambiguous: {}",
                                hits.iter().map(|p| p.key).collect::<Vec<_>>().join(", ")
                            ),
                        })
                    }
                }
            };
            self.set(key, value, Origin::Flag(flag));
        }
        Ok(())
    }

    pub fn experiment(&self) -> Result<&'static Experiment, ConfigError> {
        let s = self.settings.get("experiment").ok_or_else(|| ConfigError {
            location: self.path.clone(),
            message: "missing required key `experiment`".into(),
        })?;
        lookup(&s.value).ok_or_else(|| self.error("experiment", format!("unknown experiment `{}` (see `mlab list`)", s.value)))
    }
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: &'static Experiment,
    pub seed: u64,
    pub seed_origin: &'static str,
    pub output: PathBuf,
    pub threads: usize,
    pub params: Params,
    /// Every experiment parameter as text, defaults filled in.
    pub resolved: BTreeMap<String, String>,
}

pub fn resolve(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
    let experiment = raw.experiment()?;
    for key in raw.settings.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) && !experiment.params.iter().any(|p| p.key == key) {
            return Err(raw.error(key, format!("unknown key `{key}` for experiment `{}`", experiment.name)));
        }
    }
    let (seed, seed_origin) = match raw.settings.get("seed") {
        Some(s) => {
            let v = s
                .value
                .parse::<u64>()
                .map_err(|_| raw.error("seed", format!("seed must be a nonnegative integer, got `{}`", s.value)))?;
            let origin = match s.origin {
                Origin::Env => "env",
                Origin::Flag(_) => "flag",
                _ => "config",
            };
            (v, origin)
        }
        None => (DEFAULT_SEED, "default"),
    };
    let output = match raw.settings.get("output") {
        Some(s) if s.value.is_empty() => return Err(raw.error("output", "output directory must not be empty")),
        Some(s) => PathBuf::from(&s.value),
        None => PathBuf::from("mlab-out").join(experiment.name),
    };
    let threads = match raw.settings.get("threads") {
        Some(s) => s
            .value
            .parse::<usize>()
            .map_err(|_| raw.error("threads", format!("threads must be a nonnegative integer, got `{}`", s.value)))?,
        None => 0,
    };
    let mut values = BTreeMap::new();
    let mut resolved = BTreeMap::new();
    for p in experiment.params {
        let text = match (raw.settings.get(p.key), p.default) {
            (Some(s), _) => s.value.clone(),
            (None, Some(d)) => d.to_string(),
            (None, None) => {
                return Err(ConfigError {
                    location: raw.path.clone(),
                    message: format!("missing required key `{}` (section [{}])", p.name(), p.section()),
                })
            }
        };
        let v = p
            .kind
            .parse(&text)
            .map_err(|m| raw.error(p.key, format!("invalid `{}`: {m}", p.key)))?;
        values.insert(p.key, v);
        resolved.insert(p.key.to_string(), text);
    }
    let params = Params { values };
    (experiment.check)(&params).map_err(|(key, m)| raw.error(key, format!("invalid `{key}`: {m}")))?;
    Ok(RunConfig {
        experiment,
        seed,
        seed_origin,
        output,
        threads,
        params,
        resolved,
    })
}

/// A config that sets every required key of `experiment` to its sample
/// value, with the optional keys listed as comments.
pub fn sample_config(experiment: &Experiment) -> String {
    let mut out = format!(
        "# {}\nexperiment = {}\nseed = {DEFAULT_SEED}\noutput = mlab-out/{}\n",
        experiment.description, experiment.name, experiment.name
    );
    let sections: BTreeSet<&str> = experiment.params.iter().map(|p| p.section()).collect();
    for section in sections {
        out.push_str(&format!("\n[{section}]\n"));
        for p in experiment.params.iter().filter(|p| p.section() == section) {
            let line = format!("{} = {}", p.name(), p.sample);
            if p.default.is_some() {
                out.push_str(&format!("# {line}    ({}; {})\n", p.kind.describe(), p.doc));
            } else {
                out.push_str(&format!("{line}\n"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "# comment\nexperiment = peano-markov\nseed = 4\n\n[peano]\ndelay = exponential(1)\n";

    #[test]
    fn parses_sections() {
        let raw = RawConfig::parse("c.ini", GOOD).unwrap();
        assert_eq!(raw.settings["peano.delay"].value, "exponential(1)");
        assert_eq!(raw.settings["peano.delay"].origin, Origin::Line(6));
        let run = resolve(&raw).unwrap();
        assert_eq!(run.seed, 4);
        assert_eq!(run.seed_origin, "config");
        assert_eq!(run.resolved["peano.tolerance"], "1e-8");
    }

    #[test]
    fn syntax_errors_are_line_anchored() {
        let e = RawConfig::parse("c.ini", "experiment = x\nnot a pair\n").unwrap_err();
        assert_eq!(e.location, "c.ini:2");
        let e = RawConfig::parse("c.ini", "a = 1\n[s\n").unwrap_err();
        assert_eq!(e.location, "c.ini:2");
        let e = RawConfig::parse("c.ini", "a = 1\na = 2\n").unwrap_err();
        assert!(e.message.contains("duplicate"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let raw = RawConfig::parse("c.ini", &format!("{GOOD}bogus = 1\n")).unwrap();
        let e = resolve(&raw).unwrap_err();
        assert_eq!(e.location, "c.ini:7");
        assert!(e.message.contains("unknown key `peano.bogus`"), "{e}");
    }

    #[test]
    fn invalid_values_are_line_anchored() {
        let raw = RawConfig::parse("c.ini", "experiment = girsanov-qv\n[girsanov]\ndt = -0.1\n").unwrap();
        let e = resolve(&raw).unwrap_err();
        assert_eq!(e.location, "c.ini:3");
        assert!(e.message.contains("girsanov.dt"), "{e}");
    }

    #[test]
    fn missing_required_key() {
        let raw = RawConfig::parse("c.ini", "experiment = peano-markov\n").unwrap();
        let e = resolve(&raw).unwrap_err();
        assert!(e.message.contains("delay"), "{e}");
    }

    #[test]
    fn env_and_flags_override() {
        let mut raw = RawConfig::parse("c.ini", GOOD).unwrap();
        raw.apply_env(Some("99".into()));
        assert_eq!(resolve(&raw).unwrap().seed, 99);
        raw.apply_flags(&["--seed".into(), "5".into(), "--tolerance=1e-6".into()]).unwrap();
        let run = resolve(&raw).unwrap();
        assert_eq!(run.seed, 5);
        assert_eq!(run.resolved["peano.tolerance"], "1e-6");
        let e = raw.apply_flags(&["--nope".into(), "1".into()]).unwrap_err();
        assert_eq!(e.location, "--nope");
        raw.apply_env(Some("x".into()));
        assert_eq!(resolve(&raw).unwrap_err().location, SEED_ENV);
    }

    #[test]
    fn unknown_experiment() {
        let raw = RawConfig::parse("c.ini", "\nexperiment = nope\n").unwrap();
        assert_eq!(resolve(&raw).unwrap_err().location, "c.ini:2");
    }
}
