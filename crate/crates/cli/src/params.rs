//! Typed experiment parameters.

use std::collections::BTreeMap;

use mlab_core::peano::{Delay, DelayLaw};

/// How a parameter's text is parsed and checked.
#[derive(Debug, Clone, Copy)]
pub enum Kind {
    /// Any finite number.
    Real,
    /// Finite and `> 0`.
    Positive,
    /// Finite and `≥ 0`.
    NonNegative,
    /// Integer `≥ 1`.
    Count,
    /// Integer in `[lo, hi]`.
    CountIn(usize, usize),
    /// Number in the open interval `(lo, hi)`.
    Open(f64, f64),
    /// Comma-separated finite numbers.
    Reals,
    /// Comma-separated positive numbers.
    Positives,
    /// Comma-separated rates in `[0, inf]` (`inf` allowed).
    Rates,
    /// Comma-separated `s:t` pairs with `0 ≤ s < t`.
    Pairs,
    /// One of the listed words.
    Choice(&'static [&'static str]),
    /// Comma-separated words from the list.
    Choices(&'static [&'static str]),
    /// Delay law: `exponential(r)`, `uniform(a,b)`, `dirac(a)`, `dirac(inf)`.
    Law,
}

impl Kind {
    pub fn describe(&self) -> String {
        match self {
            Kind::Real => "number".into(),
            Kind::Positive => "positive number".into(),
            Kind::NonNegative => "nonnegative number".into(),
            Kind::Count => "positive integer".into(),
            Kind::CountIn(lo, hi) => format!("integer in [{lo}, {hi}]"),
            Kind::Open(lo, hi) => format!("number in ({lo}, {hi})"),
            Kind::Reals => "list of numbers".into(),
            Kind::Positives => "list of positive numbers".into(),
            Kind::Rates => "list of rates in [0, inf]".into(),
            Kind::Pairs => "list of s:t pairs".into(),
            Kind::Choice(w) => format!("one of {}", w.join("|")),
            Kind::Choices(w) => format!("list from {}", w.join("|")),
            Kind::Law => "delay law".into(),
        }
    }

    pub fn parse(&self, text: &str) -> Result<Value, String> {
        let text = text.trim();
        match *self {
            Kind::Real => finite(text).map(Value::Num),
            Kind::Positive => positive(text).map(Value::Num),
            Kind::NonNegative => {
                let v = finite(text)?;
                if v >= 0.0 {
                    Ok(Value::Num(v))
                } else {
                    Err(format!("must be >= 0, got {v}"))
                }
            }
            Kind::Count => count(text, 1, usize::MAX).map(Value::Count),
            Kind::CountIn(lo, hi) => count(text, lo, hi).map(Value::Count),
            Kind::Open(lo, hi) => {
                let v = finite(text)?;
                if v > lo && v < hi {
                    Ok(Value::Num(v))
                } else {
                    Err(format!("must lie in ({lo}, {hi}), got {v}"))
                }
            }
            Kind::Reals => list(text)?.iter().map(|s| finite(s)).collect::<Result<_, _>>().map(Value::List),
            Kind::Positives => list(text)?.iter().map(|s| positive(s)).collect::<Result<_, _>>().map(Value::List),
            Kind::Rates => list(text)?.iter().map(|s| rate(s)).collect::<Result<_, _>>().map(Value::List),
            Kind::Pairs => list(text)?
                .iter()
                .map(|p| {
                    let (s, t) = p.split_once(':').ok_or_else(|| format!("`{p}` is not an s:t pair"))?;
                    let (s, t) = (finite(s.trim())?, finite(t.trim())?);
                    if s >= 0.0 && s < t {
                        Ok((s, t))
                    } else {
                        Err(format!("pair `{p}` needs 0 <= s < t"))
                    }
                })
                .collect::<Result<_, _>>()
                .map(Value::Pairs),
            Kind::Choice(words) => word(text, words).map(Value::Word),
            Kind::Choices(words) => {
                list(text)?.iter().map(|s| word(s, words)).collect::<Result<_, _>>().map(Value::Words)
            }
            Kind::Law => law(text).map(Value::Law),
        }
    }
}

/// A parsed parameter value.
#[derive(Debug, Clone)]
pub enum Value {
    Num(f64),
    Count(usize),
    List(Vec<f64>),
    Pairs(Vec<(f64, f64)>),
    Word(String),
    Words(Vec<String>),
    Law(DelayLaw),
}

/// A parameter an experiment accepts; `default = None` marks it required.
#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub key: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    /// Value written into generated sample configs for required keys.
    pub sample: &'static str,
    pub doc: &'static str,
}

impl Param {
    pub const fn opt(key: &'static str, kind: Kind, default: &'static str, doc: &'static str) -> Self {
        Self {
            key,
            kind,
            default: Some(default),
            sample: default,
            doc,
        }
    }

    pub const fn req(key: &'static str, kind: Kind, sample: &'static str, doc: &'static str) -> Self {
        Self {
            key,
            kind,
            default: None,
            sample,
            doc,
        }
    }

    pub fn section(&self) -> &'static str {
        self.key.split_once('.').map_or("", |(s, _)| s)
    }

    pub fn name(&self) -> &'static str {
        self.key.split_once('.').map_or(self.key, |(_, n)| n)
    }
}

/// The validated parameters of one run.
#[derive(Debug, Clone)]
pub struct Params {
    pub values: BTreeMap<&'static str, Value>,
}

impl Params {
    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("experiment reads undeclared key `{key}`"))
    }

    pub fn num(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Num(v) => *v,
            v => panic!("`{key}` is not a number: {v:?}"),
        }
    }

    pub fn count(&self, key: &str) -> usize {
        match self.get(key) {
            Value::Count(v) => *v,
            v => panic!("`{key}` is not a count: {v:?}"),
        }
    }

    pub fn list(&self, key: &str) -> &[f64] {
        match self.get(key) {
            Value::List(v) => v,
            v => panic!("`{key}` is not a list: {v:?}"),
        }
    }

    pub fn pairs(&self, key: &str) -> &[(f64, f64)] {
        match self.get(key) {
            Value::Pairs(v) => v,
            v => panic!("`{key}` is not a pair list: {v:?}"),
        }
    }

    pub fn word(&self, key: &str) -> &str {
        match self.get(key) {
            Value::Word(v) => v,
            v => panic!("`{key}` is not a word: {v:?}"),
        }
    }

    pub fn words(&self, key: &str) -> &[String] {
        match self.get(key) {
            Value::Words(v) => v,
            v => panic!("`{key}` is not a word list: {v:?}"),
        }
    }

    pub fn law(&self, key: &str) -> &DelayLaw {
        match self.get(key) {
            Value::Law(v) => v,
            v => panic!("`{key}` is not a delay law: {v:?}"),
        }
    }
}

fn finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {v}"))
    }
}

fn rate(s: &str) -> Result<f64, String> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    let v = finite(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("rate must lie in [0, inf], got {v}"))
    }
}

fn count(s: &str, lo: usize, hi: usize) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= lo && v <= hi => Ok(v),
        Ok(v) => Err(format!("must lie in [{lo}, {hi}], got {v}")),
        Err(_) => Err(format!("`{s}` is not a nonnegative integer")),
    }
}

fn list(s: &str) -> Result<Vec<String>, String> {
    let items: Vec<String> = s.split(',').map(|p| p.trim().to_string()).collect();
    if items.iter().any(String::is_empty) {
        return Err(format!("`{s}` has an empty list item"));
    }
    Ok(items)
}

fn word(s: &str, words: &[&str]) -> Result<String, String> {
    if words.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!("`{s}` is not one of {}", words.join("|")))
    }
}

fn law(s: &str) -> Result<DelayLaw, String> {
    let bad = || format!("`{s}` is not a delay law (exponential(r), uniform(a,b), dirac(a), dirac(inf))");
    let (name, rest) = s.split_once('(').ok_or_else(bad)?;
    let args: Vec<&str> = rest.strip_suffix(')').ok_or_else(bad)?.split(',').map(str::trim).collect();
    let law = match (name.trim(), args.as_slice()) {
        ("exponential", [r]) => DelayLaw::exponential(rate(r)?),
        ("uniform", [a, b]) => DelayLaw::uniform(finite(a)?, finite(b)?),
        ("dirac", ["inf"]) => DelayLaw::dirac(Delay::Never),
        ("dirac", [a]) => DelayLaw::dirac(Delay::At(finite(a)?)),
        _ => return Err(bad()),
    };
    law.map_err(|e| e.to_string())
}
