//! Flat `key = value` experiment files. Keys mirror the long flag names; a
//! flag given on the command line wins over the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use privleak::{Error, Result};

/// Every key any subcommand understands. Anything else in a file is an error,
/// so one file can drive `train`, `eval`, and `sweep` alike.
pub const KNOWN_KEYS: &[&str] = &[
    "out",
    "data",
    "d",
    "D",
    "K",
    "n-train",
    "n-test",
    "alpha-y",
    "alpha-s",
    "sigma",
    "rho",
    "data-seed",
    "seed",
    "layers",
    "taps",
    "adversary",
    "loss",
    "lambda",
    "lambdas",
    "tap",
    "epochs",
    "batch-size",
    "lr",
    "adversary-steps",
    "jobs",
    "run",
    "baseline",
    "attack-seed",
    "attack-epochs",
    "attack-batch-size",
    "attack-lr",
    "known",
    "unknown-adversary",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value".into()))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key {key:?}")));
            }
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(bad(format!("duplicate key {key:?}")));
            }
        }
        Ok(ConfigFile { entries })
    }

    /// The file's value for `key`, parsed.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse().map(Some).map_err(|e| Error::Parse { line: *line, message: format!("{key}: {e}") })
            }
        }
    }

    /// `flag` if given, else the file's value for `key`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Like [`pick`](Self::pick) for a flag that arrives as raw text.
    pub fn pick_parse<T>(&self, flag: Option<&str>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(raw) => raw.parse().map(Some).map_err(|e| Error::Config(format!("--{key}: {e}"))),
            None => self.get(key),
        }
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}

/// Comma-separated list; an empty string is an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(List(Vec::new()));
        }
        s.split(',')
            .map(|item| item.trim().parse().map_err(|e: T::Err| format!("bad list item {item:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(List)
    }
}
