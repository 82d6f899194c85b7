//! Plain-text `key=value` documents with dotted section prefixes.
//!
//! ```text
//! # comment
//! corpus.vocab_size=8
//! corpus.snr_grid=-5,-2,0,2,5,10
//! ```
//!
//! Every key must be consumed by some reader; [`KvDoc::finish`] rejects
//! leftovers so a typo never silently falls back to a default.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct KvDoc {
    entries: BTreeMap<String, (usize, String)>,
    used: RefCell<BTreeSet<String>>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(key.clone(), (n + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
        }
        Ok(Self { entries, used: RefCell::new(BTreeSet::new()) })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        let hit = self.entries.get(key);
        if hit.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        hit
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: {key}={v}: {e}"))),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn read_list<T: FromStr>(&self, key: &str, slot: &mut Vec<T>) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some((line, v)) = self.raw(key) {
            if v.is_empty() {
                slot.clear();
                return Ok(());
            }
            *slot = v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| Error::Config(format!("line {line}: {key}: {s:?}: {e}"))))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    /// Errors on any key no reader consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, (line, _))| format!("{k} (line {line})"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

/// Accumulates `key=value` lines in insertion order.
#[derive(Debug, Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: &str, value: impl Display) {
        self.out.push_str(key);
        self.out.push('=');
        self.out.push_str(&value.to_string());
        self.out.push('\n');
    }

    pub fn put_list<T: Display>(&mut self, key: &str, values: &[T]) {
        let joined: Vec<String> = values.iter().map(ToString::to_string).collect();
        self.put(key, joined.join(","));
    }

    pub fn finish(self) -> String {
        self.out
    }
}
