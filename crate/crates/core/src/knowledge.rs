//! Offline knowledge stores: entity descriptions and frozen embedding tables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, EntityType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: vector has {got} components, store dimension is {expected}")]
    Dimension { line: usize, expected: usize, got: usize },
    #[error("line {line}: non-finite component")]
    NonFinite { line: usize },
    #[error("line {line}: duplicate key {key}")]
    Duplicate { line: usize, key: String },
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out
}

/// Textual entity descriptions keyed by kb id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DescriptionStore {
    pub scheme: String,
    entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DescriptionCoverage {
    pub mentions: usize,
    pub with_description: usize,
}

impl DescriptionCoverage {
    pub fn ratio(&self) -> f64 {
        if self.mentions == 0 {
            0.0
        } else {
            self.with_description as f64 / self.mentions as f64
        }
    }
}

impl DescriptionStore {
    pub fn new(scheme: &str) -> Self {
        DescriptionStore {
            scheme: scheme.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, kb_id: &str, description: &str) {
        self.entries.insert(kb_id.to_string(), description.to_string());
    }

    /// Parse `kb_id\tdescription` rows with backslash escapes. An optional
    /// header row `kb_id\tdescription` is skipped.
    pub fn parse_tsv(text: &str, scheme: &str) -> Result<Self, StoreError> {
        let mut store = DescriptionStore::new(scheme);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || (i == 0 && line == "kb_id\tdescription") {
                continue;
            }
            let Some((id, desc)) = line.split_once('\t') else {
                return Err(StoreError::Malformed {
                    line: i + 1,
                    message: "expected kb_id<TAB>description".to_string(),
                });
            };
            if store.entries.insert(id.to_string(), unescape(desc)).is_some() {
                return Err(StoreError::Duplicate {
                    line: i + 1,
                    key: id.to_string(),
                });
            }
        }
        Ok(store)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kb_id\tdescription\n");
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('\t');
            out.push_str(&escape(v));
            out.push('\n');
        }
        out
    }

    /// Stored text, or `""` for an absent or unknown id.
    pub fn lookup(&self, kb_id: Option<&str>) -> &str {
        kb_id
            .and_then(|k| self.entries.get(k))
            .map(String::as_str)
            .unwrap_or("")
    }

    pub fn contains(&self, kb_id: &str) -> bool {
        self.entries.contains_key(kb_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Union of several stores; earlier stores win on key collisions.
    pub fn merge(stores: &[DescriptionStore]) -> DescriptionStore {
        let mut out = DescriptionStore::new(
            &stores.iter().map(|s| s.scheme.as_str()).collect::<Vec<_>>().join("+"),
        );
        for s in stores {
            for (k, v) in &s.entries {
                out.entries.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        out
    }

    /// Mentions of the given types (all types when empty) that have a
    /// non-empty stored description.
    pub fn coverage(&self, corpus: &Corpus, types: &[EntityType]) -> DescriptionCoverage {
        let mut cov = DescriptionCoverage::default();
        for m in corpus.documents.iter().flat_map(|d| &d.mentions) {
            if !types.is_empty() && !types.contains(&m.entity_type) {
                continue;
            }
            cov.mentions += 1;
            if !self.lookup(m.kb_id.as_deref()).is_empty() {
                cov.with_description += 1;
            }
        }
        cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Kg,
    Literature,
}

/// Frozen entity vectors of one shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub scheme: String,
    pub kind: EmbeddingKind,
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(scheme: &str, kind: EmbeddingKind, dim: usize) -> Self {
        EmbeddingStore {
            scheme: scheme.to_string(),
            kind,
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Insert a vector; rejects wrong dimension or non-finite values.
    pub fn insert(&mut self, kb_id: &str, v: Vec<f64>) -> Result<(), StoreError> {
        if v.len() != self.dim {
            return Err(StoreError::Dimension {
                line: 0,
                expected: self.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(StoreError::NonFinite { line: 0 });
        }
        self.entries.insert(kb_id.to_string(), v);
        Ok(())
    }

    /// Parse a snapshot: a header `<label> <d>` followed by rows
    /// `kb_id<TAB>v1 v2 ... vd`.
    pub fn parse(text: &str, scheme: &str, kind: EmbeddingKind) -> Result<Self, StoreError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let dim = header
            .split_whitespace()
            .nth(1)
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or(StoreError::Malformed {
                line: 1,
                message: format!("expected header \"kb_id <dim>\", got {header:?}"),
            })?;
        let mut store = EmbeddingStore::new(scheme, kind, dim);
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let Some((id, rest)) = line.split_once('\t') else {
                return Err(StoreError::Malformed {
                    line: i + 1,
                    message: "expected kb_id<TAB>values".to_string(),
                });
            };
            let values: Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|e| StoreError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if values.len() != dim {
                return Err(StoreError::Dimension {
                    line: i + 1,
                    expected: dim,
                    got: values.len(),
                });
            }
            if values.iter().any(|x| !x.is_finite()) {
                return Err(StoreError::NonFinite { line: i + 1 });
            }
            if store.entries.insert(id.to_string(), values).is_some() {
                return Err(StoreError::Duplicate {
                    line: i + 1,
                    key: id.to_string(),
                });
            }
        }
        Ok(store)
    }

    /// Snapshot text; floats use shortest round-trip formatting.
    pub fn to_snapshot(&self) -> String {
        let mut out = format!("kb_id {}\n", self.dim);
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('\t');
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&format!("{x:?}"));
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the snapshot text; identifies the store in checkpoints.
    pub fn content_hash(&self) -> String {
        crate::hash::sha256_hex(self.to_snapshot().as_bytes())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kb_id: &str) -> Option<&[f64]> {
        self.entries.get(kb_id).map(Vec::as_slice)
    }

    /// `head ⊕ tail`, length `2d`; a missing entity contributes zeros.
    pub fn lookup_pair(&self, head: Option<&str>, tail: Option<&str>) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.dim];
        if let Some(h) = head.and_then(|h| self.get(h)) {
            out[..self.dim].copy_from_slice(h);
        }
        if let Some(t) = tail.and_then(|t| self.get(t)) {
            out[self.dim..].copy_from_slice(t);
        }
        out
    }
}
