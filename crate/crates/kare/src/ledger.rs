//! JSON-lines results ledger.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;

use kare_core::harness::{ResultsStore, RunRecord};

use crate::io::{append_line, read_text};

pub const LEDGER_FILE: &str = "ledger.jsonl";

/// Append-only ledger file. On load the last record of an id wins and a
/// truncated final line (interrupted write) is ignored.
#[derive(Debug)]
pub struct JsonlStore {
    path: PathBuf,
    records: BTreeMap<String, RunRecord>,
}

impl JsonlStore {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(LEDGER_FILE);
        let mut records = BTreeMap::new();
        if path.exists() {
            let text = read_text(&path)?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<RunRecord>(line) {
                    Ok(r) => {
                        records.insert(r.id.clone(), r);
                    }
                    Err(e) if i + 1 == lines.len() => {
                        log::warn!("ignoring truncated last ledger line: {e}");
                    }
                    Err(e) => anyhow::bail!("{}:{}: {e}", path.display(), i + 1),
                }
            }
        }
        Ok(JsonlStore { path, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl ResultsStore for JsonlStore {
    fn get(&self, id: &str) -> Option<RunRecord> {
        self.records.get(id).cloned()
    }

    fn append(&mut self, record: RunRecord) -> Result<(), String> {
        let line = serde_json::to_string(&record).map_err(|e| e.to_string())?;
        append_line(&self.path, &line).map_err(|e| format!("{e:#}"))?;
        self.records.insert(record.id.clone(), record);
        Ok(())
    }
}
