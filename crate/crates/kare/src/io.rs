//! Reading and writing the on-disk formats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use kare_core::corpus::{parse_interchange, to_interchange, Corpus, MappingTable};
use kare_core::knowledge::{DescriptionStore, EmbeddingKind, EmbeddingStore};
use kare_core::molenc::{
    fingerprint, fingerprint_cache_line, parse_fingerprint_cache_line, parse_smiles, Fingerprint, FingerprintMethod,
    FingerprintParams,
};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_interchange(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_text(path, &to_interchange(corpus))
}

pub fn load_mapping(path: &Path, source_scheme: &str, target_scheme: &str) -> Result<MappingTable> {
    MappingTable::parse_tsv(&read_text(path)?, source_scheme, target_scheme)
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn load_descriptions(path: &Path, scheme: &str) -> Result<DescriptionStore> {
    DescriptionStore::parse_tsv(&read_text(path)?, scheme).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_embeddings(path: &Path, scheme: &str, kind: EmbeddingKind) -> Result<EmbeddingStore> {
    EmbeddingStore::parse(&read_text(path)?, scheme, kind).with_context(|| format!("parsing {}", path.display()))
}

/// `kb_id<TAB>smiles` rows; a leading `kb_id<TAB>smiles` header is skipped.
pub fn load_smiles(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line == "kb_id\tsmiles") {
            continue;
        }
        let Some((id, smi)) = line.split_once('\t') else {
            bail!("{}:{}: expected kb_id<TAB>smiles", path.display(), i + 1);
        };
        if out.insert(id.to_string(), smi.trim().to_string()).is_some() {
            bail!("{}:{}: duplicate kb id {id}", path.display(), i + 1);
        }
    }
    Ok(out)
}

/// Fingerprint every parseable SMILES; unparseable entries are logged and
/// left out, so their entities fall back to zero vectors.
pub fn fingerprints(
    smiles: &BTreeMap<String, String>,
    method: FingerprintMethod,
    params: &FingerprintParams,
) -> Result<BTreeMap<String, Fingerprint>> {
    let mut out = BTreeMap::new();
    for (id, s) in smiles {
        match parse_smiles(s) {
            Ok(mol) => {
                out.insert(id.clone(), fingerprint(&mol, method, params)?);
            }
            Err(e) => log::warn!("{id}: unparseable SMILES {s:?}: {e}"),
        }
    }
    Ok(out)
}

pub fn save_fingerprint_cache(path: &Path, fps: &BTreeMap<String, Fingerprint>) -> Result<()> {
    let text: String = fps.iter().map(|(id, fp)| fingerprint_cache_line(id, fp) + "\n").collect();
    write_text(path, &text)
}

pub fn load_fingerprint_cache(path: &Path) -> Result<BTreeMap<String, Fingerprint>> {
    let mut out = BTreeMap::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, fp) = parse_fingerprint_cache_line(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.insert(id, fp);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    write_text(path, &text)
}

/// Append one line and flush it to disk.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{line}")?;
    f.sync_data()?;
    Ok(())
}
