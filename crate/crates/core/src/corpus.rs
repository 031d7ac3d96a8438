//! Normalized corpus model, interchange parsing, entity normalization and
//! document splits.
//!
//! Every corpus enters the toolkit through one JSON-lines interchange format:
//! one document per line with sentence spans, typed mentions and gold
//! relations. Offsets count Unicode scalar values into the document text,
//! where sentence `i` occupies `[begin, end)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scheme name of mapping tables keyed by case-folded surface strings.
pub const SURFACE_SCHEME: &str = "surface";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Chemical,
    Disease,
    Gene,
    Drug,
    Brand,
    Group,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Chemical,
        EntityType::Disease,
        EntityType::Gene,
        EntityType::Drug,
        EntityType::Brand,
        EntityType::Group,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Chemical => "chemical",
            EntityType::Disease => "disease",
            EntityType::Gene => "gene",
            EntityType::Drug => "drug",
            EntityType::Brand => "brand",
            EntityType::Group => "group",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationLevel {
    Mention,
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub id: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub begin: usize,
    pub end: usize,
    pub text: String,
    pub kb_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationAnnotation {
    /// Mention id for mention-level annotations, kb id for document-level ones.
    pub head: String,
    pub tail: String,
    #[serde(rename = "type")]
    pub relation_type: String,
    pub level: AnnotationLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<EntityMention>,
    pub relations: Vec<RelationAnnotation>,
    pub split: Option<Split>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("document {doc_id}: mention {mention_id}: {message}")]
    Mention {
        doc_id: String,
        mention_id: String,
        message: String,
    },
    #[error("document {doc_id}: {message}")]
    Document { doc_id: String, message: String },
    #[error("duplicate doc_id {0}")]
    DuplicateDocument(String),
}

fn char_slice(text: &str, begin: usize, end: usize) -> Option<&str> {
    if begin > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(core::iter::once(text.len()));
    let b = indices.nth(begin)?;
    let e = if end == begin { b } else { indices.nth(end - begin - 1)? };
    Some(&text[b..e])
}

impl Document {
    /// Index of the sentence containing `[begin, end)`, if exactly one does.
    pub fn sentence_of_span(&self, begin: usize, end: usize) -> Option<usize> {
        self.sentences
            .iter()
            .position(|s| s.begin <= begin && end <= s.end && begin < end)
    }

    /// Sentence index of the mention at `mention_idx`.
    ///
    /// Panics if the document has not been validated.
    pub fn mention_sentence(&self, mention_idx: usize) -> usize {
        let m = &self.mentions[mention_idx];
        self.sentence_of_span(m.begin, m.end)
            .expect("validated mention lies inside a sentence")
    }

    pub fn mention_index(&self, id: &str) -> Option<usize> {
        self.mentions.iter().position(|m| m.id == id)
    }

    /// Full document text; gaps between sentences are filled with spaces.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let mut pos = 0;
        for s in &self.sentences {
            while pos < s.begin {
                out.push(' ');
                pos += 1;
            }
            out.push_str(&s.text);
            pos = s.end;
        }
        out
    }

    /// Check every structural invariant of the document.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let doc_err = |message: String| CorpusError::Document {
            doc_id: self.doc_id.clone(),
            message,
        };
        let mut prev_end = 0;
        for (i, s) in self.sentences.iter().enumerate() {
            if s.begin > s.end {
                return Err(doc_err(format!("sentence {i} has begin > end")));
            }
            if i > 0 && s.begin < prev_end {
                return Err(doc_err(format!("sentence {i} overlaps or precedes sentence {}", i - 1)));
            }
            let len = s.text.chars().count();
            if len != s.end - s.begin {
                return Err(doc_err(format!(
                    "sentence {i} text has {len} characters but span length {}",
                    s.end - s.begin
                )));
            }
            prev_end = s.end;
        }
        let mut ids = BTreeSet::new();
        for m in &self.mentions {
            let m_err = |message: String| CorpusError::Mention {
                doc_id: self.doc_id.clone(),
                mention_id: m.id.clone(),
                message,
            };
            if !ids.insert(m.id.as_str()) {
                return Err(m_err("duplicate mention id".to_string()));
            }
            let Some(si) = self.sentence_of_span(m.begin, m.end) else {
                return Err(m_err(format!(
                    "span [{}, {}) does not lie inside a sentence",
                    m.begin, m.end
                )));
            };
            let s = &self.sentences[si];
            let surface = char_slice(&s.text, m.begin - s.begin, m.end - s.begin);
            if surface != Some(m.text.as_str()) {
                return Err(m_err(format!(
                    "surface {:?} does not match text at span ({:?})",
                    m.text,
                    surface.unwrap_or("")
                )));
            }
        }
        let kb_ids: BTreeSet<&str> = self.mentions.iter().filter_map(|m| m.kb_id.as_deref()).collect();
        for (i, r) in self.relations.iter().enumerate() {
            for end in [&r.head, &r.tail] {
                let ok = match r.level {
                    AnnotationLevel::Mention => ids.contains(end.as_str()),
                    AnnotationLevel::Document => kb_ids.contains(end.as_str()),
                };
                if !ok {
                    return Err(doc_err(format!(
                        "relation {i} ({:?}-level) references unknown {}",
                        r.level, end
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An ordered collection of validated documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Build a corpus, validating every document and doc_id uniqueness.
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for d in &documents {
            d.validate()?;
            if !seen.insert(d.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocument(d.doc_id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.documents.iter().map(|d| d.mentions.len()).sum()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Subset of documents in `ids` order. Unknown ids are ignored.
    pub fn subset(&self, ids: &[String]) -> Corpus {
        let index: BTreeMap<&str, &Document> =
            self.documents.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        Corpus {
            documents: ids.iter().filter_map(|id| index.get(id.as_str()).map(|d| (*d).clone())).collect(),
        }
    }

    /// Split assignment carried by the documents' own `split` hints.
    pub fn hinted_splits(&self) -> SplitAssignment {
        let mut a = SplitAssignment::default();
        for d in &self.documents {
            let id = d.doc_id.clone();
            match d.split {
                Some(Split::Train) => a.train.push(id),
                Some(Split::Val) => a.val.push(id),
                Some(Split::Test) => a.test.push(id),
                None => a.held_out.push(id),
            }
        }
        a
    }
}

/// Parse interchange JSON-lines. Blank lines are ignored.
pub fn parse_interchange(text: &str) -> Result<Corpus, CorpusError> {
    let mut documents = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        doc.validate()?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocument(doc.doc_id));
        }
        documents.push(doc);
    }
    Ok(Corpus { documents })
}

/// Serialize to interchange JSON-lines, one document per line.
pub fn to_interchange(corpus: &Corpus) -> String {
    let mut out = String::new();
    for d in &corpus.documents {
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    out
}

/// Identifier (or surface-string) translation table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    pub source_scheme: String,
    pub target_scheme: String,
    /// Entity types the table applies to; empty means every type.
    pub entity_types: Vec<EntityType>,
    entries: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("mapping table must start with header \"source\\ttarget\"")]
    MissingHeader,
    #[error("line {line}: expected two tab-separated columns")]
    Malformed { line: usize },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
}

impl MappingTable {
    pub fn new(source_scheme: &str, target_scheme: &str) -> Self {
        MappingTable {
            source_scheme: source_scheme.to_string(),
            target_scheme: target_scheme.to_string(),
            entity_types: Vec::new(),
            entries: BTreeMap::new(),
        }
    }

    /// Restrict the table to mentions of the given types.
    pub fn for_types(mut self, types: &[EntityType]) -> Self {
        self.entity_types = types.to_vec();
        self
    }

    fn key(&self, raw: &str) -> String {
        if self.source_scheme == SURFACE_SCHEME {
            raw.to_lowercase()
        } else {
            raw.to_string()
        }
    }

    /// Insert an entry. Returns false if the key already exists.
    pub fn insert(&mut self, source: &str, target: &str) -> bool {
        let key = self.key(source);
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, target.to_string());
        true
    }

    /// Parse the two-column TSV form with header `source\ttarget`.
    pub fn parse_tsv(text: &str, source_scheme: &str, target_scheme: &str) -> Result<Self, MappingError> {
        let mut table = MappingTable::new(source_scheme, target_scheme);
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == "source\ttarget" => {}
            _ => return Err(MappingError::MissingHeader),
        }
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(src), Some(tgt), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(MappingError::Malformed { line: i + 1 });
            };
            if !table.insert(src, tgt) {
                return Err(MappingError::DuplicateKey {
                    line: i + 1,
                    key: src.to_string(),
                });
            }
        }
        Ok(table)
    }

    /// Total lookup; surface-keyed tables case-fold the query.
    pub fn lookup(&self, key: &str) -> Option<&str> {
        self.entries.get(&self.key(key)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn applies_to(&self, t: EntityType) -> bool {
        self.entity_types.is_empty() || self.entity_types.contains(&t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationPolicy {
    GoldPassthrough,
    TableLookup,
    StringMatch,
}

impl NormalizationPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gold_passthrough" => Some(Self::GoldPassthrough),
            "table_lookup" => Some(Self::TableLookup),
            "string_match" => Some(Self::StringMatch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TypeCoverage {
    pub total: usize,
    pub mapped: usize,
}

impl TypeCoverage {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.mapped as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizationReport {
    pub per_type: BTreeMap<EntityType, TypeCoverage>,
    /// `(doc_id, mention_id)` of every mention left without a kb id.
    pub unmapped: Vec<(String, String)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Validation(#[from] CorpusError),
}

/// Map mention kb ids onto shared identifiers.
///
/// Only `kb_id` fields change. Under `table_lookup` and `string_match`, a
/// mention covered by a table but missing from it loses its kb id and is
/// reported as unmapped; mentions of types no table covers pass through.
pub fn normalize_mentions(
    corpus: &Corpus,
    tables: &[MappingTable],
    policy: NormalizationPolicy,
) -> Result<(Corpus, NormalizationReport), NormalizeError> {
    match policy {
        NormalizationPolicy::GoldPassthrough if !tables.is_empty() => {
            return Err(NormalizeError::Config(
                "gold_passthrough takes no mapping tables".to_string(),
            ))
        }
        NormalizationPolicy::TableLookup => {
            if let Some(t) = tables.iter().find(|t| t.source_scheme == SURFACE_SCHEME) {
                return Err(NormalizeError::Config(format!(
                    "table_lookup needs identifier-keyed tables, got source scheme {:?}",
                    t.source_scheme
                )));
            }
        }
        NormalizationPolicy::StringMatch => {
            if let Some(t) = tables.iter().find(|t| t.source_scheme != SURFACE_SCHEME) {
                return Err(NormalizeError::Config(format!(
                    "string_match needs surface-keyed tables, got source scheme {:?}",
                    t.source_scheme
                )));
            }
        }
        NormalizationPolicy::GoldPassthrough => {}
    }

    let mut report = NormalizationReport::default();
    let mut documents = Vec::with_capacity(corpus.documents.len());
    for doc in &corpus.documents {
        let mut doc = doc.clone();
        for m in &mut doc.mentions {
            let table = tables.iter().find(|t| t.applies_to(m.entity_type));
            if let Some(table) = table {
                let key = match policy {
                    NormalizationPolicy::StringMatch => Some(m.text.as_str()),
                    _ => m.kb_id.as_deref(),
                };
                m.kb_id = key.and_then(|k| table.lookup(k)).map(str::to_string);
            }
            let cov = report.per_type.entry(m.entity_type).or_default();
            cov.total += 1;
            if m.kb_id.is_some() {
                cov.mapped += 1;
            } else {
                report.unmapped.push((doc.doc_id.clone(), m.id.clone()));
            }
        }
        doc.validate()?;
        documents.push(doc);
    }
    Ok((Corpus { documents }, report))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Exact (train, val, test) sizes; documents beyond their sum are held out.
    Sizes([usize; 3]),
    /// Fractions of the corpus, rounded by largest remainder.
    Ratios([f64; 3]),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Documents not requested by any split.
    pub held_out: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, doc_id: &str) -> Option<Split> {
        let has = |v: &[String]| v.iter().any(|d| d == doc_id);
        if has(&self.train) {
            Some(Split::Train)
        } else if has(&self.val) {
            Some(Split::Val)
        } else if has(&self.test) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("requested {requested} documents but the corpus has {available}")]
    TooLarge { requested: usize, available: usize },
    #[error("invalid split ratios {0:?}")]
    BadRatios([f64; 3]),
}

fn sizes_from_ratios(n: usize, r: [f64; 3]) -> Result<[usize; 3], SplitError> {
    let total: f64 = r.iter().sum();
    if r.iter().any(|x| !x.is_finite() || *x < 0.0) || total > 1.0 + 1e-9 {
        return Err(SplitError::BadRatios(r));
    }
    let target = libm::round(n as f64 * total.min(1.0)) as usize;
    let exact: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut sizes = [0usize; 3];
    for j in 0..3 {
        sizes[j] = libm::floor(exact[j]) as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - libm::floor(exact[a]);
        let fb = exact[b] - libm::floor(exact[b]);
        fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut k = 0;
    while sizes.iter().sum::<usize>() < target {
        sizes[order[k % 3]] += 1;
        k += 1;
    }
    Ok(sizes)
}

/// Stratum of a document: its sorted set of relation types.
pub fn stratum_key(doc: &Document) -> String {
    let types: BTreeSet<&str> = doc.relations.iter().map(|r| r.relation_type.as_str()).collect();
    types.into_iter().collect::<Vec<_>>().join("|")
}

/// Deterministic train/val/test assignment.
///
/// With `stratify`, documents are grouped by [`stratum_key`] and each group
/// is apportioned so that every (group, split) count is the floor or ceiling
/// of its proportional share while split sizes stay exact.
pub fn make_splits(
    corpus: &Corpus,
    spec: &SplitSpec,
    seed: u64,
    stratify: bool,
) -> Result<SplitAssignment, SplitError> {
    let n = corpus.len();
    let sizes = match spec {
        SplitSpec::Sizes(s) => *s,
        SplitSpec::Ratios(r) => sizes_from_ratios(n, *r)?,
    };
    let requested: usize = sizes.iter().sum();
    if requested > n {
        return Err(SplitError::TooLarge {
            requested,
            available: n,
        });
    }
    let columns = [sizes[0], sizes[1], sizes[2], n - requested];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: [Vec<usize>; 4] = Default::default();

    if stratify {
        let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, d) in corpus.documents.iter().enumerate() {
            strata.entry(stratum_key(d)).or_default().push(i);
        }
        let rows: Vec<Vec<usize>> = strata.into_values().collect();
        let row_sizes: Vec<usize> = rows.iter().map(Vec::len).collect();
        let table = controlled_rounding(&row_sizes, &columns, &mut rng);
        for (mut docs, counts) in rows.into_iter().zip(table) {
            docs.shuffle(&mut rng);
            let mut it = docs.into_iter();
            for (j, c) in counts.into_iter().enumerate() {
                buckets[j].extend(it.by_ref().take(c));
            }
        }
    } else {
        let mut docs: Vec<usize> = (0..n).collect();
        docs.shuffle(&mut rng);
        let mut it = docs.into_iter();
        for (j, c) in columns.iter().enumerate() {
            buckets[j].extend(it.by_ref().take(*c));
        }
    }
    let ids = |mut v: Vec<usize>| {
        v.sort_unstable();
        v.into_iter().map(|i| corpus.documents[i].doc_id.clone()).collect::<Vec<_>>()
    };
    let [train, val, test, held] = buckets;
    Ok(SplitAssignment {
        train: ids(train),
        val: ids(val),
        test: ids(test),
        held_out: ids(held),
    })
}

/// Round the proportional table `rows[k] * cols[j] / total` to integers with
/// exact row and column sums, each cell within one of its expectation.
/// Which cells round up is drawn from `rng`.
fn controlled_rounding<R: Rng>(rows: &[usize], cols: &[usize], rng: &mut R) -> Vec<Vec<usize>> {
    let total: usize = rows.iter().sum();
    let nc = cols.len();
    let mut table = vec![vec![0usize; nc]; rows.len()];
    if total == 0 {
        return table;
    }
    let mut eligible = vec![vec![false; nc]; rows.len()];
    let mut row_need = vec![0usize; rows.len()];
    let mut col_need = cols.to_vec();
    for (k, &r) in rows.iter().enumerate() {
        for j in 0..nc {
            let num = r * cols[j];
            table[k][j] = num / total;
            eligible[k][j] = !num.is_multiple_of(total);
            col_need[j] -= table[k][j];
        }
        row_need[k] = r - table[k].iter().sum::<usize>();
    }
    // Bipartite b-matching of leftover units by augmenting paths, visiting
    // rows and columns in random order.
    let mut extra = vec![vec![false; nc]; rows.len()];
    let col_order: Vec<Vec<usize>> = (0..rows.len())
        .map(|_| {
            let mut c: Vec<usize> = (0..nc).collect();
            c.shuffle(rng);
            c
        })
        .collect();
    let mut row_order: Vec<usize> = (0..rows.len()).collect();
    row_order.shuffle(rng);
    for k in row_order {
        while row_need[k] > 0 {
            let mut seen_rows = vec![false; rows.len()];
            if !augment(k, &eligible, &col_order, &mut extra, &mut col_need, &mut seen_rows) {
                break;
            }
            row_need[k] -= 1;
        }
    }
    for k in 0..rows.len() {
        for j in 0..nc {
            if extra[k][j] {
                table[k][j] += 1;
            }
        }
    }
    table
}

fn augment(
    k: usize,
    eligible: &[Vec<bool>],
    col_order: &[Vec<usize>],
    extra: &mut [Vec<bool>],
    col_need: &mut [usize],
    seen_rows: &mut [bool],
) -> bool {
    if seen_rows[k] {
        return false;
    }
    seen_rows[k] = true;
    for &j in &col_order[k] {
        if eligible[k][j] && !extra[k][j] && col_need[j] > 0 {
            extra[k][j] = true;
            col_need[j] -= 1;
            return true;
        }
    }
    // Column j is full: try to move one of its units from another row to a
    // different column.
    for &j in &col_order[k] {
        if !eligible[k][j] || extra[k][j] {
            continue;
        }
        for other in 0..extra.len() {
            if other != k && extra[other][j] && !seen_rows[other] {
                extra[other][j] = false;
                if augment(other, eligible, col_order, extra, col_need, seen_rows) {
                    extra[k][j] = true;
                    return true;
                }
                extra[other][j] = true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn doc(id: &str, sentence_texts: &[&str]) -> Document {
        let mut sentences = Vec::new();
        let mut pos = 0;
        for t in sentence_texts {
            let len = t.chars().count();
            sentences.push(Sentence {
                text: t.to_string(),
                begin: pos,
                end: pos + len,
            });
            pos += len + 1;
        }
        Document {
            doc_id: id.to_string(),
            sentences,
            mentions: Vec::new(),
            relations: Vec::new(),
            split: None,
        }
    }

    fn mention(id: &str, t: EntityType, begin: usize, text: &str, kb: Option<&str>) -> EntityMention {
        EntityMention {
            id: id.to_string(),
            entity_type: t,
            begin,
            end: begin + text.chars().count(),
            text: text.to_string(),
            kb_id: kb.map(str::to_string),
        }
    }

    fn two_doc_fixture() -> Corpus {
        let mut a = doc("a", &["Aspirin inhibits COX.", "Ibuprofen too."]);
        a.mentions = vec![
            mention("a1", EntityType::Chemical, 0, "Aspirin", Some("D001241")),
            mention("a2", EntityType::Gene, 17, "COX", Some("5742")),
            mention("a3", EntityType::Chemical, 22, "Ibuprofen", None),
        ];
        a.relations.push(RelationAnnotation {
            head: "a1".into(),
            tail: "a2".into(),
            relation_type: "downregulator".into(),
            level: AnnotationLevel::Mention,
        });
        let mut b = doc("b", &["Cisplatin causes nephrotoxicity in rats."]);
        b.mentions = vec![
            mention("b1", EntityType::Chemical, 0, "Cisplatin", Some("D002945")),
            mention("b2", EntityType::Disease, 17, "nephrotoxicity", Some("D007674")),
            mention("b3", EntityType::Chemical, 0, "Cis", None),
        ];
        b.relations.push(RelationAnnotation {
            head: "D002945".into(),
            tail: "D007674".into(),
            relation_type: "CID".into(),
            level: AnnotationLevel::Document,
        });
        b.split = Some(Split::Test);
        Corpus::new(vec![a, b]).unwrap()
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        assert_eq!(parse_interchange("").unwrap().len(), 0);
        assert_eq!(parse_interchange("\n  \n").unwrap().len(), 0);
    }

    #[test]
    fn two_document_fixture_counts() {
        let c = two_doc_fixture();
        let parsed = parse_interchange(&to_interchange(&c)).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed.mention_count(), 6);
        assert_eq!(parsed, c);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let c = two_doc_fixture();
        let mut text = to_interchange(&c);
        text.push_str("{not json}\n");
        match parse_interchange(&text) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mention_outside_sentence_names_mention() {
        let mut c = two_doc_fixture();
        c.documents[0].mentions[1].begin = 19;
        c.documents[0].mentions[1].end = 24;
        let err = parse_interchange(&to_interchange(&Corpus {
            documents: c.documents,
        }))
        .unwrap_err();
        match err {
            CorpusError::Mention { mention_id, .. } => assert_eq!(mention_id, "a2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn surface_mismatch_is_rejected() {
        let mut c = two_doc_fixture();
        c.documents[0].mentions[0].text = "Asprin".into();
        assert!(matches!(
            Corpus::new(c.documents),
            Err(CorpusError::Mention { .. })
        ));
    }

    #[test]
    fn document_relation_needs_kb_on_a_mention() {
        let mut c = two_doc_fixture();
        c.documents[1].relations[0].tail = "D999999".into();
        assert!(matches!(Corpus::new(c.documents), Err(CorpusError::Document { .. })));
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let c = two_doc_fixture();
        let docs = vec![c.documents[0].clone(), c.documents[0].clone()];
        assert_eq!(Corpus::new(docs), Err(CorpusError::DuplicateDocument("a".into())));
    }

    #[test]
    fn char_offsets_count_scalar_values() {
        let mut d = doc("u", &["β-blocker α binds."]);
        d.mentions.push(mention("m", EntityType::Chemical, 10, "α", None));
        d.validate().unwrap();
        assert_eq!(d.text(), "β-blocker α binds.");
    }

    #[test]
    fn gold_passthrough_is_identity() {
        let c = two_doc_fixture();
        let (out, report) = normalize_mentions(&c, &[], NormalizationPolicy::GoldPassthrough).unwrap();
        assert_eq!(out, c);
        assert_eq!(report.per_type[&EntityType::Chemical], TypeCoverage { total: 4, mapped: 2 });
        assert_eq!(report.unmapped.len(), 2);
    }

    #[test]
    fn string_match_is_case_folded() {
        let c = two_doc_fixture();
        let mut table = MappingTable::new(SURFACE_SCHEME, "mesh").for_types(&[EntityType::Chemical]);
        table.insert("aspirin", "D001241");
        table.insert("ibuprofen", "D007052");
        table.insert("cisplatin", "D002945");
        let (out, report) = normalize_mentions(&c, &[table], NormalizationPolicy::StringMatch).unwrap();
        assert_eq!(out.documents[0].mentions[2].kb_id.as_deref(), Some("D007052"));
        assert_eq!(out.documents[0].mentions[0].kb_id.as_deref(), Some("D001241"));
        // "Cis" is not in the table.
        assert_eq!(out.documents[1].mentions[2].kb_id, None);
        assert_eq!(report.per_type[&EntityType::Chemical].mapped, 3);
        // Genes and diseases are outside the table's scope.
        assert_eq!(out.documents[0].mentions[1], c.documents[0].mentions[1]);
        for (a, b) in out.documents.iter().zip(&c.documents) {
            assert_eq!(a.relations, b.relations);
            for (ma, mb) in a.mentions.iter().zip(&b.mentions) {
                assert_eq!((ma.begin, ma.end, &ma.text), (mb.begin, mb.end, &mb.text));
            }
        }
    }

    #[test]
    fn wrong_scheme_is_configuration_error() {
        let c = two_doc_fixture();
        let id_table = MappingTable::new("pubchem", "mesh");
        let surf = MappingTable::new(SURFACE_SCHEME, "mesh");
        assert!(matches!(
            normalize_mentions(&c, &[id_table], NormalizationPolicy::StringMatch),
            Err(NormalizeError::Config(_))
        ));
        assert!(matches!(
            normalize_mentions(&c, &[surf], NormalizationPolicy::TableLookup),
            Err(NormalizeError::Config(_))
        ));
    }

    #[test]
    fn mapping_tsv_parses_and_rejects_duplicates() {
        let t = MappingTable::parse_tsv("source\ttarget\nCID1\tD1\nCID2\tD2\n", "pubchem", "mesh").unwrap();
        assert_eq!(t.lookup("CID2"), Some("D2"));
        assert_eq!(t.lookup("CID3"), None);
        assert_eq!(
            MappingTable::parse_tsv("source\ttarget\nx\t1\nx\t2\n", "a", "b"),
            Err(MappingError::DuplicateKey { line: 3, key: "x".into() })
        );
        assert_eq!(MappingTable::parse_tsv("a\tb\n", "a", "b"), Err(MappingError::MissingHeader));
    }

    fn typed_corpus(n: usize, types: &[&str]) -> Corpus {
        let docs = (0..n)
            .map(|i| {
                let mut d = doc(&format!("d{i:03}"), &["A binds B."]);
                d.mentions = vec![
                    mention("h", EntityType::Chemical, 0, "A", None),
                    mention("t", EntityType::Gene, 8, "B", None),
                ];
                d.relations.push(RelationAnnotation {
                    head: "h".into(),
                    tail: "t".into(),
                    relation_type: types[i % types.len()].into(),
                    level: AnnotationLevel::Mention,
                });
                d
            })
            .collect();
        Corpus::new(docs).unwrap()
    }

    #[test]
    fn exact_sizes_are_honored() {
        let c = typed_corpus(503, &["x"]);
        let s = make_splits(&c, &SplitSpec::Sizes([300, 80, 123]), 1, false).unwrap();
        assert_eq!(s.sizes(), [300, 80, 123]);
        assert!(s.held_out.is_empty());
    }

    #[test]
    fn all_train_leaves_val_and_test_empty() {
        let c = typed_corpus(10, &["x"]);
        let s = make_splits(&c, &SplitSpec::Sizes([10, 0, 0]), 3, true).unwrap();
        assert_eq!(s.sizes(), [10, 0, 0]);
    }

    #[test]
    fn oversized_spec_errors() {
        let c = typed_corpus(10, &["x"]);
        assert!(matches!(
            make_splits(&c, &SplitSpec::Sizes([8, 2, 1]), 0, false),
            Err(SplitError::TooLarge { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn stratified_split_preserves_three_to_one() {
        // 30 "a" documents and 10 "b" documents.
        let c = typed_corpus(40, &["a", "a", "a", "b"]);
        let s = make_splits(&c, &SplitSpec::Sizes([20, 8, 12]), 11, true).unwrap();
        for (ids, size) in [(&s.train, 20usize), (&s.val, 8), (&s.test, 12)] {
            let a = ids
                .iter()
                .filter(|id| c.get(id).unwrap().relations[0].relation_type == "a")
                .count();
            let b = ids.len() - a;
            let exp_a = 30.0 * size as f64 / 40.0;
            let exp_b = 10.0 * size as f64 / 40.0;
            assert!((a as f64 - exp_a).abs() <= 1.0, "a={a} exp={exp_a}");
            assert!((b as f64 - exp_b).abs() <= 1.0, "b={b} exp={exp_b}");
        }
    }

    #[test]
    fn ratios_round_to_corpus_size() {
        let c = typed_corpus(7, &["x"]);
        let s = make_splits(&c, &SplitSpec::Ratios([0.6, 0.2, 0.2]), 0, false).unwrap();
        assert_eq!(s.sizes().iter().sum::<usize>(), 7);
        assert!(make_splits(&c, &SplitSpec::Ratios([0.9, 0.2, 0.0]), 0, false).is_err());
    }

    #[test]
    fn controlled_rounding_respects_margins() {
        let rows = [7, 5, 3, 1, 9];
        let cols = [12, 6, 4, 3];
        for seed in 0..50 {
            let t = controlled_rounding(&rows, &cols, &mut ChaCha8Rng::seed_from_u64(seed));
            for (k, r) in rows.iter().enumerate() {
                assert_eq!(t[k].iter().sum::<usize>(), *r);
                for j in 0..cols.len() {
                    let e = (*r * cols[j]) as f64 / 25.0;
                    assert!((t[k][j] as f64 - e).abs() < 1.0);
                }
            }
            for j in 0..cols.len() {
                assert_eq!(t.iter().map(|r| r[j]).sum::<usize>(), cols[j]);
            }
        }
    }
}
