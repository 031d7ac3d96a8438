//! Candidate-pair enumeration, marked input rendering and label vectors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationLevel, Corpus, Document, EntityType};
use crate::knowledge::DescriptionStore;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const HEAD_START: &str = "[HEAD-S]";
pub const HEAD_END: &str = "[HEAD-E]";
pub const TAIL_START: &str = "[TAIL-S]";
pub const TAIL_END: &str = "[TAIL-E]";

/// Tokens with a fixed role in rendered inputs.
pub const SPECIAL_TOKENS: [&str; 6] = [CLS, SEP, HEAD_START, HEAD_END, TAIL_START, TAIL_END];

pub fn is_special(tok: &str) -> bool {
    SPECIAL_TOKENS.contains(&tok)
}

/// Splits text into opaque units for length accounting.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Whitespace tokenizer that also splits off every ASCII punctuation mark.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasicTokenizer;

impl Tokenizer for BasicTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            if c.is_whitespace() {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
            } else if c.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ChemicalDisease,
    ChemicalGene,
    DrugDrug,
    GeneDisease,
}

const DRUG_TYPES: [EntityType; 3] = [EntityType::Drug, EntityType::Brand, EntityType::Group];

impl Scenario {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chemical_disease" => Some(Self::ChemicalDisease),
            "chemical_gene" => Some(Self::ChemicalGene),
            "drug_drug" => Some(Self::DrugDrug),
            "gene_disease" => Some(Self::GeneDisease),
            _ => None,
        }
    }

    pub fn head_types(self) -> &'static [EntityType] {
        match self {
            Scenario::ChemicalDisease | Scenario::ChemicalGene => &[EntityType::Chemical],
            Scenario::DrugDrug => &DRUG_TYPES,
            Scenario::GeneDisease => &[EntityType::Gene],
        }
    }

    pub fn tail_types(self) -> &'static [EntityType] {
        match self {
            Scenario::ChemicalDisease | Scenario::GeneDisease => &[EntityType::Disease],
            Scenario::ChemicalGene => &[EntityType::Gene],
            Scenario::DrugDrug => &DRUG_TYPES,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self == Scenario::DrugDrug
    }
}

/// A head/tail mention pair of one document. Mentions are indices into
/// `Document::mentions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub doc_id: String,
    pub head: usize,
    pub tail: usize,
    pub scenario: Scenario,
    /// Sentence of the head mention.
    pub anchor_sentence: usize,
    pub sentence_distance: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairEnumeration {
    pub pairs: Vec<CandidatePair>,
    /// Pairs dropped because the two mention spans overlap.
    pub skipped_overlapping: usize,
}

fn overlaps(doc: &Document, a: usize, b: usize) -> bool {
    let (x, y) = (&doc.mentions[a], &doc.mentions[b]);
    x.begin < y.end && y.begin < x.end
}

/// Enumerate scenario-typed pairs whose sentences are at most `window` apart.
pub fn enumerate_pairs(doc: &Document, scenario: Scenario, window: usize) -> PairEnumeration {
    let sent: Vec<usize> = (0..doc.mentions.len()).map(|i| doc.mention_sentence(i)).collect();
    let mut out = PairEnumeration::default();
    let push = |h: usize, t: usize, out: &mut PairEnumeration| {
        let distance = sent[h].abs_diff(sent[t]);
        if distance > window {
            return;
        }
        if overlaps(doc, h, t) {
            out.skipped_overlapping += 1;
            return;
        }
        out.pairs.push(CandidatePair {
            doc_id: doc.doc_id.clone(),
            head: h,
            tail: t,
            scenario,
            anchor_sentence: sent[h],
            sentence_distance: distance,
        });
    };

    if scenario.is_symmetric() {
        let mut drugs: Vec<usize> = (0..doc.mentions.len())
            .filter(|&i| DRUG_TYPES.contains(&doc.mentions[i].entity_type))
            .collect();
        drugs.sort_by_key(|&i| (doc.mentions[i].begin, doc.mentions[i].end, i));
        for (a, &h) in drugs.iter().enumerate() {
            for &t in &drugs[a + 1..] {
                push(h, t, &mut out);
            }
        }
    } else {
        for h in 0..doc.mentions.len() {
            if !scenario.head_types().contains(&doc.mentions[h].entity_type) {
                continue;
            }
            for t in 0..doc.mentions.len() {
                if h != t && scenario.tail_types().contains(&doc.mentions[t].entity_type) {
                    push(h, t, &mut out);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionMode {
    #[default]
    None,
    Head,
    Tail,
    Both,
}

impl DescriptionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "head" => Some(Self::Head),
            "tail" => Some(Self::Tail),
            "both" => Some(Self::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Sentences of context added on each side of the anchor text (0 or 1).
    pub context_sentences: usize,
    pub prompt: bool,
    pub descriptions: DescriptionMode,
    pub max_length: usize,
    /// Relation name substituted into the task prompt.
    pub relation_type_name: String,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            context_sentences: 0,
            prompt: false,
            descriptions: DescriptionMode::None,
            max_length: 512,
            relation_type_name: String::new(),
        }
    }
}

/// Fixed-order binary vector over a label schema; all zeros is "no relation".
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(pub Vec<u8>);

impl LabelVector {
    pub fn zeros(n: usize) -> Self {
        LabelVector(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_negative(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    pub fn set_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, b)| **b != 0).map(|(i, _)| i).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|b| f64::from(*b)).collect()
    }
}

/// Token positions of the four entity markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MarkerPositions {
    pub head_start: usize,
    pub head_end: usize,
    pub tail_start: usize,
    pub tail_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub head_mention: String,
    pub tail_mention: String,
    pub head_kb: Option<String>,
    pub tail_kb: Option<String>,
    pub head_type: EntityType,
    pub tail_type: EntityType,
    pub sentence_distance: usize,
    pub options: RenderOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedInstance {
    pub tokens: Vec<String>,
    pub markers: MarkerPositions,
    pub prompt: Option<Range<usize>>,
    /// Description segment, starting at its first separator.
    pub descriptions: Option<Range<usize>>,
    /// Empty until attached by [`build_instance`] or [`RenderedInstance::with_labels`].
    pub labels: LabelVector,
    pub provenance: Provenance,
}

impl RenderedInstance {
    pub fn with_labels(mut self, labels: LabelVector) -> Self {
        self.labels = labels;
        self
    }

    /// The persisted JSON-lines record.
    pub fn record(&self) -> InstanceRecord {
        InstanceRecord {
            tokens: self.tokens.clone(),
            labels: self.labels.0.clone(),
            doc_id: self.provenance.doc_id.clone(),
            head_kb: self.provenance.head_kb.clone(),
            tail_kb: self.provenance.tail_kb.clone(),
            head_type: self.provenance.head_type,
            tail_type: self.provenance.tail_type,
        }
    }
}

/// One line of a rendered dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub tokens: Vec<String>,
    pub labels: Vec<u8>,
    pub doc_id: String,
    pub head_kb: Option<String>,
    pub tail_kb: Option<String>,
    pub head_type: EntityType,
    pub tail_type: EntityType,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("descriptions requested but no description store supplied")]
    MissingStore,
    #[error("{required} tokens are required but max_length is {max_length}")]
    DoesNotFit { required: usize, max_length: usize },
    #[error("pair references a mention outside the document")]
    BadPair,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Seg {
    Cls,
    Prompt,
    LeftContext,
    Anchor,
    Marker,
    RightContext,
    Description,
}

fn clean(tokens: Vec<String>) -> impl Iterator<Item = String> {
    tokens.into_iter().filter(|t| !is_special(t))
}

/// Render the marked input for one pair.
///
/// Layout: `[CLS] prompt? left-context anchor right-context ([SEP] descriptions)?`.
/// When too long, tokens are removed in a fixed priority order: descriptions
/// from the end, right context from the end, left context from the start,
/// anchor text from the end, then the prompt from the end. Markers and
/// `[CLS]` are never removed.
pub fn render_input(
    doc: &Document,
    pair: &CandidatePair,
    options: &RenderOptions,
    tokenizer: &dyn Tokenizer,
    store: Option<&DescriptionStore>,
) -> Result<RenderedInstance, RenderError> {
    if options.descriptions != DescriptionMode::None && store.is_none() {
        return Err(RenderError::MissingStore);
    }
    let (Some(head), Some(tail)) = (doc.mentions.get(pair.head), doc.mentions.get(pair.tail)) else {
        return Err(RenderError::BadPair);
    };
    let hs = doc.mention_sentence(pair.head);
    let ts = doc.mention_sentence(pair.tail);
    let (lo, hi) = (hs.min(ts), hs.max(ts));
    let ctx = options.context_sentences;
    let left = lo.saturating_sub(ctx);
    let right = (hi + ctx).min(doc.sentences.len() - 1);

    let mut toks: Vec<(String, Seg)> = vec![(CLS.to_string(), Seg::Cls)];
    if options.prompt {
        let prompt = format!(
            "Is there a {} interaction between {} and {}?",
            options.relation_type_name, head.text, tail.text
        );
        toks.extend(clean(tokenizer.tokenize(&prompt)).map(|t| (t, Seg::Prompt)));
    }
    for s in &doc.sentences[left..lo] {
        toks.extend(clean(tokenizer.tokenize(&s.text)).map(|t| (t, Seg::LeftContext)));
    }

    // Marker events in document offsets; closing markers sort before opening
    // ones at the same offset.
    let mut events = [
        (head.begin, 1u8, HEAD_START),
        (head.end, 0u8, HEAD_END),
        (tail.begin, 1u8, TAIL_START),
        (tail.end, 0u8, TAIL_END),
    ];
    events.sort_by_key(|e| (e.0, e.1, e.2 == TAIL_START || e.2 == TAIL_END));
    let mut next_event = 0;
    for s in &doc.sentences[lo..=hi] {
        let chars: Vec<char> = s.text.chars().collect();
        let mut piece_start = 0;
        while next_event < events.len() && events[next_event].0 <= s.end {
            let (pos, _, marker) = events[next_event];
            let rel = pos - s.begin;
            let piece: String = chars[piece_start..rel].iter().collect();
            toks.extend(clean(tokenizer.tokenize(&piece)).map(|t| (t, Seg::Anchor)));
            toks.push((marker.to_string(), Seg::Marker));
            piece_start = rel;
            next_event += 1;
        }
        let piece: String = chars[piece_start..].iter().collect();
        toks.extend(clean(tokenizer.tokenize(&piece)).map(|t| (t, Seg::Anchor)));
    }

    for s in &doc.sentences[hi + 1..=right] {
        toks.extend(clean(tokenizer.tokenize(&s.text)).map(|t| (t, Seg::RightContext)));
    }

    if let Some(store) = store {
        let mut descs = Vec::new();
        if matches!(options.descriptions, DescriptionMode::Head | DescriptionMode::Both) {
            descs.push(store.lookup(head.kb_id.as_deref()));
        }
        if matches!(options.descriptions, DescriptionMode::Tail | DescriptionMode::Both) {
            descs.push(store.lookup(tail.kb_id.as_deref()));
        }
        for d in descs {
            toks.push((SEP.to_string(), Seg::Description));
            toks.extend(clean(tokenizer.tokenize(d)).map(|t| (t, Seg::Description)));
        }
    }

    // Removal priority list of token positions.
    let positions = |seg: Seg| toks.iter().enumerate().filter(move |(_, t)| t.1 == seg).map(|(i, _)| i);
    let mut removal: Vec<usize> = Vec::new();
    removal.extend(positions(Seg::Description).rev());
    removal.extend(positions(Seg::RightContext).rev());
    removal.extend(positions(Seg::LeftContext));
    removal.extend(positions(Seg::Anchor).rev());
    removal.extend(positions(Seg::Prompt).rev());

    let excess = toks.len().saturating_sub(options.max_length);
    if excess > removal.len() {
        return Err(RenderError::DoesNotFit {
            required: toks.len() - removal.len(),
            max_length: options.max_length,
        });
    }
    let mut keep = vec![true; toks.len()];
    for &i in &removal[..excess] {
        keep[i] = false;
    }

    let mut tokens = Vec::with_capacity(toks.len() - excess);
    let mut markers = MarkerPositions::default();
    let mut prompt: Option<Range<usize>> = None;
    let mut descriptions: Option<Range<usize>> = None;
    for ((tok, seg), k) in toks.into_iter().zip(keep) {
        if !k {
            continue;
        }
        let pos = tokens.len();
        match seg {
            Seg::Marker => match tok.as_str() {
                HEAD_START => markers.head_start = pos,
                HEAD_END => markers.head_end = pos,
                TAIL_START => markers.tail_start = pos,
                _ => markers.tail_end = pos,
            },
            Seg::Prompt => {
                prompt = Some(prompt.map_or(pos..pos + 1, |r| r.start..pos + 1));
            }
            Seg::Description => {
                descriptions = Some(descriptions.map_or(pos..pos + 1, |r| r.start..pos + 1));
            }
            _ => {}
        }
        tokens.push(tok);
    }

    Ok(RenderedInstance {
        tokens,
        markers,
        prompt,
        descriptions,
        labels: LabelVector::default(),
        provenance: Provenance {
            doc_id: doc.doc_id.clone(),
            head_mention: head.id.clone(),
            tail_mention: tail.id.clone(),
            head_kb: head.kb_id.clone(),
            tail_kb: tail.kb_id.clone(),
            head_type: head.entity_type,
            tail_type: tail.entity_type,
            sentence_distance: pair.sentence_distance,
            options: options.clone(),
        },
    })
}

/// Ordered relation labels plus accepted aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub labels: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

impl LabelSchema {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Self {
        LabelSchema {
            labels: labels.iter().map(|s| s.as_ref().to_string()).collect(),
            aliases: BTreeMap::new(),
        }
    }

    pub fn with_alias(mut self, alias: &str, label: &str) -> Self {
        self.aliases.insert(alias.to_string(), label.to_string());
        self
    }

    /// The five ChemProt evaluation groups, with their CPR codes and
    /// interaction types as aliases.
    pub fn chemprot() -> Self {
        let groups: [(&str, &str, &[&str]); 5] = [
            ("CPR:3", "upregulator", &["activator", "indirect upregulator", "indirect-upregulator"]),
            ("CPR:4", "downregulator", &["inhibitor", "indirect downregulator", "indirect-downregulator"]),
            ("CPR:5", "agonist", &["agonist-activator", "agonist-inhibitor"]),
            ("CPR:6", "antagonist", &[]),
            ("CPR:9", "substrate", &["product of", "product_of", "substrate_product-of"]),
        ];
        let mut schema = LabelSchema::new(&groups.iter().map(|g| g.1).collect::<Vec<_>>());
        for (code, label, extra) in groups {
            schema = schema.with_alias(code, label);
            for e in extra {
                schema = schema.with_alias(e, label);
            }
        }
        schema
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let canonical = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.labels.iter().position(|l| l == canonical)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("document {doc_id}: relation type {label:?} is not in the label schema")]
pub struct SchemaError {
    pub doc_id: String,
    pub label: String,
}

/// Gold labels linking this pair: exact mention pair for mention-level
/// annotations, kb-id pair for document-level ones. Drug–drug pairs match
/// regardless of annotation direction.
pub fn build_label_vector(
    doc: &Document,
    pair: &CandidatePair,
    schema: &LabelSchema,
) -> Result<LabelVector, SchemaError> {
    let mut v = LabelVector::zeros(schema.len());
    let head = &doc.mentions[pair.head];
    let tail = &doc.mentions[pair.tail];
    for ann in &doc.relations {
        let (h, t) = match ann.level {
            AnnotationLevel::Mention => (Some(head.id.as_str()), Some(tail.id.as_str())),
            AnnotationLevel::Document => (head.kb_id.as_deref(), tail.kb_id.as_deref()),
        };
        let (Some(h), Some(t)) = (h, t) else { continue };
        let forward = ann.head == h && ann.tail == t;
        let backward = pair.scenario.is_symmetric() && ann.head == t && ann.tail == h;
        if !(forward || backward) {
            continue;
        }
        let idx = schema.index_of(&ann.relation_type).ok_or_else(|| SchemaError {
            doc_id: doc.doc_id.clone(),
            label: ann.relation_type.clone(),
        })?;
        v.0[idx] = 1;
    }
    Ok(v)
}

/// Render a pair and attach its gold labels.
pub fn build_instance(
    doc: &Document,
    pair: &CandidatePair,
    schema: &LabelSchema,
    options: &RenderOptions,
    tokenizer: &dyn Tokenizer,
    store: Option<&DescriptionStore>,
) -> Result<RenderedInstance, InstanceError> {
    let labels = build_label_vector(doc, pair, schema)?;
    Ok(render_input(doc, pair, options, tokenizer, store)?.with_labels(labels))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scenario: Scenario,
    /// Maximum sentence distance between the two mentions.
    pub window: usize,
    pub schema: LabelSchema,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub pairs: usize,
    pub skipped_overlapping: usize,
    pub skipped_render: usize,
}

/// Instances for every candidate pair of every document.
///
/// Pairs that cannot be rendered are skipped, logged and counted; schema
/// violations abort.
pub fn build_dataset(
    corpus: &Corpus,
    spec: &DatasetSpec,
    options: &RenderOptions,
    tokenizer: &dyn Tokenizer,
    store: Option<&DescriptionStore>,
) -> Result<(Vec<RenderedInstance>, DatasetStats), InstanceError> {
    let mut stats = DatasetStats::default();
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let en = enumerate_pairs(doc, spec.scenario, spec.window);
        stats.skipped_overlapping += en.skipped_overlapping;
        for pair in &en.pairs {
            stats.pairs += 1;
            match build_instance(doc, pair, &spec.schema, options, tokenizer, store) {
                Ok(inst) => out.push(inst),
                Err(InstanceError::Render(e)) => {
                    log::warn!("skipping pair in {}: {e}", doc.doc_id);
                    stats.skipped_render += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((out, stats))
}
