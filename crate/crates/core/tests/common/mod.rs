#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kare_core::corpus::{AnnotationLevel, Corpus, Document, EntityMention, EntityType, RelationAnnotation, Sentence};

pub const WORDS: [&str; 10] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"];
pub const TYPES: [EntityType; 5] = [
    EntityType::Chemical,
    EntityType::Gene,
    EntityType::Disease,
    EntityType::Drug,
    EntityType::Brand,
];
pub const LABELS: [&str; 3] = ["r0", "r1", "r2"];

pub struct DocOptions {
    pub max_sentences: usize,
    pub mention_rate: f64,
    pub document_level: bool,
}

impl Default for DocOptions {
    fn default() -> Self {
        DocOptions {
            max_sentences: 5,
            mention_rate: 0.35,
            document_level: true,
        }
    }
}

/// Random valid document: mentions sit on distinct words, relations link
/// existing mentions (or kb ids).
pub fn random_document(seed: u64, doc_id: &str, opts: &DocOptions) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::new();
    let mut mentions = Vec::new();
    let mut pos = 0;
    for _ in 0..rng.gen_range(1..=opts.max_sentences) {
        let words: Vec<&str> = (0..rng.gen_range(3..9)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        let text = format!("{}.", words.join(" "));
        let begin = pos;
        let mut off = begin;
        for w in &words {
            if rng.gen_bool(opts.mention_rate) {
                let t = TYPES[rng.gen_range(0..TYPES.len())];
                let kb = rng.gen_bool(0.85).then(|| format!("{}:{}", t.as_str(), rng.gen_range(0..4)));
                mentions.push(EntityMention {
                    id: format!("T{}", mentions.len() + 1),
                    entity_type: t,
                    begin: off,
                    end: off + w.len(),
                    text: w.to_string(),
                    kb_id: kb,
                });
            }
            off += w.len() + 1;
        }
        let end = begin + text.chars().count();
        sentences.push(Sentence { text, begin, end });
        pos = end + 1;
    }
    let mut relations = Vec::new();
    if mentions.len() >= 2 {
        for _ in 0..rng.gen_range(0..4) {
            let a = rng.gen_range(0..mentions.len());
            let b = rng.gen_range(0..mentions.len());
            if a == b {
                continue;
            }
            let label = LABELS[rng.gen_range(0..LABELS.len())].to_string();
            let doc_level = opts.document_level && rng.gen_bool(0.3);
            match (doc_level, &mentions[a].kb_id, &mentions[b].kb_id) {
                (true, Some(h), Some(t)) => relations.push(RelationAnnotation {
                    head: h.clone(),
                    tail: t.clone(),
                    relation_type: label,
                    level: AnnotationLevel::Document,
                }),
                _ => relations.push(RelationAnnotation {
                    head: mentions[a].id.clone(),
                    tail: mentions[b].id.clone(),
                    relation_type: label,
                    level: AnnotationLevel::Mention,
                }),
            }
        }
    }
    let doc = Document {
        doc_id: doc_id.to_string(),
        sentences,
        mentions,
        relations,
        split: None,
    };
    doc.validate().expect("generated document is valid");
    doc
}

pub fn random_corpus(seed: u64, n: usize, opts: &DocOptions) -> Corpus {
    let docs = (0..n)
        .map(|i| random_document(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), &format!("d{i:03}"), opts))
        .collect();
    Corpus::new(docs).expect("unique ids")
}
