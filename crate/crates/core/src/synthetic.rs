//! Planted-cue synthetic corpus: one chemical and one gene per sentence,
//! with relation labels signalled by fixed cue words.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotationLevel, Corpus, Document, EntityMention, EntityType, RelationAnnotation, Sentence, Split};
use crate::instances::LabelSchema;

pub const LABELS: [&str; 2] = ["up", "down"];
pub const UP_CUES: [&str; 4] = ["activates", "induces", "stimulates", "upregulates"];
pub const DOWN_CUES: [&str; 4] = ["inhibits", "blocks", "suppresses", "downregulates"];
const FILLER: [&str; 24] = [
    "the", "in", "cells", "was", "observed", "with", "after", "treatment", "levels", "of", "patients", "study",
    "expression", "tissue", "samples", "during", "assay", "and", "mice", "results", "dose", "measured", "response",
    "model",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCueSpec {
    /// Train, val and test document counts.
    pub sizes: [usize; 3],
    pub seed: u64,
    /// Filler words per sentence.
    pub filler: usize,
    /// Independent probability of each label.
    pub label_rate: f64,
}

impl Default for PlantedCueSpec {
    fn default() -> Self {
        PlantedCueSpec {
            sizes: [200, 50, 50],
            seed: crate::DEFAULT_SEED,
            filler: 6,
            label_rate: 0.45,
        }
    }
}

pub fn planted_cue_schema() -> LabelSchema {
    LabelSchema::new(&LABELS)
}

/// Label vector a bag-of-cues reader assigns to a token sequence.
pub fn cue_oracle<S: AsRef<str>>(tokens: &[S]) -> Vec<u8> {
    let has = |cues: &[&str]| u8::from(tokens.iter().any(|t| cues.contains(&t.as_ref())));
    vec![has(&UP_CUES), has(&DOWN_CUES)]
}

fn document(i: usize, split: Split, spec: &PlantedCueSpec, rng: &mut ChaCha8Rng) -> Document {
    let chem = format!("chem{}", rng.gen_range(0..40));
    let gene = format!("gene{}", rng.gen_range(0..40));
    let labels: Vec<bool> = LABELS.iter().map(|_| rng.gen_bool(spec.label_rate)).collect();
    let mut words: Vec<String> = (0..spec.filler)
        .map(|_| FILLER.choose(rng).copied().unwrap_or("the").to_string())
        .collect();
    for (on, cues) in labels.iter().zip([&UP_CUES, &DOWN_CUES]) {
        if *on {
            let at = rng.gen_range(0..=words.len());
            words.insert(at, cues.choose(rng).copied().unwrap_or(cues[0]).to_string());
        }
    }
    let ci = rng.gen_range(0..=words.len());
    words.insert(ci, chem.clone());
    let mut gi = rng.gen_range(0..=words.len());
    if gi == ci {
        gi += 1;
    }
    words.insert(gi, gene.clone());
    let chem_word = words.iter().position(|w| *w == chem).unwrap_or(0);
    let gene_word = words.iter().position(|w| *w == gene).unwrap_or(0);
    let offset = |w: usize| words[..w].iter().map(|x| x.chars().count() + 1).sum::<usize>();
    let mut text = words.join(" ");
    text.push('.');
    let doc_id = format!("syn{i:04}");
    let mention = |id: &str, t: EntityType, w: usize, s: &str, kb: String| EntityMention {
        id: id.to_string(),
        entity_type: t,
        begin: offset(w),
        end: offset(w) + s.chars().count(),
        text: s.to_string(),
        kb_id: Some(kb),
    };
    let relations = labels
        .iter()
        .zip(LABELS)
        .filter(|(on, _)| **on)
        .map(|(_, l)| RelationAnnotation {
            head: "T1".into(),
            tail: "T2".into(),
            relation_type: l.to_string(),
            level: AnnotationLevel::Mention,
        })
        .collect();
    Document {
        doc_id,
        sentences: vec![Sentence {
            begin: 0,
            end: text.chars().count(),
            text,
        }],
        mentions: vec![
            mention("T1", EntityType::Chemical, chem_word, &chem, format!("C:{chem}")),
            mention("T2", EntityType::Gene, gene_word, &gene, format!("G:{gene}")),
        ],
        relations,
        split: Some(split),
    }
}

/// Generate the corpus with split hints set.
pub fn planted_cue_corpus(spec: &PlantedCueSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::new();
    let splits = [Split::Train, Split::Val, Split::Test];
    for (split, &n) in splits.iter().zip(&spec.sizes) {
        for _ in 0..n {
            let i = docs.len();
            docs.push(document(i, *split, spec, &mut rng));
        }
    }
    Corpus::new(docs).expect("generated documents are valid")
}
