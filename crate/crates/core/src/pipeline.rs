//! End-to-end run: render a corpus into instances, attach side vectors,
//! train a tiny-encoder classifier and score it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationLevel, Corpus, EntityType, SplitAssignment};
use crate::eval::{aggregate_document_level, micro_prf_indexed, prf_of_sets, DocRelation, MentionPrediction, Prf};
use crate::instances::{
    build_dataset, BasicTokenizer, DatasetSpec, DescriptionMode, InstanceError, RenderOptions, RenderedInstance,
};
use crate::knowledge::{DescriptionStore, EmbeddingStore};
use crate::model::{
    predict, train_model, EncoderConfig, Example, Fusion, ModelError, RelationClassifier, TrainConfig, TinyEncoder,
    TrainReport, Variant, Vocab,
};

/// Frozen per-entity side information.
#[derive(Debug, Clone, Copy)]
pub enum SideInfo<'a> {
    None,
    /// Head and tail vectors concatenated, through the fusion MLP.
    Embedding(&'a EmbeddingStore),
    /// Per-kb-id vectors of one width (fingerprints or compound encodings)
    /// for chemical-like entities.
    Structure {
        vectors: &'a BTreeMap<String, Vec<f64>>,
        width: usize,
        /// Concatenate without the fusion MLP (compound-encoder outputs).
        direct: bool,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Instances(#[from] InstanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Config(String),
}

pub struct PipelineInputs<'a> {
    pub corpus: &'a Corpus,
    pub splits: &'a SplitAssignment,
    pub spec: &'a DatasetSpec,
    pub descriptions: Option<&'a DescriptionStore>,
    pub side: SideInfo<'a>,
    pub encoder: EncoderConfig,
    pub description_mode: DescriptionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub train: TrainReport,
    pub val: Prf,
    pub test: Prf,
    pub per_type: BTreeMap<String, Prf>,
    pub predictions: Vec<MentionPrediction>,
    pub instances: [usize; 3],
}

fn is_chemical(t: EntityType) -> bool {
    matches!(t, EntityType::Chemical | EntityType::Drug | EntityType::Brand | EntityType::Group)
}

/// Side vector for an instance, or `None` when the variant has none.
///
/// Structure vectors come from the chemical-like side of the pair; when
/// both sides are chemical-like they are concatenated head first.
fn side_vector(side: &SideInfo<'_>, inst: &RenderedInstance, both_chemical: bool) -> Option<Vec<f64>> {
    let p = &inst.provenance;
    match side {
        SideInfo::None => None,
        SideInfo::Embedding(store) => Some(store.lookup_pair(p.head_kb.as_deref(), p.tail_kb.as_deref())),
        SideInfo::Structure { vectors, width, .. } => {
            let get = |kb: &Option<String>| {
                kb.as_ref()
                    .and_then(|k| vectors.get(k))
                    .cloned()
                    .unwrap_or_else(|| alloc::vec![0.0; *width])
            };
            let mut out = Vec::new();
            if is_chemical(p.head_type) {
                out.extend(get(&p.head_kb));
            }
            if is_chemical(p.tail_type) && (both_chemical || !is_chemical(p.head_type)) {
                out.extend(get(&p.tail_kb));
            }
            if out.is_empty() {
                out = alloc::vec![0.0; *width];
            }
            Some(out)
        }
    }
}

fn side_fusion(side: &SideInfo<'_>, both_chemical: bool) -> Fusion {
    match side {
        SideInfo::None => Fusion::None,
        SideInfo::Embedding(s) => Fusion::Mlp { input: 2 * s.dim() },
        SideInfo::Structure { width, direct, .. } => {
            let w = if both_chemical { 2 * width } else { *width };
            if *direct {
                Fusion::Direct { width: w }
            } else {
                Fusion::Mlp { input: w }
            }
        }
    }
}

/// Render options for a training config; the prompt names the relation
/// type(s) of the schema.
pub fn render_options(config: &TrainConfig, spec: &DatasetSpec, descriptions: DescriptionMode) -> RenderOptions {
    RenderOptions {
        context_sentences: config.context_sentences,
        prompt: config.prompt,
        descriptions: if config.variant == Variant::Text {
            descriptions
        } else {
            DescriptionMode::None
        },
        max_length: config.max_length,
        relation_type_name: spec.schema.labels.join(" or "),
    }
}

/// Train on the assignment's train split (or the given subset of it),
/// select on val and score on test.
pub fn run_pipeline(
    inputs: &PipelineInputs<'_>,
    config: &TrainConfig,
    train_subset: Option<&[String]>,
) -> Result<PipelineResult, PipelineError> {
    run_pipeline_with_model(inputs, config, train_subset).map(|(r, _)| r)
}

/// [`run_pipeline`], also returning the trained classifier.
pub fn run_pipeline_with_model(
    inputs: &PipelineInputs<'_>,
    config: &TrainConfig,
    train_subset: Option<&[String]>,
) -> Result<(PipelineResult, RelationClassifier<TinyEncoder>), PipelineError> {
    let needs_side = matches!(config.variant, Variant::Embedding | Variant::Structure);
    if needs_side == matches!(inputs.side, SideInfo::None) {
        return Err(PipelineError::Config(format!(
            "variant {} {} side information",
            config.variant.as_str(),
            if needs_side { "requires" } else { "does not take" }
        )));
    }
    let options = render_options(config, inputs.spec, inputs.description_mode);
    let max_len = options.max_length.min(inputs.encoder.max_len);
    let options = RenderOptions { max_length: max_len, ..options };
    let (instances, stats) = build_dataset(inputs.corpus, inputs.spec, &options, &BasicTokenizer, inputs.descriptions)?;
    log::info!(
        "{} pairs, {} rendered, {} overlapping skipped, {} unrenderable",
        stats.pairs,
        instances.len(),
        stats.skipped_overlapping,
        stats.skipped_render
    );
    let train_ids: BTreeSet<&str> = match train_subset {
        Some(s) => s.iter().map(String::as_str).collect(),
        None => inputs.splits.train.iter().map(String::as_str).collect(),
    };
    let val_ids: BTreeSet<&str> = inputs.splits.val.iter().map(String::as_str).collect();
    let test_ids: BTreeSet<&str> = inputs.splits.test.iter().map(String::as_str).collect();
    let pick = |ids: &BTreeSet<&str>| -> Vec<&RenderedInstance> {
        instances.iter().filter(|i| ids.contains(i.provenance.doc_id.as_str())).collect()
    };
    let (tr, va, te) = (pick(&train_ids), pick(&val_ids), pick(&test_ids));
    let vocab = Vocab::build(tr.iter().map(|i| i.tokens.as_slice()), 1);
    let both_chemical = inputs.spec.scenario.head_types().iter().copied().all(is_chemical)
        && inputs.spec.scenario.tail_types().iter().copied().all(is_chemical);
    let fusion = side_fusion(&inputs.side, both_chemical);
    let mut model = RelationClassifier::tiny(
        EncoderConfig {
            max_len: inputs.encoder.max_len.max(max_len),
            ..inputs.encoder.clone()
        },
        vocab,
        fusion,
        inputs.spec.schema.len(),
        config.seed,
    );
    let to_examples = |set: &[&RenderedInstance]| -> Vec<Example> {
        set.iter()
            .map(|i| Example {
                ids: i.tokens.iter().map(|t| model.encoder.vocab.id(t)).collect(),
                side: side_vector(&inputs.side, i, both_chemical),
                labels: i.labels.as_f64(),
            })
            .collect()
    };
    let (train_ex, val_ex, test_ex) = (to_examples(&tr), to_examples(&va), to_examples(&te));
    let report = train_model(&mut model, &train_ex, &val_ex, config)?;

    let labels = &inputs.spec.schema.labels;
    let score = |set: &[&RenderedInstance], ex: &[Example]| -> Result<(Prf, BTreeMap<String, Prf>, Vec<MentionPrediction>), PipelineError> {
        let preds = predict(&model, ex, config.threshold)?;
        let mp: Vec<MentionPrediction> = set
            .iter()
            .zip(&preds)
            .map(|(i, p)| MentionPrediction {
                doc_id: i.provenance.doc_id.clone(),
                head_kb: i.provenance.head_kb.clone(),
                tail_kb: i.provenance.tail_kb.clone(),
                types: p.labels.iter().map(|&l| labels[l].clone()).collect(),
                probs: p.probs.clone(),
            })
            .collect();
        let doc_ids: BTreeSet<&str> = set.iter().map(|i| i.provenance.doc_id.as_str()).collect();
        let document_level = inputs
            .corpus
            .documents
            .iter()
            .filter(|d| doc_ids.contains(d.doc_id.as_str()))
            .flat_map(|d| &d.relations)
            .any(|r| r.level == AnnotationLevel::Document);
        let mut per_type = BTreeMap::new();
        let overall = if document_level {
            let predicted = aggregate_document_level(&mp).relations();
            let gold = document_golds(inputs.corpus, &doc_ids, inputs.spec);
            for l in labels {
                let f = |s: &BTreeSet<DocRelation>| s.iter().filter(|r| &r.3 == l).cloned().collect::<BTreeSet<_>>();
                per_type.insert(l.clone(), prf_of_sets(&f(&predicted), &f(&gold)));
            }
            prf_of_sets(&predicted, &gold)
        } else {
            let p: Vec<BTreeSet<usize>> = preds.iter().map(|p| p.labels.iter().copied().collect()).collect();
            let g: Vec<BTreeSet<usize>> = set.iter().map(|i| i.labels.set_indices().into_iter().collect()).collect();
            for (li, l) in labels.iter().enumerate() {
                let only = |v: &[BTreeSet<usize>]| -> Vec<BTreeSet<usize>> {
                    v.iter().map(|s| s.iter().copied().filter(|x| *x == li).collect()).collect()
                };
                per_type.insert(l.clone(), micro_prf_indexed(&only(&p), &only(&g)));
            }
            micro_prf_indexed(&p, &g)
        };
        Ok((overall, per_type, mp))
    };
    let (val, _, _) = score(&va, &val_ex)?;
    let (test, per_type, predictions) = score(&te, &test_ex)?;
    let result = PipelineResult {
        train: report,
        val,
        test,
        per_type,
        predictions,
        instances: [tr.len(), va.len(), te.len()],
    };
    Ok((result, model))
}

/// Gold document-level relations of the given documents, canonical label
/// names, including relations no candidate pair can reach.
fn document_golds(corpus: &Corpus, docs: &BTreeSet<&str>, spec: &DatasetSpec) -> BTreeSet<DocRelation> {
    let mut out = BTreeSet::new();
    for d in corpus.documents.iter().filter(|d| docs.contains(d.doc_id.as_str())) {
        for r in d.relations.iter().filter(|r| r.level == AnnotationLevel::Document) {
            if let Some(i) = spec.schema.index_of(&r.relation_type) {
                out.insert((d.doc_id.clone(), r.head.clone(), r.tail.clone(), spec.schema.labels[i].clone()));
            }
        }
    }
    out
}
