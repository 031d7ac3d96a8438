//! Dataset manifests: a corpus plus the side resources a run may need.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use kare_core::corpus::{make_splits, Corpus, SplitAssignment, SplitSpec};
use kare_core::instances::{DatasetSpec, LabelSchema, Scenario};
use kare_core::knowledge::{DescriptionStore, EmbeddingKind, EmbeddingStore};
use kare_core::synthetic::{planted_cue_corpus, planted_cue_schema, PlantedCueSpec};

/// Name of the built-in planted-cue dataset.
pub const SYNTHETIC: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestSplit {
    /// Use the documents' own split hints.
    Hints,
    Sizes([usize; 3]),
    Ratios([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    pub kind: EmbeddingKind,
}

/// JSON description of a dataset; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus: PathBuf,
    pub scenario: Scenario,
    #[serde(default)]
    pub window: usize,
    pub labels: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default = "hints")]
    pub split: ManifestSplit,
    #[serde(default = "default_seed")]
    pub split_seed: u64,
    #[serde(default)]
    pub stratify: bool,
    /// Identifier scheme of the corpus kb ids.
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub descriptions: Vec<PathBuf>,
    /// Embedding stores by the id used in `variant_params.embedding_store`.
    #[serde(default)]
    pub embeddings: BTreeMap<String, EmbeddingSource>,
    #[serde(default)]
    pub smiles: Option<PathBuf>,
}

fn hints() -> ManifestSplit {
    ManifestSplit::Hints
}

fn default_seed() -> u64 {
    kare_core::DEFAULT_SEED
}

fn default_scheme() -> String {
    "mesh".to_string()
}

pub struct Dataset {
    pub corpus: Corpus,
    pub splits: SplitAssignment,
    pub spec: DatasetSpec,
    pub descriptions: Option<DescriptionStore>,
    pub embeddings: BTreeMap<String, EmbeddingStore>,
    pub smiles: BTreeMap<String, String>,
}

impl Dataset {
    pub fn synthetic() -> Self {
        let corpus = planted_cue_corpus(&PlantedCueSpec::default());
        Dataset {
            splits: corpus.hinted_splits(),
            corpus,
            spec: DatasetSpec {
                scenario: Scenario::ChemicalGene,
                window: 0,
                schema: planted_cue_schema(),
            },
            descriptions: None,
            embeddings: BTreeMap::new(),
            smiles: BTreeMap::new(),
        }
    }

    /// `synthetic` or a manifest path.
    pub fn load(name: &str) -> Result<Self> {
        if name == SYNTHETIC {
            return Ok(Self::synthetic());
        }
        Self::from_manifest(Path::new(name))
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&crate::io::read_text(path)?)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let corpus = crate::io::load_corpus(&resolve(&m.corpus))?;
        let splits = match &m.split {
            ManifestSplit::Hints => corpus.hinted_splits(),
            ManifestSplit::Sizes(s) => make_splits(&corpus, &SplitSpec::Sizes(*s), m.split_seed, m.stratify)?,
            ManifestSplit::Ratios(r) => make_splits(&corpus, &SplitSpec::Ratios(*r), m.split_seed, m.stratify)?,
        };
        let mut schema = LabelSchema::new(&m.labels);
        for (a, l) in &m.aliases {
            schema = schema.with_alias(a, l);
        }
        let stores: Result<Vec<DescriptionStore>> = m
            .descriptions
            .iter()
            .map(|p| crate::io::load_descriptions(&resolve(p), &m.scheme))
            .collect();
        let stores = stores?;
        let descriptions = (!stores.is_empty()).then(|| DescriptionStore::merge(&stores));
        let mut embeddings = BTreeMap::new();
        for (id, src) in &m.embeddings {
            embeddings.insert(id.clone(), crate::io::load_embeddings(&resolve(&src.path), &m.scheme, src.kind)?);
        }
        let smiles = match &m.smiles {
            Some(p) => crate::io::load_smiles(&resolve(p))?,
            None => BTreeMap::new(),
        };
        Ok(Dataset {
            corpus,
            splits,
            spec: DatasetSpec {
                scenario: m.scenario,
                window: m.window,
                schema,
            },
            descriptions,
            embeddings,
            smiles,
        })
    }
}
