//! Local execution of experiment configs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use kare_core::harness::{ablation_subset, ExperimentConfig, RunResult, Runner};
use kare_core::instances::DescriptionMode;
use kare_core::model::{EncoderConfig, Variant};
use kare_core::molenc::{encode_compound, FingerprintMethod, FingerprintParams, ToyCompoundEncoder};
use kare_core::pipeline::{run_pipeline_with_model, PipelineInputs, SideInfo};

use crate::dataset::Dataset;
use crate::io::{write_jsonl, write_text};

/// Encoder ids understood by the local runner.
pub const ENCODERS: [&str; 1] = ["tiny"];
/// Compound-encoder ids for the structure variant.
pub const COMPOUND_ENCODERS: [&str; 1] = ["toy"];
const COMPOUND_WIDTH: usize = 64;

pub fn encoder_config(id: &str) -> Result<EncoderConfig> {
    match id {
        "tiny" => Ok(EncoderConfig::default()),
        other => bail!("unknown encoder {other:?}; available: {}", ENCODERS.join(", ")),
    }
}

/// Runs configs in-process and writes a checkpoint directory per run
/// under `<root>/runs/<identity>/`.
pub struct LocalRunner {
    root: PathBuf,
    datasets: BTreeMap<String, Dataset>,
}

impl LocalRunner {
    pub fn new(root: &Path) -> Self {
        LocalRunner {
            root: root.to_path_buf(),
            datasets: BTreeMap::new(),
        }
    }

    pub fn run_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.root.join("runs").join(config.identity())
    }

    fn dataset(&mut self, name: &str) -> Result<&Dataset> {
        if !self.datasets.contains_key(name) {
            let d = Dataset::load(name)?;
            self.datasets.insert(name.to_string(), d);
        }
        Ok(&self.datasets[name])
    }

    pub fn execute(&mut self, config: &ExperimentConfig) -> Result<RunResult> {
        config.validate()?;
        let encoder = encoder_config(&config.encoder)?;
        let dir = self.run_dir(config);
        let ds = self.dataset(&config.dataset)?;
        let variant = config.train.variant;
        let vp = &config.variant_params;

        let structure = if variant == Variant::Structure {
            Some(structure_vectors(ds, vp.fingerprint, vp.compound_encoder.as_deref(), config.train.seed)?)
        } else {
            None
        };
        let (side, side_hash) = match variant {
            Variant::Embedding => {
                let id = vp
                    .embedding_store
                    .as_deref()
                    .ok_or_else(|| anyhow!("embedding variant needs variant_params.embedding_store"))?;
                let store = ds
                    .embeddings
                    .get(id)
                    .ok_or_else(|| anyhow!("dataset has no embedding store {id:?}"))?;
                (SideInfo::Embedding(store), Some(store.content_hash()))
            }
            Variant::Structure => {
                let (vectors, width, direct) = structure.as_ref().expect("built above");
                let hash = kare_core::hash::sha256_hex(serde_json::to_string(vectors)?.as_bytes());
                (
                    SideInfo::Structure {
                        vectors,
                        width: *width,
                        direct: *direct,
                    },
                    Some(hash),
                )
            }
            _ => (SideInfo::None, None),
        };
        if variant == Variant::Text && ds.descriptions.is_none() {
            log::warn!("text variant without description stores; descriptions render empty");
        }

        let (subset, clamped) = match config.subset {
            Some(s) => {
                let train = ds.corpus.subset(&ds.splits.train);
                let (ids, clamped) = ablation_subset(&train, s.size, s.seed);
                (Some(ids), clamped)
            }
            None => (None, false),
        };
        let inputs = PipelineInputs {
            corpus: &ds.corpus,
            splits: &ds.splits,
            spec: &ds.spec,
            descriptions: ds.descriptions.as_ref(),
            side,
            encoder,
            description_mode: vp.descriptions.unwrap_or(DescriptionMode::Both),
        };
        let start = Instant::now();
        let (result, model) =
            run_pipeline_with_model(&inputs, &config.train, subset.as_deref()).map_err(|e| anyhow!("{e}"))?;
        let runtime_s = start.elapsed().as_secs_f64();
        log::info!(
            "run {} val F1 {:.4} test F1 {:.4} in {:.1}s",
            &config.identity()[..12],
            result.val.f1,
            result.test.f1,
            runtime_s
        );

        write_text(&dir.join("config.json"), &config.canonical_json())?;
        write_text(&dir.join("params.json"), &serde_json::to_string(&model.store)?)?;
        write_text(&dir.join("vocab.json"), &serde_json::to_string(&model.encoder.vocab)?)?;
        write_jsonl(&dir.join("epochs.jsonl"), &result.train.epochs)?;
        write_jsonl(&dir.join("predictions.jsonl"), &result.predictions)?;
        if let Some(h) = side_hash {
            write_text(&dir.join("side_store.sha256"), &format!("{h}\n"))?;
        }
        let run = RunResult {
            val_f1: result.val.f1,
            test_f1: result.test.f1,
            per_type: result.per_type,
            runtime_s,
            clamped,
        };
        write_text(&dir.join("result.json"), &serde_json::to_string_pretty(&run)?)?;
        Ok(run)
    }
}

impl Runner for LocalRunner {
    fn run(&mut self, config: &ExperimentConfig) -> Result<RunResult, String> {
        self.execute(config).map_err(|e| format!("{e:#}"))
    }
}

type StructureVectors = (BTreeMap<String, Vec<f64>>, usize, bool);

/// Fingerprints (through the fusion MLP) or frozen compound-encoder outputs
/// (concatenated directly) for every kb id with a SMILES string.
fn structure_vectors(
    ds: &Dataset,
    method: Option<FingerprintMethod>,
    compound_encoder: Option<&str>,
    seed: u64,
) -> Result<StructureVectors> {
    if ds.smiles.is_empty() {
        log::warn!("structure variant without SMILES; every side vector is zero");
    }
    if let Some(id) = compound_encoder {
        if !COMPOUND_ENCODERS.contains(&id) {
            bail!("unknown compound encoder {id:?}");
        }
        let enc = ToyCompoundEncoder::new(COMPOUND_WIDTH, seed);
        let mut out = BTreeMap::new();
        for (kb, smi) in &ds.smiles {
            match encode_compound(&enc, Some(smi)) {
                Ok(v) => {
                    out.insert(kb.clone(), v);
                }
                Err(e) => log::warn!("{kb}: cannot encode {smi:?}: {e}"),
            }
        }
        return Ok((out, COMPOUND_WIDTH, true));
    }
    let method = method.unwrap_or(FingerprintMethod::Morgan);
    let params = FingerprintParams::default();
    let width = kare_core::molenc::fingerprint_width(method, &params);
    let fps = crate::io::fingerprints(&ds.smiles, method, &params).context("fingerprinting")?;
    Ok((fps.into_iter().map(|(k, f)| (k, f.as_f64())).collect(), width, false))
}

