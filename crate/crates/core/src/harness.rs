//! Experiment orchestration: grids, the seed protocol, training-size
//! ablation and result tables.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{make_splits, Corpus, SplitSpec};
use crate::eval::Prf;
use crate::instances::DescriptionMode;
use crate::math::mean_sd;
use crate::model::{TrainConfig, Variant, BATCH_GRID, CONTEXT_GRID, LR_GRID, MAX_LENGTH_GRID, PROMPT_GRID, SIDE_LR_GRID};
use crate::molenc::FingerprintMethod;

pub const PHASE1_SEED: u64 = crate::DEFAULT_SEED;
pub const EXTRA_SEEDS: [u64; 2] = [908, 909];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("empty axis {0}")]
    EmptyAxis(String),
    #[error("unknown config field {0}")]
    UnknownField(String),
    #[error("value {value} is invalid for {field}: {message}")]
    BadValue { field: String, value: String, message: String },
    #[error("malformed override {0:?}, expected key=value")]
    Malformed(String),
}

/// Options specific to a fusion variant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantParams {
    pub descriptions: Option<DescriptionMode>,
    pub embedding_store: Option<String>,
    pub fingerprint: Option<FingerprintMethod>,
    pub compound_encoder: Option<String>,
}

/// Training-subset request used by the size ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSubset {
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub encoder: String,
    pub train: TrainConfig,
    #[serde(default)]
    pub variant_params: VariantParams,
    #[serde(default)]
    pub subset: Option<TrainSubset>,
    /// Set when any value was supplied outside the declared grids.
    #[serde(default)]
    pub overridden: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: &str, encoder: &str, variant: Variant) -> Self {
        ExperimentConfig {
            dataset: dataset.to_string(),
            encoder: encoder.to_string(),
            train: TrainConfig {
                variant,
                ..TrainConfig::default()
            },
            variant_params: VariantParams::default(),
            subset: None,
            overridden: false,
        }
    }

    /// Serialization with sorted keys; defines config identity.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        canonical(&v)
    }

    pub fn identity(&self) -> String {
        crate::hash::sha256_hex(self.canonical_json().as_bytes())
    }

    /// Identity with the seed removed, shared by all seeds of one setting.
    pub fn setting_identity(&self) -> String {
        let mut c = self.clone();
        c.train.seed = 0;
        c.identity()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.train.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<(), crate::model::ModelError> {
        self.train.validate(self.overridden)
    }
}

fn canonical(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical(&m[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

const TRAIN_FIELDS: [&str; 11] = [
    "lr",
    "batch",
    "max_length",
    "context_sentences",
    "prompt",
    "variant",
    "side_lr",
    "max_epochs",
    "patience",
    "threshold",
    "seed",
];
const VARIANT_FIELDS: [&str; 4] = ["descriptions", "embedding_store", "fingerprint", "compound_encoder"];

fn field_path(key: &str) -> Result<Vec<String>, GridError> {
    let parts: Vec<String> = key.split('.').map(str::to_string).collect();
    if parts.len() > 1 {
        return Ok(parts);
    }
    if TRAIN_FIELDS.contains(&key) {
        Ok(vec!["train".into(), key.into()])
    } else if VARIANT_FIELDS.contains(&key) {
        Ok(vec!["variant_params".into(), key.into()])
    } else if ["dataset", "encoder"].contains(&key) {
        Ok(vec![key.into()])
    } else {
        Err(GridError::UnknownField(key.to_string()))
    }
}

/// Set one field, addressed by bare name or dotted path.
pub fn set_field(config: &ExperimentConfig, key: &str, value: &Value) -> Result<ExperimentConfig, GridError> {
    let path = field_path(key)?;
    let mut v = serde_json::to_value(config).expect("config serializes");
    let mut slot = &mut v;
    for p in &path {
        let Value::Object(m) = slot else {
            return Err(GridError::UnknownField(key.to_string()));
        };
        slot = m.get_mut(p).ok_or_else(|| GridError::UnknownField(key.to_string()))?;
    }
    *slot = value.clone();
    serde_json::from_value(v).map_err(|e| GridError::BadValue {
        field: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}

/// Parse `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_override(s: &str) -> Result<(String, Value), GridError> {
    let (k, v) = s.split_once('=').ok_or_else(|| GridError::Malformed(s.to_string()))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Apply a free-value override; marks the config as overridden.
pub fn apply_override(config: &ExperimentConfig, s: &str) -> Result<ExperimentConfig, GridError> {
    let (k, v) = parse_override(s)?;
    let mut c = set_field(config, &k, &v)?;
    c.overridden = true;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub field: String,
    pub values: Vec<Value>,
}

impl Axis {
    pub fn new<T: Serialize>(field: &str, values: &[T]) -> Self {
        Axis {
            field: field.to_string(),
            values: values.iter().map(|v| serde_json::to_value(v).expect("axis value")).collect(),
        }
    }
}

/// Cartesian product of the axes applied to `base`, first axis varying
/// slowest.
pub fn enumerate_grid(base: &ExperimentConfig, axes: &[Axis]) -> Result<Vec<ExperimentConfig>, GridError> {
    let mut out = vec![base.clone()];
    for axis in axes {
        if axis.values.is_empty() {
            return Err(GridError::EmptyAxis(axis.field.clone()));
        }
        let mut next = Vec::with_capacity(out.len() * axis.values.len());
        for c in &out {
            for v in &axis.values {
                next.push(set_field(c, &axis.field, v)?);
            }
        }
        out = next;
    }
    Ok(out)
}

/// The five baseline axes: learning rate, batch size, maximum length,
/// context sentences and task prompt.
pub fn baseline_axes() -> Vec<Axis> {
    vec![
        Axis::new("lr", &LR_GRID),
        Axis::new("batch", &BATCH_GRID),
        Axis::new("max_length", &MAX_LENGTH_GRID),
        Axis::new("context_sentences", &CONTEXT_GRID),
        Axis::new("prompt", &PROMPT_GRID),
    ]
}

/// Extension options for a variant, applied over a fixed base config.
///
/// Text varies the description side; embedding varies the side-network
/// learning rate and store; structure varies the side-network learning rate
/// and fingerprint method, plus one direct compound-encoder setting per
/// learning rate when an encoder id is given.
pub fn extension_axes(variant: Variant, embedding_stores: &[String]) -> Vec<Axis> {
    match variant {
        Variant::Baseline => Vec::new(),
        Variant::Text => vec![Axis::new(
            "descriptions",
            &[DescriptionMode::Head, DescriptionMode::Tail, DescriptionMode::Both],
        )],
        Variant::Embedding => vec![
            Axis::new("side_lr", &SIDE_LR_GRID),
            Axis::new("embedding_store", embedding_stores),
        ],
        Variant::Structure => vec![
            Axis::new("side_lr", &SIDE_LR_GRID),
            Axis::new(
                "fingerprint",
                &[
                    FingerprintMethod::Morgan,
                    FingerprintMethod::AtomPair,
                    FingerprintMethod::Path,
                    FingerprintMethod::Combined,
                ],
            ),
        ],
    }
}

/// Extension grid over the winning base config; base hyperparameters stay
/// fixed.
pub fn extension_grid(
    winner: &ExperimentConfig,
    variant: Variant,
    embedding_stores: &[String],
    compound_encoder: Option<&str>,
) -> Result<Vec<ExperimentConfig>, GridError> {
    let mut base = winner.clone();
    base.train.variant = variant;
    let mut grid = enumerate_grid(&base, &extension_axes(variant, embedding_stores))?;
    if let (Variant::Structure, Some(enc)) = (variant, compound_encoder) {
        for lr in SIDE_LR_GRID {
            let mut c = base.clone();
            c.train.side_lr = lr;
            c.variant_params.compound_encoder = Some(enc.to_string());
            grid.push(c);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub val_f1: f64,
    pub test_f1: f64,
    #[serde(default)]
    pub per_type: BTreeMap<String, Prf>,
    #[serde(default)]
    pub runtime_s: f64,
    /// Set when the requested training subset exceeded the available data.
    #[serde(default)]
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunOutcome {
    Ok(RunResult),
    Failed { error: String },
}

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub config: ExperimentConfig,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn result(&self) -> Option<&RunResult> {
        match &self.outcome {
            RunOutcome::Ok(r) => Some(r),
            RunOutcome::Failed { .. } => None,
        }
    }
}

/// Executes one training run.
pub trait Runner {
    fn run(&mut self, config: &ExperimentConfig) -> Result<RunResult, String>;
}

/// Append-only results keyed by config identity.
pub trait ResultsStore {
    fn get(&self, id: &str) -> Option<RunRecord>;
    fn append(&mut self, record: RunRecord) -> Result<(), String>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    pub records: BTreeMap<String, RunRecord>,
}

impl ResultsStore for MemoryStore {
    fn get(&self, id: &str) -> Option<RunRecord> {
        self.records.get(id).cloned()
    }

    fn append(&mut self, record: RunRecord) -> Result<(), String> {
        self.records.insert(record.id.clone(), record);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunAccounting {
    pub executed: usize,
    pub reused: usize,
    pub failed: usize,
}

/// Run a config unless the store already holds its identity.
pub fn run_once(
    config: &ExperimentConfig,
    runner: &mut dyn Runner,
    store: &mut dyn ResultsStore,
    acct: &mut RunAccounting,
) -> Result<RunRecord, String> {
    let id = config.identity();
    if let Some(rec) = store.get(&id) {
        acct.reused += 1;
        return Ok(rec);
    }
    let outcome = match runner.run(config) {
        Ok(r) => RunOutcome::Ok(r),
        Err(error) => {
            log::warn!("run {id} failed: {error}");
            acct.failed += 1;
            RunOutcome::Failed { error }
        }
    };
    acct.executed += 1;
    let rec = RunRecord {
        id,
        config: config.clone(),
        outcome,
    };
    store.append(rec.clone())?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub phase1_seed: u64,
    pub top_k: usize,
    pub extra_seeds: Vec<u64>,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            phase1_seed: PHASE1_SEED,
            top_k: 3,
            extra_seeds: EXTRA_SEEDS.to_vec(),
        }
    }
}

/// Aggregated results of one setting over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub identity: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub val_f1: Vec<f64>,
    pub test_f1: Vec<f64>,
    pub mean_val: f64,
    pub mean: f64,
    pub sd: f64,
    /// Mean per-label F1 over seeds.
    pub per_type: BTreeMap<String, f64>,
    pub runtime_s: f64,
}

impl EvalReport {
    pub fn from_records(config: &ExperimentConfig, records: &[RunRecord]) -> Self {
        let ok: Vec<(u64, &RunResult)> = records
            .iter()
            .filter_map(|r| r.result().map(|x| (r.config.train.seed, x)))
            .collect();
        let val: Vec<f64> = ok.iter().map(|(_, r)| r.val_f1).collect();
        let test: Vec<f64> = ok.iter().map(|(_, r)| r.test_f1).collect();
        let (mean, sd) = mean_sd(&test);
        let mut per_type: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (_, r) in &ok {
            for (k, p) in &r.per_type {
                per_type.entry(k.clone()).or_default().push(p.f1);
            }
        }
        EvalReport {
            identity: config.setting_identity(),
            config: config.with_seed(0),
            seeds: ok.iter().map(|(s, _)| *s).collect(),
            mean_val: mean_sd(&val).0,
            val_f1: val,
            test_f1: test,
            mean,
            sd,
            per_type: per_type.into_iter().map(|(k, v)| (k, mean_sd(&v).0)).collect(),
            runtime_s: ok.iter().map(|(_, r)| r.runtime_s).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    /// Phase-one validation F1 per grid entry, grid order; `None` if failed.
    pub phase1: Vec<Option<f64>>,
    pub finalists: Vec<EvalReport>,
    pub winner: Option<EvalReport>,
    pub accounting: RunAccounting,
}

/// Every grid config at the phase-one seed, then the best `top_k` by
/// validation F1 at each extra seed; the winner has the best mean
/// validation F1 over its seeds.
pub fn run_protocol(
    grid: &[ExperimentConfig],
    spec: &ProtocolSpec,
    runner: &mut dyn Runner,
    store: &mut dyn ResultsStore,
) -> Result<ProtocolReport, String> {
    if grid.is_empty() {
        return Err("empty grid".into());
    }
    let mut acct = RunAccounting::default();
    let mut phase1 = Vec::with_capacity(grid.len());
    for c in grid {
        let rec = run_once(&c.with_seed(spec.phase1_seed), runner, store, &mut acct)?;
        phase1.push(rec.result().map(|r| r.val_f1));
    }
    let mut ranked: Vec<usize> = (0..grid.len()).filter(|&i| phase1[i].is_some()).collect();
    ranked.sort_by(|&a, &b| {
        let (fa, fb) = (phase1[a].unwrap_or(0.0), phase1[b].unwrap_or(0.0));
        fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut finalists = Vec::new();
    for &i in ranked.iter().take(spec.top_k) {
        let mut records = vec![run_once(&grid[i].with_seed(spec.phase1_seed), runner, store, &mut acct)?];
        // The lookup above is a store hit; do not count it.
        acct.reused -= 1;
        for &s in &spec.extra_seeds {
            records.push(run_once(&grid[i].with_seed(s), runner, store, &mut acct)?);
        }
        finalists.push(EvalReport::from_records(&grid[i], &records));
    }
    let winner = finalists
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.mean_val
                .partial_cmp(&b.mean_val)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(ib.cmp(ia))
        })
        .map(|(_, r)| r.clone());
    Ok(ProtocolReport {
        phase1,
        finalists,
        winner,
        accounting: acct,
    })
}

/// Expected number of training runs for a fresh protocol.
pub fn protocol_run_count(grid_size: usize, spec: &ProtocolSpec) -> usize {
    grid_size + spec.top_k.min(grid_size) * spec.extra_seeds.len()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl AblationSpec {
    /// `start:end:step` sizes and `n` seeds counting up from the default seed.
    pub fn parse(sizes: &str, n_seeds: usize) -> Result<Self, String> {
        let parts: Vec<&str> = sizes.split(':').collect();
        let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse::<usize>()).collect();
        let nums = nums.map_err(|e| format!("bad sizes {sizes:?}: {e}"))?;
        let sizes = match nums.as_slice() {
            [a, b, s] if *s > 0 && a <= b => (*a..=*b).step_by(*s).collect(),
            [a] => vec![*a],
            _ => return Err(format!("expected start:end:step, got {sizes:?}")),
        };
        Ok(AblationSpec {
            sizes,
            seeds: (0..n_seeds as u64).map(|i| crate::DEFAULT_SEED + i).collect(),
        })
    }

    pub fn run_count(&self) -> usize {
        self.sizes.len() * self.seeds.len()
    }
}

/// Stratified training subset of `size` documents; `clamped` when the
/// corpus is smaller.
pub fn ablation_subset(train: &Corpus, size: usize, seed: u64) -> (Vec<String>, bool) {
    if size >= train.len() {
        if size > train.len() {
            log::warn!("subset size {size} exceeds {} training documents; using all", train.len());
        }
        return (train.documents.iter().map(|d| d.doc_id.clone()).collect(), size > train.len());
    }
    let a = make_splits(train, &SplitSpec::Sizes([size, 0, 0]), seed, true).expect("size checked");
    (a.train, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub size: usize,
    pub clamped: bool,
    pub f1: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
    pub accounting: RunAccounting,
}

/// One run per (size, seed) with the supplied hyperparameters fixed.
pub fn training_size_ablation(
    config: &ExperimentConfig,
    spec: &AblationSpec,
    runner: &mut dyn Runner,
    store: &mut dyn ResultsStore,
) -> Result<LearningCurve, String> {
    let mut acct = RunAccounting::default();
    let mut rows = Vec::new();
    for &size in &spec.sizes {
        let mut f1 = Vec::new();
        let mut clamped = false;
        for &seed in &spec.seeds {
            let mut c = config.with_seed(seed);
            c.subset = Some(TrainSubset { size, seed });
            let rec = run_once(&c, runner, store, &mut acct)?;
            if let Some(r) = rec.result() {
                f1.push(r.test_f1);
                clamped |= r.clamped;
            }
        }
        let (mean, sd) = mean_sd(&f1);
        rows.push(CurveRow {
            size,
            clamped,
            f1,
            mean,
            sd,
        });
    }
    Ok(LearningCurve { rows, accounting: acct })
}

/// Row group of a variant in the main results table.
pub fn variant_group(v: Variant) -> &'static str {
    match v {
        Variant::Baseline => "Baselines",
        Variant::Text => "Text",
        Variant::Embedding => "Entity Embeddings",
        Variant::Structure => "Molecular Structure",
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

/// Main table: one row per report, grouped by variant, with the signed
/// difference to the same dataset's baseline mean.
pub fn main_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("group\tdataset\tencoder\tvariant\tmean_f1\tsd\tn\tdelta_vs_baseline\n");
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (r.config.train.variant, r.config.dataset.clone(), r.config.encoder.clone()));
    for r in sorted {
        let base = reports
            .iter()
            .find(|b| b.config.train.variant == Variant::Baseline && b.config.dataset == r.config.dataset);
        let delta = base.map_or(String::new(), |b| format!("{:+.4}", r.mean - b.mean));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            variant_group(r.config.train.variant),
            r.config.dataset,
            r.config.encoder,
            r.config.train.variant.as_str(),
            f4(r.mean),
            f4(r.sd),
            r.test_f1.len(),
            delta
        ));
    }
    out
}

pub fn per_type_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("dataset\tvariant\tlabel\tmean_f1\n");
    for r in reports {
        for (label, f1) in &r.per_type {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.config.dataset,
                r.config.train.variant.as_str(),
                label,
                f4(*f1)
            ));
        }
    }
    out
}

pub fn best_hyperparameters_table(reports: &[EvalReport]) -> String {
    let mut out =
        String::from("dataset\tencoder\tvariant\tlr\tbatch\tmax_length\tcontext_sentences\tprompt\tside_lr\n");
    for r in reports {
        let t = &r.config.train;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.config.dataset,
            r.config.encoder,
            t.variant.as_str(),
            t.lr,
            t.batch,
            t.max_length,
            t.context_sentences,
            if t.prompt { "yes" } else { "no" },
            t.side_lr
        ));
    }
    out
}

pub fn learning_curve_table(curve: &LearningCurve) -> String {
    let mut out = String::from("size\tmean_f1\tsd\tn\tclamped\n");
    for r in &curve.rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.size, f4(r.mean), f4(r.sd), r.f1.len(), r.clamped));
    }
    out
}

/// Group ledger records into per-setting reports, in identity order.
pub fn reports_from_records(records: &[RunRecord]) -> Vec<EvalReport> {
    let mut groups: BTreeMap<String, (ExperimentConfig, Vec<RunRecord>)> = BTreeMap::new();
    for r in records {
        if r.config.subset.is_some() {
            continue;
        }
        groups
            .entry(r.config.setting_identity())
            .or_insert_with(|| (r.config.clone(), Vec::new()))
            .1
            .push(r.to_owned());
    }
    groups
        .into_values()
        .map(|(c, recs)| EvalReport::from_records(&c, &recs))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FakeRunner {
        calls: usize,
    }

    impl Runner for FakeRunner {
        fn run(&mut self, c: &ExperimentConfig) -> Result<RunResult, String> {
            self.calls += 1;
            // Validation score depends on the setting, plus a seed wobble.
            let f = c.train.lr * 1e4 + c.train.batch as f64 * 1e-3 + (c.train.seed % 7) as f64 * 1e-4;
            Ok(RunResult {
                val_f1: f,
                test_f1: f - 0.01,
                ..Default::default()
            })
        }
    }

    fn base() -> ExperimentConfig {
        ExperimentConfig::new("synthetic", "tiny", Variant::Baseline)
    }

    #[test]
    fn baseline_grid_has_108_configs() {
        let g = enumerate_grid(&base(), &baseline_axes()).unwrap();
        assert_eq!(g.len(), 108);
        let ids: alloc::collections::BTreeSet<String> = g.iter().map(ExperimentConfig::identity).collect();
        assert_eq!(ids.len(), 108);
        assert!(g.iter().all(|c| c.validate().is_ok()));
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let axes = [Axis::new("batch", &[8, 16]), Axis::new("lr", &[5e-6, 3e-5, 5e-5])];
        let g = enumerate_grid(&base(), &axes).unwrap();
        let got: Vec<(usize, f64)> = g.iter().map(|c| (c.train.batch, c.train.lr)).collect();
        assert_eq!(
            got,
            vec![(8, 5e-6), (8, 3e-5), (8, 5e-5), (16, 5e-6), (16, 3e-5), (16, 5e-5)]
        );
        let single = [Axis::new("batch", &[8])];
        assert_eq!(enumerate_grid(&base(), &single).unwrap().len(), 1);
        assert!(enumerate_grid(&base(), &[Axis::new("batch", &[] as &[usize])]).is_err());
    }

    #[test]
    fn overrides_set_flag_and_fields() {
        let c = apply_override(&base(), "lr=0.001").unwrap();
        assert_eq!(c.train.lr, 0.001);
        assert!(c.overridden);
        assert!(c.validate().is_ok());
        let c = apply_override(&base(), "descriptions=both").unwrap();
        assert_eq!(c.variant_params.descriptions, Some(DescriptionMode::Both));
        assert!(apply_override(&base(), "nonsense=1").is_err());
        assert!(apply_override(&base(), "batch=abc").is_err());
    }

    #[test]
    fn identity_is_canonical() {
        let a = base();
        let back: ExperimentConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(back.identity(), a.identity());
        assert_ne!(a.identity(), a.with_seed(1).identity());
        assert_eq!(a.setting_identity(), a.with_seed(1).setting_identity());
    }

    #[test]
    fn protocol_accounting_and_resume() {
        let axes = [Axis::new("lr", &[5e-6, 3e-5]), Axis::new("batch", &[8, 16])];
        let grid = enumerate_grid(&base(), &axes).unwrap();
        let spec = ProtocolSpec::default();
        let mut runner = FakeRunner { calls: 0 };
        let mut store = MemoryStore::default();
        let rep = run_protocol(&grid, &spec, &mut runner, &mut store).unwrap();
        assert_eq!(runner.calls, 10);
        assert_eq!(protocol_run_count(4, &spec), 10);
        assert_eq!(rep.accounting.executed, 10);
        let w = rep.winner.unwrap();
        assert_eq!(w.config.train.lr, 3e-5);
        assert_eq!(w.config.train.batch, 16);
        assert_eq!(w.test_f1.len(), 3);
        assert!((w.mean - w.test_f1.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        // Resume: nothing re-executed.
        let rep2 = run_protocol(&grid, &spec, &mut runner, &mut store).unwrap();
        assert_eq!(runner.calls, 10);
        assert_eq!(rep2.accounting.executed, 0);
    }

    #[test]
    fn degenerate_protocol() {
        let grid = vec![base()];
        let mut runner = FakeRunner { calls: 0 };
        let rep = run_protocol(&grid, &ProtocolSpec::default(), &mut runner, &mut MemoryStore::default()).unwrap();
        assert_eq!(runner.calls, 3);
        assert_eq!(rep.winner.unwrap().seeds, vec![907, 908, 909]);
    }

    #[test]
    fn ablation_sizes_parse() {
        let s = AblationSpec::parse("25:200:25", 6).unwrap();
        assert_eq!(s.sizes, vec![25, 50, 75, 100, 125, 150, 175, 200]);
        assert_eq!(s.seeds, vec![907, 908, 909, 910, 911, 912]);
        assert_eq!(s.run_count(), 48);
    }

    #[test]
    fn report_single_row() {
        let rec = RunRecord {
            id: "x".into(),
            config: base(),
            outcome: RunOutcome::Ok(RunResult {
                val_f1: 0.5,
                test_f1: 0.7,
                ..Default::default()
            }),
        };
        let reps = reports_from_records(&[rec]);
        assert_eq!(reps.len(), 1);
        assert_eq!((reps[0].mean, reps[0].sd), (0.7, 0.0));
        let t = main_table(&reps);
        assert_eq!(t.lines().count(), 2);
        assert!(t.lines().nth(1).unwrap().starts_with("Baselines\tsynthetic\ttiny\tbaseline\t0.7000\t0.0000\t1\t+0.0000"));
    }
}
