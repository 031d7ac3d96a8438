//! Knowledge graphs from CTD-style triple files and MuRE / RotatE embeddings.
//!
//! Scores (higher is more plausible):
//!
//! | Method | Score |
//! |--------|-------|
//! | RotatE | `γ − Σᵢ |hᵢ·e^{iθᵢ} − tᵢ|` over complex coordinates |
//! | MuRE   | `−‖R∘h − (t + r)‖² + b_h + b_t` with diagonal `R` |
//!
//! Both are trained with uniform filtered negative sampling and the logistic
//! loss `softplus(−s⁺) + mean softplus(s⁻)` under plain SGD.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgEntityType {
    Chemical,
    Disease,
    Gene,
    Phenotype,
}

impl KgEntityType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chemical" => Some(Self::Chemical),
            "disease" => Some(Self::Disease),
            "gene" => Some(Self::Gene),
            "phenotype" => Some(Self::Phenotype),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Chemical => "chemical",
            Self::Disease => "disease",
            Self::Gene => "gene",
            Self::Phenotype => "phenotype",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphScope {
    Complete,
    ChemicalDisease,
    ChemicalGene,
}

impl GraphScope {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complete" => Some(Self::Complete),
            "chemical_disease" => Some(Self::ChemicalDisease),
            "chemical_gene" => Some(Self::ChemicalGene),
            _ => None,
        }
    }

    /// Whether a triple between these entity types belongs in the graph.
    pub fn admits(self, a: KgEntityType, b: KgEntityType) -> bool {
        use KgEntityType::*;
        let pair = |x: KgEntityType, y: KgEntityType| (a == x && b == y) || (a == y && b == x);
        match self {
            GraphScope::Complete => true,
            GraphScope::ChemicalDisease => pair(Chemical, Disease),
            GraphScope::ChemicalGene => pair(Chemical, Gene),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple { head, relation, tail }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KgeError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("graph has no triples")]
    EmptyGraph,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid hyperparameters: {0}")]
    Config(String),
}

/// Deduplicated, indexed triple graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub scope: GraphScope,
    entities: Vec<String>,
    entity_types: Vec<KgEntityType>,
    relations: Vec<String>,
    triples: Vec<Triple>,
    #[serde(skip)]
    entity_index: BTreeMap<String, u32>,
    #[serde(skip)]
    relation_index: BTreeMap<String, u32>,
    #[serde(skip)]
    triple_set: BTreeSet<Triple>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Rows dropped for an unknown entity type or a type pair outside the scope.
    pub skipped: usize,
    pub duplicates: usize,
}

impl KnowledgeGraph {
    pub fn new(scope: GraphScope) -> Self {
        KnowledgeGraph {
            scope,
            entities: Vec::new(),
            entity_types: Vec::new(),
            relations: Vec::new(),
            triples: Vec::new(),
            entity_index: BTreeMap::new(),
            relation_index: BTreeMap::new(),
            triple_set: BTreeSet::new(),
        }
    }

    /// Rebuild lookup indices after deserialization.
    pub fn reindex(&mut self) {
        self.entity_index = self.entities.iter().enumerate().map(|(i, e)| (e.clone(), i as u32)).collect();
        self.relation_index = self.relations.iter().enumerate().map(|(i, r)| (r.clone(), i as u32)).collect();
        self.triple_set = self.triples.iter().copied().collect();
    }

    pub fn entity_id(&mut self, name: &str, t: KgEntityType) -> u32 {
        if let Some(&i) = self.entity_index.get(name) {
            return i;
        }
        let i = self.entities.len() as u32;
        self.entities.push(name.to_string());
        self.entity_types.push(t);
        self.entity_index.insert(name.to_string(), i);
        i
    }

    pub fn relation_id(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.relation_index.get(name) {
            return i;
        }
        let i = self.relations.len() as u32;
        self.relations.push(name.to_string());
        self.relation_index.insert(name.to_string(), i);
        i
    }

    /// Insert a triple; returns false for duplicates.
    pub fn insert(&mut self, t: Triple) -> bool {
        assert!((t.head as usize) < self.entities.len() && (t.tail as usize) < self.entities.len());
        assert!((t.relation as usize) < self.relations.len());
        if self.triple_set.insert(t) {
            self.triples.push(t);
            true
        } else {
            false
        }
    }

    /// Add rows of `head_id\trelation\ttail_id\thead_type\ttail_type`.
    /// A leading `head_id` header row and blank lines are ignored.
    pub fn add_tsv(&mut self, text: &str, report: &mut BuildReport) -> Result<(), KgeError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("head_id\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 || cols[..3].iter().any(|c| c.is_empty()) {
                return Err(KgeError::Malformed {
                    line: i + 1,
                    message: format!("expected 5 tab-separated columns, got {}", cols.len()),
                });
            }
            let (Some(ht), Some(tt)) = (KgEntityType::parse(cols[3]), KgEntityType::parse(cols[4])) else {
                report.skipped += 1;
                continue;
            };
            if !self.scope.admits(ht, tt) {
                report.skipped += 1;
                continue;
            }
            let h = self.entity_id(cols[0], ht);
            let r = self.relation_id(cols[1]);
            let t = self.entity_id(cols[2], tt);
            if !self.insert(Triple::new(h, r, t)) {
                report.duplicates += 1;
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("head_id\trelation\ttail_id\thead_type\ttail_type\n");
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                self.entities[t.head as usize],
                self.relations[t.relation as usize],
                self.entities[t.tail as usize],
                self.entity_types[t.head as usize].as_str(),
                self.entity_types[t.tail as usize].as_str(),
            ));
        }
        out
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn entity_type(&self, e: u32) -> KgEntityType {
        self.entity_types[e as usize]
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn lookup_entity(&self, name: &str) -> Option<u32> {
        self.entity_index.get(name).copied()
    }

    pub fn lookup_relation(&self, name: &str) -> Option<u32> {
        self.relation_index.get(name).copied()
    }
}

/// Build a graph from several triple files' contents.
pub fn build_graph(texts: &[&str], scope: GraphScope) -> Result<(KnowledgeGraph, BuildReport), KgeError> {
    let mut g = KnowledgeGraph::new(scope);
    let mut report = BuildReport::default();
    for t in texts {
        g.add_tsv(t, &mut report)?;
    }
    Ok((g, report))
}

/// The fixed 20-entity, 2-relation, 60-triple graph used for smoke tests:
/// `r0: i → i+1`, `r0: i → i+2`, `r1: i → i+7` (indices mod 20).
pub fn toy_graph() -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new(GraphScope::Complete);
    for i in 0..20 {
        let t = if i % 2 == 0 { KgEntityType::Chemical } else { KgEntityType::Gene };
        g.entity_id(&format!("E{i:02}"), t);
    }
    let r0 = g.relation_id("r0");
    let r1 = g.relation_id("r1");
    for (r, step) in [(r0, 1), (r0, 2), (r1, 7)] {
        for i in 0..20u32 {
            g.insert(Triple::new(i, r, (i + step) % 20));
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    CorruptTail,
    CorruptHead,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSample {
    pub triples: Vec<Triple>,
    /// Fewer than the requested number of filtered negatives exist.
    pub exhausted: bool,
}

fn corruption(t: &Triple, slot: usize, n: usize) -> Triple {
    if slot < n {
        Triple::new(slot as u32, t.relation, t.tail)
    } else {
        Triple::new(t.head, t.relation, (slot - n) as u32)
    }
}

fn sample_negatives_rng<R: Rng>(
    graph: &KnowledgeGraph,
    triple: &Triple,
    k: usize,
    mode: CorruptionMode,
    rng: &mut R,
) -> NegativeSample {
    let n = graph.num_entities();
    // Slots [0, n) replace the head, [n, 2n) replace the tail.
    let slots = match mode {
        CorruptionMode::CorruptHead => 0..n,
        CorruptionMode::CorruptTail => n..2 * n,
        CorruptionMode::Both => 0..2 * n,
    };
    if k == 0 || n == 0 {
        return NegativeSample {
            triples: Vec::new(),
            exhausted: false,
        };
    }
    let mut chosen = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    let mut misses = 0;
    while out.len() < k && misses < 32 * k + 64 {
        let slot = rng.gen_range(slots.clone());
        let c = corruption(triple, slot, n);
        if graph.contains(&c) || !chosen.insert(c) {
            misses += 1;
            continue;
        }
        out.push(c);
    }
    if out.len() < k {
        // Dense graph: draw from the explicit admissible set instead.
        let mut admissible: Vec<Triple> = slots
            .map(|s| corruption(triple, s, n))
            .filter(|c| !graph.contains(c) && !chosen.contains(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        admissible.shuffle(rng);
        let need = k - out.len();
        let exhausted = admissible.len() < need;
        out.extend(admissible.into_iter().take(need));
        return NegativeSample { triples: out, exhausted };
    }
    NegativeSample {
        triples: out,
        exhausted: false,
    }
}

/// Up to `k` distinct corrupted triples, none of which is in the graph.
pub fn sample_negatives(
    graph: &KnowledgeGraph,
    triple: &Triple,
    k: usize,
    mode: CorruptionMode,
    seed: u64,
) -> NegativeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_rng(graph, triple, k, mode, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgeMethod {
    Mure,
    Rotate,
}

impl KgeMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mure" => Some(Self::Mure),
            "rotate" => Some(Self::Rotate),
            _ => None,
        }
    }
}

/// Trained (or initialized) embedding parameters.
///
/// RotatE entities are stored as `[re_0..re_k, im_0..im_k]`; relation
/// parameters are phases. MuRE entities are real `k`-vectors with a scalar
/// bias; relations are a diagonal scaling and a translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeModel {
    pub method: KgeMethod,
    pub dim: usize,
    pub gamma: f64,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity: Vec<f64>,
    pub entity_bias: Vec<f64>,
    pub rel_a: Vec<f64>,
    pub rel_b: Vec<f64>,
}

/// Gradient of a triple's score with respect to the parameters it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub rel_a: Vec<f64>,
    pub rel_b: Vec<f64>,
    pub head_bias: f64,
    pub tail_bias: f64,
}

impl KgeModel {
    /// Random initialization: uniform `[-0.1, 0.1]` for entity and MuRE
    /// relation parameters, uniform `[0, 2π)` phases, zero biases.
    pub fn init<R: Rng>(
        method: KgeMethod,
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Self {
        let ew = match method {
            KgeMethod::Mure => dim,
            KgeMethod::Rotate => 2 * dim,
        };
        let mut u = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
        let entity = u(num_entities * ew, -0.1, 0.1);
        let (entity_bias, rel_a, rel_b) = match method {
            KgeMethod::Mure => (
                vec![0.0; num_entities],
                u(num_relations * dim, -0.1, 0.1),
                u(num_relations * dim, -0.1, 0.1),
            ),
            KgeMethod::Rotate => (Vec::new(), u(num_relations * dim, 0.0, TAU), Vec::new()),
        };
        KgeModel {
            method,
            dim,
            gamma,
            num_entities,
            num_relations,
            entity,
            entity_bias,
            rel_a,
            rel_b,
        }
    }

    /// Reals per entity vector.
    pub fn entity_width(&self) -> usize {
        match self.method {
            KgeMethod::Mure => self.dim,
            KgeMethod::Rotate => 2 * self.dim,
        }
    }

    pub fn entity_vec(&self, e: u32) -> &[f64] {
        let w = self.entity_width();
        &self.entity[e as usize * w..(e as usize + 1) * w]
    }

    fn rel_slice<'a>(&self, v: &'a [f64], r: u32) -> &'a [f64] {
        &v[r as usize * self.dim..(r as usize + 1) * self.dim]
    }

    pub fn score(&self, t: &Triple) -> f64 {
        self.score_with_grad(t, false).0
    }

    /// Score and, when `grad` is set, its analytic gradient.
    pub fn score_with_grad(&self, t: &Triple, grad: bool) -> (f64, Option<ScoreGrad>) {
        let k = self.dim;
        let h = self.entity_vec(t.head);
        let tv = self.entity_vec(t.tail);
        match self.method {
            KgeMethod::Rotate => {
                let phase = self.rel_slice(&self.rel_a, t.relation);
                let mut dist = 0.0;
                let mut g = grad.then(|| ScoreGrad {
                    head: vec![0.0; 2 * k],
                    tail: vec![0.0; 2 * k],
                    rel_a: vec![0.0; k],
                    rel_b: Vec::new(),
                    head_bias: 0.0,
                    tail_bias: 0.0,
                });
                for i in 0..k {
                    let (a, b) = (h[i], h[k + i]);
                    let (c, s) = (math::cos(phase[i]), math::sin(phase[i]));
                    let (rr, ri) = (a * c - b * s, a * s + b * c);
                    let (x, y) = (rr - tv[i], ri - tv[k + i]);
                    let m = math::hypot(x, y);
                    dist += m;
                    if let Some(g) = g.as_mut() {
                        if m > 0.0 {
                            // score = γ − m, so d score/dx = −x/m.
                            let (gx, gy) = (-x / m, -y / m);
                            g.head[i] = gx * c + gy * s;
                            g.head[k + i] = -gx * s + gy * c;
                            g.tail[i] = -gx;
                            g.tail[k + i] = -gy;
                            g.rel_a[i] = -gx * ri + gy * rr;
                        }
                    }
                }
                (self.gamma - dist, g)
            }
            KgeMethod::Mure => {
                let scale = self.rel_slice(&self.rel_a, t.relation);
                let trans = self.rel_slice(&self.rel_b, t.relation);
                let mut sq = 0.0;
                let mut g = grad.then(|| ScoreGrad {
                    head: vec![0.0; k],
                    tail: vec![0.0; k],
                    rel_a: vec![0.0; k],
                    rel_b: vec![0.0; k],
                    head_bias: 1.0,
                    tail_bias: 1.0,
                });
                for i in 0..k {
                    let e = scale[i] * h[i] - tv[i] - trans[i];
                    sq += e * e;
                    if let Some(g) = g.as_mut() {
                        g.head[i] = -2.0 * e * scale[i];
                        g.rel_a[i] = -2.0 * e * h[i];
                        g.tail[i] = 2.0 * e;
                        g.rel_b[i] = 2.0 * e;
                    }
                }
                let bias = self.entity_bias[t.head as usize] + self.entity_bias[t.tail as usize];
                (-sq + bias, g)
            }
        }
    }

    /// Entity embeddings in the embedding-store snapshot format.
    pub fn export_entities(&self, graph: &KnowledgeGraph) -> String {
        let mut out = format!("kb_id {}\n", self.entity_width());
        for (i, name) in graph.entities().iter().enumerate() {
            out.push_str(name);
            out.push('\t');
            push_row(&mut out, self.entity_vec(i as u32));
        }
        out
    }

    /// Relation parameters, one row per relation (`a` then `b` blocks).
    pub fn export_relations(&self, graph: &KnowledgeGraph) -> String {
        let width = if self.rel_b.is_empty() { self.dim } else { 2 * self.dim };
        let mut out = format!("relation {width}\n");
        for (i, name) in graph.relations().iter().enumerate() {
            let mut row = self.rel_slice(&self.rel_a, i as u32).to_vec();
            if !self.rel_b.is_empty() {
                row.extend_from_slice(self.rel_slice(&self.rel_b, i as u32));
            }
            out.push_str(name);
            out.push('\t');
            push_row(&mut out, &row);
        }
        out
    }
}

fn push_row(out: &mut String, v: &[f64]) {
    for (j, x) in v.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{x:?}"));
    }
    out.push('\n');
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeHyperparams {
    pub method: KgeMethod,
    pub dim: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub gamma: f64,
}

impl Default for KgeHyperparams {
    fn default() -> Self {
        KgeHyperparams {
            method: KgeMethod::Rotate,
            dim: 64,
            lr: 0.001,
            batch: 128,
            epochs: 100,
            negatives: 16,
            gamma: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KgeTraining {
    pub model: KgeModel,
    /// Mean per-positive loss of every epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Default)]
struct SparseGrad {
    entity: BTreeMap<u32, Vec<f64>>,
    bias: BTreeMap<u32, f64>,
    rel_a: BTreeMap<u32, Vec<f64>>,
    rel_b: BTreeMap<u32, Vec<f64>>,
}

impl SparseGrad {
    fn add(&mut self, t: &Triple, g: &ScoreGrad, w: f64) {
        let acc = |m: &mut BTreeMap<u32, Vec<f64>>, key: u32, v: &[f64]| {
            if v.is_empty() {
                return;
            }
            let e = m.entry(key).or_insert_with(|| vec![0.0; v.len()]);
            for (a, b) in e.iter_mut().zip(v) {
                *a += w * b;
            }
        };
        acc(&mut self.entity, t.head, &g.head);
        acc(&mut self.entity, t.tail, &g.tail);
        acc(&mut self.rel_a, t.relation, &g.rel_a);
        acc(&mut self.rel_b, t.relation, &g.rel_b);
        *self.bias.entry(t.head).or_default() += w * g.head_bias;
        *self.bias.entry(t.tail).or_default() += w * g.tail_bias;
    }
}

/// SGD training with uniform filtered negatives (corrupting head or tail).
pub fn train_kge(graph: &KnowledgeGraph, hp: &KgeHyperparams, seed: u64) -> Result<KgeTraining, KgeError> {
    if graph.triples().is_empty() {
        return Err(KgeError::EmptyGraph);
    }
    if hp.dim == 0 || hp.batch == 0 || hp.lr.is_nan() || hp.lr <= 0.0 {
        return Err(KgeError::Config(format!(
            "dim, batch and lr must be positive (dim={}, batch={}, lr={})",
            hp.dim, hp.batch, hp.lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = KgeModel::init(
        hp.method,
        graph.num_entities(),
        graph.num_relations(),
        hp.dim,
        hp.gamma,
        &mut rng,
    );
    let mut order: Vec<Triple> = graph.triples().to_vec();
    let mut trace = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch) {
            let mut grads = SparseGrad::default();
            for pos in batch {
                let (sp, gp) = model.score_with_grad(pos, true);
                // Descent direction on the loss is ascent on −loss.
                let mut loss = math::softplus(-sp);
                grads.add(pos, gp.as_ref().expect("grad requested"), math::sigmoid(-sp));
                let negs = sample_negatives_rng(graph, pos, hp.negatives, CorruptionMode::Both, &mut rng);
                let nn = negs.triples.len().max(1) as f64;
                for neg in &negs.triples {
                    let (sn, gn) = model.score_with_grad(neg, true);
                    loss += math::softplus(sn) / nn;
                    grads.add(neg, gn.as_ref().expect("grad requested"), -math::sigmoid(sn) / nn);
                }
                epoch_loss += loss;
            }
            let step = hp.lr / batch.len() as f64;
            let w = model.entity_width();
            for (e, g) in grads.entity {
                for (p, gi) in model.entity[e as usize * w..(e as usize + 1) * w].iter_mut().zip(g) {
                    *p += step * gi;
                }
            }
            if hp.method == KgeMethod::Mure {
                for (e, g) in grads.bias {
                    model.entity_bias[e as usize] += step * g;
                }
            }
            let k = model.dim;
            for (r, g) in grads.rel_a {
                for (p, gi) in model.rel_a[r as usize * k..(r as usize + 1) * k].iter_mut().zip(g) {
                    *p += step * gi;
                }
            }
            for (r, g) in grads.rel_b {
                for (p, gi) in model.rel_b[r as usize * k..(r as usize + 1) * k].iter_mut().zip(g) {
                    *p += step * gi;
                }
            }
        }
        let mean = epoch_loss / order.len() as f64;
        if !mean.is_finite() || model.entity.iter().any(|x| !x.is_finite()) {
            return Err(KgeError::Diverged { epoch, loss: mean });
        }
        trace.push(mean);
    }
    Ok(KgeTraining {
        model,
        loss_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSide {
    Tail,
    Head,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredictionReport {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub filtered: bool,
    pub ranks: Vec<f64>,
}

pub fn mrr_from_ranks(ranks: &[f64]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64
}

pub fn hits_at(ranks: &[f64], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|r| **r <= k as f64).count() as f64 / ranks.len() as f64
}

fn filtered_candidates<'a>(graph: &'a KnowledgeGraph, t: &Triple, tail_side: bool) -> impl Iterator<Item = Triple> + 'a {
    let t = *t;
    (0..graph.num_entities() as u32).filter_map(move |e| {
        let c = if tail_side {
            Triple::new(t.head, t.relation, e)
        } else {
            Triple::new(e, t.relation, t.tail)
        };
        (c == t || !graph.contains(&c)).then_some(c)
    })
}

/// Filtered ranking: competitors that are themselves known triples are
/// removed. Ties count half (`rank = 1 + greater + equal / 2`).
pub fn evaluate_link_prediction(
    model: &KgeModel,
    tests: &[Triple],
    graph: &KnowledgeGraph,
    ks: &[usize],
    side: RankSide,
) -> LinkPredictionReport {
    let mut ranks = Vec::new();
    for t in tests {
        let sides: &[bool] = match side {
            RankSide::Tail => &[true],
            RankSide::Head => &[false],
            RankSide::Both => &[false, true],
        };
        for &tail_side in sides {
            let truth = model.score(t);
            let (mut greater, mut equal) = (0usize, 0usize);
            for c in filtered_candidates(graph, t, tail_side) {
                if c == *t {
                    continue;
                }
                let s = model.score(&c);
                if s > truth {
                    greater += 1;
                } else if s == truth {
                    equal += 1;
                }
            }
            ranks.push(1.0 + greater as f64 + equal as f64 / 2.0);
        }
    }
    LinkPredictionReport {
        mrr: mrr_from_ranks(&ranks),
        hits: ks.iter().map(|&k| (k, hits_at(&ranks, k))).collect(),
        filtered: true,
        ranks,
    }
}

/// Expected filtered MRR and hits@k of a ranker ordering candidates uniformly
/// at random.
pub fn random_ranker_baseline(
    tests: &[Triple],
    graph: &KnowledgeGraph,
    ks: &[usize],
    side: RankSide,
) -> LinkPredictionReport {
    let mut mrr = 0.0;
    let mut hits: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut n = 0usize;
    for t in tests {
        let sides: &[bool] = match side {
            RankSide::Tail => &[true],
            RankSide::Head => &[false],
            RankSide::Both => &[false, true],
        };
        for &tail_side in sides {
            let c = filtered_candidates(graph, t, tail_side).count();
            let harmonic: f64 = (1..=c).map(|r| 1.0 / r as f64).sum();
            mrr += harmonic / c as f64;
            for (k, h) in hits.iter_mut() {
                *h += (*k).min(c) as f64 / c as f64;
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    LinkPredictionReport {
        mrr: mrr / n,
        hits: hits.into_iter().map(|(k, h)| (k, h / n)).collect(),
        filtered: true,
        ranks: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate_unit(h: [f64; 2], phase: f64, t: [f64; 2], gamma: f64) -> KgeModel {
        KgeModel {
            method: KgeMethod::Rotate,
            dim: 1,
            gamma,
            num_entities: 2,
            num_relations: 1,
            entity: vec![h[0], h[1], t[0], t[1]],
            entity_bias: Vec::new(),
            rel_a: vec![phase],
            rel_b: Vec::new(),
        }
    }

    #[test]
    fn rotate_zero_phase_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = KgeModel::init(KgeMethod::Rotate, 3, 1, 8, 4.5, &mut rng);
        m.rel_a.iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(m.score(&Triple::new(2, 0, 2)), 4.5);
    }

    #[test]
    fn rotate_quarter_turn() {
        let m = rotate_unit([1.0, 0.0], core::f64::consts::FRAC_PI_2, [0.0, 1.0], 2.0);
        assert!((m.score(&Triple::new(0, 0, 1)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mure_identity_configuration() {
        let m = KgeModel {
            method: KgeMethod::Mure,
            dim: 3,
            gamma: 0.0,
            num_entities: 1,
            num_relations: 1,
            entity: vec![0.3, -0.2, 0.9],
            entity_bias: vec![0.0],
            rel_a: vec![1.0; 3],
            rel_b: vec![0.0; 3],
        };
        assert_eq!(m.score(&Triple::new(0, 0, 0)), 0.0);
    }

    #[test]
    fn empty_file_builds_empty_graph() {
        let (g, r) = build_graph(&[""], GraphScope::Complete).unwrap();
        assert_eq!((g.num_entities(), g.triples().len()), (0, 0));
        assert_eq!(r, BuildReport::default());
    }

    #[test]
    fn toy_file_counts() {
        let text = "head_id\trelation\ttail_id\thead_type\ttail_type\n\
                    C1\tincreases\tG1\tchemical\tgene\n\
                    C1\tdecreases\tD1\tchemical\tdisease\n\
                    C2\tincreases\tG1\tchemical\tgene\n\
                    C2\tincreases\tG1\tchemical\tgene\n\
                    C3\tx\tP1\tchemical\tpathway\n";
        let (g, r) = build_graph(&[text], GraphScope::Complete).unwrap();
        assert_eq!(g.triples().len(), 3);
        assert_eq!(g.num_entities(), 4);
        assert_eq!(g.num_relations(), 2);
        assert_eq!(r, BuildReport { skipped: 1, duplicates: 1 });
        let (cg, r) = build_graph(&[text], GraphScope::ChemicalGene).unwrap();
        assert_eq!(cg.triples().len(), 2);
        assert_eq!(r.skipped, 2);
        let (again, _) = build_graph(&[&g.to_tsv()], GraphScope::Complete).unwrap();
        assert_eq!(again.triples(), g.triples());
    }

    #[test]
    fn malformed_row_names_line() {
        assert_eq!(
            build_graph(&["a\tb\tc\n"], GraphScope::Complete).unwrap_err(),
            KgeError::Malformed {
                line: 1,
                message: "expected 5 tab-separated columns, got 3".into()
            }
        );
    }

    #[test]
    fn negatives_are_filtered_and_deterministic() {
        let g = toy_graph();
        let t = g.triples()[0];
        assert!(sample_negatives(&g, &t, 0, CorruptionMode::CorruptTail, 5).triples.is_empty());
        let a = sample_negatives(&g, &t, 5, CorruptionMode::CorruptTail, 5);
        assert_eq!(a.triples.len(), 5);
        assert!(!a.exhausted);
        for n in &a.triples {
            assert!(!g.contains(n));
            assert_eq!((n.head, n.relation), (t.head, t.relation));
        }
        assert_eq!(a, sample_negatives(&g, &t, 5, CorruptionMode::CorruptTail, 5));
    }

    #[test]
    fn exhausted_when_graph_too_small() {
        let g = toy_graph();
        let t = g.triples()[0];
        // 20 tails minus the two true r0 tails of the head.
        let s = sample_negatives(&g, &t, 25, CorruptionMode::CorruptTail, 1);
        assert_eq!(s.triples.len(), 18);
        assert!(s.exhausted);
    }

    #[test]
    fn epochs_zero_returns_initialization() {
        let g = toy_graph();
        let hp = KgeHyperparams {
            epochs: 0,
            dim: 4,
            ..Default::default()
        };
        let trained = train_kge(&g, &hp, 907).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(907);
        let init = KgeModel::init(hp.method, 20, 2, 4, hp.gamma, &mut rng);
        assert_eq!(trained.model, init);
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn mrr_of_hand_ranks() {
        let m = mrr_from_ranks(&[1.0, 2.0, 4.0]);
        assert!((m - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(hits_at(&[1.0, 2.0, 4.0], 2), 2.0 / 3.0);
    }

    #[test]
    fn filtering_leaves_only_truth() {
        // Every competitor tail of (0, r, ?) is a true triple.
        let mut g = KnowledgeGraph::new(GraphScope::Complete);
        for i in 0..4 {
            g.entity_id(&format!("e{i}"), KgEntityType::Gene);
        }
        g.relation_id("r");
        for t in 0..4 {
            g.insert(Triple::new(0, 0, t));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = KgeModel::init(KgeMethod::Mure, 4, 1, 3, 0.0, &mut rng);
        let r = evaluate_link_prediction(&m, &[Triple::new(0, 0, 2)], &g, &[1], RankSide::Tail);
        assert_eq!(r.ranks, vec![1.0]);
        assert_eq!(r.mrr, 1.0);
        assert_eq!(r.hits[&1], 1.0);
    }

    #[test]
    fn perfect_ranker_scores_one() {
        // MuRE with identity relation and tails equal to heads ranks t = h first.
        let mut g = KnowledgeGraph::new(GraphScope::Complete);
        for i in 0..5 {
            g.entity_id(&format!("e{i}"), KgEntityType::Gene);
        }
        g.relation_id("self");
        for i in 0..5 {
            g.insert(Triple::new(i, 0, i));
        }
        let m = KgeModel {
            method: KgeMethod::Mure,
            dim: 1,
            gamma: 0.0,
            num_entities: 5,
            num_relations: 1,
            entity: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            entity_bias: vec![0.0; 5],
            rel_a: vec![1.0],
            rel_b: vec![0.0],
        };
        let r = evaluate_link_prediction(&m, g.triples(), &g, &[1, 3], RankSide::Tail);
        assert_eq!(r.mrr, 1.0);
        assert_eq!(r.hits[&1], 1.0);
    }

    #[test]
    fn random_baseline_matches_harmonic_mean() {
        let g = toy_graph();
        let t = g.triples()[0];
        let r = random_ranker_baseline(&[t], &g, &[10], RankSide::Tail);
        // 19 candidates survive filtering (the other true r0 tail is removed).
        let h: f64 = (1..=19).map(|i| 1.0 / i as f64).sum();
        assert!((r.mrr - h / 19.0).abs() < 1e-15);
        assert!((r.hits[&10] - 10.0 / 19.0).abs() < 1e-15);
    }
}
