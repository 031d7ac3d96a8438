//! Scoring: micro precision/recall/F1, document-level aggregation, sentence
//! distances and recall by distance.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationLevel, Corpus, Document};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    /// Precision and recall are 0 when their denominators are 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Keys present on only one side of a scoring call.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("instance keys differ: {} only in predictions, {} only in golds", only_predicted.len(), only_gold.len())]
pub struct KeyMismatch {
    pub only_predicted: Vec<String>,
    pub only_gold: Vec<String>,
}

/// Label sets per instance key; the empty set means "no relation".
pub type LabelSets = BTreeMap<String, BTreeSet<String>>;

/// Micro counts over (instance, label) pairs, optionally restricted to one
/// label.
pub fn micro_prf(predictions: &LabelSets, golds: &LabelSets, type_filter: Option<&str>) -> Result<Prf, KeyMismatch> {
    let only_predicted: Vec<String> = predictions.keys().filter(|k| !golds.contains_key(*k)).cloned().collect();
    let only_gold: Vec<String> = golds.keys().filter(|k| !predictions.contains_key(*k)).cloned().collect();
    if !only_predicted.is_empty() || !only_gold.is_empty() {
        return Err(KeyMismatch { only_predicted, only_gold });
    }
    let keep = |l: &String| type_filter.is_none_or(|f| f == l);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (k, p) in predictions {
        let g = &golds[k];
        tp += p.intersection(g).filter(|l| keep(l)).count();
        fp += p.difference(g).filter(|l| keep(l)).count();
        fn_ += g.difference(p).filter(|l| keep(l)).count();
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Micro counts for parallel sequences of label-index sets.
pub fn micro_prf_indexed(predictions: &[BTreeSet<usize>], golds: &[BTreeSet<usize>]) -> Prf {
    assert_eq!(predictions.len(), golds.len(), "prediction and gold counts differ");
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in predictions.iter().zip(golds) {
        tp += p.intersection(g).count();
        fp += p.difference(g).count();
        fn_ += g.difference(p).count();
    }
    Prf::from_counts(tp, fp, fn_)
}

/// Micro counts for set-valued predictions, e.g. document-level relations.
pub fn prf_of_sets<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Prf {
    Prf::from_counts(
        predicted.intersection(gold).count(),
        predicted.difference(gold).count(),
        gold.difference(predicted).count(),
    )
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionPrediction {
    pub doc_id: String,
    pub head_kb: Option<String>,
    pub tail_kb: Option<String>,
    pub types: Vec<String>,
    #[serde(default)]
    pub probs: Vec<f64>,
}

/// `(doc_id, head_kb, tail_kb, relation_type)`
pub type DocRelation = (String, String, String, String);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRelationSet {
    /// Predicted types per `(doc_id, head_kb, tail_kb)`.
    pub entries: BTreeMap<(String, String, String), BTreeSet<String>>,
    /// Predictions dropped because a kb id was missing.
    pub excluded: usize,
}

impl DocRelationSet {
    pub fn relations(&self) -> BTreeSet<DocRelation> {
        self.entries
            .iter()
            .flat_map(|((d, h, t), types)| types.iter().map(move |ty| (d.clone(), h.clone(), t.clone(), ty.clone())))
            .collect()
    }
}

/// Union of predicted types over all mention pairs sharing the same
/// document and kb-id pair. Pairs predicting nothing add no entry.
pub fn aggregate_document_level(predictions: &[MentionPrediction]) -> DocRelationSet {
    let mut out = DocRelationSet::default();
    for p in predictions {
        let (Some(h), Some(t)) = (&p.head_kb, &p.tail_kb) else {
            out.excluded += 1;
            continue;
        };
        if p.types.is_empty() {
            continue;
        }
        out.entries
            .entry((p.doc_id.clone(), h.clone(), t.clone()))
            .or_default()
            .extend(p.types.iter().cloned());
    }
    out
}

fn sentences_of_kb(doc: &Document, kb: &str) -> Vec<usize> {
    (0..doc.mentions.len())
        .filter(|&i| doc.mentions[i].kb_id.as_deref() == Some(kb))
        .map(|i| doc.mention_sentence(i))
        .collect()
}

/// Smallest sentence distance over all head-mention × tail-mention pairs;
/// `None` when either entity has no mention.
pub fn min_sentence_distance(doc: &Document, head_kb: &str, tail_kb: &str) -> Option<usize> {
    let hs = sentences_of_kb(doc, head_kb);
    let ts = sentences_of_kb(doc, tail_kb);
    hs.iter().flat_map(|h| ts.iter().map(move |t| h.abs_diff(*t))).min()
}

/// A gold relation with its minimum sentence distance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldDistance {
    pub relation: DocRelation,
    /// `None` when an entity never occurs in the document.
    pub distance: Option<usize>,
}

/// Gold relations of a corpus at document granularity, with distances.
/// Mention-level annotations are mapped to the kb ids of their mentions and
/// measured between the annotated mentions themselves.
pub fn gold_distances(corpus: &Corpus) -> Vec<GoldDistance> {
    let mut out: BTreeMap<DocRelation, Option<usize>> = BTreeMap::new();
    for doc in &corpus.documents {
        for r in &doc.relations {
            let (rel, d) = match r.level {
                AnnotationLevel::Document => (
                    (doc.doc_id.clone(), r.head.clone(), r.tail.clone(), r.relation_type.clone()),
                    min_sentence_distance(doc, &r.head, &r.tail),
                ),
                AnnotationLevel::Mention => {
                    let (Some(hi), Some(ti)) = (doc.mention_index(&r.head), doc.mention_index(&r.tail)) else {
                        continue;
                    };
                    let key = |i: usize| doc.mentions[i].kb_id.clone().unwrap_or_else(|| doc.mentions[i].id.clone());
                    (
                        (doc.doc_id.clone(), key(hi), key(ti), r.relation_type.clone()),
                        Some(doc.mention_sentence(hi).abs_diff(doc.mention_sentence(ti))),
                    )
                }
            };
            let slot = out.entry(rel).or_insert(d);
            *slot = match (*slot, d) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
    }
    out.into_iter().map(|(relation, distance)| GoldDistance { relation, distance }).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Relations with both entities mentioned.
    pub included: usize,
    pub within_window: usize,
    /// Relations excluded because an entity has no mention.
    pub missing_entity: usize,
}

impl Coverage {
    pub fn ratio(&self) -> f64 {
        if self.included == 0 {
            0.0
        } else {
            self.within_window as f64 / self.included as f64
        }
    }
}

/// Fraction of gold relations whose entities co-occur within `window`
/// sentences.
pub fn coverage(golds: &[GoldDistance], window: usize) -> Coverage {
    let mut c = Coverage::default();
    for g in golds {
        match g.distance {
            None => c.missing_entity += 1,
            Some(d) => {
                c.included += 1;
                if d <= window {
                    c.within_window += 1;
                }
            }
        }
    }
    c
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub gold: usize,
    pub recovered: usize,
}

impl Bucket {
    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.recovered as f64 / self.gold as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallByDistance {
    /// Distance 0.
    pub intra: Bucket,
    /// Distance at least 1, or an entity without mentions.
    pub inter: Bucket,
}

impl RecallByDistance {
    pub fn overall(&self) -> Bucket {
        Bucket {
            gold: self.intra.gold + self.inter.gold,
            recovered: self.intra.recovered + self.inter.recovered,
        }
    }
}

pub fn recall_by_distance(predicted: &BTreeSet<DocRelation>, golds: &[GoldDistance]) -> RecallByDistance {
    let mut r = RecallByDistance::default();
    for g in golds {
        let b = if g.distance == Some(0) { &mut r.intra } else { &mut r.inter };
        b.gold += 1;
        if predicted.contains(&g.relation) {
            b.recovered += 1;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn sets(entries: &[(&str, &[&str])]) -> LabelSets {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn perfect_agreement() {
        let g = sets(&[("a", &["x"]), ("b", &[]), ("c", &["x", "y"])]);
        let p = micro_prf(&g, &g, None).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn two_thirds_fixture() {
        let g = sets(&[("a", &["x"]), ("b", &["y"]), ("c", &["x"])]);
        let p = sets(&[("a", &["x"]), ("b", &["y"]), ("c", &["y"])]);
        let r = micro_prf(&p, &g, None).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (2, 1, 1));
        assert_eq!(r.f1, 2.0 / 3.0);
        assert_eq!(r.precision, 2.0 / 3.0);
        let only_x = micro_prf(&p, &g, Some("x")).unwrap();
        assert_eq!((only_x.tp, only_x.fp, only_x.fn_), (1, 0, 1));
    }

    #[test]
    fn empty_predictions_give_zero() {
        let g = sets(&[("a", &["x"])]);
        let p = sets(&[("a", &[])]);
        let r = micro_prf(&p, &g, None).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn orphan_keys_reported() {
        let g = sets(&[("a", &["x"]), ("b", &[])]);
        let p = sets(&[("a", &["x"]), ("z", &[])]);
        let e = micro_prf(&p, &g, None).unwrap_err();
        assert_eq!(e.only_predicted, vec!["z".to_string()]);
        assert_eq!(e.only_gold, vec!["b".to_string()]);
    }

    fn mp(doc: &str, h: Option<&str>, t: Option<&str>, types: &[&str]) -> MentionPrediction {
        MentionPrediction {
            doc_id: doc.into(),
            head_kb: h.map(Into::into),
            tail_kb: t.map(Into::into),
            types: types.iter().map(|s| s.to_string()).collect(),
            probs: vec![],
        }
    }

    #[test]
    fn union_over_mention_pairs() {
        let agg = aggregate_document_level(&[
            mp("d", Some("h"), Some("t"), &["A"]),
            mp("d", Some("h"), Some("t"), &["B"]),
            mp("d", Some("h"), Some("u"), &["A"]),
            mp("d", None, Some("u"), &["A"]),
        ]);
        assert_eq!(agg.entries.len(), 2);
        assert_eq!(agg.excluded, 1);
        let key = ("d".to_string(), "h".to_string(), "t".to_string());
        assert_eq!(agg.entries[&key].iter().cloned().collect::<Vec<_>>(), vec!["A", "B"]);
        assert!(aggregate_document_level(&[]).entries.is_empty());
    }

    #[test]
    fn distance_buckets() {
        let gd = |h: &str, d: usize| GoldDistance {
            relation: ("d".into(), h.into(), "t".into(), "r".into()),
            distance: Some(d),
        };
        let golds = vec![gd("a", 0), gd("b", 0), gd("c", 0), gd("e", 1), gd("f", 3)];
        let predicted: BTreeSet<DocRelation> = ["a", "b", "e"]
            .iter()
            .map(|h| ("d".to_string(), h.to_string(), "t".to_string(), "r".to_string()))
            .collect();
        let r = recall_by_distance(&predicted, &golds);
        assert!((r.intra.recall() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.inter.recall(), 0.5);
        assert_eq!(coverage(&golds, 0).ratio(), 0.6);
        assert_eq!(coverage(&golds, 100).ratio(), 1.0);
    }
}
