mod common;

use std::collections::BTreeSet;

use proptest::collection::vec;
use proptest::prelude::*;

use common::{random_corpus, DocOptions};
use kare_core::eval::{aggregate_document_level, coverage, gold_distances, recall_by_distance, MentionPrediction};

fn prediction() -> impl Strategy<Value = MentionPrediction> {
    let kb = proptest::option::weighted(0.9, proptest::sample::select(vec!["A", "B", "C", "D"]));
    (0usize..3, kb.clone(), kb, proptest::sample::subsequence(vec!["r0", "r1", "r2"], 0..=3)).prop_map(
        |(d, h, t, types)| MentionPrediction {
            doc_id: format!("d{d}"),
            head_kb: h.map(String::from),
            tail_kb: t.map(String::from),
            types: types.into_iter().map(String::from).collect(),
            probs: Vec::new(),
        },
    )
}

proptest! {
    #[test]
    fn aggregation_is_a_union(p in vec(prediction(), 0..20), q in vec(prediction(), 0..20)) {
        let a = aggregate_document_level(&p).relations();
        let b = aggregate_document_level(&q).relations();
        let both = aggregate_document_level(&[p.clone(), q.clone()].concat());
        let union: BTreeSet<_> = a.union(&b).cloned().collect();
        prop_assert!(a.is_subset(&both.relations()));
        prop_assert_eq!(both.relations(), union);
        let missing = p.iter().chain(&q).filter(|x| x.head_kb.is_none() || x.tail_kb.is_none()).count();
        prop_assert_eq!(both.excluded, missing);
    }

    #[test]
    fn coverage_grows_with_window(seed in any::<u64>(), n in 1usize..10) {
        let corpus = random_corpus(seed, n, &DocOptions::default());
        let golds = gold_distances(&corpus);
        let mut last = 0.0;
        for w in 0..6 {
            let c = coverage(&golds, w);
            prop_assert_eq!(c.included + c.missing_entity, golds.len());
            prop_assert!(c.ratio() >= last);
            last = c.ratio();
        }
        let all = coverage(&golds, usize::MAX);
        if all.included > 0 {
            prop_assert_eq!(all.ratio(), 1.0);
        }
    }

    #[test]
    fn distance_buckets_partition_golds(seed in any::<u64>(), n in 1usize..10, keep in vec(any::<bool>(), 64)) {
        let corpus = random_corpus(seed, n, &DocOptions::default());
        let golds = gold_distances(&corpus);
        let predicted: BTreeSet<_> = golds
            .iter()
            .zip(keep.iter().cycle())
            .filter(|(_, k)| **k)
            .map(|(g, _)| g.relation.clone())
            .collect();
        let r = recall_by_distance(&predicted, &golds);
        prop_assert_eq!(r.intra.gold, golds.iter().filter(|g| g.distance == Some(0)).count());
        prop_assert_eq!(r.intra.gold + r.inter.gold, golds.len());
        let overall = r.overall();
        let hits = golds.iter().filter(|g| predicted.contains(&g.relation)).count();
        prop_assert_eq!(overall.recovered, hits);
        if !golds.is_empty() {
            let expected = hits as f64 / golds.len() as f64;
            prop_assert!((overall.recall() - expected).abs() < 1e-12);
            let weighted = r.intra.recall() * r.intra.gold as f64 + r.inter.recall() * r.inter.gold as f64;
            prop_assert!((weighted / golds.len() as f64 - expected).abs() < 1e-12);
        }
    }
}
