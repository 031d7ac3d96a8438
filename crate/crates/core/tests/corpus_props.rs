mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use common::{random_corpus, DocOptions};
use kare_core::corpus::{
    make_splits, normalize_mentions, parse_interchange, stratum_key, to_interchange, MappingTable,
    NormalizationPolicy, SplitSpec,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interchange_round_trip(seed in any::<u64>(), n in 0usize..8) {
        let c = random_corpus(seed, n, &DocOptions::default());
        prop_assert_eq!(parse_interchange(&to_interchange(&c)).unwrap(), c);
    }

    #[test]
    fn normalization_only_touches_kb_ids(seed in any::<u64>(), n in 1usize..8, keep in 0u8..4) {
        let opts = DocOptions { document_level: false, ..DocOptions::default() };
        let c = random_corpus(seed, n, &opts);
        let mut table = MappingTable::new("source", "mesh");
        for t in common::TYPES {
            for k in 0..keep {
                table.insert(&format!("{}:{k}", t.as_str()), &format!("M{k}"));
            }
        }
        let (out, report) = normalize_mentions(&c, &[table], NormalizationPolicy::TableLookup).unwrap();
        let mut total = 0;
        for (a, b) in c.documents.iter().zip(&out.documents) {
            prop_assert_eq!(&a.sentences, &b.sentences);
            prop_assert_eq!(&a.relations, &b.relations);
            for (ma, mb) in a.mentions.iter().zip(&b.mentions) {
                prop_assert_eq!((&ma.id, ma.begin, ma.end, &ma.text, ma.entity_type), (&mb.id, mb.begin, mb.end, &mb.text, mb.entity_type));
                total += 1;
            }
        }
        let counted: usize = report.per_type.values().map(|c| c.total).sum();
        prop_assert_eq!(counted, total);
    }

    #[test]
    fn splits_are_deterministic_disjoint_and_exhaustive(
        seed in any::<u64>(),
        n in 11usize..40,
        a in 0usize..30,
        b in 0usize..5,
        stratify in any::<bool>(),
    ) {
        let c = random_corpus(seed, n, &DocOptions::default());
        let spec = SplitSpec::Sizes([a, b, 1]);
        if a + b + 1 > n {
            prop_assert!(make_splits(&c, &spec, 907, stratify).is_err());
            return Ok(());
        }
        let s1 = make_splits(&c, &spec, 907, stratify).unwrap();
        prop_assert_eq!(&s1, &make_splits(&c, &spec, 907, stratify).unwrap());
        prop_assert_eq!(s1.sizes(), [a, b, 1]);
        let all: Vec<&String> = s1.train.iter().chain(&s1.val).chain(&s1.test).chain(&s1.held_out).collect();
        let unique: BTreeSet<&String> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(unique.len(), n);
        if a + b > 0 {
            let s2 = make_splits(&c, &spec, 908, stratify).unwrap();
            let s3 = make_splits(&c, &spec, 909, stratify).unwrap();
            prop_assert!(s1 != s2 || s1 != s3, "three seeds gave the same assignment");
        }
    }

    #[test]
    fn stratified_counts_track_proportions(seed in any::<u64>(), n in 10usize..60, r in 0.2f64..0.6) {
        let c = random_corpus(seed, n, &DocOptions::default());
        let a = make_splits(&c, &SplitSpec::Ratios([r, 0.2, 0.2]), seed, true).unwrap();
        let mut totals: BTreeMap<String, usize> = BTreeMap::new();
        for d in &c.documents {
            *totals.entry(stratum_key(d)).or_default() += 1;
        }
        for split in [&a.train, &a.val, &a.test] {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for id in split {
                *counts.entry(stratum_key(c.get(id).unwrap())).or_default() += 1;
            }
            for (k, total) in &totals {
                let share = *total as f64 * split.len() as f64 / n as f64;
                let got = counts.get(k).copied().unwrap_or(0) as f64;
                prop_assert!((got - share).abs() < 1.0 + 1e-9, "stratum {:?}: {} vs share {}", k, got, share);
            }
        }
    }
}
