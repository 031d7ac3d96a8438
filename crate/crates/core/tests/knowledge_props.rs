use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

use kare_core::knowledge::{DescriptionStore, EmbeddingKind, EmbeddingStore};

fn id() -> impl Strategy<Value = String> {
    "[A-Z][0-9]{1,4}"
}

proptest! {
    #[test]
    fn description_lookup_is_total(entries in btree_map(id(), "[a-z ]{1,30}", 0..12), probe in proptest::option::of(id())) {
        let mut store = DescriptionStore::new("mesh");
        for (k, v) in &entries {
            store.insert(k, v);
        }
        let first = store.lookup(probe.as_deref()).to_string();
        prop_assert_eq!(store.lookup(probe.as_deref()), first.as_str());
        let expected = probe.as_ref().and_then(|p| entries.get(p)).map(String::as_str).unwrap_or("");
        prop_assert_eq!(first.as_str(), expected);
    }

    #[test]
    fn pair_lookup_concatenates(
        dim in 1usize..8,
        rows in vec(vec(-5.0f64..5.0, 8), 1..6),
        h in proptest::option::of(0usize..8),
        t in proptest::option::of(0usize..8),
    ) {
        let mut store = EmbeddingStore::new("mesh", EmbeddingKind::Kg, dim);
        for (i, r) in rows.iter().enumerate() {
            store.insert(&format!("E{i}"), r[..dim].to_vec()).unwrap();
        }
        let name = |i: Option<usize>| i.map(|i| format!("E{i}"));
        let (hn, tn) = (name(h), name(t));
        let v = store.lookup_pair(hn.as_deref(), tn.as_deref());
        prop_assert_eq!(v.len(), 2 * dim);
        let expect = |n: &Option<String>| n.as_deref().and_then(|n| store.get(n)).map(<[f64]>::to_vec).unwrap_or(vec![0.0; dim]);
        prop_assert_eq!(v[..dim].to_vec(), expect(&hn));
        prop_assert_eq!(v[dim..].to_vec(), expect(&tn));
        let w = store.lookup_pair(tn.as_deref(), hn.as_deref());
        prop_assert_eq!([&v[dim..], &v[..dim]].concat(), w);
    }

    #[test]
    fn mixed_dimensions_are_rejected(dim in 1usize..6, other in 1usize..6) {
        prop_assume!(dim != other);
        let mut store = EmbeddingStore::new("mesh", EmbeddingKind::Literature, dim);
        prop_assert!(store.insert("A", vec![0.5; other]).is_err());
        let row = |n: usize| vec!["0.25"; n].join(" ");
        let text = format!("mesh {dim}\nA\t{}\nB\t{}\n", row(dim), row(other));
        prop_assert!(EmbeddingStore::parse(&text, "mesh", EmbeddingKind::Literature).is_err());
        let ok = format!("mesh {dim}\nA\t{}\n", row(dim));
        prop_assert_eq!(EmbeddingStore::parse(&ok, "mesh", EmbeddingKind::Literature).unwrap().len(), 1);
    }
}
