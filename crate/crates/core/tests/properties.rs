mod support;

use std::collections::BTreeSet;

use denograph::eval::{average_precision, recall_from_rankings};
use denograph::graph::{build, BuildOptions};
use denograph::sampler::{sample_batch, NegativeCounts};
use denograph::{synth, DenotationGraph, SimilarityIndex};
use proptest::prelude::*;

fn vectors(f: &denograph::FeatureStore) -> Vec<(String, Vec<f64>)> {
    f.iter().map(|e| (e.image_id.clone(), e.vector_f64())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn built_graphs_satisfy_invariants(seed in any::<u64>(), max in 1usize..30, reduce in any::<bool>()) {
        let s = synth::random_corpus(seed, max, 3).unwrap();
        let g = build(&s.captions, &s.lexicon, &BuildOptions { reduce_transitive: reduce, ..Default::default() }).unwrap();
        let v = support::graph_violations(&g);
        prop_assert!(v.is_empty(), "{:?}", v);
        prop_assert_eq!(DenotationGraph::from_dg_str(&g.to_dg_string()).unwrap(), g);
    }

    #[test]
    fn sampled_batches_obey_constraints(
        seed in any::<u64>(),
        counts in prop::array::uniform4(0usize..4),
        pick in any::<prop::sample::Index>(),
    ) {
        let s = synth::random_corpus(seed, 12, 3).unwrap();
        let g = build(&s.captions, &s.lexicon, &BuildOptions::default()).unwrap();
        let k = 3.min(s.features.len() - 1);
        let index = SimilarityIndex::build(&s.features, k).unwrap();
        let node = pick.index(g.len());
        let image = g.node_image_ids(node).next().unwrap().to_string();
        let b = sample_batch(&g, &index, node, &image, NegativeCounts(counts), seed).unwrap();
        let knn = support::knn_by_scan(&vectors(&s.features), k);
        let v = support::sampler_violations(&g, &knn, &b, counts);
        prop_assert!(v.is_empty(), "{:?}", v);
        prop_assert_eq!(sample_batch(&g, &index, node, &image, NegativeCounts(counts), seed).unwrap(), b);
    }

    #[test]
    fn recall_is_monotone_in_k(ranks in prop::collection::vec((1usize..15, 15usize..30), 1..20)) {
        let queries: Vec<(Vec<String>, BTreeSet<String>)> = ranks
            .iter()
            .map(|&(hit, len)| {
                let ranking = (0..len).map(|i| format!("c{:02}", i)).collect();
                (ranking, [format!("c{:02}", hit - 1)].into())
            })
            .collect();
        let m = recall_from_rankings(&queries).unwrap();
        prop_assert!(m.r(1) <= m.r(5) && m.r(5) <= m.r(10));
        prop_assert!((0.0..=300.0).contains(&m.rsum));
    }

    #[test]
    fn average_precision_is_a_fraction(
        len in 1usize..40,
        picks in prop::collection::btree_set(0usize..40, 1..10),
    ) {
        let ranking: Vec<String> = (0..len).map(|i| format!("c{:02}", i)).collect();
        let relevant: BTreeSet<String> = picks.iter().map(|i| format!("c{:02}", i % len)).collect();
        let ap = average_precision(&ranking, &relevant).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
        let top: BTreeSet<String> = ranking[..relevant.len()].iter().cloned().collect();
        prop_assert_eq!(average_precision(&ranking, &top).unwrap(), 1.0);
    }

    #[test]
    fn thread_count_is_invisible(seed in any::<u64>()) {
        let s = synth::random_corpus(seed, 20, 3).unwrap();
        let one = build(&s.captions, &s.lexicon, &BuildOptions::default()).unwrap();
        let three = build(&s.captions, &s.lexicon, &BuildOptions { threads: 3, ..Default::default() }).unwrap();
        prop_assert_eq!(one.to_dg_string(), three.to_dg_string());
    }
}
