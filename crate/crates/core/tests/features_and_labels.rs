use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use triage_core::corpus::{FieldKind, FieldValue, Schema};
use triage_core::features::{
    idf, temporal_stats, FeatureConfig, MappingTables, TextMode, TfidfModel, Word2VecParams,
    Word2VecVariant, WordEmbeddingModel,
};
use triage_core::labels::{fixing_time, FixingTimeBinning};
use triage_core::{BaseTicket, FeatureSpec, TicketEvent, TicketId};

fn doc(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

fn toks(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| (*w).to_owned()).collect()
}

#[test]
fn tfidf_matches_hand_table() {
    let docs = [doc("a b"), doc("a c"), doc("a d")];
    let model = TfidfModel::fit(&docs, 200).unwrap();
    // idf = ln(4 / (1 + df)) + 1
    let idf_a = 1.0;
    let idf_rare = (2.0f64).ln() + 1.0;
    assert_abs_diff_eq!(model.idf_of("a").unwrap(), idf_a, epsilon = 1e-12);
    for t in ["b", "c", "d"] {
        assert_abs_diff_eq!(model.idf_of(t).unwrap(), idf_rare, epsilon = 1e-12);
    }
    assert!(model.idf.iter().all(|&v| v >= idf_a));
    // rare terms reach 0.5 * idf_rare, "a" only 0.5; ties in name order
    assert_eq!(model.vocabulary, ["b", "c", "d", "a"]);
    let table = [
        ("a b", [0.5 * idf_rare, 0.0, 0.0, 0.5]),
        ("a c", [0.0, 0.5 * idf_rare, 0.0, 0.5]),
        ("a d", [0.0, 0.0, 0.5 * idf_rare, 0.5]),
        ("a a b", [idf_rare / 3.0, 0.0, 0.0, 2.0 / 3.0]),
        ("zzz", [0.0; 4]),
    ];
    for (text, want) in table {
        let got = model.transform(&doc(text));
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-9);
        }
    }
}

#[test]
fn tfidf_top_k_is_deterministic_under_ties() {
    let docs = [doc("x y z w"), doc("w z y x")];
    let a = TfidfModel::fit(&docs, 2).unwrap();
    let b = TfidfModel::fit(&[docs[1].clone(), docs[0].clone()], 2).unwrap();
    assert_eq!(a.vocabulary, ["w", "x"]);
    assert_eq!(a, b);
}

#[test]
fn temporal_examples() {
    let base = BaseTicket {
        base_id: TicketId::new("t"),
        static_fields: BTreeMap::new(),
        events: [0, 10, 30].map(TicketEvent::at).to_vec(),
        closed_at: 30,
    };
    let s = temporal_stats(&base.full());
    assert_eq!((s.min, s.max, s.mean), (10.0, 20.0, 15.0));
    let s = temporal_stats(&base.prefix(1));
    assert_eq!((s.min, s.max, s.mean), (0.0, 0.0, 0.0));
    let s = temporal_stats(&base.prefix(2));
    assert_eq!((s.min, s.max, s.mean), (10.0, 10.0, 10.0));
}

#[test]
fn hand_assembled_vector() {
    let schema = Schema {
        fields: BTreeMap::from([
            ("component".to_owned(), FieldKind::Categorical),
            ("size".to_owned(), FieldKind::Numerical),
        ]),
    };
    let mk = |id: &str, comp: &str, size: Option<f64>| BaseTicket {
        base_id: TicketId::new(id),
        static_fields: BTreeMap::from([
            (
                "component".to_owned(),
                FieldValue::Categorical(comp.to_owned()),
            ),
            (
                "size".to_owned(),
                size.map_or(FieldValue::Missing, FieldValue::Numerical),
            ),
        ]),
        events: vec![
            TicketEvent::at(100).with_change("state", None, Some("new")),
            TicketEvent::at(160).with_change("state", Some("new"), Some("open")),
        ],
        closed_at: 500,
    };
    let train: Vec<_> = [mk("1", "a", Some(3.0)), mk("2", "b", None)]
        .iter()
        .flat_map(BaseTicket::expand)
        .collect();
    let config = FeatureConfig {
        text_mode: TextMode::None,
        ..FeatureConfig::default()
    };
    let (spec, _) =
        FeatureSpec::fit(&schema, &train, &config, &MappingTables::new(), None).unwrap();
    let v = spec
        .assemble(&mk("9", "b", Some(7.5)).full(), None)
        .unwrap();
    // numerical (value, missing), activity (events, changes, attachments),
    // temporal (min, max, mean gap, elapsed), one-hot {a, b, unseen}
    let want = [
        7.5, 0.0, 2.0, 2.0, 0.0, 60.0, 60.0, 60.0, 60.0, 0.0, 1.0, 0.0,
    ];
    assert_eq!(v.values, want);
    assert_eq!(spec.output_dim, want.len());
    let unseen = spec.assemble(&mk("9", "zz", None).prefix(1), None).unwrap();
    assert_eq!(
        unseen.values,
        [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
    );
}

#[test]
fn fixing_time_is_non_increasing_over_prefixes() {
    let base = BaseTicket {
        base_id: TicketId::new("t"),
        static_fields: BTreeMap::new(),
        events: [0, 86_400, 3 * 86_400].map(TicketEvent::at).to_vec(),
        closed_at: 5 * 86_400,
    };
    let days: Vec<f64> = base
        .expand()
        .iter()
        .map(|d| fixing_time(d, &base).unwrap())
        .collect();
    assert_eq!(days, vec![5.0, 4.0, 2.0]);
}

fn brute_quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    // smallest v with at least q·n values <= v
    let n = s.len() as f64;
    *s.iter()
        .find(|v| s.iter().filter(|w| w <= v).count() as f64 >= q * n - 1e-9)
        .unwrap()
}

#[test]
fn uniform_one_to_hundred_boundaries() {
    let days: Vec<f64> = (1..=100).map(f64::from).collect();
    let b = FixingTimeBinning::fit(&days).unwrap();
    for (got, want) in b.boundaries.iter().zip([20.0, 40.0, 60.0, 80.0]) {
        assert!((got - want).abs() <= 1.0, "{got} vs {want}");
    }
    let mut counts = [0usize; 5];
    for d in &days {
        counts[usize::from(b.assign_class(*d))] += 1;
    }
    assert_eq!(counts, [20; 5]);
    assert_eq!(b.assign_class(b.boundaries[0]), 0);
}

fn word_model() -> WordEmbeddingModel {
    let docs: Vec<Vec<String>> = (0..20)
        .map(|i| {
            toks(&[
                "alpha",
                "beta",
                "gamma",
                "delta",
                if i % 2 == 0 { "eps" } else { "zeta" },
            ])
        })
        .collect();
    WordEmbeddingModel::train(
        &docs,
        &Word2VecParams {
            variant: Word2VecVariant::Skipgram,
            dim: 8,
            epochs: 2,
            ..Word2VecParams::default()
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn binning_matches_sort_index_oracle(days in prop::collection::vec(0.0f64..400.0, 5..300)) {
        let b = FixingTimeBinning::fit(&days).unwrap();
        for (q, got) in [0.2, 0.4, 0.6, 0.8].iter().zip(&b.boundaries) {
            prop_assert_eq!(*got, brute_quantile(&days, *q));
        }
        prop_assert!(b.boundaries.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn class_frequencies_near_one_fifth(days in prop::collection::hash_set(0u32..100_000, 5..400)) {
        let days: Vec<f64> = days.into_iter().map(f64::from).collect();
        let b = FixingTimeBinning::fit(&days).unwrap();
        let n = days.len() as f64;
        let mut counts = [0usize; 5];
        for d in &days {
            counts[usize::from(b.assign_class(*d))] += 1;
        }
        for c in counts {
            prop_assert!((c as f64 / n - 0.2).abs() <= 1.0 / n + 1e-12, "{:?}", counts);
        }
    }

    #[test]
    fn adding_a_document_lowers_idf(n in 1usize..200, df in 0usize..200) {
        prop_assume!(df <= n);
        if df < n {
            prop_assert!(idf(n + 1, df + 1) < idf(n, df));
        } else {
            // a term in every document stays at the floor value 1
            prop_assert_eq!(idf(n + 1, df + 1), idf(n, df));
        }
        prop_assert!(idf(n, df) > 0.0);
    }

    #[test]
    fn tfidf_transform_leaves_model_unchanged(words in prop::collection::vec("[a-e]{1,2}", 1..20)) {
        let model = TfidfModel::fit(&[doc("aa bb cc"), doc("bb dd"), doc("ee aa")], 200).unwrap();
        let before = serde_json::to_string(&model).unwrap();
        let _ = model.transform(&words);
        prop_assert_eq!(before, serde_json::to_string(&model).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn embed_average_is_permutation_invariant(
        words in prop::collection::vec(prop::sample::select(vec!["alpha", "beta", "gamma", "delta", "eps", "zeta", "oov"]), 0..12),
        seed in any::<u64>(),
    ) {
        let model = word_model();
        let tokens = toks(&words);
        let mut shuffled = tokens.clone();
        {
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut triage_core::rng::seeded(seed));
        }
        let a = model.embed_average(&tokens);
        let b = model.embed_average(&shuffled);
        prop_assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
