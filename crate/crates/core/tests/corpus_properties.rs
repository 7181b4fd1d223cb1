use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;

use proptest::prelude::*;
use triage_core::corpus::{
    expand_ticket, group_kfold, ingest_reader, split_holdout, write_corpus, FieldKind, FieldValue,
    Schema, SplitAssignment,
};
use triage_core::{BaseTicket, Corpus, TicketEvent, TicketId};

fn schema() -> Schema {
    Schema {
        fields: BTreeMap::from([
            ("component".to_owned(), FieldKind::Categorical),
            ("size".to_owned(), FieldKind::Numerical),
            ("title".to_owned(), FieldKind::Text),
        ]),
    }
}

fn ticket(id: &str, gaps: &[i64], component: Option<&str>) -> BaseTicket {
    let mut t = 1_700_000_000;
    let mut events = Vec::new();
    for (k, g) in gaps.iter().enumerate() {
        t += g;
        events.push(
            TicketEvent::at(t)
                .with_text(format!("entry {k}"))
                .with_change("state", None, Some("open")),
        );
    }
    let mut static_fields = BTreeMap::new();
    static_fields.insert(
        "component".to_owned(),
        component.map_or(FieldValue::Missing, |c| {
            FieldValue::Categorical(c.to_owned())
        }),
    );
    static_fields.insert("size".to_owned(), FieldValue::Numerical(gaps.len() as f64));
    static_fields.insert("title".to_owned(), FieldValue::Text(format!("ticket {id}")));
    BaseTicket {
        base_id: TicketId::new(id),
        static_fields,
        events,
        closed_at: t + 60,
    }
}

fn arb_ticket() -> impl Strategy<Value = BaseTicket> {
    (
        "[a-z0-9]{1,6}",
        prop::collection::vec(0i64..100_000, 1..12),
        prop::option::of(prop::sample::select(vec!["a", "b", "c"])),
    )
        .prop_map(|(id, gaps, c)| ticket(&id, &gaps, c))
}

fn arb_corpus(max: usize) -> impl Strategy<Value = Corpus> {
    prop::collection::btree_map(
        "[a-z0-9]{1,6}",
        prop::collection::vec(0i64..100_000, 1..6),
        0..max,
    )
    .prop_map(|m| {
        let tickets = m
            .iter()
            .map(|(id, gaps)| ticket(id, gaps, Some("a")))
            .collect();
        Corpus::new(schema(), tickets).unwrap()
    })
}

#[test]
fn ten_bases_with_one_to_ten_events_expand_to_fifty_five() {
    let tickets: Vec<BaseTicket> = (1..=10)
        .map(|n| ticket(&n.to_string(), &vec![60; n], Some("a")))
        .collect();
    let brute: usize = tickets.iter().map(|t| (1..=t.events.len()).count()).sum();
    let corpus = Corpus::new(schema(), tickets).unwrap();
    assert_eq!(corpus.expand_all().len(), brute);
    assert_eq!(brute, 55);
}

#[test]
fn holdout_on_twenty_ids() {
    let ids: Vec<TicketId> = (1..=20u64).rev().map(TicketId::from).collect();
    let h = split_holdout(&ids);
    assert_eq!(h.test, vec![TicketId::from(10u64), TicketId::from(20u64)]);
    assert_eq!(h.train.len(), 18);
    assert!(h.warning.is_none());
}

#[test]
fn fold_sizes_for_eleven_bases() {
    let ids: Vec<TicketId> = (1..=11u64).map(TicketId::from).collect();
    let mut sizes: Vec<usize> = group_kfold(&ids, 5, 3)
        .unwrap()
        .iter()
        .map(Vec::len)
        .collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn splits_never_leak(corpus in arb_corpus(60), k in 2usize..6, seed in any::<u64>()) {
        let holdout = split_holdout(corpus.ids());
        let train: BTreeSet<_> = holdout.train.iter().collect();
        let test: BTreeSet<_> = holdout.test.iter().collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len() + test.len(), corpus.len());
        if holdout.train.len() >= k {
            let split = SplitAssignment::build(&corpus, k, seed).unwrap();
            prop_assert!(split.is_leak_free());
            for f in 0..k {
                let (fit_ids, val_ids) = split.rotation(f);
                prop_assert!(fit_ids.is_disjoint(val_ids));
                // derived tickets inherit their base's side
                let fit_bases: BTreeSet<TicketId> = corpus
                    .subset(&fit_ids)
                    .expand_all()
                    .into_iter()
                    .map(|d| d.base_id)
                    .collect();
                let val_bases: BTreeSet<TicketId> = corpus
                    .subset(val_ids)
                    .expand_all()
                    .into_iter()
                    .map(|d| d.base_id)
                    .collect();
                prop_assert!(fit_bases.is_disjoint(&val_bases));
                prop_assert!(val_bases.is_disjoint(&split.test_base_ids));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn expansion_count_and_prefix_fidelity(base in arb_ticket()) {
        let derived = expand_ticket(&base);
        prop_assert_eq!(derived.len(), base.events.len());
        for (i, d) in derived.iter().enumerate() {
            prop_assert_eq!(d.prefix_len, i + 1);
            prop_assert_eq!(&d.events[..], &base.events[..d.prefix_len]);
            prop_assert_eq!(d.observation_time, base.events[i].timestamp);
            prop_assert_eq!(&d.static_fields, &base.static_fields);
        }
    }

    #[test]
    fn ingestion_round_trips(corpus in arb_corpus(25)) {
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let (again, report) = ingest_reader(Cursor::new(&buf), &schema()).unwrap();
        prop_assert!(report.rejections.is_empty());
        prop_assert_eq!(again.tickets(), corpus.tickets());
    }

    #[test]
    fn kfold_sizes_differ_by_at_most_one(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<TicketId> = (0..n as u64).map(TicketId::from).collect();
        let folds = group_kfold(&ids, k, seed).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(folds, group_kfold(&ids, k, seed).unwrap());
    }
}
