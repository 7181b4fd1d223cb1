//! Fixtures shared by the benchmarks.

use triage_core::corpus::split_holdout;
use triage_core::features::{FeatureConfig, MappingTables, TextMode};
use triage_core::synthetic::synthetic_corpus;
use triage_core::{Corpus, Dataset, DerivedTicket, FeatureSpec, Target};

pub struct Fixture {
    pub corpus: Corpus,
    pub train: Vec<DerivedTicket>,
    pub spec: FeatureSpec,
}

/// A synthetic corpus with its TF-IDF feature spec fit on the training side.
pub fn fixture(n_bases: usize, seed: u64) -> Fixture {
    let corpus = synthetic_corpus(n_bases, seed).corpus;
    let holdout = split_holdout(corpus.ids());
    let train = corpus.subset(&holdout.train).expand_all();
    let config = FeatureConfig {
        text_mode: TextMode::Tfidf,
        ..FeatureConfig::default()
    };
    let (spec, _) = FeatureSpec::fit(&corpus.schema, &train, &config, &MappingTables::new(), None)
        .expect("spec fits");
    Fixture {
        corpus,
        train,
        spec,
    }
}

/// Derived training tickets as a dataset labeled by `target` on a fake
/// rule, enough to exercise the learners.
pub fn dataset(f: &Fixture, target: Target) -> Dataset {
    let x: Vec<Vec<f64>> = f
        .train
        .iter()
        .map(|d| f.spec.assemble(d, None).expect("assembles").values)
        .collect();
    let k = target.n_classes();
    let y: Vec<usize> = f.train.iter().map(|d| d.prefix_len % k).collect();
    Dataset::ungrouped(x, y, k).expect("valid dataset")
}
