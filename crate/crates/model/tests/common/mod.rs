#![allow(dead_code)]

use vaps_core::corpus::Corpus;
use vaps_core::datagen::{generate, GenSpec, Vocab};
use vaps_core::eval::Split;
use vaps_core::index::{build_index, ScopeParams};
use vaps_core::linkage::{build_linkage, LinkageParams, LinkageTable};
use vaps_core::value::{fit_buckets, ValueContext, ValueParams};
use vaps_model::{build_inputs, value_selections, Lookup, ModelConfig, Selections, SessionInput, Vaps, Vocabulary};

pub struct Fixture {
    pub corpus: Corpus,
    pub linkage: LinkageTable,
    pub selections: Selections,
    pub vocab: Vocabulary,
    pub lookup: Lookup,
}

fn small_vocab() -> Vocab {
    let w = |s: &str| s.split_whitespace().map(str::to_string).collect();
    Vocab {
        brands: w("acme zenix orbit nova"),
        categories: w("phone laptop camera"),
        colors: w("red blue"),
        specs: w("64gb pro max"),
        off_topic: w("weather recipe chess jazz hiking novels"),
    }
}

pub fn spec(n_users: usize, n_items: usize, seed: u64) -> GenSpec {
    GenSpec {
        n_users,
        n_items,
        min_sessions: 3,
        max_sessions: 4,
        slots_per_session: 4,
        distractors_per_session: 2,
        vocab: small_vocab(),
        seed,
        ..GenSpec::default()
    }
}

pub fn fixture(spec: &GenSpec) -> Fixture {
    let corpus = generate(spec).unwrap().corpus;
    let index = build_index(&corpus);
    let linkage = build_linkage(&corpus, LinkageParams::default()).unwrap();
    let buckets = fit_buckets(&linkage);
    let ctx = ValueContext {
        index: &index,
        linkage: &linkage,
        buckets: &buckets,
        scope: ScopeParams::default(),
        params: ValueParams::default(),
    };
    let selections = value_selections(&corpus, &ctx).unwrap();
    let vocab = Vocabulary::build(&corpus);
    let lookup = Lookup::build(&corpus);
    Fixture {
        corpus,
        linkage,
        selections,
        vocab,
        lookup,
    }
}

impl Fixture {
    pub fn config(&self, d: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            d,
            vocab_size: self.vocab.len(),
            n_items: self.lookup.items().len(),
            n_users: self.lookup.users().len(),
            l_seq: 4,
            seed,
            ..ModelConfig::default()
        }
    }

    pub fn model(&self, d: usize, seed: u64) -> Vaps {
        Vaps::init(self.config(d, seed)).unwrap()
    }

    pub fn inputs(&self, model: &Vaps, split: Split) -> Vec<SessionInput> {
        build_inputs(&self.corpus, split, &self.selections, Some(&self.linkage), &self.vocab, &self.lookup, model).unwrap()
    }
}
