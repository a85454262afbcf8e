use std::collections::BTreeMap;

use vaps_core::corpus::{parse_corpus, write_events_jsonl, write_items_jsonl, ConsultationId, UserId};
use vaps_core::datagen::{generate, GenSpec, Label, Pattern};
use vaps_core::index::{build_index, ScopeParams};
use vaps_core::linkage::{build_linkage, LinkageParams};
use vaps_core::value::{assess_corpus, fit_buckets, ValueContext, ValueParams};

#[test]
fn generated_corpus_passes_validation() {
    let g = generate(&GenSpec { n_users: 30, n_items: 80, seed: 5, ..GenSpec::default() }).unwrap();
    let mut items = Vec::new();
    let mut events = Vec::new();
    write_items_jsonl(&g.corpus, &mut items).unwrap();
    write_events_jsonl(&g.corpus, &mut events).unwrap();
    let back = parse_corpus(
        std::str::from_utf8(&items).unwrap(),
        "items",
        std::str::from_utf8(&events).unwrap(),
        "events",
    )
    .unwrap();
    assert_eq!(back, g.corpus);
}

#[test]
fn verified_consultations_have_linked_posterior_actions() {
    let g = generate(&GenSpec { n_users: 40, n_items: 100, seed: 2, ..GenSpec::default() }).unwrap();
    let t = build_linkage(&g.corpus, LinkageParams::default()).unwrap();
    let mut n = 0;
    for ((user, cid), p) in &g.patterns {
        let actions = t.actions(user, cid);
        match p {
            Pattern::InScopeVerified => {
                assert!(!actions.is_empty(), "{user}/{cid}");
                n += 1;
            }
            Pattern::InScopeUnverified | Pattern::OutOfDate | Pattern::OutOfScope => {
                assert!(actions.is_empty(), "{user}/{cid} {p:?} linked to {actions:?}")
            }
        }
    }
    assert!(n > 50);
}

#[test]
fn high_labels_beat_the_low_median() {
    let g = generate(&GenSpec::default()).unwrap();
    let index = build_index(&g.corpus);
    let linkage = build_linkage(&g.corpus, LinkageParams::default()).unwrap();
    let buckets = fit_buckets(&linkage);
    let ctx = ValueContext {
        index: &index,
        linkage: &linkage,
        buckets: &buckets,
        scope: ScopeParams::default(),
        params: ValueParams::default(),
    };
    let scores: BTreeMap<(UserId, u64, ConsultationId), f64> = assess_corpus(&g.corpus, &ctx)
        .unwrap()
        .into_iter()
        .map(|r| ((r.user, r.search_ts.0, r.cid), r.o_aggregate))
        .collect();
    let mut high = Vec::new();
    let mut low = Vec::new();
    for o in &g.oracle {
        let v = scores[&(o.user.clone(), o.search_ts, o.cid.clone())];
        match o.label {
            Label::High => high.push(v),
            Label::Low => low.push(v),
        }
    }
    low.sort_by(f64::total_cmp);
    let median = low[low.len() / 2];
    let above = high.iter().filter(|&&v| v > median).count();
    assert!(above as f64 >= 0.95 * high.len() as f64, "{above}/{}", high.len());
}
