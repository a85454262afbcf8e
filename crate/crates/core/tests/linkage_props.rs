mod common;

use std::collections::BTreeSet;

use common::micro::micro_corpus;
use proptest::prelude::*;
use vaps_core::corpus::Corpus;
use vaps_core::linkage::{build_forward, build_linkage, is_related, LinkageParams};

/// Every (user, cid, interaction position) triple in the inverted table.
fn links(corpus: &Corpus, window_days: u32) -> BTreeSet<(String, String, usize)> {
    let t = build_linkage(corpus, LinkageParams { window_days }).unwrap();
    let mut out = BTreeSet::new();
    for (user, cid, actions) in t.iter() {
        let h = &corpus.users[user];
        for l in actions {
            let ix = h.interactions.iter().position(|a| *a == l.interaction).unwrap();
            out.insert((user.0.clone(), cid.0.clone(), ix));
        }
    }
    out
}

proptest! {
    #[test]
    fn forward_and_inverted_tables_agree_with_brute_force(seed in 0u64..10_000) {
        let corpus = micro_corpus(seed, 20);
        let window = LinkageParams::default().window_hours();
        let mut brute = BTreeSet::new();
        for h in corpus.users.values() {
            for (ix, a) in h.interactions.iter().enumerate() {
                for c in &h.consultations {
                    let in_window = a.timestamp.0 >= c.timestamp.0 && a.timestamp.0 - c.timestamp.0 <= window;
                    if in_window && is_related(c, a, &corpus).unwrap().is_some() {
                        brute.insert((h.user_id.0.clone(), c.id.0.clone(), ix));
                    }
                }
            }
        }
        let forward: BTreeSet<_> = build_forward(&corpus, LinkageParams::default())
            .unwrap()
            .into_iter()
            .flat_map(|e| {
                let u = e.user.0.clone();
                e.consultations.into_iter().map(move |(c, _)| (u.clone(), c.0, e.interaction_index))
            })
            .collect();
        prop_assert_eq!(&forward, &brute);
        // Duplicate interactions collapse onto their first position in `links`.
        let inverted = links(&corpus, 14);
        for l in &inverted {
            prop_assert!(brute.contains(l));
        }
    }

    #[test]
    fn linked_actions_are_inside_the_window(seed in 0u64..10_000, days in 1u32..30) {
        let corpus = micro_corpus(seed, 20);
        let t = build_linkage(&corpus, LinkageParams { window_days: days }).unwrap();
        for (user, cid, actions) in t.iter() {
            let c = corpus.users[user].consultations.iter().find(|c| &c.id == cid).unwrap();
            prop_assert!(actions.windows(2).all(|w| w[0].interaction.timestamp <= w[1].interaction.timestamp));
            for l in actions {
                let dt = l.interaction.timestamp.hours_since(c.timestamp);
                prop_assert!(dt.is_some_and(|d| d <= u64::from(days) * 24));
            }
        }
    }

    #[test]
    fn widening_the_window_never_removes_links(seed in 0u64..10_000, days in 1u32..20, extra in 0u32..10) {
        let corpus = micro_corpus(seed, 20);
        let narrow = links(&corpus, days);
        let wide = links(&corpus, days + extra);
        prop_assert!(narrow.is_subset(&wide));
    }
}
