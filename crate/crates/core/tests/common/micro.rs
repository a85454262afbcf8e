//! Random micro-corpora and a straight-from-the-formulas value oracle.
//!
//! The oracle shares only the tokenizer with the library; links, quantiles,
//! weights and scores are recomputed directly.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaps_core::corpus::{
    Consultation, ConsultationId, Corpus, CorpusBuilder, Event, Interaction, InteractionKind, Item, ItemId, Query,
    Timestamp, UserId,
};
use vaps_core::index::normalize;

const WORDS: &[&str] = &[
    "phone", "laptop", "red", "blue", "acme", "zenix", "pro", "64gb", "lamp", "desk", "weather", "poetry",
];

fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// At most `max_events` events over one or two users and four items.
pub fn micro_corpus(seed: u64, max_events: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = CorpusBuilder::new();
    let n_items = 4;
    for i in 0..n_items {
        let n_attr = rng.gen_range(0..3);
        b.add_item(Item {
            id: ItemId(format!("i{i}")),
            title: phrase(&mut rng, 2),
            attributes: (0..n_attr).map(|_| phrase(&mut rng, 1)).collect(),
        })
        .unwrap();
    }
    let n_users = rng.gen_range(1..=2);
    let n_events = rng.gen_range(1..=max_events);
    for e in 0..n_events {
        let user = UserId(format!("u{}", rng.gen_range(0..n_users)));
        let ts = Timestamp(rng.gen_range(0..500));
        let item = ItemId(format!("i{}", rng.gen_range(0..n_items)));
        let event = match rng.gen_range(0..4) {
            0 => Event::Search {
                query: Query {
                    text: {
                        let n = rng.gen_range(1..4);
                        phrase(&mut rng, n)
                    },
                    timestamp: ts,
                },
                ground_truth_item: item,
            },
            1 => Event::Click { item, timestamp: ts },
            2 => Event::Buy { item, timestamp: ts },
            _ => {
                let (nu, na) = (rng.gen_range(1..7), rng.gen_range(0..3));
                let ut = phrase(&mut rng, nu);
                Event::Consult(Consultation {
                    id: ConsultationId(format!("c{e:02}")),
                    user_turn: ut,
                    assistant_turn: phrase(&mut rng, na),
                    timestamp: ts,
                })
            }
        };
        b.add_event(user, event).unwrap();
    }
    b.finish()
}

fn action_tokens(a: &Interaction, corpus: &Corpus) -> (Vec<String>, bool) {
    match &a.kind {
        InteractionKind::Search(q) => (normalize(&q.text), true),
        InteractionKind::Click(i) | InteractionKind::Buy(i) => {
            let item = &corpus.items[i];
            let mut t = normalize(&item.title);
            for attr in &item.attributes {
                t.extend(normalize(attr));
            }
            (t, false)
        }
    }
}

fn linked(c: &Consultation, a: &Interaction, corpus: &Corpus, window_h: u64) -> bool {
    if a.timestamp.0 < c.timestamp.0 || a.timestamp.0 - c.timestamp.0 > window_h {
        return false;
    }
    let ct = normalize(&format!("{} {}", c.user_turn, c.assistant_turn));
    let (at, _) = action_tokens(a, corpus);
    if at.is_empty() {
        return false;
    }
    let hay = format!(" {} ", ct.join(" "));
    if hay.contains(&format!(" {} ", at.join(" "))) {
        return true;
    }
    let distinct: BTreeSet<&String> = at.iter().collect();
    let present = distinct.iter().filter(|t| ct.contains(t)).count();
    present as f64 > distinct.len() as f64 / 2.0
}

fn type_ix(a: &Interaction) -> usize {
    match a.kind {
        InteractionKind::Search(_) => 0,
        InteractionKind::Click(_) => 1,
        InteractionKind::Buy(_) => 2,
    }
}

/// Smallest sample value v with at least i/11 of the sample at or below v.
fn naive_cut(sample: &[u64], i: usize) -> u64 {
    let n = sample.len();
    let mut values: Vec<u64> = sample.to_vec();
    values.sort();
    values.dedup();
    for v in values {
        let at_or_below = sample.iter().filter(|&&x| x <= v).count();
        if at_or_below * 11 >= i * n {
            return v;
        }
    }
    0
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub user: String,
    pub search_ts: u64,
    pub cid: String,
    pub scores: [f64; 4],
    pub rank: usize,
}

impl OracleRow {
    pub fn line(&self) -> String {
        format!(
            "{} {} {} {:.6} {:.6} {:.6} {:.6} {}",
            self.user, self.search_ts, self.cid, self.scores[0], self.scores[1], self.scores[2], self.scores[3], self.rank
        )
    }
}

/// Every (search, earlier consultation) score, ordered by user, search, rank.
pub fn oracle_reports(corpus: &Corpus, alpha: f64, l1: f64, l2: f64, lambda_thresh: usize) -> Vec<OracleRow> {
    let window_h = 14 * 24;
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for item in corpus.items.values() {
        vocab.extend(normalize(&item.title));
        for a in &item.attributes {
            vocab.extend(normalize(a));
        }
    }
    let mut freq: BTreeMap<(UserId, ConsultationId), Vec<&Interaction>> = BTreeMap::new();
    for h in corpus.users.values() {
        for c in &h.consultations {
            let links = h.interactions.iter().filter(|a| linked(c, a, corpus, window_h)).collect();
            freq.insert((h.user_id.clone(), c.id.clone()), links);
        }
    }
    let mut cuts = [[0u64; 10]; 3];
    for (t, row) in cuts.iter_mut().enumerate() {
        let sample: Vec<u64> = freq
            .values()
            .map(|ls| ls.iter().filter(|a| type_ix(a) == t).count() as u64)
            .collect();
        if sample.is_empty() {
            continue;
        }
        for (i, cut) in row.iter_mut().enumerate() {
            *cut = naive_cut(&sample, i + 1);
        }
    }
    let mut out = Vec::new();
    for h in corpus.users.values() {
        for s in &h.searches {
            let ts = s.query.timestamp.0;
            let mut counts = [0usize; 3];
            for a in h.interactions.iter().filter(|a| a.timestamp.0 >= ts) {
                counts[type_ix(a)] += 1;
            }
            let inv_sum: f64 = counts.iter().filter(|&&n| n > 0).map(|&n| 1.0 / n as f64).sum();
            let mut rows = Vec::new();
            for c in h.consultations.iter().filter(|c| c.timestamp.0 < ts) {
                let o_time = (((ts - c.timestamp.0) as f64) * alpha.ln()).exp();
                let toks: BTreeSet<String> = normalize(&format!("{} {}", c.user_turn, c.assistant_turn))
                    .into_iter()
                    .collect();
                let x = toks.iter().filter(|t| vocab.contains(*t)).count();
                let o_scope = if x >= lambda_thresh { 1.0 } else { x as f64 / lambda_thresh as f64 };
                let mut o_action = 0.0;
                let links = &freq[&(h.user_id.clone(), c.id.clone())];
                for t in 0..3 {
                    if counts[t] == 0 {
                        continue;
                    }
                    let gamma = (1.0 / counts[t] as f64) / inv_sum;
                    let f = links.iter().filter(|a| type_ix(a) == t && a.timestamp.0 >= ts).count() as u64;
                    let bucket = cuts[t].iter().filter(|&&cut| cut < f).count();
                    o_action += gamma * bucket as f64 / 10.0;
                }
                let o_action = f64::min(o_action, 1.0);
                let agg = (1.0 - l1) * o_time + l1 * (l2 * o_scope + (1.0 - l2) * o_action);
                rows.push((c, [o_time, o_scope, o_action, agg]));
            }
            rows.sort_by(|(ca, sa), (cb, sb)| {
                sb[3].partial_cmp(&sa[3])
                    .unwrap()
                    .then(cb.timestamp.cmp(&ca.timestamp))
                    .then(ca.id.cmp(&cb.id))
            });
            for (i, (c, scores)) in rows.into_iter().enumerate() {
                out.push(OracleRow {
                    user: h.user_id.0.clone(),
                    search_ts: ts,
                    cid: c.id.0.clone(),
                    scores,
                    rank: i + 1,
                });
            }
        }
    }
    out
}
