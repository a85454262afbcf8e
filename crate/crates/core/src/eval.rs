//! Ranking metrics, the sampled-negative candidate protocol, leave-last-out
//! splits, and the BM25 baseline.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, ItemId, SearchSession, UserHistory, UserId};
use crate::index::normalize;

pub const CUTOFFS: [usize; 4] = [5, 10, 20, 50];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need {needed} items besides the ground truth, corpus has {available}")]
    TooFewItems { needed: usize, available: usize },
    #[error("the {0} split has no sessions")]
    EmptySplit(Split),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("scorer returned {got} scores for {expected} candidates")]
    ScoreCount { expected: usize, got: usize },
    #[error("scorer failed: {0}")]
    Scorer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// A search session addressed by user and position in that user's search list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionRef {
    pub user: UserId,
    pub index: usize,
}

impl SessionRef {
    pub fn resolve<'a>(&self, corpus: &'a Corpus) -> (&'a UserHistory, &'a SearchSession) {
        let h = &corpus.users[&self.user];
        (h, &h.searches[self.index])
    }
}

/// Leave-last-out: each user's last search is test, the one before it is
/// valid, the rest are train. A user with one search contributes only a
/// test session.
pub fn split_sessions(corpus: &Corpus, split: Split) -> Vec<SessionRef> {
    let mut out = Vec::new();
    for (user, h) in &corpus.users {
        let n = h.searches.len();
        let range = match split {
            Split::Test => n.saturating_sub(1)..n,
            Split::Valid if n >= 2 => n - 2..n - 1,
            Split::Valid => 0..0,
            Split::Train => 0..n.saturating_sub(2),
        };
        out.extend(range.map(|index| SessionRef {
            user: user.clone(),
            index,
        }));
    }
    out
}

/// FNV-1a over the seed, user id and search time.
pub fn session_seed(seed: u64, user: &UserId, search_ts: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&seed.to_le_bytes());
    feed(user.as_str().as_bytes());
    feed(&[0xff]);
    feed(&search_ts.to_le_bytes());
    h
}

/// Ground truth plus `n_neg` distinct uniform negatives, shuffled.
pub fn make_candidates(
    ground_truth: &ItemId,
    items: &[ItemId],
    n_neg: usize,
    seed: u64,
) -> Result<Vec<ItemId>, EvalError> {
    let pool: Vec<&ItemId> = items.iter().filter(|i| *i != ground_truth).collect();
    if pool.len() < n_neg {
        return Err(EvalError::TooFewItems {
            needed: n_neg,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<ItemId> = index::sample(&mut rng, pool.len(), n_neg)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    out.push(ground_truth.clone());
    out.shuffle(&mut rng);
    Ok(out)
}

/// Candidates sorted by descending score, ties by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<(ItemId, f64)>,
    pub ground_truth: ItemId,
}

impl RankedList {
    pub fn new(candidates: &[ItemId], scores: &[f64], ground_truth: ItemId) -> Self {
        let mut items: Vec<(ItemId, f64)> = candidates.iter().cloned().zip(scores.iter().copied()).collect();
        items.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then_with(|| ia.cmp(ib)));
        Self { items, ground_truth }
    }

    /// 1-based position of the ground truth, if present.
    pub fn rank(&self) -> Option<usize> {
        self.items
            .iter()
            .position(|(i, _)| *i == self.ground_truth)
            .map(|p| p + 1)
    }
}

fn within(list: &RankedList, k: usize) -> Option<usize> {
    list.rank().filter(|&r| r <= k)
}

pub fn hr_at_k(list: &RankedList, k: usize) -> f64 {
    within(list, k).map_or(0.0, |_| 1.0)
}

pub fn ndcg_at_k(list: &RankedList, k: usize) -> f64 {
    within(list, k).map_or(0.0, |r| 1.0 / ((r + 1) as f64).log2())
}

pub fn mrr_at_k(list: &RankedList, k: usize) -> f64 {
    within(list, k).map_or(0.0, |r| 1.0 / r as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

fn metrics_for_rank(rank: usize) -> Vec<MetricsAtK> {
    CUTOFFS
        .iter()
        .map(|&k| {
            let hit = rank <= k;
            MetricsAtK {
                k,
                hr: if hit { 1.0 } else { 0.0 },
                ndcg: if hit { 1.0 / ((rank + 1) as f64).log2() } else { 0.0 },
                mrr: if hit { 1.0 / rank as f64 } else { 0.0 },
            }
        })
        .collect()
}

fn mean_metrics<'a>(rows: impl Iterator<Item = &'a [MetricsAtK]>) -> Vec<MetricsAtK> {
    let mut acc: Vec<MetricsAtK> = CUTOFFS
        .iter()
        .map(|&k| MetricsAtK {
            k,
            hr: 0.0,
            ndcg: 0.0,
            mrr: 0.0,
        })
        .collect();
    let mut n = 0usize;
    for row in rows {
        for (a, m) in acc.iter_mut().zip(row) {
            a.hr += m.hr;
            a.ndcg += m.ndcg;
            a.mrr += m.mrr;
        }
        n += 1;
    }
    if n > 0 {
        for a in &mut acc {
            a.hr /= n as f64;
            a.ndcg /= n as f64;
            a.mrr /= n as f64;
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub user: UserId,
    pub search_ts: u64,
    pub rank: usize,
    pub n_candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Protocol {
    /// Ground truth plus `n_neg` sampled negatives.
    Ranking { n_neg: usize },
    /// Every item is a candidate.
    Retrieval,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Ranking { n_neg: 99 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: Split,
    pub protocol: Protocol,
    pub seed: u64,
    pub n_sessions: usize,
    /// Macro average over sessions.
    pub metrics: Vec<MetricsAtK>,
    /// Average over each user's sessions.
    pub per_user: BTreeMap<UserId, Vec<MetricsAtK>>,
    pub sessions: Vec<SessionResult>,
}

impl MetricReport {
    pub fn from_sessions(split: Split, protocol: Protocol, seed: u64, sessions: Vec<SessionResult>) -> Self {
        let rows: Vec<Vec<MetricsAtK>> = sessions.iter().map(|s| metrics_for_rank(s.rank)).collect();
        let metrics = mean_metrics(rows.iter().map(Vec::as_slice));
        let mut by_user: BTreeMap<UserId, Vec<&[MetricsAtK]>> = BTreeMap::new();
        for (s, r) in sessions.iter().zip(&rows) {
            by_user.entry(s.user.clone()).or_default().push(r);
        }
        let per_user = by_user
            .into_iter()
            .map(|(u, rs)| (u, mean_metrics(rs.into_iter())))
            .collect();
        Self {
            split,
            protocol,
            seed,
            n_sessions: sessions.len(),
            metrics,
            per_user,
            sessions,
        }
    }

    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub fn ndcg10(&self) -> f64 {
        self.at(10).map_or(0.0, |m| m.ndcg)
    }
}

/// Anything that scores a candidate list for one search session.
pub trait Scorer {
    fn score(&self, history: &UserHistory, session: &SearchSession, candidates: &[ItemId])
        -> Result<Vec<f64>, EvalError>;
}

pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &Corpus,
    split: Split,
    protocol: Protocol,
    seed: u64,
) -> Result<MetricReport, EvalError> {
    evaluate_sessions(scorer, corpus, &split_sessions(corpus, split), split, protocol, seed)
}

pub fn evaluate_sessions<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &Corpus,
    refs: &[SessionRef],
    split: Split,
    protocol: Protocol,
    seed: u64,
) -> Result<MetricReport, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::EmptySplit(split));
    }
    let all_items = corpus.item_ids();
    let mut results = Vec::with_capacity(refs.len());
    for r in refs {
        let (h, s) = r.resolve(corpus);
        let ts = s.timestamp().0;
        let candidates = match protocol {
            Protocol::Ranking { n_neg } => {
                make_candidates(&s.ground_truth_item, &all_items, n_neg, session_seed(seed, &r.user, ts))?
            }
            Protocol::Retrieval => all_items.clone(),
        };
        let scores = scorer.score(h, s, &candidates)?;
        if scores.len() != candidates.len() {
            return Err(EvalError::ScoreCount {
                expected: candidates.len(),
                got: scores.len(),
            });
        }
        let list = RankedList::new(&candidates, &scores, s.ground_truth_item.clone());
        results.push(SessionResult {
            user: r.user.clone(),
            search_ts: ts,
            rank: list.rank().expect("ground truth is always a candidate"),
            n_candidates: candidates.len(),
        });
    }
    Ok(MetricReport::from_sessions(split, protocol, seed, results))
}

/// Okapi BM25 over item title and attributes, with corpus-wide statistics.
#[derive(Debug, Clone)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
    docs: HashMap<ItemId, HashMap<String, usize>>,
    doc_len: HashMap<ItemId, usize>,
    df: HashMap<String, usize>,
    n_docs: usize,
    avgdl: f64,
}

impl Bm25 {
    pub fn new(corpus: &Corpus) -> Self {
        Self::with_params(corpus, 1.2, 0.75)
    }

    pub fn with_params(corpus: &Corpus, k1: f64, b: f64) -> Self {
        let mut docs = HashMap::new();
        let mut doc_len = HashMap::new();
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for item in corpus.items.values() {
            let mut text = item.title.clone();
            for a in &item.attributes {
                text.push(' ');
                text.push_str(a);
            }
            let toks = normalize(&text);
            total += toks.len();
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in toks.iter() {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            doc_len.insert(item.id.clone(), toks.len());
            docs.insert(item.id.clone(), tf);
        }
        let n_docs = docs.len();
        Self {
            k1,
            b,
            docs,
            doc_len,
            df,
            n_docs,
            avgdl: if n_docs == 0 { 0.0 } else { total as f64 / n_docs as f64 },
        }
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, non-negative for every term.
    pub fn idf(&self, term: &str) -> f64 {
        let n = *self.df.get(term).unwrap_or(&0) as f64;
        (1.0 + (self.n_docs as f64 - n + 0.5) / (n + 0.5)).ln()
    }

    pub fn score(&self, query: &str, item: &ItemId) -> Result<f64, EvalError> {
        let tf = self.docs.get(item).ok_or_else(|| EvalError::UnknownItem(item.clone()))?;
        let dl = self.doc_len[item] as f64;
        let norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 0.0 };
        Ok(normalize(query)
            .iter()
            .map(|t| {
                let f = *tf.get(t).unwrap_or(&0) as f64;
                if f == 0.0 {
                    return 0.0;
                }
                self.idf(t) * f * (self.k1 + 1.0) / (f + self.k1 * (1.0 - self.b + self.b * norm))
            })
            .sum())
    }

    pub fn rank(&self, query: &str, candidates: &[ItemId], ground_truth: ItemId) -> Result<RankedList, EvalError> {
        let scores = candidates
            .iter()
            .map(|c| self.score(query, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RankedList::new(candidates, &scores, ground_truth))
    }
}

impl Scorer for Bm25 {
    fn score(&self, _: &UserHistory, session: &SearchSession, candidates: &[ItemId]) -> Result<Vec<f64>, EvalError> {
        candidates.iter().map(|c| Bm25::score(self, &session.query.text, c)).collect()
    }
}

/// Uniform random scores, reproducible per session.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn score(&self, history: &UserHistory, session: &SearchSession, candidates: &[ItemId]) -> Result<Vec<f64>, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(session_seed(self.seed ^ 0x5eed, &history.user_id, session.timestamp().0));
        Ok(candidates.iter().map(|_| rng.gen()).collect())
    }
}

/// Scores 1 on the ground truth and 0 elsewhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn score(&self, _: &UserHistory, session: &SearchSession, candidates: &[ItemId]) -> Result<Vec<f64>, EvalError> {
        Ok(candidates
            .iter()
            .map(|c| if *c == session.ground_truth_item { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Fixed-width comparison table: one row per named report, HR/NDCG/MRR at every cutoff.
pub fn format_table(rows: &[(String, &MetricReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = write!(s, "{:<name_w$}", "model");
    for metric in ["HR", "NDCG", "MRR"] {
        for k in CUTOFFS {
            let _ = write!(s, " {:>8}", format!("{metric}@{k}"));
        }
    }
    s.push('\n');
    let _ = writeln!(s, "{}", "-".repeat(name_w + 9 * 3 * CUTOFFS.len()));
    for (name, r) in rows {
        let _ = write!(s, "{name:<name_w$}");
        for pick in [|m: &MetricsAtK| m.hr, |m: &MetricsAtK| m.ndcg, |m: &MetricsAtK| m.mrr] {
            for m in &r.metrics {
                let _ = write!(s, " {:>8.4}", pick(m));
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusBuilder, Event, Item, Query, Timestamp};

    fn ids(n: usize) -> Vec<ItemId> {
        (0..n).map(|i| ItemId(format!("i{i:03}"))).collect()
    }

    fn list_with_rank(rank: usize) -> RankedList {
        let c = ids(10);
        let scores: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        RankedList::new(&c, &scores, c[rank - 1].clone())
    }

    #[test]
    fn zero_negatives_gives_only_ground_truth() {
        let items = ids(5);
        assert_eq!(make_candidates(&items[2], &items, 0, 1).unwrap(), vec![items[2].clone()]);
    }

    #[test]
    fn exhaustive_candidates_cover_every_item_once() {
        let items = ids(100);
        let mut c = make_candidates(&items[17], &items, 99, 3).unwrap();
        c.sort();
        assert_eq!(c, items);
    }

    #[test]
    fn candidates_are_deterministic_per_seed() {
        let items = ids(300);
        let a = make_candidates(&items[0], &items, 99, 42).unwrap();
        assert_eq!(a, make_candidates(&items[0], &items, 99, 42).unwrap());
        assert_ne!(a, make_candidates(&items[0], &items, 99, 43).unwrap());
    }

    #[test]
    fn too_few_items_is_an_error() {
        let items = ids(50);
        assert!(matches!(
            make_candidates(&items[0], &items, 99, 0),
            Err(EvalError::TooFewItems { .. })
        ));
    }

    #[test]
    fn rank_one_is_perfect() {
        let l = list_with_rank(1);
        assert_eq!(hr_at_k(&l, 5), 1.0);
        assert_eq!(ndcg_at_k(&l, 5), 1.0);
        assert_eq!(mrr_at_k(&l, 5), 1.0);
    }

    #[test]
    fn rank_three_within_five() {
        let l = list_with_rank(3);
        assert_eq!(hr_at_k(&l, 5), 1.0);
        assert!((ndcg_at_k(&l, 5) - 0.5).abs() < 1e-12);
        assert!((mrr_at_k(&l, 5) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_seven_outside_five() {
        let l = list_with_rank(7);
        assert_eq!(hr_at_k(&l, 5), 0.0);
        assert_eq!(ndcg_at_k(&l, 5), 0.0);
        assert_eq!(mrr_at_k(&l, 5), 0.0);
    }

    #[test]
    fn ties_break_by_item_id() {
        let c = vec![ItemId::from("b"), ItemId::from("a"), ItemId::from("c")];
        let l = RankedList::new(&c, &[1.0, 1.0, 2.0], ItemId::from("b"));
        let order: Vec<_> = l.items.iter().map(|(i, _)| i.as_str()).collect();
        assert_eq!(order, vec!["c", "a", "b"]);
        assert_eq!(l.rank(), Some(3));
    }

    fn docs_corpus(docs: &[(&str, &str)]) -> Corpus {
        let mut b = CorpusBuilder::new();
        for (id, title) in docs {
            b.add_item(Item {
                id: ItemId::from(*id),
                title: title.to_string(),
                attributes: vec![],
            })
            .unwrap();
        }
        b.finish()
    }

    #[test]
    fn unique_query_term_ranks_its_document_first() {
        let c = docs_corpus(&[("a", "red lamp"), ("b", "blue lamp"), ("c", "green lamp")]);
        let bm = Bm25::new(&c);
        let l = bm.rank("blue", &c.item_ids(), ItemId::from("b")).unwrap();
        assert_eq!(l.rank(), Some(1));
    }

    #[test]
    fn empty_query_scores_zero_and_sorts_by_id() {
        let c = docs_corpus(&[("b", "red lamp"), ("a", "blue lamp")]);
        let bm = Bm25::new(&c);
        let l = bm.rank("the of", &[ItemId::from("b"), ItemId::from("a")], ItemId::from("a")).unwrap();
        assert!(l.items.iter().all(|(_, s)| *s == 0.0));
        assert_eq!(l.items[0].0.as_str(), "a");
    }

    #[test]
    fn three_document_case_matches_hand_computation() {
        // d1 = [red, lamp, lamp] (3), d2 = [blue, lamp] (2), d3 = [red, chair, desk, large] (4).
        // avgdl = 3, N = 3; df(red) = 2, df(lamp) = 2.
        let c = docs_corpus(&[("d1", "red lamp lamp"), ("d2", "blue lamp"), ("d3", "red chair desk large")]);
        let bm = Bm25::new(&c);
        let idf2 = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
        let term = |f: f64, dl: f64| idf2 * f * 2.2 / (f + 1.2 * (0.25 + 0.75 * dl / 3.0));
        let expect = [
            ("d1", term(1.0, 3.0) + term(2.0, 3.0)),
            ("d2", term(1.0, 2.0)),
            ("d3", term(1.0, 4.0)),
        ];
        for (id, want) in expect {
            let got = bm.score("red lamp", &ItemId::from(id)).unwrap();
            assert!((got - want).abs() < 1e-12, "{id}: {got} vs {want}");
        }
    }

    fn corpus_with_sessions(n: usize) -> Corpus {
        let mut b = CorpusBuilder::new();
        for i in ids(120) {
            b.add_item(Item {
                id: i.clone(),
                title: format!("thing {}", i.as_str()),
                attributes: vec![],
            })
            .unwrap();
        }
        for u in 0..n {
            for k in 0..3u64 {
                b.add_event(
                    UserId(format!("u{u}")),
                    Event::Search {
                        query: Query {
                            text: "thing".into(),
                            timestamp: Timestamp(k * 100),
                        },
                        ground_truth_item: ItemId(format!("i{:03}", (u * 7 + k as usize) % 120)),
                    },
                )
                .unwrap();
            }
        }
        b.finish()
    }

    #[test]
    fn leave_last_out_split() {
        let c = corpus_with_sessions(4);
        assert_eq!(split_sessions(&c, Split::Train).len(), 4);
        assert_eq!(split_sessions(&c, Split::Valid).len(), 4);
        let test = split_sessions(&c, Split::Test);
        assert!(test.iter().all(|r| r.index == 2));
    }

    #[test]
    fn oracle_scorer_is_perfect() {
        let c = corpus_with_sessions(5);
        let r = evaluate(&OracleScorer, &c, Split::Test, Protocol::default(), 0).unwrap();
        assert!(r.metrics.iter().all(|m| m.hr == 1.0 && m.ndcg == 1.0 && m.mrr == 1.0));
        let r = evaluate(&OracleScorer, &c, Split::Test, Protocol::Retrieval, 0).unwrap();
        assert_eq!(r.sessions[0].n_candidates, 120);
        assert_eq!(r.ndcg10(), 1.0);
    }

    #[test]
    fn hit_rate_is_monotone_in_k() {
        let c = corpus_with_sessions(30);
        let r = evaluate(&RandomScorer { seed: 9 }, &c, Split::Train, Protocol::default(), 0).unwrap();
        assert!(r.metrics.windows(2).all(|w| w[0].hr <= w[1].hr));
        assert!(r.per_user.values().all(|m| m.len() == CUTOFFS.len()));
    }

    #[test]
    fn empty_split_is_an_error() {
        let c = docs_corpus(&[("a", "x y")]);
        assert!(matches!(
            evaluate(&OracleScorer, &c, Split::Test, Protocol::default(), 0),
            Err(EvalError::EmptySplit(Split::Test))
        ));
    }

    #[test]
    fn table_has_a_row_per_report() {
        let c = corpus_with_sessions(3);
        let r = evaluate(&OracleScorer, &c, Split::Test, Protocol::default(), 0).unwrap();
        let t = format_table(&[("oracle".to_string(), &r), ("again".to_string(), &r)]);
        assert_eq!(t.lines().count(), 4);
        assert!(t.lines().next().unwrap().contains("NDCG@10"));
    }
}
