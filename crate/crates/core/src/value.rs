//! Consultation value functions (time decay, scenario scope, posterior
//! action), their aggregation, and per-search rank-and-filter.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ActionType, Consultation, Corpus, ConsultationId, Interaction, SearchSession, Timestamp, UserHistory, UserId};
use crate::index::{scope_value, InvertedIndex, ScopeParams};
use crate::linkage::LinkageTable;

#[derive(Debug, Error, PartialEq)]
pub enum ValueError {
    #[error("consultation at {t_c} is after the search at {t_s}")]
    FutureConsultation { t_s: Timestamp, t_c: Timestamp },
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("invalid value parameters: {0}")]
    Params(String),
}

pub const N_BUCKETS: usize = 11;
pub const N_CUTS: usize = N_BUCKETS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub l_seq: usize,
    pub time_bucket_count: usize,
}

impl Default for ValueParams {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            lambda1: 0.5,
            lambda2: 0.3,
            l_seq: 30,
            time_bucket_count: 13,
        }
    }
}

impl ValueParams {
    pub fn validate(&self) -> Result<(), ValueError> {
        let bad = |m: String| Err(ValueError::Params(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} not in [0, 1]"));
            }
        }
        if self.l_seq == 0 {
            return bad("l_seq must be positive".into());
        }
        if self.time_bucket_count < 2 {
            return bad("time_bucket_count must be at least 2".into());
        }
        Ok(())
    }
}

/// `alpha^(t_s - t_c)` with the exponent in hours.
pub fn time_decay_value(t_s: Timestamp, t_c: Timestamp, alpha: f64) -> Result<f64, ValueError> {
    let dt = t_s
        .hours_since(t_c)
        .ok_or(ValueError::FutureConsultation { t_s, t_c })?;
    Ok(alpha.powf(dt as f64))
}

/// `min(floor(log2(delta + 1)), b - 1)`.
pub fn time_bucket(delta_hours: u64, b: usize) -> usize {
    let k = delta_hours.saturating_add(1).ilog2() as usize;
    k.min(b.saturating_sub(1))
}

/// Ten non-decreasing cut points per action type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub cuts: BTreeMap<ActionType, [u64; N_CUTS]>,
}

impl BucketTable {
    pub fn row(&self, t: ActionType) -> [u64; N_CUTS] {
        self.cuts.get(&t).copied().unwrap_or([0; N_CUTS])
    }
}

/// Nearest-rank cut points at i/11 for i = 1..10. An empty sample gives zeros.
pub fn quantile_cuts(sample: &[u64]) -> [u64; N_CUTS] {
    let mut cuts = [0; N_CUTS];
    if sample.is_empty() {
        return cuts;
    }
    let mut sorted = sample.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    for (i, cut) in cuts.iter_mut().enumerate() {
        let rank = ((i + 1) * n).div_ceil(N_BUCKETS);
        *cut = sorted[rank.max(1) - 1];
    }
    cuts
}

/// Fits cut points on per-consultation linked-action counts, one sample per
/// action type, zeros included.
pub fn fit_buckets(linkage: &LinkageTable) -> BucketTable {
    let mut samples: BTreeMap<ActionType, Vec<u64>> =
        ActionType::ALL.iter().map(|&t| (t, Vec::new())).collect();
    for (_, _, actions) in linkage.iter() {
        let mut counts = [0u64; 3];
        for a in actions {
            counts[a.interaction.action_type().index()] += 1;
        }
        for t in ActionType::ALL {
            samples.get_mut(&t).unwrap().push(counts[t.index()]);
        }
    }
    BucketTable {
        cuts: samples.into_iter().map(|(t, s)| (t, quantile_cuts(&s))).collect(),
    }
}

/// Number of cut points strictly below `freq`, divided by 10.
pub fn bucketize(freq: u64, cuts: &[u64; N_CUTS]) -> f64 {
    cuts.iter().filter(|&&c| c < freq).count() as f64 / 10.0
}

/// Inverse-frequency weights over the action types present in `posterior`.
pub fn gamma_weights(posterior: &[Interaction]) -> BTreeMap<ActionType, f64> {
    let mut counts: BTreeMap<ActionType, usize> = BTreeMap::new();
    for a in posterior {
        *counts.entry(a.action_type()).or_default() += 1;
    }
    let norm: f64 = counts.values().map(|&n| 1.0 / n as f64).sum();
    counts
        .into_iter()
        .map(|(t, n)| (t, (1.0 / n as f64) / norm))
        .collect()
}

/// Posterior action value of `c` for the search at `s_ts`.
pub fn action_value(
    c: &Consultation,
    s_ts: Timestamp,
    linkage: &LinkageTable,
    buckets: &BucketTable,
    history: &UserHistory,
) -> f64 {
    let gamma = gamma_weights(history.interactions_from(s_ts));
    if gamma.is_empty() {
        return 0.0;
    }
    let mut freq = [0u64; 3];
    for l in linkage.actions(&history.user_id, &c.id) {
        if l.interaction.timestamp >= s_ts {
            freq[l.interaction.action_type().index()] += 1;
        }
    }
    let v: f64 = gamma
        .iter()
        .map(|(&t, &g)| g * bucketize(freq[t.index()], &buckets.row(t)))
        .sum();
    v.min(1.0)
}

pub fn aggregate_value(o_time: f64, o_scope: f64, o_action: f64, p: &ValueParams) -> Result<f64, ValueError> {
    for (name, value) in [("o_time", o_time), ("o_scope", o_scope), ("o_action", o_action)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ValueError::OutOfRange { name, value });
        }
    }
    Ok((1.0 - p.lambda1) * o_time + p.lambda1 * (p.lambda2 * o_scope + (1.0 - p.lambda2) * o_action))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub user: UserId,
    pub search_ts: Timestamp,
    pub cid: ConsultationId,
    pub o_time: f64,
    pub o_scope: f64,
    pub o_action: f64,
    pub o_aggregate: f64,
    /// 1-based position after sorting.
    pub rank: usize,
}

/// Everything rank-and-filter reads besides the history and the search.
#[derive(Debug, Clone, Copy)]
pub struct ValueContext<'a> {
    pub index: &'a InvertedIndex,
    pub linkage: &'a LinkageTable,
    pub buckets: &'a BucketTable,
    pub scope: ScopeParams,
    pub params: ValueParams,
}

#[derive(Debug, Clone)]
pub struct Ranked<'a> {
    /// At most `l_seq` consultations, best first.
    pub kept: Vec<&'a Consultation>,
    /// Every scored consultation, in ranked order.
    pub reports: Vec<ValueReport>,
}

pub fn score_consultation(
    c: &Consultation,
    history: &UserHistory,
    t_s: Timestamp,
    ctx: &ValueContext<'_>,
) -> Result<ValueReport, ValueError> {
    let o_time = time_decay_value(t_s, c.timestamp, ctx.params.alpha)?;
    let o_scope = scope_value(ctx.index, c, ctx.scope);
    let o_action = action_value(c, t_s, ctx.linkage, ctx.buckets, history);
    let o_aggregate = aggregate_value(o_time, o_scope, o_action, &ctx.params)?;
    Ok(ValueReport {
        user: history.user_id.clone(),
        search_ts: t_s,
        cid: c.id.clone(),
        o_time,
        o_scope,
        o_action,
        o_aggregate,
        rank: 0,
    })
}

pub fn rank_and_filter<'a>(
    history: &'a UserHistory,
    session: &SearchSession,
    ctx: &ValueContext<'_>,
) -> Result<Ranked<'a>, ValueError> {
    let t_s = session.timestamp();
    let mut scored = history
        .consultations_before(t_s)
        .iter()
        .map(|c| Ok((c, score_consultation(c, history, t_s, ctx)?)))
        .collect::<Result<Vec<_>, ValueError>>()?;
    scored.sort_by(|(ca, ra), (cb, rb)| {
        rb.o_aggregate
            .total_cmp(&ra.o_aggregate)
            .then(cb.timestamp.cmp(&ca.timestamp))
            .then(ca.id.cmp(&cb.id))
    });
    let mut kept = Vec::new();
    let mut reports = Vec::with_capacity(scored.len());
    for (i, (c, mut r)) in scored.into_iter().enumerate() {
        r.rank = i + 1;
        if i < ctx.params.l_seq {
            kept.push(c);
        }
        reports.push(r);
    }
    Ok(Ranked { kept, reports })
}

/// Reports for every search of every user, users by id and searches in time order.
pub fn assess_corpus(corpus: &Corpus, ctx: &ValueContext<'_>) -> Result<Vec<ValueReport>, ValueError> {
    let mut out = Vec::new();
    for h in corpus.users.values() {
        for s in &h.searches {
            out.extend(rank_and_filter(h, s, ctx)?.reports);
        }
    }
    Ok(out)
}

/// Value-free selection: the `l_seq` most recent consultations before the
/// search, newest first.
pub fn select_recent<'a>(history: &'a UserHistory, session: &SearchSession, l_seq: usize) -> Vec<&'a Consultation> {
    history
        .consultations_before(session.timestamp())
        .iter()
        .rev()
        .take(l_seq)
        .collect()
}

/// One report per line, scores with six decimals.
pub fn write_values_jsonl<W: Write>(reports: &[ValueReport], mut out: W) -> std::io::Result<()> {
    for r in reports {
        writeln!(
            out,
            "{{\"user\":{},\"search_ts\":{},\"cid\":{},\"o_time\":{:.6},\"o_scope\":{:.6},\"o_action\":{:.6},\"o_aggregate\":{:.6},\"rank\":{}}}",
            serde_json::to_string(&r.user).unwrap(),
            r.search_ts.0,
            serde_json::to_string(&r.cid).unwrap(),
            r.o_time,
            r.o_scope,
            r.o_action,
            r.o_aggregate,
            r.rank
        )?;
    }
    Ok(())
}

/// Ten-bin text histograms of each score over `reports`.
pub fn summary_histogram(reports: &[ValueReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "consultation-search pairs: {}", reports.len());
    let cols: [(&str, fn(&ValueReport) -> f64); 4] = [
        ("o_time", |r| r.o_time),
        ("o_scope", |r| r.o_scope),
        ("o_action", |r| r.o_action),
        ("o_aggregate", |r| r.o_aggregate),
    ];
    for (name, f) in cols {
        let mut bins = [0usize; 10];
        for r in reports {
            bins[((f(r) * 10.0) as usize).min(9)] += 1;
        }
        let max = bins.iter().copied().max().unwrap_or(0).max(1);
        let _ = writeln!(s, "\n{name}");
        for (i, &n) in bins.iter().enumerate() {
            let bar = "#".repeat((n * 40).div_ceil(max));
            let _ = writeln!(s, "  [{:.1}, {:.1}{} {:>7} {}", i as f64 / 10.0, (i + 1) as f64 / 10.0, if i == 9 { "]" } else { ")" }, n, bar);
        }
    }
    s
}
