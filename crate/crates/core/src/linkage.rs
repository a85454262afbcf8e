//! Offline inverted retrieval: links each consultation to the later user
//! actions whose text it anticipates.
//!
//! For every interaction we look back over the user's consultations inside
//! the window and test three text rules. That gives the forward table
//! (action → consultations); inverting it yields the consultation → actions
//! table used by the value functions and the alignment loss.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    ActionType, Consultation, ConsultationId, Corpus, Interaction, InteractionKind, ItemId, Query,
    Timestamp, UserId,
};
use crate::index::normalize;

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error("interaction refers to unknown item {0}")]
    DanglingItem(ItemId),
    #[error("linkage dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageParams {
    pub window_days: u32,
}

impl Default for LinkageParams {
    fn default() -> Self {
        Self { window_days: 14 }
    }
}

impl LinkageParams {
    pub fn window_hours(&self) -> u64 {
        u64::from(self.window_days) * 24
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkRule {
    FullText,
    ItemContentMajority,
    QueryTermMajority,
}

impl LinkRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkRule::FullText => "full-text",
            LinkRule::ItemContentMajority => "item-content-majority",
            LinkRule::QueryTermMajority => "query-term-majority",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "full-text" => Some(LinkRule::FullText),
            "item-content-majority" => Some(LinkRule::ItemContentMajority),
            "query-term-majority" => Some(LinkRule::QueryTermMajority),
            _ => None,
        }
    }
}

impl fmt::Display for LinkRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkedAction {
    pub interaction: Interaction,
    pub rule: LinkRule,
}

/// Text that stands for an action: the query of a search, or the item title
/// followed by its attributes for a click or buy.
pub fn action_text(interaction: &Interaction, corpus: &Corpus) -> Result<String, LinkageError> {
    match &interaction.kind {
        InteractionKind::Search(q) => Ok(q.text.clone()),
        InteractionKind::Click(id) | InteractionKind::Buy(id) => {
            let item = corpus
                .item(id)
                .ok_or_else(|| LinkageError::DanglingItem(id.clone()))?;
            let mut text = item.title.clone();
            for a in &item.attributes {
                text.push(' ');
                text.push_str(a);
            }
            Ok(text)
        }
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && needle.len() <= haystack.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Strictly more than half of the distinct tokens of `needle` occur in `haystack`.
fn majority_present(haystack: &[String], needle: &[String]) -> bool {
    let mut distinct: Vec<&String> = needle.iter().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.is_empty() {
        return false;
    }
    let present = distinct.iter().filter(|t| haystack.contains(t)).count();
    2 * present > distinct.len()
}

/// Rule check on already-normalized token sequences.
pub fn related_tokens(consult: &[String], action: &[String], kind: ActionType) -> Option<LinkRule> {
    if contains_run(consult, action) {
        return Some(LinkRule::FullText);
    }
    match kind {
        ActionType::Click | ActionType::Buy if majority_present(consult, action) => {
            Some(LinkRule::ItemContentMajority)
        }
        ActionType::Search if majority_present(consult, action) => Some(LinkRule::QueryTermMajority),
        _ => None,
    }
}

/// First rule (full text, item-content majority, query-term majority) under
/// which `interaction` is related to `c`, or `None`. Timing is not checked.
pub fn is_related(
    c: &Consultation,
    interaction: &Interaction,
    corpus: &Corpus,
) -> Result<Option<LinkRule>, LinkageError> {
    let ti = normalize(&action_text(interaction, corpus)?);
    Ok(related_tokens(&normalize(&c.text()), &ti, interaction.action_type()))
}

/// Forward table entry: one interaction and the consultations it supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardEntry {
    pub user: UserId,
    /// Position in the user's interaction list.
    pub interaction_index: usize,
    pub consultations: Vec<(ConsultationId, LinkRule)>,
}

/// Action → related consultations, for every interaction of every user.
pub fn build_forward(corpus: &Corpus, params: LinkageParams) -> Result<Vec<ForwardEntry>, LinkageError> {
    let window = params.window_hours();
    let mut out = Vec::new();
    for h in corpus.users.values() {
        let consult_tokens: Vec<Vec<String>> =
            h.consultations.iter().map(|c| normalize(&c.text())).collect();
        for (ix, a) in h.interactions.iter().enumerate() {
            let ti = normalize(&action_text(a, corpus)?);
            let kind = a.action_type();
            let consultations = h
                .consultations
                .iter()
                .zip(&consult_tokens)
                .filter(|(c, _)| {
                    a.timestamp
                        .hours_since(c.timestamp)
                        .is_some_and(|dt| dt <= window)
                })
                .filter_map(|(c, toks)| related_tokens(toks, &ti, kind).map(|r| (c.id.clone(), r)))
                .collect();
            out.push(ForwardEntry {
                user: h.user_id.clone(),
                interaction_index: ix,
                consultations,
            });
        }
    }
    Ok(out)
}

/// Consultation → related later actions, per user. Every consultation has
/// an entry, possibly empty; action lists are in time order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkageTable {
    users: BTreeMap<UserId, BTreeMap<ConsultationId, Vec<LinkedAction>>>,
}

impl LinkageTable {
    pub fn actions(&self, user: &UserId, cid: &ConsultationId) -> &[LinkedAction] {
        self.users
            .get(user)
            .and_then(|m| m.get(cid))
            .map_or(&[], Vec::as_slice)
    }

    pub fn user(&self, user: &UserId) -> Option<&BTreeMap<ConsultationId, Vec<LinkedAction>>> {
        self.users.get(user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, &ConsultationId, &[LinkedAction])> {
        self.users
            .iter()
            .flat_map(|(u, m)| m.iter().map(move |(c, a)| (u, c, a.as_slice())))
    }

    pub fn consultation_count(&self) -> usize {
        self.users.values().map(BTreeMap::len).sum()
    }

    pub fn link_count(&self) -> usize {
        self.iter().map(|(_, _, a)| a.len()).sum()
    }

    /// One `{"user", "cid", "actions"}` line per consultation, ordered by user then id.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (user, cid, actions) in self.iter() {
            let rec = LinkRecord {
                user: user.clone(),
                cid: cid.clone(),
                actions: actions
                    .iter()
                    .map(|l| ActionRecord {
                        kind: l.interaction.action_type(),
                        ts_hours: l.interaction.timestamp.0,
                        target: match &l.interaction.kind {
                            InteractionKind::Search(q) => q.text.clone(),
                            InteractionKind::Click(i) | InteractionKind::Buy(i) => i.0.clone(),
                        },
                        rule: l.rule.as_str().to_string(),
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, LinkageError> {
        let mut users: BTreeMap<UserId, BTreeMap<ConsultationId, Vec<LinkedAction>>> = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let err = |message: String| LinkageError::Dump { line: i + 1, message };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LinkRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let mut actions = Vec::with_capacity(rec.actions.len());
            for a in rec.actions {
                let ts = Timestamp(a.ts_hours);
                let interaction = match a.kind {
                    ActionType::Search => Interaction::search(Query {
                        text: a.target,
                        timestamp: ts,
                    }),
                    ActionType::Click => Interaction::click(ItemId(a.target), ts),
                    ActionType::Buy => Interaction::buy(ItemId(a.target), ts),
                };
                let rule = LinkRule::parse(&a.rule).ok_or_else(|| err(format!("unknown rule {:?}", a.rule)))?;
                actions.push(LinkedAction { interaction, rule });
            }
            users.entry(rec.user).or_default().insert(rec.cid, actions);
        }
        Ok(Self { users })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ActionRecord {
    #[serde(rename = "type")]
    kind: ActionType,
    ts_hours: u64,
    target: String,
    rule: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRecord {
    user: UserId,
    cid: ConsultationId,
    actions: Vec<ActionRecord>,
}

pub fn build_linkage(corpus: &Corpus, params: LinkageParams) -> Result<LinkageTable, LinkageError> {
    let forward = build_forward(corpus, params)?;
    let mut users: BTreeMap<UserId, BTreeMap<ConsultationId, Vec<LinkedAction>>> = corpus
        .users
        .values()
        .map(|h| {
            let empty = h.consultations.iter().map(|c| (c.id.clone(), Vec::new())).collect();
            (h.user_id.clone(), empty)
        })
        .collect();
    // Forward entries come in interaction order, so each list stays time-sorted.
    for entry in forward {
        let interaction = &corpus.users[&entry.user].interactions[entry.interaction_index];
        let table = users.get_mut(&entry.user).expect("user present");
        for (cid, rule) in entry.consultations {
            table.get_mut(&cid).expect("consultation present").push(LinkedAction {
                interaction: interaction.clone(),
                rule,
            });
        }
    }
    Ok(LinkageTable { users })
}
