//! Per-session model inputs, tokenized and indexed once up front.

use vaps_core::corpus::{ActionType, Consultation, InteractionKind, SearchSession, UserHistory};
use vaps_core::linkage::LinkageTable;
use vaps_core::value::time_bucket;

use crate::{Lookup, ModelConfig, ModelError, Vocabulary};

/// A click or buy as seen by the interaction layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemAction {
    pub kind: ActionType,
    pub item: usize,
    pub bucket: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchAction {
    pub tokens: Vec<usize>,
    pub bucket: usize,
}

/// Actions the consultations attend over. Item actions come first, then
/// searches; attention is order-free, so positions only matter for
/// [`SessionInput::linked`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionSet {
    pub items: Vec<ItemAction>,
    pub searches: Vec<SearchAction>,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.items.len() + self.searches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionInput {
    pub user: usize,
    /// Kept consultations, in selection order.
    pub consultations: Vec<Vec<usize>>,
    pub consultation_buckets: Vec<usize>,
    pub actions: ActionSet,
    pub query_history: Vec<Vec<usize>>,
    pub item_history: Vec<usize>,
    pub query: Vec<usize>,
    pub target: usize,
    /// (consultation position, action position) pairs that the linkage table connects.
    pub linked: Vec<(usize, usize)>,
}

/// Builds the inputs for one search from the user's history strictly before it.
pub fn prepare_session(
    history: &UserHistory,
    session: &SearchSession,
    kept: &[&Consultation],
    linkage: Option<&LinkageTable>,
    vocab: &Vocabulary,
    lookup: &Lookup,
    cfg: &ModelConfig,
) -> Result<SessionInput, ModelError> {
    let t_s = session.timestamp();
    let bucket = |t: vaps_core::corpus::Timestamp| time_bucket(t_s.hours_since(t).unwrap_or(0), cfg.n_time_buckets);
    let kept = &kept[..kept.len().min(cfg.l_seq)];
    let prior = history.interactions_before(t_s);

    let recent = &prior[prior.len().saturating_sub(cfg.max_actions)..];
    let mut actions = ActionSet::default();
    let mut item_pos = Vec::new();
    let mut search_pos = Vec::new();
    for a in recent {
        match &a.kind {
            InteractionKind::Click(id) | InteractionKind::Buy(id) => {
                item_pos.push(a);
                actions.items.push(ItemAction {
                    kind: a.action_type(),
                    item: lookup.item_row(id)?,
                    bucket: bucket(a.timestamp),
                });
            }
            InteractionKind::Search(q) => {
                search_pos.push(a);
                actions.searches.push(SearchAction {
                    tokens: vocab.encode(&q.text, cfg.max_tokens),
                    bucket: bucket(a.timestamp),
                });
            }
        }
    }

    let mut linked = Vec::new();
    if let Some(table) = linkage {
        for (ci, c) in kept.iter().enumerate() {
            for l in table.actions(&history.user_id, &c.id) {
                let pos = item_pos
                    .iter()
                    .position(|a| **a == l.interaction)
                    .or_else(|| search_pos.iter().position(|a| **a == l.interaction).map(|p| p + item_pos.len()));
                if let Some(p) = pos {
                    if !linked.contains(&(ci, p)) {
                        linked.push((ci, p));
                    }
                }
            }
        }
    }

    let query_history = history
        .searches
        .iter()
        .filter(|s| s.timestamp() < t_s)
        .rev()
        .take(cfg.l_seq)
        .map(|s| vocab.encode(&s.query.text, cfg.max_tokens))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let mut item_history = prior
        .iter()
        .rev()
        .filter_map(|a| a.target_item())
        .take(cfg.l_seq)
        .map(|id| lookup.item_row(id))
        .collect::<Result<Vec<_>, _>>()?;
    item_history.reverse();

    Ok(SessionInput {
        user: lookup.user_row(&history.user_id)?,
        consultations: kept.iter().map(|c| vocab.encode(&c.text(), cfg.max_tokens)).collect(),
        consultation_buckets: kept.iter().map(|c| bucket(c.timestamp)).collect(),
        actions,
        query_history,
        item_history,
        query: vocab.encode(&session.query.text, cfg.max_tokens),
        target: lookup.item_row(&session.ground_truth_item)?,
        linked,
    })
}
