use std::collections::BTreeMap;

use vaps_core::corpus::{Consultation, ConsultationId, Corpus, SearchSession, UserHistory, UserId};
use vaps_core::value::{rank_and_filter, select_recent, ValueContext, ValueError, ValueReport};

use crate::ModelError;

/// Consultations kept for each (user, search timestamp), in the order the
/// model sees them.
pub type Selections = BTreeMap<(UserId, u64), Vec<ConsultationId>>;

/// Value-ranked selection: the top `l_seq` by aggregate value.
pub fn value_selections(corpus: &Corpus, ctx: &ValueContext<'_>) -> Result<Selections, ValueError> {
    let mut out = Selections::new();
    for h in corpus.users.values() {
        for s in &h.searches {
            let kept = rank_and_filter(h, s, ctx)?.kept.iter().map(|c| c.id.clone()).collect();
            out.insert((h.user_id.clone(), s.timestamp().0), kept);
        }
    }
    Ok(out)
}

/// Value-free selection: the `l_seq` most recent consultations.
pub fn recent_selections(corpus: &Corpus, l_seq: usize) -> Selections {
    let mut out = Selections::new();
    for h in corpus.users.values() {
        for s in &h.searches {
            let kept = select_recent(h, s, l_seq).iter().map(|c| c.id.clone()).collect();
            out.insert((h.user_id.clone(), s.timestamp().0), kept);
        }
    }
    out
}

/// Rebuilds a value-ranked selection from stored reports.
pub fn selections_from_reports(reports: &[ValueReport], l_seq: usize) -> Selections {
    let mut ranked: BTreeMap<(UserId, u64), Vec<(usize, ConsultationId)>> = BTreeMap::new();
    for r in reports {
        let entry = ranked.entry((r.user.clone(), r.search_ts.0)).or_default();
        if r.rank <= l_seq {
            entry.push((r.rank, r.cid.clone()));
        }
    }
    ranked
        .into_iter()
        .map(|(k, mut v)| {
            v.sort();
            (k, v.into_iter().map(|(_, c)| c).collect())
        })
        .collect()
}

/// Resolves a session's selection against the history. Searches with no
/// earlier consultation may be absent from the map.
pub(crate) fn kept<'a>(
    selections: &Selections,
    history: &'a UserHistory,
    session: &SearchSession,
) -> Result<Vec<&'a Consultation>, ModelError> {
    let ts = session.timestamp().0;
    let Some(ids) = selections.get(&(history.user_id.clone(), ts)) else {
        if history.consultations_before(session.timestamp()).is_empty() {
            return Ok(Vec::new());
        }
        return Err(ModelError::MissingSelection(history.user_id.clone(), ts));
    };
    ids.iter()
        .map(|id| {
            history
                .consultations
                .iter()
                .find(|c| &c.id == id && c.timestamp < session.timestamp())
                .ok_or_else(|| ModelError::MissingSelection(history.user_id.clone(), ts))
        })
        .collect()
}
