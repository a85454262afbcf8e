use vaps_core::corpus::{ItemId, SearchSession, UserHistory};
use vaps_core::eval::{EvalError, Scorer};

use crate::select::kept;
use crate::{prepare_session, Lookup, Selections, Vaps, Vocabulary};

/// Adapts a trained model to the evaluation harness.
pub struct ModelScorer<'a> {
    pub model: &'a Vaps,
    pub vocab: &'a Vocabulary,
    pub lookup: &'a Lookup,
    pub selections: &'a Selections,
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, history: &UserHistory, session: &SearchSession, candidates: &[ItemId]) -> Result<Vec<f64>, EvalError> {
        let err = |e: crate::ModelError| EvalError::Scorer(e.to_string());
        let kept = kept(self.selections, history, session).map_err(err)?;
        let input =
            prepare_session(history, session, &kept, None, self.vocab, self.lookup, &self.model.config).map_err(err)?;
        let rows = candidates
            .iter()
            .map(|c| self.lookup.item_row(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        self.model.score_session(&input, &rows).map_err(err)
    }
}
