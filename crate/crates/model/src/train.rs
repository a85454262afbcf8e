use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vaps_core::corpus::Corpus;
use vaps_core::eval::{make_candidates, ndcg_at_k, session_seed, split_sessions, RankedList, Split};
use vaps_core::linkage::LinkageTable;
use vaps_tensor::{Adam, AdamConfig, Graph, ParamStore, Tensor, Var};

use crate::select::kept;
use crate::{prepare_session, Bound, Lookup, ModelError, SessionInput, Selections, Vaps, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub lambda_va: f64,
    pub lambda_l2: f64,
    pub n_neg_search: usize,
    pub va_batch: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Off: run all `max_epochs` and keep the final parameters.
    pub early_stopping: bool,
    pub lr: f64,
    /// Negatives per validation session.
    pub valid_n_neg: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau1: 0.1,
            tau2: 0.1,
            lambda_va: 0.1,
            lambda_l2: 1e-5,
            n_neg_search: 10,
            va_batch: 128,
            batch_size: 72,
            max_epochs: 100,
            patience: 5,
            early_stopping: true,
            lr: 1e-3,
            valid_n_neg: 99,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err("tau1 and tau2 must be positive".into());
        }
        if !(self.lambda_va >= 0.0 && self.lambda_l2 >= 0.0) {
            return Err("lambda_va and lambda_l2 must be non-negative".into());
        }
        if !(self.lr > 0.0) {
            return Err("lr must be positive".into());
        }
        for (name, v) in [
            ("n_neg_search", self.n_neg_search),
            ("va_batch", self.va_batch),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// `-log_softmax(logits / tau)[0]`: the positive sits at index 0.
pub fn nll_first(g: &mut Graph, logits: Var, tau: f64) -> Result<Var, ModelError> {
    let s = g.scale(logits, 1.0 / tau);
    let ls = g.log_softmax(s)?;
    let first = g.pick(ls, 0)?;
    Ok(g.scale(first, -1.0))
}

/// Search loss for one session: `scores[0]` is the positive's similarity.
pub fn loss_search(g: &mut Graph, scores: Var, tau2: f64) -> Result<Var, ModelError> {
    nll_first(g, scores, tau2)
}

/// Alignment loss for one pair: `logits[0]` is `sim(c, a)` for the linked
/// action, the rest are negatives.
pub fn loss_va(g: &mut Graph, logits: Var, tau1: f64) -> Result<Var, ModelError> {
    nll_first(g, logits, tau1)
}

/// `l_search + lambda_va * l_va + lambda_l2 * reg`.
pub fn total_loss(g: &mut Graph, l_search: Var, l_va: Var, reg: Var, cfg: &TrainConfig) -> Result<Var, ModelError> {
    let va = g.scale(l_va, cfg.lambda_va);
    let r = g.scale(reg, cfg.lambda_l2);
    Ok(g.add_scalars(&[l_search, va, r])?)
}

/// Sum of squares of every bound parameter.
fn l2_all(g: &mut Graph, p: &Bound) -> Result<Var, ModelError> {
    let mut vars = vec![
        p.token_emb,
        p.item_emb,
        p.user_emb,
        p.time_emb,
        p.action_emb,
        p.text_w,
        p.text_b,
        p.cai_wq,
        p.cai_wk,
        p.cai_wv,
        p.seg_emb,
    ];
    for l in &p.layers {
        vars.extend_from_slice(l);
    }
    let terms: Vec<Var> = vars.into_iter().map(|v| g.l2_norm_sq(v)).collect();
    Ok(g.add_scalars(&terms)?)
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub l_search: Var,
    pub l_va: Var,
    pub va_pairs: usize,
}

fn mean(g: &mut Graph, terms: &[Var]) -> Result<Var, ModelError> {
    if terms.is_empty() {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let s = g.add_scalars(terms)?;
    Ok(g.scale(s, 1.0 / terms.len() as f64))
}

/// Builds the loss of one batch. `negatives[i]` are the sampled negative
/// item rows for `batch[i]`.
pub fn batch_loss(
    model: &Vaps,
    g: &mut Graph,
    store: &ParamStore,
    batch: &[&SessionInput],
    negatives: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<LossParts, ModelError> {
    let p = model.bind(g, store);
    let need_va = cfg.lambda_va > 0.0;
    let mut search_terms = Vec::with_capacity(batch.len());
    let mut outs = Vec::with_capacity(batch.len());
    for (input, negs) in batch.iter().zip(negatives) {
        let out = model.forward_session(g, &p, input, need_va)?;
        let mut cands = Vec::with_capacity(1 + negs.len());
        cands.push(input.target);
        cands.extend_from_slice(negs);
        let scores = model.score_candidates(g, &p, out.e_final, &cands)?;
        search_terms.push(loss_search(g, scores, cfg.tau2)?);
        outs.push(out);
    }
    let l_search = mean(g, &search_terms)?;

    let mut va_terms = Vec::new();
    if need_va {
        for (i, (input, out)) in batch.iter().zip(&outs).enumerate() {
            let (Some(q), Some(k)) = (out.cai_queries, out.cai.and_then(|c| c.keys)) else {
                continue;
            };
            let m = input.actions.len();
            for &(ci, aj) in &input.linked {
                let mut own = vec![aj];
                own.extend((0..m).filter(|&j| j != aj).take(cfg.va_batch.saturating_sub(1)));
                let mut parts = vec![g.embedding(k, &own)?];
                let mut have = own.len() - 1;
                for off in 1..batch.len() {
                    if have >= cfg.va_batch - 1 {
                        break;
                    }
                    let j = (i + off) % batch.len();
                    if batch[j].user == input.user {
                        continue;
                    }
                    let Some(ko) = outs[j].cai.and_then(|c| c.keys) else {
                        continue;
                    };
                    let rows = batch[j].actions.len().min(cfg.va_batch - 1 - have);
                    let idx: Vec<usize> = (0..rows).collect();
                    parts.push(g.embedding(ko, &idx)?);
                    have += rows;
                }
                if have == 0 {
                    continue;
                }
                let cat = g.concat_rows(&parts)?;
                let qc = g.row(q, ci)?;
                let logits = g.matmul_t(qc, cat)?;
                va_terms.push(loss_va(g, logits, cfg.tau1)?);
            }
        }
    }
    let l_va = mean(g, &va_terms)?;
    let reg = if cfg.lambda_l2 > 0.0 {
        l2_all(g, &p)?
    } else {
        g.constant(Tensor::scalar(0.0))
    };
    let total = total_loss(g, l_search, l_va, reg, cfg)?;
    Ok(LossParts {
        total,
        l_search,
        l_va,
        va_pairs: va_terms.len(),
    })
}

/// Inputs for every session of a split.
#[allow(clippy::too_many_arguments)]
pub fn build_inputs(
    corpus: &Corpus,
    split: Split,
    selections: &Selections,
    linkage: Option<&LinkageTable>,
    vocab: &Vocabulary,
    lookup: &Lookup,
    model: &Vaps,
) -> Result<Vec<SessionInput>, ModelError> {
    split_sessions(corpus, split)
        .iter()
        .map(|r| {
            let (h, s) = r.resolve(corpus);
            let kept = kept(selections, h, s)?;
            prepare_session(h, s, &kept, linkage, vocab, lookup, &model.config)
        })
        .collect()
}

/// Validation sessions with fixed candidate rows (ground truth first).
#[derive(Debug, Clone, Default)]
pub struct ValidSet {
    pub inputs: Vec<SessionInput>,
    pub candidates: Vec<Vec<usize>>,
}

impl ValidSet {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        corpus: &Corpus,
        selections: &Selections,
        vocab: &Vocabulary,
        lookup: &Lookup,
        model: &Vaps,
        n_neg: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let all = corpus.item_ids();
        let mut out = Self::default();
        for r in split_sessions(corpus, Split::Valid) {
            let (h, s) = r.resolve(corpus);
            let kept = kept(selections, h, s)?;
            out.inputs.push(prepare_session(h, s, &kept, None, vocab, lookup, &model.config)?);
            let cands = make_candidates(&s.ground_truth_item, &all, n_neg.min(all.len() - 1), session_seed(seed, &r.user, s.timestamp().0))?;
            out.candidates.push(cands.iter().map(|c| lookup.item_row(c)).collect::<Result<_, _>>()?);
        }
        Ok(out)
    }

    pub fn ndcg10(&self, model: &Vaps) -> Result<f64, ModelError> {
        if self.inputs.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (input, cands) in self.inputs.iter().zip(&self.candidates) {
            let scores = model.score_session(input, cands)?;
            // Rows stand in for ids; row order is id order, so tie-breaks agree.
            let ids: Vec<vaps_core::corpus::ItemId> = cands.iter().map(|r| format!("{r:08}").as_str().into()).collect();
            let gt = format!("{:08}", input.target).as_str().into();
            total += ndcg_at_k(&RankedList::new(&ids, &scores, gt), 10);
        }
        Ok(total / self.inputs.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_search: f64,
    pub l_va: f64,
    pub total: f64,
    pub valid_ndcg10: f64,
    pub elapsed_secs: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,l_search,l_va,total,valid_ndcg10,elapsed_secs";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.epoch, self.l_search, self.l_va, self.total, self.valid_ndcg10, self.elapsed_secs
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Vaps,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn sample_negatives(rng: &mut ChaCha8Rng, positive: usize, n_items: usize, n: usize) -> Vec<usize> {
    if n_items < 2 {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let r = rng.gen_range(0..n_items - 1);
            if r >= positive {
                r + 1
            } else {
                r
            }
        })
        .collect()
}

/// Mini-batch Adam over `train_set` with per-epoch validation and early
/// stopping on validation NDCG@10. Returns the best-validation parameters.
pub fn train(
    mut model: Vaps,
    train_set: &[SessionInput],
    valid: &ValidSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, ModelError> {
    cfg.validate().map_err(ModelError::Config)?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model.store,
    );
    let n_items = model.config.n_items;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut ls, mut lv, mut lt, mut nb) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SessionInput> = chunk.iter().map(|&i| &train_set[i]).collect();
            let negs: Vec<Vec<usize>> = batch
                .iter()
                .map(|s| sample_negatives(&mut rng, s.target, n_items, cfg.n_neg_search))
                .collect();
            let mut g = Graph::new();
            let parts = batch_loss(&model, &mut g, &model.store, &batch, &negs, cfg)?;
            ls += g.value(parts.l_search).item();
            lv += g.value(parts.l_va).item();
            lt += g.value(parts.total).item();
            nb += 1;
            g.backward(parts.total)?;
            let grads = g.param_grads();
            adam.step(&mut model.store, &grads);
        }
        let valid_ndcg10 = valid.ndcg10(&model)?;
        let entry = EpochLog {
            epoch,
            l_search: ls / nb as f64,
            l_va: lv / nb as f64,
            total: lt / nb as f64,
            valid_ndcg10,
            elapsed_secs: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);

        if !cfg.early_stopping || valid.inputs.is_empty() {
            continue;
        }
        match &best {
            Some((b, _, _)) if valid_ndcg10 <= *b => {}
            _ => best = Some((valid_ndcg10, epoch, model.store.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let best_epoch = match best {
        Some((_, e, store)) => {
            model.store = store;
            e
        }
        None => log.len(),
    };
    Ok(TrainOutcome { model, log, best_epoch })
}

/// Attention weight each linked (consultation, action) pair places on its
/// own action, over every session in `inputs`.
pub fn attention_mass(model: &Vaps, inputs: &[SessionInput]) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::new();
    for input in inputs.iter().filter(|i| !i.linked.is_empty()) {
        let mut g = Graph::new();
        let p = model.bind(&mut g, &model.store);
        let sess = model.forward_session(&mut g, &p, input, true)?;
        let Some(w) = sess.cai.and_then(|c| c.weights) else {
            continue;
        };
        let w = g.value(w);
        for &(ci, aj) in &input.linked {
            out.push(w.row(ci)[aj]);
        }
    }
    Ok(out)
}
