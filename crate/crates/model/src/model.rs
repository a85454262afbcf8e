use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaps_core::corpus::ActionType;
use vaps_tensor::{Graph, ParamId, ParamStore, Tensor, Var};

use crate::input::{ActionSet, SessionInput};
use crate::{ModelConfig, ModelError};

/// Segment tags of the encoder sequence.
pub const SEG_USER: usize = 0;
pub const SEG_CONSULT: usize = 1;
pub const SEG_QUERY_HIST: usize = 2;
pub const SEG_ITEM_HIST: usize = 3;
pub const SEG_QUERY: usize = 4;
const N_SEGMENTS: usize = 5;

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wf: ParamId,
    bf: ParamId,
}

#[derive(Debug, Clone)]
struct Ids {
    token_emb: ParamId,
    item_emb: ParamId,
    user_emb: ParamId,
    time_emb: ParamId,
    action_emb: ParamId,
    text_w: ParamId,
    text_b: ParamId,
    cai_wq: ParamId,
    cai_wk: ParamId,
    cai_wv: ParamId,
    seg_emb: ParamId,
    layers: Vec<LayerIds>,
}

/// Parameters of one model, with the config that shaped them.
#[derive(Debug, Clone)]
pub struct Vaps {
    pub config: ModelConfig,
    pub store: ParamStore,
    ids: Ids,
}

/// Parameter leaves of one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub token_emb: Var,
    pub item_emb: Var,
    pub user_emb: Var,
    pub time_emb: Var,
    pub action_emb: Var,
    pub text_w: Var,
    pub text_b: Var,
    pub cai_wq: Var,
    pub cai_wk: Var,
    pub cai_wv: Var,
    pub seg_emb: Var,
    pub layers: Vec<[Var; 5]>,
}

fn shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d;
    let mut out = vec![
        ("token_emb".to_string(), vec![cfg.vocab_size, d]),
        ("item_emb".to_string(), vec![cfg.n_items, d]),
        ("user_emb".to_string(), vec![cfg.n_users, d]),
        ("time_emb".to_string(), vec![cfg.n_time_buckets, d]),
        ("action_emb".to_string(), vec![cfg.n_action_types, d]),
        ("text_w".to_string(), vec![d, d]),
        ("text_b".to_string(), vec![d]),
        ("cai_wq".to_string(), vec![d, d]),
        ("cai_wk".to_string(), vec![d, d]),
        ("cai_wv".to_string(), vec![d, d]),
        ("seg_emb".to_string(), vec![N_SEGMENTS, d]),
    ];
    for l in 0..cfg.encoder_layers {
        for (p, shape) in [("wq", vec![d, d]), ("wk", vec![d, d]), ("wv", vec![d, d]), ("wf", vec![d, d]), ("bf", vec![d])] {
            out.push((format!("enc{l}_{p}"), shape));
        }
    }
    out
}

fn lookup_ids(cfg: &ModelConfig, store: &ParamStore) -> Result<Ids, ModelError> {
    let find = |name: &str| store.find(name).ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {name}")));
    let mut layers = Vec::new();
    for l in 0..cfg.encoder_layers {
        layers.push(LayerIds {
            wq: find(&format!("enc{l}_wq"))?,
            wk: find(&format!("enc{l}_wk"))?,
            wv: find(&format!("enc{l}_wv"))?,
            wf: find(&format!("enc{l}_wf"))?,
            bf: find(&format!("enc{l}_bf"))?,
        });
    }
    Ok(Ids {
        token_emb: find("token_emb")?,
        item_emb: find("item_emb")?,
        user_emb: find("user_emb")?,
        time_emb: find("time_emb")?,
        action_emb: find("action_emb")?,
        text_w: find("text_w")?,
        text_b: find("text_b")?,
        cai_wq: find("cai_wq")?,
        cai_wk: find("cai_wk")?,
        cai_wv: find("cai_wv")?,
        seg_emb: find("seg_emb")?,
        layers,
    })
}

/// Output of the interaction layer for one session.
#[derive(Debug, Clone, Copy)]
pub struct CaiOut {
    /// [n, d] consultation representations.
    pub h: Var,
    /// [n, m] unscaled logits `Q Kᵀ`, when attention ran.
    pub logits: Option<Var>,
    /// [n, m] attention weights, when attention ran.
    pub weights: Option<Var>,
    /// [m, d] projected keys, when attention ran.
    pub keys: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct SessionOut {
    pub e_final: Var,
    pub cai: Option<CaiOut>,
    /// [n, d] projected attention queries, when attention ran.
    pub cai_queries: Option<Var>,
}

impl Vaps {
    /// Fresh parameters, uniform in [-1/√d, 1/√d] from the config seed.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let bound = 1.0 / (config.d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        for (name, shape) in shapes(&config) {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
            store.add(name, Tensor::new(shape, data)?);
        }
        let ids = lookup_ids(&config, &store)?;
        Ok(Self { config, store, ids })
    }

    /// Wraps loaded parameters, checking names and shapes against the config.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        for (name, shape) in shapes(&config) {
            let id = store.find(&name).ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {name}")))?;
            if store.get(id).shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    store.get(id).shape()
                )));
            }
        }
        if store.len() != shapes(&config).len() {
            return Err(ModelError::Checkpoint("unexpected extra parameters".into()));
        }
        let ids = lookup_ids(&config, &store)?;
        Ok(Self { config, store, ids })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    /// Binds every parameter of `store` (which must share this model's
    /// layout) into `g`.
    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Bound {
        let i = &self.ids;
        Bound {
            token_emb: g.param(store, i.token_emb),
            item_emb: g.param(store, i.item_emb),
            user_emb: g.param(store, i.user_emb),
            time_emb: g.param(store, i.time_emb),
            action_emb: g.param(store, i.action_emb),
            text_w: g.param(store, i.text_w),
            text_b: g.param(store, i.text_b),
            cai_wq: g.param(store, i.cai_wq),
            cai_wk: g.param(store, i.cai_wk),
            cai_wv: g.param(store, i.cai_wv),
            seg_emb: g.param(store, i.seg_emb),
            layers: i
                .layers
                .iter()
                .map(|l| [l.wq, l.wk, l.wv, l.wf, l.bf].map(|id| g.param(store, id)))
                .collect(),
        }
    }

    /// Encodes several texts at once into an [n, d] matrix: mean of token
    /// embeddings, then `tanh(x W + b)`. Empty texts map to zero rows and
    /// are reported in the returned count.
    pub fn encode_texts(&self, g: &mut Graph, p: &Bound, texts: &[Vec<usize>]) -> Result<(Var, usize), ModelError> {
        let d = self.config.d;
        let n = texts.len();
        let total: usize = texts.iter().map(|t| t.len().min(self.config.max_tokens)).sum();
        let empty = texts.iter().filter(|t| t.is_empty()).count();
        if total == 0 {
            return Ok((g.constant(Tensor::zeros(&[n, d])), empty));
        }
        let mut all = Vec::with_capacity(total);
        let mut pool = vec![0.0; n * total];
        for (i, t) in texts.iter().enumerate() {
            let t = &t[..t.len().min(self.config.max_tokens)];
            for _ in t {
                pool[i * total + all.len()] = 1.0 / t.len() as f64;
                all.push(0);
            }
            let start = all.len() - t.len();
            all[start..].copy_from_slice(t);
        }
        let emb = g.embedding(p.token_emb, &all)?;
        let pool = g.constant(Tensor::new(vec![n, total], pool)?);
        let mean = g.matmul(pool, emb)?;
        let lin = g.matmul(mean, p.text_w)?;
        let lin = g.add_row(lin, p.text_b)?;
        let mut out = g.tanh(lin);
        if empty > 0 {
            let mask: Vec<f64> = texts
                .iter()
                .flat_map(|t| std::iter::repeat(if t.is_empty() { 0.0 } else { 1.0 }).take(d))
                .collect();
            let mask = g.constant(Tensor::new(vec![n, d], mask)?);
            out = g.mul(out, mask)?;
        }
        Ok((out, empty))
    }

    /// Single-text form of [`Vaps::encode_texts`]; returns a d-vector.
    pub fn encode_text(&self, g: &mut Graph, p: &Bound, tokens: &[usize]) -> Result<(Var, bool), ModelError> {
        let (m, empty) = self.encode_texts(g, p, &[tokens.to_vec()])?;
        Ok((g.row(m, 0)?, empty > 0))
    }

    /// [m, d] action embeddings without time: ActionEmb plus the item row
    /// for clicks and buys, ActionEmb plus the encoded query for searches.
    pub fn action_embeddings(&self, g: &mut Graph, p: &Bound, actions: &ActionSet) -> Result<Var, ModelError> {
        let mut parts = Vec::new();
        if !actions.items.is_empty() {
            let kinds: Vec<usize> = actions.items.iter().map(|a| a.kind.index()).collect();
            let items: Vec<usize> = actions.items.iter().map(|a| a.item).collect();
            let ae = g.embedding(p.action_emb, &kinds)?;
            let ie = g.embedding(p.item_emb, &items)?;
            parts.push(g.add(ae, ie)?);
        }
        if !actions.searches.is_empty() {
            let kinds = vec![ActionType::Search.index(); actions.searches.len()];
            let texts: Vec<Vec<usize>> = actions.searches.iter().map(|s| s.tokens.clone()).collect();
            let ae = g.embedding(p.action_emb, &kinds)?;
            let (qe, _) = self.encode_texts(g, p, &texts)?;
            parts.push(g.add(ae, qe)?);
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        Ok(g.concat_rows(&parts)?)
    }

    /// Cross-attention from consultations (queries) to actions (keys and
    /// values). With no actions, or with a zero skip weight and
    /// `need_logits` unset, attention is skipped and `h` is the text matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn cai_forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        c_text: Var,
        c_buckets: &[usize],
        actions: &ActionSet,
        need_logits: bool,
    ) -> Result<(CaiOut, Option<Var>), ModelError> {
        let lambda = self.config.lambda3_skip;
        let skip = CaiOut {
            h: c_text,
            logits: None,
            weights: None,
            keys: None,
        };
        if actions.is_empty() || c_buckets.is_empty() || (lambda == 0.0 && !need_logits) {
            return Ok((skip, None));
        }
        let ct = g.embedding(p.time_emb, c_buckets)?;
        let qa = g.add(c_text, ct)?;
        let q = g.matmul(qa, p.cai_wq)?;

        let a = self.action_embeddings(g, p, actions)?;
        let buckets: Vec<usize> = actions
            .items
            .iter()
            .map(|a| a.bucket)
            .chain(actions.searches.iter().map(|s| s.bucket))
            .collect();
        let at = g.embedding(p.time_emb, &buckets)?;
        let keys = g.add(a, at)?;
        let k = g.matmul(keys, p.cai_wk)?;
        let v = g.matmul(keys, p.cai_wv)?;

        let s = g.matmul_t(q, k)?;
        let scaled = g.scale(s, 1.0 / (self.config.d as f64).sqrt());
        let w = g.softmax(scaled)?;
        let h = if lambda == 0.0 {
            c_text
        } else {
            let att = g.matmul(w, v)?;
            let att = g.scale(att, lambda);
            g.add(c_text, att)?
        };
        Ok((
            CaiOut {
                h,
                logits: Some(s),
                weights: Some(w),
                keys: Some(k),
            },
            Some(q),
        ))
    }

    /// Self-attention over `[user; consultations; past queries; past items;
    /// query]` with segment embeddings; returns the query position's output.
    /// Every input is a matrix of d-wide rows; empty groups are `None`.
    pub fn cascaded_encode(
        &self,
        g: &mut Graph,
        p: &Bound,
        user: Var,
        h_c: Option<Var>,
        e_queries: Option<Var>,
        e_items: Option<Var>,
        query: Var,
    ) -> Result<Var, ModelError> {
        let mut parts = vec![user];
        let mut segs = vec![SEG_USER];
        for (part, seg) in [(h_c, SEG_CONSULT), (e_queries, SEG_QUERY_HIST), (e_items, SEG_ITEM_HIST)] {
            if let Some(v) = part {
                let rows = g.shape(v)[0];
                parts.push(v);
                segs.extend(std::iter::repeat(seg).take(rows));
            }
        }
        parts.push(query);
        segs.push(SEG_QUERY);
        let n = segs.len();
        let x = g.concat_rows(&parts)?;
        let se = g.embedding(p.seg_emb, &segs)?;
        let mut x = g.add(x, se)?;
        let inv = 1.0 / (self.config.d as f64).sqrt();
        let last = p.layers.len() - 1;
        for (l, &[wq, wk, wv, wf, bf]) in p.layers.iter().enumerate() {
            let k = g.matmul(x, wk)?;
            let v = g.matmul(x, wv)?;
            // The last layer only needs the query row.
            let xin = if l == last { g.row(x, n - 1)? } else { x };
            let q = g.matmul(xin, wq)?;
            let s = g.matmul_t(q, k)?;
            let s = g.scale(s, inv);
            let a = g.softmax(s)?;
            let att = g.matmul(a, v)?;
            let y = g.add(xin, att)?;
            let f = g.matmul(y, wf)?;
            let f = g.add_row(f, bf)?;
            let f = g.tanh(f);
            x = g.add(y, f)?;
        }
        Ok(x)
    }

    /// Dot product of `e_final` with each candidate's item row.
    pub fn score_candidates(&self, g: &mut Graph, p: &Bound, e_final: Var, candidates: &[usize]) -> Result<Var, ModelError> {
        let rows = g.embedding(p.item_emb, candidates)?;
        Ok(g.matmul_t(e_final, rows)?)
    }

    /// Full forward pass for one session up to the final query embedding.
    pub fn forward_session(
        &self,
        g: &mut Graph,
        p: &Bound,
        input: &SessionInput,
        need_logits: bool,
    ) -> Result<SessionOut, ModelError> {
        let user = g.embedding(p.user_emb, &[input.user])?;
        let (h_c, cai, cai_queries) = if input.consultations.is_empty() {
            (None, None, None)
        } else {
            let (c_text, _) = self.encode_texts(g, p, &input.consultations)?;
            let (out, q) = self.cai_forward(g, p, c_text, &input.consultation_buckets, &input.actions, need_logits)?;
            (Some(out.h), Some(out), q)
        };
        let e_queries = if input.query_history.is_empty() {
            None
        } else {
            Some(self.encode_texts(g, p, &input.query_history)?.0)
        };
        let e_items = if input.item_history.is_empty() {
            None
        } else {
            Some(g.embedding(p.item_emb, &input.item_history)?)
        };
        let (query, _) = self.encode_texts(g, p, std::slice::from_ref(&input.query))?;
        let e_final = self.cascaded_encode(g, p, user, h_c, e_queries, e_items, query)?;
        Ok(SessionOut {
            e_final,
            cai,
            cai_queries,
        })
    }

    /// Candidate scores for one session, outside of training.
    pub fn score_session(&self, input: &SessionInput, candidates: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, &self.store);
        let out = self.forward_session(&mut g, &p, input, false)?;
        let s = self.score_candidates(&mut g, &p, out.e_final, candidates)?;
        Ok(g.value(s).data().to_vec())
    }
}
