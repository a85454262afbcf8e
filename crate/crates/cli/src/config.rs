//! Flat run configuration: one TOML table, every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vaps_core::datagen::{GenSpec, PatternRates, Vocab};
use vaps_core::eval::{Protocol, Split};
use vaps_core::index::ScopeParams;
use vaps_core::linkage::LinkageParams;
use vaps_core::value::ValueParams;
use vaps_model::{ModelConfig, TrainConfig};

use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Top `l_seq` consultations by aggregate value.
    Value,
    /// The `l_seq` most recent consultations.
    Recent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Model,
    Bm25,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Ranking,
    Retrieval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    // Artifact locations; relative paths resolve against the output directory.
    pub items_path: PathBuf,
    pub events_path: PathBuf,
    pub corpus_dir: PathBuf,
    pub index_path: PathBuf,
    pub linkage_path: PathBuf,
    pub values_path: PathBuf,
    pub model_dir: PathBuf,
    pub reports_dir: PathBuf,

    pub gen_n_users: usize,
    pub gen_n_items: usize,
    pub gen_horizon_hours: u64,
    pub gen_min_sessions: usize,
    pub gen_max_sessions: usize,
    pub gen_slots_per_session: usize,
    pub gen_distractors_per_session: usize,
    pub gen_rate_verified: f64,
    pub gen_rate_unverified: f64,
    pub gen_rate_out_of_scope: f64,
    pub gen_rate_out_of_date: f64,
    pub gen_brands: Vec<String>,
    pub gen_categories: Vec<String>,
    pub gen_colors: Vec<String>,
    pub gen_specs: Vec<String>,
    pub gen_off_topic: Vec<String>,

    pub lambda_thresh: u32,
    pub window_days: u32,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub l_seq: usize,
    pub time_bucket_count: usize,
    pub selection: Selection,

    pub d: usize,
    pub lambda3_skip: f64,
    pub encoder_layers: usize,
    pub max_tokens: usize,
    pub max_actions: usize,

    pub tau1: f64,
    pub tau2: f64,
    pub lambda_va: f64,
    pub lambda_l2: f64,
    pub n_neg_search: usize,
    pub va_batch: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub early_stopping: bool,
    pub lr: f64,
    pub valid_n_neg: usize,

    pub eval_scorer: ScorerKind,
    pub eval_split: Split,
    pub eval_protocol: ProtocolKind,
    pub eval_n_neg: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GenSpec::default();
        let v = ValueParams::default();
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            seed: 0,
            items_path: "items.jsonl".into(),
            events_path: "events.jsonl".into(),
            corpus_dir: "corpus".into(),
            index_path: "index.jsonl".into(),
            linkage_path: "linkage.jsonl".into(),
            values_path: "values.jsonl".into(),
            model_dir: "model".into(),
            reports_dir: "reports".into(),
            gen_n_users: g.n_users,
            gen_n_items: g.n_items,
            gen_horizon_hours: g.horizon_hours,
            gen_min_sessions: g.min_sessions,
            gen_max_sessions: g.max_sessions,
            gen_slots_per_session: g.slots_per_session,
            gen_distractors_per_session: g.distractors_per_session,
            gen_rate_verified: g.rates.in_scope_verified,
            gen_rate_unverified: g.rates.in_scope_unverified,
            gen_rate_out_of_scope: g.rates.out_of_scope,
            gen_rate_out_of_date: g.rates.out_of_date,
            gen_brands: g.vocab.brands,
            gen_categories: g.vocab.categories,
            gen_colors: g.vocab.colors,
            gen_specs: g.vocab.specs,
            gen_off_topic: g.vocab.off_topic,
            lambda_thresh: ScopeParams::default().lambda_thresh,
            window_days: LinkageParams::default().window_days,
            alpha: v.alpha,
            lambda1: v.lambda1,
            lambda2: v.lambda2,
            l_seq: v.l_seq,
            time_bucket_count: v.time_bucket_count,
            selection: Selection::Value,
            d: m.d,
            lambda3_skip: m.lambda3_skip,
            encoder_layers: m.encoder_layers,
            max_tokens: m.max_tokens,
            max_actions: m.max_actions,
            tau1: t.tau1,
            tau2: t.tau2,
            lambda_va: t.lambda_va,
            lambda_l2: t.lambda_l2,
            n_neg_search: t.n_neg_search,
            va_batch: t.va_batch,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            early_stopping: t.early_stopping,
            lr: t.lr,
            valid_n_neg: t.valid_n_neg,
            eval_scorer: ScorerKind::Model,
            eval_split: Split::Test,
            eval_protocol: ProtocolKind::Ranking,
            eval_n_neg: 99,
        }
    }
}

fn known_keys() -> Vec<String> {
    match toml::Value::try_from(RunConfig::default()) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl RunConfig {
    /// Parses TOML text, then applies `key=value` overrides (values in TOML
    /// syntax; bare words are taken as strings). Every unknown key and every
    /// invalid value is reported together.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| PipelineError::Config(vec![e.message().to_string()]))?;
        let mut errors = Vec::new();
        for o in overrides {
            let Some((k, v)) = o.split_once('=') else {
                errors.push(format!("override `{o}` is not key=value"));
                continue;
            };
            let value = format!("x = {v}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("x"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()));
            table.insert(k.trim().to_string(), value);
        }
        let known = known_keys();
        table.retain(|k, _| {
            let ok = known.iter().any(|n| n == k);
            if !ok {
                errors.push(format!("unknown key `{k}`"));
            }
            ok
        });
        let mut cfg = RunConfig::default();
        let mut merged = match toml::Value::try_from(&cfg) {
            Ok(toml::Value::Table(t)) => t,
            _ => toml::Table::new(),
        };
        for (k, v) in table {
            // Type-check keys one by one so every bad value is reported.
            let mut probe = merged.clone();
            probe.insert(k.clone(), v.clone());
            match toml::Value::Table(probe).try_into::<RunConfig>() {
                Ok(_) => {
                    merged.insert(k, v);
                }
                Err(e) => errors.push(format!("`{k}`: {}", e.message())),
            }
        }
        cfg = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(vec![e.message().to_string()]))?;
        if let Err(PipelineError::Config(more)) = cfg.validate() {
            errors.extend(more);
        }
        if !errors.is_empty() {
            return Err(PipelineError::Config(errors));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Config(vec![format!("cannot read {}: {e}", p.display())]))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn gen_spec(&self) -> GenSpec {
        GenSpec {
            n_users: self.gen_n_users,
            n_items: self.gen_n_items,
            horizon_hours: self.gen_horizon_hours,
            min_sessions: self.gen_min_sessions,
            max_sessions: self.gen_max_sessions,
            slots_per_session: self.gen_slots_per_session,
            distractors_per_session: self.gen_distractors_per_session,
            rates: PatternRates {
                in_scope_verified: self.gen_rate_verified,
                in_scope_unverified: self.gen_rate_unverified,
                out_of_scope: self.gen_rate_out_of_scope,
                out_of_date: self.gen_rate_out_of_date,
            },
            vocab: Vocab {
                brands: self.gen_brands.clone(),
                categories: self.gen_categories.clone(),
                colors: self.gen_colors.clone(),
                specs: self.gen_specs.clone(),
                off_topic: self.gen_off_topic.clone(),
            },
            seed: self.seed,
        }
    }

    pub fn value_params(&self) -> ValueParams {
        ValueParams {
            alpha: self.alpha,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            l_seq: self.l_seq,
            time_bucket_count: self.time_bucket_count,
        }
    }

    pub fn scope_params(&self) -> ScopeParams {
        ScopeParams {
            lambda_thresh: self.lambda_thresh,
        }
    }

    pub fn linkage_params(&self) -> LinkageParams {
        LinkageParams {
            window_days: self.window_days,
        }
    }

    /// Model config without table sizes; those come from the corpus.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            n_time_buckets: self.time_bucket_count,
            lambda3_skip: self.lambda3_skip,
            encoder_layers: self.encoder_layers,
            max_tokens: self.max_tokens,
            l_seq: self.l_seq,
            max_actions: self.max_actions,
            seed: self.seed,
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            tau1: self.tau1,
            tau2: self.tau2,
            lambda_va: self.lambda_va,
            lambda_l2: self.lambda_l2,
            n_neg_search: self.n_neg_search,
            va_batch: self.va_batch,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            early_stopping: self.early_stopping,
            lr: self.lr,
            valid_n_neg: self.valid_n_neg,
            seed: self.seed,
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self.eval_protocol {
            ProtocolKind::Ranking => Protocol::Ranking { n_neg: self.eval_n_neg },
            ProtocolKind::Retrieval => Protocol::Retrieval,
        }
    }

    /// Checks every section and reports all failures at once.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut errors = Vec::new();
        if let Err(e) = self.gen_spec().validate() {
            errors.push(format!("gen_*: {e}"));
        }
        if let Err(e) = self.value_params().validate() {
            errors.push(e.to_string());
        }
        if self.window_days == 0 {
            errors.push("window_days must be positive".into());
        }
        let mut m = self.model_config();
        m.vocab_size = 1;
        m.n_items = 1;
        m.n_users = 1;
        if let Err(e) = m.validate() {
            errors.push(e);
        }
        if let Err(e) = self.train_config().validate() {
            errors.push(e);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(errors))
        }
    }
}
