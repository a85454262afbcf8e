use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vaps_core::corpus::{Corpus, ItemId, UserId};
use vaps_core::index::normalize;

use crate::{ModelConfig, ModelError};

pub const UNK: &str = "<unk>";

/// Token strings to embedding rows. Row 0 is the unknown token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut v = Self {
            tokens: vec![UNK.to_string()],
            ids: HashMap::from([(UNK.to_string(), 0)]),
        };
        for t in tokens {
            if !v.ids.contains_key(&t) {
                v.ids.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    /// Every normalized token of item text, queries and consultations, in
    /// first-seen order over the corpus's canonical iteration order.
    pub fn build(corpus: &Corpus) -> Self {
        let mut all = Vec::new();
        for item in corpus.items.values() {
            all.extend(normalize(&item.title));
            for a in &item.attributes {
                all.extend(normalize(a));
            }
        }
        for h in corpus.users.values() {
            for s in &h.searches {
                all.extend(normalize(&s.query.text));
            }
            for c in &h.consultations {
                all.extend(normalize(&c.text()));
            }
        }
        Self::from_tokens(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Normalized token ids of `text`, truncated to `max_tokens`.
    pub fn encode(&self, text: &str, max_tokens: usize) -> Vec<usize> {
        normalize(text).iter().take(max_tokens).map(|t| self.id(t)).collect()
    }
}

/// Item and user ids to table rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    items: Vec<ItemId>,
    users: Vec<UserId>,
    item_rows: HashMap<ItemId, usize>,
    user_rows: HashMap<UserId, usize>,
}

impl Lookup {
    pub fn new(items: Vec<ItemId>, users: Vec<UserId>) -> Self {
        let item_rows = items.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        let user_rows = users.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        Self {
            items,
            users,
            item_rows,
            user_rows,
        }
    }

    pub fn build(corpus: &Corpus) -> Self {
        Self::new(corpus.item_ids(), corpus.users.keys().cloned().collect())
    }

    pub fn item_row(&self, id: &ItemId) -> Result<usize, ModelError> {
        self.item_rows.get(id).copied().ok_or_else(|| ModelError::UnknownItem(id.clone()))
    }

    pub fn user_row(&self, id: &UserId) -> Result<usize, ModelError> {
        self.user_rows.get(id).copied().ok_or_else(|| ModelError::UnknownUser(id.clone()))
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }
}

/// Everything besides parameter values needed to rebuild a model:
/// written next to the checkpoint as `model_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub vocab: Vec<String>,
    pub items: Vec<ItemId>,
    pub users: Vec<UserId>,
}

impl ModelMeta {
    pub fn new(config: ModelConfig, vocab: &Vocabulary, lookup: &Lookup) -> Self {
        Self {
            config,
            vocab: vocab.tokens().to_vec(),
            items: lookup.items().to_vec(),
            users: lookup.users().to_vec(),
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens(self.vocab.iter().skip(1).cloned().collect())
    }

    pub fn lookup(&self) -> Lookup {
        Lookup::new(self.items.clone(), self.users.clone())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| ModelError::Meta(e.to_string()))?;
        fs::write(path, json).map_err(|e| ModelError::Meta(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Meta(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Meta(format!("{}: {e}", path.display())))
    }
}
