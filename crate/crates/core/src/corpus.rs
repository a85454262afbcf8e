//! Timestamped data model: items, users and their search, consultation and
//! interaction histories, plus the JSONL loaders and writers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hour-granularity timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn hours(self) -> u64 {
        self.0
    }

    /// Hours elapsed since `earlier`, or `None` if `earlier` is in the future.
    pub fn hours_since(self, earlier: Timestamp) -> Option<u64> {
        self.0.checked_sub(earlier.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}h", self.0)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(ItemId);
string_id!(UserId);
string_id!(
    /// Unique per user. Multi-turn dialogues are stored as several
    /// consultations whose ids share a session prefix.
    ConsultationId
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub title: String,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Search,
    Click,
    Buy,
}

impl ActionType {
    pub const ALL: [ActionType; 3] = [ActionType::Search, ActionType::Click, ActionType::Buy];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Search => "search",
            ActionType::Click => "click",
            ActionType::Buy => "buy",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "search" => Some(ActionType::Search),
            "click" => Some(ActionType::Click),
            "buy" => Some(ActionType::Buy),
            _ => None,
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an interaction points at; the variant fixes the action type, so a
/// search always carries a query and a click or buy always carries an item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InteractionKind {
    Search(Query),
    Click(ItemId),
    Buy(ItemId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub timestamp: Timestamp,
}

impl Interaction {
    pub fn search(query: Query) -> Self {
        let timestamp = query.timestamp;
        Self {
            kind: InteractionKind::Search(query),
            timestamp,
        }
    }

    pub fn click(item: ItemId, timestamp: Timestamp) -> Self {
        Self {
            kind: InteractionKind::Click(item),
            timestamp,
        }
    }

    pub fn buy(item: ItemId, timestamp: Timestamp) -> Self {
        Self {
            kind: InteractionKind::Buy(item),
            timestamp,
        }
    }

    pub fn action_type(&self) -> ActionType {
        match self.kind {
            InteractionKind::Search(_) => ActionType::Search,
            InteractionKind::Click(_) => ActionType::Click,
            InteractionKind::Buy(_) => ActionType::Buy,
        }
    }

    pub fn target_item(&self) -> Option<&ItemId> {
        match &self.kind {
            InteractionKind::Click(id) | InteractionKind::Buy(id) => Some(id),
            InteractionKind::Search(_) => None,
        }
    }

    pub fn target_query(&self) -> Option<&Query> {
        match &self.kind {
            InteractionKind::Search(q) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSession {
    pub query: Query,
    /// The search action itself; its timestamp equals the query's.
    pub interaction: Interaction,
    pub ground_truth_item: ItemId,
}

impl SearchSession {
    pub fn new(query: Query, ground_truth_item: ItemId) -> Self {
        Self {
            interaction: Interaction::search(query.clone()),
            query,
            ground_truth_item,
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        self.query.timestamp
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consultation {
    pub id: ConsultationId,
    pub user_turn: String,
    pub assistant_turn: String,
    pub timestamp: Timestamp,
}

impl Consultation {
    /// Both turns joined by a space.
    pub fn text(&self) -> String {
        format!("{} {}", self.user_turn, self.assistant_turn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: UserId,
    pub searches: Vec<SearchSession>,
    pub consultations: Vec<Consultation>,
    /// Every interaction, searches included.
    pub interactions: Vec<Interaction>,
}

impl UserHistory {
    fn new(user_id: UserId) -> Self {
        Self {
            user_id,
            searches: Vec::new(),
            consultations: Vec::new(),
            interactions: Vec::new(),
        }
    }

    /// Interactions strictly before `t`, in time order.
    pub fn interactions_before(&self, t: Timestamp) -> &[Interaction] {
        let end = self.interactions.partition_point(|a| a.timestamp < t);
        &self.interactions[..end]
    }

    /// Interactions at or after `t`, in time order.
    pub fn interactions_from(&self, t: Timestamp) -> &[Interaction] {
        let start = self.interactions.partition_point(|a| a.timestamp < t);
        &self.interactions[start..]
    }

    /// Consultations strictly before `t`, in time order.
    pub fn consultations_before(&self, t: Timestamp) -> &[Consultation] {
        let end = self.consultations.partition_point(|c| c.timestamp < t);
        &self.consultations[..end]
    }
}

/// Splits a history at `t`: consultations strictly before `t`, and
/// interactions at or after `t`. Both keep their time order.
pub fn slice_before(history: &UserHistory, t: Timestamp) -> (&[Consultation], &[Interaction]) {
    (
        history.consultations_before(t),
        history.interactions_from(t),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub items: BTreeMap<ItemId, Item>,
    pub users: BTreeMap<UserId, UserHistory>,
}

impl Corpus {
    pub fn item(&self, id: &ItemId) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn user(&self, id: &UserId) -> Option<&UserHistory> {
        self.users.get(id)
    }

    pub fn item_ids(&self) -> Vec<ItemId> {
        self.items.keys().cloned().collect()
    }
}

/// One line of `events.jsonl`, already typed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Search {
        query: Query,
        ground_truth_item: ItemId,
    },
    Click {
        item: ItemId,
        timestamp: Timestamp,
    },
    Buy {
        item: ItemId,
        timestamp: Timestamp,
    },
    Consult(Consultation),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: invalid JSON: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: schema error: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: unknown item id {item}")]
    DanglingItem {
        file: String,
        line: usize,
        item: ItemId,
    },

    #[error("{file}:{line}: duplicate item id {item}")]
    DuplicateItem {
        file: String,
        line: usize,
        item: ItemId,
    },

    #[error("{file}:{line}: duplicate consultation id {cid} for user {user}")]
    DuplicateConsultation {
        file: String,
        line: usize,
        user: UserId,
        cid: ConsultationId,
    },
}

/// Accumulates items and events, then sorts and validates them into a [`Corpus`].
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    items: BTreeMap<ItemId, Item>,
    users: BTreeMap<UserId, UserHistory>,
    seen_cids: BTreeSet<(UserId, ConsultationId)>,
    file: String,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self {
            file: "<memory>".to_string(),
            ..Self::default()
        }
    }

    fn schema(&self, line: usize, message: impl Into<String>) -> CorpusError {
        CorpusError::Schema {
            file: self.file.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn add_item(&mut self, item: Item) -> Result<(), CorpusError> {
        self.add_item_at(item, 0)
    }

    fn add_item_at(&mut self, item: Item, line: usize) -> Result<(), CorpusError> {
        if item.title.trim().is_empty() {
            return Err(self.schema(line, format!("item {} has an empty title", item.id)));
        }
        if self.items.contains_key(&item.id) {
            return Err(CorpusError::DuplicateItem {
                file: self.file.clone(),
                line,
                item: item.id,
            });
        }
        self.items.insert(item.id.clone(), item);
        Ok(())
    }

    pub fn add_event(&mut self, user: UserId, event: Event) -> Result<(), CorpusError> {
        self.add_event_at(user, event, 0)
    }

    fn check_item(&self, item: &ItemId, line: usize) -> Result<(), CorpusError> {
        if self.items.contains_key(item) {
            Ok(())
        } else {
            Err(CorpusError::DanglingItem {
                file: self.file.clone(),
                line,
                item: item.clone(),
            })
        }
    }

    fn add_event_at(&mut self, user: UserId, event: Event, line: usize) -> Result<(), CorpusError> {
        match &event {
            Event::Search {
                query,
                ground_truth_item,
            } => {
                if query.text.trim().is_empty() {
                    return Err(self.schema(line, "search query text is empty"));
                }
                self.check_item(ground_truth_item, line)?;
            }
            Event::Click { item, .. } | Event::Buy { item, .. } => self.check_item(item, line)?,
            Event::Consult(c) => {
                if c.user_turn.trim().is_empty() && c.assistant_turn.trim().is_empty() {
                    return Err(self.schema(line, format!("consultation {} has no text", c.id)));
                }
                if !self.seen_cids.insert((user.clone(), c.id.clone())) {
                    return Err(CorpusError::DuplicateConsultation {
                        file: self.file.clone(),
                        line,
                        user,
                        cid: c.id.clone(),
                    });
                }
            }
        }
        let history = self
            .users
            .entry(user.clone())
            .or_insert_with(|| UserHistory::new(user));
        match event {
            Event::Search {
                query,
                ground_truth_item,
            } => {
                let session = SearchSession::new(query, ground_truth_item);
                history.interactions.push(session.interaction.clone());
                history.searches.push(session);
            }
            Event::Click { item, timestamp } => history
                .interactions
                .push(Interaction::click(item, timestamp)),
            Event::Buy { item, timestamp } => {
                history.interactions.push(Interaction::buy(item, timestamp))
            }
            Event::Consult(c) => history.consultations.push(c),
        }
        Ok(())
    }

    /// Stable-sorts every per-user list by timestamp.
    pub fn finish(self) -> Corpus {
        let mut users = self.users;
        for h in users.values_mut() {
            h.searches.sort_by_key(SearchSession::timestamp);
            h.consultations.sort_by_key(|c| c.timestamp);
            h.interactions.sort_by_key(|a| a.timestamp);
        }
        Corpus {
            items: self.items,
            users,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    user: String,
    #[serde(rename = "type")]
    kind: String,
    ts_hours: serde_json::Number,
    query: Option<String>,
    ground_truth_item: Option<String>,
    item: Option<String>,
    cid: Option<String>,
    user_turn: Option<String>,
    assistant_turn: Option<String>,
}

#[derive(Debug, Serialize)]
struct EventRecord<'a> {
    user: &'a str,
    #[serde(rename = "type")]
    kind: &'a str,
    ts_hours: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    query: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth_item: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    item: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cid: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_turn: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assistant_turn: Option<&'a str>,
}

/// Floors fractional hours; rejects negatives.
fn parse_hours(n: &serde_json::Number) -> Option<Timestamp> {
    if let Some(u) = n.as_u64() {
        return Some(Timestamp(u));
    }
    let f = n.as_f64()?;
    (f >= 0.0 && f.is_finite()).then(|| Timestamp(f.floor() as u64))
}

impl RawEvent {
    fn into_event(
        self,
        builder: &CorpusBuilder,
        line: usize,
    ) -> Result<(UserId, Event), CorpusError> {
        let err = |m: String| builder.schema(line, m);
        let ts = parse_hours(&self.ts_hours).ok_or_else(|| {
            err(format!(
                "ts_hours {} is not a non-negative number",
                self.ts_hours
            ))
        })?;
        let present = |name: &str, v: &Option<String>| v.as_ref().map(|_| name.to_string());
        let foreign = |allowed: &[&str]| -> Vec<String> {
            [
                present("query", &self.query),
                present("ground_truth_item", &self.ground_truth_item),
                present("item", &self.item),
                present("cid", &self.cid),
                present("user_turn", &self.user_turn),
                present("assistant_turn", &self.assistant_turn),
            ]
            .into_iter()
            .flatten()
            .filter(|f| !allowed.contains(&f.as_str()))
            .collect()
        };
        let allowed: &[&str] = match self.kind.as_str() {
            "search" => &["query", "ground_truth_item"],
            "click" | "buy" => &["item"],
            "consult" => &["cid", "user_turn", "assistant_turn"],
            other => return Err(err(format!("unknown event type {other:?}"))),
        };
        let extra = foreign(allowed);
        if !extra.is_empty() {
            return Err(err(format!(
                "fields {extra:?} are not allowed on a {} event",
                self.kind
            )));
        }
        let require = |name: &str, v: Option<String>| {
            v.ok_or_else(|| err(format!("{} event requires {name:?}", self.kind)))
        };
        let event = match self.kind.as_str() {
            "search" => Event::Search {
                query: Query {
                    text: require("query", self.query.clone())?,
                    timestamp: ts,
                },
                ground_truth_item: ItemId(require(
                    "ground_truth_item",
                    self.ground_truth_item.clone(),
                )?),
            },
            "click" => Event::Click {
                item: ItemId(require("item", self.item.clone())?),
                timestamp: ts,
            },
            "buy" => Event::Buy {
                item: ItemId(require("item", self.item.clone())?),
                timestamp: ts,
            },
            _ => Event::Consult(Consultation {
                id: ConsultationId(require("cid", self.cid.clone())?),
                user_turn: require("user_turn", self.user_turn.clone())?,
                assistant_turn: require("assistant_turn", self.assistant_turn.clone())?,
                timestamp: ts,
            }),
        };
        Ok((UserId(self.user), event))
    }
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses item and event JSONL text. `items_name`/`events_name` label errors.
pub fn parse_corpus(
    items_text: &str,
    items_name: &str,
    events_text: &str,
    events_name: &str,
) -> Result<Corpus, CorpusError> {
    let mut builder = CorpusBuilder::new();
    builder.file = items_name.to_string();
    for (line, raw) in numbered_lines(items_text) {
        let item: Item = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            file: items_name.to_string(),
            line,
            message: e.to_string(),
        })?;
        builder.add_item_at(item, line)?;
    }
    builder.file = events_name.to_string();
    for (line, raw) in numbered_lines(events_text) {
        let rec: RawEvent = serde_json::from_str(raw).map_err(|e| {
            let message = e.to_string();
            if e.is_data() {
                builder.schema(line, message)
            } else {
                CorpusError::Parse {
                    file: events_name.to_string(),
                    line,
                    message,
                }
            }
        })?;
        let (user, event) = rec.into_event(&builder, line)?;
        builder.add_event_at(user, event, line)?;
    }
    Ok(builder.finish())
}

pub fn load_corpus(items_path: &Path, events_path: &Path) -> Result<Corpus, CorpusError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| CorpusError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    parse_corpus(
        &read(items_path)?,
        &items_path.display().to_string(),
        &read(events_path)?,
        &events_path.display().to_string(),
    )
}

pub fn write_items_jsonl<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for item in corpus.items.values() {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Canonical event order: users by id, then each user's interactions in
/// stored order with consultations merged in before interactions that share
/// their timestamp. Reloading the output reproduces the same corpus.
pub fn write_events_jsonl<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for h in corpus.users.values() {
        let user = h.user_id.as_str();
        let mut consults = h.consultations.iter().peekable();
        let mut searches = h.searches.iter();
        let mut emit = |rec: EventRecord| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")
        };
        fn consult_record<'a>(user: &'a str, c: &'a Consultation) -> EventRecord<'a> {
            EventRecord {
                user,
                kind: "consult",
                ts_hours: c.timestamp.0,
                query: None,
                ground_truth_item: None,
                item: None,
                cid: Some(c.id.as_str()),
                user_turn: Some(c.user_turn.as_str()),
                assistant_turn: Some(c.assistant_turn.as_str()),
            }
        }
        for a in &h.interactions {
            while let Some(c) = consults.next_if(|c| c.timestamp <= a.timestamp) {
                emit(consult_record(user, c))?;
            }
            let rec = match &a.kind {
                InteractionKind::Search(_) => {
                    let s = searches
                        .next()
                        .expect("every search interaction has a session");
                    EventRecord {
                        user,
                        kind: "search",
                        ts_hours: s.query.timestamp.0,
                        query: Some(s.query.text.as_str()),
                        ground_truth_item: Some(s.ground_truth_item.as_str()),
                        item: None,
                        cid: None,
                        user_turn: None,
                        assistant_turn: None,
                    }
                }
                InteractionKind::Click(item) | InteractionKind::Buy(item) => EventRecord {
                    user,
                    kind: a.action_type().as_str(),
                    ts_hours: a.timestamp.0,
                    query: None,
                    ground_truth_item: None,
                    item: Some(item.as_str()),
                    cid: None,
                    user_turn: None,
                    assistant_turn: None,
                },
            };
            emit(rec)?;
        }
        for c in consults {
            emit(consult_record(user, c))?;
        }
    }
    Ok(())
}
