//! Synthetic user journeys with planted consultation patterns.
//!
//! Each user runs a series of search sessions spaced far enough apart that
//! no consultation can link across sessions. Around each search the
//! generator plants consultations of four kinds:
//!
//! * verified: about the search target, a few hours before the search,
//!   followed by a click on the target and by the search, click and buy
//!   after it;
//! * unverified in-scope: about an item of another category, within the
//!   prior week, never followed by a related action;
//! * out-of-scope: off-topic vocabulary only, in a burst just before the
//!   search;
//! * out-of-date: in-scope but 30 to 90 days old, never followed by a
//!   related action.
//!
//! Only verified consultations are labeled `high`, and only for their own
//! search.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    ActionType, Consultation, ConsultationId, Corpus, CorpusBuilder, Event, Item, ItemId, Query, Timestamp, UserId,
};
use crate::index::normalize;
use crate::linkage::related_tokens;

const DAY: u64 = 24;
const WINDOW: u64 = 14 * DAY;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternRates {
    pub in_scope_verified: f64,
    pub in_scope_unverified: f64,
    pub out_of_scope: f64,
    pub out_of_date: f64,
}

impl Default for PatternRates {
    fn default() -> Self {
        Self {
            in_scope_verified: 0.25,
            in_scope_unverified: 0.25,
            out_of_scope: 0.3,
            out_of_date: 0.15,
        }
    }
}

impl PatternRates {
    fn as_array(&self) -> [f64; 4] {
        [
            self.in_scope_verified,
            self.in_scope_unverified,
            self.out_of_scope,
            self.out_of_date,
        ]
    }
}

/// Term pools. Item titles are `<brand> <category> <model code>` with
/// attributes `[color, spec]`; off-topic terms never appear in items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub brands: Vec<String>,
    pub categories: Vec<String>,
    pub colors: Vec<String>,
    pub specs: Vec<String>,
    pub off_topic: Vec<String>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

impl Default for Vocab {
    fn default() -> Self {
        Self {
            brands: words("acme zenix orbit nova vertex lumen quanta pioneer"),
            categories: words("phone laptop camera headphones tablet monitor speaker keyboard watch router"),
            colors: words("red blue black silver green white"),
            specs: words("64gb 128gb 256gb compact pro max"),
            off_topic: words(
                "election weather recipe football poetry history vacation gardening astronomy \
                 philosophy movies taxes parenting chess yoga painting jazz hiking novels cooking",
            ),
        }
    }
}

impl Vocab {
    fn scenario_terms(&self) -> impl Iterator<Item = &String> {
        self.brands
            .iter()
            .chain(&self.categories)
            .chain(&self.colors)
            .chain(&self.specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub horizon_hours: u64,
    pub min_sessions: usize,
    pub max_sessions: usize,
    /// Consultation slots per session; each draws one pattern from `rates`.
    pub slots_per_session: usize,
    /// Same-category clicks before each search.
    pub distractors_per_session: usize,
    pub rates: PatternRates,
    pub vocab: Vocab,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 500,
            horizon_hours: 365 * DAY,
            min_sessions: 4,
            max_sessions: 8,
            slots_per_session: 6,
            distractors_per_session: 3,
            rates: PatternRates::default(),
            vocab: Vocab::default(),
            seed: 0,
        }
    }
}

/// First search no earlier than this, so out-of-date consultations fit.
const FIRST_SESSION: u64 = 100 * DAY;
const MIN_GAP: u64 = 22 * DAY;
const MAX_GAP: u64 = 28 * DAY;

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Spec(m.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if self.n_items == 0 {
            return bad("n_items must be positive");
        }
        let rates = self.rates.as_array();
        if rates.iter().any(|r| !(*r >= 0.0)) {
            return bad("pattern rates must be non-negative");
        }
        if rates.iter().sum::<f64>() > 1.0 + 1e-12 {
            return bad("pattern rates sum above 1");
        }
        if self.min_sessions == 0 || self.min_sessions > self.max_sessions {
            return bad("need 1 <= min_sessions <= max_sessions");
        }
        let needed = FIRST_SESSION + DAY * 10 + (self.max_sessions as u64 - 1) * MAX_GAP + DAY;
        if self.horizon_hours < needed {
            return Err(GenError::Spec(format!(
                "horizon_hours {} cannot hold {} sessions (need {needed})",
                self.horizon_hours, self.max_sessions
            )));
        }
        let v = &self.vocab;
        for (name, pool) in [
            ("brands", &v.brands),
            ("categories", &v.categories),
            ("colors", &v.colors),
            ("specs", &v.specs),
            ("off_topic", &v.off_topic),
        ] {
            if pool.is_empty() {
                return Err(GenError::Spec(format!("vocab.{name} is empty")));
            }
            for w in pool {
                if normalize(w) != [w.to_lowercase()] {
                    return Err(GenError::Spec(format!("vocab.{name} term {w:?} is not a single index token")));
                }
            }
        }
        let scenario: Vec<String> = v.scenario_terms().map(|w| w.to_lowercase()).collect();
        if let Some(w) = v.off_topic.iter().find(|w| scenario.contains(&w.to_lowercase())) {
            return Err(GenError::Spec(format!("off-topic term {w:?} is also a scenario term")));
        }
        let template: Vec<String> = normalize(&format!("{USER_IN} {ASSIST_IN} {USER_OFF} {ASSIST_OFF}"));
        if let Some(w) = scenario.iter().chain(&v.off_topic).find(|w| template.contains(w)) {
            return Err(GenError::Spec(format!("vocab term {w:?} collides with template text")));
        }
        Ok(())
    }
}

const USER_IN: &str = "tell me about the";
const ASSIST_IN: &str = "sure, here is what reviewers say";
const USER_OFF: &str = "can you explain";
const ASSIST_OFF: &str = "that is a broad subject";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    InScopeVerified,
    InScopeUnverified,
    OutOfScope,
    OutOfDate,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OracleLabel {
    pub user: UserId,
    pub search_ts: u64,
    pub cid: ConsultationId,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub corpus: Corpus,
    /// One label per (search, earlier consultation) pair, sorted.
    pub oracle: Vec<OracleLabel>,
    /// The pattern each consultation was planted as.
    pub patterns: BTreeMap<(UserId, ConsultationId), Pattern>,
}

pub fn write_oracle_jsonl<W: Write>(oracle: &[OracleLabel], mut out: W) -> std::io::Result<()> {
    for o in oracle {
        serde_json::to_writer(&mut out, o)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

struct ItemMeta {
    category: usize,
    color: usize,
    brand: usize,
    spec: usize,
    text: Vec<String>,
}

struct Catalog {
    items: Vec<Item>,
    meta: Vec<ItemMeta>,
}

fn build_catalog(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Catalog {
    let v = &spec.vocab;
    let mut items = Vec::with_capacity(spec.n_items);
    let mut meta = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let category = i % v.categories.len();
        let brand = rng.gen_range(0..v.brands.len());
        let color = rng.gen_range(0..v.colors.len());
        let spec_ix = rng.gen_range(0..v.specs.len());
        let item = Item {
            id: ItemId(format!("i{i:05}")),
            title: format!("{} {} m{i:05}", capitalize(&v.brands[brand]), v.categories[category]),
            attributes: vec![v.colors[color].clone(), v.specs[spec_ix].clone()],
        };
        meta.push(ItemMeta {
            category,
            color,
            brand,
            spec: spec_ix,
            text: normalize(&item_text(&item)),
        });
        items.push(item);
    }
    Catalog { items, meta }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn item_text(item: &Item) -> String {
    let mut t = item.title.clone();
    for a in &item.attributes {
        t.push(' ');
        t.push_str(a);
    }
    t
}

fn in_scope_consult(item: &Item) -> (String, String) {
    (
        format!("{USER_IN} {}?", item_text(item)),
        format!("{ASSIST_IN} about the {}.", item.title),
    )
}

/// One planned interaction, kept as item index or query for the relatedness checks.
#[derive(Clone)]
struct Planned {
    ts: u64,
    kind: ActionType,
    item: usize,
    query: Option<String>,
}

struct SessionPlan {
    ts: u64,
    target: usize,
    query: String,
    verified_ts: Option<u64>,
}

fn draw_pattern(rates: &PatternRates, rng: &mut ChaCha8Rng) -> Option<Pattern> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (p, r) in [
        Pattern::InScopeVerified,
        Pattern::InScopeUnverified,
        Pattern::OutOfScope,
        Pattern::OutOfDate,
    ]
    .into_iter()
    .zip(rates.as_array())
    {
        acc += r;
        if u < acc {
            return Some(p);
        }
    }
    None
}

pub fn generate(spec: &GenSpec) -> Result<Generated, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let catalog = build_catalog(spec, &mut rng);
    let mut builder = CorpusBuilder::new();
    for item in &catalog.items {
        builder.add_item(item.clone()).expect("generated item ids are unique");
    }
    let mut oracle = Vec::new();
    let mut patterns = BTreeMap::new();
    let width = spec.n_users.to_string().len().max(3);
    for u in 0..spec.n_users {
        let user = UserId(format!("u{u:0width$}"));
        let g = generate_user(spec, &catalog, &mut rng);
        for e in g.events {
            builder.add_event(user.clone(), e).expect("generated events are valid");
        }
        for (cid, p) in g.patterns {
            patterns.insert((user.clone(), cid), p);
        }
        for (search_ts, cid, label) in g.labels {
            oracle.push(OracleLabel {
                user: user.clone(),
                search_ts,
                cid,
                label,
            });
        }
    }
    oracle.sort();
    Ok(Generated {
        corpus: builder.finish(),
        oracle,
        patterns,
    })
}

struct UserOutput {
    events: Vec<Event>,
    patterns: Vec<(ConsultationId, Pattern)>,
    labels: Vec<(u64, ConsultationId, Label)>,
}

fn generate_user(spec: &GenSpec, cat: &Catalog, rng: &mut ChaCha8Rng) -> UserOutput {
    let v = &spec.vocab;
    let n_sessions = rng.gen_range(spec.min_sessions..=spec.max_sessions);
    let mut ts = FIRST_SESSION + rng.gen_range(0..10 * DAY);

    // Sessions first: timing, target, query and whether a verified slot fires.
    let mut slots: Vec<Vec<Pattern>> = Vec::new();
    let mut sessions = Vec::new();
    for k in 0..n_sessions {
        if k > 0 {
            ts += rng.gen_range(MIN_GAP..=MAX_GAP);
        }
        let target = rng.gen_range(0..cat.items.len());
        let m = &cat.meta[target];
        let query = format!("{} {}", v.categories[m.category], v.colors[m.color]);
        let mut drawn = Vec::new();
        let mut verified = false;
        for _ in 0..spec.slots_per_session {
            match draw_pattern(&spec.rates, rng) {
                Some(Pattern::InScopeVerified) if verified => {}
                Some(Pattern::InScopeVerified) => {
                    verified = true;
                    drawn.push(Pattern::InScopeVerified);
                }
                Some(p) => drawn.push(p),
                None => {}
            }
        }
        let verified_ts = verified.then(|| ts - rng.gen_range(8..=30));
        sessions.push(SessionPlan {
            ts,
            target,
            query,
            verified_ts,
        });
        slots.push(drawn);
    }

    // Interactions.
    let mut planned: Vec<Planned> = Vec::new();
    for s in &sessions {
        let m = &cat.meta[s.target];
        let mut pool: Vec<usize> = (0..cat.items.len())
            .filter(|&j| {
                let o = &cat.meta[j];
                j != s.target && o.category == m.category && o.color == m.color && o.brand != m.brand && o.spec != m.spec
            })
            .collect();
        if pool.len() < spec.distractors_per_session {
            let mut loose: Vec<usize> = (0..cat.items.len())
                .filter(|&j| {
                    let o = &cat.meta[j];
                    j != s.target && o.category == m.category && o.brand != m.brand && o.spec != m.spec && o.color != m.color
                })
                .collect();
            loose.shuffle(rng);
            pool.extend(loose);
        } else {
            pool.shuffle(rng);
        }
        for &d in pool.iter().take(spec.distractors_per_session) {
            planned.push(Planned {
                ts: s.ts - rng.gen_range(64..=168),
                kind: ActionType::Click,
                item: d,
                query: None,
            });
        }
        if let Some(tc) = s.verified_ts {
            planned.push(Planned {
                ts: tc + 1,
                kind: ActionType::Click,
                item: s.target,
                query: None,
            });
        }
        planned.push(Planned {
            ts: s.ts,
            kind: ActionType::Search,
            item: s.target,
            query: Some(s.query.clone()),
        });
        planned.push(Planned {
            ts: s.ts + 1,
            kind: ActionType::Click,
            item: s.target,
            query: None,
        });
        planned.push(Planned {
            ts: s.ts + 2,
            kind: ActionType::Buy,
            item: s.target,
            query: None,
        });
    }
    let planned_tokens: Vec<Vec<String>> = planned
        .iter()
        .map(|p| match &p.query {
            Some(q) => normalize(q),
            None => cat.meta[p.item].text.clone(),
        })
        .collect();
    // True if an in-scope consultation about `item` at `tc` would link to any planned action.
    let would_link = |item: usize, tc: u64| {
        let (ut, at) = in_scope_consult(&cat.items[item]);
        let toks = normalize(&format!("{ut} {at}"));
        planned.iter().zip(&planned_tokens).any(|(p, pt)| {
            p.ts >= tc && p.ts - tc <= WINDOW && related_tokens(&toks, pt, p.kind).is_some()
        })
    };

    let mut consults: Vec<(Consultation, Pattern, Option<usize>)> = Vec::new();
    for (k, (s, drawn)) in sessions.iter().zip(&slots).enumerate() {
        for (slot, &p) in drawn.iter().enumerate() {
            let id = ConsultationId(format!("s{k:02}-c{slot:02}"));
            let planted = match p {
                Pattern::InScopeVerified => {
                    let tc = s.verified_ts.expect("verified slot implies a verified time");
                    let (ut, at) = in_scope_consult(&cat.items[s.target]);
                    Some((tc, ut, at))
                }
                Pattern::OutOfScope => {
                    let lo = s.verified_ts.map_or(s.ts.saturating_sub(30), |tc| tc + 2);
                    let tc = rng.gen_range(lo..s.ts);
                    let mut pick = || v.off_topic.choose(rng).expect("non-empty pool").clone();
                    let ut = format!("{USER_OFF} {} and {}?", pick(), pick());
                    let at = format!("{ASSIST_OFF}; {} ties into {}.", pick(), pick());
                    Some((tc, ut, at))
                }
                Pattern::InScopeUnverified | Pattern::OutOfDate => {
                    let tc = if p == Pattern::OutOfDate {
                        s.ts - rng.gen_range(30 * DAY..=90 * DAY)
                    } else {
                        s.ts - rng.gen_range(1..=7 * DAY)
                    };
                    let target_cat = cat.meta[s.target].category;
                    let mut chosen = None;
                    for _ in 0..64 {
                        let j = rng.gen_range(0..cat.items.len());
                        if p == Pattern::InScopeUnverified && cat.meta[j].category == target_cat {
                            continue;
                        }
                        if !would_link(j, tc) {
                            chosen = Some(j);
                            break;
                        }
                    }
                    chosen.map(|j| {
                        let (ut, at) = in_scope_consult(&cat.items[j]);
                        (tc, ut, at)
                    })
                }
            };
            if let Some((tc, user_turn, assistant_turn)) = planted {
                let verified_for = (p == Pattern::InScopeVerified).then_some(k);
                consults.push((
                    Consultation {
                        id,
                        user_turn,
                        assistant_turn,
                        timestamp: Timestamp(tc),
                    },
                    p,
                    verified_for,
                ));
            }
        }
    }

    let mut labels = Vec::new();
    for (k, s) in sessions.iter().enumerate() {
        for (c, _, verified_for) in &consults {
            if c.timestamp.0 < s.ts {
                let label = if *verified_for == Some(k) { Label::High } else { Label::Low };
                labels.push((s.ts, c.id.clone(), label));
            }
        }
    }

    let mut events = Vec::with_capacity(planned.len() + consults.len());
    for p in &planned {
        let item = cat.items[p.item].id.clone();
        let timestamp = Timestamp(p.ts);
        events.push(match p.kind {
            ActionType::Search => Event::Search {
                query: Query {
                    text: p.query.clone().expect("search has a query"),
                    timestamp,
                },
                ground_truth_item: item,
            },
            ActionType::Click => Event::Click { item, timestamp },
            ActionType::Buy => Event::Buy { item, timestamp },
        });
    }
    let mut pats = Vec::new();
    for (c, p, _) in consults {
        pats.push((c.id.clone(), p));
        events.push(Event::Consult(c));
    }
    UserOutput {
        events,
        patterns: pats,
        labels,
    }
}
