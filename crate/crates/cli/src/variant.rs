use std::fmt;
use std::str::FromStr;

use crate::{RunConfig, Selection};

/// The full model and its single-component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Vaps,
    /// Recent consultations instead of value-ranked ones, no alignment loss.
    SemanticOnly,
    NoTime,
    NoScope,
    NoAction,
    NoVa,
    NoCai,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Vaps,
        Variant::SemanticOnly,
        Variant::NoTime,
        Variant::NoScope,
        Variant::NoAction,
        Variant::NoVa,
        Variant::NoCai,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vaps => "vaps",
            Variant::SemanticOnly => "semantic-only",
            Variant::NoTime => "no-time",
            Variant::NoScope => "no-scope",
            Variant::NoAction => "no-action",
            Variant::NoVa => "no-va",
            Variant::NoCai => "no-cai",
        }
    }

    /// Config for this variant, derived from the full model's config.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Variant::Vaps => {}
            Variant::SemanticOnly => {
                c.selection = Selection::Recent;
                c.lambda_va = 0.0;
            }
            // Aggregate = (1 - l1) time + l1 (l2 scope + (1 - l2) action).
            Variant::NoTime => c.lambda1 = 1.0,
            Variant::NoScope => c.lambda2 = 0.0,
            Variant::NoAction => c.lambda2 = 1.0,
            Variant::NoVa => c.lambda_va = 0.0,
            Variant::NoCai => c.lambda3_skip = 0.0,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}
