use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Three-way fact-checking verdict label.
///
/// The declaration order is the tie-break order used whenever two labels
/// carry the same probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Supported,
    Refuted,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supported, Label::Refuted, Label::Neutral];

    pub fn index(self) -> usize {
        match self {
            Label::Supported => 0,
            Label::Refuted => 1,
            Label::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supported => "Supported",
            Label::Refuted => "Refuted",
            Label::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown verdict label {0:?}")]
pub struct ParseLabelError(pub alloc::string::String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Supported" => Ok(Label::Supported),
            "Refuted" => Ok(Label::Refuted),
            "Neutral" => Ok(Label::Neutral),
            other => Err(ParseLabelError(other.into())),
        }
    }
}
