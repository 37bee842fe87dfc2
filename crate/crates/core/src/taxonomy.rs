//! Node and edge kinds shared by extraction and the graph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneralKind {
    Person,
    Object,
    Time,
    Place,
}

impl GeneralKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneralKind::Person => "person",
            GeneralKind::Object => "object",
            GeneralKind::Time => "time",
            GeneralKind::Place => "place",
        }
    }
}

impl FromStr for GeneralKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "person" => Ok(GeneralKind::Person),
            "object" => Ok(GeneralKind::Object),
            "time" => Ok(GeneralKind::Time),
            "place" => Ok(GeneralKind::Place),
            other => Err(format!("unknown general subkind {other:?}")),
        }
    }
}

/// General entities (people, objects, times, places) or specific events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    General(GeneralKind),
    Event,
}

impl NodeKind {
    pub const OBJECT: NodeKind = NodeKind::General(GeneralKind::Object);

    pub fn is_event(self) -> bool {
        matches!(self, NodeKind::Event)
    }

    pub fn subkind(self) -> Option<GeneralKind> {
        match self {
            NodeKind::General(sub) => Some(sub),
            NodeKind::Event => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::General(sub) => f.write_str(sub.as_str()),
            NodeKind::Event => f.write_str("event"),
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    /// Accepts `event`, a bare subkind (`object`) or `general:<subkind>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "event" {
            return Ok(NodeKind::Event);
        }
        let sub = s.strip_prefix("general:").unwrap_or(s);
        sub.parse().map(NodeKind::General)
    }
}

impl Serialize for NodeKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Semantic,
    Causal,
    Sequential,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Semantic => "semantic",
            EdgeKind::Causal => "causal",
            EdgeKind::Sequential => "sequential",
        }
    }

    /// Causal and sequential links only make sense with an event endpoint.
    pub fn requires_event(self) -> bool {
        !matches!(self, EdgeKind::Semantic)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semantic" => Ok(EdgeKind::Semantic),
            "causal" => Ok(EdgeKind::Causal),
            "sequential" => Ok(EdgeKind::Sequential),
            other => Err(format!("unknown edge kind {other:?}")),
        }
    }
}

/// Case-folded, NFC, whitespace-collapsed label used as the dedup key.
pub fn canonical_label(label: &str) -> String {
    normalize_text(label).to_lowercase()
}
