//! Typed syntax tree for Nile programs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A complete `define intent` program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NileIntent {
    pub name: String,
    pub commands: Vec<Command>,
}

/// One clause of an intent body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Command {
    Middleboxes(Vec<MiddleboxRef>),
    Qos(Vec<Metric>),
    Rule { action: RuleAction, traffic: TrafficSpec },
    Targets(Vec<Target>),
    Locations { origin: EndpointRef, destination: EndpointRef },
    Interval { start: DateTimeSpec, end: DateTimeSpec },
}

impl Command {
    /// Position of the clause in the canonical rendering order.
    pub fn canonical_rank(&self) -> u8 {
        match self {
            Command::Locations { .. } => 0,
            Command::Targets(_) => 1,
            Command::Middleboxes(_) => 2,
            Command::Qos(_) => 3,
            Command::Rule { .. } => 4,
            Command::Interval { .. } => 5,
        }
    }

    /// Short label used when reporting problems against a clause.
    pub fn label(&self) -> &'static str {
        match self {
            Command::Locations { .. } => "from/to",
            Command::Targets(_) => "for",
            Command::Middleboxes(_) => "add",
            Command::Qos(_) => "with",
            Command::Rule { action: RuleAction::Allow, .. } => "allow",
            Command::Rule { action: RuleAction::Block, .. } => "block",
            Command::Interval { .. } => "start/end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MiddleboxRef(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EndpointRef(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Latency,
    Jitter,
    Loss,
    Throughput,
}

impl MetricId {
    pub const ALL: [MetricId; 4] = [
        MetricId::Latency,
        MetricId::Jitter,
        MetricId::Loss,
        MetricId::Throughput,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Latency => "latency",
            MetricId::Jitter => "jitter",
            MetricId::Loss => "loss",
            MetricId::Throughput => "throughput",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        MetricId::ALL.into_iter().find(|m| m.as_str() == word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    Less,
    LessOrEqual,
    More,
    MoreOrEqual,
    Equal,
    Different,
    None,
}

impl Constraint {
    /// Constraints that carry a value, in grammar order.
    pub const VALUED: [Constraint; 6] = [
        Constraint::Less,
        Constraint::LessOrEqual,
        Constraint::More,
        Constraint::MoreOrEqual,
        Constraint::Equal,
        Constraint::Different,
    ];

    /// Surface text as written inside the metric parentheses.
    pub fn as_str(self) -> &'static str {
        match self {
            Constraint::Less => "less",
            Constraint::LessOrEqual => "less or equal",
            Constraint::More => "more",
            Constraint::MoreOrEqual => "more or equal",
            Constraint::Equal => "equal",
            Constraint::Different => "different",
            Constraint::None => "none",
        }
    }

    pub fn from_text(text: &str) -> Option<Self> {
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
        Constraint::VALUED
            .into_iter()
            .chain(std::iter::once(Constraint::None))
            .find(|c| c.as_str() == normalized)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metric {
    pub id: MetricId,
    pub constraint: Constraint,
    /// Literal with unit suffix, e.g. `10ms`; absent iff the constraint is `none`.
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Allow,
    Block,
}

impl RuleAction {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleAction::Allow => "allow",
            RuleAction::Block => "block",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "allow" => Some(RuleAction::Allow),
            "block" => Some(RuleAction::Block),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficSpec {
    Named(String),
    Flow(Vec<FiveTupleField>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiveTupleKey {
    Protocol,
    SrcPort,
    SrcIp,
    DestPort,
    DestIp,
}

impl FiveTupleKey {
    pub const ALL: [FiveTupleKey; 5] = [
        FiveTupleKey::Protocol,
        FiveTupleKey::SrcPort,
        FiveTupleKey::SrcIp,
        FiveTupleKey::DestPort,
        FiveTupleKey::DestIp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FiveTupleKey::Protocol => "protocol",
            FiveTupleKey::SrcPort => "src_port",
            FiveTupleKey::SrcIp => "src_ip",
            FiveTupleKey::DestPort => "dest_port",
            FiveTupleKey::DestIp => "dest_ip",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        FiveTupleKey::ALL.into_iter().find(|k| k.as_str() == word)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiveTupleField {
    pub key: FiveTupleKey,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Client(String),
    Traffic(TrafficSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateTimeKind {
    Datetime,
    Date,
    Hour,
}

impl DateTimeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DateTimeKind::Datetime => "datetime",
            DateTimeKind::Date => "date",
            DateTimeKind::Hour => "hour",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "datetime" => Some(DateTimeKind::Datetime),
            "date" => Some(DateTimeKind::Date),
            "hour" => Some(DateTimeKind::Hour),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateTimeSpec {
    pub kind: DateTimeKind,
    pub value: String,
}

impl fmt::Display for NileIntent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::render_nile(self))
    }
}
