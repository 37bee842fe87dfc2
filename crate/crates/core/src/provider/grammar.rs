//! Strict line-oriented parser for provider responses.
//!
//! Every input line ends up as exactly one record or exactly one
//! [`Malformed`] entry; a line is never partially applied.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::graph::EdgeId;
use crate::ingest::normalize_text;
use crate::taxonomy::{canonical_label, EdgeKind, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrammarId {
    /// Free statements, one per line (REFINE).
    Statements,
    /// `NODE<TAB>kind[:subkind]<TAB>label`
    Nodes,
    /// `REL<TAB>kind<TAB>src<TAB>relation<TAB>dst`
    Relations,
    /// `EDGE<TAB>edge_id` and `CONFIDENCE<TAB>x`; any other line is rationale.
    EdgeSelection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Statement(String),
    Node {
        kind: NodeKind,
        label: String,
    },
    Relation {
        kind: EdgeKind,
        src: String,
        relation: String,
        dst: String,
    },
    Edge(EdgeId),
    Confidence(f64),
    Rationale(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed {
    /// 1-based line number within the response.
    pub line: usize,
    pub reason: &'static str,
    pub content: String,
}

impl Malformed {
    pub fn to_diagnostic(&self, context: &str) -> Diagnostic {
        Diagnostic::new(
            self.reason,
            format!("{context} line {}: {:?}", self.line, self.content),
        )
    }
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: {} ({:?})",
            self.line, self.reason, self.content
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    /// `(line number, record)` in input order.
    pub records: Vec<(usize, Record)>,
    pub malformed: Vec<Malformed>,
}

impl ParseOutcome {
    pub fn line_count(&self) -> usize {
        self.records.len() + self.malformed.len()
    }
}

fn nonempty_field(field: &str) -> Option<String> {
    let text = normalize_text(field);
    (!text.is_empty()).then_some(text)
}

fn parse_node(fields: &[&str]) -> Result<Record, &'static str> {
    if fields.len() != 3 {
        return Err("arity");
    }
    let kind: NodeKind = fields[1].parse().map_err(|_| "kind")?;
    let label = nonempty_field(fields[2]).ok_or("empty label")?;
    Ok(Record::Node { kind, label })
}

fn parse_relation(fields: &[&str]) -> Result<Record, &'static str> {
    if fields.len() != 5 {
        return Err("arity");
    }
    let kind: EdgeKind = fields[1].parse().map_err(|_| "kind")?;
    let src = nonempty_field(fields[2]).ok_or("empty label")?;
    let relation = nonempty_field(fields[3]).ok_or("empty relation")?;
    let dst = nonempty_field(fields[4]).ok_or("empty label")?;
    if canonical_label(&src) == canonical_label(&dst) {
        return Err("self-loop");
    }
    Ok(Record::Relation {
        kind,
        src,
        relation,
        dst,
    })
}

fn parse_selection(line: &str, fields: &[&str]) -> Result<Record, &'static str> {
    match fields[0] {
        "EDGE" => {
            if fields.len() != 2 {
                return Err("arity");
            }
            fields[1]
                .trim()
                .parse::<EdgeId>()
                .map(Record::Edge)
                .map_err(|_| "edge id")
        }
        "CONFIDENCE" => {
            if fields.len() != 2 {
                return Err("arity");
            }
            match fields[1].trim().parse::<f64>() {
                Ok(x) if (0.0..=1.0).contains(&x) => Ok(Record::Confidence(x)),
                _ => Err("confidence"),
            }
        }
        _ => Ok(Record::Rationale(line.to_string())),
    }
}

fn parse_line(grammar: GrammarId, line: &str) -> Result<Record, &'static str> {
    let fields: Vec<&str> = line.split('\t').collect();
    match grammar {
        GrammarId::EdgeSelection => parse_selection(line, &fields),
        _ if line.trim().is_empty() => Err("blank"),
        GrammarId::Statements => Ok(Record::Statement(normalize_text(line))),
        GrammarId::Nodes if fields[0] == "NODE" => parse_node(&fields),
        GrammarId::Relations if fields[0] == "REL" => parse_relation(&fields),
        _ => Err("tag"),
    }
}

/// Parses a provider response line by line against `grammar`.
pub fn parse_structured_output(grammar: GrammarId, response: &str) -> ParseOutcome {
    let mut outcome = ParseOutcome::default();
    for (index, line) in response.lines().enumerate() {
        match parse_line(grammar, line) {
            Ok(record) => outcome.records.push((index + 1, record)),
            Err(reason) => outcome.malformed.push(Malformed {
                line: index + 1,
                reason,
                content: line.to_string(),
            }),
        }
    }
    outcome
}
