//! Rule-based backend for offline runs and exact tests.
//!
//! Rules:
//! - REFINE splits on `.`, `!`, `?` and drops sentence-initial filler words.
//! - EXTRACT_NODES / EXTRACT_RELATIONS only read statements in the controlled
//!   triplet form `subject | relation | object`. Endpoints are objects unless
//!   suffixed `@event`, `@person`, `@time` or `@place`; relations are semantic
//!   unless prefixed `causes:` (causal) or `then:` (sequential).
//! - MAP_QUESTION runs the lexical matcher over the edge catalog.

use std::time::Instant;

use super::{
    AuditLog, Backend, PromptRequest, ProviderError, ProviderExchange, ProviderKind, TemplateId,
};
use crate::ingest::normalize_text;
use crate::mapping::{jaccard, tokenize, DEFAULT_TAU};
use crate::taxonomy::{EdgeKind, GeneralKind, NodeKind};

const FILLERS: [&str; 6] = ["and", "also", "well", "um", "so", "then"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicBackend {
    /// Lexical threshold used for MAP_QUESTION.
    pub tau: f64,
}

impl Default for DeterministicBackend {
    fn default() -> Self {
        DeterministicBackend { tau: DEFAULT_TAU }
    }
}

impl DeterministicBackend {
    pub fn with_tau(tau: f64) -> Self {
        DeterministicBackend { tau }
    }
}

fn is_filler(word: &str) -> bool {
    let bare = word
        .trim_end_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    FILLERS.contains(&bare.as_str())
}

/// Splits `body` into sentences and strips leading filler words.
pub fn refine_sentences(body: &str) -> Vec<String> {
    body.split(['.', '!', '?'])
        .filter_map(|sentence| {
            let words: Vec<&str> = sentence.split_whitespace().collect();
            let start = words.iter().position(|w| !is_filler(w))?;
            let text = normalize_text(&words[start..].join(" "));
            (!text.is_empty()).then_some(text)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub subject: (String, NodeKind),
    pub relation: (String, EdgeKind),
    pub object: (String, NodeKind),
}

fn endpoint(part: &str) -> Option<(String, NodeKind)> {
    let suffixes = [
        ("@event", NodeKind::Event),
        ("@person", NodeKind::General(GeneralKind::Person)),
        ("@time", NodeKind::General(GeneralKind::Time)),
        ("@place", NodeKind::General(GeneralKind::Place)),
        ("@object", NodeKind::OBJECT),
    ];
    let part = part.trim();
    let (label, kind) = suffixes
        .iter()
        .find_map(|(suffix, kind)| part.strip_suffix(suffix).map(|l| (l, *kind)))
        .unwrap_or((part, NodeKind::OBJECT));
    let label = normalize_text(label);
    (!label.is_empty()).then_some((label, kind))
}

/// Parses a controlled-form statement; anything else yields `None`.
pub fn parse_triplet(statement: &str) -> Option<Triplet> {
    let parts: Vec<&str> = statement.split('|').collect();
    if parts.len() != 3 {
        return None;
    }
    let relation = parts[1].trim();
    let (relation, kind) = if let Some(rest) = relation.strip_prefix("causes:") {
        (rest, EdgeKind::Causal)
    } else if let Some(rest) = relation.strip_prefix("then:") {
        (rest, EdgeKind::Sequential)
    } else {
        (relation, EdgeKind::Semantic)
    };
    let relation = normalize_text(relation);
    if relation.is_empty() {
        return None;
    }
    Some(Triplet {
        subject: endpoint(parts[0])?,
        relation: (relation, kind),
        object: endpoint(parts[2])?,
    })
}

fn binding<'a>(request: &'a PromptRequest<'_>, name: &str) -> &'a str {
    request.bindings.get(name).map(String::as_str).unwrap_or("")
}

impl DeterministicBackend {
    fn nodes(&self, statements: &str) -> String {
        let mut lines = Vec::new();
        for triplet in statements.lines().filter_map(parse_triplet) {
            for (label, kind) in [triplet.subject, triplet.object] {
                lines.push(format!("NODE\t{kind}\t{label}"));
            }
        }
        lines.join("\n")
    }

    fn relations(&self, statements: &str) -> String {
        statements
            .lines()
            .filter_map(parse_triplet)
            .map(|t| {
                format!(
                    "REL\t{}\t{}\t{}\t{}",
                    t.relation.1, t.subject.0, t.relation.0, t.object.0
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn map_question(&self, stem: &str, answer: &str, catalog: &str) -> String {
        let question = tokenize(&format!("{stem} {answer}"));
        let mut lines = vec![format!(
            "Question tokens: {}",
            question.iter().cloned().collect::<Vec<_>>().join(" ")
        )];
        let mut kept = Vec::new();
        let mut best = 0.0_f64;
        if !question.is_empty() {
            for entry in catalog.lines() {
                let fields: Vec<&str> = entry.split('\t').collect();
                if fields.len() != 4 {
                    continue;
                }
                let tokens = tokenize(&fields[1..].join(" "));
                let score = jaccard(&question, &tokens);
                if score >= self.tau {
                    lines.push(format!("Edge {} overlaps with score {score}.", fields[0]));
                    kept.push(fields[0].to_string());
                    best = best.max(score);
                }
            }
        }
        if kept.is_empty() {
            lines.push("No edge reaches the threshold.".to_string());
        }
        for id in &kept {
            lines.push(format!("EDGE\t{id}"));
        }
        if !kept.is_empty() {
            lines.push(format!("CONFIDENCE\t{best}"));
        }
        lines.join("\n")
    }
}

impl Backend for DeterministicBackend {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Deterministic
    }

    fn respond(
        &self,
        request: &PromptRequest<'_>,
        audit: &AuditLog,
    ) -> Result<String, ProviderError> {
        let start = Instant::now();
        let response = match request.template_id {
            TemplateId::Refine => refine_sentences(binding(request, "section")).join("\n"),
            TemplateId::ExtractNodes => self.nodes(binding(request, "statements")),
            TemplateId::ExtractRelations => self.relations(binding(request, "statements")),
            TemplateId::MapQuestion => self.map_question(
                binding(request, "stem"),
                binding(request, "answer"),
                binding(request, "edges"),
            ),
        };
        audit.record(ProviderExchange {
            template_id: request.template_id,
            rendered_prompt: request.rendered.to_string(),
            raw_response: response.clone(),
            latency_ms: super::elapsed_ms(start),
            provider_kind: ProviderKind::Deterministic,
        });
        Ok(response)
    }
}
