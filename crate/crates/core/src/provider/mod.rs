//! The single boundary for every model-assisted step.
//!
//! An [`ExtractionProvider`] renders a [`PromptTemplate`], hands the prompt
//! to a [`Backend`] (remote HTTP or deterministic rules) and records every
//! exchange in an audit log. Responses are parsed by the strict grammar in
//! [`grammar`].

pub mod deterministic;
pub mod grammar;
pub mod remote;
pub mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{self, Diagnostic};
use crate::ingest::RefinedStatement;
use crate::taxonomy::{canonical_label, EdgeKind, NodeKind};

pub use deterministic::DeterministicBackend;
pub use grammar::{parse_structured_output, GrammarId, Malformed, ParseOutcome, Record};
pub use remote::{HttpReply, RemoteBackend, RemoteConfig, RetryPolicy, Transport, UreqTransport};
pub use template::{Bindings, PromptTemplate, TemplateError, TemplateId, TemplateSet};

/// Default number of statements per extraction prompt.
pub const DEFAULT_BATCH_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    Remote,
    Deterministic,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    /// A transport-class failure. Retryable.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("retry budget exhausted after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("provider rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("unusable provider response: {0}")]
    BadResponse(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("{0}")]
    Precondition(&'static str),
    #[error("every line of a {template} response was malformed: {}", diag::join(.diagnostics))]
    AllMalformed {
        template: TemplateId,
        diagnostics: Vec<Diagnostic>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// One request/response pair, stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderExchange {
    pub template_id: TemplateId,
    pub rendered_prompt: String,
    pub raw_response: String,
    pub latency_ms: u64,
    pub provider_kind: ProviderKind,
}

/// Append-only record of provider exchanges.
#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Mutex<Vec<ProviderExchange>>,
}

impl AuditLog {
    pub fn record(&self, exchange: ProviderExchange) {
        self.entries
            .lock()
            .expect("audit log poisoned")
            .push(exchange);
    }

    pub fn snapshot(&self) -> Vec<ProviderExchange> {
        self.entries.lock().expect("audit log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("audit log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What a backend sees for one completion.
#[derive(Debug, Clone, Copy)]
pub struct PromptRequest<'a> {
    pub template_id: TemplateId,
    pub bindings: &'a Bindings,
    pub rendered: &'a str,
}

/// A completion backend. Implementations must record one
/// [`ProviderExchange`] per attempt they make.
pub trait Backend: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn respond(
        &self,
        request: &PromptRequest<'_>,
        audit: &AuditLog,
    ) -> Result<String, ProviderError>;
}

pub(crate) fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis().min(u128::from(u64::MAX)) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNode {
    pub label: String,
    pub kind: NodeKind,
    pub source_stmt_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRelation {
    pub src_label: String,
    pub dst_label: String,
    pub relation_label: String,
    pub kind: EdgeKind,
    pub source_stmt_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeExtraction {
    pub nodes: Vec<RawNode>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationExtraction {
    pub relations: Vec<RawRelation>,
    pub diagnostics: Vec<Diagnostic>,
}

pub struct ExtractionProvider {
    templates: TemplateSet,
    backend: Box<dyn Backend>,
    audit: AuditLog,
    batch_size: usize,
}

impl std::fmt::Debug for ExtractionProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtractionProvider")
            .field("kind", &self.backend.kind())
            .field("batch_size", &self.batch_size)
            .field("exchanges", &self.audit.len())
            .finish()
    }
}

impl ExtractionProvider {
    pub fn new(backend: Box<dyn Backend>, templates: TemplateSet) -> Self {
        ExtractionProvider {
            templates,
            backend,
            audit: AuditLog::default(),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    /// Rule-based provider with built-in templates.
    pub fn deterministic() -> Self {
        Self::new(
            Box::new(DeterministicBackend::default()),
            TemplateSet::default(),
        )
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn kind(&self) -> ProviderKind {
        self.backend.kind()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn audit_log(&self) -> Vec<ProviderExchange> {
        self.audit.snapshot()
    }

    /// Renders `template_id` with `bindings` and asks the backend for a
    /// response. A missing binding fails before any backend call.
    pub fn complete(
        &self,
        template_id: TemplateId,
        bindings: &Bindings,
    ) -> Result<String, ProviderError> {
        let rendered = self.templates.get(template_id).render(bindings)?;
        let request = PromptRequest {
            template_id,
            bindings,
            rendered: &rendered,
        };
        self.backend.respond(&request, &self.audit)
    }

    /// Extracts general and event nodes from the refined statements.
    ///
    /// Duplicate labels are kept; merging is the graph builder's job.
    pub fn extract_nodes(
        &self,
        statements: &[RefinedStatement],
    ) -> Result<NodeExtraction, ExtractionError> {
        if statements.is_empty() {
            return Err(ExtractionError::Precondition(
                "node extraction needs at least one statement",
            ));
        }
        let batches: Vec<NodeExtraction> = statements
            .par_chunks(self.batch_size)
            .map(|batch| self.extract_node_batch(batch))
            .collect::<Result<_, _>>()?;
        let mut out = NodeExtraction::default();
        for batch in batches {
            out.nodes.extend(batch.nodes);
            out.diagnostics.extend(batch.diagnostics);
        }
        Ok(out)
    }

    fn extract_node_batch(
        &self,
        batch: &[RefinedStatement],
    ) -> Result<NodeExtraction, ExtractionError> {
        let mut bindings = Bindings::new();
        bindings.insert("statements".into(), statement_block(batch));
        let response = self.complete(TemplateId::ExtractNodes, &bindings)?;
        let parsed = parse_structured_output(GrammarId::Nodes, &response);
        let context = batch_context(TemplateId::ExtractNodes, batch);
        let diagnostics: Vec<Diagnostic> = parsed
            .malformed
            .iter()
            .map(|m| m.to_diagnostic(&context))
            .collect();
        if parsed.records.is_empty() && !diagnostics.is_empty() {
            return Err(ExtractionError::AllMalformed {
                template: TemplateId::ExtractNodes,
                diagnostics,
            });
        }
        let nodes = parsed
            .records
            .into_iter()
            .filter_map(|(_, record)| match record {
                Record::Node { kind, label } => Some(RawNode {
                    source_stmt_ids: attribute(batch, &[&label]),
                    label,
                    kind,
                }),
                _ => None,
            })
            .collect();
        Ok(NodeExtraction { nodes, diagnostics })
    }

    /// Generates relations between the given nodes from the statements.
    ///
    /// Relations naming a label outside `nodes`, or a causal/sequential
    /// relation without an event endpoint, are dropped with a diagnostic.
    pub fn extract_relations(
        &self,
        nodes: &[RawNode],
        statements: &[RefinedStatement],
    ) -> Result<RelationExtraction, ExtractionError> {
        if nodes.is_empty() {
            return Err(ExtractionError::Precondition(
                "relation extraction needs at least one node",
            ));
        }
        let mut kinds: BTreeMap<String, BTreeSet<NodeKind>> = BTreeMap::new();
        let mut listing = BTreeSet::new();
        for node in nodes {
            kinds
                .entry(canonical_label(&node.label))
                .or_default()
                .insert(node.kind);
            listing.insert((node.kind, node.label.clone()));
        }
        let node_block = listing
            .iter()
            .map(|(kind, label)| format!("{kind}\t{label}"))
            .collect::<Vec<_>>()
            .join("\n");

        let batches: Vec<RelationExtraction> = statements
            .par_chunks(self.batch_size)
            .map(|batch| self.extract_relation_batch(batch, &node_block, &kinds))
            .collect::<Result<_, _>>()?;
        let mut out = RelationExtraction::default();
        for batch in batches {
            out.relations.extend(batch.relations);
            out.diagnostics.extend(batch.diagnostics);
        }
        Ok(out)
    }

    fn extract_relation_batch(
        &self,
        batch: &[RefinedStatement],
        node_block: &str,
        kinds: &BTreeMap<String, BTreeSet<NodeKind>>,
    ) -> Result<RelationExtraction, ExtractionError> {
        let mut bindings = Bindings::new();
        bindings.insert("nodes".into(), node_block.to_string());
        bindings.insert("statements".into(), statement_block(batch));
        let response = self.complete(TemplateId::ExtractRelations, &bindings)?;
        let parsed = parse_structured_output(GrammarId::Relations, &response);
        let context = batch_context(TemplateId::ExtractRelations, batch);
        let mut diagnostics: Vec<Diagnostic> = parsed
            .malformed
            .iter()
            .map(|m| m.to_diagnostic(&context))
            .collect();
        if parsed.records.is_empty() && !diagnostics.is_empty() {
            return Err(ExtractionError::AllMalformed {
                template: TemplateId::ExtractRelations,
                diagnostics,
            });
        }

        let mut relations = Vec::new();
        for (line, record) in parsed.records {
            let Record::Relation {
                kind,
                src,
                relation,
                dst,
            } = record
            else {
                continue;
            };
            let src_kinds = kinds.get(&canonical_label(&src));
            let dst_kinds = kinds.get(&canonical_label(&dst));
            let (Some(src_kinds), Some(dst_kinds)) = (src_kinds, dst_kinds) else {
                let missing = if src_kinds.is_none() { &src } else { &dst };
                diagnostics.push(Diagnostic::new(
                    "unknown endpoint",
                    format!("{context} line {line}: label {missing:?} is not in the node list"),
                ));
                continue;
            };
            let has_event =
                src_kinds.contains(&NodeKind::Event) || dst_kinds.contains(&NodeKind::Event);
            if kind.requires_event() && !has_event {
                diagnostics.push(Diagnostic::new(
                    "taxonomy",
                    format!("{context} line {line}: {kind} relation {src:?} -> {dst:?} has no event endpoint"),
                ));
                continue;
            }
            relations.push(RawRelation {
                source_stmt_ids: attribute(batch, &[&src, &dst]),
                src_label: src,
                dst_label: dst,
                relation_label: relation,
                kind,
            });
        }
        Ok(RelationExtraction {
            relations,
            diagnostics,
        })
    }
}

fn statement_block(batch: &[RefinedStatement]) -> String {
    batch
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

fn batch_context(template: TemplateId, batch: &[RefinedStatement]) -> String {
    match (batch.first(), batch.last()) {
        (Some(first), Some(last)) => format!("{template} [{}..{}]", first.stmt_id, last.stmt_id),
        _ => template.to_string(),
    }
}

/// Statements of the batch mentioning every label; falls back to those
/// mentioning any label, then to the whole batch.
fn attribute(batch: &[RefinedStatement], labels: &[&str]) -> Vec<String> {
    let needles: Vec<String> = labels.iter().map(|l| canonical_label(l)).collect();
    let folded: Vec<String> = batch.iter().map(|s| canonical_label(&s.text)).collect();
    let pick = |all: bool| -> Vec<String> {
        batch
            .iter()
            .zip(&folded)
            .filter(|(_, text)| {
                if all {
                    needles.iter().all(|n| text.contains(n.as_str()))
                } else {
                    needles.iter().any(|n| text.contains(n.as_str()))
                }
            })
            .map(|(s, _)| s.stmt_id.clone())
            .collect()
    };
    let every = pick(true);
    if !every.is_empty() {
        return every;
    }
    let some = pick(false);
    if !some.is_empty() {
        return some;
    }
    batch.iter().map(|s| s.stmt_id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::GeneralKind;

    fn statements(texts: &[&str]) -> Vec<RefinedStatement> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| RefinedStatement {
                stmt_id: format!("d:s1:{i}"),
                doc_id: "d".into(),
                section_id: "s1".into(),
                order_index: i,
                text: t.to_string(),
            })
            .collect()
    }

    /// Returns a canned response regardless of the prompt.
    struct Canned(String);

    impl Backend for Canned {
        fn kind(&self) -> ProviderKind {
            ProviderKind::Deterministic
        }

        fn respond(
            &self,
            request: &PromptRequest<'_>,
            audit: &AuditLog,
        ) -> Result<String, ProviderError> {
            audit.record(ProviderExchange {
                template_id: request.template_id,
                rendered_prompt: request.rendered.to_string(),
                raw_response: self.0.clone(),
                latency_ms: 0,
                provider_kind: ProviderKind::Deterministic,
            });
            Ok(self.0.clone())
        }
    }

    fn canned(text: &str) -> ExtractionProvider {
        ExtractionProvider::new(Box::new(Canned(text.to_string())), TemplateSet::default())
    }

    #[test]
    fn deterministic_nodes_from_triplet() {
        let p = ExtractionProvider::deterministic();
        let out = p
            .extract_nodes(&statements(&["for loop | iterates | sequence"]))
            .unwrap();
        let got: Vec<_> = out
            .nodes
            .iter()
            .map(|n| (n.label.as_str(), n.kind))
            .collect();
        assert_eq!(
            got,
            [
                ("for loop", NodeKind::OBJECT),
                ("sequence", NodeKind::OBJECT)
            ]
        );
        assert_eq!(out.nodes[0].source_stmt_ids, ["d:s1:0"]);
    }

    #[test]
    fn empty_statement_list_is_a_precondition_error() {
        let p = ExtractionProvider::deterministic();
        assert!(matches!(
            p.extract_nodes(&[]),
            Err(ExtractionError::Precondition(_))
        ));
        assert!(matches!(
            p.extract_relations(&[], &[]),
            Err(ExtractionError::Precondition(_))
        ));
    }

    #[test]
    fn duplicate_labels_survive_extraction() {
        let p = ExtractionProvider::deterministic();
        let out = p
            .extract_nodes(&statements(&["list | holds | item", "List | has | length"]))
            .unwrap();
        let labels: Vec<_> = out.nodes.iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, ["list", "item", "List", "length"]);
    }

    #[test]
    fn batches_split_prompts() {
        let p = ExtractionProvider::deterministic().with_batch_size(2);
        let texts: Vec<String> = (0..5).map(|i| format!("a{i} | r | b{i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let out = p.extract_nodes(&statements(&refs)).unwrap();
        assert_eq!(out.nodes.len(), 10);
        assert_eq!(p.audit_log().len(), 3);
        assert_eq!(out.nodes[9].source_stmt_ids, ["d:s1:4"]);
    }

    #[test]
    fn all_malformed_batch_fails() {
        let p = canned("NODE\tobject\nnonsense");
        let err = p.extract_nodes(&statements(&["x"])).unwrap_err();
        match err {
            ExtractionError::AllMalformed { diagnostics, .. } => assert_eq!(diagnostics.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partially_malformed_batch_keeps_good_lines() {
        let p = canned("NODE\tperson\tGuido\nNODE\tobject");
        let out = p
            .extract_nodes(&statements(&["Guido designed Python"]))
            .unwrap();
        assert_eq!(out.nodes.len(), 1);
        assert_eq!(out.nodes[0].kind, NodeKind::General(GeneralKind::Person));
        assert_eq!(out.diagnostics[0].code, "arity");
    }

    #[test]
    fn deterministic_relation_from_triplet() {
        let p = ExtractionProvider::deterministic();
        let stmts = statements(&["for loop | iterates | sequence"]);
        let nodes = p.extract_nodes(&stmts).unwrap().nodes;
        let out = p.extract_relations(&nodes, &stmts).unwrap();
        assert_eq!(
            out.relations,
            vec![RawRelation {
                src_label: "for loop".into(),
                dst_label: "sequence".into(),
                relation_label: "iterates".into(),
                kind: EdgeKind::Semantic,
                source_stmt_ids: vec!["d:s1:0".into()],
            }]
        );
    }

    #[test]
    fn unknown_endpoint_is_dropped() {
        let p = canned("REL\tsemantic\ta\tlinks\tb\nREL\tsemantic\ta\tlinks\tghost");
        let nodes = vec![
            RawNode {
                label: "a".into(),
                kind: NodeKind::OBJECT,
                source_stmt_ids: vec!["x".into()],
            },
            RawNode {
                label: "B".into(),
                kind: NodeKind::OBJECT,
                source_stmt_ids: vec!["x".into()],
            },
        ];
        let out = p
            .extract_relations(&nodes, &statements(&["a links b"]))
            .unwrap();
        assert_eq!(out.relations.len(), 1);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].code, "unknown endpoint");
        assert!(out.diagnostics[0].message.contains("ghost"));
    }

    #[test]
    fn event_taxonomy_is_enforced() {
        let p = ExtractionProvider::deterministic();
        let stmts = statements(&[
            "setup@event | then:runs before | teardown@event",
            "rain | causes:wets | street",
        ]);
        let nodes = p.extract_nodes(&stmts).unwrap().nodes;
        let out = p.extract_relations(&nodes, &stmts).unwrap();
        assert_eq!(out.relations.len(), 1);
        assert_eq!(out.relations[0].kind, EdgeKind::Sequential);
        assert_eq!(out.diagnostics[0].code, "taxonomy");
    }

    #[test]
    fn missing_binding_makes_no_backend_call() {
        let p = ExtractionProvider::deterministic();
        let err = p
            .complete(TemplateId::Refine, &Bindings::new())
            .unwrap_err();
        assert!(matches!(
            err,
            ProviderError::Template(TemplateError::MissingBinding { .. })
        ));
        assert!(p.audit_log().is_empty());
    }

    #[test]
    fn every_call_is_audited_once() {
        let p = ExtractionProvider::deterministic();
        let mut b = Bindings::new();
        b.insert("heading".into(), "h".into());
        b.insert("section".into(), "One. Two.".into());
        let first = p.complete(TemplateId::Refine, &b).unwrap();
        let second = p.complete(TemplateId::Refine, &b).unwrap();
        assert_eq!(first, second);
        let log = p.audit_log();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].raw_response, first);
        assert_eq!(log[0].provider_kind, ProviderKind::Deterministic);
        assert!(log[0].rendered_prompt.contains("One. Two."));
    }
}
