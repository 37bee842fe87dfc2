//! Assessments and the mapping of multiple-choice questions onto graph edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::graph::{EdgeId, KnowledgeGraph};
use crate::provider::{
    parse_structured_output, Bindings, ExtractionProvider, GrammarId, ProviderError, Record,
    TemplateId,
};

/// Default lexical match threshold.
pub const DEFAULT_TAU: f64 = 0.3;
/// Default ceiling on the fraction of unmapped questions per assessment.
pub const DEFAULT_UNMAPPED_CEILING: f64 = 0.25;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed question bank: {0}")]
    Malformed(String),
    #[error("invalid assessment {assessment_id}: {reason}")]
    Invalid {
        assessment_id: String,
        reason: String,
    },
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("mapping of {assessment_id} aborted: {source}")]
    Provider {
        assessment_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("mappings line {line}: {reason}")]
    MappingLine { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    PreTest,
    Quiz(u32),
    Midterm,
    PostTest,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::PreTest => f.write_str("pre_test"),
            Phase::Quiz(n) => write!(f, "quiz:{n}"),
            Phase::Midterm => f.write_str("midterm"),
            Phase::PostTest => f.write_str("post_test"),
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    /// Accepts `pre_test`, `midterm`, `post_test`, `quiz:<n>` and the
    /// spelling variants `PreTest`, `pre-test`, `Quiz(2)`, `quiz-2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .collect::<String>()
            .to_lowercase();
        match folded.as_str() {
            "pretest" => return Ok(Phase::PreTest),
            "midterm" => return Ok(Phase::Midterm),
            "posttest" => return Ok(Phase::PostTest),
            _ => {}
        }
        let number = folded.strip_prefix("quiz").map(|rest| {
            rest.trim_start_matches(':')
                .trim_start_matches('(')
                .trim_end_matches(')')
        });
        match number.and_then(|n| n.parse().ok()) {
            Some(n) => Ok(Phase::Quiz(n)),
            None => Err(format!("unknown assessment phase {s:?}")),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

impl Question {
    pub fn correct_option(&self) -> &str {
        &self.options[self.correct_index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub assessment_id: String,
    pub phase: Phase,
    pub order_index: i64,
    pub questions: Vec<Question>,
}

impl Assessment {
    pub fn validate(&self) -> Result<(), MappingError> {
        let invalid = |reason: String| MappingError::Invalid {
            assessment_id: self.assessment_id.clone(),
            reason,
        };
        let mut ids = BTreeSet::new();
        for q in &self.questions {
            if !ids.insert(q.question_id.as_str()) {
                return Err(invalid(format!("duplicate question_id {}", q.question_id)));
            }
            if q.options.len() < 2 {
                return Err(invalid(format!(
                    "{} has fewer than 2 options",
                    q.question_id
                )));
            }
            if q.correct_index >= q.options.len() {
                return Err(invalid(format!(
                    "{} correct_index {} out of range for {} options",
                    q.question_id,
                    q.correct_index,
                    q.options.len()
                )));
            }
            let distinct: BTreeSet<&str> = q.options.iter().map(String::as_str).collect();
            if distinct.len() != q.options.len() {
                return Err(invalid(format!("{} repeats an option", q.question_id)));
            }
        }
        Ok(())
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }
}

pub fn parse_assessment(text: &str) -> Result<Assessment, MappingError> {
    let assessment: Assessment =
        serde_json::from_str(text).map_err(|e| MappingError::Malformed(e.to_string()))?;
    assessment.validate()?;
    Ok(assessment)
}

pub fn load_assessment(path: &Path) -> Result<Assessment, MappingError> {
    let text = fs::read_to_string(path).map_err(|source| MappingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_assessment(&text).map_err(|e| match e {
        MappingError::Malformed(reason) => {
            MappingError::Malformed(format!("{}: {reason}", path.display()))
        }
        other => other,
    })
}

/// Sorts a course's assessments chronologically, rejecting repeated ids or
/// order indices.
pub fn order_course(mut assessments: Vec<Assessment>) -> Result<Vec<Assessment>, MappingError> {
    assessments.sort_by_key(|a| a.order_index);
    for pair in assessments.windows(2) {
        if pair[0].order_index == pair[1].order_index {
            return Err(MappingError::Invalid {
                assessment_id: pair[1].assessment_id.clone(),
                reason: format!(
                    "order_index {} shared with {}",
                    pair[1].order_index, pair[0].assessment_id
                ),
            });
        }
    }
    let mut ids = BTreeSet::new();
    for a in &assessments {
        if !ids.insert(a.assessment_id.as_str()) {
            return Err(MappingError::Invalid {
                assessment_id: a.assessment_id.clone(),
                reason: "assessment_id used twice".to_string(),
            });
        }
    }
    Ok(assessments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingMethod {
    Provider,
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMapping {
    pub assessment_id: String,
    pub question_id: String,
    pub edge_ids: BTreeSet<EdgeId>,
    pub method: MappingMethod,
    pub confidence: f64,
    /// Chain-of-thought text from the provider, kept verbatim and never
    /// interpreted.
    pub rationale: String,
    #[serde(default)]
    pub unmapped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MappingOutcome {
    /// One entry per question, in question order; unmapped ones flagged.
    pub mappings: Vec<EdgeMapping>,
    pub unmapped: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingConfig {
    pub tau: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig { tau: DEFAULT_TAU }
    }
}

/// Case-folded alphanumeric runs.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// |A ∩ B| / |A ∪ B|, with two empty sets scoring 1.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn edge_tokens(graph: &KnowledgeGraph, edge: EdgeId) -> BTreeSet<String> {
    let e = graph.edge(edge).expect("edge from graph");
    let src = &graph.node(e.src).map(|n| n.label.as_str()).unwrap_or("");
    let dst = &graph.node(e.dst).map(|n| n.label.as_str()).unwrap_or("");
    tokenize(&format!("{src} {} {dst}", e.relation_label))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalMatch {
    pub edges: BTreeSet<EdgeId>,
    /// Highest score among the returned edges; 0 when none match.
    pub confidence: f64,
}

/// Scores every edge by token Jaccard against the stem plus correct option.
/// Distractor options contribute nothing.
pub fn lexical_match(
    question: &Question,
    graph: &KnowledgeGraph,
    tau: f64,
) -> Result<LexicalMatch, MappingError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(MappingError::Threshold(tau));
    }
    let tokens = tokenize(&format!("{} {}", question.stem, question.correct_option()));
    let mut result = LexicalMatch {
        edges: BTreeSet::new(),
        confidence: 0.0,
    };
    if tokens.is_empty() {
        return Ok(result);
    }
    for edge in graph.edges() {
        let score = jaccard(&tokens, &edge_tokens(graph, edge.id));
        if score >= tau {
            result.edges.insert(edge.id);
            result.confidence = result.confidence.max(score);
        }
    }
    Ok(result)
}

/// Edge catalog lines: `edge_id<TAB>src<TAB>relation<TAB>dst`.
pub fn edge_catalog(graph: &KnowledgeGraph) -> String {
    graph
        .edges()
        .map(|e| {
            let label = |id| graph.node(id).map(|n| n.label.as_str()).unwrap_or("");
            format!(
                "{}\t{}\t{}\t{}",
                e.id,
                label(e.src),
                e.relation_label,
                label(e.dst)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn question_bindings(question: &Question, catalog: &str) -> Bindings {
    let options = question
        .options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{i}. {o}"))
        .collect::<Vec<_>>()
        .join("\n");
    let mut bindings = Bindings::new();
    bindings.insert("stem".into(), question.stem.clone());
    bindings.insert("options".into(), options);
    bindings.insert("answer".into(), question.correct_option().to_string());
    bindings.insert("edges".into(), catalog.to_string());
    bindings
}

fn map_question(
    assessment_id: &str,
    question: &Question,
    graph: &KnowledgeGraph,
    provider: &ExtractionProvider,
    catalog: &str,
    tau: f64,
) -> Result<(EdgeMapping, Vec<Diagnostic>), ProviderError> {
    let response = provider.complete(
        TemplateId::MapQuestion,
        &question_bindings(question, catalog),
    )?;
    let parsed = parse_structured_output(GrammarId::EdgeSelection, &response);
    let context = format!("{assessment_id}/{} MAP_QUESTION", question.question_id);
    let mut diagnostics: Vec<Diagnostic> = parsed
        .malformed
        .iter()
        .map(|m| m.to_diagnostic(&context))
        .collect();

    let mut edges = BTreeSet::new();
    let mut rationale = Vec::new();
    let mut confidence = None;
    for (line, record) in parsed.records {
        match record {
            Record::Edge(id) if graph.contains_edge(id) => {
                edges.insert(id);
            }
            Record::Edge(id) => diagnostics.push(Diagnostic::new(
                "unknown edge",
                format!("{context} line {line}: {id} is not in the graph"),
            )),
            Record::Confidence(x) => confidence = Some(x),
            Record::Rationale(text) => rationale.push(text),
            _ => {}
        }
    }
    let rationale = rationale.join("\n");

    if !edges.is_empty() {
        let mapping = EdgeMapping {
            assessment_id: assessment_id.to_string(),
            question_id: question.question_id.clone(),
            edge_ids: edges,
            method: MappingMethod::Provider,
            confidence: confidence.unwrap_or(1.0),
            rationale,
            unmapped: false,
        };
        return Ok((mapping, diagnostics));
    }

    let fallback = lexical_match(question, graph, tau).expect("threshold checked by caller");
    let unmapped = fallback.edges.is_empty();
    let mapping = EdgeMapping {
        assessment_id: assessment_id.to_string(),
        question_id: question.question_id.clone(),
        edge_ids: fallback.edges,
        method: MappingMethod::Lexical,
        confidence: fallback.confidence,
        rationale,
        unmapped,
    };
    Ok((mapping, diagnostics))
}

/// Maps every question of `assessment` onto graph edges: provider first,
/// lexical matching when the provider names no known edge.
///
/// A terminal provider failure aborts the whole assessment.
pub fn map_assessment(
    assessment: &Assessment,
    graph: &KnowledgeGraph,
    provider: &ExtractionProvider,
    config: &MappingConfig,
) -> Result<MappingOutcome, MappingError> {
    if !(config.tau > 0.0 && config.tau <= 1.0) {
        return Err(MappingError::Threshold(config.tau));
    }
    let catalog = edge_catalog(graph);
    let results: Vec<(EdgeMapping, Vec<Diagnostic>)> = assessment
        .questions
        .par_iter()
        .map(|q| {
            map_question(
                &assessment.assessment_id,
                q,
                graph,
                provider,
                &catalog,
                config.tau,
            )
        })
        .collect::<Result<_, _>>()
        .map_err(|source| MappingError::Provider {
            assessment_id: assessment.assessment_id.clone(),
            source,
        })?;

    let mut outcome = MappingOutcome::default();
    for (mapping, diagnostics) in results {
        if mapping.unmapped {
            outcome.unmapped.push(mapping.question_id.clone());
        }
        outcome.mappings.push(mapping);
        outcome.diagnostics.extend(diagnostics);
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingValidation {
    pub diagnostics: Vec<Diagnostic>,
    pub unmapped_rate: f64,
}

/// Checks mapping invariants against the graph and the assessment.
/// Questions without any mapping entry count as unmapped.
pub fn validate_mappings(
    mappings: &[EdgeMapping],
    graph: &KnowledgeGraph,
    assessment: &Assessment,
    unmapped_ceiling: f64,
) -> MappingValidation {
    let mut diagnostics = Vec::new();
    let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
    for m in mappings {
        if m.assessment_id != assessment.assessment_id {
            diagnostics.push(Diagnostic::new(
                "foreign mapping",
                format!(
                    "{} belongs to {}, not {}",
                    m.question_id, m.assessment_id, assessment.assessment_id
                ),
            ));
            continue;
        }
        if assessment.question(&m.question_id).is_none() {
            diagnostics.push(Diagnostic::new(
                "unknown question",
                format!("{} is not in {}", m.question_id, assessment.assessment_id),
            ));
            continue;
        }
        if seen.insert(&m.question_id, m.unmapped).is_some() {
            diagnostics.push(Diagnostic::new(
                "duplicate mapping",
                format!("{} mapped twice", m.question_id),
            ));
        }
        for edge in m.edge_ids.iter().filter(|e| !graph.contains_edge(**e)) {
            diagnostics.push(Diagnostic::new(
                "missing edge",
                format!(
                    "{} maps to {edge}, which is not in the graph",
                    m.question_id
                ),
            ));
        }
        if m.edge_ids.is_empty() && !m.unmapped {
            diagnostics.push(Diagnostic::new(
                "empty mapping",
                format!("{} has no edges but is not flagged unmapped", m.question_id),
            ));
        }
        if !m.edge_ids.is_empty() && m.unmapped {
            diagnostics.push(Diagnostic::new(
                "inconsistent mapping",
                format!("{} is flagged unmapped but lists edges", m.question_id),
            ));
        }
        if !(0.0..=1.0).contains(&m.confidence) {
            diagnostics.push(Diagnostic::new(
                "confidence",
                format!(
                    "{} confidence {} outside [0, 1]",
                    m.question_id, m.confidence
                ),
            ));
        }
    }

    let total = assessment.questions.len();
    let unmapped = assessment
        .questions
        .iter()
        .filter(|q| seen.get(q.question_id.as_str()).copied().unwrap_or(true))
        .count();
    let unmapped_rate = if total == 0 {
        0.0
    } else {
        unmapped as f64 / total as f64
    };
    if unmapped_rate > unmapped_ceiling {
        diagnostics.push(Diagnostic::new(
            "unmapped ceiling",
            format!(
                "{}: {unmapped} of {total} questions unmapped ({unmapped_rate}), ceiling {unmapped_ceiling}",
                assessment.assessment_id
            ),
        ));
    }
    MappingValidation {
        diagnostics,
        unmapped_rate,
    }
}

pub fn write_mappings_jsonl<W: Write>(mappings: &[EdgeMapping], mut out: W) -> std::io::Result<()> {
    for m in mappings {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_mappings_jsonl<R: BufRead>(input: R) -> Result<Vec<EdgeMapping>, MappingError> {
    let mut out = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line.map_err(|e| MappingError::MappingLine {
            line: index + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mapping = serde_json::from_str(&line).map_err(|e| MappingError::MappingLine {
            line: index + 1,
            reason: e.to_string(),
        })?;
        out.push(mapping);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::provider::{
        AuditLog, Backend, PromptRequest, ProviderExchange, ProviderKind, RawNode, RawRelation,
        TemplateSet,
    };
    use crate::taxonomy::{EdgeKind, NodeKind};

    fn set(tokens: &[&str]) -> BTreeSet<String> {
        tokens.iter().map(|t| t.to_string()).collect()
    }

    fn graph(triplets: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let mut nodes = Vec::new();
        let mut rels = Vec::new();
        for (s, r, d) in triplets {
            for label in [s, d] {
                nodes.push(RawNode {
                    label: label.to_string(),
                    kind: NodeKind::OBJECT,
                    source_stmt_ids: vec!["x".into()],
                });
            }
            rels.push(RawRelation {
                src_label: s.to_string(),
                dst_label: d.to_string(),
                relation_label: r.to_string(),
                kind: EdgeKind::Semantic,
                source_stmt_ids: vec!["x".into()],
            });
        }
        build_graph(&nodes, &rels).0
    }

    fn question(id: &str, stem: &str, options: &[&str], correct: usize) -> Question {
        Question {
            question_id: id.into(),
            stem: stem.into(),
            options: options.iter().map(|o| o.to_string()).collect(),
            correct_index: correct,
        }
    }

    fn assessment(questions: Vec<Question>) -> Assessment {
        Assessment {
            assessment_id: "mid".into(),
            phase: Phase::Midterm,
            order_index: 2,
            questions,
        }
    }

    #[test]
    fn jaccard_hand_values() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["b", "a"])), 1.0);
        let score = jaccard(&set(&["a", "b", "c", "d"]), &set(&["c", "d", "e", "f"]));
        assert!((score - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
    }

    #[test]
    fn tokenize_folds_case_and_splits_punctuation() {
        assert_eq!(
            tokenize("For-loop, ITERATES (sequence)!"),
            set(&["for", "loop", "iterates", "sequence"])
        );
        assert!(tokenize(" ?! ").is_empty());
    }

    #[test]
    fn lexical_threshold_semantics() {
        let g = graph(&[("c", "d", "e f")]);
        let q = question("q", "a b c", &["d", "zzz"], 0);
        // {a,b,c,d} vs {c,d,e,f}
        let loose = lexical_match(&q, &g, 0.3).unwrap();
        assert_eq!(loose.edges, BTreeSet::from([EdgeId(1)]));
        assert!((loose.confidence - 1.0 / 3.0).abs() < 1e-12);
        assert!(lexical_match(&q, &g, 0.5).unwrap().edges.is_empty());
        assert!(matches!(
            lexical_match(&q, &g, 0.0),
            Err(MappingError::Threshold(_))
        ));
        assert!(matches!(
            lexical_match(&q, &g, 1.5),
            Err(MappingError::Threshold(_))
        ));
    }

    #[test]
    fn distractors_do_not_count() {
        let g = graph(&[("list", "holds", "item")]);
        let q = question("q", "what is it", &["nothing", "list holds item"], 0);
        assert!(lexical_match(&q, &g, 0.3).unwrap().edges.is_empty());
    }

    #[test]
    fn stem_matching_an_edge_maps_via_fallback_or_provider() {
        let g = graph(&[
            ("for loop", "iterates", "sequence"),
            ("list", "holds", "item"),
        ]);
        let a = assessment(vec![
            question(
                "q1",
                "The for loop iterates sequence",
                &["true", "false"],
                0,
            ),
            question("q2", "Unrelated astronomy", &["stars", "moons"], 1),
        ]);
        let provider = ExtractionProvider::deterministic();
        let out = map_assessment(&a, &g, &provider, &MappingConfig::default()).unwrap();
        assert_eq!(out.mappings[0].edge_ids, BTreeSet::from([EdgeId(1)]));
        assert_eq!(out.unmapped, ["q2"]);
        assert!(out.mappings[1].unmapped);
        // {the, for, loop, iterates, sequence, true} vs {for, loop, iterates, sequence}
        assert!((out.mappings[0].confidence - 4.0 / 6.0).abs() < 1e-12);
    }

    struct Says(&'static str);

    impl Backend for Says {
        fn kind(&self) -> ProviderKind {
            ProviderKind::Remote
        }

        fn respond(
            &self,
            request: &PromptRequest<'_>,
            audit: &AuditLog,
        ) -> Result<String, ProviderError> {
            audit.record(ProviderExchange {
                template_id: request.template_id,
                rendered_prompt: request.rendered.into(),
                raw_response: self.0.into(),
                latency_ms: 0,
                provider_kind: ProviderKind::Remote,
            });
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn unknown_provider_edge_triggers_fallback() {
        let g = graph(&[("for loop", "iterates", "sequence")]);
        let a = assessment(vec![question(
            "q1",
            "for loop iterates sequence",
            &["yes", "no"],
            0,
        )]);
        let provider = ExtractionProvider::new(
            Box::new(Says("Looks like loops.\nEDGE\te42")),
            TemplateSet::default(),
        );
        let out = map_assessment(&a, &g, &provider, &MappingConfig::default()).unwrap();
        assert_eq!(out.mappings[0].method, MappingMethod::Lexical);
        assert_eq!(out.mappings[0].edge_ids, BTreeSet::from([EdgeId(1)]));
        assert_eq!(out.mappings[0].rationale, "Looks like loops.");
        assert_eq!(out.diagnostics[0].code, "unknown edge");
        assert!(out.diagnostics[0].message.contains("e42"));
    }

    #[test]
    fn provider_edges_win_and_keep_confidence() {
        let g = graph(&[("a", "r", "b"), ("c", "r", "d")]);
        let a = assessment(vec![question("q1", "nothing lexical", &["x", "y"], 0)]);
        let provider = ExtractionProvider::new(
            Box::new(Says("Step 1.\nStep 2.\nEDGE\te2\nCONFIDENCE\t0.6")),
            TemplateSet::default(),
        );
        let out = map_assessment(&a, &g, &provider, &MappingConfig::default()).unwrap();
        let m = &out.mappings[0];
        assert_eq!(m.method, MappingMethod::Provider);
        assert_eq!(m.edge_ids, BTreeSet::from([EdgeId(2)]));
        assert_eq!(m.confidence, 0.6);
        assert_eq!(m.rationale, "Step 1.\nStep 2.");
    }

    #[test]
    fn validation_reports_rate_and_existence() {
        let g = graph(&[("a", "r", "b")]);
        let questions: Vec<Question> = (0..10)
            .map(|i| question(&format!("q{i}"), "a r b", &["x", "y"], 0))
            .collect();
        let a = assessment(questions);
        let mapping = |i: usize, edges: &[u32]| EdgeMapping {
            assessment_id: "mid".into(),
            question_id: format!("q{i}"),
            edge_ids: edges.iter().map(|e| EdgeId(*e)).collect(),
            method: MappingMethod::Lexical,
            confidence: 1.0,
            rationale: String::new(),
            unmapped: edges.is_empty(),
        };

        let all: Vec<_> = (0..10).map(|i| mapping(i, &[1])).collect();
        let v = validate_mappings(&all, &g, &a, DEFAULT_UNMAPPED_CEILING);
        assert!(v.diagnostics.is_empty());
        assert_eq!(v.unmapped_rate, 0.0);

        let some: Vec<_> = (0..10)
            .map(|i| mapping(i, if i < 3 { &[] } else { &[1] }))
            .collect();
        let v = validate_mappings(&some, &g, &a, DEFAULT_UNMAPPED_CEILING);
        assert_eq!(v.unmapped_rate, 0.3);
        assert_eq!(v.diagnostics.len(), 1);
        assert_eq!(v.diagnostics[0].code, "unmapped ceiling");

        let mut dangling = all.clone();
        dangling[4].edge_ids.insert(EdgeId(7));
        let v = validate_mappings(&dangling, &g, &a, DEFAULT_UNMAPPED_CEILING);
        assert_eq!(v.diagnostics[0].code, "missing edge");
    }

    #[test]
    fn bank_validation() {
        let bad = r#"{"assessment_id":"a","phase":"midterm","order_index":1,
            "questions":[{"question_id":"q","stem":"s","options":["x","x"],"correct_index":0}]}"#;
        assert!(matches!(
            parse_assessment(bad),
            Err(MappingError::Invalid { .. })
        ));
        let bad = r#"{"assessment_id":"a","phase":"midterm","order_index":1,
            "questions":[{"question_id":"q","stem":"s","options":["x","y"],"correct_index":2}]}"#;
        assert!(matches!(
            parse_assessment(bad),
            Err(MappingError::Invalid { .. })
        ));
        let ok = r#"{"assessment_id":"a","phase":"Quiz(3)","order_index":1,
            "questions":[{"question_id":"q","stem":"s","options":["x","y"],"correct_index":1}]}"#;
        assert_eq!(parse_assessment(ok).unwrap().phase, Phase::Quiz(3));
    }

    #[test]
    fn phase_spellings() {
        for (text, phase) in [
            ("pre_test", Phase::PreTest),
            ("PreTest", Phase::PreTest),
            ("post-test", Phase::PostTest),
            ("Midterm", Phase::Midterm),
            ("quiz:2", Phase::Quiz(2)),
            ("quiz-4", Phase::Quiz(4)),
        ] {
            assert_eq!(text.parse::<Phase>().unwrap(), phase);
            assert_eq!(phase.to_string().parse::<Phase>().unwrap(), phase);
        }
        assert!("final".parse::<Phase>().is_err());
    }

    #[test]
    fn course_order_rejects_ties() {
        let mut a = assessment(vec![]);
        let mut b = a.clone();
        b.assessment_id = "post".into();
        assert!(order_course(vec![a.clone(), b.clone()]).is_err());
        b.order_index = 1;
        a.order_index = 5;
        let ordered = order_course(vec![a, b]).unwrap();
        assert_eq!(ordered[0].assessment_id, "post");
    }

    #[test]
    fn jsonl_round_trip() {
        let m = EdgeMapping {
            assessment_id: "mid".into(),
            question_id: "q1".into(),
            edge_ids: BTreeSet::from([EdgeId(3), EdgeId(1)]),
            method: MappingMethod::Provider,
            confidence: 0.5,
            rationale: "line one\nline two".into(),
            unmapped: false,
        };
        let mut buf = Vec::new();
        write_mappings_jsonl(std::slice::from_ref(&m), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"edge_ids\":[\"e1\",\"e3\"]"));
        assert_eq!(
            read_mappings_jsonl(std::io::Cursor::new(buf)).unwrap(),
            vec![m]
        );
    }
}
