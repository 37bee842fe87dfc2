//! Student responses turned into mastered-edge snapshots and cumulative
//! timelines.
//!
//! An edge is mastered when the student answers a question mapped to it
//! correctly; a node is mastered when it is an endpoint of a mastered edge.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::graph::{EdgeId, KnowledgeGraph, NodeId};
use crate::mapping::{order_course, Assessment, EdgeMapping, MappingError};
use crate::num::Scalar;

const HEADER: [&str; 4] = ["student_id", "assessment_id", "question_id", "chosen_index"];

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("responses header must be {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("responses line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("responses line {line}: question {assessment_id}/{question_id} does not exist")]
    Unresolved {
        line: u64,
        assessment_id: String,
        question_id: String,
    },
    #[error("duplicate response ({student_id}, {assessment_id}, {question_id})")]
    Duplicate {
        student_id: String,
        assessment_id: String,
        question_id: String,
    },
    #[error("responses line {line}: chosen_index {chosen} out of range for {options} options")]
    Range {
        line: u64,
        chosen: usize,
        options: usize,
    },
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("snapshot for {found} passed to the timeline of {expected}")]
    Foreign { expected: String, found: String },
    #[error("snapshots out of order at {assessment_id} (order_index {order_index})")]
    OutOfOrder {
        assessment_id: String,
        order_index: i64,
    },
    #[error(transparent)]
    Course(#[from] MappingError),
    #[error("mappings given for unknown assessment {0}")]
    UnknownAssessment(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub student_id: String,
    pub assessment_id: String,
    pub question_id: String,
    pub chosen_index: usize,
    pub is_correct: bool,
}

/// Reads a responses CSV and resolves every row against `assessments`.
/// A trailing `is_correct` column, as written by
/// [`write_response_store`], is accepted and recomputed.
pub fn read_responses<R: Read>(
    input: R,
    assessments: &[Assessment],
) -> Result<Vec<ResponseRecord>, ResponseError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| ResponseError::Row {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let fields: Vec<&str> = header.iter().collect();
    let header_ok = fields.len() >= 4
        && fields[..4] == HEADER
        && (fields.len() == 4 || (fields.len() == 5 && fields[4] == "is_correct"));
    if !header_ok {
        return Err(ResponseError::Header {
            expected: HEADER.join(","),
            found: fields.join(","),
        });
    }

    let by_id: HashMap<&str, &Assessment> = assessments
        .iter()
        .map(|a| (a.assessment_id.as_str(), a))
        .collect();
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| ResponseError::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let student_id = row[0].to_string();
        let assessment_id = row[1].to_string();
        let question_id = row[2].to_string();
        if student_id.is_empty() {
            return Err(ResponseError::Row {
                line,
                reason: "empty student_id".to_string(),
            });
        }
        let chosen_index: usize = row[3].parse().map_err(|_| ResponseError::Row {
            line,
            reason: format!("chosen_index {:?} is not a non-negative integer", &row[3]),
        })?;
        let question = by_id
            .get(assessment_id.as_str())
            .and_then(|a| a.question(&question_id))
            .ok_or_else(|| ResponseError::Unresolved {
                line,
                assessment_id: assessment_id.clone(),
                question_id: question_id.clone(),
            })?;
        if chosen_index >= question.options.len() {
            return Err(ResponseError::Range {
                line,
                chosen: chosen_index,
                options: question.options.len(),
            });
        }
        let key = (
            student_id.clone(),
            assessment_id.clone(),
            question_id.clone(),
        );
        if !seen.insert(key) {
            return Err(ResponseError::Duplicate {
                student_id,
                assessment_id,
                question_id,
            });
        }
        records.push(ResponseRecord {
            is_correct: chosen_index == question.correct_index,
            student_id,
            assessment_id,
            question_id,
            chosen_index,
        });
    }
    Ok(records)
}

pub fn record_responses(
    path: &Path,
    assessments: &[Assessment],
) -> Result<Vec<ResponseRecord>, ResponseError> {
    let file = File::open(path).map_err(|source| ResponseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_responses(file, assessments)
}

pub fn write_response_store<W: Write>(records: &[ResponseRecord], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(HEADER.iter().chain(&["is_correct"]))?;
    for r in records {
        writer.write_record([
            r.student_id.as_str(),
            &r.assessment_id,
            &r.question_id,
            &r.chosen_index.to_string(),
            if r.is_correct { "true" } else { "false" },
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Points per student: one per correct answer. Roster members without any
/// correct answer score zero.
pub fn total_scores(responses: &[ResponseRecord], roster: &[String]) -> BTreeMap<String, u32> {
    let mut scores: BTreeMap<String, u32> = roster.iter().map(|s| (s.clone(), 0)).collect();
    for r in responses.iter().filter(|r| r.is_correct) {
        *scores.entry(r.student_id.clone()).or_insert(0) += 1;
    }
    scores
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrajectorySnapshot {
    pub student_id: String,
    pub assessment_id: String,
    pub order_index: i64,
    pub mastered_edges: BTreeSet<EdgeId>,
    pub mastered_nodes: BTreeSet<NodeId>,
}

/// Marks the edges of every question `student_id` answered correctly.
///
/// A student with no responses gets an empty snapshot plus an `absent`
/// diagnostic.
pub fn build_snapshot(
    graph: &KnowledgeGraph,
    student_id: &str,
    assessment: &Assessment,
    mappings: &[EdgeMapping],
    responses: &[ResponseRecord],
) -> (TrajectorySnapshot, Option<Diagnostic>) {
    let by_question: HashMap<&str, &EdgeMapping> = mappings
        .iter()
        .filter(|m| m.assessment_id == assessment.assessment_id && !m.unmapped)
        .map(|m| (m.question_id.as_str(), m))
        .collect();
    let mut answered = false;
    let mut mastered_edges = BTreeSet::new();
    for r in responses
        .iter()
        .filter(|r| r.student_id == student_id && r.assessment_id == assessment.assessment_id)
    {
        answered = true;
        if !r.is_correct {
            continue;
        }
        if let Some(mapping) = by_question.get(r.question_id.as_str()) {
            mastered_edges.extend(mapping.edge_ids.iter().filter(|e| graph.contains_edge(**e)));
        }
    }
    let diagnostic = (!answered).then(|| {
        Diagnostic::new(
            "absent",
            format!(
                "{student_id} has no responses for {}",
                assessment.assessment_id
            ),
        )
    });
    let snapshot = TrajectorySnapshot {
        student_id: student_id.to_string(),
        assessment_id: assessment.assessment_id.clone(),
        order_index: assessment.order_index,
        mastered_nodes: graph.endpoint_closure(&mastered_edges),
        mastered_edges,
    };
    (snapshot, diagnostic)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry<S: Scalar = f64> {
    pub assessment_id: String,
    pub order_index: i64,
    pub cumulative_edges: BTreeSet<EdgeId>,
    pub cumulative_nodes: BTreeSet<NodeId>,
    /// |cumulative nodes| / graph node count.
    pub coverage: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryTimeline<S: Scalar = f64> {
    pub student_id: String,
    pub entries: Vec<TimelineEntry<S>>,
    /// Node-count delta between consecutive cumulative entries; the first
    /// entry's delta is its own size.
    pub growth: Vec<usize>,
    /// The same delta expressed as a fraction of the graph's nodes.
    pub coverage_growth: Vec<S>,
}

/// Accumulates per-assessment snapshots (already in course order) into a
/// cumulative timeline.
pub fn build_timeline<S: Scalar>(
    student_id: &str,
    snapshots: &[TrajectorySnapshot],
    node_count: usize,
) -> Result<TrajectoryTimeline<S>, TrajectoryError> {
    let mut timeline: TrajectoryTimeline<S> = TrajectoryTimeline {
        student_id: student_id.to_string(),
        entries: Vec::with_capacity(snapshots.len()),
        growth: Vec::with_capacity(snapshots.len()),
        coverage_growth: Vec::with_capacity(snapshots.len()),
    };
    let mut edges = BTreeSet::new();
    let mut nodes = BTreeSet::new();
    let mut previous: Option<i64> = None;
    for snapshot in snapshots {
        if snapshot.student_id != student_id {
            return Err(TrajectoryError::Foreign {
                expected: student_id.to_string(),
                found: snapshot.student_id.clone(),
            });
        }
        if previous.is_some_and(|p| snapshot.order_index <= p) {
            return Err(TrajectoryError::OutOfOrder {
                assessment_id: snapshot.assessment_id.clone(),
                order_index: snapshot.order_index,
            });
        }
        previous = Some(snapshot.order_index);

        let before = nodes.len();
        edges.extend(snapshot.mastered_edges.iter().copied());
        nodes.extend(snapshot.mastered_nodes.iter().copied());
        let coverage = S::ratio(nodes.len(), node_count);
        let prior = timeline
            .entries
            .last()
            .map(|e| e.coverage.clone())
            .unwrap_or_else(S::zero);
        timeline.growth.push(nodes.len() - before);
        timeline.coverage_growth.push(coverage.clone() - prior);
        timeline.entries.push(TimelineEntry {
            assessment_id: snapshot.assessment_id.clone(),
            order_index: snapshot.order_index,
            cumulative_edges: edges.clone(),
            cumulative_nodes: nodes.clone(),
            coverage,
        });
    }
    Ok(timeline)
}

impl<S: Scalar> TrajectoryTimeline<S> {
    pub fn entry(&self, assessment_id: &str) -> Option<&TimelineEntry<S>> {
        self.entries
            .iter()
            .find(|e| e.assessment_id == assessment_id)
    }

    /// Cumulative nodes mastered strictly before `order_index`.
    pub fn nodes_before(&self, order_index: i64) -> Option<&BTreeSet<NodeId>> {
        self.entries
            .iter()
            .take_while(|e| e.order_index < order_index)
            .last()
            .map(|e| &e.cumulative_nodes)
    }
}

/// Assessments in course order with their mappings.
#[derive(Debug, Clone, PartialEq)]
pub struct Course {
    pub assessments: Vec<Assessment>,
    pub mappings: BTreeMap<String, Vec<EdgeMapping>>,
}

impl Course {
    pub fn new(
        assessments: Vec<Assessment>,
        mappings: BTreeMap<String, Vec<EdgeMapping>>,
    ) -> Result<Self, TrajectoryError> {
        let assessments = order_course(assessments)?;
        if let Some(unknown) = mappings
            .keys()
            .find(|id| !assessments.iter().any(|a| &a.assessment_id == *id))
        {
            return Err(TrajectoryError::UnknownAssessment(unknown.clone()));
        }
        Ok(Course {
            assessments,
            mappings,
        })
    }

    pub fn assessment(&self, assessment_id: &str) -> Option<&Assessment> {
        self.assessments
            .iter()
            .find(|a| a.assessment_id == assessment_id)
    }

    pub fn mappings_for(&self, assessment_id: &str) -> &[EdgeMapping] {
        self.mappings
            .get(assessment_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Snapshots and timelines for a whole roster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort<S: Scalar = f64> {
    pub roster: Vec<String>,
    /// Per student, one non-cumulative snapshot per assessment in course order.
    pub snapshots: BTreeMap<String, Vec<TrajectorySnapshot>>,
    pub timelines: BTreeMap<String, TrajectoryTimeline<S>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<S: Scalar> Cohort<S> {
    pub fn snapshot(&self, student_id: &str, assessment_id: &str) -> Option<&TrajectorySnapshot> {
        self.snapshots
            .get(student_id)?
            .iter()
            .find(|s| s.assessment_id == assessment_id)
    }

    /// Every student's snapshot for one assessment, in roster order.
    pub fn snapshots_for(&self, assessment_id: &str) -> Vec<&TrajectorySnapshot> {
        self.roster
            .iter()
            .filter_map(|s| self.snapshot(s, assessment_id))
            .collect()
    }
}

/// Students appearing in `responses`, sorted.
pub fn roster_from(responses: &[ResponseRecord]) -> Vec<String> {
    let ids: BTreeSet<&str> = responses.iter().map(|r| r.student_id.as_str()).collect();
    ids.into_iter().map(str::to_string).collect()
}

/// Builds every student's snapshots and timeline. Students are independent
/// and processed in parallel; output order follows the roster.
pub fn build_cohort<S: Scalar>(
    graph: &KnowledgeGraph,
    course: &Course,
    responses: &[ResponseRecord],
    roster: &[String],
) -> Result<Cohort<S>, TrajectoryError> {
    let mut by_student: HashMap<&str, Vec<ResponseRecord>> = HashMap::new();
    for r in responses {
        by_student
            .entry(r.student_id.as_str())
            .or_default()
            .push(r.clone());
    }
    let empty = Vec::new();
    let per_student: Vec<(
        Vec<TrajectorySnapshot>,
        Vec<Diagnostic>,
        TrajectoryTimeline<S>,
    )> = roster
        .par_iter()
        .map(|student| {
            let mine = by_student.get(student.as_str()).unwrap_or(&empty);
            let mut snapshots = Vec::with_capacity(course.assessments.len());
            let mut diagnostics = Vec::new();
            for assessment in &course.assessments {
                let (snapshot, diagnostic) = build_snapshot(
                    graph,
                    student,
                    assessment,
                    course.mappings_for(&assessment.assessment_id),
                    mine,
                );
                snapshots.push(snapshot);
                diagnostics.extend(diagnostic);
            }
            let timeline = build_timeline(student, &snapshots, graph.node_count())?;
            Ok((snapshots, diagnostics, timeline))
        })
        .collect::<Result<_, TrajectoryError>>()?;

    let mut cohort = Cohort {
        roster: roster.to_vec(),
        snapshots: BTreeMap::new(),
        timelines: BTreeMap::new(),
        diagnostics: Vec::new(),
    };
    for (student, (snapshots, diagnostics, timeline)) in roster.iter().zip(per_student) {
        cohort.snapshots.insert(student.clone(), snapshots);
        cohort.timelines.insert(student.clone(), timeline);
        cohort.diagnostics.extend(diagnostics);
    }
    Ok(cohort)
}
