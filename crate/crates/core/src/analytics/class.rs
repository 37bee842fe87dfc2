use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{AnalyticsError, CoverageReport};
use crate::graph::{colors, KnowledgeGraph, NodeId};
use crate::num::{mean, Percent, Scalar};
use crate::trajectory::{Course, TrajectorySnapshot, TrajectoryTimeline};

/// Class-level mastery for one assessment. Denominators are the full roster,
/// absentees included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassProfile<S: Scalar = f64> {
    pub assessment_id: String,
    pub roster_size: usize,
    /// Fraction of the roster mastering each graph node.
    pub node_mastery: BTreeMap<NodeId, S>,
    /// Mean over students of |mastered| / graph node count.
    pub mean_coverage: S,
    /// Mean over students of MasteryCoverage on the assessment's covered nodes.
    pub mean_mastery_coverage: S,
    pub mean_mastery_percent: Percent,
}

pub fn class_profile<S: Scalar>(
    graph: &KnowledgeGraph,
    coverage: &CoverageReport<S>,
    snapshots: &[&TrajectorySnapshot],
    roster: &[String],
) -> Result<ClassProfile<S>, AnalyticsError> {
    if roster.is_empty() {
        return Err(AnalyticsError::EmptyRoster);
    }
    if coverage.graph != graph.stamp() {
        return Err(AnalyticsError::GraphMismatch);
    }
    let members: BTreeSet<&str> = roster.iter().map(String::as_str).collect();
    let mut by_student: BTreeMap<&str, &TrajectorySnapshot> = BTreeMap::new();
    for snapshot in snapshots {
        if snapshot.assessment_id != coverage.assessment_id {
            return Err(AnalyticsError::ScopeMismatch {
                expected: coverage.assessment_id.clone(),
                found: snapshot.assessment_id.clone(),
            });
        }
        if !members.contains(snapshot.student_id.as_str()) {
            return Err(AnalyticsError::ForeignStudent(snapshot.student_id.clone()));
        }
        by_student.insert(&snapshot.student_id, snapshot);
    }

    let mut counts: BTreeMap<NodeId, usize> = graph.node_ids().map(|n| (n, 0)).collect();
    let mut coverages = Vec::with_capacity(members.len());
    let mut masteries = Vec::with_capacity(members.len());
    for student in &members {
        let mastered = by_student
            .get(student)
            .map(|s| &s.mastered_nodes)
            .cloned()
            .unwrap_or_default();
        for node in &mastered {
            if let Some(count) = counts.get_mut(node) {
                *count += 1;
            }
        }
        coverages.push(S::ratio(mastered.len(), graph.node_count()));
        let hit = mastered.intersection(&coverage.covered_nodes).count();
        masteries.push(S::ratio(hit, coverage.covered_count));
    }
    let mean_mastery_coverage = mean(&masteries);
    Ok(ClassProfile {
        assessment_id: coverage.assessment_id.clone(),
        roster_size: members.len(),
        node_mastery: counts
            .into_iter()
            .map(|(n, c)| (n, S::ratio(c, members.len())))
            .collect(),
        mean_coverage: mean(&coverages),
        mean_mastery_percent: Percent::from_scalar(&mean_mastery_coverage),
        mean_mastery_coverage,
    })
}

/// One student against the class for one assessment. `mastered`, `lagging`
/// and `remaining` partition the graph's nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentComparison<S: Scalar = f64> {
    pub student_id: String,
    pub assessment_id: String,
    pub mastered: BTreeSet<NodeId>,
    /// Mastered by at least `theta_lag` of the class but not by the student.
    pub lagging: BTreeSet<NodeId>,
    pub remaining: BTreeSet<NodeId>,
    pub mastery_coverage: S,
    pub percent_display: Percent,
    pub class_mean_mastery_coverage: S,
    pub class_percent_display: Percent,
    pub theta_lag: f64,
}

impl<S: Scalar> StudentComparison<S> {
    /// Fill colors: mastered yellow, lagging green; everything else takes
    /// the course red from the DOT exporter.
    pub fn overlay(&self) -> BTreeMap<NodeId, String> {
        let mastered = self
            .mastered
            .iter()
            .map(|n| (*n, colors::MASTERED.to_string()));
        let lagging = self
            .lagging
            .iter()
            .map(|n| (*n, colors::LAGGING.to_string()));
        mastered.chain(lagging).collect()
    }
}

pub fn student_comparison<S: Scalar>(
    graph: &KnowledgeGraph,
    snapshot: &TrajectorySnapshot,
    profile: &ClassProfile<S>,
    coverage: &CoverageReport<S>,
    theta_lag: f64,
) -> Result<StudentComparison<S>, AnalyticsError> {
    for found in [&snapshot.assessment_id, &profile.assessment_id] {
        if *found != coverage.assessment_id {
            return Err(AnalyticsError::ScopeMismatch {
                expected: coverage.assessment_id.clone(),
                found: found.clone(),
            });
        }
    }
    if coverage.covered_count == 0 {
        return Err(AnalyticsError::UndefinedCoverage(
            coverage.assessment_id.clone(),
        ));
    }
    let mastered: BTreeSet<NodeId> = snapshot
        .mastered_nodes
        .iter()
        .copied()
        .filter(|n| graph.contains_node(*n))
        .collect();
    let lagging: BTreeSet<NodeId> = profile
        .node_mastery
        .iter()
        .filter(|(n, fraction)| fraction.to_f64() >= theta_lag && !mastered.contains(n))
        .map(|(n, _)| *n)
        .collect();
    let remaining = graph
        .node_ids()
        .filter(|n| !mastered.contains(n) && !lagging.contains(n))
        .collect();
    let hit = mastered.intersection(&coverage.covered_nodes).count();
    Ok(StudentComparison {
        student_id: snapshot.student_id.clone(),
        assessment_id: coverage.assessment_id.clone(),
        mastery_coverage: S::ratio(hit, coverage.covered_count),
        percent_display: Percent::from_counts(hit, coverage.covered_count),
        class_mean_mastery_coverage: profile.mean_mastery_coverage.clone(),
        class_percent_display: profile.mean_mastery_percent,
        mastered,
        lagging,
        remaining,
        theta_lag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCoverageEntry<S: Scalar = f64> {
    pub assessment_id: String,
    pub order_index: i64,
    /// ⌈theta_class × roster⌉, at least 1.
    pub threshold_count: usize,
    pub majority_count: usize,
    pub majority_fraction: S,
    pub any_count: usize,
    pub any_fraction: S,
}

/// Smallest student count reaching `fraction` of `roster`.
pub(crate) fn threshold_count(fraction: f64, roster: usize) -> usize {
    // 0.3 × 10 is 3.0000000000000004 in binary
    ((fraction * roster as f64 - 1e-9).ceil() as usize).max(1)
}

/// Per assessment, on cumulative mastery: the fraction of graph nodes
/// mastered by at least ⌈theta_class × roster⌉ students, and by anyone.
pub fn class_coverage_timeline<S: Scalar>(
    graph: &KnowledgeGraph,
    course: &Course,
    timelines: &BTreeMap<String, TrajectoryTimeline<S>>,
    roster: &[String],
    theta_class: f64,
) -> Result<Vec<ClassCoverageEntry<S>>, AnalyticsError> {
    if roster.is_empty() {
        return Err(AnalyticsError::EmptyRoster);
    }
    let members: BTreeSet<&str> = roster.iter().map(String::as_str).collect();
    let needed = threshold_count(theta_class, members.len());
    let mut out = Vec::with_capacity(course.assessments.len());
    for assessment in &course.assessments {
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        for student in &members {
            let Some(entry) = timelines
                .get(*student)
                .and_then(|t| t.entry(&assessment.assessment_id))
            else {
                continue;
            };
            for node in entry
                .cumulative_nodes
                .iter()
                .filter(|n| graph.contains_node(**n))
            {
                *counts.entry(*node).or_insert(0) += 1;
            }
        }
        let majority_count = counts.values().filter(|c| **c >= needed).count();
        let any_count = counts.len();
        out.push(ClassCoverageEntry {
            assessment_id: assessment.assessment_id.clone(),
            order_index: assessment.order_index,
            threshold_count: needed,
            majority_count,
            majority_fraction: S::ratio(majority_count, graph.node_count()),
            any_count,
            any_fraction: S::ratio(any_count, graph.node_count()),
        });
    }
    Ok(out)
}
