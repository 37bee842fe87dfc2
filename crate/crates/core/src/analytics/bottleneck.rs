use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::graph::{KnowledgeGraph, NodeId};
use crate::num::Scalar;
use crate::trajectory::{Course, ResponseRecord, TrajectoryTimeline};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BottleneckEntry<S: Scalar = f64> {
    pub node_id: NodeId,
    pub label: String,
    /// Wrong-answer rate without prior mastery minus the rate with it.
    /// Absent when either side has fewer than `min_support` responses.
    pub score: Option<S>,
    pub insufficient_data: bool,
    pub unmastered_support: usize,
    pub unmastered_wrong: usize,
    pub mastered_support: usize,
    pub mastered_wrong: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BottleneckReport<S: Scalar = f64> {
    pub min_support: usize,
    /// Scored nodes by descending score, then nodes lacking data; ties by id.
    pub entries: Vec<BottleneckEntry<S>>,
}

#[derive(Default)]
struct Tally {
    unmastered: (usize, usize),
    mastered: (usize, usize),
}

/// Ranks nodes by how much lacking them beforehand hurts later answers.
///
/// For every response to a mapped question, each node the question touches is
/// split by whether the student had mastered it in an earlier assessment
/// (cumulatively). Only nodes touched by at least one mapped question appear.
pub fn bottlenecks<S: Scalar>(
    graph: &KnowledgeGraph,
    course: &Course,
    timelines: &BTreeMap<String, TrajectoryTimeline<S>>,
    responses: &[ResponseRecord],
    min_support: usize,
) -> BottleneckReport<S> {
    let mut touched: HashMap<(&str, &str), BTreeSet<NodeId>> = HashMap::new();
    let mut order: HashMap<&str, i64> = HashMap::new();
    for assessment in &course.assessments {
        order.insert(&assessment.assessment_id, assessment.order_index);
        for m in course.mappings_for(&assessment.assessment_id) {
            if m.unmapped || m.edge_ids.is_empty() {
                continue;
            }
            touched.insert(
                (m.assessment_id.as_str(), m.question_id.as_str()),
                graph.endpoint_closure(&m.edge_ids),
            );
        }
    }

    let empty = BTreeSet::new();
    let mut tallies: BTreeMap<NodeId, Tally> = BTreeMap::new();
    for nodes in touched.values() {
        for n in nodes {
            tallies.entry(*n).or_default();
        }
    }
    for r in responses {
        let Some(nodes) = touched.get(&(r.assessment_id.as_str(), r.question_id.as_str())) else {
            continue;
        };
        let Some(order_index) = order.get(r.assessment_id.as_str()) else {
            continue;
        };
        let prior = timelines
            .get(&r.student_id)
            .and_then(|t| t.nodes_before(*order_index))
            .unwrap_or(&empty);
        for n in nodes {
            let tally = tallies.entry(*n).or_default();
            let side = if prior.contains(n) {
                &mut tally.mastered
            } else {
                &mut tally.unmastered
            };
            side.0 += 1;
            side.1 += usize::from(!r.is_correct);
        }
    }

    let mut entries: Vec<BottleneckEntry<S>> = tallies
        .into_iter()
        .map(|(node_id, t)| {
            let enough = t.unmastered.0 >= min_support && t.mastered.0 >= min_support;
            let score = enough.then(|| {
                S::ratio(t.unmastered.1, t.unmastered.0) - S::ratio(t.mastered.1, t.mastered.0)
            });
            BottleneckEntry {
                node_id,
                label: graph
                    .node(node_id)
                    .map(|n| n.label.clone())
                    .unwrap_or_default(),
                insufficient_data: score.is_none(),
                score,
                unmastered_support: t.unmastered.0,
                unmastered_wrong: t.unmastered.1,
                mastered_support: t.mastered.0,
                mastered_wrong: t.mastered.1,
            }
        })
        .collect();
    entries.sort_by(|a, b| match (&a.score, &b.score) {
        (Some(x), Some(y)) => y
            .partial_cmp(x)
            .unwrap_or(Ordering::Equal)
            .then(a.node_id.cmp(&b.node_id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.node_id.cmp(&b.node_id),
    });
    BottleneckReport {
        min_support,
        entries,
    }
}
