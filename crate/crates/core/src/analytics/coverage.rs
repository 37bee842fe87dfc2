use std::collections::BTreeSet;

use serde::Serialize;

use super::AnalyticsError;
use crate::graph::{GraphStamp, KnowledgeGraph, NodeId};
use crate::mapping::EdgeMapping;
use crate::num::{Percent, Scalar};

/// ExamCoverage of one assessment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport<S: Scalar = f64> {
    pub assessment_id: String,
    pub graph: GraphStamp,
    pub covered_nodes: BTreeSet<NodeId>,
    pub covered_count: usize,
    pub node_count: usize,
    pub coverage_fraction: S,
    pub percent_display: Percent,
}

/// Nodes incident to any edge mapped from the assessment's questions,
/// whatever the students answered.
pub fn assessment_coverage<S: Scalar>(
    graph: &KnowledgeGraph,
    assessment_id: &str,
    mappings: &[EdgeMapping],
) -> CoverageReport<S> {
    let covered_nodes = graph.endpoint_closure(
        mappings
            .iter()
            .filter(|m| m.assessment_id == assessment_id && !m.unmapped)
            .flat_map(|m| m.edge_ids.iter()),
    );
    let covered_count = covered_nodes.len();
    let node_count = graph.node_count();
    CoverageReport {
        assessment_id: assessment_id.to_string(),
        graph: graph.stamp(),
        covered_nodes,
        covered_count,
        node_count,
        coverage_fraction: S::ratio(covered_count, node_count),
        percent_display: Percent::from_counts(covered_count, node_count),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport<S: Scalar = f64> {
    pub assessment_a: String,
    pub assessment_b: String,
    pub intersection_size: usize,
    pub union_size: usize,
    pub jaccard: S,
    /// |A ∩ B| / |A|
    pub containment_a_in_b: S,
    /// |A ∩ B| / |B|
    pub containment_b_in_a: S,
}

/// Set overlap of two ExamCoverage reports. Empty sets overlap with nothing:
/// every fraction with a zero denominator is 0.
pub fn coverage_overlap<S: Scalar>(
    a: &CoverageReport<S>,
    b: &CoverageReport<S>,
) -> Result<OverlapReport<S>, AnalyticsError> {
    if a.graph != b.graph {
        return Err(AnalyticsError::GraphMismatch);
    }
    let intersection_size = a.covered_nodes.intersection(&b.covered_nodes).count();
    let union_size = a.covered_count + b.covered_count - intersection_size;
    Ok(OverlapReport {
        assessment_a: a.assessment_id.clone(),
        assessment_b: b.assessment_id.clone(),
        intersection_size,
        union_size,
        jaccard: S::ratio(intersection_size, union_size),
        containment_a_in_b: S::ratio(intersection_size, a.covered_count),
        containment_b_in_a: S::ratio(intersection_size, b.covered_count),
    })
}

/// Overlaps of every pair `(i, j)` with `i < j`, in input order.
pub fn all_overlaps<S: Scalar>(
    reports: &[CoverageReport<S>],
) -> Result<Vec<OverlapReport<S>>, AnalyticsError> {
    let mut out = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            out.push(coverage_overlap(a, b)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasEvidence<S: Scalar = f64> {
    /// The assessment whose nodes are contained.
    pub contained: String,
    pub container: String,
    pub containment: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasWarning<S: Scalar = f64> {
    pub triggered: bool,
    pub evidence: Vec<BiasEvidence<S>>,
    pub union_count: usize,
    pub union_coverage_fraction: S,
    pub union_percent_display: Percent,
    pub theta_overlap: f64,
    pub theta_floor: f64,
}

/// Selective-attention warning: some containment reaches `theta_overlap`
/// while the assessments jointly cover less than `theta_floor` of the graph.
pub fn bias_warning<S: Scalar>(
    coverages: &[CoverageReport<S>],
    overlaps: &[OverlapReport<S>],
    theta_overlap: f64,
    theta_floor: f64,
) -> Result<BiasWarning<S>, AnalyticsError> {
    if coverages.len() < 2 {
        return Err(AnalyticsError::TooFewAssessments(coverages.len()));
    }
    let stamp = coverages[0].graph;
    if coverages.iter().any(|c| c.graph != stamp) {
        return Err(AnalyticsError::GraphMismatch);
    }
    let mut evidence = Vec::new();
    for o in overlaps {
        let directions = [
            (&o.assessment_a, &o.assessment_b, &o.containment_a_in_b),
            (&o.assessment_b, &o.assessment_a, &o.containment_b_in_a),
        ];
        for (contained, container, containment) in directions {
            if containment.to_f64() >= theta_overlap {
                evidence.push(BiasEvidence {
                    contained: contained.clone(),
                    container: container.clone(),
                    containment: containment.clone(),
                });
            }
        }
    }
    let union: BTreeSet<NodeId> = coverages
        .iter()
        .flat_map(|c| c.covered_nodes.iter().copied())
        .collect();
    let union_coverage_fraction = S::ratio(union.len(), stamp.node_count);
    let triggered = !evidence.is_empty() && union_coverage_fraction.to_f64() < theta_floor;
    Ok(BiasWarning {
        triggered,
        evidence,
        union_count: union.len(),
        union_percent_display: Percent::from_counts(union.len(), stamp.node_count),
        union_coverage_fraction,
        theta_overlap,
        theta_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comprehensiveness<S: Scalar = f64> {
    pub assessments: Vec<String>,
    pub union_count: usize,
    pub union_fraction: S,
    pub percent_display: Percent,
    /// Course nodes no assessment tests.
    pub uncovered: Vec<NodeId>,
}

pub fn comprehensiveness<S: Scalar>(
    graph: &KnowledgeGraph,
    coverages: &[CoverageReport<S>],
) -> Result<Comprehensiveness<S>, AnalyticsError> {
    if coverages.is_empty() {
        return Err(AnalyticsError::TooFewAssessments(0));
    }
    if coverages.iter().any(|c| c.graph != graph.stamp()) {
        return Err(AnalyticsError::GraphMismatch);
    }
    let union: BTreeSet<NodeId> = coverages
        .iter()
        .flat_map(|c| c.covered_nodes.iter().copied())
        .collect();
    Ok(Comprehensiveness {
        assessments: coverages.iter().map(|c| c.assessment_id.clone()).collect(),
        union_count: union.len(),
        union_fraction: S::ratio(union.len(), graph.node_count()),
        percent_display: Percent::from_counts(union.len(), graph.node_count()),
        uncovered: graph.node_ids().filter(|n| !union.contains(n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn report(
        id: &str,
        nodes: impl IntoIterator<Item = u32>,
        node_count: usize,
    ) -> CoverageReport<Ratio<i64>> {
        let covered_nodes: BTreeSet<NodeId> = nodes.into_iter().map(NodeId).collect();
        CoverageReport {
            assessment_id: id.into(),
            graph: GraphStamp {
                node_count,
                edge_count: 0,
            },
            covered_count: covered_nodes.len(),
            coverage_fraction: Scalar::ratio(covered_nodes.len(), node_count),
            percent_display: Percent::from_counts(covered_nodes.len(), node_count),
            covered_nodes,
            node_count,
        }
    }

    #[test]
    fn identical_and_disjoint_overlaps() {
        let a = report("a", 1..=5, 100);
        let same = coverage_overlap(&a, &a).unwrap();
        assert_eq!(same.jaccard, Ratio::from_integer(1));
        assert_eq!(same.containment_a_in_b, Ratio::from_integer(1));

        let b = report("b", 10..=12, 100);
        let apart = coverage_overlap(&a, &b).unwrap();
        assert_eq!(apart.intersection_size, 0);
        assert_eq!(apart.jaccard, Ratio::from_integer(0));
        assert_eq!(apart.containment_b_in_a, Ratio::from_integer(0));
    }

    #[test]
    fn hand_arithmetic_overlap() {
        // |A| = 61, |B| = 88, |A ∩ B| = 55
        let a = report("pre", (1..=55).chain(201..=206), 1000);
        let b = report("mid", 1..=88, 1000);
        let o = coverage_overlap(&a, &b).unwrap();
        assert_eq!(o.intersection_size, 55);
        assert_eq!(o.containment_a_in_b, Ratio::new(55, 61));
        assert_eq!(o.jaccard, Ratio::new(55, 94));
        assert!((o.containment_a_in_b.to_f64() - 0.902).abs() < 1e-3);
        assert!((o.jaccard.to_f64() - 0.585).abs() < 1e-3);
    }

    #[test]
    fn mismatched_graphs_are_rejected() {
        let a = report("a", 1..=5, 100);
        let b = report("b", 1..=5, 101);
        assert_eq!(coverage_overlap(&a, &b), Err(AnalyticsError::GraphMismatch));
    }

    #[test]
    fn bias_needs_overlap_and_narrow_union() {
        let narrow = [
            report("pre", (1..=55).chain(201..=206), 1000),
            report("mid", 1..=88, 1000),
            report("post", (1..=55).chain(301..=306), 1000),
        ];
        let w = bias_warning(&narrow, &all_overlaps(&narrow).unwrap(), 0.6, 0.2).unwrap();
        assert!(w.triggered);
        assert_eq!(w.union_count, 100);

        let broad = [
            report("a", 1..=300, 1000),
            report("b", 301..=600, 1000),
            report("c", 601..=800, 1000),
        ];
        let w = bias_warning(&broad, &all_overlaps(&broad).unwrap(), 0.6, 0.2).unwrap();
        assert!(!w.triggered);
        assert!(w.evidence.is_empty());
        assert_eq!(w.union_coverage_fraction, Ratio::new(4, 5));

        let wide_but_repeated = [report("a", 1..=900, 1000), report("b", 1..=900, 1000)];
        let w = bias_warning(
            &wide_but_repeated,
            &all_overlaps(&wide_but_repeated).unwrap(),
            0.6,
            0.2,
        )
        .unwrap();
        assert!(!w.triggered);
        assert_eq!(w.evidence.len(), 2);

        assert_eq!(
            bias_warning(&narrow[..1], &[], 0.6, 0.2),
            Err(AnalyticsError::TooFewAssessments(1))
        );
    }
}
