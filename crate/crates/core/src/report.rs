//! Report rendering. JSON and Markdown are produced from the same values,
//! and every number in the Markdown goes through the JSON serializer so the
//! two formats never disagree on a digit.

use std::fmt::Write as _;

use serde::Serialize;

use crate::analytics::{
    BiasWarning, BottleneckReport, ClassCoverageEntry, ClassProfile, Comprehensiveness,
    CoverageReport, OverlapReport, ScoreGroup, StudentComparison,
};
use crate::graph::{GraphStamp, NodeId};
use crate::num::{Percent, Scalar};
use crate::trajectory::TrajectoryTimeline;

pub trait Report: Serialize {
    fn kind(&self) -> &'static str;
    fn markdown(&self) -> String;
}

#[derive(Serialize)]
struct Envelope<'a, R> {
    kind: &'static str,
    #[serde(flatten)]
    report: &'a R,
}

/// Pretty JSON with a `kind` field first and a trailing newline.
pub fn to_json<R: Report>(report: &R) -> String {
    let envelope = Envelope {
        kind: report.kind(),
        report,
    };
    let mut out = serde_json::to_string_pretty(&envelope).expect("report values serialize");
    out.push('\n');
    out
}

fn num<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("report values serialize")
}

fn pct(p: Percent) -> String {
    format!("{}%", num(&p))
}

fn ids(nodes: impl IntoIterator<Item = NodeId>) -> String {
    let list: Vec<String> = nodes.into_iter().map(|n| n.to_string()).collect();
    if list.is_empty() {
        "(none)".to_string()
    } else {
        list.join(", ")
    }
}

fn table(out: &mut String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary<S: Scalar = f64> {
    pub graph: GraphStamp,
    pub assessments: Vec<CoverageReport<S>>,
    pub overlaps: Vec<OverlapReport<S>>,
}

impl<S: Scalar> Report for CoverageSummary<S> {
    fn kind(&self) -> &'static str {
        "coverage"
    }

    fn markdown(&self) -> String {
        let mut out = format!(
            "# Assessment coverage\n\nGraph: {} nodes, {} edges.\n\n",
            self.graph.node_count, self.graph.edge_count
        );
        table(
            &mut out,
            &[
                "assessment",
                "covered nodes",
                "coverage fraction",
                "percent",
            ],
            self.assessments.iter().map(|c| {
                vec![
                    c.assessment_id.clone(),
                    num(&c.covered_count),
                    num(&c.coverage_fraction),
                    pct(c.percent_display),
                ]
            }),
        );
        if !self.overlaps.is_empty() {
            out.push_str("## Overlap\n\n");
            table(
                &mut out,
                &["A", "B", "shared", "jaccard", "A in B", "B in A"],
                self.overlaps.iter().map(|o| {
                    vec![
                        o.assessment_a.clone(),
                        o.assessment_b.clone(),
                        num(&o.intersection_size),
                        num(&o.jaccard),
                        num(&o.containment_a_in_b),
                        num(&o.containment_b_in_a),
                    ]
                }),
            );
        }
        out
    }
}

impl<S: Scalar> Report for BiasWarning<S> {
    fn kind(&self) -> &'static str {
        "bias"
    }

    fn markdown(&self) -> String {
        let mut out = String::from("# Assessment bias\n\n");
        let verdict = if self.triggered {
            "**Warning:** the assessments repeatedly test the same narrow part of the course."
        } else {
            "No selective-attention warning."
        };
        let _ = writeln!(out, "{verdict}\n");
        let _ = writeln!(
            out,
            "Triggered: {}. Union coverage: {} ({}, {} nodes). Thresholds: overlap {}, floor {}.\n",
            num(&self.triggered),
            num(&self.union_coverage_fraction),
            pct(self.union_percent_display),
            num(&self.union_count),
            num(&self.theta_overlap),
            num(&self.theta_floor),
        );
        if !self.evidence.is_empty() {
            table(
                &mut out,
                &["contained", "container", "containment"],
                self.evidence.iter().map(|e| {
                    vec![
                        e.contained.clone(),
                        e.container.clone(),
                        num(&e.containment),
                    ]
                }),
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentReport<S: Scalar = f64> {
    pub comparison: StudentComparison<S>,
    pub timeline: TrajectoryTimeline<S>,
}

impl<S: Scalar> Report for StudentReport<S> {
    fn kind(&self) -> &'static str {
        "student"
    }

    fn markdown(&self) -> String {
        let c = &self.comparison;
        let mut out = format!("# Student {} on {}\n\n", c.student_id, c.assessment_id);
        let _ = writeln!(
            out,
            "Mastery coverage: {} ({}). Class mean: {} ({}).\n",
            num(&c.mastery_coverage),
            pct(c.percent_display),
            num(&c.class_mean_mastery_coverage),
            pct(c.class_percent_display),
        );
        let _ = writeln!(
            out,
            "- Mastered ({}): {}",
            num(&c.mastered.len()),
            ids(c.mastered.iter().copied())
        );
        let _ = writeln!(
            out,
            "- Lagging, mastered by at least {} of the class ({}): {}",
            num(&c.theta_lag),
            num(&c.lagging.len()),
            ids(c.lagging.iter().copied())
        );
        let _ = writeln!(out, "- Remaining: {}\n", num(&c.remaining.len()));
        out.push_str("## Trajectory\n\n");
        table(
            &mut out,
            &["assessment", "cumulative nodes", "coverage", "new nodes"],
            self.timeline
                .entries
                .iter()
                .zip(&self.timeline.growth)
                .map(|(e, growth)| {
                    vec![
                        e.assessment_id.clone(),
                        num(&e.cumulative_nodes.len()),
                        num(&e.coverage),
                        num(growth),
                    ]
                }),
        );
        out
    }
}

/// Summary of a [`ClassProfile`] without the per-node map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAssessment<S: Scalar = f64> {
    pub assessment_id: String,
    pub mean_coverage: S,
    pub mean_mastery_coverage: S,
    pub mean_mastery_percent: Percent,
}

impl<S: Scalar> From<&ClassProfile<S>> for ClassAssessment<S> {
    fn from(p: &ClassProfile<S>) -> Self {
        ClassAssessment {
            assessment_id: p.assessment_id.clone(),
            mean_coverage: p.mean_coverage.clone(),
            mean_mastery_coverage: p.mean_mastery_coverage.clone(),
            mean_mastery_percent: p.mean_mastery_percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport<S: Scalar = f64> {
    pub roster_size: usize,
    pub theta_class: f64,
    pub assessments: Vec<ClassAssessment<S>>,
    pub timeline: Vec<ClassCoverageEntry<S>>,
}

impl<S: Scalar> Report for ClassReport<S> {
    fn kind(&self) -> &'static str {
        "class"
    }

    fn markdown(&self) -> String {
        let mut out = format!(
            "# Class profile\n\nRoster: {} students.\n\n",
            num(&self.roster_size)
        );
        table(
            &mut out,
            &[
                "assessment",
                "mean coverage",
                "mean mastery coverage",
                "percent",
            ],
            self.assessments.iter().map(|a| {
                vec![
                    a.assessment_id.clone(),
                    num(&a.mean_coverage),
                    num(&a.mean_mastery_coverage),
                    pct(a.mean_mastery_percent),
                ]
            }),
        );
        let _ = writeln!(
            out,
            "## Cumulative class coverage\n\nA node counts once at least {} of the roster has mastered it.\n",
            num(&self.theta_class)
        );
        table(
            &mut out,
            &[
                "assessment",
                "students needed",
                "majority nodes",
                "majority fraction",
                "any nodes",
                "any fraction",
            ],
            self.timeline.iter().map(|e| {
                vec![
                    e.assessment_id.clone(),
                    num(&e.threshold_count),
                    num(&e.majority_count),
                    num(&e.majority_fraction),
                    num(&e.any_count),
                    num(&e.any_fraction),
                ]
            }),
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupsReport<S: Scalar = f64> {
    pub k: usize,
    pub groups: Vec<ScoreGroup<S>>,
}

impl<S: Scalar> Report for GroupsReport<S> {
    fn kind(&self) -> &'static str {
        "groups"
    }

    fn markdown(&self) -> String {
        let mut out = format!(
            "# Score groups\n\n{} groups, rank 1 lowest.\n\n",
            num(&self.k)
        );
        table(
            &mut out,
            &["rank", "students", "min score", "max score"],
            self.groups.iter().map(|g| {
                vec![
                    num(&g.rank),
                    num(&g.students.len()),
                    num(&g.min_score),
                    num(&g.max_score),
                ]
            }),
        );
        out.push_str("## Cumulative coverage by group\n\n");
        table(
            &mut out,
            &["rank", "assessment", "mean", "min", "max"],
            self.groups.iter().flat_map(|g| {
                g.per_assessment.iter().map(move |a| {
                    vec![
                        num(&g.rank),
                        a.assessment_id.clone(),
                        num(&a.mean),
                        num(&a.min),
                        num(&a.max),
                    ]
                })
            }),
        );
        out
    }
}

impl<S: Scalar> Report for BottleneckReport<S> {
    fn kind(&self) -> &'static str {
        "bottlenecks"
    }

    fn markdown(&self) -> String {
        let mut out = format!(
            "# Bottleneck concepts\n\nNodes need at least {} responses on each side to be scored.\n\n",
            num(&self.min_support)
        );
        table(
            &mut out,
            &[
                "node",
                "label",
                "score",
                "without prior (wrong/total)",
                "with prior (wrong/total)",
            ],
            self.entries.iter().map(|e| {
                vec![
                    e.node_id.to_string(),
                    e.label.clone(),
                    e.score
                        .as_ref()
                        .map(|s| num(s))
                        .unwrap_or_else(|| "insufficient data".into()),
                    format!(
                        "{}/{}",
                        num(&e.unmastered_wrong),
                        num(&e.unmastered_support)
                    ),
                    format!("{}/{}", num(&e.mastered_wrong), num(&e.mastered_support)),
                ]
            }),
        );
        out
    }
}

impl<S: Scalar> Report for Comprehensiveness<S> {
    fn kind(&self) -> &'static str {
        "comprehensiveness"
    }

    fn markdown(&self) -> String {
        let mut out = String::from("# Course comprehensiveness\n\n");
        let _ = writeln!(
            out,
            "Assessments {} together cover {} nodes: {} ({}).\n",
            self.assessments.join(", "),
            num(&self.union_count),
            num(&self.union_fraction),
            pct(self.percent_display),
        );
        let _ = writeln!(
            out,
            "Untested nodes ({}): {}",
            num(&self.uncovered.len()),
            ids(self.uncovered.iter().copied())
        );
        out
    }
}
