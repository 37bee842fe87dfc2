use std::collections::BTreeMap;

use serde::Serialize;

use super::AnalyticsError;
use crate::num::{mean, Scalar};
use crate::trajectory::{Course, TrajectoryTimeline};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCoverage<S: Scalar = f64> {
    pub assessment_id: String,
    pub mean: S,
    pub min: S,
    pub max: S,
}

/// One quantile band of students. Rank 1 holds the lowest scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreGroup<S: Scalar = f64> {
    pub rank: usize,
    pub students: Vec<String>,
    pub min_score: u32,
    pub max_score: u32,
    pub per_assessment: Vec<GroupCoverage<S>>,
}

/// Splits students into `k` score bands of near-equal size and summarizes
/// each band's cumulative coverage per assessment.
///
/// Students are ordered by (score, id), so ties at a boundary resolve by id.
/// Sizes differ by at most one, the lower bands taking the extras.
pub fn score_groups<S: Scalar>(
    scores: &BTreeMap<String, u32>,
    k: usize,
    course: &Course,
    timelines: &BTreeMap<String, TrajectoryTimeline<S>>,
) -> Result<Vec<ScoreGroup<S>>, AnalyticsError> {
    if k < 2 {
        return Err(AnalyticsError::InvalidGroupCount(k));
    }
    if scores.len() < k {
        return Err(AnalyticsError::TooFewStudents {
            students: scores.len(),
            groups: k,
        });
    }
    let mut ordered: Vec<(&String, u32)> = scores.iter().map(|(s, v)| (s, *v)).collect();
    ordered.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));

    let base = ordered.len() / k;
    let extra = ordered.len() % k;
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for rank in 0..k {
        let size = base + usize::from(rank < extra);
        let members = &ordered[start..start + size];
        start += size;
        let per_assessment = course
            .assessments
            .iter()
            .map(|a| {
                let values: Vec<S> = members
                    .iter()
                    .map(|(s, _)| {
                        timelines
                            .get(*s)
                            .and_then(|t| t.entry(&a.assessment_id))
                            .map(|e| e.coverage.clone())
                            .unwrap_or_else(S::zero)
                    })
                    .collect();
                let pick = |want_max: bool| {
                    values
                        .iter()
                        .cloned()
                        .reduce(|x, y| if (y > x) == want_max { y } else { x })
                        .unwrap_or_else(S::zero)
                };
                GroupCoverage {
                    assessment_id: a.assessment_id.clone(),
                    mean: mean(&values),
                    min: pick(false),
                    max: pick(true),
                }
            })
            .collect();
        groups.push(ScoreGroup {
            rank: rank + 1,
            students: members.iter().map(|(s, _)| (*s).clone()).collect(),
            min_score: members.first().map(|m| m.1).unwrap_or(0),
            max_score: members.last().map(|m| m.1).unwrap_or(0),
            per_assessment,
        });
    }
    Ok(groups)
}
