//! Instructor-facing analytics.
//!
//! Two coverage notions appear throughout and are never mixed:
//! *ExamCoverage* measures which nodes an assessment tests (independent of
//! answers); *MasteryCoverage* measures which of those nodes a student has
//! mastered. Every report is a pure function of immutable inputs.

mod bottleneck;
mod class;
mod coverage;
mod groups;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bottleneck::{bottlenecks, BottleneckEntry, BottleneckReport};
pub use class::{
    class_coverage_timeline, class_profile, student_comparison, ClassCoverageEntry, ClassProfile,
    StudentComparison,
};
pub use coverage::{
    all_overlaps, assessment_coverage, bias_warning, comprehensiveness, coverage_overlap,
    BiasEvidence, BiasWarning, Comprehensiveness, CoverageReport, OverlapReport,
};
pub use groups::{score_groups, GroupCoverage, ScoreGroup};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("coverage reports come from different graphs")]
    GraphMismatch,
    #[error("bias analysis needs at least 2 assessments, got {0}")]
    TooFewAssessments(usize),
    #[error("roster is empty")]
    EmptyRoster,
    #[error("assessment {0} covers no nodes, so mastery coverage is undefined")]
    UndefinedCoverage(String),
    #[error("inputs refer to different assessments: {expected} vs {found}")]
    ScopeMismatch { expected: String, found: String },
    #[error("snapshot for {0}, who is not on the roster")]
    ForeignStudent(String),
    #[error("group count must be at least 2, got {0}")]
    InvalidGroupCount(usize),
    #[error("{students} students cannot fill {groups} groups")]
    TooFewStudents { students: usize, groups: usize },
    #[error("threshold {name}={value} outside {range}")]
    Threshold {
        name: &'static str,
        value: String,
        range: &'static str,
    },
}

/// Every tunable threshold used by the analytics, with defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Containment at or above which two assessments overlap.
    pub overlap: f64,
    /// Union ExamCoverage below which overlap counts as selective attention.
    pub floor: f64,
    /// Class mastery fraction at which a node the student lacks is lagging.
    pub lag: f64,
    /// Fraction of the roster that must master a node for class coverage.
    pub class: f64,
    /// Minimum responses on each side for a bottleneck score.
    pub min_support: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            overlap: 0.6,
            floor: 0.2,
            lag: 0.5,
            class: 0.5,
            min_support: 5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let checks = [
            (
                "overlap",
                self.overlap,
                "[0, 1]",
                (0.0..=1.0).contains(&self.overlap),
            ),
            (
                "floor",
                self.floor,
                "[0, 1]",
                (0.0..=1.0).contains(&self.floor),
            ),
            ("lag", self.lag, "(0, 1]", self.lag > 0.0 && self.lag <= 1.0),
            (
                "class",
                self.class,
                "(0, 1]",
                self.class > 0.0 && self.class <= 1.0,
            ),
        ];
        for (name, value, range, ok) in checks {
            if !ok {
                return Err(AnalyticsError::Threshold {
                    name,
                    value: value.to_string(),
                    range,
                });
            }
        }
        if self.min_support == 0 {
            return Err(AnalyticsError::Threshold {
                name: "min_support",
                value: "0".to_string(),
                range: ">= 1",
            });
        }
        Ok(())
    }
}
