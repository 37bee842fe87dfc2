//! Course knowledge graphs built from teaching materials, assessment
//! questions mapped onto graph edges, and per-student learning trajectories
//! with the analytics an instructor reads from them.
//!
//! The pipeline is file-mediated: materials are refined into statements,
//! statements into a [`graph::KnowledgeGraph`], questions into
//! [`mapping::EdgeMapping`]s, and responses into
//! [`trajectory::TrajectorySnapshot`]s. Every model-assisted step goes
//! through [`provider::ExtractionProvider`].
//!
//! Fractions are generic over [`num::Scalar`]: `f64` for normal use and
//! [`ExactFraction`] when exact rational arithmetic is wanted.

pub mod analytics;
pub mod diag;
pub mod graph;
pub mod ingest;
pub mod mapping;
pub mod num;
pub mod provider;
pub mod report;
pub mod taxonomy;
pub mod trajectory;

pub use diag::Diagnostic;
pub use graph::{EdgeId, KnowledgeGraph, NodeId};
pub use num::{Percent, Scalar};

/// The default fraction type.
pub type Fraction = f64;
/// Exact rational fractions.
pub type ExactFraction = num_rational::Ratio<i64>;

pub type ExactCoverageReport = analytics::CoverageReport<ExactFraction>;
pub type ExactOverlapReport = analytics::OverlapReport<ExactFraction>;
pub type ExactBiasWarning = analytics::BiasWarning<ExactFraction>;
pub type ExactClassProfile = analytics::ClassProfile<ExactFraction>;
pub type ExactStudentComparison = analytics::StudentComparison<ExactFraction>;
pub type ExactTimeline = trajectory::TrajectoryTimeline<ExactFraction>;
