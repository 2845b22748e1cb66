//! Curiosity-driven reasoning about simple physical events.
//!
//! The pipeline reads per-frame detection traces, tracks each object with a
//! constant-velocity Kalman filter, scores object permanence, shape
//! constancy and spatial-temporal continuity, and labels each event
//! possible, impossible or exceptional. A Z-number knowledge base of
//! per-class scores classifies objects and remembers repeated exceptions.

pub mod body_budget;
pub mod curiosity;
pub mod ingest;
pub mod knowledge;
pub mod parallel;
pub mod trace_model;
pub mod tracker;

pub use body_budget::{BodyBudgetScores, ScoringConfig, ShapeConstancyMode, WeightConfig};
pub use curiosity::{
    analyze_event, classify_event, commit_analysis, explain_discontinuities, process_stream,
    CuriosityParams, EventAnalysis, EventVerdict, PipelineConfig, PipelineError,
};
pub use ingest::{generate_event, parse_trace, ScenarioKind, ScenarioSpec};
pub use knowledge::{EventFlag, KnowledgeBase, ZNumber};
pub use trace_model::{EventTrace, ObjectClass};
pub use tracker::{track_event, Track, TrackerParams};
