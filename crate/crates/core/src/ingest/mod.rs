//! Trace files and synthetic event generation.

mod format;
mod generator;

use thiserror::Error;

pub use format::{encode_trace, parse_trace, parse_trace_str, write_trace};
pub use generator::{
    class_size, default_occluder, generate_event, switched_class, ScenarioKind, ScenarioSpec,
    MIN_FRAMES, WALL_CONFIDENCE,
};

use crate::trace_model::{ObjectClass, Violation};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace has no header record")]
    MissingHeader,
    #[error("trace failed validation: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("frame_count {0} is below the minimum of 10")]
    TooFewFrames(usize),
    #[error("{0} cannot be the moving object")]
    NotSolid(ObjectClass),
    #[error("possible-occluded needs an occluder")]
    MissingOccluder,
    #[error("occluder hides the object at frame {0}")]
    OccluderOnPath(usize),
    #[error("object centre leaves the scene at frame {0}")]
    LeavesScene(usize),
    #[error("{0}")]
    Invalid(String),
}
