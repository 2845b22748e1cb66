//! Event-level reasoning.
//!
//! Each event is tracked and checked for discontinuities. With none the
//! event is possible. Otherwise each discontinuity is revisited for
//! something that explains it (an occluder, or the scene edge). The agent's
//! verdict is then compared with ground truth; disagreements are stored as
//! exceptions and repeated identical exceptions become accepted rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body_budget::{focus_track, score_track, BodyBudgetScores, ScoreError, ScoringConfig};
use crate::knowledge::{
    raw_differences, z_number, ClassStats, EventFlag, ExceptionSignature, KnowledgeBase,
    KnowledgeError, ZNumber,
};
use crate::parallel;
use crate::trace_model::{
    validate_trace, BBox, EventTrace, GroundTruth, ObjectClass, Point, SceneBounds, Violation,
};
use crate::tracker::{
    detect_discontinuities, track_event, Discontinuity, DiscontinuityKind, FilterError, Track,
    TrackerParams,
};

/// Note attached to verdicts overridden by a promoted exception.
pub const PROMOTED_RULE: &str = "promoted rule";

/// Detected frames used to estimate velocity when projecting a track
/// backwards over an appear gap.
const BACKCAST_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid trace: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidTrace(Vec<Violation>),
    #[error("event has no non-wall objects to reason about")]
    NoObjects,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CuriosityParams {
    /// Fraction of a gap that must be hidden for the gap to be explained.
    pub occlusion_coverage_min: f64,
    /// Pixels added around each wall box before the containment test.
    pub occluder_margin: f64,
}

impl Default for CuriosityParams {
    fn default() -> Self {
        Self {
            occlusion_coverage_min: 0.7,
            occluder_margin: 5.0,
        }
    }
}

/// Everything the pipeline needs besides the knowledge base.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tracker: TrackerParams,
    pub scoring: ScoringConfig,
    pub curiosity: CuriosityParams,
    pub scene: SceneBounds,
}

/// Occluder evidence gathered while revisiting one gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuriosityContext {
    /// Gap frames on which any wall was detected.
    pub occluder_frames: usize,
    pub gap_frames: usize,
    /// Explained gap frames / gap frames; 0 for an empty gap.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub discontinuity: Discontinuity,
    pub explained_by_occluder: bool,
    /// Entry or exit through the border of the scene.
    pub explained_by_scene_edge: bool,
    pub context: CuriosityContext,
}

impl Explanation {
    pub fn explained(&self) -> bool {
        self.explained_by_occluder || self.explained_by_scene_edge
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackScore {
    pub track_id: usize,
    pub class: ObjectClass,
    pub scores: BodyBudgetScores,
}

/// The knowledge-independent part of classifying one event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnalysis {
    pub event_id: String,
    pub frame_count: usize,
    pub tracks: Vec<Track>,
    pub discontinuities: Vec<Discontinuity>,
    pub explanations: Vec<Explanation>,
    pub agent_flag: EventFlag,
    pub scores: Vec<TrackScore>,
    pub focus_track: usize,
    pub occluder_present: bool,
    pub ground_truth: Option<GroundTruth>,
}

impl EventAnalysis {
    pub fn focus(&self) -> Option<&TrackScore> {
        self.scores.iter().find(|s| s.track_id == self.focus_track)
    }
}

/// Exception bookkeeping attached to a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionStatus {
    pub signature: ExceptionSignature,
    pub occurrences: u64,
    pub promoted: bool,
}

/// One report per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventVerdict {
    pub event_id: String,
    pub flag: EventFlag,
    /// The flag before ground truth was consulted.
    pub agent_flag: EventFlag,
    pub explanations: Vec<Explanation>,
    pub scores: Vec<TrackScore>,
    pub focus_track: usize,
    #[serde(rename = "z_number")]
    pub z: Option<ZNumber>,
    /// `|mean_c − A|` per class, next to the normalised confidences.
    pub raw_differences: Option<BTreeMap<ObjectClass, f64>>,
    pub ground_truth_match: Option<bool>,
    pub occluder_present: bool,
    pub exception: Option<ExceptionStatus>,
    pub notes: Vec<String>,
}

/// Revisits each discontinuity and asks whether something hides the object.
///
/// Absences are explained when the object's estimated centre is hidden on
/// at least `occlusion_coverage_min` of the missing frames: inside an
/// inflated wall box, or outside the scene for gaps that touch the start or
/// end of the event. Jumps and shape switches are never explainable.
pub fn explain_discontinuities(
    discs: &[Discontinuity],
    tracks: &[Track],
    params: &CuriosityParams,
    scene: &SceneBounds,
) -> (EventFlag, Vec<Explanation>) {
    let occluders: Vec<&Track> = tracks.iter().filter(|t| t.occluder).collect();
    let n = tracks.first().map_or(0, Track::len);

    let explanations: Vec<Explanation> = discs
        .iter()
        .map(|d| {
            let occluder_frames = d
                .frames()
                .filter(|&f| occluders.iter().any(|o| o.presence.get(f) == Some(&true)))
                .count();
            let track = tracks.iter().find(|t| t.track_id == d.track_id);
            let (Some(track), true) = (track, d.kind.is_absence()) else {
                return Explanation {
                    discontinuity: d.clone(),
                    explained_by_occluder: false,
                    explained_by_scene_edge: false,
                    context: CuriosityContext {
                        occluder_frames,
                        gap_frames: 0,
                        coverage: 0.0,
                    },
                };
            };

            let at_edge = match d.kind {
                DiscontinuityKind::Appear => d.start() == 0,
                _ => d.end() + 1 == n,
            };
            let mut hidden = 0usize;
            let mut outside = 0usize;
            let mut gap_frames = 0usize;
            for f in d.frames() {
                gap_frames += 1;
                let Some(p) = estimated_center(track, d.kind, f) else {
                    continue;
                };
                if occluders
                    .iter()
                    .filter_map(|o| occluder_box(o, f))
                    .any(|b| b.inflate(params.occluder_margin).contains(p))
                {
                    hidden += 1;
                } else if at_edge && !scene.contains(p) {
                    outside += 1;
                }
            }
            let coverage = if gap_frames == 0 {
                0.0
            } else {
                (hidden + outside) as f64 / gap_frames as f64
            };
            let explained = gap_frames > 0 && coverage >= params.occlusion_coverage_min;
            Explanation {
                discontinuity: d.clone(),
                explained_by_occluder: explained && hidden >= outside,
                explained_by_scene_edge: explained && outside > hidden,
                context: CuriosityContext {
                    occluder_frames,
                    gap_frames,
                    coverage,
                },
            }
        })
        .collect();

    let flag = if explanations.iter().all(Explanation::explained) {
        EventFlag::Possible
    } else {
        EventFlag::Impossible
    };
    (flag, explanations)
}

/// Where the object should be on a frame it was not seen: the coasted
/// prediction inside a track's life, a backward projection before it.
fn estimated_center(track: &Track, kind: DiscontinuityKind, f: usize) -> Option<Point> {
    match kind {
        DiscontinuityKind::Appear => {
            let first = track.first_frame()?;
            let origin = track.centers_observed[first]?;
            let v = early_velocity(track);
            let dt = (first - f) as f64;
            Some(Point::new(origin.x - v.x * dt, origin.y - v.y * dt))
        }
        _ => track.centers_predicted[f],
    }
}

/// Least-squares velocity over the first detections of a track.
fn early_velocity(track: &Track) -> Point {
    let pts: Vec<(f64, Point)> = track
        .detected_indices()
        .take(BACKCAST_WINDOW)
        .filter_map(|f| track.centers_observed[f].map(|c| (f as f64, c)))
        .collect();
    if pts.len() < 2 {
        return Point::default();
    }
    let k = pts.len() as f64;
    let mean_t = pts.iter().map(|(t, _)| t).sum::<f64>() / k;
    let mean_x = pts.iter().map(|(_, p)| p.x).sum::<f64>() / k;
    let mean_y = pts.iter().map(|(_, p)| p.y).sum::<f64>() / k;
    let var_t: f64 = pts.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
    let cov_x: f64 = pts.iter().map(|(t, p)| (t - mean_t) * (p.x - mean_x)).sum();
    let cov_y: f64 = pts.iter().map(|(t, p)| (t - mean_t) * (p.y - mean_y)).sum();
    Point::new(cov_x / var_t, cov_y / var_t)
}

/// Wall box on frame `f`; walls do not move, so a missing detection falls
/// back to the nearest earlier one, then the nearest later one.
fn occluder_box(track: &Track, f: usize) -> Option<BBox> {
    let f = f.min(track.len().saturating_sub(1));
    track.boxes[..=f]
        .iter()
        .rev()
        .flatten()
        .next()
        .or_else(|| track.boxes[f..].iter().flatten().next())
        .copied()
}

/// Tracks, scores and explains one event without touching any knowledge.
pub fn analyze_event(
    trace: &EventTrace,
    cfg: &PipelineConfig,
) -> Result<EventAnalysis, PipelineError> {
    let violations = validate_trace(trace);
    if !violations.is_empty() {
        return Err(PipelineError::InvalidTrace(violations));
    }
    let tracks = track_event(trace, &cfg.tracker, &cfg.scene)?;
    let focus = focus_track(&tracks)
        .ok_or(PipelineError::NoObjects)?
        .track_id;
    let occluder_present = tracks.iter().any(|t| t.occluder);

    let mut scoring = cfg.scoring.clone();
    if occluder_present {
        if let Some(w) = cfg.scoring.weights_with_occluder {
            scoring.weights = w;
        }
    }
    let n = trace.frames.len();
    let mut scores = Vec::new();
    for t in tracks
        .iter()
        .filter(|t| !t.occluder && t.detected_frames > 0)
    {
        let class = t.resolved_class();
        if scoring.impacts.profile(class).is_none() {
            continue;
        }
        scores.push(TrackScore {
            track_id: t.track_id,
            class,
            scores: score_track(t, n, &scoring)?,
        });
    }

    let discontinuities = detect_discontinuities(&tracks, &cfg.tracker);
    let (agent_flag, explanations) = if discontinuities.is_empty() {
        (EventFlag::Possible, Vec::new())
    } else {
        explain_discontinuities(&discontinuities, &tracks, &cfg.curiosity, &cfg.scene)
    };

    Ok(EventAnalysis {
        event_id: trace.event_id.clone(),
        frame_count: n,
        tracks,
        discontinuities,
        explanations,
        agent_flag,
        scores,
        focus_track: focus,
        occluder_present,
        ground_truth: trace.ground_truth.clone(),
    })
}

/// Statistics usable for inference: non-empty with a positive mean.
fn usable_stats(kb: &KnowledgeBase) -> Vec<ClassStats> {
    kb.class_stats()
        .into_iter()
        .filter(|s| s.count > 0 && s.mean > 0.0)
        .collect()
}

/// Applies the knowledge base to an analysis and returns the verdict.
///
/// Ground-truth agreement updates the focus class's statistics;
/// disagreement records an exception, unless the same exception has already
/// been promoted, in which case the ground-truth label is adopted.
pub fn commit_analysis(analysis: EventAnalysis, kb: &mut KnowledgeBase) -> EventVerdict {
    let focus = analysis.focus().cloned();
    let stats = usable_stats(kb);
    let z = match (&focus, stats.is_empty()) {
        (Some(f), false) => z_number(f.scores.a, &stats).ok(),
        _ => None,
    };
    let raw = match (&focus, stats.is_empty()) {
        (Some(f), false) => Some(raw_differences(f.scores.a, &stats)),
        _ => None,
    };

    let mut verdict = EventVerdict {
        event_id: analysis.event_id.clone(),
        flag: analysis.agent_flag,
        agent_flag: analysis.agent_flag,
        explanations: analysis.explanations.clone(),
        scores: analysis.scores.clone(),
        focus_track: analysis.focus_track,
        z,
        raw_differences: raw,
        ground_truth_match: None,
        occluder_present: analysis.occluder_present,
        exception: None,
        notes: Vec::new(),
    };
    if focus.is_none() {
        verdict
            .notes
            .push("focus object has no class profile; not scored".into());
    }

    let Some(gt) = &analysis.ground_truth else {
        return verdict;
    };
    let truth = EventFlag::from_possible(gt.possible);
    let agrees = analysis.agent_flag == truth;

    let signature = (!agrees).then(|| {
        ExceptionSignature::new(
            analysis.discontinuities.iter().map(|d| d.kind),
            analysis.occluder_present,
            analysis.agent_flag,
            truth,
        )
    });

    if let Some(sig) = signature {
        if kb.is_promoted(&sig) {
            let rec = kb.record_exception(sig.clone());
            verdict.exception = Some(ExceptionStatus {
                signature: sig,
                occurrences: rec.occurrences,
                promoted: true,
            });
            verdict.flag = truth;
            verdict.ground_truth_match = Some(true);
            verdict.notes.push(PROMOTED_RULE.into());
        } else {
            let rec = kb.record_exception(sig.clone());
            verdict.exception = Some(ExceptionStatus {
                signature: sig,
                occurrences: rec.occurrences,
                promoted: rec.promoted,
            });
            verdict.flag = EventFlag::Exception;
            verdict.ground_truth_match = Some(false);
            return verdict;
        }
    } else {
        verdict.ground_truth_match = Some(true);
    }

    if let (Some(f), Some(label)) = (
        &focus,
        supervision_label(gt, focus.as_ref().map(|f| f.class)),
    ) {
        // scores are finite and non-negative and the label is solid
        let _ = kb.update_stats(label, f.scores.a);
    }
    verdict
}

/// Class whose statistics a matched event updates: the focus object's own
/// class when ground truth lists it, else the first solid ground-truth class.
fn supervision_label(gt: &GroundTruth, focus_class: Option<ObjectClass>) -> Option<ObjectClass> {
    match focus_class {
        Some(c) if c.is_solid() && gt.object_classes.contains(&c) => Some(c),
        _ => gt.object_classes.iter().copied().find(|c| c.is_solid()),
    }
}

/// Classifies one event and folds its outcome into `kb`.
pub fn classify_event(
    trace: &EventTrace,
    kb: &mut KnowledgeBase,
    cfg: &PipelineConfig,
) -> Result<EventVerdict, PipelineError> {
    let analysis = analyze_event(trace, cfg)?;
    Ok(commit_analysis(analysis, kb))
}

/// Analyses every trace (in parallel when enabled), in input order.
pub fn analyze_batch(
    traces: &[EventTrace],
    cfg: &PipelineConfig,
) -> Vec<Result<EventAnalysis, PipelineError>> {
    parallel::map_batch(traces, |t| analyze_event(t, cfg))
}

pub fn analyze_batch_sequential(
    traces: &[EventTrace],
    cfg: &PipelineConfig,
) -> Vec<Result<EventAnalysis, PipelineError>> {
    parallel::map_sequential(traces, |t| analyze_event(t, cfg))
}

/// Classifies a sequence of events, threading one knowledge base through
/// them in input order. Analysis runs as a batch; knowledge updates are
/// committed sequentially, so the result equals classifying one at a time.
/// A failing event leaves its error in its slot and the stream continues.
pub fn process_stream(
    traces: &[EventTrace],
    kb: &mut KnowledgeBase,
    cfg: &PipelineConfig,
) -> Vec<Result<EventVerdict, PipelineError>> {
    analyze_batch(traces, cfg)
        .into_iter()
        .map(|a| a.map(|a| commit_analysis(a, kb)))
        .collect()
}
