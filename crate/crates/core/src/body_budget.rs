//! Body-budget scores: object permanence, shape constancy and
//! spatial-temporal continuity, combined into the composite score `A`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace_model::{ClassProfile, ImpactTable, ObjectClass};
use crate::tracker::Track;

/// Fixed divisor of the object-permanence sum. Not configurable: it sets
/// the per-class score bands.
pub const PERMANENCE_DIVISOR: f64 = 1000.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("occluder tracks are not scored")]
    Occluder,
    #[error("class {0} has no impact value")]
    NoProfile(ObjectClass),
    #[error("track has no detections")]
    NoDetections,
    #[error("track detected in {detected} frames but the event has {n}")]
    TooManyDetections { detected: usize, n: usize },
    #[error("event frame count must be at least 1")]
    ZeroFrames,
    #[error("weights must lie in [0, 1]: {0:?}")]
    InvalidWeights(WeightConfig),
}

/// Weights of the three scores in `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            alpha: 0.33,
            beta: 0.33,
            gamma: 0.33,
        }
    }
}

impl WeightConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ScoreError> {
        let w = Self { alpha, beta, gamma };
        if w.is_valid() {
            Ok(w)
        } else {
            Err(ScoreError::InvalidWeights(w))
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|w| (0.0..=1.0).contains(w))
    }
}

/// How shape constancy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeConstancyMode {
    /// One minus the mean descriptor distance between consecutive detections.
    #[default]
    Descriptor,
    /// Mean detector confidence over detected frames.
    MeanConfidence,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub weights: WeightConfig,
    /// Used instead of `weights` when the event contains an occluder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_with_occluder: Option<WeightConfig>,
    pub impacts: ImpactTable,
    pub shape_constancy: ShapeConstancyMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyBudgetScores {
    pub s_op: f64,
    pub s_sc: f64,
    pub s_stc: f64,
    pub a: f64,
    pub weights: WeightConfig,
}

impl BodyBudgetScores {
    /// Recomputes `a` from the stored weights.
    pub fn is_consistent(&self, tol: f64) -> bool {
        (composite_score(self.s_op, self.s_sc, self.s_stc, &self.weights) - self.a).abs() <= tol
    }
}

/// Σ (confidence × impact value) / 1000 over detected frames.
pub fn score_object_permanence(track: &Track, profile: &ClassProfile) -> Result<f64, ScoreError> {
    if track.occluder || profile.class.is_occluder() {
        return Err(ScoreError::Occluder);
    }
    let total: f64 = track
        .confidences
        .iter()
        .flatten()
        .map(|c| c * profile.impact_value)
        .sum();
    Ok(total / PERMANENCE_DIVISOR)
}

/// `1 - (N - detected) / N`, i.e. the detected fraction of the event.
pub fn score_spatial_temporal(track: &Track, n: usize) -> Result<f64, ScoreError> {
    spatial_temporal_from_counts(track.detected_frames, n)
}

pub fn spatial_temporal_from_counts(detected: usize, n: usize) -> Result<f64, ScoreError> {
    if n == 0 {
        return Err(ScoreError::ZeroFrames);
    }
    if detected > n {
        return Err(ScoreError::TooManyDetections { detected, n });
    }
    let n = n as f64;
    Ok(1.0 - (n - detected as f64) / n)
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, in `[0, 1]`; 0 when both are zero.
///
/// The shorter vector is zero-padded.
pub fn normalized_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let diff = (0..len)
        .map(|i| (get(a, i) - get(b, i)).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(a) + norm(b);
    if denom == 0.0 {
        0.0
    } else {
        (diff / denom).clamp(0.0, 1.0)
    }
}

pub fn score_shape_constancy(track: &Track, mode: ShapeConstancyMode) -> Result<f64, ScoreError> {
    let detected: Vec<usize> = track.detected_indices().collect();
    if detected.is_empty() {
        return Err(ScoreError::NoDetections);
    }
    let confidence = |f: usize| track.confidences[f].unwrap_or(0.0);
    if detected.len() == 1 {
        return Ok(confidence(detected[0]));
    }
    match mode {
        ShapeConstancyMode::MeanConfidence => {
            Ok(detected.iter().map(|&f| confidence(f)).sum::<f64>() / detected.len() as f64)
        }
        ShapeConstancyMode::Descriptor => {
            let empty = Vec::new();
            let desc = |f: usize| track.descriptors[f].as_ref().unwrap_or(&empty);
            let pairs = detected.windows(2);
            let count = pairs.len() as f64;
            let total: f64 = pairs
                .map(|w| normalized_distance(desc(w[0]), desc(w[1])))
                .sum();
            Ok((1.0 - total / count).clamp(0.0, 1.0))
        }
    }
}

/// `α·S_op + β·S_sc + γ·S_stc`.
pub fn composite_score(s_op: f64, s_sc: f64, s_stc: f64, w: &WeightConfig) -> f64 {
    w.alpha * s_op + w.beta * s_sc + w.gamma * s_stc
}

/// All three scores plus `A` for one motion track, using its majority class.
pub fn score_track(
    track: &Track,
    n: usize,
    cfg: &ScoringConfig,
) -> Result<BodyBudgetScores, ScoreError> {
    if track.occluder {
        return Err(ScoreError::Occluder);
    }
    let class = track.resolved_class();
    let profile = cfg
        .impacts
        .profile(class)
        .ok_or(ScoreError::NoProfile(class))?;
    let s_op = score_object_permanence(track, &profile)?;
    let s_sc = score_shape_constancy(track, cfg.shape_constancy)?;
    let s_stc = score_spatial_temporal(track, n)?;
    Ok(BodyBudgetScores {
        s_op,
        s_sc,
        s_stc,
        a: composite_score(s_op, s_sc, s_stc, &cfg.weights),
        weights: cfg.weights,
    })
}

/// The motion track with the most detections; lowest id on ties.
pub fn focus_track(tracks: &[Track]) -> Option<&Track> {
    tracks
        .iter()
        .filter(|t| !t.occluder && t.detected_frames > 0)
        .min_by(|a, b| {
            b.detected_frames
                .cmp(&a.detected_frames)
                .then(a.track_id.cmp(&b.track_id))
        })
}
