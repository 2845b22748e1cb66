//! Detection-to-track association, Kalman prediction and discontinuity flags.

mod discontinuity;
mod kalman;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use discontinuity::{detect_discontinuities, Discontinuity, DiscontinuityKind};
pub use kalman::{predict_step, update_step, FilterState, COVARIANCE_TOL};

use crate::trace_model::{BBox, Detection, EventTrace, ObjectClass, Point, SceneBounds};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("covariance is not symmetric positive semi-definite: {0}")]
    NotPsd(String),
    #[error("innovation covariance is singular")]
    Singular,
}

/// Association gates and filter noise settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Max distance (px) between predicted centre and detection for a match.
    pub assoc_gate: f64,
    /// Residual (px) above which a detection counts as a positional jump.
    pub jump_gate: f64,
    /// Process noise, `Q = q·I`.
    pub q: f64,
    /// Measurement noise, `R = r·I` (px²).
    pub r: f64,
    /// Initial covariance, `P0 = p0·I`.
    pub p0: f64,
    /// Consecutive detections of a new class needed to call a shape switch.
    pub shape_switch_run: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            assoc_gate: 50.0,
            jump_gate: 25.0,
            q: 1.0,
            r: 2.0,
            p0: 100.0,
            shape_switch_run: 3,
        }
    }
}

impl TrackerParams {
    pub fn is_valid(&self) -> bool {
        [self.assoc_gate, self.jump_gate, self.q, self.r, self.p0]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.shape_switch_run > 0
    }
}

/// One object's trajectory over the whole event. Every per-frame vector has
/// length N.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: usize,
    /// Wall tracks are occluders and are never scored.
    pub occluder: bool,
    pub class_votes: BTreeMap<ObjectClass, usize>,
    pub frame_classes: Vec<Option<ObjectClass>>,
    pub presence: Vec<bool>,
    pub centers_observed: Vec<Option<Point>>,
    pub centers_predicted: Vec<Option<Point>>,
    pub residuals: Vec<Option<f64>>,
    pub confidences: Vec<Option<f64>>,
    pub boxes: Vec<Option<BBox>>,
    pub descriptors: Vec<Option<Vec<f64>>>,
    pub detected_frames: usize,
}

impl Track {
    pub(crate) fn new(track_id: usize, occluder: bool, n: usize) -> Self {
        Self {
            track_id,
            occluder,
            class_votes: BTreeMap::new(),
            frame_classes: vec![None; n],
            presence: vec![false; n],
            centers_observed: vec![None; n],
            centers_predicted: vec![None; n],
            residuals: vec![None; n],
            confidences: vec![None; n],
            boxes: vec![None; n],
            descriptors: vec![None; n],
            detected_frames: 0,
        }
    }

    /// Number of frames covered (N).
    pub fn len(&self) -> usize {
        self.presence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presence.is_empty()
    }

    pub fn first_frame(&self) -> Option<usize> {
        self.presence.iter().position(|&p| p)
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.presence.iter().rposition(|&p| p)
    }

    /// Majority class; ties go to the class seen first.
    pub fn resolved_class(&self) -> ObjectClass {
        let best = self.class_votes.values().copied().max().unwrap_or(0);
        self.frame_classes
            .iter()
            .flatten()
            .find(|c| self.class_votes.get(c) == Some(&best))
            .copied()
            .unwrap_or(ObjectClass::Unknown)
    }

    /// Indices of frames with a detection, in order.
    pub fn detected_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.presence
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| p.then_some(i))
    }

    /// True when frame `f` is a positional jump: the residual exceeds
    /// `jump_gate` and the filter has already absorbed two detections.
    pub fn is_jump(&self, f: usize, jump_gate: f64) -> bool {
        self.presence[f]
            && self.residuals[f].is_some_and(|r| r > jump_gate)
            && self.presence[..f].iter().filter(|&&p| p).count() >= 2
    }

    fn record(&mut self, t: usize, det: &Detection, scene: &SceneBounds) {
        self.presence[t] = true;
        self.detected_frames += 1;
        self.frame_classes[t] = Some(det.class);
        *self.class_votes.entry(det.class).or_insert(0) += 1;
        self.centers_observed[t] = Some(det.center());
        self.confidences[t] = Some(det.confidence);
        self.boxes[t] = Some(det.bbox);
        self.descriptors[t] = Some(det.descriptor(scene));
    }

    /// Per-frame series as CSV:
    /// `frame,observed_x,observed_y,predicted_x,predicted_y,residual,present`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("frame,observed_x,observed_y,predicted_x,predicted_y,residual,present\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in 0..self.len() {
            let o = self.centers_observed[t];
            let p = self.centers_predicted[t];
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{},{}",
                opt(o.map(|c| c.x)),
                opt(o.map(|c| c.y)),
                opt(p.map(|c| c.x)),
                opt(p.map(|c| c.y)),
                opt(self.residuals[t]),
                u8::from(self.presence[t]),
            );
        }
        out
    }
}

struct LiveTrack {
    track: Track,
    filter: FilterState,
}

/// Runs association and filtering over an event.
///
/// Solid detections go to motion tracks, walls to occluder tracks. Tracks
/// are never terminated; they coast through gaps so predictions exist on
/// every frame after their first detection.
pub fn track_event(
    trace: &EventTrace,
    params: &TrackerParams,
    scene: &SceneBounds,
) -> Result<Vec<Track>, FilterError> {
    let n = trace.frames.len();
    let mut solids: Vec<LiveTrack> = Vec::new();
    let mut walls: Vec<LiveTrack> = Vec::new();
    let mut next_id = 0usize;

    for (t, frame) in trace.frames.iter().enumerate() {
        let (wall_dets, solid_dets): (Vec<&Detection>, Vec<&Detection>) =
            canonical_order(&frame.detections)
                .into_iter()
                .partition(|d| d.class.is_occluder());
        step_pool(
            &mut solids,
            &solid_dets,
            t,
            n,
            false,
            params,
            scene,
            &mut next_id,
        )?;
        step_pool(
            &mut walls,
            &wall_dets,
            t,
            n,
            true,
            params,
            scene,
            &mut next_id,
        )?;
    }

    let mut tracks: Vec<Track> = solids.into_iter().chain(walls).map(|l| l.track).collect();
    tracks.sort_by_key(|t| t.track_id);
    Ok(tracks)
}

/// Orders detections by content so association is independent of the
/// order they were listed in.
fn canonical_order(dets: &[Detection]) -> Vec<&Detection> {
    let mut v: Vec<&Detection> = dets.iter().collect();
    v.sort_by(|a, b| {
        a.class
            .cmp(&b.class)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
            .then(a.bbox.w.total_cmp(&b.bbox.w))
            .then(a.bbox.h.total_cmp(&b.bbox.h))
            .then(a.confidence.total_cmp(&b.confidence))
    });
    v
}

#[allow(clippy::too_many_arguments)]
fn step_pool(
    pool: &mut Vec<LiveTrack>,
    dets: &[&Detection],
    t: usize,
    n: usize,
    occluder: bool,
    params: &TrackerParams,
    scene: &SceneBounds,
    next_id: &mut usize,
) -> Result<(), FilterError> {
    for live in pool.iter_mut() {
        live.filter = predict_step(&live.filter, params)?;
        live.track.centers_predicted[t] = Some(live.filter.position());
    }

    let mut track_taken = vec![false; pool.len()];
    let mut det_taken = vec![false; dets.len()];
    let mut matches: Vec<(usize, usize)> = Vec::new();

    // Greedy nearest neighbour inside the gate; same class wins ties.
    let mut candidates: Vec<(f64, bool, usize, usize)> = Vec::new();
    for (ti, live) in pool.iter().enumerate() {
        let pred = live.filter.position();
        for (di, det) in dets.iter().enumerate() {
            let d = pred.distance(det.center());
            if d <= params.assoc_gate {
                let mismatch = live.track.resolved_class() != det.class;
                candidates.push((d, mismatch, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    for &(_, _, ti, di) in &candidates {
        if !track_taken[ti] && !det_taken[di] {
            track_taken[ti] = true;
            det_taken[di] = true;
            matches.push((ti, di));
        }
    }

    // A same-class track seen on the previous frame keeps a detection that
    // landed outside the gate, so a teleport reads as a jump rather than a
    // vanish plus an appear.
    if !occluder && t > 0 {
        let mut fallback: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, live) in pool.iter().enumerate() {
            if track_taken[ti] || !live.track.presence[t - 1] {
                continue;
            }
            let class = live.track.frame_classes[t - 1];
            for (di, det) in dets.iter().enumerate() {
                if !det_taken[di] && class == Some(det.class) {
                    fallback.push((live.filter.position().distance(det.center()), ti, di));
                }
            }
        }
        fallback.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, ti, di) in &fallback {
            if !track_taken[ti] && !det_taken[di] {
                track_taken[ti] = true;
                det_taken[di] = true;
                matches.push((ti, di));
            }
        }
    }

    for (ti, di) in matches {
        let det = dets[di];
        let live = &mut pool[ti];
        let obs = det.center();
        live.track.residuals[t] = Some(live.filter.position().distance(obs));
        live.track.record(t, det, scene);
        if live.track.is_jump(t, params.jump_gate) {
            // restart the position estimate at the new location, keep velocity
            let mut fresh = FilterState::at_rest(obs, params.p0);
            fresh.mean[2] = live.filter.mean[2];
            fresh.mean[3] = live.filter.mean[3];
            live.filter = fresh;
        } else {
            live.filter = update_step(&live.filter, obs, params)?;
        }
    }

    for (di, det) in dets.iter().enumerate() {
        if det_taken[di] {
            continue;
        }
        let mut track = Track::new(*next_id, occluder, n);
        *next_id += 1;
        track.record(t, det, scene);
        pool.push(LiveTrack {
            track,
            filter: FilterState::at_rest(det.center(), params.p0),
        });
    }
    Ok(())
}
