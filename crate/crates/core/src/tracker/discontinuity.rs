use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Track, TrackerParams};
use crate::body_budget::normalized_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscontinuityKind {
    Vanish,
    Appear,
    Jump,
    ShapeSwitch,
}

impl DiscontinuityKind {
    /// Only absences can be explained by something hiding the object.
    pub fn is_absence(self) -> bool {
        matches!(self, DiscontinuityKind::Vanish | DiscontinuityKind::Appear)
    }
}

impl fmt::Display for DiscontinuityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscontinuityKind::Vanish => "vanish",
            DiscontinuityKind::Appear => "appear",
            DiscontinuityKind::Jump => "jump",
            DiscontinuityKind::ShapeSwitch => "shape_switch",
        })
    }
}

/// A break between what the track predicts and what was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discontinuity {
    pub track_id: usize,
    pub kind: DiscontinuityKind,
    /// Inclusive frame range.
    pub frame_span: [usize; 2],
    /// Gap length in frames for absences, residual in px for jumps,
    /// descriptor distance for shape switches.
    pub magnitude: f64,
}

impl Discontinuity {
    pub fn start(&self) -> usize {
        self.frame_span[0]
    }

    pub fn end(&self) -> usize {
        self.frame_span[1]
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start()..=self.end()
    }
}

/// Scans motion tracks for absences, jumps and shape switches.
///
/// Occluder tracks are ignored. The result is sorted by start frame, then
/// track, then kind.
pub fn detect_discontinuities(tracks: &[Track], params: &TrackerParams) -> Vec<Discontinuity> {
    let mut out = Vec::new();
    for track in tracks.iter().filter(|t| !t.occluder) {
        let Some(first) = track.first_frame() else {
            continue;
        };
        let id = track.track_id;
        if first > 0 {
            out.push(Discontinuity {
                track_id: id,
                kind: DiscontinuityKind::Appear,
                frame_span: [0, first - 1],
                magnitude: first as f64,
            });
        }

        let mut t = first;
        while t < track.len() {
            if track.presence[t] {
                t += 1;
                continue;
            }
            let start = t;
            while t < track.len() && !track.presence[t] {
                t += 1;
            }
            out.push(Discontinuity {
                track_id: id,
                kind: DiscontinuityKind::Vanish,
                frame_span: [start, t - 1],
                magnitude: (t - start) as f64,
            });
        }

        for f in track.detected_indices() {
            if track.is_jump(f, params.jump_gate) {
                out.push(Discontinuity {
                    track_id: id,
                    kind: DiscontinuityKind::Jump,
                    frame_span: [f, f],
                    magnitude: track.residuals[f].unwrap_or_default(),
                });
            }
        }

        out.extend(shape_switches(track, params.shape_switch_run));
    }
    out.sort_by(|a, b| {
        a.start()
            .cmp(&b.start())
            .then(a.track_id.cmp(&b.track_id))
            .then(a.kind.cmp(&b.kind))
    });
    out
}

/// A switch is called when a class other than the established one holds
/// for at least `run` consecutive detections; shorter runs are flicker.
fn shape_switches(track: &Track, run: usize) -> Vec<Discontinuity> {
    let detected: Vec<usize> = track.detected_indices().collect();
    let mut out = Vec::new();
    let Some(&first) = detected.first() else {
        return out;
    };
    let mut established = track.frame_classes[first];
    let mut i = 1;
    while i < detected.len() {
        let f = detected[i];
        let class = track.frame_classes[f];
        if class != established {
            let held = detected[i..]
                .iter()
                .take_while(|&&g| track.frame_classes[g] == class)
                .count();
            if held >= run {
                let before = &track.descriptors[detected[i - 1]];
                let after = &track.descriptors[f];
                let magnitude = match (before, after) {
                    (Some(a), Some(b)) => normalized_distance(a, b),
                    _ => 0.0,
                };
                out.push(Discontinuity {
                    track_id: track.track_id,
                    kind: DiscontinuityKind::ShapeSwitch,
                    frame_span: [f, f],
                    magnitude,
                });
                established = class;
                i += held;
                continue;
            }
        }
        i += 1;
    }
    out
}
