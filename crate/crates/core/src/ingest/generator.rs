//! Deterministic synthetic events.
//!
//! One object moves at constant velocity across a fixed-size scene,
//! optionally behind a wall. Impossible kinds script exactly one
//! violation at `violation_frame`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::trace_model::{
    derived_descriptor, BBox, Detection, EventTrace, FrameRecord, GroundTruth, ObjectClass, Point,
    SceneBounds,
};

/// Minimum number of frames in a generated event.
pub const MIN_FRAMES: usize = 10;
/// Detector confidence written for walls.
pub const WALL_CONFIDENCE: f64 = 0.9;
/// Frames of the new class needed after a shape switch.
const SHAPE_SWITCH_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    PossibleVisible,
    PossibleOccluded,
    ImpossibleDisappear,
    ImpossibleTeleport,
    ImpossibleShapeChange,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::PossibleVisible,
        ScenarioKind::PossibleOccluded,
        ScenarioKind::ImpossibleDisappear,
        ScenarioKind::ImpossibleTeleport,
        ScenarioKind::ImpossibleShapeChange,
    ];

    pub fn is_possible(self) -> bool {
        matches!(
            self,
            ScenarioKind::PossibleVisible | ScenarioKind::PossibleOccluded
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::PossibleVisible => "possible-visible",
            ScenarioKind::PossibleOccluded => "possible-occluded",
            ScenarioKind::ImpossibleDisappear => "impossible-disappear",
            ScenarioKind::ImpossibleTeleport => "impossible-teleport",
            ScenarioKind::ImpossibleShapeChange => "impossible-shape-change",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scenario kind `{s}`"))
    }
}

/// Parameters of one synthetic event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub object_class: ObjectClass,
    pub frame_count: usize,
    pub occluder: Option<BBox>,
    /// Pixels per frame.
    pub velocity: Point,
    /// Centre of the object at frame 0.
    pub start: Point,
    /// Frame of the scripted violation; `frame_count / 2` when unset.
    pub violation_frame: Option<usize>,
    pub seed: u64,
    /// Standard deviation of the Gaussian jitter on object centres.
    pub noise_sigma: f64,
    /// Detector confidence for the moving object.
    pub confidence: f64,
    pub scene: SceneBounds,
}

impl ScenarioSpec {
    /// Defaults: velocity (3, 0), start (40, 180), no noise, confidence 0.6.
    /// Occluded scenarios get [`default_occluder`].
    pub fn new(
        kind: ScenarioKind,
        object_class: ObjectClass,
        frame_count: usize,
        seed: u64,
    ) -> Self {
        let velocity = Point::new(3.0, 0.0);
        let start = Point::new(40.0, 180.0);
        let occluder = (kind == ScenarioKind::PossibleOccluded)
            .then(|| default_occluder(start, velocity, frame_count));
        Self {
            kind,
            object_class,
            frame_count,
            occluder,
            velocity,
            start,
            violation_frame: None,
            seed,
            noise_sigma: 0.0,
            confidence: 0.6,
            scene: SceneBounds::default(),
        }
    }

    pub fn event_id(&self) -> String {
        format!(
            "{}-{}-n{}-s{}",
            self.kind, self.object_class, self.frame_count, self.seed
        )
    }

    pub fn violation_frame(&self) -> usize {
        self.violation_frame.unwrap_or(self.frame_count / 2)
    }

    /// Noise-free object centre at frame `t`, including any teleport offset.
    pub fn scripted_center(&self, t: usize) -> Point {
        let tf = t as f64;
        let mut c = Point::new(
            self.start.x + self.velocity.x * tf,
            self.start.y + self.velocity.y * tf,
        );
        if self.kind == ScenarioKind::ImpossibleTeleport && t >= self.violation_frame() {
            let j = self.teleport_offset();
            c.x += j.x;
            c.y += j.y;
        }
        c
    }

    /// Offset applied at the teleport frame: along the direction of motion,
    /// at least 12 per-frame displacements and at least 60 px.
    pub fn teleport_offset(&self) -> Point {
        let speed = self.velocity.x.hypot(self.velocity.y);
        let magnitude = (12.0 * speed).max(60.0);
        if speed > 0.0 {
            Point::new(
                self.velocity.x / speed * magnitude,
                self.velocity.y / speed * magnitude,
            )
        } else {
            Point::new(magnitude, 0.0)
        }
    }

    /// Class shown at frame `t`.
    pub fn scripted_class(&self, t: usize) -> ObjectClass {
        if self.kind == ScenarioKind::ImpossibleShapeChange && t >= self.violation_frame() {
            switched_class(self.object_class)
        } else {
            self.object_class
        }
    }

    fn hidden_by_occluder(&self, t: usize) -> bool {
        self.occluder
            .is_some_and(|o| o.contains(self.scripted_center(t)))
    }

    /// Checks the spec for contradictions before generation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.frame_count;
        if n < MIN_FRAMES {
            return Err(ScenarioError::TooFewFrames(n));
        }
        if !self.object_class.is_solid() {
            return Err(ScenarioError::NotSolid(self.object_class));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            )));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(ScenarioError::Invalid(format!(
                "confidence {} must lie in (0, 1]",
                self.confidence
            )));
        }
        if ![self.velocity.x, self.velocity.y, self.start.x, self.start.y]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(ScenarioError::Invalid(
                "non-finite start or velocity".into(),
            ));
        }
        if let Some(o) = self.occluder {
            if !(o.w > 0.0 && o.h > 0.0) {
                return Err(ScenarioError::Invalid(
                    "occluder must have positive size".into(),
                ));
            }
        }
        let k = self.violation_frame();
        let k_range = match self.kind {
            ScenarioKind::ImpossibleShapeChange => 1..=n - SHAPE_SWITCH_RUN,
            ScenarioKind::ImpossibleDisappear | ScenarioKind::ImpossibleTeleport => 1..=n - 1,
            _ => 0..=n,
        };
        if !k_range.contains(&k) {
            return Err(ScenarioError::Invalid(format!(
                "violation frame {k} outside {}..={}",
                k_range.start(),
                k_range.end()
            )));
        }
        if let Some(t) = (0..n).find(|&t| !self.scene.contains(self.scripted_center(t))) {
            return Err(ScenarioError::LeavesScene(t));
        }

        let hidden: Vec<usize> = (0..n).filter(|&t| self.hidden_by_occluder(t)).collect();
        match self.kind {
            ScenarioKind::PossibleOccluded => {
                if self.occluder.is_none() {
                    return Err(ScenarioError::MissingOccluder);
                }
                if hidden.is_empty() {
                    return Err(ScenarioError::Invalid(
                        "occluder never hides the object; use possible-visible".into(),
                    ));
                }
                if hidden.len() == n {
                    return Err(ScenarioError::Invalid(
                        "occluder hides the object on every frame".into(),
                    ));
                }
            }
            _ => {
                if let Some(&t) = hidden.first() {
                    return Err(ScenarioError::OccluderOnPath(t));
                }
            }
        }
        Ok(())
    }
}

/// The class an object turns into in a shape-change event.
pub fn switched_class(class: ObjectClass) -> ObjectClass {
    match class {
        ObjectClass::Sphere => ObjectClass::Cube,
        ObjectClass::Cube => ObjectClass::Cone,
        _ => ObjectClass::Sphere,
    }
}

/// Rendered size (w, h) of each class in pixels.
pub fn class_size(class: ObjectClass) -> (f64, f64) {
    match class {
        ObjectClass::Sphere => (30.0, 30.0),
        ObjectClass::Cone => (30.0, 40.0),
        ObjectClass::Cube => (36.0, 36.0),
        _ => (40.0, 120.0),
    }
}

/// A wall hiding the scripted path on frames `[4N/9, 4N/9 + 8N/45 - 1]`
/// (frames 40..=55 for N = 90).
///
/// Along each moving axis the wall spans the hidden centres plus half a
/// step on each side; along a static axis it extends 60 px either way.
pub fn default_occluder(start: Point, velocity: Point, frame_count: usize) -> BBox {
    let first = 4 * frame_count / 9;
    let len = (8 * frame_count / 45).max(1);
    let last = first + len - 1;
    let at = |t: usize| {
        Point::new(
            start.x + velocity.x * t as f64,
            start.y + velocity.y * t as f64,
        )
    };
    let (a, b) = (at(first), at(last));
    let span = |lo: f64, hi: f64, v: f64| -> (f64, f64) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        if v.abs() > 0.0 {
            (lo - v.abs() / 2.0, hi + v.abs() / 2.0)
        } else {
            (lo - 60.0, hi + 60.0)
        }
    };
    let (x0, x1) = span(a.x, b.x, velocity.x);
    let (y0, y1) = span(a.y, b.y, velocity.y);
    BBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// Generates the event described by `spec`. Same spec, same trace.
pub fn generate_event(spec: &ScenarioSpec) -> Result<EventTrace, ScenarioError> {
    spec.validate()?;
    let n = spec.frame_count;
    let k = spec.violation_frame();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");

    let wall = spec.occluder.map(|o| {
        Detection::new(ObjectClass::Wall, WALL_CONFIDENCE, o)
            .with_descriptor(derived_descriptor(&o, &spec.scene))
    });

    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let mut detections = Vec::new();
        let visible = match spec.kind {
            ScenarioKind::ImpossibleDisappear => t < k,
            _ => !spec.hidden_by_occluder(t),
        };
        if visible {
            let mut c = spec.scripted_center(t);
            if spec.noise_sigma > 0.0 {
                c.x += jitter.sample(&mut rng);
                c.y += jitter.sample(&mut rng);
            }
            let class = spec.scripted_class(t);
            let (w, h) = class_size(class);
            let bbox = BBox::centered(c, w, h);
            detections.push(
                Detection::new(class, spec.confidence, bbox)
                    .with_descriptor(derived_descriptor(&bbox, &spec.scene)),
            );
        }
        if let Some(w) = &wall {
            detections.push(w.clone());
        }
        frames.push(FrameRecord::new(t as u32, detections));
    }

    let mut object_classes = vec![spec.object_class];
    if spec.occluder.is_some() {
        object_classes.push(ObjectClass::Wall);
    }
    Ok(EventTrace::new(
        spec.event_id(),
        frames,
        Some(GroundTruth {
            possible: spec.kind.is_possible(),
            object_classes,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn object_centers(trace: &EventTrace) -> Vec<Option<Point>> {
        trace
            .frames
            .iter()
            .map(|f| {
                f.detections
                    .iter()
                    .find(|d| !d.class.is_occluder())
                    .map(|d| d.center())
            })
            .collect()
    }

    #[test]
    fn visible_sphere_is_collinear_and_always_detected() {
        let spec = ScenarioSpec::new(ScenarioKind::PossibleVisible, ObjectClass::Sphere, 90, 1);
        let t = generate_event(&spec).unwrap();
        let centers = object_centers(&t);
        assert!(centers.iter().all(Option::is_some));
        for (i, c) in centers.iter().enumerate() {
            let c = c.unwrap();
            assert_eq!(c.y, 180.0);
            assert!((c.x - (40.0 + 3.0 * i as f64)).abs() < 1e-9);
        }
        assert!(t.ground_truth.as_ref().unwrap().possible);
    }

    #[test]
    fn occluded_gap_matches_geometric_intersection() {
        let spec = ScenarioSpec::new(ScenarioKind::PossibleOccluded, ObjectClass::Sphere, 90, 7);
        let wall = spec.occluder.unwrap();
        // independent oracle: intersect the line x = 40 + 3t with the wall's x-range
        let expected: Vec<usize> = (0..90)
            .filter(|&t| {
                let x = 40.0 + 3.0 * t as f64;
                x >= wall.x && x <= wall.x + wall.w
            })
            .collect();
        assert_eq!(expected, (40..=55).collect::<Vec<_>>());

        let t = generate_event(&spec).unwrap();
        let gap: Vec<usize> = object_centers(&t)
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(gap, expected);
        assert!(t
            .frames
            .iter()
            .all(|f| f.detections.iter().any(|d| d.class == ObjectClass::Wall)));
    }

    #[test]
    fn teleport_jump_exceeds_ten_median_steps() {
        let mut spec =
            ScenarioSpec::new(ScenarioKind::ImpossibleTeleport, ObjectClass::Cone, 90, 3);
        spec.violation_frame = Some(45);
        let t = generate_event(&spec).unwrap();
        let c: Vec<Point> = object_centers(&t).into_iter().map(Option::unwrap).collect();
        let mut steps: Vec<f64> = c.windows(2).map(|w| w[0].distance(w[1])).collect();
        let jump = steps[44];
        steps.sort_by(f64::total_cmp);
        let median = steps[steps.len() / 2];
        assert!(jump > 10.0 * median, "jump {jump} median {median}");
    }

    #[test]
    fn disappear_stops_detections() {
        let spec = ScenarioSpec::new(ScenarioKind::ImpossibleDisappear, ObjectClass::Cube, 40, 0);
        let t = generate_event(&spec).unwrap();
        let present: Vec<bool> = object_centers(&t).iter().map(Option::is_some).collect();
        assert!(present[..20].iter().all(|&p| p));
        assert!(present[20..].iter().all(|&p| !p));
        assert!(!t.ground_truth.unwrap().possible);
    }

    #[test]
    fn shape_change_switches_class_and_descriptor() {
        let spec = ScenarioSpec::new(
            ScenarioKind::ImpossibleShapeChange,
            ObjectClass::Sphere,
            20,
            0,
        );
        let t = generate_event(&spec).unwrap();
        let d9 = &t.frames[9].detections[0];
        let d10 = &t.frames[10].detections[0];
        assert_eq!(d9.class, ObjectClass::Sphere);
        assert_eq!(d10.class, ObjectClass::Cube);
        assert_ne!(d9.shape_descriptor, d10.shape_descriptor);
        assert!((d10.center().x - d9.center().x - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_contradictions() {
        let spec = ScenarioSpec::new(ScenarioKind::ImpossibleTeleport, ObjectClass::Sphere, 5, 0);
        assert!(matches!(
            generate_event(&spec),
            Err(ScenarioError::TooFewFrames(5))
        ));

        let mut spec =
            ScenarioSpec::new(ScenarioKind::PossibleOccluded, ObjectClass::Sphere, 90, 0);
        spec.occluder = None;
        assert!(matches!(
            generate_event(&spec),
            Err(ScenarioError::MissingOccluder)
        ));

        let mut spec = ScenarioSpec::new(
            ScenarioKind::ImpossibleDisappear,
            ObjectClass::Sphere,
            90,
            0,
        );
        spec.occluder = Some(default_occluder(spec.start, spec.velocity, 90));
        assert!(matches!(
            generate_event(&spec),
            Err(ScenarioError::OccluderOnPath(40))
        ));

        let mut spec = ScenarioSpec::new(ScenarioKind::PossibleVisible, ObjectClass::Sphere, 90, 0);
        spec.velocity = Point::new(10.0, 0.0);
        assert!(matches!(
            generate_event(&spec),
            Err(ScenarioError::LeavesScene(_))
        ));

        let spec = ScenarioSpec::new(ScenarioKind::PossibleVisible, ObjectClass::Wall, 90, 0);
        assert!(matches!(
            generate_event(&spec),
            Err(ScenarioError::NotSolid(_))
        ));
    }

    #[test]
    fn same_seed_same_trace_with_noise() {
        let mut spec =
            ScenarioSpec::new(ScenarioKind::PossibleVisible, ObjectClass::Sphere, 30, 11);
        spec.noise_sigma = 1.5;
        let a = generate_event(&spec).unwrap();
        let b = generate_event(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 12;
        assert_ne!(a, generate_event(&spec).unwrap());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.as_str().parse::<ScenarioKind>().unwrap(), k);
        }
    }
}
