//! Shared vocabulary: object classes, detections, frames and event traces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Default scene width in pixels.
pub const SCENE_WIDTH: f64 = 640.0;
/// Default scene height in pixels.
pub const SCENE_HEIGHT: f64 = 360.0;

/// Object category reported by the detector.
///
/// The declaration order (Sphere < Cone < Cube) is the tie-break order used
/// by class inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Sphere,
    Cone,
    Cube,
    Wall,
    Unknown,
}

impl ObjectClass {
    /// Classes that can be scored and inferred.
    pub const SOLIDS: [ObjectClass; 3] =
        [ObjectClass::Sphere, ObjectClass::Cone, ObjectClass::Cube];

    /// Walls are the only occluders.
    pub fn is_occluder(self) -> bool {
        self == ObjectClass::Wall
    }

    pub fn is_solid(self) -> bool {
        matches!(
            self,
            ObjectClass::Sphere | ObjectClass::Cone | ObjectClass::Cube
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Sphere => "sphere",
            ObjectClass::Cone => "cone",
            ObjectClass::Cube => "cube",
            ObjectClass::Wall => "wall",
            ObjectClass::Unknown => "unknown",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sphere" => Ok(ObjectClass::Sphere),
            "cone" => Ok(ObjectClass::Cone),
            "cube" => Ok(ObjectClass::Cube),
            "wall" => Ok(ObjectClass::Wall),
            "unknown" => Ok(ObjectClass::Unknown),
            other => Err(format!("unknown object class `{other}`")),
        }
    }
}

/// Class-specific impact value used by the object-permanence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub class: ObjectClass,
    pub impact_value: f64,
}

/// Impact values per scorable class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactTable {
    pub sphere: f64,
    pub cone: f64,
    pub cube: f64,
}

impl Default for ImpactTable {
    fn default() -> Self {
        Self {
            sphere: 10.0,
            cone: 100.0,
            cube: 1000.0,
        }
    }
}

impl ImpactTable {
    /// Profile for `class`; walls and unknown objects have none.
    pub fn profile(&self, class: ObjectClass) -> Option<ClassProfile> {
        let impact_value = match class {
            ObjectClass::Sphere => self.sphere,
            ObjectClass::Cone => self.cone,
            ObjectClass::Cube => self.cube,
            ObjectClass::Wall | ObjectClass::Unknown => return None,
        };
        Some(ClassProfile {
            class,
            impact_value,
        })
    }

    pub fn is_valid(&self) -> bool {
        [self.sphere, self.cone, self.cube]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// A 2D point in pixel coordinates (y grows downward).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box, top-left origin, pixel units.
///
/// Encoded on the wire as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Box of size `w`×`h` centred on `c`.
    pub fn centered(c: Point, w: f64, h: f64) -> Self {
        Self::new(c.x - w / 2.0, c.y - h / 2.0, w, h)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }

    /// Grows the box by `margin` pixels on every side.
    pub fn inflate(&self, margin: f64) -> Self {
        Self::new(
            self.x - margin,
            self.y - margin,
            self.w + 2.0 * margin,
            self.h + 2.0 * margin,
        )
    }

    /// True when `other` lies entirely inside `self`.
    pub fn encloses(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }
}

/// Scene extent used to normalise shape descriptors and to decide
/// whether a position has left the field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneBounds {
    pub width: f64,
    pub height: f64,
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self {
            width: SCENE_WIDTH,
            height: SCENE_HEIGHT,
        }
    }
}

impl SceneBounds {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }
}

/// One detected object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    pub confidence: f64,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_descriptor: Option<Vec<f64>>,
}

impl Detection {
    pub fn new(class: ObjectClass, confidence: f64, bbox: BBox) -> Self {
        Self {
            class,
            confidence,
            bbox,
            shape_descriptor: None,
        }
    }

    pub fn with_descriptor(mut self, descriptor: Vec<f64>) -> Self {
        self.shape_descriptor = Some(descriptor);
        self
    }

    pub fn center(&self) -> Point {
        self.bbox.center()
    }

    /// The supplied descriptor, or `(w/h, w·h / scene area)` derived from the box.
    pub fn descriptor(&self, scene: &SceneBounds) -> Vec<f64> {
        match &self.shape_descriptor {
            Some(d) => d.clone(),
            None => derived_descriptor(&self.bbox, scene),
        }
    }
}

pub fn derived_descriptor(bbox: &BBox, scene: &SceneBounds) -> Vec<f64> {
    vec![bbox.w / bbox.h, bbox.w * bbox.h / scene.area()]
}

/// All detections of one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u32,
    pub detections: Vec<Detection>,
}

impl FrameRecord {
    pub fn new(frame_index: u32, detections: Vec<Detection>) -> Self {
        Self {
            frame_index,
            detections,
        }
    }
}

/// Labelled outcome of an event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub possible: bool,
    pub object_classes: Vec<ObjectClass>,
}

/// A full event: every frame from start to end, plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub event_id: String,
    pub frame_count: usize,
    pub frames: Vec<FrameRecord>,
    pub ground_truth: Option<GroundTruth>,
}

impl EventTrace {
    /// Builds a trace whose `frame_count` matches `frames`.
    pub fn new(
        event_id: impl Into<String>,
        frames: Vec<FrameRecord>,
        ground_truth: Option<GroundTruth>,
    ) -> Self {
        Self {
            event_id: event_id.into(),
            frame_count: frames.len(),
            frames,
            ground_truth,
        }
    }

    pub fn has_occluder(&self) -> bool {
        self.frames
            .iter()
            .flat_map(|f| &f.detections)
            .any(|d| d.class.is_occluder())
    }
}

/// One broken invariant found by [`validate_trace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub frame_index: Option<u32>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame_index {
            Some(i) => write!(f, "frame {i}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Checks every structural invariant of a trace and reports what is broken.
///
/// Returns an empty list for a well-formed trace. Never fails.
pub fn validate_trace(trace: &EventTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame_index: Option<u32>, field: &'static str, message: String| {
        out.push(Violation {
            frame_index,
            field,
            message,
        })
    };

    if trace.frames.is_empty() {
        push(None, "frames", "an event needs at least one frame".into());
    }
    if trace.frame_count != trace.frames.len() {
        push(
            None,
            "frame_count",
            format!(
                "header declares {} frames but {} are present",
                trace.frame_count,
                trace.frames.len()
            ),
        );
    }
    if let Some(gt) = &trace.ground_truth {
        if gt.object_classes.is_empty() {
            push(
                None,
                "ground_truth.object_classes",
                "must not be empty".into(),
            );
        }
        if gt.object_classes.contains(&ObjectClass::Unknown) {
            push(
                None,
                "ground_truth.object_classes",
                "unknown is not a valid ground-truth class".into(),
            );
        }
    }

    let mut descriptor_dim: Option<usize> = None;
    let mut prev: Option<u32> = None;
    for frame in &trace.frames {
        let idx = frame.frame_index;
        if let Some(p) = prev {
            if idx <= p {
                push(
                    Some(idx),
                    "frame_index",
                    format!("not strictly increasing (previous {p})"),
                );
            } else if idx > p + 1 {
                let missing = if idx == p + 2 {
                    format!("missing frame {}", p + 1)
                } else {
                    format!("missing frames {}..={}", p + 1, idx - 1)
                };
                push(Some(p + 1), "frame_index", format!("gap: {missing}"));
            }
        }
        prev = Some(prev.map_or(idx, |p| p.max(idx)));

        for det in &frame.detections {
            if !(det.confidence.is_finite() && (0.0..=1.0).contains(&det.confidence)) {
                push(
                    Some(idx),
                    "confidence",
                    format!("{} outside [0, 1]", det.confidence),
                );
            }
            let b = det.bbox;
            if !(b.x.is_finite() && b.y.is_finite()) {
                push(Some(idx), "bbox", "non-finite origin".into());
            }
            if !(b.w.is_finite() && b.w > 0.0) {
                push(Some(idx), "bbox.w", format!("width {} must be > 0", b.w));
            }
            if !(b.h.is_finite() && b.h > 0.0) {
                push(Some(idx), "bbox.h", format!("height {} must be > 0", b.h));
            }
            if let Some(d) = &det.shape_descriptor {
                if d.iter().any(|v| !v.is_finite()) {
                    push(Some(idx), "shape_descriptor", "non-finite component".into());
                }
                match descriptor_dim {
                    None => descriptor_dim = Some(d.len()),
                    Some(n) if n != d.len() => push(
                        Some(idx),
                        "shape_descriptor",
                        format!("dimension {} differs from {n} used earlier", d.len()),
                    ),
                    Some(_) => {}
                }
            }
        }
    }
    out
}

/// Counts detections per class over a whole trace.
pub fn class_histogram(trace: &EventTrace) -> BTreeMap<ObjectClass, usize> {
    let mut hist = BTreeMap::new();
    for det in trace.frames.iter().flat_map(|f| &f.detections) {
        *hist.entry(det.class).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_at(x: f64) -> Detection {
        Detection::new(ObjectClass::Sphere, 0.6, BBox::new(x, 100.0, 30.0, 30.0))
    }

    fn trace_with_indices(indices: &[u32]) -> EventTrace {
        let frames = indices
            .iter()
            .map(|&i| FrameRecord::new(i, vec![sphere_at(i as f64)]))
            .collect();
        EventTrace::new("t", frames, None)
    }

    #[test]
    fn well_formed_trace_has_no_violations() {
        let idx: Vec<u32> = (0..90).collect();
        assert!(validate_trace(&trace_with_indices(&idx)).is_empty());
    }

    #[test]
    fn gap_is_reported_at_missing_index() {
        let v = validate_trace(&trace_with_indices(&[0, 1, 3]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].frame_index, Some(2));
        assert_eq!(v[0].field, "frame_index");
    }

    #[test]
    fn duplicate_index_is_reported() {
        let v = validate_trace(&trace_with_indices(&[0, 1, 1, 2]));
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("strictly increasing"));
    }

    #[test]
    fn confidence_out_of_bounds() {
        let mut t = trace_with_indices(&[0, 1]);
        t.frames[1].detections[0].confidence = 1.3;
        let v = validate_trace(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "confidence");
        assert_eq!(v[0].frame_index, Some(1));
    }

    #[test]
    fn degenerate_box_and_descriptor_dimension() {
        let mut t = trace_with_indices(&[0, 1, 2]);
        t.frames[0].detections[0].bbox.w = 0.0;
        t.frames[1].detections[0].shape_descriptor = Some(vec![1.0, 0.1]);
        t.frames[2].detections[0].shape_descriptor = Some(vec![1.0]);
        let fields: Vec<_> = validate_trace(&t).iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["bbox.w", "shape_descriptor"]);
    }

    #[test]
    fn header_mismatch_and_empty_ground_truth() {
        let mut t = trace_with_indices(&[0, 1]);
        t.frame_count = 3;
        t.ground_truth = Some(GroundTruth {
            possible: true,
            object_classes: vec![],
        });
        let fields: Vec<_> = validate_trace(&t).iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["frame_count", "ground_truth.object_classes"]);
    }

    #[test]
    fn empty_trace_is_invalid() {
        let t = EventTrace::new("e", vec![], None);
        assert!(!validate_trace(&t).is_empty());
    }

    #[test]
    fn box_geometry() {
        let b = BBox::centered(Point::new(50.0, 50.0), 20.0, 10.0);
        assert_eq!(b, BBox::new(40.0, 45.0, 20.0, 10.0));
        assert!(b.contains(Point::new(40.0, 45.0)));
        assert!(!b.contains(Point::new(39.9, 50.0)));
        assert!(b.inflate(5.0).contains(Point::new(36.0, 50.0)));
        assert!(b.inflate(1.0).encloses(&b));
    }

    #[test]
    fn derived_descriptor_uses_aspect_and_area() {
        let d = sphere_at(0.0).descriptor(&SceneBounds::default());
        assert_eq!(d, vec![1.0, 900.0 / (640.0 * 360.0)]);
    }

    #[test]
    fn class_order_and_parsing() {
        assert!(ObjectClass::Sphere < ObjectClass::Cone);
        assert!(ObjectClass::Cone < ObjectClass::Cube);
        assert_eq!("Cube".parse::<ObjectClass>().unwrap(), ObjectClass::Cube);
        assert!("pyramid".parse::<ObjectClass>().is_err());
        assert!(ObjectClass::Wall.is_occluder());
        assert!(ImpactTable::default().profile(ObjectClass::Wall).is_none());
    }
}
