//! Z-number knowledge base.
//!
//! Keeps a running mean of the composite score per class, turns the score
//! of an unidentified object into per-class confidences, and counts
//! exceptions until they are promoted to accepted rules.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace_model::ObjectClass;
use crate::tracker::DiscontinuityKind;

/// Version written into every saved knowledge base.
pub const KB_VERSION: u32 = 1;
pub const DEFAULT_PROMOTION_THRESHOLD: u64 = 3;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("no class statistics available")]
    NoStats,
    #[error("class {0} has a zero or undefined mean score")]
    DegenerateStats(ObjectClass),
    #[error("score {0} is not a finite non-negative number")]
    InvalidScore(f64),
    #[error("every class mean equals the unknown score; confidences are undefined")]
    Ambiguous,
    #[error("class {0} cannot carry statistics")]
    UnscorableClass(ObjectClass),
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("corrupt knowledge base")]
    Corrupt(#[from] serde_json::Error),
    #[error("knowledge base version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid knowledge base: {0}")]
    Invalid(String),
}

/// Outcome label of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFlag {
    Possible,
    Impossible,
    Exception,
}

impl EventFlag {
    pub fn from_possible(possible: bool) -> Self {
        if possible {
            EventFlag::Possible
        } else {
            EventFlag::Impossible
        }
    }
}

impl fmt::Display for EventFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventFlag::Possible => "possible",
            EventFlag::Impossible => "impossible",
            EventFlag::Exception => "exception",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: ObjectClass,
    pub mean: f64,
    pub count: u64,
}

/// `<X, A, B>`: inferred class, composite score, per-class confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZNumber {
    pub x: ObjectClass,
    pub a: f64,
    pub b: BTreeMap<ObjectClass, f64>,
}

/// What makes two exceptions "the same".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExceptionSignature {
    /// Sorted, deduplicated.
    pub violations: Vec<DiscontinuityKind>,
    pub occluder_present: bool,
    pub verdict_agent: EventFlag,
    pub verdict_ground_truth: EventFlag,
}

impl ExceptionSignature {
    pub fn new(
        violations: impl IntoIterator<Item = DiscontinuityKind>,
        occluder_present: bool,
        verdict_agent: EventFlag,
        verdict_ground_truth: EventFlag,
    ) -> Self {
        let mut violations: Vec<_> = violations.into_iter().collect();
        violations.sort();
        violations.dedup();
        Self {
            violations,
            occluder_present,
            verdict_agent,
            verdict_ground_truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionRecord {
    #[serde(flatten)]
    pub signature: ExceptionSignature,
    pub occurrences: u64,
    pub promoted: bool,
}

fn check_score(a: f64) -> Result<(), KnowledgeError> {
    if a.is_finite() && a >= 0.0 {
        Ok(())
    } else {
        Err(KnowledgeError::InvalidScore(a))
    }
}

/// `|mean_c − a_u| / mean_c` for every class, unnormalised.
pub fn relative_distances(
    a_u: f64,
    stats: &[ClassStats],
) -> Result<BTreeMap<ObjectClass, f64>, KnowledgeError> {
    check_score(a_u)?;
    if stats.is_empty() {
        return Err(KnowledgeError::NoStats);
    }
    stats
        .iter()
        .map(|s| {
            if s.count == 0 || !(s.mean.is_finite() && s.mean > 0.0) {
                Err(KnowledgeError::DegenerateStats(s.class))
            } else {
                Ok((s.class, (s.mean - a_u).abs() / s.mean))
            }
        })
        .collect()
}

/// `|mean_c − a_u|` per class, reported alongside the confidences.
pub fn raw_differences(a_u: f64, stats: &[ClassStats]) -> BTreeMap<ObjectClass, f64> {
    stats
        .iter()
        .map(|s| (s.class, (s.mean - a_u).abs()))
        .collect()
}

/// Normalised confidences `B_c`: each class's relative distance divided by
/// the sum over classes. Lower means closer.
pub fn confidence(
    a_u: f64,
    stats: &[ClassStats],
) -> Result<BTreeMap<ObjectClass, f64>, KnowledgeError> {
    let rel = relative_distances(a_u, stats)?;
    let total: f64 = rel.values().sum();
    if total == 0.0 {
        return Err(KnowledgeError::Ambiguous);
    }
    Ok(rel.into_iter().map(|(c, d)| (c, d / total)).collect())
}

/// First class (Sphere < Cone < Cube) holding the minimum value.
fn argmin(values: &BTreeMap<ObjectClass, f64>) -> Option<ObjectClass> {
    let mut best: Option<(ObjectClass, f64)> = None;
    for (&c, &v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((c, v));
        }
    }
    best.map(|(c, _)| c)
}

/// Class with the smallest confidence value.
///
/// When every class mean equals `a_u` the fixed class order decides.
pub fn infer(a_u: f64, stats: &[ClassStats]) -> Result<ObjectClass, KnowledgeError> {
    Ok(z_number(a_u, stats)?.x)
}

/// Full Z-number for an unidentified object with score `a_u`.
///
/// If the confidences are undefined because all distances are zero, `b` is
/// uniform.
pub fn z_number(a_u: f64, stats: &[ClassStats]) -> Result<ZNumber, KnowledgeError> {
    let b = match confidence(a_u, stats) {
        Ok(b) => b,
        Err(KnowledgeError::Ambiguous) => {
            let k = stats.len() as f64;
            stats.iter().map(|s| (s.class, 1.0 / k)).collect()
        }
        Err(e) => return Err(e),
    };
    let x = argmin(&b).ok_or(KnowledgeError::NoStats)?;
    Ok(ZNumber { x, a: a_u, b })
}

/// Mutable store of class statistics and exceptions.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    promotion_threshold: u64,
    stats: BTreeMap<ObjectClass, ClassStats>,
    exceptions: Vec<ExceptionRecord>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(DEFAULT_PROMOTION_THRESHOLD)
    }
}

impl KnowledgeBase {
    pub fn new(promotion_threshold: u64) -> Self {
        Self {
            promotion_threshold: promotion_threshold.max(1),
            stats: BTreeMap::new(),
            exceptions: Vec::new(),
        }
    }

    pub fn promotion_threshold(&self) -> u64 {
        self.promotion_threshold
    }

    /// Changes the threshold for future promotions. Rules that are already
    /// promoted stay promoted.
    pub fn set_promotion_threshold(&mut self, threshold: u64) {
        self.promotion_threshold = threshold.max(1);
    }

    /// Snapshot of the statistics, in class order.
    pub fn class_stats(&self) -> Vec<ClassStats> {
        self.stats.values().copied().collect()
    }

    pub fn stats_for(&self, class: ObjectClass) -> Option<&ClassStats> {
        self.stats.get(&class)
    }

    pub fn exceptions(&self) -> &[ExceptionRecord] {
        &self.exceptions
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty() && self.exceptions.is_empty()
    }

    /// Adds one composite score to `class`'s running mean.
    pub fn update_stats(
        &mut self,
        class: ObjectClass,
        a: f64,
    ) -> Result<&ClassStats, KnowledgeError> {
        if !class.is_solid() {
            return Err(KnowledgeError::UnscorableClass(class));
        }
        check_score(a)?;
        let entry = self.stats.entry(class).or_insert(ClassStats {
            class,
            mean: 0.0,
            count: 0,
        });
        entry.count += 1;
        entry.mean += (a - entry.mean) / entry.count as f64;
        Ok(entry)
    }

    /// Counts one more occurrence of `sig`, promoting it once the count
    /// reaches the threshold.
    pub fn record_exception(&mut self, sig: ExceptionSignature) -> &ExceptionRecord {
        let threshold = self.promotion_threshold;
        let idx = match self.exceptions.iter().position(|r| r.signature == sig) {
            Some(i) => i,
            None => {
                self.exceptions.push(ExceptionRecord {
                    signature: sig,
                    occurrences: 0,
                    promoted: false,
                });
                self.exceptions.len() - 1
            }
        };
        let rec = &mut self.exceptions[idx];
        rec.occurrences += 1;
        if rec.occurrences >= threshold {
            rec.promoted = true;
        }
        rec
    }

    pub fn is_promoted(&self, sig: &ExceptionSignature) -> bool {
        self.exceptions
            .iter()
            .any(|r| r.promoted && &r.signature == sig)
    }

    pub fn reset(&mut self) {
        self.stats.clear();
        self.exceptions.clear();
    }
}

#[derive(Serialize, Deserialize)]
struct KbDocument {
    version: u32,
    promotion_threshold: u64,
    class_stats: Vec<ClassStats>,
    exceptions: Vec<ExceptionRecord>,
}

/// Serialises the knowledge base as one JSON document.
pub fn save_kb(kb: &KnowledgeBase) -> Vec<u8> {
    let doc = KbDocument {
        version: KB_VERSION,
        promotion_threshold: kb.promotion_threshold,
        class_stats: kb.class_stats(),
        exceptions: kb.exceptions.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("knowledge base is always serialisable");
    out.push(b'\n');
    out
}

/// Parses a saved knowledge base. Either the whole document is valid or an
/// error is returned.
pub fn load_kb(bytes: &[u8]) -> Result<KnowledgeBase, KnowledgeError> {
    #[derive(Deserialize)]
    struct VersionOnly {
        version: u32,
    }
    let v: VersionOnly = serde_json::from_slice(bytes)?;
    if v.version != KB_VERSION {
        return Err(KnowledgeError::Version {
            found: v.version,
            expected: KB_VERSION,
        });
    }
    let doc: KbDocument = serde_json::from_slice(bytes)?;
    if doc.promotion_threshold == 0 {
        return Err(KnowledgeError::Invalid(
            "promotion_threshold must be >= 1".into(),
        ));
    }

    let mut stats = BTreeMap::new();
    for s in doc.class_stats {
        if !s.class.is_solid() {
            return Err(KnowledgeError::Invalid(format!(
                "stats for non-solid class {}",
                s.class
            )));
        }
        if s.count == 0 || !(s.mean.is_finite() && s.mean >= 0.0) {
            return Err(KnowledgeError::Invalid(format!(
                "class {}: count {} mean {}",
                s.class, s.count, s.mean
            )));
        }
        if stats.insert(s.class, s).is_some() {
            return Err(KnowledgeError::Invalid(format!(
                "duplicate class {}",
                s.class
            )));
        }
    }
    for (i, e) in doc.exceptions.iter().enumerate() {
        if e.occurrences == 0 {
            return Err(KnowledgeError::Invalid(format!(
                "exception {i} has zero occurrences"
            )));
        }
        if doc.exceptions[..i]
            .iter()
            .any(|o| o.signature == e.signature)
        {
            return Err(KnowledgeError::Invalid(format!(
                "exception {i} duplicates an earlier signature"
            )));
        }
    }
    Ok(KnowledgeBase {
        promotion_threshold: doc.promotion_threshold,
        stats,
        exceptions: doc.exceptions,
    })
}

/// Writes the knowledge base atomically: a temp file in the same directory
/// is renamed over `path`.
pub fn save_kb_file(kb: &KnowledgeBase, path: &Path) -> Result<(), KnowledgeError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&save_kb(kb))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| KnowledgeError::Io(e.error))?;
    Ok(())
}

pub fn load_kb_file(path: &Path) -> Result<KnowledgeBase, KnowledgeError> {
    load_kb(&std::fs::read(path)?)
}
