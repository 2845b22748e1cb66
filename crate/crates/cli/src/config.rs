//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use curio_core::body_budget::{ScoringConfig, ShapeConstancyMode, WeightConfig};
use curio_core::curiosity::{CuriosityParams, PipelineConfig};
use curio_core::knowledge::DEFAULT_PROMOTION_THRESHOLD;
use curio_core::trace_model::ImpactTable;
use curio_core::tracker::TrackerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub kb: PathBuf,
    /// File or directory of traces used when `classify` gets no inputs.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            kb: PathBuf::from("curio-kb.json"),
            input: None,
            out: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub weights: WeightConfig,
    pub weights_with_occluder: Option<WeightConfig>,
    pub tracker: TrackerParams,
    pub occlusion_coverage_min: f64,
    pub occluder_margin: f64,
    /// Applied when a knowledge base is created or reset.
    pub promotion_threshold: u64,
    pub impacts: ImpactTable,
    pub shape_constancy: ShapeConstancyMode,
    pub paths: Paths,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let curiosity = CuriosityParams::default();
        Self {
            weights: WeightConfig::default(),
            weights_with_occluder: None,
            tracker: TrackerParams::default(),
            occlusion_coverage_min: curiosity.occlusion_coverage_min,
            occluder_margin: curiosity.occluder_margin,
            promotion_threshold: DEFAULT_PROMOTION_THRESHOLD,
            impacts: ImpactTable::default(),
            shape_constancy: ShapeConstancyMode::default(),
            paths: Paths::default(),
            seed: 0,
        }
    }
}

/// Flag values that override the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub kb: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub weights: Option<WeightConfig>,
    pub occlusion_coverage_min: Option<f64>,
    pub shape_constancy: Option<ShapeConstancyMode>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Defaults, then `file` if given, then `flags`. The result is validated.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, flags: &Overrides) {
        if let Some(s) = flags.seed {
            self.seed = s;
        }
        if let Some(p) = &flags.kb {
            self.paths.kb = p.clone();
        }
        if let Some(p) = &flags.out {
            self.paths.out = p.clone();
        }
        if let Some(w) = flags.weights {
            self.weights = w;
        }
        if let Some(c) = flags.occlusion_coverage_min {
            self.occlusion_coverage_min = c;
        }
        if let Some(m) = flags.shape_constancy {
            self.shape_constancy = m;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weights.is_valid() {
            bail!("weights must lie in [0, 1]: {:?}", self.weights);
        }
        if let Some(w) = &self.weights_with_occluder {
            if !w.is_valid() {
                bail!("weights_with_occluder must lie in [0, 1]: {w:?}");
            }
        }
        if !self.tracker.is_valid() {
            bail!("tracker parameters must be positive: {:?}", self.tracker);
        }
        let c = self.occlusion_coverage_min;
        if !(c > 0.0 && c <= 1.0) {
            bail!("occlusion_coverage_min must lie in (0, 1], got {c}");
        }
        if !(self.occluder_margin.is_finite() && self.occluder_margin >= 0.0) {
            bail!(
                "occluder_margin must be non-negative, got {}",
                self.occluder_margin
            );
        }
        if self.promotion_threshold == 0 {
            bail!("promotion_threshold must be at least 1");
        }
        if !self.impacts.is_valid() {
            bail!("impact values must be positive: {:?}", self.impacts);
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tracker: self.tracker.clone(),
            scoring: ScoringConfig {
                weights: self.weights,
                weights_with_occluder: self.weights_with_occluder,
                impacts: self.impacts.clone(),
                shape_constancy: self.shape_constancy,
            },
            curiosity: CuriosityParams {
                occlusion_coverage_min: self.occlusion_coverage_min,
                occluder_margin: self.occluder_margin,
            },
            ..PipelineConfig::default()
        }
    }
}
