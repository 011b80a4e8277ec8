use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{GridParams, RansacParams};
use crate::clips::ClipParams;
use crate::error::{Error, Result};
use crate::geometry::GeometryParams;
use crate::graph::GraphParams;
use crate::labeling::FilterParams;

/// Thresholds for the assumption-violation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticParams {
    /// A trajectory at least this long whose net displacement stays below
    /// `static_motion_px` counts as static.
    pub static_min_len: usize,
    pub static_motion_px: f64,
    /// Flag when more than this share of trajectories is static.
    pub static_share: f64,
    /// Trajectories with at most this many points count as short.
    pub short_len: usize,
    /// Flag when more than this share of trajectories is short.
    pub short_share: f64,
}

impl Default for DiagnosticParams {
    fn default() -> Self {
        DiagnosticParams {
            static_min_len: 20,
            static_motion_px: 1.0,
            static_share: 0.05,
            short_len: 3,
            short_share: 0.2,
        }
    }
}

/// Every pipeline knob. Parsed from TOML; absent fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    /// Refit-and-relabel rounds for the whole-video background model.
    pub global_refit_rounds: usize,
    pub clips: ClipParams,
    pub geometry: GeometryParams,
    pub grid: GridParams,
    pub ransac: RansacParams,
    pub graph: GraphParams,
    pub filter: FilterParams,
    pub diagnostics: DiagnosticParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threads: 0,
            global_refit_rounds: 3,
            clips: ClipParams::default(),
            geometry: GeometryParams::default(),
            grid: GridParams::default(),
            ransac: RansacParams::default(),
            graph: GraphParams::default(),
            filter: FilterParams::default(),
            diagnostics: DiagnosticParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.clips.validate()?;
        self.geometry.validate()?;
        self.grid.validate()?;
        self.ransac.validate()?;
        self.graph.validate()?;
        self.filter.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
