//! TOML pipeline configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::AssocMode;
use crate::cmmt::CmmtParams;
use crate::linker::LinkerParams;
use crate::metrics::MetricsParams;
use crate::svtrack::SvTrackParams;
use crate::windows::{WindowConfig, WindowError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssocConfig {
    /// Clustering cut λ.
    pub lambda: f64,
    pub mode: AssocMode,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            mode: AssocMode::Box,
        }
    }
}

/// Linker settings; the gate defaults by association mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkerConfig {
    pub gate: Option<f64>,
    pub max_window_misses: u32,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        Self {
            gate: None,
            max_window_misses: LinkerParams::FOOTPRINT.max_window_misses,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub calibration: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub assoc: AssocConfig,
    pub cmmt: CmmtParams,
    pub linker: LinkerConfig,
    pub svtrack: SvTrackParams,
    pub metrics: MetricsParams,
    pub io: IoConfig,
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            key,
            message: format!("must be a positive number, got {v}"),
        })
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.window.validate()?;
        positive("assoc.lambda", self.assoc.lambda)?;
        positive("cmmt.kappa", self.cmmt.kappa)?;
        positive("cmmt.ransac_threshold", self.cmmt.ransac_threshold)?;
        if self.cmmt.phi == 0 {
            return Err(ConfigError::Invalid {
                key: "cmmt.phi",
                message: "must be at least 1".into(),
            });
        }
        if let Some(g) = self.linker.gate {
            positive("linker.gate", g)?;
        }
        if !(0.0..=1.0).contains(&self.svtrack.iou_min) {
            return Err(ConfigError::Invalid {
                key: "svtrack.iou_min",
                message: "must lie in [0, 1]".into(),
            });
        }
        if !(0.0..1.0).contains(&self.svtrack.smoothing) {
            return Err(ConfigError::Invalid {
                key: "svtrack.smoothing",
                message: "must lie in [0, 1)".into(),
            });
        }
        positive("metrics.threshold", self.metrics.threshold)?;
        positive("metrics.pcp_alpha", self.metrics.pcp_alpha)?;
        Ok(())
    }

    pub fn linker_params(&self) -> LinkerParams {
        let base = match self.assoc.mode {
            AssocMode::Box => LinkerParams::FOOTPRINT,
            AssocMode::Pose => LinkerParams::POSE,
        };
        LinkerParams {
            gate: self.linker.gate.unwrap_or(base.gate),
            max_window_misses: self.linker.max_window_misses,
        }
    }
}
