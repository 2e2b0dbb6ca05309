use serde::{Deserialize, Serialize};

use crate::alignment::{DEFAULT_MAX_LEN, DEFAULT_STRIDE};
use crate::hierarchy::ConsensusMode;
use crate::metrics::{Pooling, ScoreOptions};
use crate::mining::MiningStrategy;

use super::PipelineError;

pub const DEFAULT_FPS: f64 = 30.0;
pub const DEFAULT_BACKGROUND_RATIO: f64 = 0.1;
pub const DEFAULT_PRIOR_SMOOTHING: f64 = 1.0;

/// Knobs shared by all subcommands. Loadable from JSON; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub strategy: MiningStrategy,
    pub fps: f64,
    /// Boundary grid spacing in frames.
    pub stride: usize,
    /// Longest allowed segment in frames.
    pub max_len: usize,
    pub seed: u64,
    pub prior_smoothing: f64,
    pub consensus: ConsensusMode,
    /// Background samples per mined action instance.
    pub background_ratio: f64,
    pub include_background: bool,
    pub pooling: Pooling,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            strategy: MiningStrategy::Scrambled,
            fps: DEFAULT_FPS,
            stride: DEFAULT_STRIDE,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
            prior_smoothing: DEFAULT_PRIOR_SMOOTHING,
            consensus: ConsensusMode::Off,
            background_ratio: DEFAULT_BACKGROUND_RATIO,
            include_background: false,
            pooling: Pooling::Positionwise,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail("fps must be positive");
        }
        if self.stride == 0 {
            return fail("stride must be positive");
        }
        if self.max_len == 0 {
            return fail("max_len must be positive");
        }
        if !(self.prior_smoothing >= 0.0) {
            return fail("prior_smoothing must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.background_ratio) {
            return fail("background_ratio must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            include_background: self.include_background,
            pooling: self.pooling,
        }
    }
}
