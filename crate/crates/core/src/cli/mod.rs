//! File-level orchestration behind the `weakalign` binary.

mod commands;
mod config;
pub mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::alignment::AlignError;
use crate::captions::CaptionError;
use crate::hierarchy::HierarchyError;
use crate::metrics::MetricsError;
use crate::mining::MiningError;

pub use commands::{
    align_video, cmd_align, cmd_eval, cmd_hier_validate, cmd_mine, cmd_mine_eval, load_hierarchy_file, load_matrix,
    load_segmentations, load_track, load_vocab, mine_tracks, to_json, video_seed, AlignInputs, AlignOutcome, Decoder,
    ErrorRecord, MineOutcome, MiningSummary,
};
pub use config::{PipelineConfig, DEFAULT_BACKGROUND_RATIO, DEFAULT_FPS, DEFAULT_PRIOR_SMOOTHING};
pub use synth::{cmd_synth, generate, write_corpus, SynthConfig, SynthCorpus, SynthVideo};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Caption { path: PathBuf, source: CaptionError },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("no probability matrix for video {0:?}")]
    MissingMatrix(String),
    #[error("no caption file for video {0:?}")]
    MissingCaption(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Mining(#[from] MiningError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
