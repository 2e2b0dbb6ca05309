//! Weak action labels from subtitles, transcript-constrained alignment and
//! hierarchical consensus, with Jaccard evaluation.
//!
//! The pipeline, end to end:
//!
//! 1. [`captions`] parses WebVTT/SRT tracks into normalized token cues.
//! 2. [`mining`] fires verb/object classes in cues and samples background.
//! 3. [`hierarchy`] refines per-frame class posteriors over a class forest.
//! 4. [`alignment`] converts posteriors to likelihoods and decodes the
//!    ordered transcript with a grid-constrained Viterbi search.
//! 5. [`metrics`] scores segmentations with IoU / IoD.
//!
//! [`cli`] wires these stages to files and holds the synthetic corpus
//! generator.

pub mod alignment;
pub mod captions;
pub mod cli;
pub mod hierarchy;
pub mod metrics;
pub mod mining;

/// Class identifier. Column `c` of a probability matrix belongs to class `c`.
pub type ClassId = u32;

/// Reserved id for frames and cues without an action.
pub const BACKGROUND: ClassId = 0;
