//! File-level pipeline stages. Each `cmd_*` reads its inputs from disk,
//! processes videos independently (in parallel), writes per-video outputs
//! atomically and returns a summary with per-item error records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{
    compute_priors, random_align, subtitle_align, to_likelihood, uniform_align, viterbi_align, Priors, ProbMatrix,
    Segmentation, Transcript,
};
use crate::captions::{parse_srt, parse_webvtt, CaptionSource, SubtitleTrack};
use crate::hierarchy::{
    apply_consensus, load_hierarchy, parse_edges, ClassHierarchy, ConsensusMode, HierarchySummary, DEFAULT_MAX_DEPTH,
};
use crate::metrics::{evaluate, EvalReport};
use crate::mining::{
    evaluate_mining, mine_track, neutral_cues, read_instances, sample_background, write_instances, MinedInstance,
    MiningReport, MiningStrategy, Vocabulary,
};
use crate::ClassId;

use super::{PipelineConfig, PipelineError};

/// A non-fatal failure tied to one input item (file or video).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub item: String,
    pub message: String,
}

impl ErrorRecord {
    fn new(item: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self {
            item: item.into(),
            message: err.to_string(),
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Files in `dir` whose extension is one of `exts`, sorted by name.
pub(crate) fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Splits `clip01.edited` into (`clip01`, Some(Edited)).
fn caption_identity(path: &Path) -> (String, Option<CaptionSource>) {
    let stem = file_stem(path);
    for (suffix, src) in [(".edited", CaptionSource::Edited), (".auto", CaptionSource::Auto)] {
        if let Some(id) = stem.strip_suffix(suffix) {
            return (id.to_string(), Some(src));
        }
    }
    (stem, None)
}

/// Parses a `.vtt` or `.srt` file; the source comes from a `.edited` /
/// `.auto` file-name infix, else `default_source`.
pub fn load_track(path: &Path, default_source: CaptionSource) -> Result<SubtitleTrack, PipelineError> {
    let text = read_text(path)?;
    let (video_id, source) = caption_identity(path);
    let is_srt = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("srt"));
    let track = if is_srt {
        parse_srt(&text, &video_id)
    } else {
        parse_webvtt(&text, &video_id)
    }
    .map_err(|source| PipelineError::Caption {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(track.with_source(source.unwrap_or(default_source)))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary, PipelineError> {
    Vocabulary::from_json(&read_text(path)?).map_err(|e| PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads a hierarchy, validated against the vocabulary when one is given.
pub fn load_hierarchy_file(path: &Path, vocab: Option<&Vocabulary>) -> Result<ClassHierarchy, PipelineError> {
    let text = read_text(path)?;
    let result = match vocab {
        Some(v) => load_hierarchy(&text, v),
        None => parse_edges(&text).and_then(|e| ClassHierarchy::from_edges(&e, DEFAULT_MAX_DEPTH)),
    };
    result.map_err(|e| PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads every `<video>.tsv` segmentation in a directory.
pub fn load_segmentations(dir: &Path) -> Result<BTreeMap<String, Segmentation>, PipelineError> {
    let mut out = BTreeMap::new();
    for path in list_files(dir, &["tsv"])? {
        let id = file_stem(&path);
        let seg = Segmentation::from_tsv(id.clone(), &read_text(&path)?).map_err(|e| PipelineError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
        out.insert(id, seg);
    }
    Ok(out)
}

/// Reads `<video>.pmat` (preferred) or `<video>.csv` from `dir`.
pub fn load_matrix(dir: &Path, video_id: &str) -> Result<ProbMatrix, PipelineError> {
    let bin = dir.join(format!("{video_id}.pmat"));
    let csv = dir.join(format!("{video_id}.csv"));
    let (path, parsed) = if bin.is_file() {
        let bytes = fs::read(&bin).map_err(|e| PipelineError::io(&bin, e))?;
        (bin.clone(), ProbMatrix::from_pmat_bytes(video_id, &bytes))
    } else if csv.is_file() {
        (csv.clone(), ProbMatrix::from_csv(video_id, &read_text(&csv)?))
    } else {
        return Err(PipelineError::MissingMatrix(video_id.to_string()));
    };
    parsed.map_err(|e| PipelineError::Input {
        path,
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------- mine

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub strategy: MiningStrategy,
    pub n_videos: usize,
    pub n_instances: usize,
    pub n_action_instances: usize,
    pub n_background: usize,
    /// Instance count per class id under the selected strategy (background included).
    pub per_class: BTreeMap<ClassId, usize>,
    /// Action instance count each strategy would produce on the same captions.
    pub per_strategy: BTreeMap<String, usize>,
    pub errors: Vec<ErrorRecord>,
}

pub struct MineOutcome {
    pub instances: Vec<MinedInstance>,
    pub summary: MiningSummary,
}

/// Mines every caption file of `tracks` (already parsed) and samples background.
pub fn mine_tracks(tracks: &[SubtitleTrack], vocab: &Vocabulary, cfg: &PipelineConfig) -> (Vec<MinedInstance>, MiningSummary) {
    let per_track: Vec<_> = tracks
        .par_iter()
        .map(|t| {
            let counts: Vec<usize> = MiningStrategy::ALL.iter().map(|&s| mine_track(t, vocab, s).len()).collect();
            (mine_track(t, vocab, cfg.strategy), neutral_cues(t, vocab), counts)
        })
        .collect();

    let mut instances = Vec::new();
    let mut neutral = Vec::new();
    let mut per_strategy: BTreeMap<String, usize> = MiningStrategy::ALL.iter().map(|s| (s.name().to_string(), 0)).collect();
    for (inst, neu, counts) in per_track {
        instances.extend(inst);
        neutral.extend(neu);
        for (s, n) in MiningStrategy::ALL.iter().zip(counts) {
            *per_strategy.get_mut(s.name()).expect("seeded") += n;
        }
    }
    let n_action = instances.len();
    let background = sample_background(&neutral, n_action, cfg.background_ratio, cfg.seed);
    let n_background = background.len();
    instances.extend(background);

    let mut per_class = BTreeMap::new();
    for i in &instances {
        *per_class.entry(i.class_id).or_insert(0) += 1;
    }
    let summary = MiningSummary {
        strategy: cfg.strategy,
        n_videos: tracks.len(),
        n_instances: instances.len(),
        n_action_instances: n_action,
        n_background,
        per_class,
        per_strategy,
        errors: Vec::new(),
    };
    (instances, summary)
}

pub fn cmd_mine(
    caption_dir: &Path,
    vocab_path: &Path,
    default_source: CaptionSource,
    cfg: &PipelineConfig,
    out_instances: &Path,
    out_summary: &Path,
) -> Result<MineOutcome, PipelineError> {
    cfg.validate()?;
    let vocab = load_vocab(vocab_path)?;
    let files = list_files(caption_dir, &["vtt", "srt"])?;
    let parsed: Vec<Result<SubtitleTrack, PipelineError>> = files.par_iter().map(|p| load_track(p, default_source)).collect();
    let mut tracks = Vec::new();
    let mut errors = Vec::new();
    for (path, r) in files.iter().zip(parsed) {
        match r {
            Ok(t) => tracks.push(t),
            Err(e) => errors.push(ErrorRecord::new(path.display().to_string(), e)),
        }
    }
    let (instances, mut summary) = mine_tracks(&tracks, &vocab, cfg);
    summary.errors = errors;
    write_atomic(out_instances, write_instances(&instances).as_bytes())?;
    write_atomic(out_summary, to_json(&summary).as_bytes())?;
    Ok(MineOutcome { instances, summary })
}

// ---------------------------------------------------------------- align

/// Decoder used by `align`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    #[default]
    Viterbi,
    Uniform,
    Random,
    Subtitle,
}

impl std::str::FromStr for Decoder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "viterbi" => Ok(Self::Viterbi),
            "uniform" | "linear" => Ok(Self::Uniform),
            "random" => Ok(Self::Random),
            "subtitle" => Ok(Self::Subtitle),
            other => Err(format!("unknown decoder {other:?}")),
        }
    }
}

/// Consensus (optional), Bayes conversion, then Viterbi decoding.
pub fn align_video(
    posteriors: &ProbMatrix,
    transcript: &Transcript,
    hierarchy: Option<&ClassHierarchy>,
    priors: Option<&Priors>,
    cfg: &PipelineConfig,
) -> Result<Segmentation, PipelineError> {
    let refined = match (hierarchy, cfg.consensus) {
        (Some(h), mode) if mode != ConsensusMode::Off => apply_consensus(posteriors, h, mode)?,
        _ => posteriors.clone(),
    };
    let uniform;
    let priors = match priors {
        Some(p) => p,
        None => {
            uniform = Priors::uniform(posteriors.classes());
            &uniform
        }
    };
    let lik = to_likelihood(&refined, priors)?;
    Ok(viterbi_align(&lik, transcript, cfg.stride, cfg.max_len)?)
}

/// Stable per-video seed so random baselines do not depend on processing order.
pub fn video_seed(seed: u64, video_id: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in video_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Optional inputs of `align` beyond posteriors and transcripts.
#[derive(Debug, Clone, Default)]
pub struct AlignInputs {
    pub hierarchy: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Mined instances used to estimate class priors; uniform priors otherwise.
    pub instances: Option<PathBuf>,
    /// Caption directory for the subtitle baseline.
    pub captions: Option<PathBuf>,
    pub decoder: Decoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOutcome {
    pub written: Vec<String>,
    pub errors: Vec<ErrorRecord>,
}

pub fn cmd_align(
    prob_dir: &Path,
    transcript_dir: &Path,
    inputs: &AlignInputs,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<AlignOutcome, PipelineError> {
    cfg.validate()?;
    let vocab = inputs.vocab.as_deref().map(load_vocab).transpose()?;
    let hierarchy = match &inputs.hierarchy {
        Some(p) => Some(load_hierarchy_file(p, vocab.as_ref())?),
        None => None,
    };
    if cfg.consensus != ConsensusMode::Off && hierarchy.is_none() && inputs.decoder == Decoder::Viterbi {
        return Err(PipelineError::Config("consensus requires a hierarchy file".into()));
    }
    let training = match &inputs.instances {
        Some(p) => Some(read_instances(&read_text(p)?).map_err(|e| PipelineError::Input {
            path: p.clone(),
            message: e.to_string(),
        })?),
        None => None,
    };
    if inputs.decoder == Decoder::Subtitle && (vocab.is_none() || inputs.captions.is_none()) {
        return Err(PipelineError::Config("subtitle baseline needs --vocab and --captions".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;

    let transcripts = list_files(transcript_dir, &["txt"])?;
    let results: Vec<(String, Result<(), PipelineError>)> = transcripts
        .par_iter()
        .map(|path| {
            let id = file_stem(path);
            let run = || -> Result<(), PipelineError> {
                let transcript = Transcript::from_text(id.clone(), &read_text(path)?)?;
                let posteriors = load_matrix(prob_dir, &id)?;
                let frames = posteriors.frames();
                let seg = match inputs.decoder {
                    Decoder::Viterbi => {
                        let priors = training
                            .as_ref()
                            .map(|t| compute_priors(t, posteriors.classes(), cfg.prior_smoothing))
                            .transpose()?;
                        align_video(&posteriors, &transcript, hierarchy.as_ref(), priors.as_ref(), cfg)?
                    }
                    Decoder::Uniform => uniform_align(frames, &transcript)?,
                    Decoder::Random => random_align(frames, &transcript, video_seed(cfg.seed, &id))?,
                    Decoder::Subtitle => {
                        let dir = inputs.captions.as_deref().expect("checked above");
                        let track = find_caption(dir, &id)?;
                        subtitle_align(&track, vocab.as_ref().expect("checked above"), cfg.fps, frames)?
                    }
                };
                write_atomic(&out_dir.join(format!("{id}.tsv")), seg.to_tsv().as_bytes())
            };
            let r = run();
            (id, r)
        })
        .collect();

    let mut outcome = AlignOutcome {
        written: Vec::new(),
        errors: Vec::new(),
    };
    for (id, r) in results {
        match r {
            Ok(()) => outcome.written.push(id),
            Err(e) => outcome.errors.push(ErrorRecord::new(id, e)),
        }
    }
    Ok(outcome)
}

fn find_caption(dir: &Path, video_id: &str) -> Result<SubtitleTrack, PipelineError> {
    for path in list_files(dir, &["vtt", "srt"])? {
        if caption_identity(&path).0 == video_id {
            return load_track(&path, CaptionSource::Auto);
        }
    }
    Err(PipelineError::MissingCaption(video_id.to_string()))
}

// ---------------------------------------------------------------- eval

pub fn cmd_eval(gt_dir: &Path, pred_dir: &Path, cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let gt = load_segmentations(gt_dir)?;
    let pred = load_segmentations(pred_dir)?;
    Ok(evaluate(&gt, &pred, cfg.score_options())?)
}

pub fn cmd_mine_eval(instances_path: &Path, gt_dir: &Path, cfg: &PipelineConfig) -> Result<MiningReport, PipelineError> {
    let instances = read_instances(&read_text(instances_path)?).map_err(|e| PipelineError::Input {
        path: instances_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gt = load_segmentations(gt_dir)?;
    Ok(evaluate_mining(&instances, &gt, cfg.fps)?)
}

pub fn cmd_hier_validate(path: &Path, vocab: Option<&Path>) -> Result<HierarchySummary, PipelineError> {
    let vocab = vocab.map(load_vocab).transpose()?;
    Ok(load_hierarchy_file(path, vocab.as_ref())?.summary())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
