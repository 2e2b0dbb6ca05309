use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use weakalign::captions::CaptionSource;
use weakalign::cli::{
    cmd_align, cmd_eval, cmd_hier_validate, cmd_mine, cmd_mine_eval, cmd_synth, to_json, AlignInputs, Decoder,
    PipelineConfig, SynthConfig,
};
use weakalign::hierarchy::ConsensusMode;
use weakalign::metrics::Pooling;
use weakalign::mining::MiningStrategy;

/// Mine weak action labels from subtitles, align frame posteriors to
/// transcripts and score the result.
#[derive(Parser)]
#[command(name = "weakalign", version)]
struct Cli {
    /// JSON file with pipeline settings; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for background sampling, random baselines and synth [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the alignment knobs of the configuration.
#[derive(Args, Default)]
struct AlignKnobs {
    /// Boundary grid spacing in frames [default: 30].
    #[arg(long)]
    stride: Option<usize>,
    /// Longest segment in frames [default: 1000].
    #[arg(long)]
    max_len: Option<usize>,
    /// Video frame rate [default: 30].
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Mine (class, time span) instances from caption files.
    Mine {
        /// Directory of .vtt / .srt files.
        captions: PathBuf,
        /// Vocabulary JSON.
        #[arg(long)]
        vocab: PathBuf,
        /// neighbor, ordered or scrambled [default: scrambled].
        #[arg(long)]
        strategy: Option<MiningStrategy>,
        /// Background samples per action instance [default: 0.1].
        #[arg(long)]
        background_ratio: Option<f64>,
        /// Source assumed for files without an .edited/.auto infix.
        #[arg(long, default_value = "auto")]
        source: CaptionSource,
        /// Output TSV of instances.
        #[arg(long, default_value = "instances.tsv")]
        out: PathBuf,
        /// Output JSON summary.
        #[arg(long, default_value = "mining_summary.json")]
        summary: PathBuf,
    },
    /// Align posterior matrices to transcripts.
    Align {
        /// Directory of <video>.pmat or <video>.csv matrices.
        probs: PathBuf,
        /// Directory of <video>.txt transcripts.
        transcripts: PathBuf,
        /// Hierarchy TSV, required for consensus.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Vocabulary JSON (validates the hierarchy; needed by the subtitle baseline).
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Mined instances for class priors [default: uniform priors].
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Caption directory for the subtitle baseline.
        #[arg(long)]
        captions: Option<PathBuf>,
        /// off, or topdown|bottomup|combined with optional -full|-pairwise [default: off].
        #[arg(long)]
        consensus: Option<ConsensusMode>,
        /// Use a baseline instead of Viterbi: uniform, random or subtitle.
        #[arg(long)]
        baseline: Option<Decoder>,
        #[command(flatten)]
        knobs: AlignKnobs,
        /// Output directory for <video>.tsv segmentations.
        #[arg(long, default_value = "aligned")]
        out: PathBuf,
    },
    /// Score predicted segmentations against ground truth.
    Eval {
        gt: PathBuf,
        pred: PathBuf,
        /// Score background segments too.
        #[arg(long)]
        include_background: bool,
        /// positionwise or frameset [default: positionwise].
        #[arg(long)]
        pooling: Option<Pooling>,
        /// Optional JSON report path; the report always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a hierarchy file and print its shape.
    HierValidate {
        hierarchy: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Write a synthetic corpus with known ground truth.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        videos: usize,
        /// Classes including background.
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 600)]
        frames: usize,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        /// Ground-truth boundaries fall on multiples of this many frames.
        #[arg(long, default_value_t = 30)]
        unit: usize,
        /// Correlate noise with the class hierarchy.
        #[arg(long)]
        structured: bool,
    },
    /// Score mined instances against frame-level ground truth.
    MineEval {
        instances: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        fps: Option<f64>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(PipelineConfig::from_json(&text)?)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn apply_knobs(cfg: &mut PipelineConfig, k: &AlignKnobs) {
    if let Some(v) = k.stride {
        cfg.stride = v;
    }
    if let Some(v) = k.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = k.fps {
        cfg.fps = v;
    }
}

/// Returns whether any per-item error was recorded.
fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }

    match cli.command {
        Command::Mine {
            captions,
            vocab,
            strategy,
            background_ratio,
            source,
            out,
            summary,
        } => {
            cfg.strategy = strategy.unwrap_or(cfg.strategy);
            cfg.background_ratio = background_ratio.unwrap_or(cfg.background_ratio);
            let outcome = cmd_mine(&captions, &vocab, source, &cfg, &out, &summary)?;
            for e in &outcome.summary.errors {
                eprintln!("error: {}: {}", e.item, e.message);
            }
            print!("{}", to_json(&outcome.summary));
            Ok(!outcome.summary.errors.is_empty())
        }
        Command::Align {
            probs,
            transcripts,
            hierarchy,
            vocab,
            instances,
            captions,
            consensus,
            baseline,
            knobs,
            out,
        } => {
            apply_knobs(&mut cfg, &knobs);
            cfg.consensus = consensus.unwrap_or(cfg.consensus);
            let inputs = AlignInputs {
                hierarchy,
                vocab,
                instances,
                captions,
                decoder: baseline.unwrap_or_default(),
            };
            let outcome = cmd_align(&probs, &transcripts, &inputs, &cfg, &out)?;
            for e in &outcome.errors {
                eprintln!("error: {}: {}", e.item, e.message);
            }
            print!("{}", to_json(&outcome));
            Ok(!outcome.errors.is_empty())
        }
        Command::Eval {
            gt,
            pred,
            include_background,
            pooling,
            out,
        } => {
            cfg.include_background |= include_background;
            cfg.pooling = pooling.unwrap_or(cfg.pooling);
            let report = to_json(&cmd_eval(&gt, &pred, &cfg)?);
            if let Some(out) = out {
                std::fs::write(&out, &report).with_context(|| format!("writing {}", out.display()))?;
            }
            print!("{report}");
            Ok(false)
        }
        Command::HierValidate { hierarchy, vocab } => {
            print!("{}", to_json(&cmd_hier_validate(&hierarchy, vocab.as_deref())?));
            Ok(false)
        }
        Command::Synth {
            out,
            videos,
            classes,
            frames,
            noise,
            unit,
            structured,
        } => {
            let synth = SynthConfig {
                videos,
                classes,
                frames,
                noise,
                seed: cfg.seed,
                fps: cfg.fps,
                unit,
                structured,
            };
            let corpus = cmd_synth(&synth, &out)?;
            println!("wrote {} videos to {}", corpus.videos.len(), out.display());
            Ok(false)
        }
        Command::MineEval { instances, gt, fps } => {
            cfg.fps = fps.unwrap_or(cfg.fps);
            print!("{}", to_json(&cmd_mine_eval(&instances, &gt, &cfg)?));
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
