//! Naive aligners: even split, random cut points, and subtitle keyword labels.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::captions::SubtitleTrack;
use crate::mining::{mine_cue, span_to_frames, MiningStrategy, Vocabulary};
use crate::BACKGROUND;

use super::{AlignError, Segmentation, Transcript};

/// Splits `frames` evenly; the first `frames % n` segments get one extra frame.
pub fn uniform_align(frames: usize, transcript: &Transcript) -> Result<Segmentation, AlignError> {
    let n = transcript.len();
    if frames < n || n == 0 {
        return Err(AlignError::TooShort { frames, entries: n });
    }
    let (base, rem) = (frames / n, frames % n);
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(0);
    for i in 0..n {
        let len = base + usize::from(i < rem);
        bounds.push(bounds[i] + len);
    }
    Segmentation::from_boundaries(transcript.video_id.clone(), &bounds, &transcript.entries)
}

/// Draws `n - 1` distinct interior cut points from `1..frames`.
pub fn random_align(frames: usize, transcript: &Transcript, seed: u64) -> Result<Segmentation, AlignError> {
    let n = transcript.len();
    if frames < n || n == 0 {
        return Err(AlignError::TooShort { frames, entries: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts: Vec<usize> = index::sample(&mut rng, frames - 1, n - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    cuts.sort_unstable();
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(0);
    bounds.extend(cuts);
    bounds.push(frames);
    Segmentation::from_boundaries(transcript.video_id.clone(), &bounds, &transcript.entries)
}

/// Labels the frames of every cue that fires a class (scrambled matching);
/// everything else is background. When cues overlap the later cue wins, and
/// a cue firing several classes uses the smallest class id.
pub fn subtitle_align(
    track: &SubtitleTrack,
    vocab: &Vocabulary,
    fps: f64,
    frames: usize,
) -> Result<Segmentation, AlignError> {
    if frames == 0 {
        return Err(AlignError::TooShort { frames, entries: 1 });
    }
    let mut labels = vec![BACKGROUND; frames];
    for cue in &track.cues {
        let Some(&class) = mine_cue(&cue.tokens, vocab, MiningStrategy::Scrambled).first() else {
            continue;
        };
        let (s, e) = span_to_frames(cue.start, cue.end, fps, frames);
        labels[s..e].fill(class);
    }
    Segmentation::from_frame_labels(track.video_id.clone(), &labels)
}
