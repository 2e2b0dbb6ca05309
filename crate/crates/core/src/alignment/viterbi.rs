//! Transcript-constrained segmental Viterbi decoding.
//!
//! Segment boundaries may only fall on a coarse grid `{0, s, 2s, ...} ∪ {T}`.
//! Every transcript entry gets exactly one segment, in order, each at most
//! `max_len` frames long. The score of a segmentation is the sum over frames
//! of the (log) likelihood of the frame's label.

use super::{AlignError, ProbMatrix, Segmentation, Transcript};

pub const DEFAULT_STRIDE: usize = 30;
pub const DEFAULT_MAX_LEN: usize = 1000;

// Relative score difference below which two candidates count as tied. Sums
// that are equal in exact arithmetic may differ in the last bits.
const TIE_TOLERANCE: f64 = 1e-10;

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate - incumbent > TIE_TOLERANCE * incumbent.abs().max(1.0)
}

/// `{0, stride, 2*stride, ...} ∪ {frames}`, strictly increasing.
pub fn grid_boundaries(frames: usize, stride: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..frames).step_by(stride.max(1)).collect();
    grid.push(frames);
    grid
}

pub fn viterbi_align(
    likelihoods: &ProbMatrix,
    transcript: &Transcript,
    stride: usize,
    max_len: usize,
) -> Result<Segmentation, AlignError> {
    viterbi_align_scored(likelihoods, transcript, stride, max_len).map(|(s, _)| s)
}

/// Returns the best segmentation and its score. Among equally scored
/// segmentations the lexicographically smallest boundary vector wins.
pub fn viterbi_align_scored(
    likelihoods: &ProbMatrix,
    transcript: &Transcript,
    stride: usize,
    max_len: usize,
) -> Result<(Segmentation, f64), AlignError> {
    if stride == 0 || max_len == 0 {
        return Err(AlignError::InvalidGrid);
    }
    let frames = likelihoods.frames();
    let n = transcript.len();
    if n == 0 {
        return Err(AlignError::EmptyTranscript);
    }
    for &c in &transcript.entries {
        if c as usize >= likelihoods.classes() {
            return Err(AlignError::InvalidClass {
                class: c,
                classes: likelihoods.classes(),
            });
        }
    }
    if likelihoods.values().iter().any(|v| !v.is_finite()) {
        return Err(AlignError::NonFinite);
    }
    let grid = grid_boundaries(frames, stride);
    let intervals = grid.len() - 1;
    let infeasible = AlignError::InfeasibleTranscript {
        entries: n,
        frames,
        intervals,
    };
    if frames == 0 || n > intervals {
        return Err(infeasible);
    }

    // cumulative likelihood at grid points, one row per transcript entry
    let cum: Vec<Vec<f64>> = transcript
        .entries
        .iter()
        .map(|&c| {
            let c = c as usize;
            let mut acc = 0.0;
            let mut t = 0;
            let mut out = Vec::with_capacity(grid.len());
            for &g in &grid {
                while t < g {
                    acc += likelihoods.get(t, c);
                    t += 1;
                }
                out.push(acc);
            }
            out
        })
        .collect();

    // best[i][k]: best score of entries i.. when entry i starts at grid point k
    let mut best = vec![vec![f64::NEG_INFINITY; intervals + 1]; n + 1];
    let mut next = vec![vec![usize::MAX; intervals + 1]; n];
    best[n][intervals] = 0.0;
    for i in (0..n).rev() {
        // entry i needs i earlier intervals and n - i intervals including itself
        let lo = i;
        let hi = intervals - (n - i);
        for k in lo..=hi {
            let mut score = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for m in k + 1..=intervals - (n - i - 1) {
                if grid[m] - grid[k] > max_len {
                    break;
                }
                let tail = best[i + 1][m];
                if tail == f64::NEG_INFINITY {
                    continue;
                }
                let s = (cum[i][m] - cum[i][k]) + tail;
                // candidates are visited in increasing m, so ties keep the smallest
                if arg == usize::MAX || improves(s, score) {
                    score = s;
                    arg = m;
                }
            }
            best[i][k] = score;
            next[i][k] = arg;
        }
    }
    if next[0][0] == usize::MAX {
        return Err(infeasible);
    }

    let mut bounds = vec![0usize];
    let mut k = 0;
    for row in &next {
        k = row[k];
        bounds.push(grid[k]);
    }
    let seg = Segmentation::from_boundaries(transcript.video_id.clone(), &bounds, &transcript.entries)?;
    Ok((seg, best[0][0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_block(frames: usize, split: usize) -> ProbMatrix {
        let mut m = ProbMatrix::filled("v", frames, 2, -5.0);
        for t in 0..frames {
            m.set(t, if t < split { 0 } else { 1 }, 0.0);
        }
        m
    }

    #[test]
    fn grid_includes_end() {
        assert_eq!(grid_boundaries(60, 30), vec![0, 30, 60]);
        assert_eq!(grid_boundaries(70, 30), vec![0, 30, 60, 70]);
        assert_eq!(grid_boundaries(10, 30), vec![0, 10]);
    }

    #[test]
    fn two_entries_split_on_grid() {
        let t = Transcript::new("v", vec![0, 1]).unwrap();
        let (seg, score) = viterbi_align_scored(&two_block(60, 30), &t, 30, 1000).unwrap();
        assert_eq!(seg.boundaries(), vec![0, 30, 60]);
        assert_eq!(seg.labels(), vec![0, 1]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn single_entry() {
        let t = Transcript::new("v", vec![1]).unwrap();
        let seg = viterbi_align(&two_block(30, 10), &t, 30, 1000).unwrap();
        assert_eq!(seg.boundaries(), vec![0, 30]);
    }

    #[test]
    fn too_many_entries() {
        let m = ProbMatrix::filled("v", 30, 3, 0.0);
        let t = Transcript::new("v", vec![0, 1, 2]).unwrap();
        assert!(matches!(
            viterbi_align(&m, &t, 30, 1000),
            Err(AlignError::InfeasibleTranscript { intervals: 1, .. })
        ));
    }

    #[test]
    fn max_len_infeasible() {
        let m = ProbMatrix::filled("v", 120, 2, 0.0);
        let t = Transcript::new("v", vec![0, 1]).unwrap();
        assert!(viterbi_align(&m, &t, 30, 59).is_err());
        let seg = viterbi_align(&m, &t, 30, 60).unwrap();
        assert_eq!(seg.boundaries(), vec![0, 60, 120]);
    }

    #[test]
    fn ties_go_to_earliest_boundary() {
        let m = ProbMatrix::filled("v", 150, 3, 0.0);
        let t = Transcript::new("v", vec![0, 1, 2]).unwrap();
        let seg = viterbi_align(&m, &t, 30, 1000).unwrap();
        assert_eq!(seg.boundaries(), vec![0, 30, 60, 150]);
    }

    #[test]
    fn rounding_does_not_break_ties() {
        // one class: every segmentation has the same exact score
        let values = (0..57).map(|t| (0.37 + t as f64 * 0.011).ln()).collect();
        let m = ProbMatrix::new("v", 57, 1, values).unwrap();
        let t = Transcript::new("v", vec![0, 0, 0]).unwrap();
        assert_eq!(viterbi_align(&m, &t, 1, 1000).unwrap().boundaries(), vec![0, 1, 2, 57]);
    }

    #[test]
    fn partial_final_chunk_reachable() {
        let t = Transcript::new("v", vec![0, 1]).unwrap();
        let seg = viterbi_align(&two_block(95, 90), &t, 30, 1000).unwrap();
        assert_eq!(seg.boundaries(), vec![0, 90, 95]);
    }

    #[test]
    fn rejects_bad_input() {
        let t = Transcript::new("v", vec![5]).unwrap();
        assert!(matches!(
            viterbi_align(&two_block(30, 10), &t, 30, 1000),
            Err(AlignError::InvalidClass { .. })
        ));
        let t = Transcript::new("v", vec![0]).unwrap();
        assert!(viterbi_align(&two_block(30, 10), &t, 0, 1000).is_err());
        let mut m = two_block(30, 10);
        m.set(3, 0, f64::NAN);
        assert!(matches!(viterbi_align(&m, &t, 30, 1000), Err(AlignError::NonFinite)));
    }
}
