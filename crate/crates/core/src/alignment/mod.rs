//! Frame-to-transcript alignment.
//!
//! Holds the shared per-video containers ([`ProbMatrix`], [`Transcript`],
//! [`Segmentation`]) together with their file formats, the Bayes conversion
//! from posteriors to likelihoods, the grid-constrained Viterbi decoder and
//! the naive baselines.

mod baselines;
mod bayes;
mod viterbi;

use std::fmt::Write as _;

use thiserror::Error;

use crate::ClassId;

pub use baselines::{random_align, subtitle_align, uniform_align};
pub use bayes::{compute_priors, to_likelihood, Priors, LIKELIHOOD_FLOOR};
pub use viterbi::{grid_boundaries, viterbi_align, viterbi_align_scored, DEFAULT_MAX_LEN, DEFAULT_STRIDE};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("transcript with {entries} entries cannot be aligned to {frames} frames on a grid of {intervals} intervals")]
    InfeasibleTranscript {
        entries: usize,
        frames: usize,
        intervals: usize,
    },
    #[error("{frames} frames are too few for {entries} transcript entries")]
    TooShort { frames: usize, entries: usize },
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("class {class} outside matrix with {classes} columns")]
    InvalidClass { class: ClassId, classes: usize },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
    #[error("no training instances and zero smoothing")]
    EmptyTraining,
    #[error("stride and max length must be positive")]
    InvalidGrid,
    #[error("likelihood matrix contains non-finite values")]
    NonFinite,
    #[error("not a PMAT file")]
    BadMagic,
    #[error("probability matrix file is truncated")]
    Truncated,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Dense `frames × classes` matrix, row-major. Column `c` holds class id `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub video_id: String,
    frames: usize,
    classes: usize,
    values: Vec<f64>,
}

const PMAT_MAGIC: &[u8; 4] = b"PMAT";

impl ProbMatrix {
    pub fn new(video_id: impl Into<String>, frames: usize, classes: usize, values: Vec<f64>) -> Result<Self, AlignError> {
        if values.len() != frames * classes {
            return Err(AlignError::DimensionMismatch {
                expected: frames * classes,
                got: values.len(),
            });
        }
        Ok(Self {
            video_id: video_id.into(),
            frames,
            classes,
            values,
        })
    }

    pub fn filled(video_id: impl Into<String>, frames: usize, classes: usize, value: f64) -> Self {
        Self {
            video_id: video_id.into(),
            frames,
            classes,
            values: vec![value; frames * classes],
        }
    }

    pub fn from_rows(video_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self, AlignError> {
        let classes = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * classes);
        for r in rows {
            if r.len() != classes {
                return Err(AlignError::DimensionMismatch {
                    expected: classes,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(video_id, rows.len(), classes, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.classes + c]
    }

    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.values[t * self.classes + c] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.classes..(t + 1) * self.classes]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.classes..(t + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-column matrix has no meaningful rows
        self.values.chunks_exact(self.classes.max(1))
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.values.chunks_exact_mut(self.classes.max(1))
    }

    /// Index of the largest value in row `t`; ties go to the lowest column.
    pub fn argmax(&self, t: usize) -> usize {
        let row = self.row(t);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        best
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_probability(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Binary layout: `PMAT`, u32 frames, u32 classes, then little-endian f32 values.
    pub fn to_pmat_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(PMAT_MAGIC);
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.classes as u32).to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_pmat_bytes(video_id: impl Into<String>, bytes: &[u8]) -> Result<Self, AlignError> {
        if bytes.len() < 12 {
            return Err(if bytes.starts_with(PMAT_MAGIC) || bytes.len() < 4 {
                AlignError::Truncated
            } else {
                AlignError::BadMagic
            });
        }
        if &bytes[..4] != PMAT_MAGIC {
            return Err(AlignError::BadMagic);
        }
        let frames = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let classes = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() != 4 * frames * classes {
            return Err(AlignError::Truncated);
        }
        let values = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        Self::new(video_id, frames, classes, values)
    }

    /// CSV alternative with header `t,c0,c1,...`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((0..self.classes).map(|c| format!("c{c}")));
        w.write_record(&header).expect("in-memory write");
        for t in 0..self.frames {
            let mut rec = vec![t.to_string()];
            rec.extend(self.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn from_csv(video_id: impl Into<String>, text: &str) -> Result<Self, AlignError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let classes = r.headers()?.len().saturating_sub(1);
        let mut values = Vec::new();
        let mut frames = 0;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != classes + 1 {
                return Err(AlignError::Parse {
                    line,
                    msg: format!("expected {} fields, got {}", classes + 1, rec.len()),
                });
            }
            for field in rec.iter().skip(1) {
                values.push(field.trim().parse::<f64>().map_err(|e| AlignError::Parse {
                    line,
                    msg: e.to_string(),
                })?);
            }
            frames += 1;
        }
        Self::new(video_id, frames, classes, values)
    }
}

/// Ordered list of the actions occurring in a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub video_id: String,
    pub entries: Vec<ClassId>,
}

impl Transcript {
    pub fn new(video_id: impl Into<String>, entries: Vec<ClassId>) -> Result<Self, AlignError> {
        if entries.is_empty() {
            return Err(AlignError::EmptyTranscript);
        }
        Ok(Self {
            video_id: video_id.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One class id per line; blank lines ignored.
    pub fn from_text(video_id: impl Into<String>, text: &str) -> Result<Self, AlignError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            entries.push(line.parse().map_err(|_| AlignError::Parse {
                line: i + 1,
                msg: format!("bad class id {line:?}"),
            })?);
        }
        Self::new(video_id, entries)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Half-open frame range with a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class_id: ClassId,
}

impl Segment {
    pub fn new(start: usize, end: usize, class_id: ClassId) -> Self {
        Self { start, end, class_id }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Contiguous, gap-free partition of `[0, T)` into labeled segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub video_id: String,
    segments: Vec<Segment>,
}

impl Segmentation {
    pub fn new(video_id: impl Into<String>, segments: Vec<Segment>) -> Result<Self, AlignError> {
        if segments.is_empty() {
            return Err(AlignError::InvalidSegmentation("no segments".into()));
        }
        let mut expect = 0;
        for (i, s) in segments.iter().enumerate() {
            if s.start != expect {
                return Err(AlignError::InvalidSegmentation(format!(
                    "segment {i} starts at {} instead of {expect}",
                    s.start
                )));
            }
            if s.end <= s.start {
                return Err(AlignError::InvalidSegmentation(format!("segment {i} is empty")));
            }
            expect = s.end;
        }
        Ok(Self {
            video_id: video_id.into(),
            segments,
        })
    }

    /// Builds segments from consecutive cut points `0 = b0 < b1 < ... < bN = T`.
    pub fn from_boundaries(video_id: impl Into<String>, boundaries: &[usize], labels: &[ClassId]) -> Result<Self, AlignError> {
        if boundaries.len() != labels.len() + 1 {
            return Err(AlignError::DimensionMismatch {
                expected: labels.len() + 1,
                got: boundaries.len(),
            });
        }
        let segments = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| Segment::new(boundaries[i], boundaries[i + 1], c))
            .collect();
        Self::new(video_id, segments)
    }

    /// Merges runs of equal per-frame labels into segments.
    pub fn from_frame_labels(video_id: impl Into<String>, labels: &[ClassId]) -> Result<Self, AlignError> {
        let mut segments: Vec<Segment> = Vec::new();
        for (t, &l) in labels.iter().enumerate() {
            match segments.last_mut() {
                Some(s) if s.class_id == l => s.end = t + 1,
                _ => segments.push(Segment::new(t, t + 1, l)),
            }
        }
        Self::new(video_id, segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn frame_count(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn labels(&self) -> Vec<ClassId> {
        self.segments.iter().map(|s| s.class_id).collect()
    }

    /// Interior and outer cut points, `N + 1` values.
    pub fn boundaries(&self) -> Vec<usize> {
        std::iter::once(0).chain(self.segments.iter().map(|s| s.end)).collect()
    }

    pub fn frame_labels(&self) -> Vec<ClassId> {
        let mut out = Vec::with_capacity(self.frame_count());
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.class_id, s.len()));
        }
        out
    }

    /// TSV: `start_frame, end_frame, class_id` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let _ = writeln!(out, "{}\t{}\t{}", s.start, s.end, s.class_id);
        }
        out
    }

    pub fn from_tsv(video_id: impl Into<String>, text: &str) -> Result<Self, AlignError> {
        let mut segments = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || AlignError::Parse {
                line: i + 1,
                msg: format!("expected start, end, class: {line:?}"),
            };
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad());
            }
            segments.push(Segment::new(
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
            ));
        }
        Self::new(video_id, segments)
    }

    /// Label sequence equals the transcript entries and the partition is valid.
    pub fn follows(&self, transcript: &Transcript) -> bool {
        self.labels() == transcript.entries
    }
}
