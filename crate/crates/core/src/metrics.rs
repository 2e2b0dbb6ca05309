//! Jaccard evaluation of predicted segmentations.
//!
//! IoD is `|G ∩ D| / |D|`, IoU is `|G ∩ D| / |G ∪ D|`. Scores are computed per
//! video and averaged over videos without weighting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{Segment, Segmentation};
use crate::{ClassId, BACKGROUND};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{video}: ground truth has {gt} frames, prediction has {pred}")]
    LengthMismatch { video: String, gt: usize, pred: usize },
    #[error("{video}: predicted labels {pred:?} do not follow ground-truth order {gt:?}")]
    LabelSequenceMismatch {
        video: String,
        gt: Vec<ClassId>,
        pred: Vec<ClassId>,
    },
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("video sets differ: missing predictions {missing:?}, unexpected predictions {extra:?}")]
    VideoSetMismatch { missing: Vec<String>, extra: Vec<String> },
}

/// Frame counts accumulated over one or more `(G, D)` pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JaccardCounts {
    pub intersection: u64,
    pub detected: u64,
    pub union: u64,
}

impl JaccardCounts {
    /// Accounts for one frame given its membership in `G` and `D`.
    pub fn add_frame(&mut self, in_gt: bool, in_det: bool) {
        self.intersection += u64::from(in_gt && in_det);
        self.detected += u64::from(in_det);
        self.union += u64::from(in_gt || in_det);
    }

    pub fn add_spans(&mut self, gt: (usize, usize), det: (usize, usize)) {
        let inter = gt.1.min(det.1).saturating_sub(gt.0.max(det.0)) as u64;
        let (g, d) = ((gt.1 - gt.0) as u64, (det.1 - det.0) as u64);
        self.intersection += inter;
        self.detected += d;
        self.union += g + d - inter;
    }

    pub fn iod(&self) -> f64 {
        ratio(self.intersection, self.detected)
    }

    pub fn iou(&self) -> f64 {
        ratio(self.intersection, self.union)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// How ground-truth and predicted frames are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// The i-th scored gt segment is matched with the i-th scored predicted
    /// segment; per-entry ratios are averaged.
    #[default]
    Positionwise,
    /// Frames are pooled per predicted class (`G_c` = gt frames of class `c`,
    /// `D_c` = predicted frames of class `c`) and summed over classes. Works
    /// for predictions that do not follow the transcript, e.g. subtitle labels.
    FrameSet,
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positionwise" => Ok(Self::Positionwise),
            "frameset" | "frame-set" => Ok(Self::FrameSet),
            other => Err(format!("unknown pooling {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub include_background: bool,
    pub pooling: Pooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub iou: f64,
    pub iod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_iou: f64,
    pub mean_iod: f64,
    pub n_videos: usize,
    pub per_video: Vec<VideoScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores one video. If the ground truth holds nothing but background and
/// background is excluded, background is scored instead.
pub fn score_video(gt: &Segmentation, pred: &Segmentation, opts: ScoreOptions) -> Result<VideoScore, MetricsError> {
    if gt.frame_count() != pred.frame_count() {
        return Err(MetricsError::LengthMismatch {
            video: gt.video_id.clone(),
            gt: gt.frame_count(),
            pred: pred.frame_count(),
        });
    }
    let include_bg = opts.include_background || gt.segments().iter().all(|s| s.class_id == BACKGROUND);
    let (iou, iod) = match opts.pooling {
        Pooling::Positionwise => positionwise(gt, pred, include_bg)?,
        Pooling::FrameSet => frame_set(gt, pred, include_bg),
    };
    Ok(VideoScore {
        video_id: gt.video_id.clone(),
        iou,
        iod,
    })
}

fn scored(seg: &Segmentation, include_bg: bool) -> Vec<Segment> {
    seg.segments()
        .iter()
        .filter(|s| include_bg || s.class_id != BACKGROUND)
        .copied()
        .collect()
}

fn positionwise(gt: &Segmentation, pred: &Segmentation, include_bg: bool) -> Result<(f64, f64), MetricsError> {
    let g = scored(gt, include_bg);
    let d = scored(pred, include_bg);
    let labels = |v: &[Segment]| v.iter().map(|s| s.class_id).collect::<Vec<_>>();
    if labels(&g) != labels(&d) {
        return Err(MetricsError::LabelSequenceMismatch {
            video: gt.video_id.clone(),
            gt: labels(&g),
            pred: labels(&d),
        });
    }
    let (mut iou, mut iod) = (0.0, 0.0);
    for (gs, ds) in g.iter().zip(&d) {
        let mut c = JaccardCounts::default();
        c.add_spans((gs.start, gs.end), (ds.start, ds.end));
        iou += c.iou();
        iod += c.iod();
    }
    let n = g.len().max(1) as f64;
    Ok((iou / n, iod / n))
}

fn frame_set(gt: &Segmentation, pred: &Segmentation, include_bg: bool) -> (f64, f64) {
    let g = gt.frame_labels();
    let d = pred.frame_labels();
    let classes: BTreeSet<ClassId> = d.iter().copied().filter(|&c| include_bg || c != BACKGROUND).collect();
    let mut pooled = JaccardCounts::default();
    for (&gl, &dl) in g.iter().zip(&d) {
        let det = classes.contains(&dl);
        if det {
            pooled.add_frame(gl == dl, true);
        }
        if classes.contains(&gl) && gl != dl {
            // gt frame of a detected class that the prediction labeled differently
            pooled.add_frame(true, false);
        }
    }
    (pooled.iou(), pooled.iod())
}

/// Unweighted means over videos; per-video entries are sorted by video id so
/// the report does not depend on input order.
pub fn aggregate(scores: &[VideoScore]) -> Result<EvalReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut per_video = scores.to_vec();
    per_video.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let n = per_video.len() as f64;
    Ok(EvalReport {
        mean_iou: per_video.iter().map(|s| s.iou).sum::<f64>() / n,
        mean_iod: per_video.iter().map(|s| s.iod).sum::<f64>() / n,
        n_videos: per_video.len(),
        per_video,
    })
}

/// Scores every video present in both maps; the video sets must match.
pub fn evaluate(
    gt: &BTreeMap<String, Segmentation>,
    pred: &BTreeMap<String, Segmentation>,
    opts: ScoreOptions,
) -> Result<EvalReport, MetricsError> {
    let missing: Vec<String> = gt.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
    let extra: Vec<String> = pred.keys().filter(|k| !gt.contains_key(*k)).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(MetricsError::VideoSetMismatch { missing, extra });
    }
    let scores = gt
        .iter()
        .map(|(id, g)| score_video(g, &pred[id], opts))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(&scores)
}
