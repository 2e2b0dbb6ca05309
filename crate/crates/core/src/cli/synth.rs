//! Synthetic corpora with known ground truth, for offline runs of the whole
//! pipeline.
//!
//! Classes come in groups sharing one verb: a general class (`verb` alone)
//! and up to two specific ones (`verb object`). Specific classes hang below
//! their general class; general classes hang below meta nodes that pair up
//! neighbouring groups.
//!
//! Posterior rows are `(1 - noise) * signal + noise * n_t`, where `n_t` is a
//! random distribution drawn per frame. With `structured` set, the signal
//! also spreads over hierarchy relatives of the true class, and the noise
//! comes in bursts that put all their mass on one class from another branch.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::alignment::{ProbMatrix, Segment, Segmentation, Transcript, DEFAULT_STRIDE};
use crate::captions::{singularize, to_webvtt, CaptionSource, Cue, SubtitleTrack};
use crate::hierarchy::{ClassHierarchy, Edge, DEFAULT_MAX_DEPTH};
use crate::mining::{ActionClass, Vocabulary};
use crate::{ClassId, BACKGROUND};

use super::commands::write_atomic;
use super::{video_seed, PipelineError, DEFAULT_FPS};

const VERBS: &[&str] = &[
    "cut", "pour", "stir", "fold", "wash", "peel", "roll", "fry", "chop", "whisk", "knead", "grate", "drain", "slice",
];
const OBJECTS: &[&str] = &[
    "onion", "egg", "flour", "dough", "shirt", "carrot", "butter", "paper", "pan", "garlic", "towel", "cheese", "potato",
    "lemon", "sugar", "bread", "apple", "rice",
];
const NEUTRAL: &[&str] = &[
    "hi everyone welcome back",
    "this looks really good",
    "thanks for watching",
    "let me know in the comments",
    "okay so that is about it",
];

/// First id used for meta nodes.
pub const META_BASE: ClassId = 1000;

// Frames per noise burst in structured mode.
const BURST: usize = 20;
// Share of the signal kept by the true class in structured mode.
const STRUCTURED_SELF: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub videos: usize,
    /// Number of classes, background included.
    pub classes: usize,
    pub frames: usize,
    pub noise: f64,
    pub seed: u64,
    pub fps: f64,
    /// Ground-truth boundaries fall on multiples of this many frames.
    pub unit: usize,
    pub structured: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            classes: 10,
            frames: 600,
            noise: 0.2,
            seed: 0,
            fps: DEFAULT_FPS,
            unit: DEFAULT_STRIDE,
            structured: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.classes < 2 {
            return fail("synth needs at least one action class besides background");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return fail("noise must lie in [0, 1]");
        }
        if self.unit == 0 || self.frames < self.unit {
            return fail("frames must cover at least one boundary unit");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail("fps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub id: String,
    pub gt: Segmentation,
    pub transcript: Transcript,
    pub posteriors: ProbMatrix,
    pub captions: SubtitleTrack,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub vocab: Vocabulary,
    pub hierarchy: ClassHierarchy,
    pub videos: Vec<SynthVideo>,
}

fn lemma(list: &[&str], i: usize) -> String {
    let base = list[i % list.len()];
    match i / list.len() {
        0 => base.to_string(),
        round => format!("{base}{round}"),
    }
}

/// Vocabulary and hierarchy for `classes - 1` action classes.
pub fn synth_taxonomy(classes: usize) -> (Vocabulary, ClassHierarchy) {
    let mut vocab = Vec::new();
    let mut edges = Vec::new();
    let mut id: ClassId = 1;
    let mut group = 0usize;
    while (id as usize) < classes {
        let verb = lemma(VERBS, group);
        let general = id;
        let meta = META_BASE.max(classes as ClassId) + (group / 2) as ClassId;
        if group % 2 == 0 {
            edges.push(Edge::new(meta, None, true));
        }
        vocab.push(ActionClass::new(general, &verb, None));
        edges.push(Edge::new(general, Some(meta), false));
        id += 1;
        for j in 0..2 {
            if id as usize >= classes {
                break;
            }
            let object = lemma(OBJECTS, 2 * group + j);
            vocab.push(ActionClass::new(id, &verb, Some(&object)));
            edges.push(Edge::new(id, Some(general), false));
            id += 1;
        }
        group += 1;
    }
    let vocab = Vocabulary::new(vocab).expect("generated lemmas are valid");
    let hierarchy = ClassHierarchy::from_edges(&edges, DEFAULT_MAX_DEPTH).expect("generated tree is valid");
    (vocab, hierarchy)
}

/// Non-meta parent and children of `class`.
fn relatives(h: &ClassHierarchy, class: ClassId) -> Vec<ClassId> {
    let Some(node) = h.node(class) else {
        return Vec::new();
    };
    let non_meta = |id: &ClassId| h.node(*id).is_some_and(|n| !n.is_meta);
    node.parent.iter().chain(&node.children).copied().filter(non_meta).collect()
}

/// Splits `units` into one share per weight, each at least 1, proportional
/// to the weights otherwise (largest remainder, ties to the earlier share).
fn allocate_units(weights: &[f64], units: usize) -> Vec<usize> {
    let spare = units - weights.len();
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * spare as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| 1 + e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let left = units - out.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        out[i] += 1;
    }
    out
}

fn generate_gt(id: &str, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Segmentation {
    let max_entries = cfg.frames / cfg.unit;
    let n_actions = rng.gen_range(3..=6usize).min(max_entries);
    let mut actions: Vec<ClassId> = Vec::with_capacity(n_actions);
    while actions.len() < n_actions {
        let c = rng.gen_range(1..cfg.classes) as ClassId;
        // the only class can repeat when there is nothing else to pick
        if actions.last() != Some(&c) || cfg.classes == 2 {
            actions.push(c);
        }
    }
    let mut labels = Vec::new();
    for (i, &a) in actions.iter().enumerate() {
        let p_bg = if i == 0 { 0.5 } else { 0.3 };
        if rng.gen_bool(p_bg) {
            labels.push(BACKGROUND);
        }
        labels.push(a);
    }
    if rng.gen_bool(0.5) {
        labels.push(BACKGROUND);
    }
    // drop background entries beyond what the video can hold
    while labels.len() > max_entries {
        let pos = labels.iter().rposition(|&l| l == BACKGROUND).unwrap_or(labels.len() - 1);
        labels.remove(pos);
    }
    // merge runs that the removals may have created
    labels.dedup_by(|a, b| a == b && *a == BACKGROUND);

    // exponential weights: segment lengths distributed like the gaps between
    // uniformly random cut points, so lengths vary widely as in real videos
    // exponential weights spread lengths like the gaps between uniformly
    // random cut points
    let weights: Vec<f64> = labels.iter().map(|_| Exp1.sample(rng)).collect();
    let mut lengths: Vec<usize> = allocate_units(&weights, cfg.frames / cfg.unit)
        .into_iter()
        .map(|u| u * cfg.unit)
        .collect();
    *lengths.last_mut().expect("non-empty") += cfg.frames % cfg.unit;
    let mut start = 0;
    let segments = labels
        .iter()
        .zip(&lengths)
        .map(|(&l, &len)| {
            let s = Segment::new(start, start + len, l);
            start += len;
            s
        })
        .collect();
    Segmentation::new(id, segments).expect("lengths cover the video")
}

fn random_distribution(classes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let u: Vec<f64> = (0..classes).map(|_| rng.gen::<f64>() + 1e-12).collect();
    let sum: f64 = u.iter().sum();
    u.into_iter().map(|x| x / sum).collect()
}

fn signal(class: ClassId, classes: usize, h: &ClassHierarchy, structured: bool) -> Vec<f64> {
    let mut row = vec![0.0; classes];
    let rel = if structured { relatives(h, class) } else { Vec::new() };
    if rel.is_empty() {
        row[class as usize] = 1.0;
    } else {
        row[class as usize] = STRUCTURED_SELF;
        for r in &rel {
            row[*r as usize] += (1.0 - STRUCTURED_SELF) / rel.len() as f64;
        }
    }
    row
}

/// Classes the structured noise may promote while `class` is true: action
/// classes outside `class` and its relatives, preferring ones of this video.
fn confusers(class: ClassId, in_video: &BTreeSet<ClassId>, classes: usize, h: &ClassHierarchy) -> Vec<ClassId> {
    let mut related = relatives(h, class);
    related.push(class);
    let pick = |pool: &mut dyn Iterator<Item = ClassId>| -> Vec<ClassId> {
        pool.filter(|c| *c != BACKGROUND && !related.contains(c)).collect()
    };
    let local = pick(&mut in_video.iter().copied());
    if local.is_empty() {
        pick(&mut (1..classes as ClassId))
    } else {
        local
    }
}

fn generate_posteriors(
    gt: &Segmentation,
    cfg: &SynthConfig,
    h: &ClassHierarchy,
    rng: &mut ChaCha8Rng,
) -> ProbMatrix {
    let c = cfg.classes;
    let labels = gt.frame_labels();
    let in_video: BTreeSet<ClassId> = labels.iter().copied().collect();
    let mut values = Vec::with_capacity(labels.len() * c);
    let mut burst: Option<ClassId> = None;
    for (t, &k) in labels.iter().enumerate() {
        if cfg.structured && t % BURST == 0 {
            let pool = confusers(k, &in_video, c, h);
            burst = (rng.gen_bool(0.5) && !pool.is_empty()).then(|| *pool.choose(rng).expect("non-empty"));
        }
        let noise = match burst {
            Some(confuser) if cfg.structured => {
                let mut v = vec![0.0; c];
                v[confuser as usize] = 1.0;
                v
            }
            _ => random_distribution(c, rng),
        };
        let sig = signal(k, c, h, cfg.structured);
        // stored as f32 so in-memory and on-disk corpora agree exactly
        values.extend(
            sig.iter()
                .zip(&noise)
                .map(|(s, n)| f64::from(((1.0 - cfg.noise) * s + cfg.noise * n) as f32)),
        );
    }
    ProbMatrix::new(gt.video_id.clone(), labels.len(), c, values).expect("shape matches")
}

fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

fn generate_captions(gt: &Segmentation, vocab: &Vocabulary, fps: f64, rng: &mut ChaCha8Rng) -> SubtitleTrack {
    let mut cues = Vec::new();
    for seg in gt.segments() {
        let (s, e) = (seg.start as f64 / fps, seg.end as f64 / fps);
        let start = round_ms(s + 0.1 * (e - s));
        let end = round_ms(e.min(start + 4.0));
        if end <= start {
            continue;
        }
        let text = match vocab.get(seg.class_id) {
            Some(class) if rng.gen_bool(0.8) => match &class.object {
                Some(object) => {
                    let plural = format!("{object}s");
                    let object = if rng.gen_bool(0.3) && singularize(&plural) == *object {
                        plural
                    } else {
                        object.clone()
                    };
                    format!("now we {} the {object}", class.verb)
                }
                None => format!("just {} it like this", class.verb),
            },
            _ if rng.gen_bool(0.5) => NEUTRAL.choose(rng).expect("non-empty").to_string(),
            _ => continue,
        };
        cues.push(Cue::new(start, end, text));
    }
    SubtitleTrack::new(gt.video_id.clone(), CaptionSource::Auto, cues)
}

/// Builds a corpus in memory. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, PipelineError> {
    cfg.validate()?;
    let (vocab, hierarchy) = synth_taxonomy(cfg.classes);
    let videos = (0..cfg.videos)
        .map(|i| {
            let id = format!("vid{i:03}");
            // separate streams so the noise level never changes the ground truth
            let mut gt_rng = ChaCha8Rng::seed_from_u64(video_seed(cfg.seed, &id));
            let mut noise_rng = ChaCha8Rng::seed_from_u64(video_seed(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, &id));
            let gt = generate_gt(&id, cfg, &mut gt_rng);
            let captions = generate_captions(&gt, &vocab, cfg.fps, &mut gt_rng);
            let posteriors = generate_posteriors(&gt, cfg, &hierarchy, &mut noise_rng);
            let transcript = Transcript::new(id.clone(), gt.labels()).expect("gt is non-empty");
            SynthVideo {
                id,
                gt,
                transcript,
                posteriors,
                captions,
            }
        })
        .collect();
    Ok(SynthCorpus {
        vocab,
        hierarchy,
        videos,
    })
}

/// Layout: `vocab.json`, `hierarchy.tsv`, `gt/<id>.tsv`, `transcripts/<id>.txt`,
/// `probs/<id>.pmat`, `captions/<id>.vtt`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<(), PipelineError> {
    write_atomic(&dir.join("vocab.json"), corpus.vocab.to_json().as_bytes())?;
    write_atomic(&dir.join("hierarchy.tsv"), corpus.hierarchy.to_tsv().as_bytes())?;
    for v in &corpus.videos {
        write_atomic(&dir.join("gt").join(format!("{}.tsv", v.id)), v.gt.to_tsv().as_bytes())?;
        write_atomic(
            &dir.join("transcripts").join(format!("{}.txt", v.id)),
            v.transcript.to_text().as_bytes(),
        )?;
        write_atomic(&dir.join("probs").join(format!("{}.pmat", v.id)), &v.posteriors.to_pmat_bytes())?;
        write_atomic(
            &dir.join("captions").join(format!("{}.vtt", v.id)),
            to_webvtt(&v.captions).as_bytes(),
        )?;
    }
    Ok(())
}

pub fn cmd_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthCorpus, PipelineError> {
    let corpus = generate(cfg)?;
    write_corpus(&corpus, out_dir)?;
    Ok(corpus)
}
