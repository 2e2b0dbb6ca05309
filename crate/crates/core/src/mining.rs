//! Weak label mining from subtitle cues.
//!
//! A class is a verb/object pair. A cue "fires" a class when its verb and
//! object lemmas appear under the active [`MiningStrategy`]; the fired span is
//! the full cue span. Cues with no vocabulary keyword at all are background
//! candidates.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::Segmentation;
use crate::captions::{normalize_text, SubtitleTrack};
use crate::metrics::JaccardCounts;
use crate::{ClassId, BACKGROUND};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("duplicate class id {0}")]
    DuplicateClass(ClassId),
    #[error("class id 0 is reserved for background")]
    ReservedId,
    #[error("class {0} has an empty verb")]
    EmptyVerb(ClassId),
    #[error("class {id}: lemma {lemma:?} does not normalize to a single token")]
    InvalidLemma { id: ClassId, lemma: String },
    #[error("instance references unknown video {0:?}")]
    UnknownVideo(String),
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A verb/object action class. `object == None` is the general "verb it" class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionClass {
    pub id: ClassId,
    pub verb: String,
    pub object: Option<String>,
    #[serde(default)]
    pub verb_synonyms: Vec<String>,
    #[serde(default)]
    pub object_synonyms: Vec<String>,
}

impl ActionClass {
    pub fn new(id: ClassId, verb: &str, object: Option<&str>) -> Self {
        Self {
            id,
            verb: verb.to_string(),
            object: object.map(str::to_string),
            verb_synonyms: Vec::new(),
            object_synonyms: Vec::new(),
        }
    }

    pub fn is_general(&self) -> bool {
        self.object.is_none()
    }

    pub fn verb_lemmas(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.verb.as_str()).chain(self.verb_synonyms.iter().map(String::as_str))
    }

    pub fn object_lemmas(&self) -> impl Iterator<Item = &str> {
        self.object
            .iter()
            .chain(self.object_synonyms.iter())
            .map(String::as_str)
    }

    pub fn label(&self) -> String {
        format!("{} {}", self.verb, self.object.as_deref().unwrap_or("it"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Verb,
    Object,
}

/// Validated class lexicon with a lemma index for fast cue matching.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    classes: Vec<ActionClass>,
    by_id: BTreeMap<ClassId, usize>,
    lemma_index: HashMap<String, Vec<(usize, Role)>>,
}

impl Vocabulary {
    pub const BACKGROUND_ID: ClassId = BACKGROUND;

    /// Lemmas are passed through [`normalize_text`] so that "eggs" in the
    /// vocabulary matches "egg" in normalized cue text.
    pub fn new(classes: Vec<ActionClass>) -> Result<Self, MiningError> {
        let mut by_id = BTreeMap::new();
        let mut normalized = Vec::with_capacity(classes.len());
        for mut class in classes {
            if class.id == BACKGROUND {
                return Err(MiningError::ReservedId);
            }
            if class.verb.trim().is_empty() {
                return Err(MiningError::EmptyVerb(class.id));
            }
            if by_id.insert(class.id, normalized.len()).is_some() {
                return Err(MiningError::DuplicateClass(class.id));
            }
            let id = class.id;
            let norm = |s: &str| -> Result<String, MiningError> {
                let mut toks = normalize_text(s);
                if toks.len() != 1 {
                    return Err(MiningError::InvalidLemma {
                        id,
                        lemma: s.to_string(),
                    });
                }
                Ok(toks.remove(0))
            };
            class.verb = norm(&class.verb)?;
            class.object = class.object.as_deref().map(norm).transpose()?;
            class.verb_synonyms = class.verb_synonyms.iter().map(|s| norm(s)).collect::<Result<_, _>>()?;
            class.object_synonyms = class.object_synonyms.iter().map(|s| norm(s)).collect::<Result<_, _>>()?;
            normalized.push(class);
        }

        let mut lemma_index: HashMap<String, Vec<(usize, Role)>> = HashMap::new();
        for (i, class) in normalized.iter().enumerate() {
            for v in class.verb_lemmas() {
                lemma_index.entry(v.to_string()).or_default().push((i, Role::Verb));
            }
            for o in class.object_lemmas() {
                lemma_index.entry(o.to_string()).or_default().push((i, Role::Object));
            }
        }
        for entries in lemma_index.values_mut() {
            entries.dedup();
        }
        Ok(Self {
            classes: normalized,
            by_id,
            lemma_index,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty vocabulary is valid")
    }

    /// Reads the JSON list-of-classes format.
    pub fn from_json(text: &str) -> Result<Self, MiningError> {
        let classes: Vec<ActionClass> = serde_json::from_str(text)?;
        Self::new(classes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.classes).expect("vocabulary serializes")
    }

    pub fn classes(&self) -> &[ActionClass] {
        &self.classes
    }

    pub fn get(&self, id: ClassId) -> Option<&ActionClass> {
        self.by_id.get(&id).map(|&i| &self.classes[i])
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// True when the token is any verb or object lemma of any class.
    pub fn is_keyword(&self, token: &str) -> bool {
        self.lemma_index.contains_key(token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiningStrategy {
    /// Object directly follows the verb.
    Neighbor,
    /// Object somewhere after the verb.
    Ordered,
    /// Verb and object anywhere in the cue.
    #[default]
    Scrambled,
}

impl MiningStrategy {
    pub const ALL: [MiningStrategy; 3] = [Self::Neighbor, Self::Ordered, Self::Scrambled];

    pub fn name(self) -> &'static str {
        match self {
            Self::Neighbor => "neighbor",
            Self::Ordered => "ordered",
            Self::Scrambled => "scrambled",
        }
    }
}

impl std::str::FromStr for MiningStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "neighbor" | "neighbour" => Ok(Self::Neighbor),
            "ordered" => Ok(Self::Ordered),
            "scrambled" => Ok(Self::Scrambled),
            other => Err(format!("unknown mining strategy {other:?}")),
        }
    }
}

/// Returns the classes fired by one normalized cue.
///
/// Verb and object must occupy distinct token positions. A general class
/// (no object) fires when its verb occurs and no specific class with the same
/// head verb has both its verb and object in the cue. Suppression ignores the
/// strategy, which keeps `Neighbor ⊆ Ordered ⊆ Scrambled`.
pub fn mine_cue(tokens: &[String], vocab: &Vocabulary, strategy: MiningStrategy) -> BTreeSet<ClassId> {
    let mut verb_pos: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut obj_pos: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, tok) in tokens.iter().enumerate() {
        if let Some(entries) = vocab.lemma_index.get(tok.as_str()) {
            for &(ci, role) in entries {
                let map = match role {
                    Role::Verb => &mut verb_pos,
                    Role::Object => &mut obj_pos,
                };
                let list = map.entry(ci).or_default();
                if list.last() != Some(&pos) {
                    list.push(pos);
                }
            }
        }
    }

    let mut fired = BTreeSet::new();
    let mut suppressed_verbs: BTreeSet<&str> = BTreeSet::new();
    for (&ci, verbs) in &verb_pos {
        let class = &vocab.classes[ci];
        if class.is_general() {
            continue;
        }
        let Some(objects) = obj_pos.get(&ci) else {
            continue;
        };
        let co_occur = !(verbs.len() == 1 && objects.len() == 1 && verbs[0] == objects[0]);
        if !co_occur {
            continue;
        }
        suppressed_verbs.insert(class.verb.as_str());
        let hit = match strategy {
            MiningStrategy::Neighbor => verbs.iter().any(|v| objects.binary_search(&(v + 1)).is_ok()),
            MiningStrategy::Ordered => verbs[0] < *objects.last().expect("non-empty"),
            MiningStrategy::Scrambled => true,
        };
        if hit {
            fired.insert(class.id);
        }
    }
    for &ci in verb_pos.keys() {
        let class = &vocab.classes[ci];
        if class.is_general() && !suppressed_verbs.contains(class.verb.as_str()) {
            fired.insert(class.id);
        }
    }
    fired
}

/// A weakly labeled clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedInstance {
    pub video_id: String,
    pub class_id: ClassId,
    pub start: f64,
    pub end: f64,
    pub source_cue_index: usize,
}

/// One instance per (cue, fired class), ordered by cue index then class id.
pub fn mine_track(track: &SubtitleTrack, vocab: &Vocabulary, strategy: MiningStrategy) -> Vec<MinedInstance> {
    track
        .cues
        .iter()
        .enumerate()
        .flat_map(|(i, cue)| {
            mine_cue(&cue.tokens, vocab, strategy)
                .into_iter()
                .map(move |class_id| MinedInstance {
                    video_id: track.video_id.clone(),
                    class_id,
                    start: cue.start,
                    end: cue.end,
                    source_cue_index: i,
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Action,
    KeywordNoClass,
    Neutral,
}

pub fn classify_cue_kind(tokens: &[String], vocab: &Vocabulary) -> CueKind {
    if !mine_cue(tokens, vocab, MiningStrategy::Scrambled).is_empty() {
        CueKind::Action
    } else if tokens.iter().any(|t| vocab.is_keyword(t)) {
        CueKind::KeywordNoClass
    } else {
        CueKind::Neutral
    }
}

/// A background candidate: a neutral cue located in its track.
#[derive(Debug, Clone, PartialEq)]
pub struct CueRef {
    pub video_id: String,
    pub cue_index: usize,
    pub start: f64,
    pub end: f64,
}

/// Collects the neutral cues of a track.
pub fn neutral_cues(track: &SubtitleTrack, vocab: &Vocabulary) -> Vec<CueRef> {
    track
        .cues
        .iter()
        .enumerate()
        .filter(|(_, c)| classify_cue_kind(&c.tokens, vocab) == CueKind::Neutral)
        .map(|(i, c)| CueRef {
            video_id: track.video_id.clone(),
            cue_index: i,
            start: c.start,
            end: c.end,
        })
        .collect()
}

/// Number of background samples for `n_action` mined action instances.
pub fn background_count(n_action: usize, ratio: f64) -> usize {
    // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    (ratio * n_action as f64 + 1e-9).floor().max(0.0) as usize
}

/// Draws `floor(ratio * n_action)` neutral cues without replacement (all of
/// them if there are fewer) and labels them background. Output keeps the
/// candidates' original order.
pub fn sample_background(neutral: &[CueRef], n_action: usize, ratio: f64, seed: u64) -> Vec<MinedInstance> {
    let want = background_count(n_action, ratio).min(neutral.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, neutral.len(), want).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| {
            let c = &neutral[i];
            MinedInstance {
                video_id: c.video_id.clone(),
                class_id: BACKGROUND,
                start: c.start,
                end: c.end,
                source_cue_index: c.cue_index,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub frames_detected: u64,
    pub frames_correct: u64,
    pub jaccard_iod: f64,
    pub jaccard_iou: f64,
    pub frame_hitrate: f64,
}

/// `floor(seconds * fps)`, half-open, clipped to `[0, frames)`.
pub fn span_to_frames(start: f64, end: f64, fps: f64, frames: usize) -> (usize, usize) {
    let conv = |s: f64| ((s * fps).floor().max(0.0) as usize).min(frames);
    (conv(start), conv(end))
}

/// Scores mined instances against dense ground truth.
///
/// Per video, each detected class `c` contributes its frame sets `G_c` (gt
/// frames labeled `c`) and `D_c` (union of the class's instance spans).
/// Counts are pooled over detected classes, then averaged over all
/// ground-truth videos; a video without detections scores zero.
pub fn evaluate_mining(
    instances: &[MinedInstance],
    gt: &BTreeMap<String, Segmentation>,
    fps: f64,
) -> Result<MiningReport, MiningError> {
    if !(fps > 0.0) {
        return Err(MiningError::InvalidFps(fps));
    }
    let mut per_video: BTreeMap<&str, BTreeMap<ClassId, Vec<(usize, usize)>>> = BTreeMap::new();
    for inst in instances {
        let seg = gt
            .get(&inst.video_id)
            .ok_or_else(|| MiningError::UnknownVideo(inst.video_id.clone()))?;
        let span = span_to_frames(inst.start, inst.end, fps, seg.frame_count());
        per_video
            .entry(inst.video_id.as_str())
            .or_default()
            .entry(inst.class_id)
            .or_default()
            .push(span);
    }

    let mut detected = 0u64;
    let mut correct = 0u64;
    let (mut iod_sum, mut iou_sum, mut hits) = (0.0, 0.0, 0usize);
    for (video, seg) in gt {
        let Some(classes) = per_video.get(video.as_str()) else {
            continue;
        };
        let labels = seg.frame_labels();
        let mut pooled = JaccardCounts::default();
        for (&class, spans) in classes {
            let mut mask = vec![false; labels.len()];
            for &(s, e) in spans {
                mask[s..e].fill(true);
            }
            for (&l, &d) in labels.iter().zip(&mask) {
                let g = l == class;
                pooled.add_frame(g, d);
            }
        }
        detected += pooled.detected;
        correct += pooled.intersection;
        iod_sum += pooled.iod();
        iou_sum += pooled.iou();
        if pooled.intersection > 0 {
            hits += 1;
        }
    }
    let n = gt.len().max(1) as f64;
    Ok(MiningReport {
        frames_detected: detected,
        frames_correct: correct,
        jaccard_iod: iod_sum / n,
        jaccard_iou: iou_sum / n,
        frame_hitrate: hits as f64 / n,
    })
}

/// Writes the instances TSV: `video_id, class_id, start_s, end_s, cue_index`.
pub fn write_instances(instances: &[MinedInstance]) -> String {
    let mut out = String::new();
    for i in instances {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            i.video_id, i.class_id, i.start, i.end, i.source_cue_index
        ));
    }
    out
}

pub fn read_instances(text: &str) -> Result<Vec<MinedInstance>, MiningError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| MiningError::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err("expected 5 tab-separated fields"));
        }
        let class_id = f[1].parse().map_err(|_| err("bad class id"))?;
        let start: f64 = f[2].parse().map_err(|_| err("bad start"))?;
        let end: f64 = f[3].parse().map_err(|_| err("bad end"))?;
        let source_cue_index = f[4].parse().map_err(|_| err("bad cue index"))?;
        if !(start < end) {
            return Err(err("start must precede end"));
        }
        out.push(MinedInstance {
            video_id: f[0].to_string(),
            class_id,
            start,
            end,
            source_cue_index,
        });
    }
    Ok(out)
}
