//! Brute-force reference implementations and random case generators shared
//! by the property and acceptance suites.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weakalign::alignment::{ProbMatrix, Segmentation};
use weakalign::hierarchy::{ClassHierarchy, Edge, DEFAULT_MAX_DEPTH};
use weakalign::mining::{ActionClass, MiningStrategy, Vocabulary};
use weakalign::{ClassId, BACKGROUND};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------------ viterbi

/// Enumerates every boundary vector on the grid in lexicographic order and
/// keeps the first one with the highest score.
pub fn brute_viterbi(lik: &ProbMatrix, entries: &[ClassId], stride: usize, max_len: usize) -> Option<(Vec<usize>, f64)> {
    let t = lik.frames();
    let mut grid: Vec<usize> = (0..t).step_by(stride).collect();
    grid.push(t);
    let interior = &grid[1..grid.len() - 1];
    let n = entries.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut combo = Vec::new();
    enumerate(interior, n - 1, 0, &mut combo, &mut |cuts| {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(t);
        if bounds.windows(2).any(|w| w[1] - w[0] > max_len) {
            return;
        }
        let mut score = 0.0;
        for (i, w) in bounds.windows(2).enumerate() {
            for f in w[0]..w[1] {
                score += lik.get(f, entries[i] as usize);
            }
        }
        // near-equal sums count as ties: the earlier vector is kept
        if best.as_ref().map_or(true, |(_, b)| score > b + 1e-9) {
            best = Some((bounds, score));
        }
    });
    best
}

fn enumerate(pool: &[usize], k: usize, from: usize, combo: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if combo.len() == k {
        visit(combo);
        return;
    }
    for i in from..pool.len() {
        combo.push(pool[i]);
        enumerate(pool, k, i + 1, combo, visit);
        combo.pop();
    }
}

pub struct ViterbiCase {
    pub lik: ProbMatrix,
    pub entries: Vec<ClassId>,
    pub stride: usize,
    pub max_len: usize,
}

/// Random case with `T <= 90`, `C <= 4`, `N <= 3`. Every other case uses
/// small integer log-likelihoods so that exact ties are common.
pub fn viterbi_case(seed: u64) -> ViterbiCase {
    let mut r = rng(seed);
    let t = r.gen_range(1..=90);
    let c = r.gen_range(1..=4);
    let n = r.gen_range(1..=3);
    let stride = *[1, 2, 3, 5, 10, 30].choose(&mut r).unwrap();
    let max_len = if r.gen_bool(0.3) { r.gen_range(1..=90) } else { 1000 };
    let integral = seed % 2 == 0;
    let values = (0..t * c)
        .map(|_| {
            if integral {
                -(r.gen_range(0..4) as f64)
            } else {
                r.gen_range(0.0..1.0f64).max(1e-10).ln()
            }
        })
        .collect();
    let entries = (0..n).map(|_| r.gen_range(0..c) as ClassId).collect();
    ViterbiCase {
        lik: ProbMatrix::new("v", t, c, values).unwrap(),
        entries,
        stride,
        max_len,
    }
}

// ------------------------------------------------------------------ mining

/// Position-pair check of every class against every token pair.
pub fn brute_mine(tokens: &[String], classes: &[ActionClass], strategy: MiningStrategy) -> BTreeSet<ClassId> {
    let is_verb = |c: &ActionClass, tok: &str| c.verb == tok || c.verb_synonyms.iter().any(|s| s == tok);
    let is_obj = |c: &ActionClass, tok: &str| {
        c.object.as_deref() == Some(tok) || c.object_synonyms.iter().any(|s| s == tok)
    };
    let pair_hit = |c: &ActionClass, rule: &dyn Fn(usize, usize) -> bool| {
        (0..tokens.len()).any(|i| {
            (0..tokens.len()).any(|j| is_verb(c, &tokens[i]) && is_obj(c, &tokens[j]) && rule(i, j))
        })
    };
    let mut fired = BTreeSet::new();
    let mut co_occurring_verbs = BTreeSet::new();
    for c in classes.iter().filter(|c| c.object.is_some()) {
        if pair_hit(c, &|i, j| i != j) {
            co_occurring_verbs.insert(c.verb.clone());
        }
        let hit = match strategy {
            MiningStrategy::Neighbor => pair_hit(c, &|i, j| j == i + 1),
            MiningStrategy::Ordered => pair_hit(c, &|i, j| j > i),
            MiningStrategy::Scrambled => pair_hit(c, &|i, j| i != j),
        };
        if hit {
            fired.insert(c.id);
        }
    }
    for c in classes.iter().filter(|c| c.object.is_none()) {
        if tokens.iter().any(|t| is_verb(c, t)) && !co_occurring_verbs.contains(&c.verb) {
            fired.insert(c.id);
        }
    }
    fired
}

const FUZZ_VERBS: &[&str] = &["cut", "pour", "stir", "fold", "crack"];
const FUZZ_OBJECTS: &[&str] = &["egg", "onion", "milk", "paper", "dough"];
const FUZZ_FILLER: &[&str] = &["the", "now", "we", "it", "then", "a", "into"];

/// Vocabulary over a tiny lemma pool so that random cues hit often. Some
/// lemmas double as verb and object, and synonyms overlap other classes.
pub fn fuzz_vocab(seed: u64) -> Vocabulary {
    let mut r = rng(seed);
    let mut classes = Vec::new();
    let mut id = 1;
    for verb in FUZZ_VERBS {
        if r.gen_bool(0.6) {
            classes.push(ActionClass::new(id, verb, None));
            id += 1;
        }
        for _ in 0..r.gen_range(0..3) {
            let pool = if r.gen_bool(0.1) { FUZZ_VERBS } else { FUZZ_OBJECTS };
            let mut c = ActionClass::new(id, verb, Some(pool.choose(&mut r).unwrap()));
            if r.gen_bool(0.2) {
                c.verb_synonyms.push(FUZZ_VERBS.choose(&mut r).unwrap().to_string());
            }
            if r.gen_bool(0.2) {
                c.object_synonyms.push(FUZZ_OBJECTS.choose(&mut r).unwrap().to_string());
            }
            classes.push(c);
            id += 1;
        }
    }
    Vocabulary::new(classes).unwrap()
}

pub fn fuzz_tokens(r: &mut ChaCha8Rng) -> Vec<String> {
    let n = r.gen_range(0..10);
    (0..n)
        .map(|_| {
            let pool = match r.gen_range(0..3) {
                0 => FUZZ_VERBS,
                1 => FUZZ_OBJECTS,
                _ => FUZZ_FILLER,
            };
            pool.choose(r).unwrap().to_string()
        })
        .collect()
}

// ------------------------------------------------------------------ metrics

/// Frame-by-frame recount of the positionwise and frame-set scores.
pub fn brute_score(gt: &Segmentation, pred: &Segmentation, include_bg: bool, frame_set: bool) -> (f64, f64) {
    let include_bg = include_bg || gt.segments().iter().all(|s| s.class_id == BACKGROUND);
    let keep = |c: ClassId| include_bg || c != BACKGROUND;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let g = gt.frame_labels();
    let d = pred.frame_labels();
    if frame_set {
        let classes: BTreeSet<ClassId> = d.iter().copied().filter(|&c| keep(c)).collect();
        let (mut inter, mut det, mut uni) = (0, 0, 0);
        for c in classes {
            for f in 0..g.len() {
                let (ig, id) = (g[f] == c, d[f] == c);
                inter += usize::from(ig && id);
                det += usize::from(id);
                uni += usize::from(ig || id);
            }
        }
        return (ratio(inter, uni), ratio(inter, det));
    }
    let gs: Vec<_> = gt.segments().iter().filter(|s| keep(s.class_id)).collect();
    let ds: Vec<_> = pred.segments().iter().filter(|s| keep(s.class_id)).collect();
    assert_eq!(gs.len(), ds.len());
    let (mut iou, mut iod) = (0.0, 0.0);
    for (a, b) in gs.iter().zip(&ds) {
        let (mut inter, mut det, mut uni) = (0, 0, 0);
        for f in 0..g.len() {
            let ig = (a.start..a.end).contains(&f);
            let id = (b.start..b.end).contains(&f);
            inter += usize::from(ig && id);
            det += usize::from(id);
            uni += usize::from(ig || id);
        }
        iou += ratio(inter, uni);
        iod += ratio(inter, det);
    }
    let n = gs.len().max(1) as f64;
    (iou / n, iod / n)
}

/// Random label sequence with interleaved background and two segmentations
/// of it over the same number of frames.
pub fn metrics_pair(seed: u64) -> (Segmentation, Segmentation) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=6);
    let labels: Vec<ClassId> = (0..n).map(|_| r.gen_range(0..5)).collect();
    let t = r.gen_range(n..=120);
    let cuts = |r: &mut ChaCha8Rng| {
        let mut inner = rand::seq::index::sample(r, t - 1, n - 1).into_vec();
        inner.iter_mut().for_each(|c| *c += 1);
        inner.sort_unstable();
        let mut b = vec![0];
        b.extend(inner);
        b.push(t);
        b
    };
    let gb = cuts(&mut r);
    let db = cuts(&mut r);
    (
        Segmentation::from_boundaries("v", &gb, &labels).unwrap(),
        Segmentation::from_boundaries("v", &db, &labels).unwrap(),
    )
}

// ---------------------------------------------------------------- hierarchy

/// A random forest with its parent map and meta flags, as generated.
pub struct TreeCase {
    pub hierarchy: ClassHierarchy,
    pub parent: BTreeMap<ClassId, Option<ClassId>>,
    pub meta: BTreeSet<ClassId>,
    pub row: Vec<f64>,
}

/// Forest over ids `1..=n` (`n <= 50`, depth <= 18) plus a probability row
/// indexed by class id.
pub fn tree_case(seed: u64) -> TreeCase {
    let mut r = rng(seed);
    let n = r.gen_range(1..=50u32);
    let mut parent = BTreeMap::new();
    let mut depth: BTreeMap<ClassId, usize> = BTreeMap::new();
    let mut meta = BTreeSet::new();
    let root_p = r.gen_range(0.05..0.5);
    for id in 1..=n {
        let candidates: Vec<ClassId> = depth.iter().filter(|(_, &d)| d < DEFAULT_MAX_DEPTH).map(|(&k, _)| k).collect();
        let p = if candidates.is_empty() || r.gen_bool(root_p) {
            None
        } else if r.gen_bool(0.7) {
            // favour recent nodes to grow deep chains
            let lo = candidates.len().saturating_sub(3);
            Some(candidates[r.gen_range(lo..candidates.len())])
        } else {
            Some(*candidates.choose(&mut r).unwrap())
        };
        depth.insert(id, p.map_or(1, |p| depth[&p] + 1));
        parent.insert(id, p);
        if r.gen_bool(0.15) {
            meta.insert(id);
        }
    }
    let edges: Vec<Edge> = parent.iter().map(|(&c, &p)| Edge::new(c, p, meta.contains(&c))).collect();
    let hierarchy = ClassHierarchy::from_edges(&edges, DEFAULT_MAX_DEPTH).unwrap();
    let row = (0..=n).map(|_| r.gen_range(0.0..=1.0)).collect();
    TreeCase {
        hierarchy,
        parent,
        meta,
        row,
    }
}

impl TreeCase {
    fn value(&self, id: ClassId) -> f64 {
        if self.meta.contains(&id) {
            1.0
        } else {
            self.row[id as usize]
        }
    }

    fn children(&self, id: ClassId) -> Vec<ClassId> {
        self.parent.iter().filter(|(_, &p)| p == Some(id)).map(|(&c, _)| c).collect()
    }

    pub fn topdown(&self, id: ClassId, full: bool) -> f64 {
        let mut score = self.value(id);
        let mut cur = self.parent[&id];
        while let Some(p) = cur {
            score *= self.value(p);
            cur = if full { self.parent[&p] } else { None };
        }
        score
    }

    pub fn bottomup(&self, id: ClassId, full: bool) -> f64 {
        let kids = self.children(id);
        if kids.is_empty() {
            return self.value(id);
        }
        let sum: f64 = kids
            .iter()
            .map(|&k| if full { self.bottomup(k, true) } else { self.value(k) })
            .sum();
        self.value(id) * sum / kids.len() as f64
    }

    /// Expected output row of a consensus variant: meta columns and column 0
    /// pass through.
    pub fn expected(&self, f: impl Fn(&Self, ClassId) -> f64) -> Vec<f64> {
        (0..self.row.len() as ClassId)
            .map(|id| {
                if id == 0 || self.meta.contains(&id) {
                    self.row[id as usize]
                } else {
                    f(self, id)
                }
            })
            .collect()
    }
}
