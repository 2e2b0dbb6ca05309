//! Semantic class tree and consensus probability refinement.
//!
//! The hierarchy is a forest: each node has zero or one parent. Meta classes
//! are structural nodes without a classifier output; during consensus they
//! score 1.0 so they shape the tree without changing products or means.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::ProbMatrix;
use crate::mining::Vocabulary;
use crate::ClassId;

pub const DEFAULT_MAX_DEPTH: usize = 18;

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("cycle through class {0}")]
    CycleDetected(ClassId),
    #[error("class {0} is listed with more than one parent")]
    MultipleParents(ClassId),
    #[error("class {node} sits at depth {depth}, above the limit of {max}")]
    DepthExceeded { node: ClassId, depth: usize, max: usize },
    #[error("class {0} is neither in the vocabulary nor declared meta")]
    UnknownClass(ClassId),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("probability row has {got} entries but class {class} needs a column")]
    DimensionMismatch { class: ClassId, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyNode {
    pub class_id: ClassId,
    pub parent: Option<ClassId>,
    pub children: Vec<ClassId>,
    pub is_meta: bool,
    /// Roots have depth 1.
    pub depth: usize,
}

/// Validated forest plus dense index arrays used by the consensus passes.
#[derive(Debug, Clone)]
pub struct ClassHierarchy {
    nodes: BTreeMap<ClassId, HierarchyNode>,
    roots: Vec<ClassId>,
    // dense view, indexed by position in `ids`; `order` lists parents before children
    ids: Vec<ClassId>,
    parent_idx: Vec<Option<usize>>,
    children_idx: Vec<Vec<usize>>,
    meta: Vec<bool>,
    order: Vec<usize>,
}

/// One row of the hierarchy file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub child: ClassId,
    pub parent: Option<ClassId>,
    pub is_meta: bool,
}

impl Edge {
    pub fn new(child: ClassId, parent: Option<ClassId>, is_meta: bool) -> Self {
        Self { child, parent, is_meta }
    }
}

impl ClassHierarchy {
    /// Builds and validates a forest. Every id mentioned as a parent must also
    /// appear as a child row.
    pub fn from_edges(edges: &[Edge], max_depth: usize) -> Result<Self, HierarchyError> {
        let mut rows: BTreeMap<ClassId, Edge> = BTreeMap::new();
        for e in edges {
            if rows.insert(e.child, *e).is_some() {
                return Err(HierarchyError::MultipleParents(e.child));
            }
        }
        for e in edges {
            if let Some(p) = e.parent {
                if !rows.contains_key(&p) {
                    return Err(HierarchyError::UnknownClass(p));
                }
                if p == e.child {
                    return Err(HierarchyError::CycleDetected(p));
                }
            }
        }

        // depth by walking up; revisiting a node on the current walk is a cycle
        let mut depth: BTreeMap<ClassId, usize> = BTreeMap::new();
        for &id in rows.keys() {
            let mut path = Vec::new();
            let mut on_path = BTreeSet::new();
            let mut cur = id;
            let base = loop {
                if let Some(&d) = depth.get(&cur) {
                    break d;
                }
                if !on_path.insert(cur) {
                    return Err(HierarchyError::CycleDetected(cur));
                }
                path.push(cur);
                match rows[&cur].parent {
                    Some(p) => cur = p,
                    None => break 0,
                }
            };
            for (k, &node) in path.iter().rev().enumerate() {
                depth.insert(node, base + k + 1);
            }
        }
        if let Some((&node, &d)) = depth.iter().find(|(_, &d)| d > max_depth) {
            return Err(HierarchyError::DepthExceeded {
                node,
                depth: d,
                max: max_depth,
            });
        }

        let mut nodes: BTreeMap<ClassId, HierarchyNode> = rows
            .values()
            .map(|e| {
                (
                    e.child,
                    HierarchyNode {
                        class_id: e.child,
                        parent: e.parent,
                        children: Vec::new(),
                        is_meta: e.is_meta,
                        depth: depth[&e.child],
                    },
                )
            })
            .collect();
        for e in rows.values() {
            if let Some(p) = e.parent {
                nodes.get_mut(&p).expect("checked above").children.push(e.child);
            }
        }
        let roots: Vec<ClassId> = nodes.values().filter(|n| n.parent.is_none()).map(|n| n.class_id).collect();

        let ids: Vec<ClassId> = nodes.keys().copied().collect();
        let pos = |id: ClassId| ids.binary_search(&id).expect("known id");
        let parent_idx = ids.iter().map(|id| nodes[id].parent.map(pos)).collect();
        let children_idx: Vec<Vec<usize>> = ids.iter().map(|id| nodes[id].children.iter().map(|&c| pos(c)).collect()).collect();
        let meta = ids.iter().map(|id| nodes[id].is_meta).collect();
        let mut order: Vec<usize> = roots.iter().map(|&r| pos(r)).collect();
        let mut head = 0;
        while head < order.len() {
            let n = order[head];
            order.extend_from_slice(&children_idx[n]);
            head += 1;
        }

        Ok(Self {
            nodes,
            roots,
            ids,
            parent_idx,
            children_idx,
            meta,
            order,
        })
    }

    pub fn nodes(&self) -> &BTreeMap<ClassId, HierarchyNode> {
        &self.nodes
    }

    pub fn node(&self, id: ClassId) -> Option<&HierarchyNode> {
        self.nodes.get(&id)
    }

    pub fn roots(&self) -> &[ClassId] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.values().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Ancestors from parent up to the root.
    pub fn ancestors(&self, id: ClassId) -> Vec<ClassId> {
        let mut out = Vec::new();
        let mut cur = self.nodes.get(&id).and_then(|n| n.parent);
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[&p].parent;
        }
        out
    }

    pub fn summary(&self) -> HierarchySummary {
        HierarchySummary {
            nodes: self.len(),
            roots: self.roots.len(),
            max_depth: self.max_depth(),
            meta: self.nodes.values().filter(|n| n.is_meta).count(),
        }
    }

    /// TSV rows `child, parent_or_dash, is_meta`, ordered by class id.
    pub fn to_tsv(&self) -> String {
        self.nodes
            .values()
            .map(|n| {
                let parent = n.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
                format!("{}\t{}\t{}\n", n.class_id, parent, u8::from(n.is_meta))
            })
            .collect()
    }

    /// Per-node value used by consensus: 1.0 for meta nodes, else the row entry.
    fn node_values(&self, p: &[f64]) -> Result<Vec<f64>, HierarchyError> {
        self.ids
            .iter()
            .zip(&self.meta)
            .map(|(&id, &meta)| {
                if meta {
                    Ok(1.0)
                } else {
                    p.get(id as usize).copied().ok_or(HierarchyError::DimensionMismatch {
                        class: id,
                        got: p.len(),
                    })
                }
            })
            .collect()
    }

    /// Writes per-node scores back into a copy of the row. Columns outside the
    /// hierarchy and meta columns pass through unchanged.
    fn scatter(&self, p: &[f64], scores: &[f64]) -> Vec<f64> {
        let mut out = p.to_vec();
        for (i, &id) in self.ids.iter().enumerate() {
            if !self.meta[i] {
                out[id as usize] = scores[i];
            }
        }
        out
    }

    fn topdown_scores(&self, val: &[f64], scope: ConsensusScope) -> Vec<f64> {
        let mut score = vec![0.0; val.len()];
        for &n in &self.order {
            score[n] = match (self.parent_idx[n], scope) {
                (None, _) => val[n],
                // parents come first in `order`, so score[p] is the product along the path
                (Some(p), ConsensusScope::Full) => val[n] * score[p],
                (Some(p), ConsensusScope::Pairwise) => val[n] * val[p],
            };
        }
        score
    }

    fn bottomup_scores(&self, val: &[f64], scope: ConsensusScope) -> Vec<f64> {
        let mut score = vec![0.0; val.len()];
        for &n in self.order.iter().rev() {
            let children = &self.children_idx[n];
            score[n] = if children.is_empty() {
                val[n]
            } else {
                let src = match scope {
                    ConsensusScope::Full => &score,
                    ConsensusScope::Pairwise => val,
                };
                let sum: f64 = children.iter().map(|&c| src[c]).sum();
                val[n] * (sum / children.len() as f64)
            };
        }
        score
    }
}

/// Validation summary printed by `hier-validate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySummary {
    pub nodes: usize,
    pub roots: usize,
    pub max_depth: usize,
    pub meta: usize,
}

pub fn parse_edges(file_text: &str) -> Result<Vec<Edge>, HierarchyError> {
    let mut edges = Vec::new();
    for (i, line) in file_text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| HierarchyError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad("expected child, parent, is_meta"));
        }
        let child = f[0].parse().map_err(|_| bad("bad child id"))?;
        let parent = match f[1] {
            "-" => None,
            p => Some(p.parse().map_err(|_| bad("bad parent id"))?),
        };
        let is_meta = match f[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("is_meta must be 0 or 1")),
        };
        edges.push(Edge::new(child, parent, is_meta));
    }
    Ok(edges)
}

pub fn load_hierarchy(file_text: &str, vocab: &Vocabulary) -> Result<ClassHierarchy, HierarchyError> {
    load_hierarchy_with_limit(file_text, vocab, DEFAULT_MAX_DEPTH)
}

/// Parses the hierarchy TSV against a vocabulary. Vocabulary classes without
/// a row become isolated roots; non-meta rows must name vocabulary classes.
pub fn load_hierarchy_with_limit(
    file_text: &str,
    vocab: &Vocabulary,
    max_depth: usize,
) -> Result<ClassHierarchy, HierarchyError> {
    let mut edges = parse_edges(file_text)?;
    let mut seen = BTreeSet::new();
    for e in &edges {
        if !e.is_meta && !vocab.contains(e.child) {
            return Err(HierarchyError::UnknownClass(e.child));
        }
        if !seen.insert(e.child) {
            return Err(HierarchyError::MultipleParents(e.child));
        }
    }
    for e in &edges {
        if let Some(p) = e.parent {
            if !seen.contains(&p) && !vocab.contains(p) {
                return Err(HierarchyError::UnknownClass(p));
            }
        }
    }
    let implicit: Vec<Edge> = vocab
        .classes()
        .iter()
        .filter(|c| !seen.contains(&c.id))
        .map(|c| Edge::new(c.id, None, false))
        .collect();
    edges.extend(implicit);
    ClassHierarchy::from_edges(&edges, max_depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusScope {
    Full,
    Pairwise,
}

/// Serialized as `off`, `topdown-full`, `combined-pairwise`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConsensusMode {
    #[default]
    Off,
    TopDown(ConsensusScope),
    BottomUp(ConsensusScope),
    Combined(ConsensusScope),
}

impl FromStr for ConsensusMode {
    type Err = String;

    /// `off`, or `<topdown|bottomup|combined>[-<full|pairwise>]` (scope defaults to full).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        if s == "off" {
            return Ok(Self::Off);
        }
        let (dir, scope) = s.split_once('-').unwrap_or((&s, "full"));
        let scope = match scope {
            "full" => ConsensusScope::Full,
            "pairwise" => ConsensusScope::Pairwise,
            other => return Err(format!("unknown consensus scope {other:?}")),
        };
        match dir {
            "topdown" => Ok(Self::TopDown(scope)),
            "bottomup" => Ok(Self::BottomUp(scope)),
            "combined" => Ok(Self::Combined(scope)),
            other => Err(format!("unknown consensus direction {other:?}")),
        }
    }
}

impl TryFrom<String> for ConsensusMode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ConsensusMode> for String {
    fn from(m: ConsensusMode) -> String {
        m.to_string()
    }
}

impl std::fmt::Display for ConsensusMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (dir, scope) = match self {
            Self::Off => return f.write_str("off"),
            Self::TopDown(s) => ("topdown", s),
            Self::BottomUp(s) => ("bottomup", s),
            Self::Combined(s) => ("combined", s),
        };
        let scope = match scope {
            ConsensusScope::Full => "full",
            ConsensusScope::Pairwise => "pairwise",
        };
        write!(f, "{dir}-{scope}")
    }
}

/// Top-down consensus: a node's probability times that of all its ancestors
/// (full) or of its parent only (pairwise).
pub fn consensus_topdown(p: &[f64], h: &ClassHierarchy, scope: ConsensusScope) -> Result<Vec<f64>, HierarchyError> {
    let val = h.node_values(p)?;
    Ok(h.scatter(p, &h.topdown_scores(&val, scope)))
}

/// Bottom-up consensus: a node's probability times the mean over its
/// children, recursing to the leaves (full) or using raw child values
/// (pairwise). Leaves keep their own probability.
pub fn consensus_bottomup(p: &[f64], h: &ClassHierarchy, scope: ConsensusScope) -> Result<Vec<f64>, HierarchyError> {
    let val = h.node_values(p)?;
    Ok(h.scatter(p, &h.bottomup_scores(&val, scope)))
}

/// Elementwise mean of top-down and bottom-up consensus.
pub fn consensus_combined(p: &[f64], h: &ClassHierarchy, scope: ConsensusScope) -> Result<Vec<f64>, HierarchyError> {
    let val = h.node_values(p)?;
    let td = h.topdown_scores(&val, scope);
    let bu = h.bottomup_scores(&val, scope);
    let mean: Vec<f64> = td.iter().zip(&bu).map(|(a, b)| (a + b) / 2.0).collect();
    Ok(h.scatter(p, &mean))
}

pub fn consensus_row(p: &[f64], h: &ClassHierarchy, mode: ConsensusMode) -> Result<Vec<f64>, HierarchyError> {
    match mode {
        ConsensusMode::Off => Ok(p.to_vec()),
        ConsensusMode::TopDown(s) => consensus_topdown(p, h, s),
        ConsensusMode::BottomUp(s) => consensus_bottomup(p, h, s),
        ConsensusMode::Combined(s) => consensus_combined(p, h, s),
    }
}

/// Applies consensus to every frame of a posterior matrix.
pub fn apply_consensus(m: &ProbMatrix, h: &ClassHierarchy, mode: ConsensusMode) -> Result<ProbMatrix, HierarchyError> {
    let mut out = m.clone();
    if mode == ConsensusMode::Off {
        return Ok(out);
    }
    for row in out.rows_mut() {
        let refined = consensus_row(row, h, mode)?;
        row.copy_from_slice(&refined);
    }
    Ok(out)
}
