//! Search-tree bookkeeping, UCT, and SFS node selection.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::TextualDirection;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeStats {
    /// Trace node id; 0 for a virtual root.
    pub node_id: u32,
    /// Raw validation score, used for the better-child test.
    pub quality: f64,
    /// Backed-up value, used by UCT.
    pub value: f64,
    pub visits: u32,
    pub unused_directions: Vec<TextualDirection>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    #[serde(skip)]
    value_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backprop {
    /// Value is the best quality seen in the subtree.
    Max,
    /// Value is the mean quality over visits.
    Mean,
}

/// Arena-allocated search tree; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<TreeNodeStats>,
}

impl SearchTree {
    pub fn new(root_id: u32, quality: f64) -> Self {
        Self {
            nodes: vec![TreeNodeStats {
                node_id: root_id,
                quality,
                value: quality,
                visits: 1,
                unused_directions: Vec::new(),
                children: Vec::new(),
                parent: None,
                value_sum: quality,
            }],
        }
    }

    /// Root standing in for the forest's super-root: it has no directions
    /// of its own and every real root counts as a better child.
    pub fn virtual_root() -> Self {
        let mut t = Self::new(0, f64::NEG_INFINITY);
        t.nodes[0].value = 0.0;
        t.nodes[0].value_sum = 0.0;
        t.nodes[0].visits = 0;
        t
    }

    pub const ROOT: usize = 0;

    pub fn add_child(&mut self, parent: usize, node_id: u32, quality: f64) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNodeStats {
            node_id,
            quality,
            value: quality,
            visits: 1,
            unused_directions: Vec::new(),
            children: Vec::new(),
            parent: Some(parent),
            value_sum: quality,
        });
        self.nodes[parent].children.push(idx);
        idx
    }

    /// Propagates a new leaf's quality from `from` (the expanded node) up
    /// to the root, counting one visit per ancestor.
    pub fn backpropagate(&mut self, from: usize, quality: f64, rule: Backprop) {
        let mut cur = Some(from);
        while let Some(i) = cur {
            let n = &mut self.nodes[i];
            n.visits += 1;
            n.value_sum += quality;
            n.value = match rule {
                Backprop::Max => n.value.max(quality),
                Backprop::Mean => n.value_sum / n.visits as f64,
            };
            cur = n.parent;
        }
    }

    pub fn depth(&self, mut idx: usize) -> u32 {
        let mut d = 0;
        while let Some(p) = self.nodes[idx].parent {
            d += 1;
            idx = p;
        }
        d
    }

    pub fn has_better_child(&self, idx: usize) -> bool {
        let q = self.nodes[idx].quality;
        self.nodes[idx].children.iter().any(|&c| self.nodes[c].quality > q)
    }

    pub fn index_of(&self, node_id: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == node_id)
    }
}

pub fn uct_score(child_value: f64, child_visits: u32, parent_visits: u32, c: f64) -> f64 {
    child_value + c * ((parent_visits as f64 + 1.0).ln() / (child_visits as f64 + 1.0)).sqrt()
}

pub enum TieBreak<'r> {
    LowestId,
    Random(&'r mut ChaCha8Rng),
}

/// Children of `idx` attaining the maximal UCT score, ordered by node id.
pub fn uct_argmax(tree: &SearchTree, idx: usize, c: f64) -> Vec<usize> {
    let parent = &tree.nodes[idx];
    let scored: Vec<(usize, f64)> = parent
        .children
        .iter()
        .map(|&ch| {
            let n = &tree.nodes[ch];
            (ch, uct_score(n.value, n.visits, parent.visits, c))
        })
        .collect();
    let best = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let mut top: Vec<usize> = scored
        .into_iter()
        .filter(|(_, s)| (best - s).abs() <= TIE_EPS)
        .map(|(ch, _)| ch)
        .collect();
    top.sort_by_key(|&ch| tree.nodes[ch].node_id);
    top
}

pub fn uct_choose(tree: &SearchTree, idx: usize, c: f64, tie: &mut TieBreak<'_>) -> Option<usize> {
    let top = uct_argmax(tree, idx, c);
    match tie {
        _ if top.is_empty() => None,
        TieBreak::LowestId => Some(top[0]),
        TieBreak::Random(rng) => Some(top[rng.gen_range(0..top.len())]),
    }
}

/// Starting at the root, descend by UCT while the current node has a
/// better child and no unused directions; return the first node where
/// that condition fails.
pub fn select_node_sfs(tree: &SearchTree, c: f64, tie: &mut TieBreak<'_>) -> usize {
    let mut cur = SearchTree::ROOT;
    while tree.has_better_child(cur) && tree.nodes[cur].unused_directions.is_empty() {
        cur = uct_choose(tree, cur, c, tie).expect("a node with a better child has children");
    }
    cur
}

/// Declarative tree description for the selection-depth simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpecNode {
    pub quality: f64,
    pub visits: u32,
    pub unused_directions: usize,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    /// Index 0 is the root.
    pub nodes: Vec<TreeSpecNode>,
    pub uct_c: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("theorem premise unmet: {0}")]
    PremiseUnmet(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
}

impl TreeSpec {
    pub fn build(&self) -> Result<SearchTree, SelectionError> {
        let first = self.nodes.first().ok_or_else(|| SelectionError::Malformed("no nodes".into()))?;
        let mut tree = SearchTree::new(0, first.quality);
        // breadth-first so each parent exists before its children
        let mut index = vec![None; self.nodes.len()];
        index[0] = Some(0);
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(spec_idx) = queue.pop_front() {
            let tree_idx = index[spec_idx].unwrap();
            let spec = &self.nodes[spec_idx];
            let node = &mut tree.nodes[tree_idx];
            node.visits = spec.visits;
            node.unused_directions = (0..spec.unused_directions)
                .map(|i| TextualDirection::new(format!("direction {i}")))
                .collect();
            for &ch in &spec.children {
                if ch >= self.nodes.len() || index[ch].is_some() {
                    return Err(SelectionError::Malformed(format!("bad child index {ch}")));
                }
                index[ch] = Some(tree.add_child(tree_idx, ch as u32, self.nodes[ch].quality));
                queue.push_back(ch);
            }
        }
        if index.iter().any(Option::is_none) {
            return Err(SelectionError::Malformed("unreachable nodes".into()));
        }
        Ok(tree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDepthReport {
    pub trials: u64,
    /// Empirical Pr(depth = d), root at depth 0.
    pub distribution: BTreeMap<u32, f64>,
    /// Spec indices of depth-1 children with no unused directions and a better child.
    pub qualifying_children: Vec<usize>,
    /// Exact Σ over qualifying children of the root-level UCT choice probability.
    pub epsilon: f64,
}

impl SelectionDepthReport {
    pub fn prob_at_least(&self, depth: u32) -> f64 {
        self.distribution.range(depth..).fold(0.0, |acc, (_, p)| acc + p)
    }
}

/// Repeats SFS selection with random UCT tie-breaking and reports the
/// empirical depth distribution alongside the exact bound ε on reaching
/// depth 2 or deeper.
pub fn simulate_selection_depth(spec: &TreeSpec, trials: u64, seed: u64) -> Result<SelectionDepthReport, SelectionError> {
    let tree = spec.build()?;
    let root = &tree.nodes[SearchTree::ROOT];
    if !root.unused_directions.is_empty() {
        return Err(SelectionError::PremiseUnmet("root has unused directions".into()));
    }
    if !tree.has_better_child(SearchTree::ROOT) {
        return Err(SelectionError::PremiseUnmet("root has no better child".into()));
    }
    let qualifying: Vec<usize> = root
        .children
        .iter()
        .copied()
        .filter(|&c| tree.nodes[c].unused_directions.is_empty() && tree.has_better_child(c))
        .collect();
    let top = uct_argmax(&tree, SearchTree::ROOT, spec.uct_c);
    let epsilon = top.iter().filter(|c| qualifying.contains(c)).count() as f64 / top.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for _ in 0..trials {
        let picked = select_node_sfs(&tree, spec.uct_c, &mut TieBreak::Random(&mut rng));
        *counts.entry(tree.depth(picked)).or_default() += 1;
    }
    Ok(SelectionDepthReport {
        trials,
        distribution: counts
            .into_iter()
            .map(|(d, n)| (d, n as f64 / trials.max(1) as f64))
            .collect(),
        qualifying_children: qualifying.iter().map(|&i| tree.nodes[i].node_id as usize).collect(),
        epsilon,
    })
}
