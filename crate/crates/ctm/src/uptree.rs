//! The up-tree: a pipelined binary competition tree.
//!
//! N leaves feed a balanced binary tree of height ceil(log2 N). Every
//! tick each node recomputes its chunk from its children's previous
//! chunks, so N fresh leaf chunks enter at the bottom while h earlier
//! wavefronts keep climbing; the chunk leaving the root at tick t is
//! the winner of the competition submitted at tick t - h.
//!
//! Trees whose leaf count is not a power of two are padded with
//! one-child chain nodes so that every root-to-leaf path has exactly h
//! edges and every wavefront stays synchronized.
//!
//! Local competitions are decided either deterministically (larger
//! score wins, exact ties go to the smaller address) or by a coin-flip
//! neuron that fires for the left child with probability a / (a + b).
//! Each node owns a pre-assigned counter-based random substream, so
//! outcomes are independent of evaluation order, threads, and host.

use std::cmp::Ordering;
use std::error::Error;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chunk::{Address, Chunk, Tick};
use crate::competition::{CompetitionError, CompetitionFunction};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// How local competitions are decided.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitionMode {
    Deterministic,
    Probabilistic,
}

/// Tree construction policy. Balanced is the only shape: minimal
/// height with uniform path lengths.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum ShapePolicy {
    #[default]
    Balanced,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Left,
    Right,
}

/// Outcome of a coin-flip neuron.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CoinFlip {
    First,
    Second,
}

#[derive(Clone, Debug, PartialEq)]
pub enum UpTreeError {
    /// A machine needs at least one processor.
    EmptyMachine,
    WrongLeafCount { expected: usize, found: usize },
    /// Leaf chunks arrive indexed by address; slot i must hold p_i.
    LeafAddressMismatch { position: usize, address: Address },
    LeafTickMismatch { expected: Tick, found: Tick },
    /// Siblings from different wavefronts met at a node.
    PipelineDesync { left: Tick, right: Tick },
    /// A one-child node has no right sibling to win.
    AbsentSiblingWinner,
    NegativeFiringRate { a: String, b: String },
    InvalidAssignment { reason: String },
    Competition(CompetitionError),
}

impl fmt::Display for UpTreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpTreeError::EmptyMachine => write!(f, "cannot build an up-tree over zero leaves"),
            UpTreeError::WrongLeafCount { expected, found } => {
                write!(f, "expected {expected} leaf chunks, got {found}")
            }
            UpTreeError::LeafAddressMismatch { position, address } => write!(
                f,
                "leaf slot {position} holds a chunk from {address}; slots are address-ordered"
            ),
            UpTreeError::LeafTickMismatch { expected, found } => {
                write!(f, "leaf chunk stamped t={found}, step is at t={expected}")
            }
            UpTreeError::PipelineDesync { left, right } => write!(
                f,
                "pipeline desync: siblings carry wavefronts t={left} and t={right}"
            ),
            UpTreeError::AbsentSiblingWinner => {
                write!(f, "the absent sibling of a one-child node cannot win")
            }
            UpTreeError::NegativeFiringRate { a, b } => {
                write!(f, "coin-flip firing rates must be nonnegative, got ({a}, {b})")
            }
            UpTreeError::InvalidAssignment { reason } => {
                write!(f, "invalid leaf assignment: {reason}")
            }
            UpTreeError::Competition(e) => write!(f, "{e}"),
        }
    }
}

// Wrapped errors pass straight through Display, so no `source` chain.
impl Error for UpTreeError {}

impl From<CompetitionError> for UpTreeError {
    fn from(e: CompetitionError) -> Self {
        UpTreeError::Competition(e)
    }
}

/// Minimal height that fits `n` leaves: ceil(log2 n).
pub fn height_for(n: usize) -> usize {
    debug_assert!(n > 0);
    n.next_power_of_two().trailing_zeros() as usize
}

/// Internal node: indices of its children one level down.
#[derive(Clone, Copy, Debug)]
struct NodeShape {
    left: usize,
    right: Option<usize>,
}

/// Static tree geometry. `levels[s - 1]` lists the nodes of level s in
/// left-to-right order; level 0 is the leaves and has no NodeShape.
#[derive(Clone, Debug)]
struct TreeShape {
    leaf_count: usize,
    height: usize,
    levels: Vec<Vec<NodeShape>>,
}

impl TreeShape {
    fn build(n: usize) -> Result<Self, UpTreeError> {
        if n == 0 {
            return Err(UpTreeError::EmptyMachine);
        }
        let height = height_for(n);
        let mut levels: Vec<Vec<NodeShape>> = vec![Vec::new(); height];
        // Walk top-down, splitting each node's contiguous leaf range;
        // ceil-halving keeps both halves within the child capacity.
        let mut frontier: Vec<(usize, usize)> = vec![(0, n)];
        for s in (1..=height).rev() {
            let mut next: Vec<(usize, usize)> = Vec::new();
            for &(lo, hi) in &frontier {
                let size = hi - lo;
                let node = if size == 1 {
                    let left = if s == 1 { lo } else { next.len() };
                    next.push((lo, hi));
                    NodeShape { left, right: None }
                } else {
                    let mid = lo + size.div_ceil(2);
                    let left = if s == 1 { lo } else { next.len() };
                    next.push((lo, mid));
                    let right = if s == 1 { mid } else { next.len() };
                    next.push((mid, hi));
                    NodeShape {
                        left,
                        right: Some(right),
                    }
                };
                levels[s - 1].push(node);
            }
            frontier = next;
        }
        debug_assert_eq!(frontier.len(), n);
        Ok(TreeShape {
            leaf_count: n,
            height,
            levels,
        })
    }

    fn nodes_at(&self, level: usize) -> &[NodeShape] {
        &self.levels[level - 1]
    }
}

/// Decides a flip given the uniform draw; `coin_flip_neuron` is the
/// stream-consuming face of the same rule.
fn flip_with<S: Scalar>(a: &S, b: &S, u: f64) -> Result<CoinFlip, UpTreeError> {
    if a < &S::zero() || b < &S::zero() {
        return Err(UpTreeError::NegativeFiringRate {
            a: a.to_string(),
            b: b.to_string(),
        });
    }
    let total = a.clone() + b.clone();
    let p = if total.is_zero() {
        0.5
    } else {
        (a.clone() / total).to_f64().unwrap_or(0.5)
    };
    Ok(if u < p { CoinFlip::First } else { CoinFlip::Second })
}

/// Fires `First` with probability a / (a + b), or 1/2 when both rates
/// are zero. Consumes exactly one draw from `rng`.
pub fn coin_flip_neuron<S: Scalar>(
    a: &S,
    b: &S,
    rng: &mut RngStream,
) -> Result<CoinFlip, UpTreeError> {
    flip_with(a, b, rng.next_f64())
}

/// Deterministic local competition: strictly larger score wins, exact
/// score ties go to the smaller address. No epsilon anywhere.
pub fn local_winner_deterministic<S: Scalar>(
    f: &CompetitionFunction<S>,
    left: &Chunk<S>,
    right: &Chunk<S>,
) -> Result<Side, UpTreeError> {
    if left.t() != right.t() {
        return Err(UpTreeError::PipelineDesync {
            left: left.t(),
            right: right.t(),
        });
    }
    let a = f.eval(left)?;
    let b = f.eval(right)?;
    Ok(match a.partial_cmp(&b) {
        Some(Ordering::Greater) => Side::Left,
        Some(Ordering::Less) => Side::Right,
        _ => {
            if left.address() <= right.address() {
                Side::Left
            } else {
                Side::Right
            }
        }
    })
}

/// Merges siblings: the winner keeps its address, t, gist, and weight;
/// intensity and mood become the sums over both children. A missing
/// sibling counts as NIL, leaving the sums untouched.
pub fn merge_chunks<S: Scalar>(
    winner: Side,
    left: &Chunk<S>,
    right: Option<&Chunk<S>>,
) -> Result<Chunk<S>, UpTreeError> {
    match right {
        None => {
            if winner == Side::Right {
                return Err(UpTreeError::AbsentSiblingWinner);
            }
            Ok(left.clone())
        }
        Some(r) => {
            if left.t() != r.t() {
                return Err(UpTreeError::PipelineDesync {
                    left: left.t(),
                    right: r.t(),
                });
            }
            let w = match winner {
                Side::Left => left,
                Side::Right => r,
            };
            Ok(Chunk::from_parts(
                w.address(),
                w.t(),
                w.gist().clone(),
                w.weight().clone(),
                left.intensity().clone() + r.intensity().clone(),
                left.mood().clone() + r.mood().clone(),
            ))
        }
    }
}

fn advance_node<S: Scalar>(
    left: &Chunk<S>,
    right: Option<&Chunk<S>>,
    mode: CompetitionMode,
    f: &CompetitionFunction<S>,
    draw: f64,
) -> Result<Chunk<S>, UpTreeError> {
    let Some(r) = right else {
        return merge_chunks(Side::Left, left, None);
    };
    if left.t() != r.t() {
        return Err(UpTreeError::PipelineDesync {
            left: left.t(),
            right: r.t(),
        });
    }
    let side = match mode {
        CompetitionMode::Deterministic => local_winner_deterministic(f, left, r)?,
        CompetitionMode::Probabilistic => {
            let a = f.eval(left)?;
            let b = f.eval(r)?;
            match flip_with(&a, &b, draw)? {
                CoinFlip::First => Side::Left,
                CoinFlip::Second => Side::Right,
            }
        }
    };
    merge_chunks(side, left, Some(r))
}

/// The pipelined competition tree.
///
/// Node chunks are double-buffered: a step writes every level of the
/// next buffer from the previous buffer, then swaps once, so the
/// update is simultaneous and intra-level order cannot matter.
#[derive(Clone, Debug)]
pub struct UpTree<S> {
    shape: TreeShape,
    /// address id -> leaf position.
    assignment: Vec<usize>,
    /// leaf position -> address id.
    inverse: Vec<u32>,
    seed: u64,
    /// levels[0] = leaves, levels[height] = root.
    levels: Vec<Vec<Chunk<S>>>,
    scratch: Vec<Vec<Chunk<S>>>,
    node_streams: Vec<Vec<RngStream>>,
}

impl<S: Scalar> UpTree<S> {
    /// Builds a tree over `n` address-ordered leaves with the identity
    /// assignment and seed 0.
    pub fn build(n: usize, policy: ShapePolicy) -> Result<Self, UpTreeError> {
        let ShapePolicy::Balanced = policy;
        let shape = TreeShape::build(n)?;
        let mut tree = UpTree {
            shape,
            assignment: (0..n).collect(),
            inverse: (0..n as u32).collect(),
            seed: 0,
            levels: Vec::new(),
            scratch: Vec::new(),
            node_streams: Vec::new(),
        };
        tree.rebuild_streams();
        tree.reset();
        Ok(tree)
    }

    /// Re-seeds every node substream and resets the tree to tick 0.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.rebuild_streams();
        self.reset();
        self
    }

    /// Installs a leaf permutation (address id -> leaf position) and
    /// resets the tree to tick 0.
    pub fn with_assignment(mut self, assignment: &[usize]) -> Result<Self, UpTreeError> {
        let n = self.shape.leaf_count;
        if assignment.len() != n {
            return Err(UpTreeError::InvalidAssignment {
                reason: format!("length {} for {} leaves", assignment.len(), n),
            });
        }
        let mut inverse = vec![u32::MAX; n];
        for (addr, &leaf) in assignment.iter().enumerate() {
            if leaf >= n {
                return Err(UpTreeError::InvalidAssignment {
                    reason: format!("leaf index {leaf} out of range"),
                });
            }
            if inverse[leaf] != u32::MAX {
                return Err(UpTreeError::InvalidAssignment {
                    reason: format!("leaf index {leaf} assigned twice"),
                });
            }
            inverse[leaf] = addr as u32;
        }
        self.assignment = assignment.to_vec();
        self.inverse = inverse;
        self.reset();
        Ok(self)
    }

    fn rebuild_streams(&mut self) {
        let base = RngStream::from_seed(self.seed);
        self.node_streams = (1..=self.shape.height)
            .map(|s| {
                (0..self.shape.nodes_at(s).len())
                    .map(|i| base.node_substream(s as u32, i as u32))
                    .collect()
            })
            .collect();
    }

    /// Reinstalls the tick-0 state: every node holds the NIL chunk of
    /// its smallest descendant address.
    pub fn reset(&mut self) {
        let n = self.shape.leaf_count;
        let mut levels: Vec<Vec<Chunk<S>>> = Vec::with_capacity(self.shape.height + 1);
        levels.push(
            (0..n)
                .map(|leaf| Chunk::nil(Address::new(self.inverse[leaf]), 0))
                .collect(),
        );
        let mut min_addr: Vec<u32> = self.inverse.clone();
        for s in 1..=self.shape.height {
            let nodes = self.shape.nodes_at(s);
            let mut next_min = Vec::with_capacity(nodes.len());
            let mut chunks = Vec::with_capacity(nodes.len());
            for node in nodes {
                let mut m = min_addr[node.left];
                if let Some(rt) = node.right {
                    m = m.min(min_addr[rt]);
                }
                next_min.push(m);
                chunks.push(Chunk::nil(Address::new(m), 0));
            }
            min_addr = next_min;
            levels.push(chunks);
        }
        self.scratch = levels.clone();
        self.levels = levels;
    }

    pub fn leaf_count(&self) -> usize {
        self.shape.leaf_count
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Current chunk at the root (the STM candidate of the last step).
    pub fn root_chunk(&self) -> &Chunk<S> {
        &self.levels[self.shape.height][0]
    }

    /// Current chunks of one level; 0 is the leaves.
    pub fn level_chunks(&self, level: usize) -> &[Chunk<S>] {
        &self.levels[level]
    }

    fn validate_leaves(&self, leaf_chunks: &[Chunk<S>]) -> Result<(), UpTreeError> {
        if leaf_chunks.len() != self.shape.leaf_count {
            return Err(UpTreeError::WrongLeafCount {
                expected: self.shape.leaf_count,
                found: leaf_chunks.len(),
            });
        }
        for (i, c) in leaf_chunks.iter().enumerate() {
            if c.address().index() != i {
                return Err(UpTreeError::LeafAddressMismatch {
                    position: i,
                    address: c.address(),
                });
            }
        }
        Ok(())
    }

    fn place_leaves(&self, leaf_chunks: &[Chunk<S>], into: &mut Vec<Chunk<S>>) {
        into.clear();
        into.extend((0..self.shape.leaf_count).map(|leaf| {
            leaf_chunks[self.inverse[leaf] as usize].clone()
        }));
    }

    /// One pipelined tick: places the tick-t submissions at the leaves
    /// and advances every level simultaneously. Returns the new root
    /// chunk, which carries the competition of tick t - h once warm.
    pub fn step(
        &mut self,
        leaf_chunks: &[Chunk<S>],
        t: Tick,
        mode: CompetitionMode,
        f: &CompetitionFunction<S>,
    ) -> Result<Chunk<S>, UpTreeError> {
        self.validate_leaves(leaf_chunks)?;
        for c in leaf_chunks {
            if c.t() != t {
                return Err(UpTreeError::LeafTickMismatch {
                    expected: t,
                    found: c.t(),
                });
            }
        }
        let mut scratch = std::mem::take(&mut self.scratch);
        {
            let (leaf_level, upper) = scratch.split_first_mut().expect("buffers exist");
            self.place_leaves(leaf_chunks, leaf_level);
            for s in 1..=self.shape.height {
                let prev = &self.levels[s - 1];
                let out = &mut upper[s - 1];
                out.clear();
                for (i, node) in self.shape.nodes_at(s).iter().enumerate() {
                    let left = &prev[node.left];
                    let right = node.right.map(|r| &prev[r]);
                    let draw = match mode {
                        CompetitionMode::Probabilistic => self.node_streams[s - 1][i].at_f64(t),
                        CompetitionMode::Deterministic => 0.0,
                    };
                    out.push(advance_node(left, right, mode, f, draw)?);
                }
            }
        }
        self.scratch = std::mem::replace(&mut self.levels, scratch);
        Ok(self.root_chunk().clone())
    }

    /// Replays the competition of wavefront `t` in one shot, using the
    /// same per-node draws the pipelined run used (node at level s saw
    /// wavefront t at tick t + s). With time-varying inputs,
    /// `step(..., t, ..)`'s root equals
    /// `isolated_competition(leaves_of(t - h), t - h, ..)`.
    pub fn isolated_competition(
        &self,
        leaf_chunks: &[Chunk<S>],
        t: Tick,
        mode: CompetitionMode,
        f: &CompetitionFunction<S>,
    ) -> Result<Chunk<S>, UpTreeError> {
        self.validate_leaves(leaf_chunks)?;
        let mut current = Vec::new();
        self.place_leaves(leaf_chunks, &mut current);
        for s in 1..=self.shape.height {
            let mut next = Vec::with_capacity(self.shape.nodes_at(s).len());
            for (i, node) in self.shape.nodes_at(s).iter().enumerate() {
                let left = &current[node.left];
                let right = node.right.map(|r| &current[r]);
                let draw = match mode {
                    CompetitionMode::Probabilistic => {
                        self.node_streams[s - 1][i].at_f64(t + s as Tick)
                    }
                    CompetitionMode::Deterministic => 0.0,
                };
                next.push(advance_node(left, right, mode, f, draw)?);
            }
            current = next;
        }
        Ok(current.swap_remove(0))
    }

    /// One fresh competition drawing sequentially from `rng` in
    /// level-major, left-to-right order (one draw per two-child node).
    /// This is the Monte Carlo trial primitive.
    pub fn single_competition(
        &self,
        leaf_chunks: &[Chunk<S>],
        mode: CompetitionMode,
        f: &CompetitionFunction<S>,
        rng: &mut RngStream,
    ) -> Result<Chunk<S>, UpTreeError> {
        self.validate_leaves(leaf_chunks)?;
        let mut current = Vec::new();
        self.place_leaves(leaf_chunks, &mut current);
        for s in 1..=self.shape.height {
            let mut next = Vec::with_capacity(self.shape.nodes_at(s).len());
            for node in self.shape.nodes_at(s) {
                let left = &current[node.left];
                let right = node.right.map(|r| &current[r]);
                let draw = match (mode, node.right) {
                    (CompetitionMode::Probabilistic, Some(_)) => rng.next_f64(),
                    _ => 0.0,
                };
                next.push(advance_node(left, right, mode, f, draw)?);
            }
            current = next;
        }
        Ok(current.swap_remove(0))
    }

    /// Exact win probability of every processor's chunk, indexed by
    /// address. Pure function of the shape, the competition function,
    /// and the leaf chunks: each leaf's probability is the product
    /// over its root path of f(own subtree) / (f(left) + f(right)),
    /// with 1/2 at nodes where both scores are zero and 1 through
    /// one-child nodes. Exact when `S` is rational.
    pub fn exact_win_probabilities(
        &self,
        f: &CompetitionFunction<S>,
        leaf_chunks: &[Chunk<S>],
    ) -> Result<Vec<S>, UpTreeError> {
        self.validate_leaves(leaf_chunks)?;
        let n = self.shape.leaf_count;
        // Subtree (intensity, mood) sums, then scores, per level.
        let mut sums: Vec<Vec<(S, S)>> = Vec::with_capacity(self.shape.height + 1);
        sums.push(
            (0..n)
                .map(|leaf| {
                    let c = &leaf_chunks[self.inverse[leaf] as usize];
                    (c.intensity().clone(), c.mood().clone())
                })
                .collect(),
        );
        for s in 1..=self.shape.height {
            let prev = &sums[s - 1];
            let mut level = Vec::with_capacity(self.shape.nodes_at(s).len());
            for node in self.shape.nodes_at(s) {
                let (li, lm) = prev[node.left].clone();
                let (i, m) = match node.right {
                    Some(r) => {
                        let (ri, rm) = prev[r].clone();
                        (li + ri, lm + rm)
                    }
                    None => (li, lm),
                };
                level.push((i, m));
            }
            sums.push(level);
        }
        let scores: Vec<Vec<S>> = sums
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|(i, m)| f.eval_parts(i, m))
                    .collect::<Result<Vec<S>, CompetitionError>>()
            })
            .collect::<Result<_, _>>()?;
        // Descend, splitting each node's probability between children.
        let half = S::one() / (S::one() + S::one());
        let mut prob: Vec<S> = vec![S::one()];
        for s in (1..=self.shape.height).rev() {
            let mut child_prob = vec![S::zero(); scores[s - 1].len()];
            for (i, node) in self.shape.nodes_at(s).iter().enumerate() {
                let p = prob[i].clone();
                match node.right {
                    None => child_prob[node.left] = p,
                    Some(r) => {
                        let a = scores[s - 1][node.left].clone();
                        let b = scores[s - 1][r].clone();
                        let total = a.clone() + b.clone();
                        if total.is_zero() {
                            child_prob[node.left] = p.clone() * half.clone();
                            child_prob[r] = p * half.clone();
                        } else {
                            child_prob[node.left] = p.clone() * (a / total.clone());
                            child_prob[r] = p * (b / total);
                        }
                    }
                }
            }
            prob = child_prob;
        }
        let mut out = vec![S::zero(); n];
        for leaf in 0..n {
            out[self.inverse[leaf] as usize] = prob[leaf].clone();
        }
        Ok(out)
    }
}
