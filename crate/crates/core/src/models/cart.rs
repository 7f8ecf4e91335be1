//! CART decision trees, the shared building block of the forest and
//! boosting models.
//!
//! Growth is greedy and level-wise. At each node `mtry` features are
//! sampled without replacement; candidate thresholds are the midpoints
//! between consecutive distinct feature values among the node's samples,
//! so small instances reproduce an exhaustive split search exactly. Two
//! objectives are supported: weighted Gini impurity over class labels
//! (classification leaves hold frequency vectors) and a second-order
//! gradient objective (regression leaves hold one value, the ridge-damped
//! Newton step -sum(g)/(sum(h) + epsilon)).
//!
//! Bootstrap resamples are passed as per-sample multiplicities. Samples
//! with weight zero are excluded entirely, so growth is identical to
//! materializing the resampled rows: same candidate thresholds, same
//! counts, same leaf payloads.

use rand::Rng;

use crate::error::Error;
use crate::okta::N_CLASSES;
use crate::Result;

use super::TrainSet;

/// Ridge term protecting second-order leaf values and gains.
pub const RIDGE: f64 = 1e-6;

const INACTIVE: u32 = u32::MAX;
const NO_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
pub struct CartParams {
    pub max_depth: usize,
    /// Features sampled (without replacement) per split; capped at the
    /// feature count.
    pub mtry: usize,
    /// Minimum weighted sample count in each child.
    pub min_leaf: u64,
}

/// What the tree optimizes.
pub enum CartTarget<'a> {
    /// Gini impurity on the training set's class labels.
    Gini,
    /// Second-order objective from per-sample gradient and hessian.
    SecondOrder { g: &'a [f64], h: &'a [f64] },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Class-frequency leaf (Gini mode).
    ClassLeaf([f64; N_CLASSES]),
    /// Regression leaf (second-order mode).
    ValueLeaf(f64),
}

/// A grown tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct CartTree {
    nodes: Vec<Node>,
}

impl CartTree {
    pub fn from_nodes(nodes: Vec<Node>) -> CartTree {
        CartTree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn leaf(&self, row: &[f64]) -> &Node {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf => return leaf,
            }
        }
    }

    /// Class-frequency vector at the row's leaf (Gini-mode trees).
    pub fn predict_classes(&self, row: &[f64]) -> &[f64; N_CLASSES] {
        match self.leaf(row) {
            Node::ClassLeaf(f) => f,
            _ => panic!("tree holds regression leaves"),
        }
    }

    /// Leaf value at the row (second-order trees).
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match self.leaf(row) {
            Node::ValueLeaf(v) => *v,
            _ => panic!("tree holds classification leaves"),
        }
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
                _ => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Per-feature sample orderings, ascending by value. Built once per
/// training set and shared across all trees of a fit.
pub(crate) struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub(crate) fn new(train: &TrainSet) -> SortedColumns {
        let dim = train.dim();
        let n = train.n();
        let mut order = Vec::with_capacity(dim);
        for f in 0..dim {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                train.row(a as usize)[f]
                    .partial_cmp(&train.row(b as usize)[f])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order.push(idx);
        }
        SortedColumns { order }
    }
}

/// Aggregate statistics of one node's sample set.
#[derive(Clone)]
enum Stats {
    Gini {
        counts: [f64; N_CLASSES],
        weight: u64,
    },
    Grad {
        g: f64,
        h: f64,
        weight: u64,
    },
}

impl Stats {
    fn empty(second_order: bool) -> Stats {
        if second_order {
            Stats::Grad {
                g: 0.0,
                h: 0.0,
                weight: 0,
            }
        } else {
            Stats::Gini {
                counts: [0.0; N_CLASSES],
                weight: 0,
            }
        }
    }

    fn weight(&self) -> u64 {
        match self {
            Stats::Gini { weight, .. } | Stats::Grad { weight, .. } => *weight,
        }
    }

    fn add(&mut self, train: &TrainSet, target: &CartTarget, i: usize, w: u64) {
        match (self, target) {
            (Stats::Gini { counts, weight }, CartTarget::Gini) => {
                counts[train.label(i)] += w as f64;
                *weight += w;
            }
            (Stats::Grad { g, h, weight }, CartTarget::SecondOrder { g: gs, h: hs }) => {
                *g += gs[i] * w as f64;
                *h += hs[i] * w as f64;
                *weight += w;
            }
            _ => unreachable!("target mode fixed per growth"),
        }
    }

    fn leaf(&self) -> Node {
        match self {
            Stats::Gini { counts, weight } => {
                let mut freqs = *counts;
                for f in freqs.iter_mut() {
                    *f /= *weight as f64;
                }
                Node::ClassLeaf(freqs)
            }
            Stats::Grad { g, h, .. } => Node::ValueLeaf(-g / (h + RIDGE)),
        }
    }
}

/// Running left-side scan state of one (node, feature) pair.
#[derive(Clone)]
struct Scan {
    stats: Stats,
    prev_value: f64,
    started: bool,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Split improvement; strictly positive values are required to split, so
/// pure nodes (Gini) and zero-signal nodes (second-order) become leaves.
fn gain(left: &Stats, parent: &Stats) -> f64 {
    match (left, parent) {
        (
            Stats::Gini {
                counts: lc,
                weight: lw,
            },
            Stats::Gini {
                counts: pc,
                weight: pw,
            },
        ) => {
            // Maximizing sum(count^2)/weight over the children is
            // equivalent to minimizing the weighted Gini impurity.
            let rw = pw - lw;
            let mut s_left = 0.0;
            let mut s_right = 0.0;
            let mut s_parent = 0.0;
            for c in 0..N_CLASSES {
                s_left += lc[c] * lc[c];
                let r = pc[c] - lc[c];
                s_right += r * r;
                s_parent += pc[c] * pc[c];
            }
            s_left / *lw as f64 + s_right / rw as f64 - s_parent / *pw as f64
        }
        (
            Stats::Grad {
                g: lg, h: lh, ..
            },
            Stats::Grad {
                g: pg, h: ph, ..
            },
        ) => {
            let rg = pg - lg;
            let rh = ph - lh;
            lg * lg / (lh + RIDGE) + rg * rg / (rh + RIDGE) - pg * pg / (ph + RIDGE)
        }
        _ => unreachable!(),
    }
}

/// Grows one tree. `weights` are per-sample multiplicities (bootstrap
/// counts); `None` means weight 1 everywhere. The random stream is only
/// consumed when `mtry` is below the feature count.
pub fn cart_grow<R: Rng>(
    train: &TrainSet,
    target: &CartTarget,
    weights: Option<&[u32]>,
    params: &CartParams,
    rng: &mut R,
) -> Result<CartTree> {
    let columns = SortedColumns::new(train);
    grow_with_columns(train, &columns, target, weights, params, rng)
}

pub(crate) fn grow_with_columns<R: Rng>(
    train: &TrainSet,
    columns: &SortedColumns,
    target: &CartTarget,
    weights: Option<&[u32]>,
    params: &CartParams,
    rng: &mut R,
) -> Result<CartTree> {
    let n = train.n();
    let dim = train.dim();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                what: "tree sample weights",
                expected: n,
                got: w.len(),
            });
        }
    }
    if let CartTarget::SecondOrder { g, h } = target {
        if g.len() != n || h.len() != n {
            return Err(Error::DimensionMismatch {
                what: "tree gradient targets",
                expected: n,
                got: g.len().min(h.len()),
            });
        }
    }
    let second_order = matches!(target, CartTarget::SecondOrder { .. });
    let mtry = params.mtry.min(dim).max(1);
    let min_leaf = params.min_leaf.max(1);
    let w_of = |i: usize| weights.map_or(1u32, |w| w[i]);

    let mut node_of = vec![0u32; n];
    let mut root = Stats::empty(second_order);
    for i in 0..n {
        let w = w_of(i);
        if w == 0 {
            node_of[i] = INACTIVE;
        } else {
            root.add(train, target, i, w as u64);
        }
    }
    if root.weight() == 0 {
        return Err(Error::EmptyTrainingSet("tree growth"));
    }

    // Arena of either finalized splits or pending nodes with their stats.
    enum Entry {
        Pending(Stats),
        Split {
            feature: usize,
            threshold: f64,
            left: u32,
            right: u32,
        },
    }
    let mut arena: Vec<Entry> = vec![Entry::Pending(root)];
    let mut active: Vec<u32> = vec![0];

    for _depth in 0..params.max_depth {
        // Nodes large enough to try a split this level.
        let splittable: Vec<u32> = active
            .iter()
            .copied()
            .filter(|&nd| match &arena[nd as usize] {
                Entry::Pending(s) => s.weight() >= 2 * min_leaf,
                _ => unreachable!("active nodes are pending"),
            })
            .collect();
        if splittable.is_empty() {
            break;
        }
        let mut slot_of_node = vec![NO_SLOT; arena.len()];
        let mut node_stats: Vec<Stats> = Vec::with_capacity(splittable.len());
        let mut feature_mask: Vec<u16> = Vec::with_capacity(splittable.len());
        for (slot, &nd) in splittable.iter().enumerate() {
            slot_of_node[nd as usize] = slot as u32;
            match &arena[nd as usize] {
                Entry::Pending(s) => node_stats.push(s.clone()),
                _ => unreachable!(),
            }
            let mask = if mtry >= dim {
                (1u16 << dim) - 1
            } else {
                let picked = rand::seq::index::sample(rng, dim, mtry);
                picked.iter().fold(0u16, |m, f| m | (1 << f))
            };
            feature_mask.push(mask);
        }

        let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
        let mut scans: Vec<Scan> = vec![
            Scan {
                stats: Stats::empty(second_order),
                prev_value: 0.0,
                started: false,
            };
            splittable.len()
        ];
        for f in 0..dim {
            for scan in scans.iter_mut() {
                scan.stats = Stats::empty(second_order);
                scan.started = false;
            }
            for &i in &columns.order[f] {
                let i = i as usize;
                let nd = node_of[i];
                if nd == INACTIVE {
                    continue;
                }
                let slot = slot_of_node[nd as usize];
                if slot == NO_SLOT || feature_mask[slot as usize] & (1 << f) == 0 {
                    continue;
                }
                let slot = slot as usize;
                let v = train.row(i)[f];
                let scan = &mut scans[slot];
                if scan.started && v > scan.prev_value {
                    let lw = scan.stats.weight();
                    let rw = node_stats[slot].weight() - lw;
                    if lw >= min_leaf && rw >= min_leaf {
                        let g = gain(&scan.stats, &node_stats[slot]);
                        // Strictly-greater comparisons break ties toward
                        // the lowest feature index, then lowest threshold.
                        if g > best[slot].map_or(0.0, |b| b.gain) {
                            best[slot] = Some(Candidate {
                                gain: g,
                                feature: f,
                                threshold: (scan.prev_value + v) / 2.0,
                            });
                        }
                    }
                }
                scan.prev_value = v;
                scan.started = true;
                scan.stats.add(train, target, i, w_of(i) as u64);
            }
        }

        let mut split_any = false;
        let mut new_active: Vec<u32> = Vec::new();
        for (slot, &nd) in splittable.iter().enumerate() {
            if let Some(c) = best[slot] {
                let left = arena.len() as u32;
                let right = left + 1;
                arena.push(Entry::Pending(Stats::empty(second_order)));
                arena.push(Entry::Pending(Stats::empty(second_order)));
                arena[nd as usize] = Entry::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                new_active.push(left);
                new_active.push(right);
                split_any = true;
            }
        }
        if !split_any {
            break;
        }
        // Route samples to the new children and accumulate their stats.
        for i in 0..n {
            let nd = node_of[i];
            if nd == INACTIVE {
                continue;
            }
            if let Entry::Split {
                feature,
                threshold,
                left,
                right,
            } = &arena[nd as usize]
            {
                let child = if train.row(i)[*feature] < *threshold {
                    *left
                } else {
                    *right
                };
                node_of[i] = child;
                match &mut arena[child as usize] {
                    Entry::Pending(s) => s.add(train, target, i, w_of(i) as u64),
                    _ => unreachable!("fresh children are pending"),
                }
            }
        }
        active = new_active;
    }

    let nodes: Vec<Node> = arena
        .into_iter()
        .map(|e| match e {
            Entry::Pending(s) => s.leaf(),
            Entry::Split {
                feature,
                threshold,
                left,
                right,
            } => Node::Split {
                feature,
                threshold,
                left,
                right,
            },
        })
        .collect();
    Ok(CartTree { nodes })
}
