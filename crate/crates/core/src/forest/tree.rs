//! CART classification trees grown on bootstrap samples.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForestData;

pub(crate) const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: u8 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Predicts from a feature accessor.
    pub fn predict_with<F: Fn(usize) -> f64>(&self, x: F) -> u8 {
        self.predict_from(0, x)
    }

    /// Predicts starting the descent at node `at`.
    pub(crate) fn predict_from<F: Fn(usize) -> f64>(&self, mut at: usize, x: F) -> u8 {
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    at = if x(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        self.predict_with(|j| x[j])
    }

    /// Whether any split of the tree uses `feature`.
    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Split { feature: f, .. } if *f == feature))
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Unsigned integer wide enough for the exact split comparisons of a node.
trait Exact: Copy + Ord + std::ops::Add<Output = Self> + std::ops::Mul<Output = Self> {
    fn of(v: u64) -> Self;
    fn to_f64(self) -> f64;
}

impl Exact for u64 {
    fn of(v: u64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Exact for u128 {
    fn of(v: u64) -> Self {
        v as u128
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Largest node for which the comparisons fit in `u64`: numerators are at
/// most `n^3 / 4`, denominators `n^2 / 4`, cross products `n^5 / 16`.
const U64_NODE_LIMIT: u64 = 4096;

/// Gini split quality kept as an exact fraction.
///
/// Minimizing the weighted Gini impurity `n_L G_L + n_R G_R` is the same as
/// maximizing `A / n_L + B / n_R`, where `A` and `B` are the sums of squared
/// class counts on each side. We store that value as
/// `(A n_R + B n_L) / (n_L n_R)` and compare by cross-multiplication.
#[derive(Debug, Clone, Copy)]
struct SplitScore<T> {
    num: T,
    den: T,
}

impl<T: Exact> SplitScore<T> {
    fn new(left: &[u64; NUM_CLASSES], right: &[u64; NUM_CLASSES]) -> Self {
        let nl: u64 = left.iter().sum();
        let nr: u64 = right.iter().sum();
        let a: u64 = left.iter().map(|&c| c * c).sum();
        let b: u64 = right.iter().map(|&c| c * c).sum();
        SplitScore {
            num: T::of(a) * T::of(nr) + T::of(b) * T::of(nl),
            den: T::of(nl) * T::of(nr),
        }
    }

    /// Score of the unsplit node, `sum c^2 / n`.
    fn parent(counts: &[u64; NUM_CLASSES]) -> Self {
        SplitScore {
            num: T::of(counts.iter().map(|&c| c * c).sum()),
            den: T::of(counts.iter().sum::<u64>()),
        }
    }

    fn cmp(&self, other: &SplitScore<T>) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    fn value(&self) -> f64 {
        self.num.to_f64() / self.den.to_f64()
    }
}

/// A candidate split found by [`best_split`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted Gini impurity `n_L G_L + n_R G_R` of the split.
    pub weighted_gini: f64,
}

/// Row index with its multiplicity in the node's multiset.
type Weighted = (u32, u32);

/// Collapses a multiset of row indices into sorted distinct rows with counts.
fn to_weighted(rows: &[u32]) -> Vec<Weighted> {
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<Weighted> = Vec::with_capacity(sorted.len());
    for i in sorted {
        match out.last_mut() {
            Some((last, w)) if *last == i => *w += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}

fn class_counts(data: &ForestData, rows: &[Weighted]) -> [u64; NUM_CLASSES] {
    let mut counts = [0u64; NUM_CLASSES];
    for &(i, w) in rows {
        counts[data.labels[i as usize] as usize] += w as u64;
    }
    counts
}

fn majority(counts: &[u64; NUM_CLASSES]) -> u8 {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    best as u8
}

/// Reusable buffers for split search.
#[derive(Default)]
struct Scratch {
    bucket: Vec<[u64; NUM_CLASSES]>,
    keys: Vec<u64>,
    groups: Vec<(u32, [u64; NUM_CLASSES])>,
}

/// Fills `scratch.groups` with the per-class counts of each distinct value
/// of feature `j` present in `rows`, in ascending value order. Counting
/// sort is used when the feature has few distinct values relative to the
/// node size, comparison sort otherwise.
fn collect_groups(data: &ForestData, rows: &[Weighted], j: usize, scratch: &mut Scratch) {
    let ranks = &data.ranks[j];
    let n_distinct = data.distinct[j].len();
    scratch.groups.clear();
    if n_distinct <= 2 * rows.len() {
        scratch.bucket.clear();
        scratch.bucket.resize(n_distinct, [0; NUM_CLASSES]);
        for &(i, w) in rows {
            scratch.bucket[ranks[i as usize] as usize][data.labels[i as usize] as usize] += w as u64;
        }
        for (r, c) in scratch.bucket.iter().enumerate() {
            if c.iter().any(|&v| v > 0) {
                scratch.groups.push((r as u32, *c));
            }
        }
    } else {
        // rank and label in the high half, multiplicity in the low half, so
        // the sort is on plain integers
        scratch.keys.clear();
        scratch.keys.extend(rows.iter().map(|&(i, w)| {
            let key = ranks[i as usize] << 2 | data.labels[i as usize] as u32;
            (key as u64) << 32 | w as u64
        }));
        scratch.keys.sort_unstable();
        for &packed in &scratch.keys {
            let key = (packed >> 32) as u32;
            let w = packed & 0xffff_ffff;
            let (r, y) = (key >> 2, (key & 3) as usize);
            match scratch.groups.last_mut() {
                Some((last, c)) if *last == r => c[y] += w,
                _ => {
                    let mut c = [0u64; NUM_CLASSES];
                    c[y] = w;
                    scratch.groups.push((r, c));
                }
            }
        }
    }
}

/// Midpoint of `a < b` that still separates them after rounding.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    if m < b {
        m
    } else {
        a
    }
}

/// Best split of `rows` over `features` by weighted Gini impurity.
///
/// Thresholds are midpoints between consecutive distinct values present in
/// the node. Among equally good splits the lowest feature index wins, then
/// the lowest threshold. Returns `None` if no split reduces impurity.
pub fn best_split(data: &ForestData, rows: &[u32], features: &[usize]) -> Option<SplitChoice> {
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    let rows = to_weighted(rows);
    best_split_counted(data, &class_counts(data, &rows), &rows, &sorted, &mut Scratch::default())
}

fn best_split_counted(
    data: &ForestData,
    total: &[u64; NUM_CLASSES],
    rows: &[Weighted],
    features: &[usize],
    scratch: &mut Scratch,
) -> Option<SplitChoice> {
    if total.iter().sum::<u64>() <= U64_NODE_LIMIT {
        best_split_exact::<u64>(data, total, rows, features, scratch)
    } else {
        best_split_exact::<u128>(data, total, rows, features, scratch)
    }
}

fn best_split_exact<T: Exact>(
    data: &ForestData,
    total: &[u64; NUM_CLASSES],
    rows: &[Weighted],
    features: &[usize],
    scratch: &mut Scratch,
) -> Option<SplitChoice> {
    let parent = SplitScore::<T>::parent(total);
    let mut best: Option<(SplitScore<T>, usize, f64)> = None;

    for &j in features {
        let values = &data.distinct[j];
        collect_groups(data, rows, j, scratch);

        let mut left = [0u64; NUM_CLASSES];
        let mut feature_best: Option<(SplitScore<T>, f64)> = None;
        let groups = &scratch.groups;
        for w in 0..groups.len() {
            let (r, c) = groups[w];
            if w > 0 {
                let right: [u64; NUM_CLASSES] = std::array::from_fn(|k| total[k] - left[k]);
                let score = SplitScore::<T>::new(&left, &right);
                if feature_best.as_ref().is_none_or(|(b, _)| score.cmp(b) == Ordering::Greater) {
                    let prev = groups[w - 1].0;
                    let threshold = midpoint(values[prev as usize], values[r as usize]);
                    feature_best = Some((score, threshold));
                }
            }
            for k in 0..NUM_CLASSES {
                left[k] += c[k];
            }
        }

        if let Some((score, threshold)) = feature_best {
            if best.as_ref().is_none_or(|(b, _, _)| score.cmp(b) == Ordering::Greater) {
                best = Some((score, j, threshold));
            }
        }
    }

    let (score, feature, threshold) = best?;
    if score.cmp(&parent) != Ordering::Greater {
        return None;
    }
    let n: u64 = total.iter().sum();
    Some(SplitChoice {
        feature,
        threshold,
        weighted_gini: n as f64 - score.value(),
    })
}

/// Grows one unpruned tree on the multiset `rows` (typically a bootstrap
/// sample), considering `mtry` random features at each node.
pub(crate) fn grow_tree<R: Rng + ?Sized>(
    data: &ForestData,
    rows: Vec<u32>,
    mtry: usize,
    min_node_size: usize,
    max_depth: Option<usize>,
    rng: &mut R,
) -> Tree {
    let p = data.n_features();
    let mut nodes = vec![Node::Leaf { class: 0 }];
    // Bootstrap duplicates are carried as multiplicities, which shrinks
    // every node without changing its class counts.
    let mut rows = to_weighted(&rows);
    // (node id, start, end, depth)
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    let mut scratch = Scratch::default();
    let mut features = Vec::with_capacity(mtry);
    let mut order: Vec<usize> = (0..p).collect();

    while let Some((id, start, end, depth)) = stack.pop() {
        let counts = class_counts(data, &rows[start..end]);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_small = counts.iter().sum::<u64>() <= min_node_size as u64;
        let too_deep = max_depth.is_some_and(|d| depth >= d);
        let split = if pure || too_small || too_deep {
            None
        } else {
            features.clear();
            let (chosen, _) = order.partial_shuffle(rng, mtry);
            features.extend_from_slice(chosen);
            features.sort_unstable();
            best_split_counted(data, &counts, &rows[start..end], &features, &mut scratch)
        };
        let Some(choice) = split else {
            nodes[id] = Node::Leaf { class: majority(&counts) };
            continue;
        };

        let column = &data.columns[choice.feature];
        let slice = &mut rows[start..end];
        let mut mid = start;
        for i in 0..slice.len() {
            if column[slice[i].0 as usize] <= choice.threshold {
                slice.swap(i, mid - start);
                mid += 1;
            }
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { class: 0 });
        nodes.push(Node::Leaf { class: 0 });
        nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        stack.push((right, mid, end, depth + 1));
        stack.push((left, start, mid, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn data(columns: Vec<Vec<f64>>, labels: Vec<u8>) -> ForestData {
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        ForestData::new(columns, labels, names).unwrap()
    }

    #[test]
    fn perfect_threshold_split() {
        let d = data(vec![vec![1.0, 2.0, 3.0, 4.0]], vec![0, 0, 1, 1]);
        let s = best_split(&d, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.weighted_gini, 0.0);
    }

    #[test]
    fn no_split_when_feature_is_constant() {
        let d = data(vec![vec![1.0; 4]], vec![0, 1, 0, 1]);
        assert!(best_split(&d, &[0, 1, 2, 3], &[0]).is_none());
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let col = vec![0.0, 0.0, 1.0, 1.0];
        let d = data(vec![col.clone(), col], vec![2, 2, 3, 3]);
        assert_eq!(best_split(&d, &[0, 1, 2, 3], &[1, 0]).unwrap().feature, 0);
    }

    #[test]
    fn duplicates_in_multiset_are_weighted() {
        // Row 0 appears three times; the best split isolates it.
        let d = data(vec![vec![0.0, 1.0, 2.0]], vec![1, 0, 0]);
        let s = best_split(&d, &[0, 0, 0, 1, 2], &[0]).unwrap();
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn grown_tree_fits_training_data() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let labels: Vec<u8> = (0..50).map(|i| ((i / 10) % 4) as u8).collect();
        let d = data(vec![x.clone()], labels.clone());
        let rows: Vec<u32> = (0..50).collect();
        let tree = grow_tree(&d, rows, 1, 1, None, &mut substream(1, 0));
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(tree.predict(&[x[i]]), y);
        }
        assert!(tree.uses_feature(0));
    }

    #[test]
    fn max_depth_limits_growth() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let labels: Vec<u8> = (0..64).map(|i| (i % 4) as u8).collect();
        let d = data(vec![x], labels);
        let tree = grow_tree(&d, (0..64).collect(), 1, 1, Some(2), &mut substream(1, 0));
        assert!(tree.n_leaves() <= 4);
    }
}
