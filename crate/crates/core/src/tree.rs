//! In-order label arithmetic over the virtual perfect binary range tree.
//!
//! Values `0..m` sit at the leaves of a perfect binary tree of capacity
//! `C = 2^ceil(log2 m)`. Nodes are identified by their in-order position
//! within that virtual tree, so leaves carry even labels `2v` and a node of
//! height `h` covering leaves `[lo, lo + 2^h - 1]` carries label
//! `2*lo + 2^h - 1`. In-order labels are stable under rightward growth: when
//! capacity doubles the old tree becomes the left subtree of the new root
//! and every existing label keeps its meaning, which is what lets the
//! schemes migrate only the root's state.
//!
//! Everything here is closed-form integer arithmetic; no tree is ever
//! materialized.

use crate::{Error, Result};

/// A value index in `[0, m)`, i.e. a leaf position.
pub type Value = u64;

/// In-order node label within the virtual perfect tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeLabel(pub u64);

impl NodeLabel {
    /// Label of the leaf holding value `v`.
    pub fn leaf(v: Value) -> Self {
        NodeLabel(2 * v)
    }

    pub fn is_leaf(self) -> bool {
        self.0.is_multiple_of(2)
    }

    /// Height of the node: 0 for leaves.
    pub fn height(self) -> u32 {
        (self.0 + 1).trailing_zeros()
    }
}

impl std::fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Inclusive leaf interval covered by a node, plus its height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub lo: Value,
    pub hi: Value,
    pub height: u32,
}

/// Leaf-count geometry of the current tree.
///
/// Only the number of assigned values `m` is stored; capacity and node
/// counts derive from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeGeometry {
    m: u64,
}

impl TreeGeometry {
    pub fn empty() -> Self {
        TreeGeometry { m: 0 }
    }

    pub fn with_values(m: u64) -> Self {
        TreeGeometry { m }
    }

    /// Number of assigned values (leaves in use).
    pub fn value_count(&self) -> u64 {
        self.m
    }

    /// Virtual capacity: the smallest power of two >= m, or 0 when empty.
    pub fn capacity(&self) -> u64 {
        if self.m == 0 {
            0
        } else {
            self.m.next_power_of_two()
        }
    }

    /// Root label of the current tree, if any.
    pub fn root(&self) -> Option<NodeLabel> {
        let c = self.capacity();
        (c > 0).then(|| NodeLabel(c - 1))
    }

    /// Total node count of the virtual perfect tree (real and virtual).
    pub fn virtual_node_count(&self) -> u64 {
        let c = self.capacity();
        if c == 0 {
            0
        } else {
            2 * c - 1
        }
    }

    /// Count of real nodes: those whose span intersects `[0, m-1]`.
    ///
    /// This is the keyword count of the derived binary database.
    pub fn real_node_count(&self) -> u64 {
        let c = self.capacity();
        if c == 0 {
            return 0;
        }
        let mut total = 0;
        let mut h = 0;
        while (1u64 << h) <= c {
            // Nodes of height h with lo <= m-1: floor((m-1)/2^h) + 1.
            total += (self.m - 1) / (1 << h) + 1;
            h += 1;
        }
        total
    }

    /// Whether `n` is a real node (its span intersects `[0, m-1]`).
    pub fn is_real(&self, n: NodeLabel) -> bool {
        match node_span(n, self.capacity()) {
            Ok(span) => span.lo < self.m,
            Err(_) => false,
        }
    }
}

/// One capacity doubling: the old root becomes the left child of the new.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Doubling {
    pub old_root: NodeLabel,
    pub new_root: NodeLabel,
}

/// Result of appending one value to the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthPlan {
    pub new_value_count: u64,
    pub doublings: Vec<Doubling>,
}

/// Label of the leaf holding value `v`.
pub fn leaf_label(v: Value) -> NodeLabel {
    NodeLabel::leaf(v)
}

/// Inclusive leaf interval covered by label `n` in a tree of the given
/// capacity (a power of two).
pub fn node_span(n: NodeLabel, capacity: u64) -> Result<Span> {
    if capacity == 0 || !capacity.is_power_of_two() || n.0 > 2 * capacity - 2 {
        return Err(Error::LabelOutOfRange { label: n.0, capacity });
    }
    let height = (n.0 + 1).trailing_zeros();
    let bucket = (n.0 + 1) >> (height + 1);
    let lo = bucket << height;
    Ok(Span { lo, hi: lo + (1 << height) - 1, height })
}

/// Labels from the leaf of `v` up through successive parents to the root.
pub fn path_to_root(v: Value, capacity: u64) -> Result<Vec<NodeLabel>> {
    if capacity == 0 || !capacity.is_power_of_two() || v >= capacity {
        return Err(Error::ValueOutOfRange { value: v, capacity });
    }
    let levels = capacity.trailing_zeros() + 1;
    let mut path = Vec::with_capacity(levels as usize);
    let mut lo = v;
    for h in 0..levels {
        path.push(NodeLabel(2 * lo + (1u64 << h) - 1));
        lo &= !((2u64 << h) - 1); // align down to the parent's block
    }
    Ok(path)
}

/// The unique minimal set of node labels whose spans partition `[a, b]`.
///
/// Every returned node's span lies inside `[a, b]`; callers clamp `b` to
/// `m - 1` first so that every cover node is real.
pub fn minimal_cover(a: Value, b: Value, geo: &TreeGeometry) -> Result<Vec<NodeLabel>> {
    if geo.value_count() == 0 {
        return Err(Error::EmptyTree);
    }
    if a > b {
        return Err(Error::InvalidRange { a, b });
    }
    if b >= geo.value_count() {
        return Err(Error::ValueOutOfRange { value: b, capacity: geo.value_count() });
    }
    let mut cover = Vec::new();
    let mut cur = a;
    while cur <= b {
        // Largest block that starts aligned at `cur` and stays within b.
        let align = if cur == 0 { 63 } else { cur.trailing_zeros() };
        let len = b - cur + 1;
        let fit = 63 - len.leading_zeros(); // floor(log2(len))
        let h = align.min(fit);
        cover.push(NodeLabel(2 * cur + (1u64 << h) - 1));
        cur += 1u64 << h;
    }
    Ok(cover)
}

/// Appends value `v` (which must equal the current value count) and reports
/// whether capacity doubled. Labels of pre-existing nodes are unchanged.
pub fn grow(geo: &TreeGeometry, v: Value) -> Result<GrowthPlan> {
    let m = geo.value_count();
    if v != m {
        return Err(Error::NonAppendGrow { expected: m, got: v });
    }
    let mut doublings = Vec::new();
    let c = geo.capacity();
    if m > 0 && m == c {
        doublings.push(Doubling {
            old_root: NodeLabel(c - 1),
            new_root: NodeLabel(2 * c - 1),
        });
    }
    Ok(GrowthPlan { new_value_count: m + 1, doublings })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pointer-tree reference: builds the virtual perfect tree of the given
    /// capacity as linked nodes, assigns labels by standard in-order
    /// traversal, and answers span/path/cover queries by walking it. Kept
    /// fully independent of the closed-form arithmetic above.
    mod oracle {
        #[derive(Debug)]
        pub struct Node {
            pub label: u64,
            pub lo: u64,
            pub hi: u64,
            pub height: u32,
            pub parent: Option<usize>,
            pub left: Option<usize>,
            pub right: Option<usize>,
        }

        pub struct PointerTree {
            pub nodes: Vec<Node>,
        }

        impl PointerTree {
            pub fn build(capacity: u64) -> Self {
                assert!(capacity.is_power_of_two());
                let mut nodes = Vec::new();
                let root = Self::build_sub(&mut nodes, 0, capacity - 1, None);
                let mut counter = 0;
                Self::assign_in_order(&mut nodes, root, &mut counter);
                PointerTree { nodes }
            }

            fn build_sub(
                nodes: &mut Vec<Node>,
                lo: u64,
                hi: u64,
                parent: Option<usize>,
            ) -> usize {
                let idx = nodes.len();
                let height = (hi - lo + 1).trailing_zeros();
                nodes.push(Node { label: u64::MAX, lo, hi, height, parent, left: None, right: None });
                if lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    let l = Self::build_sub(nodes, lo, mid, Some(idx));
                    let r = Self::build_sub(nodes, mid + 1, hi, Some(idx));
                    nodes[idx].left = Some(l);
                    nodes[idx].right = Some(r);
                }
                idx
            }

            fn assign_in_order(nodes: &mut Vec<Node>, idx: usize, counter: &mut u64) {
                if let Some(l) = nodes[idx].left {
                    Self::assign_in_order(nodes, l, counter);
                }
                nodes[idx].label = *counter;
                *counter += 1;
                if let Some(r) = nodes[idx].right {
                    Self::assign_in_order(nodes, r, counter);
                }
            }

            pub fn by_label(&self, label: u64) -> &Node {
                self.nodes.iter().find(|n| n.label == label).unwrap()
            }

            pub fn leaf_of_value(&self, v: u64) -> &Node {
                self.nodes.iter().find(|n| n.lo == v && n.hi == v).unwrap()
            }

            pub fn path_to_root(&self, v: u64) -> Vec<u64> {
                let mut cur = self
                    .nodes
                    .iter()
                    .position(|n| n.lo == v && n.hi == v)
                    .unwrap();
                let mut path = vec![self.nodes[cur].label];
                while let Some(p) = self.nodes[cur].parent {
                    cur = p;
                    path.push(self.nodes[cur].label);
                }
                path
            }

            /// All nodes whose span fits in [a, b] and whose parent's does not.
            pub fn minimal_cover(&self, a: u64, b: u64) -> Vec<u64> {
                let mut labels: Vec<u64> = self
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(i, n)| {
                        let inside = a <= n.lo && n.hi <= b;
                        let parent_inside = self.nodes[*i]
                            .parent
                            .map(|p| a <= self.nodes[p].lo && self.nodes[p].hi <= b)
                            .unwrap_or(false);
                        inside && !parent_inside
                    })
                    .map(|(_, n)| n.label)
                    .collect();
                labels.sort_unstable();
                labels
            }
        }
    }

    use oracle::PointerTree;

    #[test]
    fn leaf_labels() {
        assert_eq!(leaf_label(2), NodeLabel(4));
        assert_eq!(leaf_label(0), NodeLabel(0));
        // Value 17 in a capacity-32 tree, against the in-order pointer tree.
        let tree = PointerTree::build(32);
        assert_eq!(tree.leaf_of_value(17).label, 34);
        assert_eq!(leaf_label(17), NodeLabel(34));
    }

    #[test]
    fn spans_match_fixtures() {
        assert_eq!(node_span(NodeLabel(3), 4).unwrap(), Span { lo: 0, hi: 3, height: 2 });
        assert_eq!(node_span(NodeLabel(1), 4).unwrap(), Span { lo: 0, hi: 1, height: 1 });
        for v in 0..8 {
            assert_eq!(
                node_span(NodeLabel(2 * v), 8).unwrap(),
                Span { lo: v, hi: v, height: 0 }
            );
        }
        assert!(node_span(NodeLabel(7), 4).is_err());
        assert!(node_span(NodeLabel(0), 0).is_err());
    }

    #[test]
    fn spans_match_pointer_tree() {
        for log_c in 0..7 {
            let c = 1u64 << log_c;
            let tree = PointerTree::build(c);
            for label in 0..2 * c - 1 {
                let node = tree.by_label(label);
                let span = node_span(NodeLabel(label), c).unwrap();
                assert_eq!((span.lo, span.hi, span.height), (node.lo, node.hi, node.height));
            }
        }
    }

    #[test]
    fn paths_match_fixtures() {
        let labels = |p: Vec<NodeLabel>| p.into_iter().map(|n| n.0).collect::<Vec<_>>();
        assert_eq!(labels(path_to_root(0, 4).unwrap()), vec![0, 1, 3]);
        assert_eq!(labels(path_to_root(0, 1).unwrap()), vec![0]);
        // Frozen from the capacity-8 pointer tree.
        let tree = PointerTree::build(8);
        assert_eq!(tree.path_to_root(5), vec![10, 9, 11, 7]);
        assert_eq!(labels(path_to_root(5, 8).unwrap()), vec![10, 9, 11, 7]);
        assert!(path_to_root(4, 4).is_err());
    }

    #[test]
    fn paths_match_pointer_tree() {
        for log_c in 0..7 {
            let c = 1u64 << log_c;
            let tree = PointerTree::build(c);
            for v in 0..c {
                let got: Vec<u64> = path_to_root(v, c).unwrap().iter().map(|n| n.0).collect();
                assert_eq!(got, tree.path_to_root(v));
                assert_eq!(got.len() as u32, c.trailing_zeros() + 1);
            }
        }
    }

    #[test]
    fn cover_fixtures() {
        let geo = TreeGeometry::with_values(4);
        let labels = |c: Vec<NodeLabel>| c.into_iter().map(|n| n.0).collect::<Vec<_>>();
        assert_eq!(labels(minimal_cover(0, 2, &geo).unwrap()), vec![1, 4]);
        assert_eq!(labels(minimal_cover(0, 3, &geo).unwrap()), vec![3]);
        for v in 0..4 {
            assert_eq!(labels(minimal_cover(v, v, &geo).unwrap()), vec![2 * v]);
        }
        assert!(minimal_cover(2, 1, &geo).is_err());
        assert!(minimal_cover(0, 0, &TreeGeometry::empty()).is_err());
    }

    #[test]
    fn cover_matches_oracle_exhaustively() {
        for m in 1..=64u64 {
            let geo = TreeGeometry::with_values(m);
            let tree = PointerTree::build(geo.capacity());
            for a in 0..m {
                for b in a..m {
                    let mut got: Vec<u64> =
                        minimal_cover(a, b, &geo).unwrap().iter().map(|n| n.0).collect();
                    got.sort_unstable();
                    assert_eq!(got, tree.minimal_cover(a, b), "m={m} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn cover_spans_partition_range_and_stay_bounded() {
        for m in 1..=64u64 {
            let geo = TreeGeometry::with_values(m);
            let c = geo.capacity();
            let bound = 2 * c.trailing_zeros().max(1);
            for a in 0..m {
                for b in a..m {
                    let cover = minimal_cover(a, b, &geo).unwrap();
                    assert!(cover.len() as u32 <= bound);
                    let mut expected = a;
                    for n in &cover {
                        let span = node_span(*n, c).unwrap();
                        assert_eq!(span.lo, expected, "gap or overlap at m={m} a={a} b={b}");
                        expected = span.hi + 1;
                    }
                    assert_eq!(expected, b + 1);
                }
            }
        }
    }

    #[test]
    fn path_and_cover_intersect_exactly_once() {
        for m in 1..=64u64 {
            let geo = TreeGeometry::with_values(m);
            let c = geo.capacity();
            for a in 0..m {
                for b in a..m {
                    let cover = minimal_cover(a, b, &geo).unwrap();
                    for v in a..=b {
                        let path = path_to_root(v, c).unwrap();
                        let hits = path.iter().filter(|n| cover.contains(n)).count();
                        assert_eq!(hits, 1, "m={m} a={a} b={b} v={v}");
                    }
                }
            }
        }
    }

    #[test]
    fn labels_stable_under_growth() {
        let mut c = 1u64;
        while c <= 1024 {
            for label in 0..2 * c - 1 {
                let before = node_span(NodeLabel(label), c).unwrap();
                let after = node_span(NodeLabel(label), 2 * c).unwrap();
                assert_eq!(before, after);
            }
            c *= 2;
        }
    }

    #[test]
    fn growth_fixtures() {
        let plan = grow(&TreeGeometry::with_values(4), 4).unwrap();
        assert_eq!(plan.new_value_count, 5);
        assert_eq!(
            plan.doublings,
            vec![Doubling { old_root: NodeLabel(3), new_root: NodeLabel(7) }]
        );

        let plan = grow(&TreeGeometry::empty(), 0).unwrap();
        assert_eq!(plan.new_value_count, 1);
        assert!(plan.doublings.is_empty());

        let plan = grow(&TreeGeometry::with_values(5), 5).unwrap();
        assert_eq!(plan.new_value_count, 6);
        assert!(plan.doublings.is_empty());

        assert!(grow(&TreeGeometry::with_values(5), 7).is_err());
        assert!(grow(&TreeGeometry::with_values(5), 4).is_err());
    }

    #[test]
    fn growth_doubling_sequence_from_empty() {
        let mut geo = TreeGeometry::empty();
        let mut doublings = Vec::new();
        for v in 0..17 {
            let plan = grow(&geo, v).unwrap();
            doublings.extend(plan.doublings.iter().map(|d| (d.old_root.0, d.new_root.0)));
            geo = TreeGeometry::with_values(plan.new_value_count);
        }
        assert_eq!(doublings, vec![(0, 1), (1, 3), (3, 7), (7, 15), (15, 31)]);
        assert_eq!(geo.capacity(), 32);
    }

    #[test]
    fn real_node_count_matches_scan() {
        for m in 1..=128u64 {
            let geo = TreeGeometry::with_values(m);
            let c = geo.capacity();
            let scanned = (0..2 * c - 1)
                .filter(|&label| node_span(NodeLabel(label), c).unwrap().lo < m)
                .count() as u64;
            assert_eq!(geo.real_node_count(), scanned, "m={m}");
        }
        // Worked example: four values, seven keywords.
        assert_eq!(TreeGeometry::with_values(4).real_node_count(), 7);
    }
}
