//! Split trees: the child and element functions that define every legal way
//! of splitting a basis vector, plus their offline construction by recursive
//! k-means clustering of state snapshots.
//!
//! Node ids and dof indices are zero-based in memory; the root is node 0.
//! The text file format is one-based (see [`SplitTree::to_text`]).

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::DenseMatrix;
use crate::kmeans::kmeans;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitTree {
    n_dofs: usize,
    children: Vec<Vec<NodeId>>,
    elements: Vec<Vec<usize>>,
}

/// A broken tree condition, reported with one-based ids to match the file
/// format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Root does not hold every dof.
    RootSupport,
    /// Two children of `node` share an element.
    OverlappingChildren { node: NodeId },
    /// The children of `node` do not cover its element set.
    ChildUnion { node: NodeId },
    /// No childless node holds exactly `{dof}`.
    MissingLeaf { dof: usize },
    /// `node` references a child or dof that does not exist.
    BadReference { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootSupport => write!(f, "root does not contain every element"),
            Violation::OverlappingChildren { node } => {
                write!(f, "children of node {} overlap", node + 1)
            }
            Violation::ChildUnion { node } => {
                write!(f, "children of node {} do not cover its elements", node + 1)
            }
            Violation::MissingLeaf { dof } => write!(f, "no singleton leaf for element {}", dof + 1),
            Violation::BadReference { node } => {
                write!(f, "node {} references a missing node or element", node + 1)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidTree(msgs.join("; ")))
        }
    }
}

impl SplitTree {
    /// Assemble a tree from raw child and element lists. Both lists are
    /// sorted; no condition is checked (see [`SplitTree::validate`]).
    pub fn from_parts(n_dofs: usize, children: Vec<Vec<NodeId>>, elements: Vec<Vec<usize>>) -> Self {
        assert_eq!(children.len(), elements.len(), "one child list per node");
        let children = children
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        let elements = elements
            .into_iter()
            .map(|mut e| {
                e.sort_unstable();
                e
            })
            .collect();
        SplitTree {
            n_dofs,
            children,
            elements,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_nodes(&self) -> usize {
        self.children.len()
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node]
    }

    pub fn elements(&self, node: NodeId) -> &[usize] {
        &self.elements[node]
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.children[node].is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node < self.children.len()
    }

    /// Copy of this tree where `node` has the given subset of its children and
    /// their element union. Used for per-vector trees when children are
    /// grouped into one merged vector.
    pub fn with_merged_node(&self, node: NodeId, group: &[NodeId]) -> SplitTree {
        let mut tree = self.clone();
        let mut kids = group.to_vec();
        kids.sort_unstable();
        let mut elems: Vec<usize> = kids
            .iter()
            .flat_map(|&c| self.elements[c].iter().copied())
            .collect();
        elems.sort_unstable();
        tree.children[node] = kids;
        tree.elements[node] = elems;
        tree
    }

    /// Check the three tree conditions against `n_dofs` degrees of freedom.
    pub fn validate(&self, n_dofs: usize) -> ValidityReport {
        let mut report = ValidityReport::default();
        if self.n_nodes() == 0 {
            report.violations.push(Violation::RootSupport);
            for dof in 0..n_dofs {
                report.violations.push(Violation::MissingLeaf { dof });
            }
            return report;
        }
        if self.elements[0] != (0..n_dofs).collect::<Vec<_>>() {
            report.violations.push(Violation::RootSupport);
        }
        let nodes: Vec<NodeId> = (0..self.n_nodes()).collect();
        self.check_nodes(&nodes, n_dofs, &mut report);
        let targets: Vec<usize> = (0..n_dofs).collect();
        self.check_leaves(&nodes, &targets, &mut report);
        report
    }

    /// Conditions 2 and 3 restricted to the subtree below `root`. Per-vector
    /// trees only guarantee these below their assigned node.
    pub fn validate_subtree(&self, root: NodeId) -> ValidityReport {
        let mut report = ValidityReport::default();
        if !self.contains(root) {
            report.violations.push(Violation::BadReference { node: root });
            return report;
        }
        let mut nodes = Vec::new();
        let mut stack = vec![root];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                report.violations.push(Violation::BadReference { node: n });
                continue;
            }
            nodes.push(n);
            for &c in &self.children[n] {
                if self.contains(c) {
                    stack.push(c);
                } else {
                    report.violations.push(Violation::BadReference { node: n });
                }
            }
        }
        nodes.sort_unstable();
        self.check_nodes(&nodes, self.n_dofs, &mut report);
        let targets = self.elements[root].clone();
        self.check_leaves(&nodes, &targets, &mut report);
        report
    }

    fn check_nodes(&self, nodes: &[NodeId], n_dofs: usize, report: &mut ValidityReport) {
        for &i in nodes {
            if self.elements[i].iter().any(|&e| e >= n_dofs)
                || self.children[i].iter().any(|&c| c >= self.n_nodes() || c == i)
            {
                report.violations.push(Violation::BadReference { node: i });
                continue;
            }
            let kids = &self.children[i];
            if kids.is_empty() {
                continue;
            }
            let mut union = BTreeSet::new();
            let mut overlap = false;
            for &c in kids {
                for &e in &self.elements[c] {
                    if !union.insert(e) {
                        overlap = true;
                    }
                }
            }
            if overlap {
                report.violations.push(Violation::OverlappingChildren { node: i });
            }
            let parent: BTreeSet<usize> = self.elements[i].iter().copied().collect();
            if union != parent {
                report.violations.push(Violation::ChildUnion { node: i });
            }
        }
    }

    fn check_leaves(&self, nodes: &[NodeId], targets: &[usize], report: &mut ValidityReport) {
        let mut has_leaf = vec![false; self.n_dofs.max(targets.iter().map(|t| t + 1).max().unwrap_or(0))];
        for &i in nodes {
            if self.children[i].is_empty() && self.elements[i].len() == 1 {
                let e = self.elements[i][0];
                if e < has_leaf.len() {
                    has_leaf[e] = true;
                }
            }
        }
        for &dof in targets {
            if !has_leaf[dof] {
                report.violations.push(Violation::MissingLeaf { dof });
            }
        }
    }

    /// One line per node: `node_id parent_id e_1 ... e_k`, all one-based,
    /// root parent `0`.
    pub fn to_text(&self) -> String {
        let mut parent = vec![0usize; self.n_nodes()];
        for (i, kids) in self.children.iter().enumerate() {
            for &c in kids {
                parent[c] = i + 1;
            }
        }
        let mut out = String::new();
        for (i, p) in parent.iter().enumerate() {
            out.push_str(&format!("{} {p}", i + 1));
            for e in &self.elements[i] {
                out.push_str(&format!(" {}", e + 1));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the format written by [`SplitTree::to_text`] and re-check the
    /// tree conditions.
    pub fn from_text(text: &str, n_dofs: usize) -> Result<SplitTree> {
        let mut rows: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidTree(format!("line {}: {e}", lineno + 1)))?;
            if nums.len() < 2 || nums[0] == 0 || nums[2..].contains(&0) {
                return Err(Error::InvalidTree(format!("line {}: malformed node record", lineno + 1)));
            }
            rows.push((nums[0] - 1, nums[1], nums[2..].iter().map(|e| e - 1).collect()));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::InvalidTree("node ids must be 1..m without gaps".into()));
        }
        let m = rows.len();
        let mut children = vec![Vec::new(); m];
        let mut elements = Vec::with_capacity(m);
        for (id, parent, elems) in rows {
            if parent > m || parent == id + 1 {
                return Err(Error::InvalidTree(format!("node {} has invalid parent {parent}", id + 1)));
            }
            if parent == 0 && id != 0 {
                return Err(Error::InvalidTree(format!("node {} has no parent", id + 1)));
            }
            if parent > 0 {
                children[parent - 1].push(id);
            }
            elements.push(elems);
        }
        let tree = SplitTree::from_parts(n_dofs, children, elements);
        tree.validate(n_dofs).into_result()?;
        Ok(tree)
    }
}

/// Normalize each row to unit length (zero rows stay zero), then negate rows
/// whose first entry is negative, so correlated and anti-correlated dofs end
/// up close together.
pub fn preprocess_snapshots(w: &DenseMatrix) -> DenseMatrix {
    let mut out = w.clone();
    for i in 0..out.nrows() {
        let norm = out.row(i).norm();
        if norm > 0.0 {
            out.row_mut(i).unscale_mut(norm);
        }
        if out.ncols() > 0 && out[(i, 0)] < 0.0 {
            out.row_mut(i).neg_mut();
        }
    }
    out
}

/// Build a split tree by recursive k-means over the rows of the
/// reference-centered snapshot matrix `w` (`n_dofs x n_obs`).
///
/// Nodes are numbered in creation order, processing each generation of new
/// nodes in ascending id order. A clustering that returns a single cluster
/// turns every element into its own leaf child; single-element nodes are
/// leaves and are never clustered.
pub fn build_tree(w: &DenseMatrix, k: usize, seed: u64) -> Result<SplitTree> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-means needs k >= 2, got {k}")));
    }
    let n_dofs = w.nrows();
    if n_dofs == 0 {
        return Err(Error::InvalidArgument("snapshot matrix has no rows".into()));
    }
    crate::kernels::check_finite(w)?;
    let processed = preprocess_snapshots(w);

    let mut children: Vec<Vec<NodeId>> = vec![Vec::new()];
    let mut elements: Vec<Vec<usize>> = vec![(0..n_dofs).collect()];
    let mut recent: Vec<NodeId> = vec![0];

    while !recent.is_empty() {
        let generation = std::mem::take(&mut recent);
        for node in generation {
            let elems = elements[node].clone();
            if elems.len() <= 1 {
                continue;
            }
            let sub = processed.select_rows(elems.iter());
            let mut sets = kmeans(&sub, k, seed).label_sets;
            if sets.len() == 1 {
                sets = (0..elems.len()).map(|j| vec![j]).collect();
            }
            for set in sets {
                let id = children.len();
                let mut e: Vec<usize> = set.iter().map(|&j| elems[j]).collect();
                e.sort_unstable();
                children.push(Vec::new());
                elements.push(e);
                children[node].push(id);
                recent.push(id);
            }
        }
    }

    Ok(SplitTree::from_parts(n_dofs, children, elements))
}
