//! Refined reduced bases and the splitting operators between a coarse basis
//! and its fine (fully split one level) counterpart.
//!
//! The prolongation `P` is never formed: a fine column knows its parent
//! through [`ChildIndexMap`], and every operation is stated on the induced
//! `{0,1}` matrix.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels::DenseMatrix;
use crate::tree::{NodeId, SplitTree};

/// Basis matrix with one tree node (and one tree handle) per column.
///
/// Columns of a freshly loaded basis sit at the root of a shared tree. The
/// plain refinement keeps sharing that tree; child grouping gives a column
/// its own edited copy.
#[derive(Clone, Debug)]
pub struct RefinedBasis {
    phi: DenseMatrix,
    node_of: Vec<NodeId>,
    tree_of: Vec<Arc<SplitTree>>,
}

impl RefinedBasis {
    /// Every column at the root of `tree`.
    pub fn fresh(phi: DenseMatrix, tree: Arc<SplitTree>) -> Result<Self> {
        let p = phi.ncols();
        Self::new(phi, vec![0; p], vec![tree; p])
    }

    pub fn new(phi: DenseMatrix, node_of: Vec<NodeId>, tree_of: Vec<Arc<SplitTree>>) -> Result<Self> {
        let p = phi.ncols();
        if node_of.len() != p || tree_of.len() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: node_of.len().min(tree_of.len()),
            });
        }
        for (i, (tree, &node)) in tree_of.iter().zip(&node_of).enumerate() {
            if tree.n_dofs() != phi.nrows() {
                return Err(Error::Dimension {
                    expected: phi.nrows(),
                    actual: tree.n_dofs(),
                });
            }
            if !tree.contains(node) {
                return Err(Error::InvalidArgument(format!(
                    "column {i} assigned to missing node {node}"
                )));
            }
        }
        crate::kernels::check_finite(&phi)?;
        Ok(RefinedBasis {
            phi,
            node_of,
            tree_of,
        })
    }

    pub fn phi(&self) -> &DenseMatrix {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_dofs(&self) -> usize {
        self.phi.nrows()
    }

    pub fn node_of(&self) -> &[NodeId] {
        &self.node_of
    }

    pub fn tree_of(&self, i: usize) -> &Arc<SplitTree> {
        &self.tree_of[i]
    }

    pub fn trees(&self) -> &[Arc<SplitTree>] {
        &self.tree_of
    }

    pub fn n_children(&self, i: usize) -> usize {
        self.tree_of[i].children(self.node_of[i]).len()
    }

    /// Columns whose nonzeros fall outside the element set of their node.
    pub fn support_violations(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| {
                let elems = self.tree_of[i].elements(self.node_of[i]);
                let mut allowed = vec![false; self.n_dofs()];
                for &e in elems {
                    allowed[e] = true;
                }
                self.phi
                    .column(i)
                    .iter()
                    .enumerate()
                    .any(|(l, &v)| v != 0.0 && !allowed[l])
            })
            .collect()
    }

    pub(crate) fn into_parts(self) -> (DenseMatrix, Vec<NodeId>, Vec<Arc<SplitTree>>) {
        (self.phi, self.node_of, self.tree_of)
    }
}

/// Bijection `(parent column i, child j) <-> fine column g(i, j)`, with
/// `g(i, j) = sum_{k < i} n_children[k] + j`. Leaf columns own no fine index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChildIndexMap {
    offsets: Vec<usize>,
    parent_of: Vec<usize>,
    child_pos: Vec<usize>,
}

impl ChildIndexMap {
    pub fn from_counts(n_children: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(n_children.len() + 1);
        let mut parent_of = Vec::new();
        let mut child_pos = Vec::new();
        let mut acc = 0;
        for (i, &n) in n_children.iter().enumerate() {
            offsets.push(acc);
            for j in 0..n {
                parent_of.push(i);
                child_pos.push(j);
            }
            acc += n;
        }
        offsets.push(acc);
        ChildIndexMap {
            offsets,
            parent_of,
            child_pos,
        }
    }

    pub fn n_coarse(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_fine(&self) -> usize {
        self.parent_of.len()
    }

    pub fn n_children(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn forward(&self, i: usize, j: usize) -> Option<usize> {
        (j < self.n_children(i)).then(|| self.offsets[i] + j)
    }

    pub fn inverse(&self, k: usize) -> (usize, usize) {
        (self.parent_of[k], self.child_pos[k])
    }

    pub fn fine_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// The `{0,1}` prolongation `P` (fine x coarse) induced by a child map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prolongation {
    map: ChildIndexMap,
}

impl Prolongation {
    pub fn new(map: ChildIndexMap) -> Self {
        Prolongation { map }
    }

    pub fn map(&self) -> &ChildIndexMap {
        &self.map
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut p = DenseMatrix::zeros(self.map.n_fine(), self.map.n_coarse());
        for k in 0..self.map.n_fine() {
            p[(k, self.map.inverse(k).0)] = 1.0;
        }
        p
    }

    /// `P coords`: each fine coordinate copies its parent's.
    pub fn prolong(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        if coords.len() != self.map.n_coarse() {
            return Err(Error::Dimension {
                expected: self.map.n_coarse(),
                actual: coords.len(),
            });
        }
        Ok(DVector::from_fn(self.map.n_fine(), |k, _| {
            coords[self.map.inverse(k).0]
        }))
    }

    /// `P^+ coords_fine`. The columns of `P` are orthogonal, so this is the
    /// mean over each parent's children; leaf parents get zero.
    pub fn restrict(&self, coords_fine: &DVector<f64>) -> Result<DVector<f64>> {
        if coords_fine.len() != self.map.n_fine() {
            return Err(Error::Dimension {
                expected: self.map.n_fine(),
                actual: coords_fine.len(),
            });
        }
        Ok(DVector::from_fn(self.map.n_coarse(), |i, _| {
            let r = self.map.fine_range(i);
            if r.is_empty() {
                0.0
            } else {
                let n = r.len() as f64;
                coords_fine.rows(r.start, r.len()).sum() / n
            }
        }))
    }

    /// `P^T v`: sum of each parent's fine entries.
    pub fn transpose_apply(&self, fine: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.map.n_coarse(), |i, _| {
            let r = self.map.fine_range(i);
            fine.rows(r.start, r.len()).sum()
        })
    }
}

/// Result of splitting every column one level down its tree.
#[derive(Clone, Debug)]
pub struct FineBasis {
    pub phi: DenseMatrix,
    pub prolongation: Prolongation,
    /// Tree node of each fine column (in its parent column's tree).
    pub child_nodes: Vec<NodeId>,
}

impl FineBasis {
    pub fn map(&self) -> &ChildIndexMap {
        self.prolongation.map()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.ncols() == 0
    }
}

/// Split every column into all children of its node: fine column `g(i, j)`
/// is column `i` masked to the elements of the `j`-th child. An all-leaf
/// basis yields an empty fine basis.
pub fn fine_basis(basis: &RefinedBasis) -> FineBasis {
    let counts: Vec<usize> = (0..basis.dim()).map(|i| basis.n_children(i)).collect();
    let map = ChildIndexMap::from_counts(&counts);
    let n = basis.n_dofs();
    let mut phi = DenseMatrix::zeros(n, map.n_fine());
    let mut child_nodes = Vec::with_capacity(map.n_fine());
    for i in 0..basis.dim() {
        let tree = basis.tree_of(i);
        for (j, &child) in tree.children(basis.node_of()[i]).iter().enumerate() {
            let k = map.forward(i, j).expect("child index in range");
            for &l in tree.elements(child) {
                phi[(l, k)] = basis.phi()[(l, i)];
            }
            child_nodes.push(child);
        }
    }
    FineBasis {
        phi,
        prolongation: Prolongation::new(map),
        child_nodes,
    }
}

/// True when every column sits at a leaf and every dof is spanned by some
/// column that is a nonzero multiple of its unit vector.
pub fn is_fully_split(basis: &RefinedBasis) -> bool {
    let all_leaves = (0..basis.dim()).all(|i| basis.tree_of(i).is_leaf(basis.node_of()[i]));
    if !all_leaves {
        return false;
    }
    let mut covered = vec![false; basis.n_dofs()];
    for col in basis.phi().column_iter() {
        let mut nz = col.iter().enumerate().filter(|(_, v)| **v != 0.0);
        if let (Some((l, _)), None) = (nz.next(), nz.next()) {
            covered[l] = true;
        }
    }
    covered.into_iter().all(|c| c)
}
