//! Online adaptive h-refinement: marking, the two splitting variants, rank
//! repair and the per-step controller.

use std::sync::Arc;
use std::time::Duration;

use log::debug;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dwr::{compute_indicators, indicator_csv_rows, ErrorIndicators, IndicatorReport};
use crate::error::{Error, Result};
use crate::fom::FomProblem;
use crate::kernels::{pseudoinverse_apply, qr_column_pivot, DenseMatrix, DEFAULT_RANK_TOL};
use crate::rom::{solve_rom_step, RomStepSolution};
use crate::splitting::{is_fully_split, RefinedBasis};
use crate::tree::{NodeId, SplitTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineVariant {
    /// Split every marked vector into all of its children.
    Plain,
    /// Pack children into error-balanced groups, editing per-vector trees.
    #[default]
    ChildGrouping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub rom_tol: f64,
    /// Reduced tolerance for runs without adaptivity.
    pub baseline_rom_tol: f64,
    pub fom_tol: f64,
    pub reset_freq: usize,
    pub k_means: usize,
    pub partition_fraction: f64,
    pub rank_tol: f64,
    pub max_refine_rounds: usize,
    pub variant: RefineVariant,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            rom_tol: 5e-3,
            baseline_rom_tol: 1e-5,
            fom_tol: 0.05,
            reset_freq: 50,
            k_means: 10,
            partition_fraction: 0.5,
            rank_tol: DEFAULT_RANK_TOL,
            max_refine_rounds: 50,
            variant: RefineVariant::ChildGrouping,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rom_tol > 0.0) || !(self.baseline_rom_tol > 0.0) || !(self.fom_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.partition_fraction > 0.0 && self.partition_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "partition_fraction must lie in (0, 1], got {}",
                self.partition_fraction
            )));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::Config(format!("rank_tol must lie in (0, 1), got {}", self.rank_tol)));
        }
        if self.reset_freq == 0 {
            return Err(Error::Config("reset_freq must be at least 1".into()));
        }
        if self.k_means < 2 {
            return Err(Error::Config("k_means must be at least 2".into()));
        }
        Ok(())
    }
}

/// Online cost accounting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaptStats {
    /// Sum over Newton iterations of the basis dimension used.
    pub basis_dim_sum: u64,
    pub newton_iters: u64,
    pub refine_calls: u64,
    pub steps: u64,
    pub wall_time: Duration,
}

impl AdaptStats {
    pub fn record_newton(&mut self, basis_dim: usize, iters: usize) {
        self.basis_dim_sum += (basis_dim * iters) as u64;
        self.newton_iters += iters as u64;
    }

    pub fn avg_basis_dim(&self) -> f64 {
        if self.newton_iters == 0 {
            0.0
        } else {
            self.basis_dim_sum as f64 / self.newton_iters as f64
        }
    }

    pub fn avg_refine_calls(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.refine_calls as f64 / self.steps as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineEvent {
    pub step: usize,
    pub round: usize,
    pub dim_before: usize,
    pub dim_after: usize,
    pub n_marked: usize,
    pub full_residual_norm: f64,
}

impl RefineEvent {
    pub const CSV_HEADER: &'static str = "step,round,dim_before,dim_after,n_marked,full_residual_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.17e}",
            self.step, self.round, self.dim_before, self.dim_after, self.n_marked, self.full_residual_norm
        )
    }
}

/// Optional diagnostics collected by [`adapt_step`].
#[derive(Clone, Debug, Default)]
pub struct AdaptLog {
    pub events: Vec<RefineEvent>,
    /// Filled only when `Some`; rows as produced by [`indicator_csv_rows`].
    pub indicator_rows: Option<Vec<String>>,
}

/// Columns whose children carry at least the average error,
/// `{i : sum_j e_ij >= (1/p) sum_kj e_kj}` with `p` the number of coarse
/// columns (ties within rounding count as marked).
///
/// When every indicator is zero the rule marks nothing, so the splittable
/// column with the largest `|phi_i^T rbar|` is returned instead.
pub fn mark_vectors(indicators: &ErrorIndicators, coarse_residual_projection: &DVector<f64>) -> Vec<usize> {
    let p = indicators.map().n_coarse();
    let sums = indicators.parent_sums();
    let total: f64 = sums.iter().sum();
    if total > 0.0 {
        let slack = 1.0 - 1e-12;
        return (0..p).filter(|&i| sums[i] * p as f64 >= total * slack).collect();
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..p {
        if indicators.map().n_children(i) == 0 {
            continue;
        }
        let v = coarse_residual_projection[i].abs();
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| vec![i]).unwrap_or_default()
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub basis: RefinedBasis,
    pub marked: Vec<usize>,
    /// False when no marked vector could be split.
    pub changed: bool,
}

struct Columns {
    phi: Vec<DVector<f64>>,
    nodes: Vec<NodeId>,
    trees: Vec<Arc<SplitTree>>,
}

impl Columns {
    fn from_basis(basis: &RefinedBasis) -> Self {
        let (phi, nodes, trees) = basis.clone().into_parts();
        Columns {
            phi: phi.column_iter().map(|c| c.into_owned()).collect(),
            nodes,
            trees,
        }
    }

    fn set(&mut self, slot: usize, col: DVector<f64>, node: NodeId, tree: Arc<SplitTree>) {
        self.phi[slot] = col;
        self.nodes[slot] = node;
        self.trees[slot] = tree;
    }

    fn push(&mut self, col: DVector<f64>, node: NodeId, tree: Arc<SplitTree>) {
        self.phi.push(col);
        self.nodes.push(node);
        self.trees.push(tree);
    }

    /// Keep the leading `rank` columns in pivot order of a column-pivoted QR,
    /// carrying nodes and trees along. Columns keep their original scale.
    fn rank_repair(self, n_dofs: usize, rank_tol: f64) -> Result<RefinedBasis> {
        let phi = if self.phi.is_empty() {
            DenseMatrix::zeros(n_dofs, 0)
        } else {
            DenseMatrix::from_columns(&self.phi)
        };
        let qr = qr_column_pivot(&phi, rank_tol)?;
        let keep = &qr.permutation[..qr.numerical_rank];
        let kept = phi.select_columns(keep.iter());
        let nodes = keep.iter().map(|&j| self.nodes[j]).collect();
        let trees = keep.iter().map(|&j| self.trees[j].clone()).collect();
        RefinedBasis::new(kept, nodes, trees)
    }
}

/// Split each marked vector into all children of its node. The first child
/// takes the parent's slot, the rest are appended; then rank repair.
pub fn refine_plain(basis: &RefinedBasis, report: &IndicatorReport, rank_tol: f64) -> Result<RefineOutcome> {
    let marked = mark_vectors(&report.indicators, &report.coarse_residual_projection);
    let map = report.fine.map();
    let mut cols = Columns::from_basis(basis);
    let mut changed = false;
    for &i in &marked {
        let range = map.fine_range(i);
        if range.is_empty() {
            continue;
        }
        changed = true;
        let tree = basis.tree_of(i).clone();
        for (j, k) in range.enumerate() {
            let col = report.fine.phi.column(k).into_owned();
            let node = report.fine.child_nodes[k];
            if j == 0 {
                cols.set(i, col, node, tree.clone());
            } else {
                cols.push(col, node, tree.clone());
            }
        }
    }
    let refined = cols.rank_repair(basis.n_dofs(), rank_tol)?;
    Ok(RefineOutcome {
        basis: refined,
        marked,
        changed,
    })
}

/// Partition children `0..errors.len()` into groups. Each group is a
/// smallest set of remaining children whose error reaches
/// `fraction * sum(errors)`; once no such set exists the remainder forms the
/// last group.
pub fn group_children(errors: &[f64], fraction: f64) -> Vec<Vec<usize>> {
    let total: f64 = errors.iter().sum();
    let threshold = fraction * total;
    let mut remaining: Vec<usize> = (0..errors.len()).collect();
    // largest errors first; a prefix of this order is a minimum-cardinality
    // qualifying set
    remaining.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    let mut groups = Vec::new();
    while !remaining.is_empty() {
        let mut acc = 0.0;
        let mut take = None;
        for (n, &j) in remaining.iter().enumerate() {
            acc += errors[j];
            if acc >= threshold {
                take = Some(n + 1);
                break;
            }
        }
        let n = take.unwrap_or(remaining.len());
        let mut group: Vec<usize> = remaining.drain(..n).collect();
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// Child-grouping refinement. Each marked vector's children are packed by
/// [`group_children`]; a singleton group descends to that child, a larger
/// group becomes a merged node in a private copy of the vector's tree and its
/// column is the sum of the group's fine columns. A first group holding every
/// child would reproduce the parent, so that vector is left untouched.
pub fn refine_child_grouping(
    basis: &RefinedBasis,
    report: &IndicatorReport,
    partition_fraction: f64,
    rank_tol: f64,
) -> Result<RefineOutcome> {
    if !(partition_fraction > 0.0 && partition_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "partition fraction must lie in (0, 1], got {partition_fraction}"
        )));
    }
    let marked = mark_vectors(&report.indicators, &report.coarse_residual_projection);
    let map = report.fine.map();
    let mut cols = Columns::from_basis(basis);
    let mut changed = false;
    for &i in &marked {
        let range = map.fine_range(i);
        if range.is_empty() {
            continue;
        }
        let errors = report.indicators.children_of(i);
        let groups = group_children(errors, partition_fraction);
        if groups.len() == 1 {
            continue;
        }
        changed = true;
        let tree = basis.tree_of(i);
        let node = basis.node_of()[i];
        for (g, group) in groups.iter().enumerate() {
            let mut col = DVector::zeros(basis.n_dofs());
            for &j in group {
                col += report.fine.phi.column(range.start + j);
            }
            let (new_node, new_tree) = if group.len() == 1 {
                (report.fine.child_nodes[range.start + group[0]], tree.clone())
            } else {
                let kids: Vec<NodeId> = group.iter().map(|&j| report.fine.child_nodes[range.start + j]).collect();
                (node, Arc::new(tree.with_merged_node(node, &kids)))
            };
            if g == 0 {
                cols.set(i, col, new_node, new_tree);
            } else {
                cols.push(col, new_node, new_tree);
            }
        }
    }
    let refined = cols.rank_repair(basis.n_dofs(), rank_tol)?;
    Ok(RefineOutcome {
        basis: refined,
        marked,
        changed,
    })
}

/// Coordinates in `new_phi` reproducing `old_phi * old_coords` (exact when the
/// new span contains the old one).
pub fn transfer_coords(old_phi: &DenseMatrix, old_coords: &DVector<f64>, new_phi: &DenseMatrix) -> Result<DVector<f64>> {
    pseudoinverse_apply(new_phi, &(old_phi * old_coords))
}

#[derive(Clone, Debug)]
pub struct AdaptStepOutput {
    /// Basis to carry into the next step (the initial basis after a reset).
    pub basis: RefinedBasis,
    pub solution: RomStepSolution,
    /// Warm start for the next step, expressed in `basis`.
    pub next_coords: DVector<f64>,
    pub refine_rounds: usize,
    pub was_reset: bool,
}

/// One time step of the adaptive ROM: solve, and while the full residual
/// exceeds `fom_tol`, compute DWR indicators, refine and re-solve from the
/// transferred coordinates. Stops early once no vector can be split. Resets
/// to `initial` after the step when `step` is a multiple of `reset_freq`.
#[allow(clippy::too_many_arguments)]
pub fn adapt_step<P: FomProblem + ?Sized>(
    fom: &P,
    step: usize,
    basis: RefinedBasis,
    initial: &RefinedBasis,
    w_ref: &DVector<f64>,
    w_prev: &DVector<f64>,
    coords_init: &DVector<f64>,
    cfg: &AdaptConfig,
    stats: &mut AdaptStats,
    log: &mut AdaptLog,
) -> Result<AdaptStepOutput> {
    let mut basis = basis;
    let mut coords = coords_init.clone();
    let mut rounds = 0;
    let solution = loop {
        let sol = solve_rom_step(fom, step, &basis, w_ref, w_prev, &coords, cfg.rom_tol)?;
        stats.record_newton(basis.dim(), sol.newton_iters);
        if sol.full_residual_norm <= cfg.fom_tol {
            break sol;
        }

        let report = compute_indicators(fom, step, &basis, w_ref, w_prev, &sol.coords)?;
        if report.fine.is_empty() {
            break polish(fom, step, &basis, w_ref, w_prev, sol, cfg, stats)?;
        }
        if rounds >= cfg.max_refine_rounds {
            return Err(Error::RefineLimit {
                step,
                rounds,
                residual_norm: sol.full_residual_norm,
                basis_dim: basis.dim(),
            });
        }
        if let Some(rows) = log.indicator_rows.as_mut() {
            rows.extend(indicator_csv_rows(step, rounds + 1, &report.indicators));
        }

        let mut outcome = match cfg.variant {
            RefineVariant::Plain => refine_plain(&basis, &report, cfg.rank_tol)?,
            RefineVariant::ChildGrouping => {
                refine_child_grouping(&basis, &report, cfg.partition_fraction, cfg.rank_tol)?
            }
        };
        if !outcome.changed && cfg.variant == RefineVariant::ChildGrouping {
            outcome = refine_plain(&basis, &report, cfg.rank_tol)?;
        }
        if !outcome.changed {
            break polish(fom, step, &basis, w_ref, w_prev, sol, cfg, stats)?;
        }
        rounds += 1;
        stats.refine_calls += 1;
        log.events.push(RefineEvent {
            step,
            round: rounds,
            dim_before: basis.dim(),
            dim_after: outcome.basis.dim(),
            n_marked: outcome.marked.len(),
            full_residual_norm: sol.full_residual_norm,
        });
        debug!(
            "step {step} round {rounds}: dim {} -> {}, residual {:.3e}",
            basis.dim(),
            outcome.basis.dim(),
            sol.full_residual_norm
        );
        coords = transfer_coords(basis.phi(), &sol.coords, outcome.basis.phi())?;
        basis = outcome.basis;
    };
    stats.steps += 1;

    let was_reset = step.is_multiple_of(cfg.reset_freq);
    let (basis, next_coords) = if was_reset {
        let shifted = &solution.state - w_ref;
        let c = pseudoinverse_apply(initial.phi(), &shifted)?;
        (initial.clone(), c)
    } else {
        let c = solution.coords.clone();
        (basis, c)
    };
    Ok(AdaptStepOutput {
        basis,
        solution,
        next_coords,
        refine_rounds: rounds,
        was_reset,
    })
}

// Nothing left to split. A fully split basis reproduces the full-order
// model, so tighten the reduced tolerance until the full residual target is
// implied (||Phi^T r|| >= min column norm * ||r|| for a scaled identity).
#[allow(clippy::too_many_arguments)]
fn polish<P: FomProblem + ?Sized>(
    fom: &P,
    step: usize,
    basis: &RefinedBasis,
    w_ref: &DVector<f64>,
    w_prev: &DVector<f64>,
    sol: RomStepSolution,
    cfg: &AdaptConfig,
    stats: &mut AdaptStats,
) -> Result<RomStepSolution> {
    if !is_fully_split(basis) {
        return Ok(sol);
    }
    let min_norm = basis
        .phi()
        .column_iter()
        .map(|c| c.norm())
        .fold(f64::INFINITY, f64::min);
    let tol = (0.1 * cfg.fom_tol * min_norm).clamp(1e-14, cfg.rom_tol);
    let tight = solve_rom_step(fom, step, basis, w_ref, w_prev, &sol.coords, tol)?;
    stats.record_newton(basis.dim(), tight.newton_iters);
    Ok(tight)
}
