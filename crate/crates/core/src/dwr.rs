//! Dual-weighted residual indicators for basis splitting.
//!
//! The coarse adjoint `y_c` solves `Phi^T J^T Phi y_c = Phi^T (dg/dw)^T` at
//! the coarse solution; its prolongation `P y_c` stands in for the fine
//! adjoint, and fine column `k` gets the indicator
//! `e_k = |(P y_c)_k phi_f,k^T rbar|`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fom::{FomProblem, Jacobian};
use crate::kernels::{inverse_column_norms, solve_scaled, DenseMatrix};
use crate::rom::reconstruct;
use crate::splitting::{fine_basis, ChildIndexMap, FineBasis, Prolongation, RefinedBasis};

#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub coarse: DVector<f64>,
    pub prolonged: DVector<f64>,
}

/// Nonnegative indicators, one per fine column, addressable by
/// `(parent, child)` through the child map.
#[derive(Clone, Debug)]
pub struct ErrorIndicators {
    flat: DVector<f64>,
    map: ChildIndexMap,
}

impl ErrorIndicators {
    pub fn new(flat: DVector<f64>, map: ChildIndexMap) -> Result<Self> {
        if flat.len() != map.n_fine() {
            return Err(Error::Dimension {
                expected: map.n_fine(),
                actual: flat.len(),
            });
        }
        if flat.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::InvalidArgument("indicators must be nonnegative".into()));
        }
        Ok(ErrorIndicators { flat, map })
    }

    pub fn flat(&self) -> &DVector<f64> {
        &self.flat
    }

    pub fn map(&self) -> &ChildIndexMap {
        &self.map
    }

    pub fn get(&self, parent: usize, child: usize) -> Option<f64> {
        self.map.forward(parent, child).map(|k| self.flat[k])
    }

    /// Indicators of the children of coarse column `parent`.
    pub fn children_of(&self, parent: usize) -> &[f64] {
        let r = self.map.fine_range(parent);
        &self.flat.as_slice()[r]
    }

    /// `sum_j e_ij` for every coarse column.
    pub fn parent_sums(&self) -> Vec<f64> {
        (0..self.map.n_coarse())
            .map(|i| self.children_of(i).iter().sum())
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.flat.sum()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }
}

/// Everything one refinement attempt needs from the current coarse solution.
#[derive(Clone, Debug)]
pub struct IndicatorReport {
    pub indicators: ErrorIndicators,
    pub fine: FineBasis,
    /// `None` when the reduced adjoint system was singular.
    pub adjoint: Option<AdjointSolution>,
    /// `Phi_f^T rbar`.
    pub fine_residual_projection: DVector<f64>,
    /// `Phi^T rbar`.
    pub coarse_residual_projection: DVector<f64>,
}

/// Solve the coarse adjoint system with a Jacobian already evaluated at the
/// coarse state. Near-dependent columns yield the minimum-norm solution.
pub fn coarse_adjoint(
    phi: &DenseMatrix,
    jac: &Jacobian,
    output_gradient: &DVector<f64>,
    prolongation: &Prolongation,
) -> Result<AdjointSolution> {
    // (Phi^T J Phi)^T = Phi^T J^T Phi
    let lhs = phi.tr_mul(&jac.mul(phi)).transpose();
    let rhs = phi.tr_mul(output_gradient);
    let coarse = if rhs.iter().all(|&v| v == 0.0) {
        DVector::zeros(phi.ncols())
    } else {
        solve_scaled(&lhs, &rhs, &inverse_column_norms(phi))?
    };
    let prolonged = prolongation.prolong(&coarse)?;
    Ok(AdjointSolution { coarse, prolonged })
}

/// Coarse adjoint at `w_ref + Phi coords` for the problem's output.
pub fn solve_coarse_adjoint<P: FomProblem + ?Sized>(
    fom: &P,
    step: usize,
    basis: &RefinedBasis,
    w_ref: &DVector<f64>,
    w_prev: &DVector<f64>,
    coords: &DVector<f64>,
) -> Result<AdjointSolution> {
    let w = reconstruct(basis.phi(), w_ref, coords);
    let jac = fom.jacobian(step, &w, w_prev);
    let grad = fom.output_gradient_with(step, &w, w_prev, &jac);
    let fine = fine_basis(basis);
    coarse_adjoint(basis.phi(), &jac, &grad, &fine.prolongation)
}

/// Build the fine basis and the DWR indicator of every fine column.
///
/// A singular adjoint system is not an error here: the report carries
/// `adjoint: None` and all-zero indicators, which leaves the choice of what
/// to split to the caller's fallback.
pub fn compute_indicators<P: FomProblem + ?Sized>(
    fom: &P,
    step: usize,
    basis: &RefinedBasis,
    w_ref: &DVector<f64>,
    w_prev: &DVector<f64>,
    coords: &DVector<f64>,
) -> Result<IndicatorReport> {
    let w = reconstruct(basis.phi(), w_ref, coords);
    let rbar = fom.residual(step, &w, w_prev);
    let fine = fine_basis(basis);
    let fine_proj = fine.phi.tr_mul(&rbar);
    let coarse_proj = basis.phi().tr_mul(&rbar);

    if fine.is_empty() {
        let indicators = ErrorIndicators::new(DVector::zeros(0), fine.map().clone())?;
        return Ok(IndicatorReport {
            indicators,
            fine,
            adjoint: None,
            fine_residual_projection: fine_proj,
            coarse_residual_projection: coarse_proj,
        });
    }

    let jac = fom.jacobian(step, &w, w_prev);
    let grad = fom.output_gradient_with(step, &w, w_prev, &jac);
    let adjoint = match coarse_adjoint(basis.phi(), &jac, &grad, &fine.prolongation) {
        Ok(a) => Some(a),
        Err(Error::Singular) => None,
        Err(e) => return Err(e),
    };
    let flat = match &adjoint {
        Some(a) => a.prolonged.component_mul(&fine_proj).abs(),
        None => DVector::zeros(fine.phi.ncols()),
    };
    let indicators = ErrorIndicators::new(flat, fine.map().clone())?;
    Ok(IndicatorReport {
        indicators,
        fine,
        adjoint,
        fine_residual_projection: fine_proj,
        coarse_residual_projection: coarse_proj,
    })
}

pub const INDICATOR_CSV_HEADER: &str = "step,attempt,fine_index,parent,child,indicator";

/// CSV rows matching [`INDICATOR_CSV_HEADER`], indices one-based.
pub fn indicator_csv_rows(step: usize, attempt: usize, indicators: &ErrorIndicators) -> Vec<String> {
    (0..indicators.flat().len())
        .map(|k| {
            let (i, j) = indicators.map().inverse(k);
            format!(
                "{step},{attempt},{},{},{},{:.17e}",
                k + 1,
                i + 1,
                j + 1,
                indicators.flat()[k]
            )
        })
        .collect()
}
