use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::DenseMatrix;

/// Summary of one online run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub relative_error: f64,
    pub avg_basis_dim: f64,
    pub avg_refine_calls: f64,
    /// Informational only.
    pub online_time_s: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "relative_error,avg_basis_dim,avg_refine_calls,online_time_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.9e},{:.6},{:.6},{:.3}",
            self.relative_error, self.avg_basis_dim, self.avg_refine_calls, self.online_time_s
        )
    }
}

/// `(1/nt) sum_{n=1..nt} |u_fom^n - u_rom^n| / |u_fom^n|` over the columns
/// after the initial state.
pub fn relative_error(fom: &DenseMatrix, rom: &DenseMatrix) -> Result<f64> {
    if fom.shape() != rom.shape() {
        return Err(Error::InvalidArgument(format!(
            "trajectory shapes differ: {:?} vs {:?}",
            fom.shape(),
            rom.shape()
        )));
    }
    let nt = fom.ncols().saturating_sub(1);
    if nt == 0 {
        return Err(Error::InvalidArgument("trajectories need at least one step after the initial state".into()));
    }
    let mut sum = 0.0;
    for n in 1..=nt {
        let reference = fom.column(n).norm();
        if reference == 0.0 {
            return Err(Error::InvalidArgument(format!("reference state at step {n} is zero")));
        }
        sum += (fom.column(n) - rom.column(n)).norm() / reference;
    }
    Ok(sum / nt as f64)
}

/// Cell index of the steepest downward jump `w_i - w_{i+1}`, i.e. the left
/// cell of a right-moving shock.
pub fn shock_front(state: &[f64]) -> usize {
    state
        .windows(2)
        .enumerate()
        .max_by(|(_, a), (_, b)| (a[0] - a[1]).total_cmp(&(b[0] - b[1])))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
