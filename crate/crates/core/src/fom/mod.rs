//! Full-order models: the per-step residual contract and a Newton solver for
//! marching it in time.

mod burgers;
mod linear;

pub use burgers::{godunov_flux, godunov_flux_derivatives, BurgersConfig, BurgersProblem, SourceLocation};
pub use linear::LinearProblem;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels::{solve_dense, DenseMatrix};

/// Newton tolerance on `||r||_2` for full-order solves.
pub const FOM_NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITERS: usize = 25;
pub const MAX_STEP_HALVINGS: usize = 30;

/// Jacobian `dr/dw` at one state, kept in whatever structure the model has.
#[derive(Clone, Debug)]
pub enum Jacobian {
    Dense(DenseMatrix),
    /// `lower[i] = J[i+1, i]`, `diag[i] = J[i, i]`, `upper[i] = J[i, i+1]`.
    Tridiagonal {
        lower: Vec<f64>,
        diag: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        match self {
            Jacobian::Dense(j) => j.nrows(),
            Jacobian::Tridiagonal { diag, .. } => diag.len(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Jacobian::Dense(j) => j.clone(),
            Jacobian::Tridiagonal { lower, diag, upper } => {
                let n = diag.len();
                let mut j = DenseMatrix::zeros(n, n);
                for i in 0..n {
                    j[(i, i)] = diag[i];
                    if i + 1 < n {
                        j[(i + 1, i)] = lower[i];
                        j[(i, i + 1)] = upper[i];
                    }
                }
                j
            }
        }
    }

    /// `J v` for a block of columns.
    pub fn mul(&self, v: &DenseMatrix) -> DenseMatrix {
        match self {
            Jacobian::Dense(j) => j * v,
            Jacobian::Tridiagonal { lower, diag, upper } => {
                let n = diag.len();
                let mut out = DenseMatrix::zeros(n, v.ncols());
                for c in 0..v.ncols() {
                    for i in 0..n {
                        let mut s = diag[i] * v[(i, c)];
                        if i > 0 {
                            s += lower[i - 1] * v[(i - 1, c)];
                        }
                        if i + 1 < n {
                            s += upper[i] * v[(i + 1, c)];
                        }
                        out[(i, c)] = s;
                    }
                }
                out
            }
        }
    }

    /// `J^T v` for a block of columns.
    pub fn tr_mul(&self, v: &DenseMatrix) -> DenseMatrix {
        match self {
            Jacobian::Dense(j) => j.tr_mul(v),
            Jacobian::Tridiagonal { lower, diag, upper } => {
                let n = diag.len();
                let mut out = DenseMatrix::zeros(n, v.ncols());
                for c in 0..v.ncols() {
                    for i in 0..n {
                        let mut s = diag[i] * v[(i, c)];
                        if i > 0 {
                            s += upper[i - 1] * v[(i - 1, c)];
                        }
                        if i + 1 < n {
                            s += lower[i] * v[(i + 1, c)];
                        }
                        out[(i, c)] = s;
                    }
                }
                out
            }
        }
    }

    pub fn tr_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DenseMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.tr_mul(&m).column(0).into_owned()
    }

    /// Solve `J x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Jacobian::Dense(j) => solve_dense(j, b),
            Jacobian::Tridiagonal { lower, diag, upper } => solve_tridiagonal(lower, diag, upper, b),
        }
    }
}

// Gaussian elimination with partial pivoting on a tridiagonal system; the
// row swaps introduce a second superdiagonal.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = diag.len();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: b.len(),
        });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let scale = diag
        .iter()
        .chain(lower)
        .chain(upper)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Singular);
    }
    let mut d = diag.to_vec();
    let mut du = upper.to_vec();
    du.push(0.0);
    let mut du2 = vec![0.0; n];
    let mut dl = lower.to_vec();
    let mut x: Vec<f64> = b.iter().copied().collect();
    for i in 0..n.saturating_sub(1) {
        if dl[i].abs() > d[i].abs() {
            // swap rows i and i+1
            let (a, bb, c) = (d[i], du[i], du2[i]);
            d[i] = dl[i];
            du[i] = d[i + 1];
            du2[i] = du[i + 1];
            dl[i] = a;
            d[i + 1] = bb;
            du[i + 1] = c;
            x.swap(i, i + 1);
        }
        let m = dl[i] / d[i];
        d[i + 1] -= m * du[i];
        du[i + 1] -= m * du2[i];
        x[i + 1] -= m * x[i];
    }
    let tiny = scale * f64::EPSILON * n as f64;
    if d.iter().any(|v| v.abs() <= tiny) {
        return Err(Error::Singular);
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        if i + 1 < n {
            s -= du[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= du2[i] * x[i + 2];
        }
        x[i] = s / d[i];
    }
    Ok(DVector::from_vec(x))
}

/// A parameterized sequence of per-step systems `r^n(w^n; w^{n-1}) = 0` with a
/// scalar output per step. The parameter instance is fixed when the problem
/// is constructed.
///
/// The default output is the squared residual norm.
pub trait FomProblem: Sync {
    fn n_dofs(&self) -> usize;

    fn n_steps(&self) -> usize;

    fn initial_state(&self) -> DVector<f64>;

    fn residual(&self, step: usize, w: &DVector<f64>, w_prev: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, step: usize, w: &DVector<f64>, w_prev: &DVector<f64>) -> Jacobian;

    fn output(&self, step: usize, w: &DVector<f64>, w_prev: &DVector<f64>) -> f64 {
        self.residual(step, w, w_prev).norm_squared()
    }

    /// `(dg/dw)^T`, with the Jacobian at the same state supplied by the caller.
    fn output_gradient_with(
        &self,
        step: usize,
        w: &DVector<f64>,
        w_prev: &DVector<f64>,
        jac: &Jacobian,
    ) -> DVector<f64> {
        let r = self.residual(step, w, w_prev);
        jac.tr_mul_vec(&r) * 2.0
    }

    fn output_gradient(&self, step: usize, w: &DVector<f64>, w_prev: &DVector<f64>) -> DVector<f64> {
        let jac = self.jacobian(step, w, w_prev);
        self.output_gradient_with(step, w, w_prev, &jac)
    }
}

/// Full-order trajectory, one column per time level `w^0 .. w^{n_t}`.
pub type Trajectory = DenseMatrix;

/// Newton solve of one step from `guess`, halving the step while the
/// residual norm grows.
pub fn newton_step<P: FomProblem + ?Sized>(
    problem: &P,
    step: usize,
    w_prev: &DVector<f64>,
    guess: DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let mut w = guess;
    let mut r = problem.residual(step, &w, w_prev);
    let mut rnorm = r.norm();
    for _ in 0..NEWTON_MAX_ITERS {
        if rnorm <= tol {
            return Ok(w);
        }
        let jac = problem.jacobian(step, &w, w_prev);
        let delta = jac.solve(&(-&r))?;
        let mut lambda = 1.0;
        let mut trial = &w + &delta;
        let mut r_trial = problem.residual(step, &trial, w_prev);
        let mut halvings = 0;
        while !(r_trial.norm() <= rnorm) && halvings < MAX_STEP_HALVINGS {
            lambda *= 0.5;
            trial = &w + &delta * lambda;
            r_trial = problem.residual(step, &trial, w_prev);
            halvings += 1;
        }
        w = trial;
        r = r_trial;
        rnorm = r.norm();
    }
    if rnorm <= tol {
        Ok(w)
    } else {
        Err(Error::NewtonFailed {
            step,
            residual_norm: rnorm,
        })
    }
}

/// March the full-order model over all steps, warm-starting each Newton
/// solve from the previous state.
pub fn solve_fom<P: FomProblem + ?Sized>(problem: &P, n_steps: usize) -> Result<Trajectory> {
    let w0 = problem.initial_state();
    let n = w0.len();
    let mut traj = DenseMatrix::zeros(n, n_steps + 1);
    traj.set_column(0, &w0);
    let mut prev = w0;
    for step in 1..=n_steps {
        let w = newton_step(problem, step, &prev, prev.clone(), FOM_NEWTON_TOL)?;
        traj.set_column(step, &w);
        prev = w;
    }
    Ok(traj)
}
