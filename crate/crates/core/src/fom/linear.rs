use nalgebra::DVector;

use super::{FomProblem, Jacobian};
use crate::kernels::DenseMatrix;

/// Stationary linear system `r(w) = b - A w`, optionally with a linear output
/// `g(w) = c^T w`. Without `c` the output is the squared residual norm.
///
/// The Jacobian is `-A`; Galerkin reductions of symmetric positive-definite
/// `A` minimize the `A`-norm error.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    a: DenseMatrix,
    b: DVector<f64>,
    output_weights: Option<DVector<f64>>,
    n_steps: usize,
}

impl LinearProblem {
    pub fn new(a: DenseMatrix, b: DVector<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == b.len(), "A must be square and match b");
        LinearProblem {
            a,
            b,
            output_weights: None,
            n_steps: 1,
        }
    }

    pub fn with_linear_output(mut self, c: DVector<f64>) -> Self {
        assert_eq!(c.len(), self.b.len());
        self.output_weights = Some(c);
        self
    }

    pub fn with_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }
}

impl FomProblem for LinearProblem {
    fn n_dofs(&self) -> usize {
        self.b.len()
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(self.b.len())
    }

    fn residual(&self, _step: usize, w: &DVector<f64>, _w_prev: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * w
    }

    fn jacobian(&self, _step: usize, _w: &DVector<f64>, _w_prev: &DVector<f64>) -> Jacobian {
        Jacobian::Dense(-&self.a)
    }

    fn output(&self, step: usize, w: &DVector<f64>, w_prev: &DVector<f64>) -> f64 {
        match &self.output_weights {
            Some(c) => c.dot(w),
            None => self.residual(step, w, w_prev).norm_squared(),
        }
    }

    fn output_gradient_with(
        &self,
        step: usize,
        w: &DVector<f64>,
        w_prev: &DVector<f64>,
        jac: &Jacobian,
    ) -> DVector<f64> {
        match &self.output_weights {
            Some(c) => c.clone(),
            None => jac.tr_mul_vec(&self.residual(step, w, w_prev)) * 2.0,
        }
    }
}
