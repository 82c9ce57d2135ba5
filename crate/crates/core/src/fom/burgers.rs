//! Parameterized inviscid Burgers equation on `[0, L]`,
//! `u_t + (u^2/2)_x = a e^{mu2 x}`, inflow `u(0, t) = mu1`, `u(x, 0) = 1`,
//! discretized with Godunov fluxes and backward Euler.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{FomProblem, Jacobian};
use crate::error::{Error, Result};

/// Where the source term is sampled in each cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLocation {
    /// `x_i = (i - 1/2) dx`
    #[default]
    CellCenter,
    /// `x_i = i dx`
    Node,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersConfig {
    pub n_cells: usize,
    pub domain_length: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Amplitude `a` of the source `a e^{mu2 x}`.
    pub source_coefficient: f64,
    pub source_location: SourceLocation,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            n_cells: 250,
            domain_length: 100.0,
            dt: 0.05,
            n_steps: 1000,
            source_coefficient: 0.02,
            source_location: SourceLocation::CellCenter,
        }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 2 {
            return Err(Error::Config(format!("n_cells must be >= 2, got {}", self.n_cells)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::Config(format!(
                "domain_length must be positive, got {}",
                self.domain_length
            )));
        }
        if !self.source_coefficient.is_finite() {
            return Err(Error::Config("source_coefficient must be finite".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.n_cells as f64
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells)
            .map(|i| match self.source_location {
                SourceLocation::CellCenter => (i as f64 + 0.5) * dx,
                SourceLocation::Node => (i as f64 + 1.0) * dx,
            })
            .collect()
    }
}

fn flux(u: f64) -> f64 {
    0.5 * u * u
}

/// Exact Riemann flux for `f(u) = u^2/2`.
pub fn godunov_flux(u_left: f64, u_right: f64) -> f64 {
    godunov_flux_derivatives(u_left, u_right).0
}

/// Godunov flux and its partial derivatives with respect to the left and
/// right states. Where the flux is not differentiable the left-state branch
/// is used.
pub fn godunov_flux_derivatives(u_left: f64, u_right: f64) -> (f64, f64, f64) {
    if u_left <= u_right {
        // min of f over [u_left, u_right]
        if u_left >= 0.0 {
            (flux(u_left), u_left, 0.0)
        } else if u_right <= 0.0 {
            (flux(u_right), 0.0, u_right)
        } else {
            (0.0, 0.0, 0.0)
        }
    } else if u_left + u_right >= 0.0 {
        // max of f over [u_right, u_left]
        (flux(u_left), u_left, 0.0)
    } else {
        (flux(u_right), 0.0, u_right)
    }
}

/// One Burgers instance `(mu1, mu2)` on a fixed grid.
#[derive(Clone, Debug)]
pub struct BurgersProblem {
    config: BurgersConfig,
    mu1: f64,
    source: Vec<f64>,
}

impl BurgersProblem {
    pub fn new(config: BurgersConfig, mu: [f64; 2]) -> Result<Self> {
        config.validate()?;
        let source = config
            .coordinates()
            .into_iter()
            .map(|x| config.source_coefficient * (mu[1] * x).exp())
            .collect();
        Ok(BurgersProblem {
            config,
            mu1: mu[0],
            source,
        })
    }

    pub fn config(&self) -> &BurgersConfig {
        &self.config
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Interface fluxes `F_{1/2} .. F_{N+1/2}` with their partials.
    fn interface_fluxes(&self, w: &DVector<f64>) -> Vec<(f64, f64, f64)> {
        let n = w.len();
        let mut out = Vec::with_capacity(n + 1);
        out.push(godunov_flux_derivatives(self.mu1, w[0]));
        for i in 0..n - 1 {
            out.push(godunov_flux_derivatives(w[i], w[i + 1]));
        }
        out.push((flux(w[n - 1]), w[n - 1], 0.0));
        out
    }

    /// Inflow and outflow boundary fluxes at state `w`.
    pub fn boundary_fluxes(&self, w: &DVector<f64>) -> (f64, f64) {
        (godunov_flux(self.mu1, w[0]), flux(w[w.len() - 1]))
    }

    fn check_len(&self, v: &DVector<f64>) {
        assert_eq!(v.len(), self.config.n_cells, "state length must equal n_cells");
    }
}

impl FomProblem for BurgersProblem {
    fn n_dofs(&self) -> usize {
        self.config.n_cells
    }

    fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::from_element(self.config.n_cells, 1.0)
    }

    fn residual(&self, _step: usize, w: &DVector<f64>, w_prev: &DVector<f64>) -> DVector<f64> {
        self.check_len(w);
        self.check_len(w_prev);
        let c = self.config.dt / self.config.dx();
        let f = self.interface_fluxes(w);
        DVector::from_fn(w.len(), |i, _| {
            w[i] - w_prev[i] + c * (f[i + 1].0 - f[i].0) - self.config.dt * self.source[i]
        })
    }

    fn jacobian(&self, _step: usize, w: &DVector<f64>, _w_prev: &DVector<f64>) -> Jacobian {
        self.check_len(w);
        let n = w.len();
        let c = self.config.dt / self.config.dx();
        let f = self.interface_fluxes(w);
        // F_{i+1/2} = f[i+1] depends on w_i (left) and w_{i+1} (right)
        let diag = (0..n).map(|i| 1.0 + c * (f[i + 1].1 - f[i].2)).collect();
        let upper = (0..n - 1).map(|i| c * f[i + 1].2).collect();
        let lower = (0..n - 1).map(|i| -c * f[i + 1].1).collect();
        Jacobian::Tridiagonal { lower, diag, upper }
    }
}
