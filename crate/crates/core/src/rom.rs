//! POD bases and the Galerkin reduced-order Newton solve.

use log::warn;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fom::{FomProblem, Jacobian, MAX_STEP_HALVINGS, NEWTON_MAX_ITERS};
use crate::kernels::{inverse_column_norms, solve_scaled, thin_svd, DenseMatrix, DEFAULT_RANK_TOL};
use crate::splitting::RefinedBasis;

#[derive(Clone, Debug)]
pub struct PodBasis {
    pub reference_state: DVector<f64>,
    /// `N x p0`, orthonormal columns.
    pub vectors: DenseMatrix,
    /// All singular values of the centered snapshot matrix.
    pub singular_values: Vec<f64>,
}

/// Leading `p0` left singular vectors of `snapshots - w_ref 1^T`. Requests
/// beyond the numerical rank are truncated to it.
pub fn build_pod(snapshots: &DenseMatrix, p0: usize, w_ref: &DVector<f64>) -> Result<PodBasis> {
    if p0 == 0 {
        return Err(Error::InvalidArgument("basis size must be at least 1".into()));
    }
    if snapshots.nrows() != w_ref.len() {
        return Err(Error::Dimension {
            expected: snapshots.nrows(),
            actual: w_ref.len(),
        });
    }
    let mut centered = snapshots.clone();
    for mut col in centered.column_iter_mut() {
        col -= w_ref;
    }
    let svd = thin_svd(&centered)?;
    let rank = svd.rank(DEFAULT_RANK_TOL);
    if rank == 0 {
        return Err(Error::InvalidArgument("centered snapshot matrix is zero".into()));
    }
    let p = if p0 > rank {
        warn!("requested {p0} POD vectors but snapshot rank is {rank}; truncating");
        rank
    } else {
        p0
    };
    Ok(PodBasis {
        reference_state: w_ref.clone(),
        vectors: svd.left_vectors.columns(0, p).into_owned(),
        singular_values: svd.singular_values,
    })
}

/// Test map `A` of a Petrov-Galerkin projection written as a Galerkin
/// projection of the modified residual `A^T r`.
pub trait TestMap: Sync {
    /// `A^T v` for a block of columns.
    fn apply(&self, v: &DenseMatrix) -> DenseMatrix;
}

/// `A = I`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Galerkin;

impl TestMap for Galerkin {
    fn apply(&self, v: &DenseMatrix) -> DenseMatrix {
        v.clone()
    }
}

fn apply_vec(map: &dyn TestMap, v: &DVector<f64>) -> DVector<f64> {
    let m = DenseMatrix::from_column_slice(v.len(), 1, v.as_slice());
    map.apply(&m).column(0).into_owned()
}

#[derive(Clone, Debug)]
pub struct RomStepSolution {
    pub coords: DVector<f64>,
    /// Reconstructed state `w_ref + Phi coords`.
    pub state: DVector<f64>,
    pub newton_iters: usize,
    /// `||D^{-1} Phi^T rbar||_2` with `D` the column norms of `Phi`.
    pub reduced_residual_norm: f64,
    /// `||rbar||_2`.
    pub full_residual_norm: f64,
    /// False when the iteration cap was hit or the reduced Jacobian became
    /// singular; the fields then hold the best iterate.
    pub converged: bool,
}

pub fn reconstruct(basis: &DenseMatrix, w_ref: &DVector<f64>, coords: &DVector<f64>) -> DVector<f64> {
    w_ref + basis * coords
}

/// Galerkin reduced Newton solve of one step.
pub fn solve_rom_step<P: FomProblem + ?Sized>(
    fom: &P,
    step: usize,
    basis: &RefinedBasis,
    w_ref: &DVector<f64>,
    w_prev: &DVector<f64>,
    coords_init: &DVector<f64>,
    tol: f64,
) -> Result<RomStepSolution> {
    solve_rom_step_with(fom, step, basis.phi(), w_ref, w_prev, coords_init, tol, &Galerkin)
}

/// Reduced Newton on `Phi^T A^T r(w_ref + Phi x) = 0`: each iteration solves
/// `(Phi^T A^T J Phi) dx = -Phi^T A^T r`, halving the step while the reduced
/// residual grows.
///
/// The reduced residual is measured with every column of `Phi` scaled to unit
/// norm, so the tolerance means the same thing for a unit POD vector and for
/// a small piece split off from one.
#[allow(clippy::too_many_arguments)]
pub fn solve_rom_step_with<P: FomProblem + ?Sized>(
    fom: &P,
    step: usize,
    phi: &DenseMatrix,
    w_ref: &DVector<f64>,
    w_prev: &DVector<f64>,
    coords_init: &DVector<f64>,
    tol: f64,
    test_map: &dyn TestMap,
) -> Result<RomStepSolution> {
    if coords_init.len() != phi.ncols() {
        return Err(Error::Dimension {
            expected: phi.ncols(),
            actual: coords_init.len(),
        });
    }
    if w_ref.len() != phi.nrows() || w_prev.len() != phi.nrows() {
        return Err(Error::Dimension {
            expected: phi.nrows(),
            actual: w_ref.len(),
        });
    }

    let inv_norms = inverse_column_norms(phi);
    let scaled_norm = |reduced: &DVector<f64>| {
        reduced
            .iter()
            .zip(&inv_norms)
            .map(|(v, s)| (v * s).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let eval = |coords: &DVector<f64>| {
        let w = reconstruct(phi, w_ref, coords);
        let rbar = apply_vec(test_map, &fom.residual(step, &w, w_prev));
        let reduced = phi.tr_mul(&rbar);
        (w, rbar, reduced)
    };

    let mut coords = coords_init.clone();
    let (mut w, mut rbar, mut reduced) = eval(&coords);
    let mut iters = 0;
    let mut converged = scaled_norm(&reduced) <= tol;
    while !converged && iters < NEWTON_MAX_ITERS {
        let jac: Jacobian = fom.jacobian(step, &w, w_prev);
        let jphi = test_map.apply(&jac.mul(phi));
        let reduced_jac = phi.tr_mul(&jphi);
        iters += 1;
        // column-normalized solve; near-dependent columns get the
        // minimum-norm step
        let delta = match solve_scaled(&reduced_jac, &(-&reduced), &inv_norms) {
            Ok(d) => d,
            Err(Error::Singular) => break,
            Err(e) => return Err(e),
        };
        let norm0 = scaled_norm(&reduced);
        let mut lambda = 1.0;
        let mut trial = &coords + &delta;
        let mut next = eval(&trial);
        let mut halvings = 0;
        while !(scaled_norm(&next.2) <= norm0) && halvings < MAX_STEP_HALVINGS {
            lambda *= 0.5;
            trial = &coords + &delta * lambda;
            next = eval(&trial);
            halvings += 1;
        }
        if !(scaled_norm(&next.2) <= norm0) {
            // no descent along the Newton direction
            break;
        }
        coords = trial;
        (w, rbar, reduced) = next;
        converged = scaled_norm(&reduced) <= tol;
    }

    Ok(RomStepSolution {
        coords,
        state: w,
        newton_iters: iters,
        reduced_residual_norm: scaled_norm(&reduced),
        full_residual_norm: rbar.norm(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::solve_dense;
    use crate::fom::{newton_step, BurgersConfig, BurgersProblem, LinearProblem};
    use crate::tree::SplitTree;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.transpose() * &m + DenseMatrix::identity(n, n) * n as f64 * 0.1
    }

    fn leaf_tree(n: usize) -> Arc<SplitTree> {
        Arc::new(SplitTree::from_parts(n, vec![vec![]], vec![(0..n).collect()]))
    }

    #[test]
    fn pod_exact_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DenseMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
        let v = DenseMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let w_ref = DVector::from_element(10, 0.5);
        let mut snaps = &u * &v;
        for mut c in snaps.column_iter_mut() {
            c += &w_ref;
        }
        let pod = build_pod(&snaps, 3, &w_ref).unwrap();
        let mut centered = snaps.clone();
        for mut c in centered.column_iter_mut() {
            c -= &w_ref;
        }
        let proj = &pod.vectors * (pod.vectors.transpose() * &centered);
        assert!((proj - &centered).norm() < 1e-10 * centered.norm());
        // asking for more than the rank truncates
        assert_eq!(build_pod(&snaps, 6, &w_ref).unwrap().vectors.ncols(), 3);
        assert!(build_pod(&snaps, 0, &w_ref).is_err());
    }

    #[test]
    fn identity_basis_reproduces_fom_step() {
        let cfg = BurgersConfig {
            n_cells: 20,
            ..BurgersConfig::default()
        };
        let p = BurgersProblem::new(cfg, [3.0, 0.02]).unwrap();
        let w0 = p.initial_state();
        let fom = newton_step(&p, 1, &w0, w0.clone(), 1e-12).unwrap();
        let basis = RefinedBasis::fresh(DenseMatrix::identity(20, 20), leaf_tree(20)).unwrap();
        let sol = solve_rom_step(&p, 1, &basis, &w0, &w0, &DVector::zeros(20), 1e-12).unwrap();
        assert!(sol.converged);
        assert!((sol.state - fom).amax() < 1e-10);
    }

    #[test]
    fn linear_galerkin_matches_dense_oracle() {
        let n = 12;
        let a = spd(n, 5);
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.7).cos());
        let fom = LinearProblem::new(a.clone(), b.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = DenseMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let w_ref = DVector::from_fn(n, |i, _| i as f64 * 0.01);
        let basis = RefinedBasis::fresh(phi.clone(), leaf_tree(n)).unwrap();
        let sol = solve_rom_step(&fom, 1, &basis, &w_ref, &w_ref, &DVector::zeros(4), 1e-12).unwrap();
        let oracle = solve_dense(&(phi.transpose() * &a * &phi), &(phi.transpose() * (&b - &a * &w_ref))).unwrap();
        assert!((sol.coords - oracle).amax() < 1e-9);
        assert_eq!(sol.newton_iters, 1);
    }

    #[test]
    fn converged_guess_takes_no_iterations() {
        let n = 8;
        let a = spd(n, 1);
        let b = DVector::from_element(n, 1.0);
        let fom = LinearProblem::new(a.clone(), b.clone());
        let phi = DenseMatrix::identity(n, n);
        let basis = RefinedBasis::fresh(phi, leaf_tree(n)).unwrap();
        let exact = solve_dense(&a, &b).unwrap();
        let w_ref = DVector::zeros(n);
        let sol = solve_rom_step(&fom, 1, &basis, &w_ref, &w_ref, &exact, 1e-8).unwrap();
        assert_eq!(sol.newton_iters, 0);
        assert!(sol.converged);
    }

    #[test]
    fn galerkin_minimizes_energy_error() {
        let n = 10;
        let a = spd(n, 21);
        let b = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        let fom = LinearProblem::new(a.clone(), b.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = DenseMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let w_ref = DVector::zeros(n);
        let basis = RefinedBasis::fresh(phi.clone(), leaf_tree(n)).unwrap();
        let sol = solve_rom_step(&fom, 1, &basis, &w_ref, &w_ref, &DVector::zeros(3), 1e-12).unwrap();
        let exact = solve_dense(&a, &b).unwrap();
        let energy = |x: &DVector<f64>| {
            let e = &exact - &phi * x;
            e.dot(&(&a * &e))
        };
        let best = energy(&sol.coords);
        // brute-force perturbations never do better
        for k in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k);
            let d = DVector::from_fn(3, |_, _| rng.random_range(-1e-2..1e-2));
            assert!(energy(&(&sol.coords + d)) >= best - 1e-12);
        }
    }

    #[test]
    fn invariant_to_orthogonal_reparameterization() {
        let cfg = BurgersConfig {
            n_cells: 30,
            ..BurgersConfig::default()
        };
        let p = BurgersProblem::new(cfg, [3.0, 0.02]).unwrap();
        let w0 = p.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = DenseMatrix::from_fn(30, 5, |_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q();
        let mixing = DenseMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let b1 = RefinedBasis::fresh(q.clone(), leaf_tree(30)).unwrap();
        let b2 = RefinedBasis::fresh(&q * &mixing, leaf_tree(30)).unwrap();
        let s1 = solve_rom_step(&p, 1, &b1, &w0, &w0, &DVector::zeros(5), 1e-12).unwrap();
        let s2 = solve_rom_step(&p, 1, &b2, &w0, &w0, &DVector::zeros(5), 1e-12).unwrap();
        assert!((s1.state - s2.state).amax() < 1e-8);
    }
}
