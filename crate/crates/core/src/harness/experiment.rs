//! Offline training and online runs of the Burgers experiments.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;

use super::config::ExperimentSpec;
use super::io::{read_matrix, read_tree, write_csv_lines, write_matrix, write_tree};
use super::metrics::{relative_error, MetricsReport};
use crate::adapt::{adapt_step, AdaptConfig, AdaptLog, AdaptStats};
use crate::error::{Error, Result};
use crate::fom::{solve_fom, BurgersProblem, FomProblem, Trajectory};
use crate::kernels::{pseudoinverse_apply, thin_svd, DenseMatrix, DEFAULT_RANK_TOL};
use crate::rom::{solve_rom_step, PodBasis};
use crate::splitting::RefinedBasis;
use crate::tree::{build_tree, SplitTree};

/// Offline artifacts: reference-subtracted snapshots, the full-rank POD basis
/// and the split tree built from the snapshots.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub snapshots: DenseMatrix,
    pub pod: PodBasis,
    pub tree: Arc<SplitTree>,
}

const SNAPSHOTS_FILE: &str = "snapshots.bin";
const BASIS_FILE: &str = "pod_basis.bin";
const SINGULAR_VALUES_FILE: &str = "singular_values.bin";
const REFERENCE_FILE: &str = "reference.bin";
const TREE_FILE: &str = "tree.txt";

impl TrainedModel {
    pub fn reference(&self) -> &DVector<f64> {
        &self.pod.reference_state
    }

    /// Number of POD vectors available (the snapshot rank).
    pub fn rank(&self) -> usize {
        self.pod.vectors.ncols()
    }

    /// The leading `p0` POD vectors, all at the tree root.
    pub fn initial_basis(&self, p0: usize) -> Result<RefinedBasis> {
        if p0 == 0 {
            return Err(Error::InvalidArgument("basis size must be at least 1".into()));
        }
        let p = if p0 > self.rank() {
            warn!("requested {p0} POD vectors but only {} are available", self.rank());
            self.rank()
        } else {
            p0
        };
        RefinedBasis::fresh(self.pod.vectors.columns(0, p).into_owned(), self.tree.clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&dir.join(SNAPSHOTS_FILE), &self.snapshots)?;
        write_matrix(&dir.join(BASIS_FILE), &self.pod.vectors)?;
        let sv = &self.pod.singular_values;
        write_matrix(&dir.join(SINGULAR_VALUES_FILE), &DenseMatrix::from_column_slice(sv.len(), 1, sv))?;
        let w_ref = self.reference();
        write_matrix(&dir.join(REFERENCE_FILE), &DenseMatrix::from_column_slice(w_ref.len(), 1, w_ref.as_slice()))?;
        write_tree(&dir.join(TREE_FILE), &self.tree)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let snapshots = read_matrix(&dir.join(SNAPSHOTS_FILE))?;
        let vectors = read_matrix(&dir.join(BASIS_FILE))?;
        let singular_values = read_matrix(&dir.join(SINGULAR_VALUES_FILE))?.as_slice().to_vec();
        let reference_path = dir.join(REFERENCE_FILE);
        let reference = read_matrix(&reference_path)?;
        if reference.ncols() != 1 || reference.nrows() != vectors.nrows() || snapshots.nrows() != vectors.nrows() {
            return Err(Error::format(reference_path, "artifact dimensions disagree"));
        }
        let tree = read_tree(&dir.join(TREE_FILE), vectors.nrows())?;
        Ok(TrainedModel {
            snapshots,
            pod: PodBasis {
                reference_state: reference.column(0).into_owned(),
                vectors,
                singular_values,
            },
            tree: Arc::new(tree),
        })
    }
}

/// Run the full-order model at every training input, pool the states
/// `w^1 .. w^n_train` minus the initial condition, and build the POD basis
/// and split tree.
pub fn train(spec: &ExperimentSpec) -> Result<TrainedModel> {
    let n_train = spec.training.n_steps;
    let runs: Vec<Trajectory> = spec
        .training
        .mu
        .par_iter()
        .map(|&mu| {
            let problem = BurgersProblem::new(spec.burgers.clone(), mu)?;
            solve_fom(&problem, n_train)
        })
        .collect::<Result<_>>()?;
    let w_ref = BurgersProblem::new(spec.burgers.clone(), spec.training.mu[0])?.initial_state();
    let n = w_ref.len();
    let mut snapshots = DenseMatrix::zeros(n, n_train * runs.len());
    for (r, traj) in runs.iter().enumerate() {
        for s in 1..=n_train {
            snapshots.set_column(r * n_train + s - 1, &(traj.column(s) - &w_ref));
        }
    }
    let svd = thin_svd(&snapshots)?;
    let rank = svd.rank(DEFAULT_RANK_TOL);
    if rank == 0 {
        return Err(Error::InvalidArgument("training snapshots are all equal to the reference state".into()));
    }
    let pod = PodBasis {
        reference_state: w_ref,
        vectors: svd.left_vectors.columns(0, rank).into_owned(),
        singular_values: svd.singular_values,
    };
    let tree = build_tree(&snapshots, spec.adapt.k_means, spec.seed)?;
    info!(
        "trained on {} inputs: {} snapshots, rank {rank}, {} tree nodes",
        runs.len(),
        snapshots.ncols(),
        tree.n_nodes()
    );
    Ok(TrainedModel {
        snapshots,
        pod,
        tree: Arc::new(tree),
    })
}

pub fn online_problem(spec: &ExperimentSpec) -> Result<BurgersProblem> {
    BurgersProblem::new(spec.burgers.clone(), spec.online.mu)
}

pub fn run_fom(spec: &ExperimentSpec) -> Result<Trajectory> {
    let problem = online_problem(spec)?;
    solve_fom(&problem, problem.n_steps())
}

#[derive(Clone, Debug)]
pub struct RomRun {
    pub trajectory: Trajectory,
    pub stats: AdaptStats,
    pub log: AdaptLog,
    /// Steps whose reduced Newton solve stopped before the tolerance.
    pub unconverged_steps: usize,
}

/// March the ROM over all steps from the initial basis, adapting when
/// `adaptive` is set.
pub fn run_rom<P: FomProblem + ?Sized>(
    fom: &P,
    initial: &RefinedBasis,
    w_ref: &DVector<f64>,
    adaptive: bool,
    cfg: &AdaptConfig,
    log: AdaptLog,
) -> Result<RomRun> {
    let start = Instant::now();
    let n_steps = fom.n_steps();
    let w0 = fom.initial_state();
    let mut traj = DenseMatrix::zeros(w0.len(), n_steps + 1);
    traj.set_column(0, &w0);
    let mut stats = AdaptStats::default();
    let mut log = log;
    let mut unconverged = 0;
    let mut basis = initial.clone();
    let mut coords = pseudoinverse_apply(initial.phi(), &(&w0 - w_ref))?;
    let mut prev = w0;
    for step in 1..=n_steps {
        let solution = if adaptive {
            let out = adapt_step(fom, step, basis, initial, w_ref, &prev, &coords, cfg, &mut stats, &mut log)?;
            basis = out.basis;
            coords = out.next_coords;
            out.solution
        } else {
            let sol = solve_rom_step(fom, step, &basis, w_ref, &prev, &coords, cfg.baseline_rom_tol)?;
            stats.record_newton(basis.dim(), sol.newton_iters);
            stats.steps += 1;
            coords = sol.coords.clone();
            sol
        };
        if !solution.converged {
            unconverged += 1;
        }
        traj.set_column(step, &solution.state);
        prev = solution.state;
    }
    if unconverged > 0 {
        warn!("{unconverged} of {n_steps} reduced solves stopped before the tolerance");
    }
    stats.wall_time = start.elapsed();
    Ok(RomRun {
        trajectory: traj,
        stats,
        log,
        unconverged_steps: unconverged,
    })
}

/// Run the online ROM described by `spec` and score it against `fom_traj`.
pub fn run_experiment(spec: &ExperimentSpec, model: &TrainedModel, fom_traj: &Trajectory, log: AdaptLog) -> Result<(RomRun, MetricsReport)> {
    let problem = online_problem(spec)?;
    let initial = model.initial_basis(spec.online.p0)?;
    let run = run_rom(&problem, &initial, model.reference(), spec.online.adaptive, &spec.adapt, log)?;
    let report = MetricsReport {
        relative_error: relative_error(fom_traj, &run.trajectory)?,
        avg_basis_dim: run.stats.avg_basis_dim(),
        avg_refine_calls: run.stats.avg_refine_calls(),
        online_time_s: run.stats.wall_time.as_secs_f64(),
    };
    Ok((run, report))
}

/// Train once, solve the online FOM once, then run every case in parallel.
pub fn sweep(spec: &ExperimentSpec) -> Result<Vec<(String, MetricsReport)>> {
    if spec.cases.is_empty() {
        return Err(Error::Config("sweep needs at least one [[case]]".into()));
    }
    let (model, fom_traj) = rayon::join(|| train(spec), || run_fom(spec));
    let (model, fom_traj) = (model?, fom_traj?);
    spec.cases
        .par_iter()
        .map(|case| {
            let s = spec.with_case(case);
            let (_, report) = run_experiment(&s, &model, &fom_traj, AdaptLog::default())?;
            info!("case {}: relative error {:.4e}", case.name, report.relative_error);
            Ok((case.name.clone(), report))
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let lines: Vec<String> = rows.iter().map(|(name, r)| format!("{name},{}", r.csv_row())).collect();
    write_csv_lines(path, &format!("case,{}", MetricsReport::CSV_HEADER), &lines)
}
