use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use hrom::adapt::AdaptLog;
use hrom::dwr::INDICATOR_CSV_HEADER;
use hrom::harness::io::{read_matrix, write_csv_lines, write_matrix, write_matrix_csv};
use hrom::harness::{experiment::write_sweep_csv, relative_error, run_experiment, sweep, train};
use hrom::harness::{run_fom, ExperimentSpec, MetricsReport, TrainedModel};
use hrom::{adapt::RefineEvent, Error, Result};

#[derive(Parser)]
#[command(name = "hrom", version, about = "Adaptive h-refinement for POD-Galerkin reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training simulations and store snapshots, POD basis and split tree.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Solve the full-order model at the online input.
    RunFom {
        #[arg(short, long)]
        config: PathBuf,
        /// Also write the trajectory as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Run the (adaptive) reduced-order model and score it against the stored FOM trajectory.
    RunRom {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        csv: bool,
        /// Record per-step DWR indicators in the event log.
        #[arg(long)]
        log_indicators: bool,
    },
    /// Relative error between two stored trajectories.
    Compare {
        #[arg(long)]
        fom: PathBuf,
        #[arg(long)]
        rom: PathBuf,
    },
    /// Train once and run every [[case]] in the config, writing a CSV table.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
    },
}

fn model_dir(spec: &ExperimentSpec) -> PathBuf {
    spec.output_dir.join("model")
}

fn fom_path(spec: &ExperimentSpec) -> PathBuf {
    spec.output_dir.join("fom.bin")
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let spec = ExperimentSpec::load(path)?;
    std::fs::create_dir_all(&spec.output_dir).map_err(|e| Error::Io {
        path: spec.output_dir.clone(),
        source: e,
    })?;
    Ok(spec)
}

fn print_report(report: &MetricsReport) {
    println!("relative_error    {:.6e}", report.relative_error);
    println!("avg_basis_dim     {:.3}", report.avg_basis_dim);
    println!("avg_refine_calls  {:.4}", report.avg_refine_calls);
    println!("online_time_s     {:.3}", report.online_time_s);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let spec = load_spec(&config)?;
            let model = train(&spec)?;
            let dir = model_dir(&spec);
            model.save(&dir)?;
            println!("rank {} snapshots {} tree nodes {}", model.rank(), model.snapshots.ncols(), model.tree.n_nodes());
            println!("artifacts in {}", dir.display());
        }
        Command::RunFom { config, csv } => {
            let spec = load_spec(&config)?;
            let traj = run_fom(&spec)?;
            let path = fom_path(&spec);
            write_matrix(&path, &traj)?;
            if csv {
                write_matrix_csv(&path.with_extension("csv"), &traj)?;
            }
            println!("wrote {}", path.display());
        }
        Command::RunRom {
            config,
            csv,
            log_indicators,
        } => {
            let spec = load_spec(&config)?;
            let model = TrainedModel::load(&model_dir(&spec))?;
            let fom = read_matrix(&fom_path(&spec))?;
            let log = AdaptLog {
                events: Vec::new(),
                indicator_rows: log_indicators.then(Vec::new),
            };
            let (run, report) = run_experiment(&spec, &model, &fom, log)?;
            let out = &spec.output_dir;
            write_matrix(&out.join("rom.bin"), &run.trajectory)?;
            if csv {
                write_matrix_csv(&out.join("rom.csv"), &run.trajectory)?;
            }
            let events: Vec<String> = run.log.events.iter().map(|e| e.csv_row()).collect();
            write_csv_lines(&out.join("refine_log.csv"), RefineEvent::CSV_HEADER, &events)?;
            if let Some(rows) = &run.log.indicator_rows {
                write_csv_lines(&out.join("indicators.csv"), INDICATOR_CSV_HEADER, rows)?;
            }
            write_csv_lines(&out.join("metrics.csv"), MetricsReport::CSV_HEADER, &[report.csv_row()])?;
            print_report(&report);
        }
        Command::Compare { fom, rom } => {
            let err = relative_error(&read_matrix(&fom)?, &read_matrix(&rom)?)?;
            println!("relative_error    {err:.6e}");
        }
        Command::Sweep { config } => {
            let spec = load_spec(&config)?;
            let rows = sweep(&spec)?;
            let path = spec.output_dir.join("sweep.csv");
            write_sweep_csv(&path, &rows)?;
            println!("case,{}", MetricsReport::CSV_HEADER);
            for (name, r) in &rows {
                println!("{name},{}", r.csv_row());
            }
            info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
