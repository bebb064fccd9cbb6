use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kdv_galerkin::experiments::{
    dt_mode_by_name, emit_outputs, format_table, load_config, read_table, run_experiment,
    ExperimentConfig, ExperimentName, RunArtifacts, TableRow, ORACLE_REFINEMENT,
};
use kdv_galerkin::solver::DtMode;
use kdv_galerkin::{selftest, Error};

#[derive(Debug, Parser)]
#[command(name = "kdv-galerkin", version, about = "Weighted-Galerkin spline scheme for the KdV equation")]
struct Cli {
    /// Abort a resolution as soon as a step violates the CFL bound.
    #[arg(long, global = true)]
    strict_cfl: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a key = value config file.
    Run {
        config: PathBuf,
        /// Override `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the convergence table written by an earlier run.
    Table { output_dir: PathBuf },
    /// Run the invariant suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a preset experiment over a list of resolutions.
    Sweep {
        /// one_soliton, two_soliton, rough_l2 or custom.
        #[arg(long)]
        experiment: String,
        /// Cells per period, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        m: Vec<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// dx_squared, dx_linear or cfl_three_halves.
        #[arg(long)]
        dt_mode: Option<String>,
        /// Step constant c of a dx_squared or dx_linear mode.
        #[arg(long)]
        dt_c: Option<f64>,
        /// Cells of the reference run (0 disables it).
        #[arg(long)]
        oracle_m: Option<usize>,
    },
}

const EXIT_RUN_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output_dir } => match load_config(&config) {
            Ok(mut cfg) => {
                if let Some(dir) = output_dir {
                    cfg.output_dir = dir;
                }
                cfg.strict_cfl |= cli.strict_cfl;
                execute(cfg)
            }
            Err(e) => config_error(e),
        },
        Command::Table { output_dir } => match read_table(&output_dir) {
            Ok(rows) => {
                print!("{}", format_table(&rows));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_RUN_FAILURE)
            }
        },
        Command::Verify { seed } => {
            let results = selftest::run_all(seed);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", results.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_RUN_FAILURE)
            }
        }
        Command::Sweep {
            experiment,
            m,
            output_dir,
            dt_mode,
            dt_c,
            oracle_m,
        } => {
            let name: ExperimentName = match experiment.parse() {
                Ok(n) => n,
                Err(e) => return config_error(e),
            };
            let mut cfg = ExperimentConfig::preset(name);
            if !m.is_empty() {
                cfg.m_list = m;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if let Some(mode) = dt_mode {
                match dt_mode_by_name(&mode) {
                    Ok(m) => cfg.dt_mode = m,
                    Err(e) => return config_error(e),
                }
            }
            if let Some(c) = dt_c {
                match &mut cfg.dt_mode {
                    DtMode::DxSquared { c: k } | DtMode::DxLinear { c: k } => *k = c,
                    DtMode::CflThreeHalves { .. } => {
                        return config_error(Error::Config(
                            "--dt-c needs dt mode dx_squared or dx_linear".into(),
                        ))
                    }
                }
            }
            match oracle_m {
                Some(0) => cfg.oracle_m = None,
                Some(r) => cfg.oracle_m = Some(r),
                None => {
                    // Keep the preset's reference refinement relative to the new list.
                    if cfg.oracle_m.is_some() {
                        cfg.oracle_m = cfg
                            .m_list
                            .last()
                            .map(|&f| ORACLE_REFINEMENT * f);
                    }
                }
            }
            cfg.strict_cfl |= cli.strict_cfl;
            if let Err(e) = cfg.validate() {
                return config_error(e);
            }
            execute(cfg)
        }
    }
}

fn config_error(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn execute(cfg: ExperimentConfig) -> ExitCode {
    let artifacts = match run_experiment(&cfg) {
        Ok(a) => a,
        Err(e @ Error::Config(_)) => return config_error(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUN_FAILURE);
        }
    };
    if let Err(e) = emit_outputs(&artifacts, &cfg.output_dir) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_RUN_FAILURE);
    }
    report(&artifacts, &cfg.output_dir);
    if artifacts.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUN_FAILURE)
    }
}

fn report(artifacts: &RunArtifacts, dir: &Path) {
    println!("{} on [{}, {}]", artifacts.config.name, artifacts.config.x_left, artifacts.config.x_right);
    for r in &artifacts.runs {
        let status = r.failure.as_deref().unwrap_or("ok");
        println!(
            "  M = {:>5}  dt = {:.3e}  steps = {:>7}  max iterations = {:>2}  {status}",
            r.m_nodes, r.dt, r.steps_taken, r.max_iterations_used
        );
    }
    let rows: Vec<TableRow> = artifacts
        .table
        .iter()
        .map(|e| TableRow {
            m_nodes: e.m_nodes,
            e_percent: (!e.e_percent.is_nan()).then_some(e.e_percent),
            rate: e.rate_vs_previous,
        })
        .collect();
    print!("{}", format_table(&rows));
    for p in &artifacts.pairwise {
        println!("  |u_{} - u_{}| = {:.4e}", p.m_coarse, p.m_fine, p.l2_difference);
    }
    println!("outputs written to {}", dir.display());
}
