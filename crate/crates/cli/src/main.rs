use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ifsem::config::FileConfig;
use ifsem::harness::{self, default_mu, parse_mu, RunConfig, RunError, Stage};
use ifsem::mesh::{build_mesh, MeshParams};
use ifsem::problem::sector_problem;
use ifsem::singularity::{smallest_eigenvalue, SingularSolution, DEFAULT_ROOT_TOL, DEFAULT_SCAN_STEP};
use ifsem::Error;

/// Least-squares spectral element solver for elliptic interface problems.
#[derive(Parser)]
#[command(name = "ifsem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one model problem and report the relative H¹ error.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long = "W")]
        degree: Option<usize>,
        /// Report file (key = value lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study over a range of degrees.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long = "W-min", default_value_t = 2)]
        w_min: usize,
        #[arg(long = "W-max", default_value_t = 8)]
        w_max: usize,
        /// Use N = factor·W layers instead of N = W.
        #[arg(long)]
        layers_factor: Option<usize>,
        /// CSV output path; plot data goes next to it with a `.dat` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest singular exponent of a model problem.
    Eigen {
        #[arg(long, default_value_t = 1)]
        example: u8,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = DEFAULT_SCAN_STEP)]
        scan_step: f64,
        #[arg(long, default_value_t = DEFAULT_ROOT_TOL)]
        tol: f64,
    },
    /// Print the mesh and its edge classification.
    Mesh {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long = "W")]
        degree: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Key-value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<u8>,
    #[arg(long)]
    p: Option<f64>,
    /// Geometric ratio: a real, or e-pi, e-1.5pi, e-2pi.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long = "N")]
    layers: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    interior_layers: Option<usize>,
    /// Element blocks: `block` (default) or `separable`.
    #[arg(long)]
    preconditioner: Option<String>,
}

fn config_err(e: Error) -> RunError {
    RunError {
        stage: Stage::Config,
        source: e,
    }
}

impl ProblemArgs {
    fn run_config(&self, degree: Option<usize>) -> Result<RunConfig, RunError> {
        let mut file = match &self.config {
            Some(path) => FileConfig::load(path).map_err(config_err)?,
            None => FileConfig::default(),
        };
        if self.example.is_some() {
            file.example = self.example;
            file.breakpoints = None;
        }
        if file.example.is_none() && file.breakpoints.is_none() {
            file.example = Some(1);
        }
        file.p = self.p.or(file.p);
        file.degree = degree.or(file.degree).or(Some(2));
        file.layers = self.layers.or(file.layers);
        file.alpha = self.alpha.or(file.alpha);
        file.tol = self.tol.or(file.tol);
        file.max_iter = self.max_iter.or(file.max_iter);
        file.rho = self.rho.or(file.rho);
        file.interior_layers = self.interior_layers.or(file.interior_layers);
        file.preconditioner = self.preconditioner.clone().or(file.preconditioner.take());
        let mut c = file.to_run_config().map_err(config_err)?;
        if let Some(m) = &self.mu {
            c.mu = parse_mu(m).map_err(config_err)?;
        } else if file.mu.is_none() {
            c.mu = default_mu(file.example.unwrap_or(1));
        }
        Ok(c)
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError {
        stage: Stage::Measurement,
        source: e.into(),
    })
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Solve { problem, degree, out } => {
            let c = problem.run_config(degree)?;
            let rep = harness::run(&c, |it, res| {
                if it % 25 == 0 {
                    eprintln!("iter={it} residual={res:.3e}");
                }
            })?;
            let text = format!(
                "W = {}\nN = {}\nmu = {:.17e}\nlambda0 = {:.15}\nalpha = {}\nerror_percent = {:.10e}\n\
                 iterations = {}\nconverged = {}\nfunctional = {:.10e}\nunknowns = {}\nseconds = {:.3}\n",
                rep.degree,
                rep.layers,
                rep.mu,
                rep.lambda0,
                rep.alpha,
                rep.relative_error_percent,
                rep.iterations,
                rep.converged,
                rep.functional,
                rep.unknowns,
                rep.seconds
            );
            print!("{text}");
            if let Some(path) = out {
                write(&path, &text)?;
            }
        }
        Command::Sweep {
            problem,
            w_min,
            w_max,
            layers_factor,
            out,
        } => {
            let c = problem.run_config(Some(w_min))?;
            let study = harness::convergence_study(&c, w_min..=w_max, layers_factor);
            print!("{}", harness::table(&study.rows));
            println!("slope = {:.6}  r_squared = {:.6}", study.slope, study.r_squared);
            if let Some(path) = out {
                write(&path, &harness::csv(&study.rows))?;
                write(&path.with_extension("dat"), &harness::plot_data(&study.rows))?;
            }
            if let Some((w, msg)) = study.failure {
                eprintln!("sweep stopped at W={w}: {msg}");
                return Err(RunError {
                    stage: Stage::Solve,
                    source: Error::InvalidParameter(format!("partial sweep, failed at W={w}")),
                });
            }
        }
        Command::Eigen {
            example,
            p,
            scan_step,
            tol,
        } => {
            let part = harness::example_partition(example, p).map_err(config_err)?;
            let lambda = smallest_eigenvalue(&part, scan_step, tol).map_err(|e| RunError {
                stage: Stage::Singularity,
                source: e,
            })?;
            println!("{lambda:.15}");
        }
        Command::Mesh { problem, degree } => {
            let c = problem.run_config(degree)?;
            let exact = SingularSolution::leading(&c.partition).map_err(|e| RunError {
                stage: Stage::Singularity,
                source: e,
            })?;
            let spec = sector_problem(exact, 1.0);
            let params = MeshParams {
                rho: c.rho,
                ratio: c.mu,
                layers: c.layer_count(),
                angular_breaks: c.angular_breaks.clone(),
                interior_layers: c.interior_layers,
            };
            let mesh = build_mesh(&spec, &params).map_err(|e| RunError {
                stage: Stage::Mesh,
                source: e,
            })?;
            print!("{}", mesh.dump());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error {e}");
            ExitCode::FAILURE
        }
    }
}
