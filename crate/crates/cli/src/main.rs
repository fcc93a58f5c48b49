use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use output::Failure;

#[derive(Parser, Debug)]
#[command(name = "renewal-spectral", version, about = "Pseudospectral analysis of renewal equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chebyshev mesh, barycentric and quadrature weights as JSON.
    Mesh(MeshArgs),
    /// Eigenvalues of the discretized Jacobian at an equilibrium.
    Eig(EigArgs),
    /// Time integration of the discretized system.
    Simulate(SimulateArgs),
    /// Equilibrium branch in one parameter.
    Continue(ContinueArgs),
    /// Hopf points over a grid of a second parameter.
    HopfCurve(HopfCurveArgs),
    /// Floquet multipliers of the periodic orbit reached from the equilibrium.
    Floquet(FloquetArgs),
    /// Rightmost-root error against a reference discretization.
    Converge(ConvergeArgs),
    /// Timing comparison with the direct discretization.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Built-in model: sirs, blowflies, cannibalism, linear-constant.
    #[arg(long, default_value = "cannibalism")]
    pub model: String,
    /// JSON model description (overrides --model).
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Delay interval length.
    #[arg(long)]
    pub tau: Option<f64>,
    /// `name=value` sets a model parameter; a bare `name` selects the
    /// continuation parameter. Repeatable.
    #[arg(long = "param")]
    pub param: Vec<String>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Omit the timestamp comment so identical runs give identical files.
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Args, Debug)]
pub struct MeshArgs {
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EigArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M")]
    pub m: usize,
    /// Starting guess for the equilibrium; `0` selects the trivial one.
    #[arg(long)]
    pub b_guess: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M")]
    pub m: usize,
    /// Final time (default 200 τ).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// `equilibrium+EPS` (relative perturbation of the equilibrium) or a CSV
    /// file of `theta,b` rows sampling the initial history.
    #[arg(long, default_value = "equilibrium+0.01")]
    pub x0: String,
    #[arg(long, default_value_t = 1e-8)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub atol: f64,
}

#[derive(Args, Debug)]
pub struct ContinueArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Starting guess for the equilibrium at `--from`; `0` follows the
    /// trivial branch.
    #[arg(long)]
    pub b_guess: Option<f64>,
}

#[derive(Args, Debug)]
pub struct HopfCurveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(long)]
    pub param2: String,
    /// Comma-separated values of the second parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct FloquetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "M")]
    pub m: usize,
    /// Simulation length used to reach the orbit (default 200 τ).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Polish the orbit by shooting before computing multipliers.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "Mlist", value_delimiter = ',', required = true)]
    pub m_list: Vec<usize>,
    #[arg(long = "ref", default_value_t = 40)]
    pub reference: usize,
    /// Number of tracked roots (one per conjugate pair).
    #[arg(long, default_value_t = 1)]
    pub roots: usize,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "Mlist", value_delimiter = ',', default_value = "15,16,17,18,19,20")]
    pub m_list: Vec<usize>,
    /// Continuation points per run.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Right-hand side calls per method and M.
    #[arg(long, default_value_t = 200)]
    pub rhs_evals: usize,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
}

fn write_out(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::domain(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::numeric(format!("cannot write output: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match &cli.command {
        Command::Mesh(a) => commands::mesh(a).and_then(|t| write_out(a.out.as_ref(), &t)),
        Command::Eig(a) => commands::eig(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
        Command::Simulate(a) => commands::simulate(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
        Command::Continue(a) => commands::continue_branch(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
        Command::HopfCurve(a) => commands::hopf_curve(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
        Command::Floquet(a) => commands::floquet(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
        Command::Converge(a) => commands::converge(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
        Command::Bench(a) => commands::bench(a).and_then(|t| write_out(a.common.out.as_ref(), &t)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
