mod commands;
mod scene;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "wristkin",
    version,
    about = "Kinematics of a spherical parallel wrist for eel-robot vertebrae"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// parallel-axes, orthogonal-axes or parallel-actuators
    #[arg(long, global = true, default_value = "parallel-actuators")]
    pub variant: String,
    /// Mechanism JSON; overrides --variant
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Normalized-determinant threshold for singularities
    #[arg(long, global = true, default_value_t = wristkin::differential::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Read angle arguments in degrees
    #[arg(long, global = true)]
    pub degrees: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Direct model: all assemblies for given joint angles
    Fk {
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["T1", "T2", "T3"])]
        theta: Vec<f64>,
        /// Write a scene file of every solution
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Inverse model: all joint solutions for an orientation
    Ik {
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["YAW", "PITCH", "ROLL"])]
        rpy: Option<Vec<f64>>,
        /// Check the solutions of `fk` JSON read from standard input
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Jacobians at the working assembly of an orientation
    Jac {
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["YAW", "PITCH", "ROLL"])]
        rpy: Vec<f64>,
        /// Also report the finite-difference Jacobian with this step
        #[arg(long)]
        fd_step: Option<f64>,
    },
    /// Singularity classification at the working assembly of an orientation
    Singularity {
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["YAW", "PITCH", "ROLL"])]
        rpy: Vec<f64>,
    },
    /// Isotropy search, or the isotropy report at an orientation
    Isotropy {
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["YAW", "PITCH", "ROLL"])]
        rpy: Option<Vec<f64>>,
    },
    /// Workspace sweep around the home posture
    Sweep {
        /// `default` (1°, 1°, 0.5° steps) or `coarse` (5° steps)
        #[arg(long = "box", default_value = "default")]
        bounds: String,
        /// Grid counts for yaw, pitch and roll; overrides the box resolution
        #[arg(long, num_args = 3, value_names = ["NY", "NP", "NR"])]
        counts: Option<Vec<usize>>,
    },
    /// Gait trajectory validation
    Gait {
        /// Gait JSON; defaults apply to missing fields
        #[arg(long)]
        gait: Option<PathBuf>,
        /// default, zero or full-envelope
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Compare closed-form solutions with the brute-force oracles
    OracleCheck {
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
}

fn configure_threads() {
    if let Some(n) = std::env::var("WRISTKIN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            // Only fails if a pool exists already, in which case it is kept.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Domain(e)) => {
            let body = serde_json::json!({ "error": e.kind(), "detail": e.to_string() });
            let _ = commands::print_json(&body);
            ExitCode::from(if matches!(e, wristkin::Error::InvalidInput(_)) {
                1
            } else {
                2
            })
        }
        Err(CliError::Failed(value)) => {
            let _ = commands::print_json(&value);
            ExitCode::from(2)
        }
    }
}
