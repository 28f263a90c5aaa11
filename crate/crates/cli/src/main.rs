use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use logmink_cli::{cmd_diag, cmd_experiment, cmd_flow, cmd_john, cmd_measure, cmd_solve, CliError, CmdOutput, Config, EXIT_CODES};
use logmink_core::experiments::{parse_inits, InitStrategy, SuiteKind};
use logmink_core::DensitySpec;

/// Solver and convex-geometry toolkit for h det(Hess h + h I) = f on the sphere.
#[derive(Parser)]
#[command(name = "logmink", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Grid bandwidth L (L rings, 2L longitudes, degrees below L)
    #[arg(long = "grid-L", value_name = "L")]
    grid_l: Option<usize>,
    /// Newton tolerance on the band-limited residual
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory for artifacts
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for random densities and experiments
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DensityArg {
    /// Density: const:c, harmonics:[(l,m,amp),...] or random:seed,eps,lambda
    #[arg(long = "f", value_name = "DENSITY", value_parser = parse_density)]
    f: Option<DensitySpec>,
}

#[derive(Args)]
struct ObjArg {
    /// Input polytope as OBJ (vertices are re-hulled)
    #[arg(long, value_name = "FILE")]
    obj: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Newton solve; writes solution.csv, solve_report.csv [, body.obj]
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        density: DensityArg,
        /// Maximum Newton iterations
        #[arg(long)]
        max_iter: Option<usize>,
        /// Also write the body as body.obj
        #[arg(long)]
        write_obj: bool,
    },
    /// Normalized Gauss curvature flow; writes flow_solution.csv, trajectory.csv
    Flow {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        density: DensityArg,
        /// Initial time step
        #[arg(long)]
        dt: Option<f64>,
        /// Maximum number of steps
        #[arg(long)]
        max_steps: Option<usize>,
        /// Write snapshot_<step>.obj every K steps
        #[arg(long, value_name = "K")]
        snapshot_every: Option<usize>,
    },
    /// Cone-volume and surface-area measures; writes cone_volume.csv, surface_area.csv
    Measure {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        obj: ObjArg,
    },
    /// Minimum-volume enclosing ellipsoid; writes ellipsoid.csv
    John {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        obj: ObjArg,
    },
    /// Blow-down diagnostics of a polytope or of a solution; writes diagnostics.csv
    Diag {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        obj: ObjArg,
        #[command(flatten)]
        density: DensityArg,
    },
    /// Seeded experiment suite; writes experiment_<kind>.csv
    Experiment {
        #[command(flatten)]
        common: Common,
        /// uniqueness, bound or diagnostics
        #[arg(long, value_parser = parse_kind)]
        kind: Option<SuiteKind>,
        /// Number of sampled densities
        #[arg(long)]
        samples: Option<usize>,
        /// Sup distance of f from 1
        #[arg(long)]
        eps: Option<f64>,
        /// Density bounds 1/lambda < f < lambda
        #[arg(long)]
        lambda: Option<f64>,
        /// Init strategies separated by ';': const:c, perturb:amp, flow
        #[arg(long, value_parser = parse_init_list)]
        inits: Option<Vec<InitStrategy>>,
    },
}

fn parse_density(s: &str) -> Result<DensitySpec, String> {
    s.parse().map_err(|e: logmink_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<SuiteKind, String> {
    s.parse().map_err(|e: logmink_core::Error| e.to_string())
}

fn parse_init_list(s: &str) -> Result<Vec<InitStrategy>, String> {
    parse_inits(s).map_err(|e| e.to_string())
}

fn layered(common: Common, flags: Config) -> Result<Config, CliError> {
    let base = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let flags = Config { grid_l: common.grid_l, tol: common.tol, out: common.out, seed: common.seed, ..flags };
    Ok(base.merge(flags))
}

fn run(command: Command) -> Result<CmdOutput, CliError> {
    match command {
        Command::Solve { common, density, max_iter, write_obj } => {
            let flags = Config { density: density.f, max_iter, write_obj: write_obj.then_some(true), ..Config::default() };
            cmd_solve(&layered(common, flags)?)
        }
        Command::Flow { common, density, dt, max_steps, snapshot_every } => {
            let flags = Config { density: density.f, dt, max_steps, snapshot_every, ..Config::default() };
            cmd_flow(&layered(common, flags)?)
        }
        Command::Measure { common, obj } => cmd_measure(&layered(common, Config { obj: obj.obj, ..Config::default() })?),
        Command::John { common, obj } => cmd_john(&layered(common, Config { obj: obj.obj, ..Config::default() })?),
        Command::Diag { common, obj, density } => {
            cmd_diag(&layered(common, Config { obj: obj.obj, density: density.f, ..Config::default() })?)
        }
        Command::Experiment { common, kind, samples, eps, lambda, inits } => {
            let flags = Config { kind, samples, eps, lambda, inits, ..Config::default() };
            cmd_experiment(&layered(common, flags)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            println!("{}", out.summary);
            for p in &out.artifacts {
                println!("wrote {}", p.display());
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: tolerance or suite cap not met");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
