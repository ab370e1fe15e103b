mod commands;
mod data;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

const GRAMMAR: &str = "\
graph file grammar:
  # comment
  [vertices]
  v1 v2 ...
  [internal]
  ID FROM TO LENGTH
  [external]
  ID VERTEX
  [condition VERTEX]
  dirichlet | neumann | kirchhoff | delta GAMMA
  or raw rows: `A x y ...` (deg rows) then `B x y ...` (deg rows)
  [condition global]
  A rows then B rows over all trace slots
vertices without a condition get kirchhoff; entries may be complex (1+2i)";

#[derive(Parser, Debug)]
#[command(name = "graphwave", version, about = "Wave equation on metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArg {
    /// Graph file.
    #[arg(value_name = "GRAPH", required_unless_present = "graph")]
    pub path: Option<PathBuf>,
    #[arg(long = "graph", value_name = "GRAPH", conflicts_with = "path")]
    pub graph: Option<PathBuf>,
}

impl GraphArg {
    pub fn file(&self) -> &PathBuf {
        self.path.as_ref().or(self.graph.as_ref()).expect("clap enforces one")
    }
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Spatial step [default: 5e-3 for simulate, 1e-3 for fps-check].
    #[arg(long)]
    pub h: Option<f64>,
    /// Courant number Δt/h.
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    /// Distance along external edges that must be resolved.
    #[arg(long)]
    pub region: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Initial displacement bump `EDGE:CENTER:WIDTH[:AMP]`; repeatable.
    /// Without bumps, random smooth data in the domain are used.
    #[arg(long = "bump", value_name = "SPEC")]
    pub bumps: Vec<String>,
    /// Seed for random data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a graph file and print its structure.
    Validate {
        #[command(flatten)]
        graph: GraphArg,
    },
    /// Distances, balls and critical times around a point.
    Geometry {
        #[command(flatten)]
        graph: GraphArg,
        /// Center `EDGE:COORD`.
        #[arg(long)]
        p: String,
        /// Print the critical times as a list and exit.
        #[arg(long)]
        critical_times: bool,
        /// Ball radius; repeatable, one JSON line each.
        #[arg(long = "radius", value_name = "R")]
        radii: Vec<f64>,
        /// Distance to another point; repeatable.
        #[arg(long = "to", value_name = "POINT")]
        to: Vec<String>,
    },
    /// Validate the boundary condition and report Ω_M.
    BcCheck {
        #[command(flatten)]
        graph: GraphArg,
    },
    /// Eigenvalues of a compact graph.
    Spectrum {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 20.0)]
        k_max: f64,
        /// Write spectrum.csv and eigenfunctions.json here instead of
        /// printing the CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the leapfrog solver and record energies and snapshots.
    Simulate {
        #[command(flatten)]
        graph: GraphArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2.0)]
        t_end: f64,
        /// Number of snapshots after the initial one; 0 disables them.
        #[arg(long, default_value_t = 10)]
        snapshots: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Local energy and cone checks for C(p, t0).
    FpsCheck {
        #[command(flatten)]
        graph: GraphArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        p: String,
        #[arg(long)]
        t0: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate the a priori estimates on random modal data.
    Estimates {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 9.0)]
        k_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.8,1.7")]
        times: Vec<f64>,
        /// Write estimates.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { graph } => commands::validate(&graph),
        Command::Geometry {
            graph,
            p,
            critical_times,
            radii,
            to,
        } => commands::geometry(&graph, &p, critical_times, &radii, &to),
        Command::BcCheck { graph } => commands::bc_check(&graph),
        Command::Spectrum { graph, k_max, out } => commands::spectrum(&graph, k_max, out.as_deref()),
        Command::Simulate {
            graph,
            grid,
            data,
            t_end,
            snapshots,
            out,
        } => commands::simulate(&graph, &grid, &data, t_end, snapshots, &out),
        Command::FpsCheck {
            graph,
            grid,
            data,
            p,
            t0,
            out,
        } => commands::fps_check(&graph, &grid, &data, &p, t0, &out),
        Command::Estimates {
            graph,
            k_max,
            seed,
            times,
            out,
        } => commands::estimates(&graph, k_max, seed, &times, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!("\n{GRAMMAR}");
            return ExitCode::from(64);
        }
    };
    let pool = graphwave::thread_pool();
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            if let Failure::Usage(_) = f {
                eprintln!("\n{GRAMMAR}");
            }
            ExitCode::from(f.code())
        }
    }
}
