use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pearlknot::algebra::TargetGroup;

mod commands;
mod report;

use report::Report;

/// Pearl necklaces, their reflection groups and the knot groups that come out of them.
#[derive(Debug, Parser)]
#[command(name = "pearlknot", version)]
struct Cli {
    /// Print reports as JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a pearl necklace around a knot and verify it.
    Necklace(NecklaceArgs),
    /// Reflect a necklace into itself: stages by depth or a limit-set point cloud.
    Orbit(OrbitArgs),
    /// Closed-form pearl and copy counts.
    Census(CensusArgs),
    /// Presentations, branched covers and finite quotients of knot groups.
    Group {
        #[command(subcommand)]
        action: GroupAction,
    },
    /// Convert a stage or point-cloud JSON file to PLY or JSON.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct NecklaceArgs {
    /// Built-in knot (trefoil, figure_eight, circle) or a knot JSON file.
    #[arg(
        long,
        conflicts_with = "fuchsian",
        required_unless_present = "fuchsian"
    )]
    pub knot: Option<String>,
    /// Requested number of pearls; the builder may double it.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(3..))]
    pub pearls: u64,
    /// Use the m-pearl necklace orthogonal to the unit circle instead of a knot.
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub fuchsian: Option<u64>,
    /// Where to write the necklace JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relative tolerance for the verification report.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["depth", "eps"]))]
pub struct OrbitArgs {
    /// Necklace JSON file.
    #[arg(long)]
    pub necklace: PathBuf,
    /// Build stages 0..=depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Refine until every pearl is smaller than this diameter.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Maximum number of pearls to create.
    #[arg(long, env = "PEARLKNOT_BUDGET", default_value_t = pearlknot::orbit::DEFAULT_BUDGET,
          value_parser = clap::value_parser!(usize))]
    pub budget: usize,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_ply: Option<PathBuf>,
    /// Fail unless every point lies within this distance of the unit circle in z = 0
    /// (default: twice `--eps`).
    #[arg(long, num_args = 0..=1, default_missing_value = "NaN")]
    pub assert_circle: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CensusArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub k: u64,
    /// Genus of the knot's fiber surface.
    #[arg(long, default_value_t = 1)]
    pub genus: u64,
    /// Boundary circles of the fiber surface.
    #[arg(long, default_value_t = 1)]
    pub boundary: u64,
}

#[derive(Debug, Args)]
pub struct MonodromyArgs {
    /// `trefoil` or a JSON file with `fiber` and `monodromy`.
    #[arg(long, default_value = "trefoil")]
    pub monodromy: String,
    /// Name of the stable letter.
    #[arg(long, default_value = "c")]
    pub stable: String,
}

#[derive(Debug, Subcommand)]
enum GroupAction {
    /// Mapping-torus presentation, or the truncated wild one with `--copies`.
    Present {
        #[command(flatten)]
        monodromy: MonodromyArgs,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        copies: Option<u64>,
        /// Also count homomorphisms into this group.
        #[arg(long)]
        homcount: Option<TargetGroup>,
    },
    /// First homology of the q-fold cyclic branched cover, computed two ways.
    Cover {
        #[command(flatten)]
        monodromy: MonodromyArgs,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        q: u32,
    },
    /// Count homomorphisms into a small permutation group.
    Homcount {
        #[command(flatten)]
        monodromy: MonodromyArgs,
        /// Use this presentation JSON instead of a monodromy.
        #[arg(long)]
        presentation: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        copies: Option<u64>,
        #[arg(long)]
        target: TargetGroup,
    },
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Stage or point-cloud JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Ply)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Format {
    Json,
    Ply,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Necklace(args) => commands::necklace(&args),
        Command::Orbit(args) => commands::orbit(&args),
        Command::Census(args) => commands::census(&args),
        Command::Group { action } => match action {
            GroupAction::Present {
                monodromy,
                copies,
                homcount,
            } => commands::group_present(&monodromy, copies, homcount),
            GroupAction::Cover { monodromy, q } => commands::group_cover(&monodromy, q),
            GroupAction::Homcount {
                monodromy,
                presentation,
                copies,
                target,
            } => commands::group_homcount(&monodromy, presentation.as_deref(), copies, target),
        },
        Command::Export(args) => commands::export(&args),
    };
    match outcome {
        Ok(outcome) => {
            outcome.report.print(cli.json);
            ExitCode::from(outcome.code)
        }
        Err(failure) => {
            if let Some(report) = &failure.report {
                report.print(cli.json);
            }
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

/// A finished command: its report and exit status.
pub struct Outcome {
    pub report: Report,
    pub code: u8,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Outcome { report, code: 0 }
    }
}
