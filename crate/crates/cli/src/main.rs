use std::path::PathBuf;
use std::process::ExitCode;

use artic_core::pipeline::{self, PipelineConfig};
use artic_core::refine::{GradientMode, ObjectiveMode};
use artic_core::splat::ShMode;
use artic_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "artic-rig", version, about = "Pose, seat and render articulated Gaussian-splat cyclists")]
struct Cli {
    /// Pipeline config (TOML); relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the toy bike, skeleton, benchmark rider pose and a config.
    MakeFixtures {
        /// Splats per bike part.
        #[arg(long)]
        density: Option<usize>,
        #[arg(long)]
        rider_per_bone: Option<usize>,
    },
    /// Pose the bicycle parts with 8 DoF.
    ReposeBike {
        #[command(flatten)]
        bike: BikeArgs,
    },
    /// Crank and steering angles from the rider pose.
    DeriveAngles {
        #[command(flatten)]
        bike: BikeArgs,
        #[command(flatten)]
        rider: RiderArgs,
    },
    /// Seat the rider on the bicycle.
    Refine {
        #[command(flatten)]
        bike: BikeArgs,
        #[command(flatten)]
        rider: RiderArgs,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Assemble the full cyclist and place it in the world.
    Compose {
        #[command(flatten)]
        bike: BikeArgs,
        #[command(flatten)]
        rider: RiderArgs,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Render orbit views of every bicycle part.
    DatasetGen {
        #[command(flatten)]
        bike: BikeArgs,
        #[command(flatten)]
        dataset: DatasetArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShModeArg {
    Full,
    DcOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    FiniteDifference,
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Chamfer,
    Paired,
}

#[derive(Args)]
struct BikeArgs {
    #[arg(long)]
    bike_dir: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    theta_p_deg: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta_s_deg: Option<f64>,
    /// Global rotation about X,Y,Z in degrees.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    rot_deg: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    translation: Option<[f64; 3]>,
    /// Derive crank and steering angles from the rider pose.
    #[arg(long)]
    derive: bool,
    #[arg(long, value_enum)]
    sh_mode: Option<ShModeArg>,
}

#[derive(Args)]
struct RiderArgs {
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[arg(long)]
    pose: Option<PathBuf>,
    #[arg(long)]
    rider_splats: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum)]
    gradient_mode: Option<GradientArg>,
    #[arg(long, value_enum)]
    objective_mode: Option<ObjectiveArg>,
    #[arg(long)]
    fd_step: Option<f64>,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    n_views: Option<usize>,
    #[arg(long)]
    azimuth_step_deg: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    fx: Option<f64>,
    #[arg(long)]
    fy: Option<f64>,
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    orbit_center: Option<[f64; 3]>,
}

/// Parses `x,y,z`.
fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))).collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected 3 comma-separated numbers, got {}", v.len()))
}

impl BikeArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(d) = &self.bike_dir {
            c.bike.dir = d.clone();
        }
        if let Some(v) = self.theta_p_deg {
            c.bike.theta_p_deg = v;
        }
        if let Some(v) = self.theta_s_deg {
            c.bike.theta_s_deg = v;
        }
        if let Some(v) = &self.rot_deg {
            c.bike.rot_deg = *v;
        }
        if let Some(v) = &self.translation {
            c.bike.translation = *v;
        }
        if self.derive {
            c.bike.derive = true;
        }
        if let Some(m) = self.sh_mode {
            c.bike.sh_mode = match m {
                ShModeArg::Full => ShMode::Full,
                ShModeArg::DcOnly => ShMode::DcOnly,
            };
        }
    }
}

impl RiderArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(p) = &self.skeleton {
            c.rider.skeleton = Some(p.clone());
        }
        if let Some(p) = &self.pose {
            c.rider.pose = p.clone();
        }
        if let Some(p) = &self.rider_splats {
            c.rider.splats = Some(p.clone());
        }
    }
}

impl RefineArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(v) = self.learning_rate {
            c.refine.learning_rate = v;
        }
        if let Some(v) = self.max_iters {
            c.refine.max_iters = v;
        }
        if let Some(v) = self.fd_step {
            c.refine.fd_step = v;
        }
        if let Some(m) = self.gradient_mode {
            c.refine.gradient_mode = match m {
                GradientArg::FiniteDifference => GradientMode::FiniteDifference,
                GradientArg::Analytic => GradientMode::Analytic,
            };
        }
        if let Some(m) = self.objective_mode {
            c.refine.objective_mode = match m {
                ObjectiveArg::Chamfer => ObjectiveMode::Chamfer,
                ObjectiveArg::Paired => ObjectiveMode::Paired,
            };
        }
    }
}

impl DatasetArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        let d = &mut c.dataset;
        if let Some(v) = self.n_views {
            d.n_views = v;
        }
        if let Some(v) = self.azimuth_step_deg {
            d.azimuth_step_deg = Some(v);
        }
        if let Some(v) = self.radius {
            d.radius = v;
        }
        if let Some(v) = self.width {
            d.width = v;
        }
        if let Some(v) = self.height {
            d.height = v;
        }
        if let Some(v) = self.fx {
            d.fx = v;
        }
        if let Some(v) = self.fy {
            d.fy = v;
        }
        if let Some(v) = &self.orbit_center {
            d.orbit_center = *v;
        }
    }
}

fn run(cli: Cli) -> Result<String, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::MakeFixtures { density, rider_per_bone } => {
            if let Some(d) = density {
                cfg.fixtures.density = *d;
            }
            if let Some(n) = rider_per_bone {
                cfg.fixtures.rider_per_bone = *n;
            }
        }
        Command::ReposeBike { bike } => bike.apply(&mut cfg),
        Command::DeriveAngles { bike, rider } => {
            bike.apply(&mut cfg);
            rider.apply(&mut cfg);
        }
        Command::Refine { bike, rider, refine } | Command::Compose { bike, rider, refine } => {
            bike.apply(&mut cfg);
            rider.apply(&mut cfg);
            refine.apply(&mut cfg);
        }
        Command::DatasetGen { bike, dataset } => {
            bike.apply(&mut cfg);
            dataset.apply(&mut cfg);
        }
    }
    cfg.validate()?;
    match cli.command {
        Command::MakeFixtures { .. } => pipeline::cmd_make_fixtures(&cfg),
        Command::ReposeBike { .. } => pipeline::cmd_repose_bike(&cfg),
        Command::DeriveAngles { .. } => {
            let (p, s) = pipeline::cmd_derive_angles(&cfg)?;
            Ok(format!("theta_p {:.6} deg, theta_s {:.6} deg", p.to_degrees(), s.to_degrees()))
        }
        Command::Refine { .. } => {
            let r = pipeline::cmd_refine(&cfg)?;
            Ok(format!(
                "initial loss {:.6e}, best loss {:.6e} at iteration {} of {}, {:.3} s",
                r.initial_loss,
                r.best_loss,
                r.best_iter,
                r.loss_trace.len() - 1,
                r.elapsed
            ))
        }
        Command::Compose { .. } => pipeline::cmd_compose(&cfg),
        Command::DatasetGen { .. } => {
            let n = pipeline::cmd_dataset_gen(&cfg)?;
            Ok(format!("{n} views written to {}", cfg.out.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
