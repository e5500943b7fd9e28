//! `multibubble`: command-line front end for the multi-bubble toolkit.
//!
//! Exit status: 0 when the computation ran and its checks hold, 2 when it ran
//! but a checked property failed, 1 on any error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use output::Context;

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "multibubble",
    version,
    about = "Multi-bubble dynamics for the critical heat equation"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GlobalArgs {
    /// Ambient dimension N (at least 7). Defaults to 7 where no config fixes it.
    #[arg(long, global = true)]
    pub dim: Option<u32>,

    /// Relative kernel cutoff for classification.
    #[arg(long, global = true, default_value_t = multibubble::configuration::DEFAULT_TOL)]
    pub tol: f64,

    /// Integrator relative tolerance.
    #[arg(long, global = true)]
    pub rtol: Option<f64>,

    /// Directory receiving report.json, manifest.json and default-named artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Print the full report as JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Universal constants kappa0, kappa1, kappaInf and the profile integrals.
    Constants,
    /// Degeneracy classification of a configuration file.
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit a configuration from one of the degenerate families.
    #[command(subcommand)]
    Family(FamilyCommand),
    /// Integrate the formal system from a configuration.
    Simulate(SimulateArgs),
    /// Power-law fit of one scale in a trajectory CSV.
    Rates(RatesArgs),
    /// Ratio set of the renormalized flow.
    #[command(subcommand)]
    Selfsim(SelfsimCommand),
    /// The symmetric degenerate rectangle.
    #[command(subcommand)]
    Rectangle(RectangleCommand),
    /// Run a named scenario and write its artifacts.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum FamilyCommand {
    /// Four-point family through the lozenge, parametrized by d3.
    Lozenge {
        #[arg(long, allow_hyphen_values = true)]
        d3: f64,
        /// Configuration output path (default: stdout, or config.json in --out-dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L orthogonal copies of the degenerate rectangle.
    Multikernel {
        #[arg(long = "L", alias = "l")]
        l: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Initial scales, comma separated; a single value applies to every bubble.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    pub lambda0: Vec<f64>,
    #[arg(long)]
    pub horizon: f64,
    /// First logarithmic checkpoint.
    #[arg(long, default_value_t = 1e-2)]
    pub t_first: f64,
    #[arg(long, default_value_t = 20)]
    pub per_decade: usize,
    /// Trajectory CSV path (default: trajectory.csv in --out-dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct RatesArgs {
    #[arg(long)]
    pub traj: PathBuf,
    /// Scale to fit, 1-based as in the `lambda_i` columns.
    #[arg(long, default_value_t = 1)]
    pub component: usize,
    #[arg(long, default_value_t = 2.0)]
    pub decades: f64,
    /// Expected exponent; a fit outside `--expect-tol` is a property failure.
    #[arg(long, allow_hyphen_values = true)]
    pub expect: Option<f64>,
    #[arg(long, default_value_t = 0.02)]
    pub expect_tol: f64,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum SelfsimCommand {
    /// Newton solve for a point of the ratio set of the configuration.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seed: Vec<f64>,
    },
    /// Renormalized flow check on a simulated trajectory.
    Check {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        decades: f64,
    },
}

#[derive(Args, Debug, Serialize)]
pub struct RectangleRun {
    #[arg(long, default_value_t = 1e4)]
    pub t0: f64,
    #[arg(long, default_value_t = 1e8)]
    pub horizon: f64,
    /// Rectangle CSV path (default: trajectory.csv in --out-dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum RectangleCommand {
    /// Shoot for the degenerate trajectory on the unstable coefficients.
    Shoot {
        #[command(flatten)]
        run: RectangleRun,
        #[arg(long, default_value_t = 0.1)]
        search_radius: f64,
        /// Skip the search and run a single trial from these unstable coefficients.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        coefficients: Option<Vec<f64>>,
    },
    /// Eigenvalues and spectral projectors of the linearization.
    Spectrum,
    /// q0, the approximate-solution coefficients and the rate prefactor.
    Constants,
    /// Backward run from the approximate solution.
    Verify {
        #[command(flatten)]
        run: RectangleRun,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScenarioCommand {
    /// Opposite-sign pair.
    Dipole {
        #[arg(long, default_value_t = 0.1)]
        lambda0: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 1e8)]
        horizon: f64,
    },
    /// Big and small bubble.
    Tower {
        #[arg(long, default_value_t = 0.5)]
        big: f64,
        #[arg(long, default_value_t = 0.01)]
        small: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 1e8)]
        horizon: f64,
        #[arg(long)]
        same_signs: bool,
    },
    /// Degenerate rectangle by shooting.
    Rectangle {
        #[arg(long, default_value_t = 1e4)]
        t0: f64,
        #[arg(long, default_value_t = 1e8)]
        horizon: f64,
    },
    /// Simulation of a configuration file with a rate check.
    Custom {
        #[command(flatten)]
        sim: SimulateArgs,
        #[arg(long, default_value_t = 1)]
        component: usize,
        #[arg(long, default_value_t = 2.0)]
        decades: f64,
        #[arg(long, allow_hyphen_values = true)]
        expect: Option<f64>,
        #[arg(long, default_value_t = 0.02)]
        expect_tol: f64,
    },
}

fn command_path(matches: &clap::ArgMatches) -> String {
    let mut parts = Vec::new();
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        parts.push(name.to_string());
        m = sub;
    }
    parts.join(" ")
}

fn dispatch(cli: &Cli, ctx: &mut Context) -> Result<output::Report, output::Failure> {
    use commands as c;
    match &cli.command {
        Command::Constants => c::constants(ctx),
        Command::Classify { config } => c::classify(ctx, config),
        Command::Family(FamilyCommand::Lozenge { d3, out }) => {
            c::family_lozenge(ctx, *d3, out.as_deref())
        }
        Command::Family(FamilyCommand::Multikernel { l, out }) => {
            c::family_multikernel(ctx, *l, out.as_deref())
        }
        Command::Simulate(args) => c::simulate(ctx, args),
        Command::Rates(args) => c::rates(ctx, args),
        Command::Selfsim(SelfsimCommand::Solve { config, seed }) => {
            c::selfsim_solve(ctx, config, seed)
        }
        Command::Selfsim(SelfsimCommand::Check {
            traj,
            config,
            decades,
        }) => c::selfsim_check(ctx, traj, config, *decades),
        Command::Rectangle(RectangleCommand::Shoot {
            run,
            search_radius,
            coefficients,
        }) => c::rectangle_shoot(ctx, run, *search_radius, coefficients.as_deref()),
        Command::Rectangle(RectangleCommand::Spectrum) => c::rectangle_spectrum(ctx),
        Command::Rectangle(RectangleCommand::Constants) => c::rectangle_constants(ctx),
        Command::Rectangle(RectangleCommand::Verify { run }) => c::rectangle_verify(ctx, run),
        Command::Scenario(ScenarioCommand::Dipole {
            lambda0,
            separation,
            horizon,
        }) => c::scenario_dipole(ctx, *lambda0, *separation, *horizon),
        Command::Scenario(ScenarioCommand::Tower {
            big,
            small,
            separation,
            horizon,
            same_signs,
        }) => c::scenario_tower(ctx, *big, *small, *separation, *horizon, *same_signs),
        Command::Scenario(ScenarioCommand::Rectangle { t0, horizon }) => {
            c::scenario_rectangle(ctx, *t0, *horizon)
        }
        Command::Scenario(ScenarioCommand::Custom {
            sim,
            component,
            decades,
            expect,
            expect_tol,
        }) => c::scenario_custom(ctx, sim, *component, *decades, *expect, *expect_tol),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let options = serde_json::to_value(&cli).unwrap_or(serde_json::Value::Null);
    let mut ctx = Context::new(cli.global.clone(), command_path(&matches), options);
    let result = dispatch(&cli, &mut ctx);
    ctx.finish(result)
}
