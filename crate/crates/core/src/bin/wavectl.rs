use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wavectl::workbench::{run, Command, RunOptions, OUT_ENV};

#[derive(Parser)]
#[command(name = "wavectl", about = "Wave propagation, energy decay and boundary control workbench")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the scenario data and write snapshots and energy.csv.
    Simulate(Common),
    /// Ensemble local-energy decay; writes decay.csv and fit.json.
    Decay(Common),
    /// Synthesize a boundary control; writes control.csv and synthesis_report.json.
    Control(Common),
    /// Re-simulate with a control signal from control.csv.
    Verify {
        #[command(flatten)]
        common: Common,
        /// control.csv produced by `wavectl control`.
        #[arg(long)]
        control: PathBuf,
    },
    /// Ray survey; writes rays.csv and escape_report.json.
    Rays {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_rays: Option<usize>,
    },
    /// Compare the time stepper with the dense spectral oracle.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file or preset name (fig1a, fig4a, two-disc, ...).
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory; defaults to $WAVECTL_OUT/<scenario>-<command>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Control horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid spacing.
    #[arg(long)]
    grid: Option<f64>,
    /// Explicit time step.
    #[arg(long)]
    dt: Option<f64>,
}

impl Common {
    fn options(self) -> RunOptions {
        RunOptions {
            scenario: self.scenario,
            out: self.out,
            horizon: self.horizon,
            alpha: self.alpha,
            beta: self.beta,
            tol: self.tol,
            seed: self.seed,
            grid: self.grid,
            time_step: self.dt,
            ..Default::default()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, opts) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c.options()),
        Cmd::Decay(c) => (Command::Decay, c.options()),
        Cmd::Control(c) => (Command::Control, c.options()),
        Cmd::Verify { common, control } => (
            Command::Verify,
            RunOptions {
                control: Some(control),
                ..common.options()
            },
        ),
        Cmd::Rays { common, n_rays } => (Command::Rays, RunOptions { n_rays, ..common.options() }),
        Cmd::OracleCheck(c) => (Command::OracleCheck, c.options()),
    };
    let outcome = run(cmd, &opts);
    match &outcome.out_dir {
        Some(dir) => eprintln!("wavectl {}: {} [{}]", cmd.as_str(), outcome.message, dir.display()),
        None => eprintln!("wavectl {}: {} (set --out or {OUT_ENV})", cmd.as_str(), outcome.message),
    }
    ExitCode::from(outcome.exit_code.clamp(0, 255) as u8)
}
