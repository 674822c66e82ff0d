//! Command-line front end: `decaykit <verb> <experiment file> [options]`.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 for
//! configuration errors and 3 for runtime errors. The thread count follows
//! `RAYON_NUM_THREADS`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decaykit::harness::{exit_code, run_verify, ExperimentConfig, Mode, Overrides};

#[derive(Parser)]
#[command(name = "decaykit", version, about = "Predict and measure decay rates of nonlinear radial waves")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the exponent bootstrap and write its traces.
    Predict(Common),
    /// Evolve the scenario and write checkpoints and probe curves.
    Simulate(Common),
    /// Simulate, then write region statistics and fitted slopes.
    Measure(Common),
    /// Predict, simulate, measure and compare.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Radial grid spacing.
    #[arg(long)]
    dr: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_max: Option<f64>,
    /// Courant factor dt/dr before the background correction.
    #[arg(long)]
    courant: Option<f64>,
    /// Time spacing of stored frames.
    #[arg(long)]
    frame_dt: Option<f64>,
    /// Radial spacing of stored frames.
    #[arg(long)]
    frame_dr: Option<f64>,
    /// Allowed deviation of fitted exponents.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Start of the slope-fit window.
    #[arg(long)]
    fit_from: Option<f64>,
    /// End of the slope-fit window.
    #[arg(long)]
    fit_to: Option<f64>,
    /// Report the r^gamma balance for this gamma.
    #[arg(long)]
    gamma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, c) = match cli.verb {
        Verb::Predict(c) => (Mode::Predict, c),
        Verb::Simulate(c) => (Mode::Simulate, c),
        Verb::Measure(c) => (Mode::Measure, c),
        Verb::Verify(c) => (Mode::Verify, c),
    };
    let cfg = ExperimentConfig {
        scenario_path: c.scenario,
        out_dir: c.out,
        mode,
        overrides: Overrides {
            dr: c.dr,
            t_max: c.t_max,
            courant: c.courant,
            frame_dt: c.frame_dt,
            frame_dr: c.frame_dr,
            tolerance: c.tolerance,
            fit_from: c.fit_from,
            fit_to: c.fit_to,
            gamma: c.gamma,
        },
    };
    let result = run_verify(&cfg);
    match &result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("wrote {} files to {}", outcome.files.len(), cfg.out_dir.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
