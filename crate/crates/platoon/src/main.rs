use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use platoon::commands::{self, gain::GainOptions, DataSource};
use platoon::error::{Error, Result};
use platoon_core::model::{CtgParams, VtgParams};
use platoon_core::stability::OutputKind;

#[derive(Parser)]
#[command(name = "platoon", version, about = "VTG ACC synthesis, platoon simulation and string-stability analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write the trajectories as CSV.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Solve the Riccati equation at every step instead of using the gain schedule.
        #[arg(long)]
        exact_riccati: bool,
    },
    /// Estimate per-follower L2 gains from recorded or simulated trajectories.
    EstimateGain {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Output::Speed)]
        output: Output,
        /// Toeplitz window width (default floor(sqrt(N))).
        #[arg(long)]
        m: Option<usize>,
        /// Equilibrium window length, s.
        #[arg(long, default_value_t = 60.0)]
        window: f64,
        /// Standstill distance for gap outputs, m.
        #[arg(long)]
        s0: Option<f64>,
        /// Time gap for gap outputs, s.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Safety and energy indices per vehicle.
    Metrics {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        ttc_threshold: f64,
    },
    /// Fit CTG or IDM parameters to recorded pairs.
    Calibrate {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Tune VTG penalty weights by differential evolution.
    Tune {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Collision table over actuator lag and input delay.
    SweepDelay {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rise, settling, gain and energy over time gaps and weight sets.
    UserNeeds {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Solve the Riccati equation for one operating point.
    Synthesize(SynthArgs),
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct SourceArgs {
    /// Simulation CSV.
    #[arg(long, conflicts_with_all = ["campaign", "mapping"])]
    sim: Option<PathBuf>,
    /// Field-test CSV.
    #[arg(long, requires = "mapping")]
    campaign: Option<PathBuf>,
    /// Column mapping for `--campaign`.
    #[arg(long, requires = "campaign")]
    mapping: Option<PathBuf>,
}

impl SourceArgs {
    fn source(self) -> DataSource {
        match (self.sim, self.campaign, self.mapping) {
            (Some(simulation), _, _) => DataSource::Simulation { simulation },
            (None, Some(campaign), Some(mapping)) => DataSource::Campaign { campaign, mapping },
            _ => unreachable!("enforced by clap"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Output {
    Speed,
    Gap,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    k1: f64,
    #[arg(long)]
    k2: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 2.0)]
    s0: f64,
    #[arg(long)]
    rho_s: f64,
    #[arg(long)]
    rho_v: f64,
    #[arg(long)]
    rho_u: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    v_eq: f64,
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            config,
            out,
            exact_riccati,
        } => commands::simulate::run_simulate(&config, &out, exact_riccati).map(drop),
        Command::EstimateGain {
            source,
            out,
            output,
            m,
            window,
            s0,
            tau,
        } => {
            let opts = GainOptions {
                output: match output {
                    Output::Speed => OutputKind::Speed,
                    Output::Gap => OutputKind::Gap,
                },
                m,
                window,
                s0,
                tau,
            };
            commands::gain::run_estimate_gain(&source.source(), &opts, &out).map(drop)
        }
        Command::Metrics {
            source,
            out,
            ttc_threshold,
        } => commands::metrics::run_metrics(&source.source(), ttc_threshold, &out).map(drop),
        Command::Calibrate { config, out } => commands::calibrate::run_calibrate(&config, &out).map(drop),
        Command::Tune { config, out } => commands::tune::run_tune(&config, &out).map(drop),
        Command::SweepDelay { config, out } => commands::sweep::run_sweep(&config, &out).map(drop),
        Command::UserNeeds { config, out } => commands::user_needs::run_user_needs(&config, &out).map(drop),
        Command::Synthesize(a) => {
            let params = VtgParams::new(
                CtgParams {
                    k1: a.k1,
                    k2: a.k2,
                    tau: a.tau,
                    s0: a.s0,
                },
                a.rho_s,
                a.rho_v,
                a.rho_u,
                a.gamma,
            );
            let r = commands::synthesize::report(&params, a.v_eq)?;
            print!("{}", r.text);
            match r.error {
                Some(e) => Err(Error::numeric(e)),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
