use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod output;
mod run;
mod verify;

/// Exit codes.
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "anchor-sim",
    version,
    about = "Radar/communications resource allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo tracking campaign and write CSV/JSON results.
    Run(Box<RunArgs>),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
    /// Write a scenario file (random or preset) without running anything.
    Gen(GenArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with_all = ["gen_seed", "manifest"])]
    pub scenario: Option<PathBuf>,
    /// Generate a random scenario from this seed (needs --counts).
    #[arg(long, requires = "counts", conflicts_with = "manifest")]
    pub gen_seed: Option<u64>,
    /// MIMO,PAR,MSR,targets,macro-users for the generator, e.g. 3,3,2,2,6.
    #[arg(long)]
    pub counts: Option<String>,
    /// Rerun exactly what a previous manifest.json describes.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "anchor,uniform,random")]
    pub methods: String,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 10)]
    pub intervals: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads for trial-level parallelism (results do not depend on it).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Draw composite measures straight from their Fisher information.
    #[arg(long)]
    pub fast_mode: bool,

    #[arg(long = "anneal.tmax")]
    pub anneal_tmax: Option<f64>,
    #[arg(long = "anneal.tmin")]
    pub anneal_tmin: Option<f64>,
    #[arg(long = "anneal.dt")]
    pub anneal_dt: Option<f64>,
    #[arg(long = "anneal.retries")]
    pub anneal_retries: Option<usize>,
    #[arg(long = "ascent.eta")]
    pub ascent_eta: Option<f64>,
    #[arg(long = "ascent.max-iters")]
    pub ascent_max_iters: Option<usize>,
    #[arg(long = "ascent.tol")]
    pub ascent_tol: Option<f64>,
    #[arg(long = "outer.tol")]
    pub outer_tol: Option<f64>,
    #[arg(long = "outer.max-iters")]
    pub outer_max_iters: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Fast,
    Full,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(value_enum, default_value_t = Level::Fast)]
    level: Level,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Negative control: perturb the analytic gradient so its check fails.
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Reference,
    Desk3,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, conflicts_with = "gen_seed")]
    preset: Option<Preset>,
    /// Seed for gains and positions (the preset's, or the generator's).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, requires = "counts")]
    gen_seed: Option<u64>,
    #[arg(long)]
    counts: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: msg.into(),
        }
    }
}

impl From<anchor_core::Error> for Failure {
    fn from(e: anchor_core::Error) -> Self {
        let code = match &e {
            anchor_core::Error::Io(_) => EXIT_IO,
            e if e.is_infeasibility() => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    use anchor_core::scenario::{
        desk3_scenario, generate_random_scenario, reference_scenario, Counts, Region,
    };
    let s = match (args.preset, args.gen_seed) {
        (Some(Preset::Reference), _) => reference_scenario(args.seed),
        (Some(Preset::Desk3), _) => desk3_scenario(),
        (None, Some(seed)) => {
            let counts = Counts::parse(args.counts.as_deref().unwrap_or_default())?;
            generate_random_scenario(seed, counts, Region::default())?
        }
        (None, None) => return Err(Failure::config("need --preset or --gen-seed")),
    };
    s.save(&args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ANCHOR_SIM_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Verify(args) => verify::cmd_verify(args.level, args.seed, args.corrupt_gradient),
        Command::Gen(args) => gen(args),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
