use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geoflow::config::Config;
use geoflow::pipeline::{write_desk_config, Pipeline, PipelineError, Stage};
use geoflow::synth::{
    generate_events, write_synth_dir, EventConfig, GravityParams, HomeMotion, SynthWorld, UserAllocation, WorldConfig,
};

const EXIT_CODES: &str = "\
Exit status:
  0  success
  1  I/O failure while reading or writing artifacts
  2  invalid command line
  3  malformed or invalid config key (file or GEOFLOW_ override)
  4  missing input file named by the config or command line
  5  stage-order violation: a predecessor stage's artifact is missing
  6  malformed data in an input or artifact file

Environment:
  GEOFLOW_<KEY>             overrides a top-level key, e.g. GEOFLOW_SEED=7
  GEOFLOW_<SECTION>__<KEY>  overrides a section key, e.g. GEOFLOW_CLEAN__COVERAGE=0.9
Values are parsed as JSON, falling back to a plain string.";

#[derive(Parser)]
#[command(name = "geoflow", version, about = "Country-level mobility networks from geo-located events", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(short, long, default_value = "geoflow.json")]
    config: PathBuf,
    /// Also write wide per-day tables for plotting.
    #[arg(long)]
    plot_tables: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse events and assign countries.
    Ingest(Common),
    /// Speed and source-popularity filters.
    Clean(Common),
    /// Residence per user and per-country statistics.
    Profile(Common),
    /// Mobility rates, gyration, displacements and daily series.
    Metrics(Common),
    /// Flow network, normalization, balances and top flows.
    Network(Common),
    /// Hierarchical community partition of the flow network.
    Communities(Common),
    /// Gravity model fits (raw and estimated flows).
    FitGravity(Common),
    /// Power-law fits of displacements and gyration radii.
    FitPowerlaw(Common),
    /// Correlate estimated inbound flows with a reference table.
    Validate {
        #[command(flatten)]
        common: Common,
        /// `code,arrivals_thousands,receipts_musd`; defaults to report.reference.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Write a synthetic world, its events and truth files, and a config.
    Synth(SynthArgs),
    /// Run every stage in order, or one stage with --stage.
    Run {
        #[command(flatten)]
        common: Common,
        /// ingest, clean, profile (or residence), metrics, network, communities, fit.
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Aggregate summary of existing artifacts.
    Report(Common),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    countries: usize,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 1.0)]
    block_boost: f64,
    /// Total users, split by penetration times population.
    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 50)]
    events_per_user: usize,
    #[arg(long, default_value_t = 0.3)]
    trip_rate: f64,
    #[arg(long, default_value_t = 2012)]
    year: i32,
    /// Gravity exponents alpha, beta, gamma.
    #[arg(long, num_args = 3, value_names = ["ALPHA", "BETA", "GAMMA"])]
    gravity: Option<Vec<f64>>,
    /// Levy-walk exponent for home movement instead of Gaussian jitter.
    #[arg(long)]
    levy: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    bot_fraction: f64,
}

fn load(common: &Common) -> Result<Pipeline, PipelineError> {
    if !common.config.is_file() {
        return Err(PipelineError::MissingInput(common.config.clone()));
    }
    let mut cfg = Config::load(&common.config, std::env::vars())?;
    cfg.report.plot_tables |= common.plot_tables;
    Ok(Pipeline::new(cfg))
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("plain data serializes"));
}

fn synth(a: &SynthArgs) -> Result<(), PipelineError> {
    let mut world_cfg = WorldConfig {
        countries: a.countries,
        blocks: a.blocks,
        seed: a.seed,
        block_boost: a.block_boost,
        ..Default::default()
    };
    if let Some(g) = &a.gravity {
        world_cfg.gravity = GravityParams { alpha: g[0], beta: g[1], gamma: g[2], ..world_cfg.gravity };
    }
    let mut ev = EventConfig {
        users: UserAllocation::Total(a.users),
        events_per_user: a.events_per_user,
        trip_rate: a.trip_rate,
        year: a.year,
        bot_fraction: a.bot_fraction,
        ..Default::default()
    };
    if let Some(exponent) = a.levy {
        ev.home_motion = HomeMotion::LevyWalk { exponent, xmin_km: 1.0, xmax_km: 1e4 };
    }
    let bad = |e: geoflow::synth::SynthError| PipelineError::Data { file: a.out.clone(), reason: e.to_string() };
    let world = SynthWorld::generate(&world_cfg).map_err(bad)?;
    let out = generate_events(&world, &ev).map_err(bad)?;
    write_synth_dir(&a.out, &world, &out).map_err(bad)?;
    let cfg = write_desk_config(&a.out, a.year)?;
    eprintln!("wrote {} events for {} users; config {}", out.events.len(), out.truth.residences.len(), cfg.display());
    Ok(())
}

fn stage(common: &Common, s: Stage) -> Result<(), PipelineError> {
    load(common)?.run_stage(s)?;
    eprintln!("{s}: ok");
    Ok(())
}

fn run(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Ingest(c) => stage(&c, Stage::Ingest),
        Command::Clean(c) => stage(&c, Stage::Clean),
        Command::Profile(c) => stage(&c, Stage::Profile),
        Command::Metrics(c) => stage(&c, Stage::Metrics),
        Command::Network(c) => stage(&c, Stage::Network),
        Command::Communities(c) => stage(&c, Stage::Communities),
        Command::FitGravity(c) => {
            let p = load(&c)?;
            print_json(&p.with_workers(|| p.fit_gravity())??);
            Ok(())
        }
        Command::FitPowerlaw(c) => {
            let p = load(&c)?;
            print_json(&p.with_workers(|| p.fit_powerlaw())??);
            Ok(())
        }
        Command::Validate { common, reference } => {
            print_json(&load(&common)?.validate(reference.as_deref())?);
            Ok(())
        }
        Command::Synth(a) => synth(&a),
        Command::Run { common, stage: Some(s) } => stage(&common, s),
        Command::Run { common, stage: None } => {
            print_json(&load(&common)?.run_all()?);
            Ok(())
        }
        Command::Report(c) => {
            print_json(&load(&c)?.report()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
