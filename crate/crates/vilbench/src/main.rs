use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vilbench::cockpit::{serve_cockpit, CockpitOptions};
use vilbench::harness::peers::{serve_cecas, serve_gateway};
use vilbench::harness::{
    replay, report, run_stage, Endpoints, FaultPlan, HarnessError, RunLog, ScenarioConfig, StageConfig,
    StageKind, Termination,
};

const EXIT_DIVERGED: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "vilbench", version, about = "Virtual vehicle-in-the-loop test bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write run.csv, run.json and a report to --out.
    Run(RunArgs),
    /// Summarize a recorded run.
    Report { run_dir: PathBuf },
    /// Re-run a recorded internal-stage run and compare every row.
    Replay { run_dir: PathBuf },
    /// Serve the live cockpit WebSocket at /cockpit.
    ServeCockpit {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scenario to drive; defaults to an open-ended manual drive.
        #[arg(long)]
        scenario: Option<String>,
        /// Session length in seconds for the default manual drive.
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        /// Write each session's log under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit after this many sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Serve the central car server as a standalone peer.
    ServeCecas {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Serve the vehicle motion gateway as a standalone peer.
    ServeGateway {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Internal,
    External,
    Vil,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    /// Preset name or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    camera_fps: Option<f64>,
    #[arg(long)]
    tick_ms: Option<f64>,
    #[arg(long, conflicts_with = "free_running")]
    lockstep: bool,
    #[arg(long)]
    free_running: bool,
    #[arg(long)]
    kill_primary_at: Option<f64>,
    #[arg(long)]
    kill_secondary_at: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    transport_delay_ms: f64,
    /// Address of a running central car server; one is started in-process otherwise.
    #[arg(long)]
    cecas: Option<String>,
    /// Address of a running gateway (vil stage).
    #[arg(long)]
    gateway: Option<String>,
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::ScenarioDiverged { .. } | HarnessError::DivergenceFound(_) | HarnessError::World(_) => {
            EXIT_DIVERGED
        }
        HarnessError::ProtocolViolation(_) | HarnessError::PeerUnreachable(_) => EXIT_PROTOCOL,
        HarnessError::Config(_) | HarnessError::NoTriggers | HarnessError::Io(_) => EXIT_CONFIG,
    }
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("vilbench: {e}");
    ExitCode::from(exit_code(&e))
}

fn scenario_for(args: &RunArgs) -> Result<ScenarioConfig, HarnessError> {
    let mut sc = ScenarioConfig::resolve(&args.scenario)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(fps) = args.camera_fps {
        sc.camera.fps = fps;
    }
    if let Some(ms) = args.tick_ms {
        sc.tick_period = ms / 1000.0;
    }
    sc.validate()?;
    Ok(sc)
}

fn stage_for(args: &RunArgs) -> StageConfig {
    let kind = match args.stage {
        Stage::Internal => StageKind::Internal,
        Stage::External => StageKind::External,
        Stage::Vil => StageKind::Vil,
    };
    StageConfig {
        endpoints: Endpoints {
            cecas: args.cecas.clone(),
            gateway: args.gateway.clone(),
        },
        lockstep: !args.free_running,
        transport_delay: args.transport_delay_ms / 1000.0,
        faults: FaultPlan {
            kill_primary_at: args.kill_primary_at,
            kill_secondary_at: args.kill_secondary_at,
        },
        ..StageConfig::new(kind)
    }
}

fn write_run(log: &RunLog, out: &Path) -> Result<(), HarnessError> {
    log.write_dir(out)?;
    let r = report(log);
    r.write_dir(out)?;
    print!("{}", r.to_text());
    Ok(())
}

fn run(args: RunArgs) -> ExitCode {
    let outcome = scenario_for(&args).and_then(|sc| run_stage(&sc, &stage_for(&args)));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_run(&outcome.log, &args.out) {
        return fail(e);
    }
    match &outcome.log.termination {
        Termination::Diverged { tick, reason } => {
            eprintln!("vilbench: scenario diverged at tick {tick}: {reason}");
            ExitCode::from(EXIT_DIVERGED)
        }
        _ => ExitCode::SUCCESS,
    }
}

fn bind(host: &str, port: u16) -> Result<TcpListener, HarnessError> {
    let l = TcpListener::bind((host, port))?;
    eprintln!("listening on {}", l.local_addr()?);
    Ok(l)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => return run(args),
        Command::Report { run_dir } => RunLog::read_dir(&run_dir).and_then(|log| {
            let r = report(&log);
            r.write_dir(&run_dir)?;
            print!("{}", r.to_text());
            Ok(())
        }),
        Command::Replay { run_dir } => RunLog::read_dir(&run_dir).and_then(|log| {
            replay(&log)?;
            println!("replay matches: {} rows identical", log.rows.len());
            Ok(())
        }),
        Command::ServeCockpit {
            port,
            host,
            scenario,
            duration,
            out,
            sessions,
        } => (|| {
            let mut opts = CockpitOptions::manual(duration);
            if let Some(s) = scenario {
                opts.scenario = ScenarioConfig::resolve(&s)?;
            }
            opts.out = out;
            opts.max_sessions = sessions;
            let l = bind(&host, port)?;
            eprintln!("cockpit at ws://{}/cockpit", l.local_addr()?);
            serve_cockpit(l, &opts)
        })(),
        Command::ServeCecas { port, host } => bind(&host, port).and_then(serve_cecas),
        Command::ServeGateway { port, host } => bind(&host, port).and_then(serve_gateway),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
