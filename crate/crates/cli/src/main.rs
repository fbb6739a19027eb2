use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use greengrid_api::{ApiService, AuthConfig};
use greengrid_core::ledger::file as ledger_file;
use greengrid_core::ledger::Verification;
use greengrid_sim::engine::{preset_table, METRICS_FILE};
use greengrid_sim::world::WORLD_FILE;
use greengrid_sim::{compare_presets, run, MetricsReport, Scenario, World};

#[derive(Parser)]
#[command(name = "greengrid", version, about = "E-waste chain-of-custody platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.json, ledger.ndjson and world.json.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<u32>,
        /// Participation preset: none, qr-app, gamified or monetary.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario once per preset with paired draws and tabulate.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long, value_delimiter = ',', default_value = "none,qr-app,gamified,monetary")]
        presets: Vec<String>,
    },
    /// Ledger file tools.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Print the metrics table of a simulation output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Serve the API over a saved state, a completed run, or a fresh city.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Run this scenario to completion first.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Directory holding world.json and ledger.ndjson; loaded when
        /// present, and where snapshots are written.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Token file of [[tokens]] tables; defaults to `<actor>-token` for
        /// every actor.
        #[arg(long)]
        tokens: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Re-verify the hash chain; exits 1 on the first bad event.
    Verify { file: PathBuf },
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>, days: Option<u32>) -> Result<Scenario, String> {
    let mut sc = match path {
        Some(p) => Scenario::load(p).map_err(|e| e.to_string())?,
        None => Scenario::default(),
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(d) = days {
        sc.days = d;
    }
    sc.validate().map_err(|e| e.to_string())?;
    Ok(sc)
}

fn simulate(
    scenario: Option<&Path>,
    seed: Option<u64>,
    days: Option<u32>,
    preset: Option<String>,
    out: &Path,
) -> Result<(), String> {
    let mut sc = load_scenario(scenario, seed, days)?;
    if let Some(p) = preset {
        sc.rewards.preset = p;
        sc.rewards.multiplier = None;
        sc.validate().map_err(|e| e.to_string())?;
    }
    let result = run(sc).map_err(|e| e.to_string())?;
    result.write_to(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let s = &result.report.summary;
    println!(
        "{} days, {} deposits, {:.3} kg collected, {} ledger events -> {}",
        s.days,
        s.deposits,
        s.collected_kg,
        s.ledger_len,
        out.display()
    );
    Ok(())
}

fn verify(file: &Path) -> Result<bool, String> {
    let v = ledger_file::verify_file(file).map_err(|e| format!("{}: {e}", file.display()))?;
    match v {
        Verification::Ok { length, head } => {
            println!("ok: {length} events, head {}", head.to_hex());
            Ok(true)
        }
        Verification::Broken { first_bad_seq, violation } => {
            println!("FAILED: first_bad_seq {first_bad_seq} ({violation:?})");
            Ok(false)
        }
    }
}

fn report(dir: &Path) -> Result<(), String> {
    let path = dir.join(METRICS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let report: MetricsReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    print!("{}", report.to_table());
    Ok(())
}

fn serve(port: u16, scenario: Option<&Path>, state: Option<PathBuf>, tokens: Option<&Path>) -> Result<(), String> {
    let world = match &state {
        Some(dir) if dir.join(WORLD_FILE).exists() => World::load(dir).map_err(|e| e.to_string())?,
        _ => match scenario {
            Some(p) => run(load_scenario(Some(p), None, None)?).map_err(|e| e.to_string())?.world,
            None => World::new(Scenario::default()).map_err(|e| e.to_string())?,
        },
    };
    let auth = match tokens {
        Some(p) => AuthConfig::load(p)?,
        None => AuthConfig::demo(&world.state.actors),
    };
    let service = Arc::new(ApiService::new(world, &auth, state)?);
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    println!("listening on http://{addr} ({} tokens)", auth.tokens.len());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(greengrid_api::http::serve(service, addr)).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, seed, days, preset, out } => {
            simulate(scenario.as_deref(), seed, days, preset, &out).map(|_| true)
        }
        Command::Compare { scenario, seed, days, presets } => load_scenario(scenario.as_deref(), seed, days)
            .and_then(|sc| {
                let names: Vec<&str> = presets.iter().map(String::as_str).collect();
                compare_presets(&sc, &names).map_err(|e| e.to_string())
            })
            .map(|rows| {
                print!("{}", preset_table(&rows));
                true
            }),
        Command::Ledger { command: LedgerCommand::Verify { file } } => verify(&file),
        Command::Report { input } => report(&input).map(|_| true),
        Command::Serve { port, scenario, state, tokens } => {
            serve(port, scenario.as_deref(), state, tokens.as_deref()).map(|_| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
