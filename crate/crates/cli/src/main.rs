//! `parax`: scenario runner for the ledger simulator.
//!
//! Exit codes: 0 run and audit pass, 2 configuration problem, 3 audit
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use parax_core::audit::audit_blocks_file;
use parax_core::config::{validate_config, validate_offer, ConfigError, ScenarioConfig, SwapSpec};
use parax_core::scenario::{run_scenario, RunReport};

#[derive(Parser)]
#[command(name = "parax", version, about = "Deterministic ledger-design simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write reports, metrics, and traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config (and PARAX_SEED) seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's out_dir or `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run N independent seeds of the scenario in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: u64,
    },
    /// Replay a run's outputs from genesis and re-check every invariant.
    Audit { dir: PathBuf },
    /// Run a cross-chain swap described by an offer file on top of a
    /// scenario config.
    Swap {
        #[arg(long)]
        offer: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_AUDIT: u8 = 3;

fn load_config(path: &Path, seed_flag: Option<u64>) -> Result<ScenarioConfig, ConfigError> {
    let mut config = validate_config(path)?;
    if let Ok(value) = std::env::var("PARAX_SEED") {
        match value.parse::<u64>() {
            Ok(seed) => config.seed = seed,
            Err(_) => {
                return Err(ConfigError::Schema(vec![format!(
                    "PARAX_SEED is not a valid seed: `{value}`"
                )]))
            }
        }
    }
    if let Some(seed) = seed_flag {
        config.seed = seed;
    }
    Ok(config)
}

fn print_report(report: &RunReport) {
    println!(
        "seed {}: {} cycles, {} submitted, {} finalized, {} rejected, audit {}",
        report.seed,
        report.cycles,
        report.submitted,
        report.chains.iter().map(|c| c.finalized).sum::<u64>(),
        report.chains.iter().map(|c| c.rejected).sum::<u64>(),
        if report.audit.pass { "pass" } else { "FAIL" }
    );
    if let Some(v) = &report.audit.first_violation {
        eprintln!("first violation: {v}");
    }
    if let Some(swap) = &report.swap {
        println!(
            "swap {}: {} (fees {:.4}% of {})",
            swap.swap_id,
            swap.phase,
            swap.fee_fraction * 100.0,
            swap.exchanged_value
        );
    }
    if let Some(points) = &report.scaling {
        for p in points {
            println!("scaling x{}: {} nodes, {} finalized", p.factor, p.nodes, p.finalized);
        }
    }
}

fn cmd_run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, jobs: u64) -> u8 {
    let base = match load_config(&config, seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let out_dir = out
        .or_else(|| base.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    if jobs <= 1 {
        return match run_scenario(&base, Some(&out_dir)) {
            Ok(report) => {
                print_report(&report);
                if report.audit.pass {
                    0
                } else {
                    EXIT_AUDIT
                }
            }
            Err(e) => {
                eprintln!("run failed: {e}");
                EXIT_AUDIT
            }
        };
    }

    // independent seeds, each fully isolated in its own directory
    let mut worst = 0u8;
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for j in 0..jobs {
            let mut config = base.clone();
            config.seed = base.seed + j;
            let dir = out_dir.join(format!("seed-{}", config.seed));
            handles.push(scope.spawn(move || match run_scenario(&config, Some(&dir)) {
                Ok(report) => (report.audit.pass, Some(report), None),
                Err(e) => (false, None, Some(e.to_string())),
            }));
        }
        for handle in handles {
            let (pass, report, error) = handle.join().expect("worker does not panic");
            if let Some(report) = report {
                print_report(&report);
            }
            if let Some(error) = error {
                eprintln!("run failed: {error}");
            }
            if !pass {
                worst = EXIT_AUDIT;
            }
        }
    });
    worst
}

fn cmd_audit(dir: PathBuf) -> u8 {
    let path = dir.join("blocks.bin");
    match audit_blocks_file(&path) {
        Ok(reports) => {
            let mut ok = true;
            for report in &reports {
                println!(
                    "chain {}: {} blocks, {} txs, {}",
                    report.chain_id,
                    report.blocks,
                    report.txs,
                    if report.pass() { "pass" } else { "FAIL" }
                );
                if let Some(v) = report.violations.first() {
                    eprintln!("first violation: {v}");
                    ok = false;
                }
            }
            if ok {
                0
            } else {
                EXIT_AUDIT
            }
        }
        Err(e) => {
            eprintln!("audit failed: {e}");
            EXIT_AUDIT
        }
    }
}

fn cmd_swap(offer: PathBuf, config: PathBuf) -> u8 {
    let offer = match validate_offer(&offer) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let mut scenario = match load_config(&config, None) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    scenario.swap = Some(SwapSpec {
        amount_a: offer.amount_a,
        amount_b: offer.amount_b,
        timeout_cycles: offer.timeout_cycles,
        fee_bps: offer.fee_bps,
        start_cycle: 2,
        chain_b_nodes: Vec::new(),
    });
    let out_dir = scenario.out_dir.clone().map(PathBuf::from);
    match run_scenario(&scenario, out_dir.as_deref()) {
        Ok(report) => {
            print_report(&report);
            let published = report
                .swap
                .as_ref()
                .map(|s| s.phase == "published")
                .unwrap_or(false);
            if report.audit.pass && published {
                0
            } else {
                EXIT_AUDIT
            }
        }
        Err(e) => {
            eprintln!("swap run failed: {e}");
            EXIT_AUDIT
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            jobs,
        } => cmd_run(config, seed, out, jobs),
        Command::Audit { dir } => cmd_audit(dir),
        Command::Swap { offer, config } => cmd_swap(offer, config),
    };
    ExitCode::from(code)
}
