use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iofp_sync_cli::{check, exit, resolve, run, CheckKind, Overrides, ScenarioError, PRESETS};

#[derive(Parser)]
#[command(
    name = "iofp-sync",
    version,
    about = "Simulate and verify adaptive output synchronization of Lur'e networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled preset.
    Run {
        /// Path to a TOML scenario, or a preset name.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Final time.
        #[arg(long = "T", alias = "t-final")]
        t_final: Option<f64>,
        /// Integration step.
        #[arg(long)]
        dt: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: Option<String>,
        /// Replace the controller family.
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Verify graph identities, passivity or lemma identities for a scenario.
    Check {
        /// graph, passivity or lemmas.
        what: CheckKind,
        scenario: String,
    },
    /// Bundled presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names and descriptions.
    List,
}

fn scenario_code(e: &ScenarioError) -> i32 {
    match e {
        ScenarioError::Io { .. } => exit::OTHER,
        _ => exit::VALIDATION,
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(Cli::parse()) as u8)
}

/// Executes a parsed command line and returns the process exit code.
fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            t_final,
            dt,
            out,
            controller,
            no_plots,
        } => match resolve(&scenario) {
            Err(e) => {
                eprintln!("error: {e}");
                scenario_code(&e)
            }
            Ok(s) => {
                let ov = Overrides {
                    seed,
                    t_final,
                    dt,
                    out,
                    controller,
                    no_plots,
                };
                let (report, dir, res) = run(&s, &ov);
                println!(
                    "{}: status {}, report in {}",
                    report.scenario,
                    report.status,
                    dir.join("report.json").display()
                );
                if let (Some(e), Some(tail)) = (report.final_sync_error, report.tail_max_sync_error) {
                    println!("final sync error {e:.3e}, max over final fifth {tail:.3e}");
                }
                match res {
                    Ok(()) => exit::OK,
                    Err(e) => {
                        eprintln!("error: {e}");
                        e.exit_code()
                    }
                }
            }
        },
        Command::Check { what, scenario } => match resolve(&scenario).and_then(|s| check(what, &s)) {
            Err(e) => {
                eprintln!("error: {e}");
                scenario_code(&e)
            }
            Ok(report) => {
                println!("{report}");
                if report.pass() {
                    exit::OK
                } else {
                    exit::CHECK_FAILED
                }
            }
        },
        Command::Presets {
            action: PresetAction::List,
        } => {
            for p in PRESETS {
                let description = iofp_sync_cli::preset(p.name).map(|s| s.description).unwrap_or_default();
                println!("{:<26} {description}", p.name);
            }
            exit::OK
        }
    }
}
