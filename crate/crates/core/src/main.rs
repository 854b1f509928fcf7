//! Command-line front end: run scenario files, sweep the feasibility
//! matrix, or replay the canned demo scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sspsim::attacker::AttackerConfig;
use sspsim::pairing::IoCapability;
use sspsim::scenario::matrix::{feasibility_matrix, AttackerVariant};
use sspsim::scenario::report::{emit, render_matrix, render_result, ReportFormat};
use sspsim::scenario::{file, run_scenario, ScenarioError, ScenarioSpec, UserAgentPolicy};

#[derive(Parser)]
#[command(
    name = "sspsim",
    about = "Deterministic Bluetooth Secure Simple Pairing simulator with a man-in-the-middle testbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Text => ReportFormat::Text,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackerArg {
    None,
    JamOnly,
    Full,
    Downgrade,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoModel {
    JustWorks,
    Numeric,
    Passkey,
    Oob,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single pairing scenario from a TOML file.
    Pair {
        /// Scenario description file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the seed from the [run] section.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep attack success rates over all IO-capability combinations.
    Matrix {
        /// Seeded runs per matrix cell.
        #[arg(long, default_value_t = 100)]
        seeds: u32,
        #[arg(long, default_value_t = 1)]
        base_seed: u64,
        /// Restrict to one attacker column.
        #[arg(long, value_enum, default_value = "all")]
        attacker: AttackerArg,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned scenario for one association model and print the
    /// annotated transcript.
    Demo {
        #[arg(long, value_enum)]
        model: DemoModel,
        /// Add the man-in-the-middle attacker.
        #[arg(long)]
        attack: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn demo_spec(model: DemoModel, attack: bool, seed: u64) -> ScenarioSpec {
    let mut spec = match model {
        DemoModel::JustWorks => ScenarioSpec::honest(
            IoCapability::NoInputNoOutput,
            IoCapability::DisplayYesNo,
            false,
            seed,
        ),
        DemoModel::Numeric => ScenarioSpec::honest(
            IoCapability::DisplayYesNo,
            IoCapability::DisplayYesNo,
            false,
            seed,
        ),
        DemoModel::Passkey => ScenarioSpec::honest(
            IoCapability::KeyboardOnly,
            IoCapability::DisplayOnly,
            false,
            seed,
        ),
        DemoModel::Oob => {
            let mut spec = ScenarioSpec::honest(
                IoCapability::DisplayYesNo,
                IoCapability::DisplayYesNo,
                true,
                seed,
            );
            spec.device_a.config.policy.require_oob = true;
            spec.device_b.config.policy.require_oob = true;
            spec
        }
    };
    if attack {
        spec.attacker = Some(match model {
            // the comparison and passkey models fall to the downgrade
            DemoModel::Numeric | DemoModel::Passkey => AttackerConfig::downgrade(),
            _ => AttackerConfig::full(),
        });
        if matches!(model, DemoModel::Numeric | DemoModel::Passkey) {
            spec.device_a.user_agent = UserAgentPolicy::AlwaysAccept;
            spec.device_b.user_agent = UserAgentPolicy::AlwaysAccept;
        }
    }
    spec
}

fn run(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Pair {
            scenario,
            seed,
            format,
            out,
        } => {
            let spec = file::load_scenario(&scenario, seed)?;
            let result = run_scenario(&spec)?;
            emit(&render_result(&result, format.into()), out.as_deref())
        }
        Command::Matrix {
            seeds,
            base_seed,
            attacker,
            format,
            out,
        } => {
            if seeds == 0 {
                return Err(ScenarioError::InvalidSpec(
                    "matrix needs at least one seed per cell".into(),
                ));
            }
            let variants: Vec<AttackerVariant> = match attacker {
                AttackerArg::All => AttackerVariant::ALL.to_vec(),
                AttackerArg::None => vec![AttackerVariant::None],
                AttackerArg::JamOnly => vec![AttackerVariant::JamOnly],
                AttackerArg::Full => vec![AttackerVariant::Full],
                AttackerArg::Downgrade => vec![AttackerVariant::Downgrade],
            };
            let matrix = feasibility_matrix(base_seed, seeds, &variants);
            emit(&render_matrix(&matrix, format.into()), out.as_deref())
        }
        Command::Demo {
            model,
            attack,
            seed,
        } => {
            let result = run_scenario(&demo_spec(model, attack, seed))?;
            emit(&render_result(&result, ReportFormat::Text), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(ScenarioError::InvalidSpec(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(ScenarioError::IoFailure(err)) => {
            eprintln!("io error: {err}");
            ExitCode::from(2)
        }
    }
}
