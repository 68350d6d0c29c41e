//! `trellis`: operate a framework node from the shell.
//!
//! `serve` hosts a node; every other remote subcommand is a thin client
//! over the node's northbound HTTP wire, so the CLI exercises exactly the
//! surface any integrator sees. `scenario run` needs no server at all.

mod commands;
mod config;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trellis_core::descriptor::WireFormat;

pub const EXIT_OK: u8 = 0;
/// A request reached the node and came back as a framework error, or a
/// scenario ran and failed its assertions.
pub const EXIT_REQUEST: u8 = 1;
/// The operator's own input was unusable: flags, config files, payloads.
pub const EXIT_USAGE: u8 = 2;
/// `serve` could not take its sockets.
pub const EXIT_BIND: u8 = 3;

#[derive(Parser)]
#[command(
    name = "trellis",
    version,
    about = "Run and operate a trellis integration node",
    disable_help_subcommand = true
)]
struct Cli {
    /// Emit machine-readable JSON instead of human-oriented text
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host a node until interrupted
    Serve {
        /// TOML config file (listen addresses, devices, framework tuning)
        config: PathBuf,
    },
    /// Inspect the live registry
    Registry {
        #[command(subcommand)]
        command: RegistryCommand,
    },
    /// Invoke a capability once and print the response envelope
    Call {
        /// Capability name, lowercase dotted segments
        capability: String,
        /// Node address
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
        /// Wire format for both the request and the response
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        /// Consumer token; omit to be turned away
        #[arg(long, value_name = "T")]
        token: Option<String>,
        /// Per-request deadline override
        #[arg(long, value_name = "MS")]
        deadline: Option<u64>,
        /// Request body as JSON
        #[arg(long, default_value = "null")]
        payload: String,
        /// Message id for the request envelope
        #[arg(long, default_value = "cli-1")]
        id: String,
    },
    /// Register a composite capability from a JSON spec file
    Compose {
        /// CompositeSpec JSON file
        file: PathBuf,
        /// Node address
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
    },
    /// Split a composite into direct member calls from a JSON spec file
    Split {
        /// Split request JSON file
        file: PathBuf,
        /// Node address
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
    },
    /// Read the transaction audit trail
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// Run simulation scenarios
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// List live services and registered composites
    Ls {
        /// Node address
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Stream audit records, one per line
    Tail {
        /// Node address
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
        /// Start after this sequence number
        #[arg(long, default_value_t = 0)]
        after: u64,
        /// Keep polling for new records instead of exiting
        #[arg(long)]
        follow: bool,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Execute a scenario file and report the outcome
    Run {
        /// Scenario JSON file
        file: PathBuf,
        /// Override the scenario's virtual clock seed
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Xml,
}

impl From<FormatArg> for WireFormat {
    fn from(arg: FormatArg) -> WireFormat {
        match arg {
            FormatArg::Json => WireFormat::Json,
            FormatArg::Xml => WireFormat::Xml,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    let code = match cli.command {
        Command::Serve { config } => serve::serve(&config, json),
        Command::Registry { command: RegistryCommand::Ls { addr } } => {
            commands::registry_ls(&addr, json)
        }
        Command::Call { capability, addr, format, token, deadline, payload, id } => {
            commands::call(
                &commands::CallParams {
                    addr: &addr,
                    capability: &capability,
                    format: format.into(),
                    token: token.as_deref(),
                    deadline_ms: deadline,
                    payload: &payload,
                    id: &id,
                },
                json,
            )
        }
        Command::Compose { file, addr } => commands::register_file(&addr, &file, "/compose", json),
        Command::Split { file, addr } => commands::register_file(&addr, &file, "/split", json),
        Command::Audit { command: AuditCommand::Tail { addr, after, follow } } => {
            commands::audit_tail(&addr, after, follow, json)
        }
        Command::Scenario { command: ScenarioCommand::Run { file, seed } } => {
            commands::scenario_run(&file, seed, json)
        }
    };
    ExitCode::from(code)
}
