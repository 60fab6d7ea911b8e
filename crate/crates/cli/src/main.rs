mod commands;
mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::process::ExitCode;

use clap::{Arg, ArgAction, Command};
use serde::Serialize;

use commands::{execute, globals, RunStatus};
use config::{commands as command_specs, flag_name, parse_file, resolve, GLOBAL_KEYS};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_CONFIG: u8 = 65;
pub const EXIT_IO: u8 = 74;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] elhom_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use elhom_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Core(E::Io(_)) => EXIT_IO,
            CliError::Core(E::NotConverged { .. } | E::AllStartsFailed | E::IndefiniteForm(_)) => EXIT_NOT_CONVERGED,
            CliError::Core(
                E::InvalidParameter(_)
                | E::InvalidDelta(_)
                | E::UnsupportedLoad(_)
                | E::FitIllConditioned(_)
                | E::UnresolvedGeometry(_)
                | E::NotExpandable(_),
            ) => EXIT_CONFIG,
            CliError::Core(_) => 1,
        }
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("elhom")
        .about("Periodic homogenization and linearization experiments for nonconvex elastic energies")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("config").long("config").value_name("FILE").global(true).help("key = value configuration file"));
    for k in GLOBAL_KEYS {
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(flag_name(k.name))
                .value_name("VALUE")
                .global(true)
                .help(format!("{} [default: {}]", k.help, k.default)),
        );
    }
    for spec in command_specs() {
        let mut sub = Command::new(spec.name).about(spec.about);
        if spec.density {
            sub = sub.arg(
                Arg::new("density")
                    .long("density")
                    .value_name("NAME")
                    .help("shorthand: dist2 or stvk sets the base, homogeneous/layered/prestressed the microstructure"),
            );
        }
        for k in &spec.keys {
            sub = sub.arg(
                Arg::new(k.name)
                    .long(flag_name(k.name))
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(format!("{} [default: {}]", k.help, k.default)),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema: u32,
    command: &'a str,
    config: &'a BTreeMap<String, String>,
    status: RunStatus,
    report: serde_json::Value,
}

fn run(argv: Vec<OsString>) -> Result<u8, CliError> {
    let matches = match cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return Ok(code);
        }
    };
    let (name, sub) = matches.subcommand().ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
    let specs = command_specs();
    let spec = specs.iter().find(|s| s.name == name).ok_or_else(|| CliError::Usage(format!("unknown subcommand '{name}'")))?;

    let file = match sub.get_one::<String>("config") {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
            Some(parse_file(&text)?)
        }
        None => None,
    };
    let mut flags = Vec::new();
    let mut names: Vec<&str> = GLOBAL_KEYS.iter().map(|k| k.name).collect();
    if spec.density {
        names.push("density");
    }
    names.extend(spec.keys.iter().map(|k| k.name));
    for n in names {
        if let Some(v) = sub.get_one::<String>(n) {
            flags.push((n.to_string(), v.clone()));
        }
    }
    let env_threads = std::env::var("ELHOM_THREADS").ok();
    let cfg = resolve(spec, file.as_ref(), &flags, env_threads)?;
    let g = globals(&cfg)?;
    let outcome = execute(&cfg, &g)?;

    fs::create_dir_all(&g.output_dir)?;
    let envelope = Envelope { schema: 1, command: name, config: &cfg.values, status: outcome.status, report: outcome.report };
    let mut json = serde_json::to_string_pretty(&envelope).expect("reports serialize");
    json.push('\n');
    let json_path = g.output_dir.join(format!("{name}.json"));
    fs::write(&json_path, json)?;
    fs::write(g.output_dir.join(format!("{name}.csv")), outcome.csv)?;
    for (file, bytes) in outcome.extra {
        fs::write(g.output_dir.join(file), bytes)?;
    }
    println!("{name}: {:?}, report written to {}", outcome.status, json_path.display());
    Ok(match outcome.status {
        RunStatus::Ok => 0,
        RunStatus::ValidationFailed => EXIT_VALIDATION,
        RunStatus::NotConverged => EXIT_NOT_CONVERGED,
    })
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("elhom: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
