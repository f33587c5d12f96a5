use clap::{Arg, ArgAction, ArgMatches, Command};
use dpagg::config::{Key, KeyKind, RunConfig, COMMANDS, GLOBAL_KEYS};
use dpagg::{commands, CliError};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

fn key_arg(key: &Key) -> Arg {
    let help = if key.default.is_empty() || key.kind == KeyKind::Switch {
        key.help.to_string()
    } else {
        format!("{} [default: {}]", key.help, key.default)
    };
    let arg = Arg::new(key.name).help(help);
    match key.kind {
        KeyKind::Value => arg.long(key.name.replace('_', "-")).value_name("VALUE"),
        KeyKind::Switch => arg
            .long(key.name.replace('_', "-"))
            .action(ArgAction::SetTrue),
        KeyKind::Positional => arg.num_args(0..).value_name("FILE"),
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("dpagg")
        .about("Differentially private secure aggregation simulator")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value config file"),
        );
    for key in GLOBAL_KEYS {
        cmd = cmd.arg(key_arg(key).global(true));
    }
    for (name, keys, about) in COMMANDS {
        let mut sub = Command::new(*name).about(*about);
        for key in *keys {
            sub = sub.arg(key_arg(key));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn flag_overrides(keys: &[Key], m: &ArgMatches) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for key in GLOBAL_KEYS.iter().chain(keys) {
        match key.kind {
            KeyKind::Switch => {
                if m.get_flag(key.name) {
                    out.push((key.name.to_string(), "true".to_string()));
                }
            }
            KeyKind::Value => {
                if let Some(v) = m.get_one::<String>(key.name) {
                    out.push((key.name.to_string(), v.clone()));
                }
            }
            KeyKind::Positional => {
                if let Some(vs) = m.get_many::<String>(key.name) {
                    out.push((
                        key.name.to_string(),
                        vs.cloned().collect::<Vec<_>>().join(","),
                    ));
                }
            }
        }
    }
    out
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let keys = dpagg::config::keys_for(name).expect("registered subcommand");
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let cfg = RunConfig::resolve(name, file.as_deref(), &flag_overrides(keys, sub))?;
    let snapshot = cfg.write_snapshot()?;
    log::info!("resolved configuration written to {}", snapshot.display());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match name {
        "aggregate" => commands::aggregate(&cfg, &mut out),
        "bench" => commands::bench(&cfg, &mut out),
        "params" => commands::params(&cfg, &mut out),
        "accountant" => commands::accountant(&cfg, &mut out),
        "train" => commands::train(&cfg, &mut out),
        "report" => commands::report(&cfg, &mut out),
        _ => unreachable!("subcommands come from COMMANDS"),
    };
    out.flush()?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpagg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
