//! Argument parsing with an optional JSON config file.
//!
//! A config file is an object tagged `"schema": "svx-config/1"` whose other
//! keys are long flag names of the chosen subcommand (`n_segments` and
//! `n-segments` both work). Entries whose flag is not on the command line are
//! spliced into argv directly after the subcommand; flags that are typed win.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};
use serde_json::Value;

use crate::{Cli, Failure};

pub const SCHEMA: &str = "svx-config/1";

/// Value of `--config` and the position of the subcommand, found without a
/// full parse because the config may supply required flags.
fn prescan(cmd: &clap::Command, argv: &[OsString]) -> (Option<PathBuf>, Option<(usize, String)>) {
    let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if sub.is_none() && names.contains(&a.as_ref()) {
            sub = Some((i, a.into_owned()));
        }
        i += 1;
    }
    (config, sub)
}

fn scalar(key: &str, v: &Value) -> Result<String, Failure> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Failure::Usage(format!("config key `{key}` must hold a string or number"))),
    }
}

fn on_command_line(argv: &[OsString], arg: &clap::Arg, flag: &str) -> bool {
    let long = format!("--{flag}");
    let short = arg.get_short().map(|c| format!("-{c}"));
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == long
            || a.strip_prefix(long.as_str()).is_some_and(|rest| rest.starts_with('='))
            || short.as_deref() == Some(a.as_ref())
    })
}

/// Turns config entries into argv tokens for subcommand `sub`, skipping
/// flags already present in `argv`.
fn config_tokens(cmd: &clap::Command, sub: &str, path: &PathBuf, argv: &[OsString]) -> Result<Vec<OsString>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(map) = root else {
        return Err(Failure::Usage("config must be a JSON object".into()));
    };
    match map.get("schema") {
        Some(Value::String(s)) if s == SCHEMA => {}
        Some(other) => return Err(Failure::Usage(format!("unsupported config schema {other}, expected \"{SCHEMA}\""))),
        None => return Err(Failure::Usage(format!("config lacks \"schema\": \"{SCHEMA}\""))),
    }
    let subcmd = cmd.find_subcommand(sub).expect("prescan found a known subcommand");
    let mut tokens = Vec::new();
    for (key, value) in map.iter().filter(|(k, _)| *k != "schema") {
        let flag = key.replace('_', "-");
        let arg = subcmd
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(flag.as_str()) && flag != "config")
            .ok_or_else(|| Failure::Usage(format!("unknown config key `{key}` for `svx {sub}`")))?;
        if on_command_line(argv, arg, &flag) {
            continue;
        }
        let is_switch = matches!(arg.get_action(), clap::ArgAction::SetTrue);
        match value {
            Value::Bool(b) if is_switch => {
                if *b {
                    tokens.push(format!("--{flag}").into());
                }
            }
            _ if is_switch => return Err(Failure::Usage(format!("config key `{key}` must be true or false"))),
            Value::Array(items) => {
                let parts = items.iter().map(|v| scalar(key, v)).collect::<Result<Vec<_>, _>>()?;
                tokens.push(format!("--{flag}={}", parts.join(",")).into());
            }
            v => tokens.push(format!("--{flag}={}", scalar(key, v)?).into()),
        }
    }
    Ok(tokens)
}

/// Parses argv, merging the config file if one is named. `Ok(None)` means
/// help or version text was printed.
pub fn parse(mut argv: Vec<OsString>) -> Result<Option<Cli>, Failure> {
    let mut cmd = Cli::command();
    if let (Some(path), Some((at, sub))) = prescan(&cmd, &argv) {
        let tokens = config_tokens(&cmd, &sub, &path, &argv)?;
        argv.splice(at + 1..at + 1, tokens);
    }
    match cmd.try_get_matches_from_mut(argv) {
        Ok(m) => Cli::from_arg_matches(&m)
            .map(Some)
            .map_err(|e| Failure::Usage(one_line(&e))),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            // A closed stdout is not worth an error here.
            let _ = write!(std::io::stdout(), "{}", e.render());
            Ok(None)
        }
        Err(e) => {
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
            }
            Err(Failure::Usage(one_line(&e)))
        }
    }
}

/// Clap's message folded onto one line, without the usage and help hints.
fn one_line(e: &clap::Error) -> String {
    let rendered = e.render().to_string();
    let parts: Vec<&str> = rendered
        .lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect();
    parts.join(" ").trim_start_matches("error: ").to_owned()
}
