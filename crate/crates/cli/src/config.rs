//! Flag layering: command line, then the TOML config file, then
//! `PLANTSAM_*` environment variables, then built-in defaults.
//!
//! clap already handles command line > env > default. The config file is
//! slotted in by appending its values as flags for every option the user
//! did not give on the command line, then parsing again.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgAction, Command, CommandFactory, FromArgMatches, Parser};

use crate::Cli;

/// Top-level keys apply to every subcommand that has a flag of that name;
/// a `[subcommand]` table applies to that subcommand only and wins over
/// top-level keys. Keys may use `-` or `_`.
/// Returns `(key, value, from_section)`.
fn config_values(table: &toml::Table, subcommand: &str) -> Vec<(String, toml::Value, bool)> {
    let mut out: Vec<(String, toml::Value, bool)> = Vec::new();
    let mut put = |key: &str, value: &toml::Value, section: bool| {
        let key = key.replace('_', "-");
        out.retain(|(k, _, _)| *k != key);
        out.push((key, value.clone(), section));
    };
    for (k, v) in table {
        if !v.is_table() {
            put(k, v, false);
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(subcommand).or_else(|| table.get(&subcommand.replace('-', "_"))) {
        for (k, v) in section {
            put(k, v, true);
        }
    }
    out
}

fn scalar(value: &toml::Value) -> Result<String> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        other => bail!("unsupported config value {other}"),
    })
}

fn config_path(cmd: &Command, args: &[OsString]) -> Option<PathBuf> {
    let matches = cmd.clone().ignore_errors(true).try_get_matches_from(args).ok()?;
    let (_, sub) = matches.subcommand()?;
    sub.try_get_one::<PathBuf>("config").ok().flatten().cloned()
}

/// Parses `args` with config-file values layered under the command line.
pub fn parse(args: Vec<OsString>) -> Result<Cli> {
    let cmd = Cli::command();
    let Some(path) = config_path(&cmd, &args) else {
        return Ok(Cli::try_parse_from(args)?);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;

    let matches = cmd.clone().try_get_matches_from(&args)?;
    let Some((name, sub_matches)) = matches.subcommand() else {
        return Ok(Cli::from_arg_matches(&matches)?);
    };
    let sub = cmd.find_subcommand(name).expect("matched subcommand");

    let mut extended = args.clone();
    for (key, value, from_section) in config_values(&table, name) {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            if from_section && key != "config" {
                bail!("{}: unknown option {key:?} for `{name}`", path.display());
            }
            continue;
        };
        if sub_matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{key}");
        match arg.get_action() {
            ArgAction::SetTrue => {
                if value
                    .as_bool()
                    .with_context(|| format!("{}: {key} must be a boolean", path.display()))?
                {
                    extended.push(flag.into());
                }
            }
            _ => {
                let values = match &value {
                    toml::Value::Array(items) => items.iter().map(scalar).collect::<Result<Vec<_>>>()?,
                    v => vec![scalar(v)?],
                };
                for v in values {
                    extended.push(format!("{flag}={v}").into());
                }
            }
        }
    }
    Ok(Cli::try_parse_from(extended)?)
}
