//! Optional TOML config file. Top-level keys set global flags, a table named
//! after a subcommand sets that subcommand's flags, and flags given on the
//! command line always win.
//!
//! ```toml
//! seed = 7
//!
//! [train]
//! variant = "full-rn"
//! epochs = 30
//! ```

use std::ffi::OsString;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

/// Flags to append to `argv` so that config values fill in whatever the
/// command line left unset.
pub fn extra_args(path: &Path, cmd: &Command, matches: &ArgMatches) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let sub = matches.subcommand();
    let mut out = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(inner) => {
                let Some(sub_cmd) = cmd.find_subcommand(key) else {
                    bail!("config: unknown section [{key}]");
                };
                let Some((name, sub_matches)) = sub.filter(|(name, _)| *name == key) else {
                    continue;
                };
                for (k, v) in inner {
                    push_flag(sub_cmd, sub_matches, k, v, &mut out)
                        .with_context(|| format!("config [{name}]"))?;
                }
            }
            v => push_flag(cmd, matches, key, v, &mut out).context("config")?,
        }
    }
    Ok(out)
}

fn push_flag(
    cmd: &Command,
    matches: &ArgMatches,
    key: &str,
    value: &toml::Value,
    out: &mut Vec<OsString>,
) -> Result<()> {
    let id = key.replace('-', "_");
    let arg = cmd
        .get_arguments()
        .find(|a| a.get_id() == id.as_str() && a.get_long().is_some())
        .ok_or_else(|| anyhow!("unknown key {key:?}"))?;
    if matches.value_source(&id) == Some(ValueSource::CommandLine) {
        return Ok(());
    }
    let flag = OsString::from(format!("--{}", arg.get_long().expect("checked above")));
    match (arg.get_action(), value) {
        (ArgAction::SetTrue, toml::Value::Boolean(b)) => {
            if *b {
                out.push(flag);
            }
        }
        (ArgAction::Count, toml::Value::Integer(n)) => {
            for _ in 0..*n {
                out.push(flag.clone());
            }
        }
        (ArgAction::SetTrue | ArgAction::Count, v) => bail!("{key}: unexpected value {v}"),
        (_, toml::Value::String(s)) => {
            out.push(flag);
            out.push(s.into());
        }
        (_, v @ (toml::Value::Integer(_) | toml::Value::Float(_) | toml::Value::Boolean(_))) => {
            out.push(flag);
            out.push(v.to_string().into());
        }
        (_, v) => bail!("{key}: unsupported value {v}"),
    }
    Ok(())
}
