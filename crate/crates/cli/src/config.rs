//! `--config FILE` support: `key=value` lines become `--key value` flags
//! inserted right after the subcommand, so explicit flags (which come later
//! and override earlier occurrences) take precedence.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};
use clap::Command;

fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got '{line}'", k + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", k + 1);
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn take_config_path(argv: &mut Vec<OsString>) -> Result<Option<OsString>> {
    let mut found = None;
    let mut k = 1;
    while k < argv.len() {
        let arg = argv[k].to_string_lossy().into_owned();
        if arg == "--config" {
            if k + 1 >= argv.len() {
                bail!("--config requires a file path");
            }
            found = Some(argv.remove(k + 1));
            argv.remove(k);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            found = Some(OsString::from(p));
            argv.remove(k);
        } else {
            k += 1;
        }
    }
    Ok(found)
}

pub fn expand_config(mut argv: Vec<OsString>, cli: &Command) -> Result<Vec<OsString>> {
    let Some(path) = take_config_path(&mut argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read config file {}", path.to_string_lossy()))?;
    let pairs = parse_lines(&text)?;

    let Some(pos) = argv
        .iter()
        .skip(1)
        .position(|a| cli.find_subcommand(&*a.to_string_lossy()).is_some())
        .map(|p| p + 1)
    else {
        bail!("--config needs a subcommand");
    };
    let sub = cli
        .find_subcommand(&*argv[pos].to_string_lossy())
        .expect("found above");

    let mut injected = Vec::new();
    for (key, value) in pairs {
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            bail!("config key '{key}' is not a flag of '{}'", sub.get_name());
        };
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}")));
            injected.push(OsString::from(value));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                other => bail!("config key '{key}' is a switch; got '{other}'"),
            }
        }
    }
    argv.splice(pos + 1..pos + 1, injected);
    Ok(argv)
}
