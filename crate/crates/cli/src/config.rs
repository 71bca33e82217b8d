//! Flat `key = value` config files, merged into the argument list so that
//! flags given on the command line win.

use std::collections::BTreeMap;
use std::fs;

use structprox::{Error, Result};

pub fn parse_config(text: &str, source: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            location: format!("{source}:{}", n + 1),
            message: format!("expected 'key = value', found '{line}'"),
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                location: format!("{source}:{}", n + 1),
                message: "empty key".into(),
            });
        }
        out.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}

fn flag_present(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| *a == long || a.starts_with(&with_eq))
}

/// Replaces `--config FILE` with the file's entries, skipping keys already given as flags.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| Error::InvalidInput("--config needs a file path".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let entries = parse_config(&fs::read_to_string(&path)?, &path)?;
    // the subcommand is the first argument after the program name
    let split = rest.len().min(2);
    let mut out: Vec<String> = rest[..split].to_vec();
    for (k, v) in entries {
        if flag_present(&rest, &k) {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v);
            }
        }
    }
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}
