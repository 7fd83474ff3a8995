//! Flat `key = value` configuration files. Each key is the long name of a
//! flag; the file's values are inserted ahead of the command-line flags so
//! that explicit flags win.

use std::path::Path;

use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::InvalidParameter(format!("config line {}: expected key = value", n + 1)));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::InvalidParameter(format!("config line {}: empty key", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
    parse(&std::fs::read_to_string(path)?)
}

/// Finds `--config <path>` or `--config=<path>` in raw arguments.
pub fn find_config_flag(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}
