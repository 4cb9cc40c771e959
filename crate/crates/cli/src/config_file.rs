//! `--config` files: one `key = value` per line, keys named like the long
//! flags. `#` starts a comment line. `key = true` sets a switch, `false`
//! leaves it off. The file is expanded into flags placed before the real
//! command line, and keys the command line already sets are dropped.

use std::ffi::OsString;
use std::path::Path;

/// Options that exclude each other; setting one on the command line also
/// drops the other from the file.
const EXCLUSIVE: [(&str, &str); 2] = [("merge-period", "merge-every-k"), ("ttd-step", "no-ttd")];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push((key, v.to_string()));
    }
    Ok(out)
}

fn flag_name(arg: &str) -> Option<&str> {
    let name = arg.strip_prefix("--")?;
    Some(name.split_once('=').map_or(name, |(k, _)| k))
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Splices the config file named by `--config` into `argv`, just after
/// the subcommand at `argv[1]`.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let given: Vec<String> = argv[2..]
        .iter()
        .filter_map(|a| flag_name(&a.to_string_lossy()).map(str::to_string))
        .collect();
    let is_given = |k: &str| {
        given.iter().any(|g| g == k)
            || EXCLUSIVE
                .iter()
                .any(|&(a, b)| (k == a && given.iter().any(|g| g == b)) || (k == b && given.iter().any(|g| g == a)))
    };
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        if key == "config" || is_given(&key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    let mut out = argv;
    out.splice(2..2, extra);
    Ok(out)
}
