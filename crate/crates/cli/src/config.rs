//! `--config <file>` support: a flat `key=value` file whose keys are long
//! flag names without the leading dashes. Entries become flags placed
//! before the command-line ones; a key also given on the command line is
//! skipped, so flags always win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Usage(String),
    Io(String),
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>, ConfigError> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it
                .next()
                .cloned()
                .map(Some)
                .ok_or_else(|| ConfigError::Usage("--config needs a file path".into()));
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Ok(Some(v.into()));
        }
    }
    Ok(None)
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&with_value)
    })
}

/// Parses config text into flag arguments, skipping keys in `explicit`.
pub fn config_args(text: &str, source: &Path, explicit: &[OsString]) -> Result<Vec<OsString>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::Usage(format!("{}:{}: expected key=value, got {line:?}", source.display(), n + 1))
        })?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(ConfigError::Usage(format!("{}:{}: invalid key {key:?}", source.display(), n + 1)));
        }
        if given_on_command_line(explicit, key) {
            continue;
        }
        out.push(format!("--{key}").into());
        out.push(value.trim().into());
    }
    Ok(out)
}

/// Inserts config-file flags right after the subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    if args.len() < 2 {
        return Ok(args);
    }
    let explicit = &args[2..];
    let Some(path) = config_path(explicit)? else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let extra = config_args(&text, path, explicit)?;
    let mut out = args[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(explicit);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_override_file_entries() {
        let text = "# comment\nfamily = knn\nk=7\n\nradius=3\n";
        let args = config_args(text, Path::new("c"), &os(&["--k", "2", "--radius=4"])).unwrap();
        assert_eq!(args, os(&["--family", "knn"]));
    }

    #[test]
    fn malformed_lines_are_usage_errors() {
        assert!(matches!(config_args("family", Path::new("c"), &[]), Err(ConfigError::Usage(_))));
        assert!(matches!(config_args("config=x", Path::new("c"), &[]), Err(ConfigError::Usage(_))));
    }
}
