//! Flat key-value run configuration.
//!
//! A config file holds `key = value` lines (`#` comments, blank lines
//! allowed). Every output file starts with a header block of `# key = value`
//! lines carrying the fully resolved configuration; such a file is itself
//! accepted as a config (the leading header block is parsed, everything
//! after it is ignored), so re-running any output's header reproduces the
//! file. Precedence: built-in defaults, then the config file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug)]
pub struct CliError {
    pub exit_code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            exit_code: 1,
            message: message.into(),
        }
    }

    pub fn check_failed(message: impl Into<String>) -> Self {
        Self {
            exit_code: 2,
            message: message.into(),
        }
    }
}

impl From<auxvar::Error> for CliError {
    fn from(e: auxvar::Error) -> Self {
        CliError::config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Ordered key set with defaults for one subcommand.
#[derive(Debug)]
pub struct Registry {
    pub command: &'static str,
    pub defaults: &'static [(&'static str, &'static str)],
}

impl Registry {
    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.defaults.iter().map(|(k, _)| *k)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.defaults.iter().any(|(k, _)| *k == key)
    }
}

/// Resolved configuration: every registry key has a value.
#[derive(Debug)]
pub struct Resolved {
    registry: &'static Registry,
    values: BTreeMap<String, String>,
}

impl Resolved {
    /// Apply defaults, then the optional config file, then flag overrides.
    pub fn build(
        registry: &'static Registry,
        config_path: Option<&str>,
        flags: &[(&'static str, Option<String>)],
    ) -> CliResult<Self> {
        let mut values: BTreeMap<String, String> = registry
            .defaults
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config `{path}`: {e}")))?;
            for (key, value) in parse_config_text(&text)? {
                if key == "command" {
                    if value != registry.command {
                        return Err(CliError::config(format!(
                            "config is for command `{value}`, not `{}`",
                            registry.command
                        )));
                    }
                    continue;
                }
                if !registry.contains(&key) {
                    return Err(CliError::config(format!(
                        "unknown config key `{key}` for command `{}`",
                        registry.command
                    )));
                }
                values.insert(key, value);
            }
        }
        for (key, value) in flags {
            if let Some(v) = value {
                debug_assert!(registry.contains(key), "flag {key} missing from registry");
                values.insert((*key).to_string(), v.clone());
            }
        }
        Ok(Self { registry, values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_default()
    }

    pub fn set(&mut self, key: &str, value: String) {
        debug_assert!(self.registry.contains(key));
        self.values.insert(key.to_string(), value);
    }

    /// Parse a required typed value, naming the key on failure.
    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse::<T>()
            .map_err(|e| CliError::config(format!("invalid {key} `{raw}`: {e}")))
    }

    /// Comma-separated list of typed values.
    pub fn get_list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|item| {
                item.trim().parse::<T>().map_err(|e| {
                    CliError::config(format!("invalid {key} entry `{}`: {e}", item.trim()))
                })
            })
            .collect()
    }

    /// Header block echoing the full resolved configuration in registry
    /// order.
    pub fn header(&self) -> String {
        let mut out = format!("# command = {}\n", self.registry.command);
        for key in self.registry.keys() {
            out.push_str(&format!("# {key} = {}\n", self.raw(key)));
        }
        out
    }
}

/// Parse config text. Files whose first line is a `# key = value` header
/// line are treated as output headers: only the leading comment block is
/// read. Plain files reject lines that are not comments, blanks or
/// `key = value` pairs.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    let header_mode = text
        .lines()
        .next()
        .is_some_and(|l| l.starts_with("# ") && l.contains('='));
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if header_mode {
            let Some(rest) = line.strip_prefix('#') else {
                break; // end of the leading header block
            };
            if let Some((key, value)) = split_pair(rest) {
                pairs.push((key, value));
            }
        } else {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match split_pair(trimmed) {
                Some((key, value)) => pairs.push((key, value)),
                None => {
                    return Err(CliError::config(format!(
                        "config line {} is not `key = value`: `{trimmed}`",
                        lineno + 1
                    )))
                }
            }
        }
    }
    Ok(pairs)
}

fn split_pair(line: &str) -> Option<(String, String)> {
    let (key, value) = line.split_once('=')?;
    let key = key.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    Some((key.to_string(), value.trim().to_string()))
}
