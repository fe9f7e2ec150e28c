//! Command-line token parsing: positionals, `--key value` / `--key=value`
//! options, and bare `--switch` flags.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::{CliError, CliResult};

/// Flags that take no value.
const SWITCHES: &[&str] = &["ablated", "help", "force"];

#[derive(Clone, Debug, Default)]
pub struct Args {
    pub positionals: Vec<String>,
    values: BTreeMap<String, String>,
    switches: BTreeSet<String>,
}

impl Args {
    pub fn parse(tokens: &[String]) -> CliResult<Args> {
        let mut args = Args::default();
        let mut it = tokens.iter().peekable();
        while let Some(tok) = it.next() {
            if let Some(flag) = tok.strip_prefix("--") {
                if let Some((key, value)) = flag.split_once('=') {
                    args.insert_value(key, value)?;
                } else if SWITCHES.contains(&flag) {
                    args.switches.insert(flag.to_string());
                } else {
                    let value = it
                        .next()
                        .ok_or_else(|| CliError::config(format!("--{flag} needs a value")))?;
                    args.insert_value(flag, value)?;
                }
            } else {
                args.positionals.push(tok.clone());
            }
        }
        Ok(args)
    }

    fn insert_value(&mut self, key: &str, value: &str) -> CliResult<()> {
        if SWITCHES.contains(&key) {
            return Err(CliError::config(format!("--{key} takes no value")));
        }
        if self.values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::config(format!("--{key} given twice")));
        }
        Ok(())
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn switch(&self, key: &str) -> bool {
        self.switches.contains(key)
    }

    /// Parse an optional flag into a number (or any `FromStr` type).
    pub fn parsed<T>(&self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.value(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::config(format!("--{key} {raw}: {e}"))),
        }
    }

    /// Reject flags outside the command's vocabulary.
    pub fn ensure_known(&self, allowed: &[&str]) -> CliResult<()> {
        for key in self.values.keys().chain(self.switches.iter()) {
            if !allowed.contains(&key.as_str()) && key != "help" {
                return Err(CliError::config(format!("unknown flag --{key}")));
            }
        }
        Ok(())
    }

    pub fn expect_positionals(&self, n: usize, usage: &str) -> CliResult<()> {
        if self.positionals.len() != n {
            return Err(CliError::config(format!(
                "expected {n} positional argument(s), got {}; usage: {usage}",
                self.positionals.len()
            )));
        }
        Ok(())
    }
}
