//! `key = value` configuration text.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Later lines override earlier ones when applied in order.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key = value, got '{line}'",
                n + 1
            ))
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text)
}

/// Parses one value, naming the key in the error.
pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value '{value}' for {key}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_errors() {
        let kv = parse_key_values("# header\nlevels = 4\n\n radius=6 # wide\n").unwrap();
        assert_eq!(
            kv,
            vec![("levels".into(), "4".into()), ("radius".into(), "6".into())]
        );
        assert!(parse_key_values("levels 4").unwrap_err().is_config());
        assert!(parse_value::<usize>("levels", "four")
            .unwrap_err()
            .to_string()
            .contains("levels"));
    }
}
