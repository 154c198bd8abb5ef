//! `key=value` text files used for fusion settings and CLI overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key=value` lines. Blank lines and `#` comments are skipped;
/// repeated keys are an error.
pub fn parse_kv(text: &str, source: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::header(source, format!("line {}: expected key=value", lineno + 1))
        })?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::header(source, format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::header(path, format!("cannot read config: {e}")))?;
    parse_kv(&text, path)
}

pub(crate) fn parse_f64(source: &Path, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::header(source, format!("`{key}` is not a number: `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_duplicates() {
        let p = Path::new("x.cfg");
        let kv = parse_kv("# c\n a = 1 \n\nb=two\n", p).unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two");
        assert!(parse_kv("a=1\na=2\n", p).is_err());
        assert!(parse_kv("novalue\n", p).is_err());
    }
}
