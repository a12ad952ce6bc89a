use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// `key value...` lines up to `end_header`.
pub(crate) struct Header<'a> {
    path: &'a Path,
    entries: Vec<(usize, &'a str, Vec<&'a str>)>,
    pub end_line: usize,
}

impl<'a> Header<'a> {
    /// Parses the header; the first line must be `<magic> <version>`.
    pub fn parse(
        path: &'a Path,
        lines: &mut impl Iterator<Item = (usize, &'a str)>,
        magic: &str,
        version: u32,
    ) -> Result<Self> {
        let (no, first) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let tokens: Vec<&str> = first.split_whitespace().collect();
        if tokens.first() != Some(&magic) {
            return Err(Error::parse(path, no, format!("expected \"{magic}\" header")));
        }
        let found: u32 = tokens
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(path, no, "missing format version"))?;
        if found != version {
            return Err(Error::parse(path, no, format!("unsupported format version {found}, expected {version}")));
        }
        let mut entries = Vec::new();
        for (no, line) in lines.by_ref() {
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                None => continue,
                Some("end_header") => return Ok(Header { path, entries, end_line: no }),
                Some(key) => entries.push((no, key, tokens.collect())),
            }
        }
        Err(Error::parse(path, 0, "missing end_header"))
    }

    fn entry(&self, key: &str) -> Result<&(usize, &'a str, Vec<&'a str>)> {
        self.entries
            .iter()
            .find(|e| e.1 == key)
            .ok_or_else(|| Error::parse(self.path, self.end_line, format!("missing header key \"{key}\"")))
    }

    pub fn tokens(&self, key: &str) -> Result<(usize, &[&'a str])> {
        let e = self.entry(key)?;
        Ok((e.0, &e.2))
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T> {
        let (no, tokens) = self.tokens(key)?;
        match tokens {
            [v] => v
                .parse()
                .map_err(|_| Error::parse(self.path, no, format!("invalid value \"{v}\" for \"{key}\""))),
            _ => Err(Error::parse(self.path, no, format!("expected one value for \"{key}\""))),
        }
    }

    pub fn finite(&self, key: &str) -> Result<f64> {
        let v: f64 = self.value(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::parse(self.path, self.entry(key)?.0, format!("non-finite value for \"{key}\"")))
        }
    }
}

/// Parses exactly `N` whitespace-separated finite numbers after the leading
/// integer index; used for data records.
pub(crate) fn parse_record<const N: usize>(path: &Path, no: usize, line: &str) -> Result<(usize, [f64; N])> {
    let mut tokens = line.split_whitespace();
    let bad = |m: String| Error::parse(path, no, m);
    let head = tokens.next().ok_or_else(|| bad("empty record".into()))?;
    let index: usize = head.parse().map_err(|_| bad(format!("invalid index \"{head}\"")))?;
    let mut values = [0.0f64; N];
    for v in values.iter_mut() {
        let t = tokens
            .next()
            .ok_or_else(|| bad(format!("record has fewer than {} fields", N + 1)))?;
        *v = t.parse().map_err(|_| bad(format!("invalid number \"{t}\"")))?;
        if !v.is_finite() {
            return Err(bad(format!("non-finite value \"{t}\"")));
        }
    }
    if tokens.next().is_some() {
        return Err(bad(format!("record has more than {} fields", N + 1)));
    }
    Ok((index, values))
}
