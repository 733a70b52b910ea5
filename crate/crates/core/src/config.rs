//! `key = value` experiment descriptors.
//!
//! One assignment per line; `#` starts a comment. Keys are
//! `[A-Za-z0-9_.-]+` and `-` is folded to `_`. Repeated keys are an error.

use std::collections::BTreeMap;

use crate::circle::OmegaState;
use crate::error::{Error, Result};

/// Upper bound on the number of points produced by [`parse_grid`].
pub const MAX_GRID_POINTS: usize = 10_000_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> Result<String> {
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
        return Err(Error::Config(format!("invalid key {key:?}")));
    }
    Ok(key.replace('-', "_"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = normalize_key(key.trim()).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(Config { entries })
    }

    /// Insert or replace, as command-line flags do over a file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.entries.insert(normalize_key(key)?, value.into());
        Ok(())
    }

    /// Insert only when absent.
    pub fn set_default(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.entries.entry(normalize_key(key)?).or_insert_with(|| value.into());
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn typed<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
        self.str(key).map(|v| parse(v).map_err(|e| Error::Config(format!("{key}: {e}")))).transpose()
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key, parse_f64)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.typed(key, parse_u64)
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.typed(key, parse_bool)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.typed(key, |v| parse_list(v, parse_f64))
    }

    pub fn u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        self.typed(key, |v| parse_list(v, parse_u64))
    }

    /// A grid `a:b:step` or a comma list.
    pub fn grid(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.typed(key, |v| if v.contains(':') { parse_grid(v) } else { parse_list(v, parse_f64) })
    }

    pub fn omega(&self, key: &str) -> Result<Option<OmegaState>> {
        self.typed(key, OmegaState::parse_base4)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.u64(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.bool(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Config(format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("not finite: {s:?}")));
    }
    Ok(v)
}

/// Accepts `100000`, `1e5` and `2^20`.
pub fn parse_u64(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    if let Some((b, e)) = s.split_once('^') {
        let b: u64 = b.trim().parse().map_err(|_| Error::Config(format!("not an integer: {s:?}")))?;
        let e: u32 = e.trim().parse().map_err(|_| Error::Config(format!("not an integer: {s:?}")))?;
        return b.checked_pow(e).ok_or_else(|| Error::Config(format!("overflow: {s:?}")));
    }
    let v = parse_f64(s).map_err(|_| Error::Config(format!("not an integer: {s:?}")))?;
    if v < 0.0 || v.fract() != 0.0 || v >= 18_446_744_073_709_551_616.0 {
        return Err(Error::Config(format!("not a non-negative integer: {s:?}")));
    }
    Ok(v as u64)
}

pub fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("not a boolean: {s:?}"))),
    }
}

pub fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(|v| item(v.trim())).collect()
}

/// `a:b:step` → `a, a + step, …` up to `b` inclusive (with a relative
/// tolerance of 1e-9 steps).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts[..] else {
        return Err(Error::Config(format!("grid must be a:b:step, got {s:?}")));
    };
    let (a, b, step) = (parse_f64(a)?, parse_f64(b)?, parse_f64(step)?);
    if !(step > 0.0) || b < a {
        return Err(Error::Config(format!("grid needs step > 0 and a ≤ b, got {s:?}")));
    }
    let count = ((b - a) / step + 1e-9).floor();
    if !(count < MAX_GRID_POINTS as f64) {
        return Err(Error::Config(format!("grid {s:?} has more than {MAX_GRID_POINTS} points")));
    }
    Ok((0..=count as usize).map(|k| a + k as f64 * step).collect())
}

/// Base-4 digit string such as `0123`, without the leading `0.`.
pub fn parse_digits(s: &str) -> Result<Vec<u8>> {
    s.trim()
        .chars()
        .map(|c| match c {
            '0'..='3' => Ok(c as u8 - b'0'),
            _ => Err(Error::Config(format!("invalid base-4 digit {c:?}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file() {
        let c = Config::parse("# comment\nalpha_min = 0.6\nn-list = 1e3, 1e4,2^10  # trailing\n\nflag=yes\n").unwrap();
        assert_eq!(c.f64("alpha_min").unwrap(), Some(0.6));
        assert_eq!(c.u64_list("n_list").unwrap(), Some(vec![1000, 10_000, 1024]));
        assert_eq!(c.bool("flag").unwrap(), Some(true));
        assert_eq!(c.f64("missing").unwrap(), None);
        assert!(c.require_f64("missing").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("a = 1\nA-b c = 2").is_err());
        assert!(Config::parse("novalue").is_err());
        let c = Config::parse("x = abc\nn = 1.5\nb = maybe").unwrap();
        assert!(c.f64("x").is_err());
        assert!(c.u64("n").is_err());
        assert!(c.bool("b").is_err());
        assert!(parse_f64("inf").is_err());
        assert!(parse_u64("-1").is_err());
        assert!(parse_u64("2^64").is_err());
    }

    #[test]
    fn flags_override() {
        let mut c = Config::parse("seed = 1").unwrap();
        c.set("seed", "2").unwrap();
        c.set_default("seed", "3").unwrap();
        c.set_default("samples", "10").unwrap();
        assert_eq!(c.u64("seed").unwrap(), Some(2));
        assert_eq!(c.u64("samples").unwrap(), Some(10));
    }

    #[test]
    fn grids() {
        let g = parse_grid("-5:5:0.1").unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], -5.0);
        assert!((g[100] - 5.0).abs() < 1e-12);
        assert_eq!(parse_grid("1:1:1").unwrap(), vec![1.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1e12:1e-6").is_err());
        assert!(parse_grid("0:1").is_err());
        let c = Config::parse("g = 1, 2.5").unwrap();
        assert_eq!(c.grid("g").unwrap(), Some(vec![1.0, 2.5]));
    }

    #[test]
    fn digits() {
        assert_eq!(parse_digits("0123").unwrap(), vec![0, 1, 2, 3]);
        assert!(parse_digits("04").is_err());
        let c = Config::parse("omega = 0.1(2)").unwrap();
        let w = c.omega("omega").unwrap().unwrap();
        assert_eq!(w.digit(1), 1);
        assert_eq!(w.digit(5), 2);
    }
}
