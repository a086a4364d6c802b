//! Plain-text file formats.
//!
//! * Sample / coefficient files: one number per line. Blank lines and lines
//!   starting with `#` are skipped.
//! * Dictionary specs and experiment configs: flat `key = value` lines,
//!   `#` comments, lists separated by commas.
//! * Reports: comma-separated with a header row.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dictionary::{Dictionary, DomainKind, Sample};
use crate::error::{invalid, CsdeError, Result};
use crate::metrics::TV_GRID_POINTS;
use crate::simgen::{family_config, Family, ReplicationReport};

fn parse_err(line: usize, msg: impl Into<String>) -> CsdeError {
    CsdeError::Parse {
        line,
        msg: msg.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a sample for a dictionary of the given domain kind. Count
/// samples must be nonnegative integers.
pub fn parse_sample(text: &str, kind: DomainKind) -> Result<Sample> {
    let sample = match kind {
        DomainKind::Continuous => {
            let mut v = Vec::new();
            for (line, tok) in data_lines(text) {
                let x: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(line, format!("'{tok}' is not a number")))?;
                if !x.is_finite() {
                    return Err(parse_err(line, format!("'{tok}' is not finite")));
                }
                v.push(x);
            }
            Sample::Continuous(v)
        }
        DomainKind::Discrete => {
            let mut v = Vec::new();
            for (line, tok) in data_lines(text) {
                let k: u64 = tok
                    .parse()
                    .map_err(|_| parse_err(line, format!("'{tok}' is not a nonnegative integer")))?;
                v.push(k);
            }
            Sample::Discrete(v)
        }
    };
    if sample.is_empty() {
        return Err(parse_err(0, "sample file has no observations"));
    }
    Ok(sample)
}

/// Parses a coefficient vector, one value per line.
pub fn parse_beta(text: &str) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    for (line, tok) in data_lines(text) {
        // accept "index,value" rows as written by `write_coefficients`
        let tok = match tok.split_once(',') {
            Some((idx, val)) if idx.trim().parse::<usize>().is_ok() => val.trim(),
            Some(_) => continue,
            None => tok,
        };
        let x: f64 = tok
            .parse()
            .map_err(|_| parse_err(line, format!("'{tok}' is not a number")))?;
        if !x.is_finite() {
            return Err(parse_err(line, format!("'{tok}' is not finite")));
        }
        v.push(x);
    }
    if v.is_empty() {
        return Err(parse_err(0, "coefficient file is empty"));
    }
    Ok(v)
}

/// `key = value` map remembering the line each key came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line, raw) in data_lines(text) {
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected 'key = value', got '{raw}'")))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(parse_err(line, "empty key"));
            }
            if entries.insert(key.clone(), (line, v.trim().to_string())).is_some() {
                return Err(parse_err(line, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| parse_err(0, format!("missing required key '{key}'")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| parse_err(self.line(key), format!("bad value '{v}' for '{key}'"))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| parse_err(self.line(key), format!("bad list entry '{}' for '{key}'", t.trim())))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn parse_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(parse_err(self.line(key), format!("bad boolean '{v}' for '{key}'"))),
        }
    }

    /// Fails on any key outside `allowed`. A key `p.*` in `allowed` admits
    /// every key with prefix `p.`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.keys() {
            let ok = allowed.iter().any(|a| match a.strip_suffix('*') {
                Some(prefix) => k.starts_with(prefix),
                None => k == *a,
            });
            if !ok {
                return Err(parse_err(self.line(k), format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }
}

/// Builds a dictionary from a spec file.
///
/// ```text
/// family = gaussian        # mu = ..., sigma = ...
/// family = poisson         # lambda = ...
/// family = grid-gaussian   # lo, hi, W, sigma: W equally spaced means on [lo, hi]
/// family = gaussian-4.2    # W: simulation dictionaries
/// ```
pub fn parse_dictionary_spec(text: &str) -> Result<Dictionary> {
    let kv = KeyValues::parse(text)?;
    let family = kv.require("family")?;
    match family {
        "gaussian" => {
            kv.check_keys(&["family", "mu", "sigma"])?;
            let mu: Vec<f64> = kv.parse_list("mu")?.ok_or_else(|| parse_err(0, "missing 'mu'"))?;
            let sigma: Vec<f64> = kv.parse_list("sigma")?.ok_or_else(|| parse_err(0, "missing 'sigma'"))?;
            let sigma = if sigma.len() == 1 && mu.len() > 1 {
                vec![sigma[0]; mu.len()]
            } else {
                sigma
            };
            Dictionary::gaussian(&mu, &sigma)
        }
        "poisson" => {
            kv.check_keys(&["family", "lambda"])?;
            let lambda: Vec<f64> = kv.parse_list("lambda")?.ok_or_else(|| parse_err(0, "missing 'lambda'"))?;
            Dictionary::poisson(&lambda)
        }
        "grid-gaussian" => {
            kv.check_keys(&["family", "lo", "hi", "W", "sigma"])?;
            let lo: f64 = kv.parse_value("lo")?.ok_or_else(|| parse_err(0, "missing 'lo'"))?;
            let hi: f64 = kv.parse_value("hi")?.ok_or_else(|| parse_err(0, "missing 'hi'"))?;
            let w: usize = kv.parse_value("W")?.ok_or_else(|| parse_err(0, "missing 'W'"))?;
            let sigma: f64 = kv.parse_value("sigma")?.ok_or_else(|| parse_err(0, "missing 'sigma'"))?;
            if w == 0 || !(hi >= lo) {
                return Err(invalid("grid-gaussian needs W >= 1 and hi >= lo"));
            }
            let step = if w > 1 { (hi - lo) / (w - 1) as f64 } else { 0.0 };
            let mu: Vec<f64> = (0..w).map(|j| lo + step * j as f64).collect();
            Dictionary::gaussian(&mu, &vec![sigma; w])
        }
        other => {
            let fam: Family = other.parse()?;
            kv.check_keys(&["family", "W"])?;
            let w: usize = kv.parse_value("W")?.unwrap_or(0);
            family_config(fam, w)?.dictionary()
        }
    }
}

/// Minimal f64 formatting shared by every writer: shortest round-trip.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x}")
    }
}

pub fn write_coefficients(beta: &[f64]) -> String {
    let mut s = String::from("index,beta\n");
    for (j, b) in beta.iter().enumerate() {
        let _ = writeln!(s, "{},{}", j + 1, fmt_f64(*b));
    }
    s
}

/// Evaluation grid for density curves: `points` equally spaced values on
/// the padded atom range (continuous) or `0..=tail` (discrete).
pub fn curve_grid(dict: &Dictionary, points: usize) -> Result<Vec<f64>> {
    match dict.domain() {
        DomainKind::Continuous => {
            let (lo, hi) = dict
                .continuous_range(crate::metrics::TV_PADDING_SIGMAS)
                .ok_or_else(|| invalid("continuous curve needs gaussian atoms"))?;
            if points < 2 {
                return Err(invalid("curve needs at least 2 points"));
            }
            let step = (hi - lo) / (points - 1) as f64;
            Ok((0..points).map(|i| lo + step * i as f64).collect())
        }
        DomainKind::Discrete => Ok((0..=dict.tail_index()).map(|k| k as f64).collect()),
    }
}

/// Density curve file: `x,density` or `x,density_true,density_fit`.
pub fn write_curve(dict: &Dictionary, beta: &[f64], truth: Option<&[f64]>, points: usize) -> Result<String> {
    use crate::dictionary::Point;
    let grid = curve_grid(dict, points)?;
    let mut s = String::new();
    s.push_str(if truth.is_some() { "x,density_true,density_fit\n" } else { "x,density\n" });
    for x in grid {
        let p = match dict.domain() {
            DomainKind::Continuous => Point::Continuous(x),
            DomainKind::Discrete => Point::Discrete(x as u64),
        };
        let fit = dict.mixture_value(beta, p)?;
        match truth {
            Some(t) => {
                let tv = dict.mixture_value(t, p)?;
                let _ = writeln!(s, "{},{},{}", fmt_f64(x), fmt_f64(tv), fmt_f64(fit));
            }
            None => {
                let _ = writeln!(s, "{},{}", fmt_f64(x), fmt_f64(fit));
            }
        }
    }
    Ok(s)
}

pub fn default_curve_points() -> usize {
    TV_GRID_POINTS
}

pub const REPORT_HEADER: &str =
    "family,W,n,reps,estimator,lambda1,lambda2,l1_mean,l1_std,tv_mean,tv_std,support_exact_rate,failures";

/// Table-shaped summary, one row per (experiment, estimator).
pub fn write_report(reports: &[ReplicationReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in reports {
        for e in &r.estimators {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{}",
                r.family,
                r.w,
                r.n,
                r.n_reps,
                e.label,
                fmt_f64(e.lambda1_used),
                fmt_f64(e.lambda2_used),
                e.l1_mean,
                e.l1_std,
                e.tv_mean,
                e.tv_std,
                e.support_exact_rate,
                e.failures
            );
        }
    }
    s
}

/// Raw per-replication errors.
pub fn write_replications(reports: &[ReplicationReport]) -> String {
    let mut s = String::from("family,W,rep,seed,estimator,l1,tv,support_exact\n");
    for r in reports {
        for e in &r.estimators {
            for (((l1, tv), ok), rep) in e.l1.iter().zip(&e.tv).zip(&e.support_exact).zip(&e.reps) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.family,
                    r.w,
                    rep,
                    r.seeds[*rep],
                    e.label,
                    fmt_f64(*l1),
                    fmt_f64(*tv),
                    ok
                );
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_with_header() {
        let s = parse_sample("# x\n1.5\n\n-2\n", DomainKind::Continuous).unwrap();
        assert_eq!(s, Sample::Continuous(vec![1.5, -2.0]));
    }

    #[test]
    fn sample_errors_carry_line() {
        let e = parse_sample("1\n2\nabc\n", DomainKind::Continuous).unwrap_err();
        assert_eq!(
            e,
            CsdeError::Parse {
                line: 3,
                msg: "'abc' is not a number".into()
            }
        );
        assert!(parse_sample("# only header\n", DomainKind::Continuous).is_err());
        assert!(parse_sample("-1\n", DomainKind::Discrete).is_err());
    }

    #[test]
    fn key_values() {
        let kv = KeyValues::parse("a = 1\n# c\nb=2, 3\n").unwrap();
        assert_eq!(kv.parse_value::<i32>("a").unwrap(), Some(1));
        assert_eq!(kv.parse_list::<i32>("b").unwrap(), Some(vec![2, 3]));
        assert!(KeyValues::parse("a=1\na=2\n").is_err());
        assert!(KeyValues::parse("nonsense\n").is_err());
    }

    #[test]
    fn grid_dictionary() {
        let d = parse_dictionary_spec("family = grid-gaussian\nlo = 0\nhi = 359\nW = 360\nsigma = 5\n").unwrap();
        assert_eq!(d.len(), 360);
        let d = parse_dictionary_spec("family = gaussian-4.2\nW = 81\n").unwrap();
        assert_eq!(d.len(), 81);
    }

    #[test]
    fn beta_roundtrip() {
        let b = vec![0.25, 0.0, 0.75];
        assert_eq!(parse_beta(&write_coefficients(&b)).unwrap(), b);
    }
}
