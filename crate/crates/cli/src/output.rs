//! Tables and JSON envelopes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA: u32 = 1;

/// Six significant digits, scientific outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

/// Plain-text table: first column left-aligned, the rest right-aligned.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Table {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, label: &str, values: impl IntoIterator<Item = String>) {
        let mut r = vec![label.to_string()];
        r.extend(values);
        self.rows.push(r);
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let width: Vec<usize> = (0..cols)
            .map(|c| {
                self.rows
                    .iter()
                    .chain(std::iter::once(&self.header))
                    .map(|r| r.get(c).map_or(0, |s| s.chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let mut line = String::new();
            for (c, cell) in r.iter().enumerate() {
                if c == 0 {
                    line.push_str(&format!("{cell:<w$}", w = width[0]));
                } else {
                    line.push_str(&format!("  {cell:>w$}", w = width[c]));
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub schema: u32,
    pub command: &'a str,
    pub version: &'a str,
    pub seed: Option<u64>,
    pub config: &'a C,
    pub result: &'a R,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    output: &'a Path,
    argv: &'a [String],
    threads: usize,
    duration_seconds: f64,
}

/// Where a command's JSON goes.
pub struct Sink {
    pub json: bool,
    pub out: Option<PathBuf>,
    pub argv: Vec<String>,
    pub threads: usize,
}

impl Sink {
    /// Prints the table unless JSON goes to stdout, then writes the
    /// envelope and, for files, the `<out>.manifest.json` sidecar.
    pub fn emit<C: Serialize, R: Serialize>(
        &self,
        command: &str,
        seed: Option<u64>,
        config: &C,
        result: &R,
        table: &str,
        elapsed: Duration,
    ) -> Result<()> {
        let envelope = Envelope {
            schema: SCHEMA,
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            result,
        };
        let mut text = serde_json::to_string_pretty(&envelope).context("serializing output")?;
        text.push('\n');
        if self.json {
            print!("{text}");
        } else {
            print!("{table}");
        }
        if let Some(path) = &self.out {
            fs::write(path, &text).with_context(|| format!("writing output: {}", path.display()))?;
            let manifest = Manifest {
                schema: SCHEMA,
                output: path,
                argv: &self.argv,
                threads: self.threads,
                duration_seconds: elapsed.as_secs_f64(),
            };
            let mpath = manifest_path(path);
            let mut m = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
            m.push('\n');
            fs::write(&mpath, m).with_context(|| format!("writing output: {}", mpath.display()))?;
        }
        Ok(())
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(-0.0123456789), "-0.0123457");
        assert_eq!(sig6(123456.4), "123456");
        assert_eq!(sig6(999999.7), "1.00000e+06");
        assert_eq!(sig6(0.00001234), "1.23400e-05");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(2.5e-300), "2.50000e-300");
    }

    #[test]
    fn table_alignment() {
        let mut t = Table::new(["", "Estimate", "pval"]);
        t.row("x1", ["1.00000".to_string(), "0.0500000".to_string()]);
        t.row("long_name", ["-2.00000".to_string(), "1.00000".to_string()]);
        assert_eq!(
            t.render(),
            "           Estimate       pval\n\
             x1          1.00000  0.0500000\n\
             long_name  -2.00000    1.00000\n"
        );
    }
}
