//! Plain-text serialization of instances, solutions, and CSV sweep tables.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which is
//! enough to reconstruct every IEEE double exactly, so `write(read(file))`
//! is byte-identical for files produced by this module.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::instance::{InstanceFile, MapKind};
use crate::solver::SolveReport;

const INSTANCE_HEADER: &str = "pqlab-instance";
const SOLUTION_HEADER: &str = "pqlab-solution";

/// Canonical float formatting: 17 significant digits, scientific.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: expected a number, got {token:?}")))
}

fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {line}: expected an integer, got {token:?}")))
}

fn join_floats(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{}", fmt_f64(*v));
    }
    out
}

struct Lines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate() }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Parse("unexpected end of file".into()))
    }

    fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (no, line) = self.next_line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(head) if head == keyword => Ok((no, parts.collect())),
            Some(head) => Err(Error::Parse(format!("line {no}: expected {keyword:?}, got {head:?}"))),
            None => Err(Error::Parse(format!("line {no}: expected {keyword:?}, got an empty line"))),
        }
    }

    fn float_row(&mut self, expected_len: usize) -> Result<Vec<f64>> {
        let (no, line) = self.next_line()?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| parse_f64(t, no))
            .collect::<Result<_>>()?;
        if values.len() != expected_len {
            return Err(Error::Parse(format!(
                "line {no}: expected {expected_len} numbers, got {}",
                values.len()
            )));
        }
        Ok(values)
    }
}

/// Render an instance file to its canonical text form.
pub fn render_instance(file: &InstanceFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{INSTANCE_HEADER}");
    let _ = writeln!(out, "schema_version {}", file.schema_version);
    let _ = writeln!(out, "points {}", file.weights.len());
    let _ = writeln!(out, "value_dim {}", file.value_dim);
    let _ = writeln!(out, "p {}", fmt_f64(file.p));
    let _ = writeln!(out, "weights");
    let _ = writeln!(out, "{}", join_floats(&file.weights));
    let _ = writeln!(out, "basis {}", file.basis.len());
    for row in &file.basis {
        let _ = writeln!(out, "{}", join_floats(row));
    }
    let _ = writeln!(out, "a");
    let _ = writeln!(out, "{}", join_floats(&file.a));
    let _ = writeln!(out, "b");
    let _ = writeln!(out, "{}", join_floats(&file.b));
    let _ = writeln!(out, "map {}", file.map_kind.label());
    if let Some(c) = &file.coefficient {
        let _ = writeln!(out, "coefficient");
        let _ = writeln!(out, "{}", join_floats(c));
    }
    let _ = writeln!(out, "end");
    out
}

/// Parse the canonical instance text form.
pub fn parse_instance(text: &str) -> Result<InstanceFile> {
    let mut lines = Lines::new(text);
    let (no, header) = lines.next_line()?;
    if header.trim() != INSTANCE_HEADER {
        return Err(Error::Parse(format!("line {no}: not an instance file (header {header:?})")));
    }
    let (no, args) = lines.expect("schema_version")?;
    let schema_version = parse_usize(args.first().copied().unwrap_or(""), no)? as u32;
    if schema_version != 1 {
        return Err(Error::Parse(format!("unsupported schema_version {schema_version}")));
    }
    let (no, args) = lines.expect("points")?;
    let points = parse_usize(args.first().copied().unwrap_or(""), no)?;
    let (no, args) = lines.expect("value_dim")?;
    let value_dim = parse_usize(args.first().copied().unwrap_or(""), no)?;
    let (no, args) = lines.expect("p")?;
    let p = parse_f64(args.first().copied().unwrap_or(""), no)?;
    lines.expect("weights")?;
    let weights = lines.float_row(points)?;
    let (no, args) = lines.expect("basis")?;
    let basis_rows = parse_usize(args.first().copied().unwrap_or(""), no)?;
    let mut basis = Vec::with_capacity(basis_rows);
    for _ in 0..basis_rows {
        basis.push(lines.float_row(points * value_dim)?);
    }
    lines.expect("a")?;
    let a = lines.float_row(points * value_dim)?;
    lines.expect("b")?;
    let b = lines.float_row(points * value_dim)?;
    let (no, args) = lines.expect("map")?;
    let map_kind = MapKind::parse(args.first().copied().unwrap_or("")).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("line {no}: {msg}")),
        other => other,
    })?;
    // Optional coefficient section, then "end".
    let (no, line) = lines.next_line()?;
    let coefficient = match line.split_whitespace().next() {
        Some("coefficient") => {
            let c = lines.float_row(points)?;
            lines.expect("end")?;
            Some(c)
        }
        Some("end") => None,
        other => {
            return Err(Error::Parse(format!(
                "line {no}: expected \"coefficient\" or \"end\", got {other:?}"
            )))
        }
    };
    let file = InstanceFile {
        schema_version,
        weights,
        value_dim,
        p,
        basis,
        a,
        b,
        map_kind,
        coefficient,
    };
    file.validate()?;
    Ok(file)
}

pub fn write_instance(path: &Path, file: &InstanceFile) -> Result<()> {
    std::fs::write(path, render_instance(file))?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<InstanceFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_instance(&text)
}

/// Render a solve report to the solution text form.
pub fn render_solution(report: &SolveReport) -> String {
    let space = report.phi.space();
    let mut out = String::new();
    let _ = writeln!(out, "{SOLUTION_HEADER}");
    let _ = writeln!(out, "schema_version 1");
    let _ = writeln!(out, "points {}", space.point_count());
    let _ = writeln!(out, "value_dim {}", space.value_dim());
    let _ = writeln!(out, "p {}", fmt_f64(report.phi.exps.p()));
    let _ = writeln!(out, "converged {}", report.converged);
    let _ = writeln!(out, "iterations {}", report.iterations);
    let _ = writeln!(out, "residual_norm {}", fmt_f64(report.residual_norm));
    let _ = writeln!(out, "tolerance {}", fmt_f64(report.tolerance));
    let _ = writeln!(out, "basic_estimate_ratio {}", fmt_f64(report.basic_estimate_ratio));
    let _ = writeln!(out, "alpha");
    let _ = writeln!(out, "{}", join_floats(report.phi.a.values()));
    let _ = writeln!(out, "beta");
    let _ = writeln!(out, "{}", join_floats(report.phi.b.values()));
    let _ = writeln!(out, "end");
    out
}

pub fn write_solution(path: &Path, report: &SolveReport) -> Result<()> {
    std::fs::write(path, render_solution(report))?;
    Ok(())
}

/// A deterministic CSV table builder.
pub struct CsvTable {
    text: String,
}

impl CsvTable {
    pub fn new(header: &str) -> Self {
        Self { text: format!("{header}\n") }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }

    pub fn write(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.finish())?;
        Ok(())
    }
}
