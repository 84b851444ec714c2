//! Plain-text system and circle-map files, TOML reports and CSV tables.
//!
//! System file grammar (`#` starts a comment):
//!
//! ```text
//! [base]          rows of comma-separated integers
//! [gluing]        optional, defaults to the identity
//! [phase]         optional: `mapping` (default) or `torus`
//! [fiber]         `rotation <theta>` and term lines `coeff sin|cos k_1 .. k_d l`
//! [conjugate]     repeatable; term lines of one conjugator layer
//! ```
//!
//! Circle-map file grammar: `rotation <theta>`, term lines `coeff sin|cos k`
//! for `F(x) = x + theta + sum coeff * trig(2 pi k x)`, and an optional
//! `grid <n>` used when a sampled lift is needed.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use toml::{Table, Value};

use crate::circle::{CircleLift, MonotoneCircleLift, RotationNumber, DEFAULT_LIFT_GRID};
use crate::classify::{Case, ClassificationReport, DecompositionReport, OpenInterval, Regime, Support};
use crate::error::{Error, Result};
use crate::holonomy::{CompactClasses, HeightSet, HolonomyMap};
use crate::skew::{FiberMapFamily, PhaseSpace, SkewProductSystem, SystemConfig, Trig, TrigTerm};
use crate::torus::{compute_splitting, IntegerMatrix};

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|e| Error::parse(line, format!("bad number {token:?}: {e}")))
}

fn parse_int<T: std::str::FromStr>(token: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    token
        .parse::<T>()
        .map_err(|e| Error::parse(line, format!("bad integer {token:?}: {e}")))
}

fn parse_trig(token: &str, line: usize) -> Result<Trig> {
    match token {
        "sin" => Ok(Trig::Sin),
        "cos" => Ok(Trig::Cos),
        other => Err(Error::parse(line, format!("expected sin or cos, found {other:?}"))),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Base,
    Gluing,
    Phase,
    Fiber,
    Conjugate,
}

fn parse_term(tokens: &[&str], dim: usize, line: usize) -> Result<TrigTerm> {
    if tokens.len() != dim + 3 {
        return Err(Error::parse(
            line,
            format!("term needs a coefficient, sin|cos and {} frequencies", dim + 1),
        ));
    }
    let coefficient = parse_f64(tokens[0], line)?;
    let trig = parse_trig(tokens[1], line)?;
    let freq = tokens[2..]
        .iter()
        .map(|t| parse_int::<i32>(t, line))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrigTerm::new(coefficient, trig, &freq))
}

/// Parses a system file. The numerical configuration is the default one.
pub fn parse_system(text: &str) -> Result<SkewProductSystem> {
    let mut section = Section::None;
    let mut base_rows: Vec<Vec<i64>> = Vec::new();
    let mut gluing_rows: Vec<Vec<i64>> = Vec::new();
    let mut phase = PhaseSpace::MappingTorus;
    let mut rotation = 0.0;
    // terms are parsed once the base dimension is known
    let mut fiber_lines: Vec<(usize, Vec<String>)> = Vec::new();
    let mut layers: Vec<Vec<(usize, Vec<String>)>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[base]" => Section::Base,
                "[gluing]" => Section::Gluing,
                "[phase]" => Section::Phase,
                "[fiber]" => Section::Fiber,
                "[conjugate]" => {
                    layers.push(Vec::new());
                    Section::Conjugate
                }
                other => return Err(Error::parse(n, format!("unknown section {other}"))),
            };
            continue;
        }
        let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        match section {
            Section::None => return Err(Error::parse(n, "content before the first section")),
            Section::Base | Section::Gluing => {
                let row = line
                    .split(',')
                    .map(|t| parse_int::<i64>(t.trim(), n))
                    .collect::<Result<Vec<_>>>()?;
                if section == Section::Base {
                    base_rows.push(row);
                } else {
                    gluing_rows.push(row);
                }
            }
            Section::Phase => {
                phase = match line {
                    "mapping" => PhaseSpace::MappingTorus,
                    "torus" => PhaseSpace::TorusProduct,
                    other => {
                        return Err(Error::parse(n, format!("phase must be mapping or torus, found {other:?}")))
                    }
                }
            }
            Section::Fiber if tokens[0] == "rotation" => {
                if tokens.len() != 2 {
                    return Err(Error::parse(n, "rotation takes one value"));
                }
                rotation = parse_f64(&tokens[1], n)?;
            }
            Section::Fiber => fiber_lines.push((n, tokens)),
            Section::Conjugate => layers.last_mut().expect("layer opened").push((n, tokens)),
        }
    }
    if base_rows.is_empty() {
        return Err(Error::parse(0, "missing [base] section"));
    }
    let a = IntegerMatrix::from_rows(&base_rows)?;
    let dim = a.dim();
    let gluing = if gluing_rows.is_empty() {
        IntegerMatrix::identity(dim)
    } else {
        IntegerMatrix::from_rows(&gluing_rows)?
    };
    let terms_of = |lines: &[(usize, Vec<String>)]| {
        lines
            .iter()
            .map(|(n, t)| parse_term(&t.iter().map(String::as_str).collect::<Vec<_>>(), dim, *n))
            .collect::<Result<Vec<_>>>()
    };
    let fiber = FiberMapFamily {
        rotation,
        terms: terms_of(&fiber_lines)?,
        conjugators: layers.iter().map(|l| terms_of(l)).collect::<Result<Vec<_>>>()?,
    };
    SkewProductSystem::new(compute_splitting(&a)?, gluing, fiber, phase, SystemConfig::default())
}

fn format_term(t: &TrigTerm, dim: usize) -> String {
    let mut s = format!("{:?} {}", t.coefficient, t.trig.name());
    for k in &t.base[..dim] {
        s.push_str(&format!(" {k}"));
    }
    s.push_str(&format!(" {}", t.fiber));
    s
}

fn format_rows(m: &IntegerMatrix, out: &mut String) {
    for row in m.rows() {
        let r: Vec<String> = row.iter().map(i64::to_string).collect();
        out.push_str(&r.join(","));
        out.push('\n');
    }
}

/// Prints a system file that [`parse_system`] reads back to an equal system.
pub fn format_system(sys: &SkewProductSystem) -> String {
    let dim = sys.dim();
    let mut out = String::from("[base]\n");
    format_rows(sys.base().matrix(), &mut out);
    out.push_str("[gluing]\n");
    format_rows(sys.gluing(), &mut out);
    out.push_str("[phase]\n");
    out.push_str(match sys.phase_space() {
        PhaseSpace::MappingTorus => "mapping\n",
        PhaseSpace::TorusProduct => "torus\n",
    });
    let fiber = sys.fiber();
    out.push_str(&format!("[fiber]\nrotation {:?}\n", fiber.rotation));
    for t in &fiber.terms {
        out.push_str(&format_term(t, dim));
        out.push('\n');
    }
    for layer in &fiber.conjugators {
        out.push_str("[conjugate]\n");
        for t in layer {
            out.push_str(&format_term(t, dim));
            out.push('\n');
        }
    }
    out
}

/// Reads a file, naming the path in I/O errors.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_system(path: &Path) -> Result<SkewProductSystem> {
    parse_system(&read_text(path)?)
}

/// `F(x) = x + rotation + sum c * trig(2 pi k x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleMapSpec {
    pub rotation: f64,
    pub terms: Vec<(f64, Trig, i32)>,
    pub grid: usize,
}

impl CircleMapSpec {
    pub fn eval(&self, x: f64) -> f64 {
        let mut y = x + self.rotation;
        for &(c, trig, k) in &self.terms {
            let p = TAU * k as f64 * x;
            y += match trig {
                Trig::Sin => c * p.sin(),
                Trig::Cos => c * p.cos(),
            };
        }
        y
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let mut d = 1.0;
        for &(c, trig, k) in &self.terms {
            let w = TAU * k as f64;
            d += match trig {
                Trig::Sin => c * w * (w * x).cos(),
                Trig::Cos => -c * w * (w * x).sin(),
            };
        }
        d
    }

    /// Sampled lift on `grid` points.
    pub fn to_lift(&self) -> Result<MonotoneCircleLift> {
        MonotoneCircleLift::from_fn(self.grid, |x| self.eval(x))
    }

    fn validate(&self) -> Result<()> {
        let bound: f64 = self.terms.iter().map(|&(c, _, k)| (c * TAU * k as f64).abs()).sum();
        if bound < 1.0 {
            return Ok(());
        }
        let n = 4 * self.grid;
        for i in 0..n {
            let x = i as f64 / n as f64;
            if self.derivative(x) <= 0.0 {
                return Err(Error::Validation {
                    point: format!("x = {x}"),
                    reason: "circle map is not increasing".into(),
                });
            }
        }
        Ok(())
    }
}

impl CircleLift for CircleMapSpec {
    fn lift(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

pub fn parse_circle_map(text: &str) -> Result<CircleMapSpec> {
    let mut spec = CircleMapSpec {
        rotation: 0.0,
        terms: Vec::new(),
        grid: DEFAULT_LIFT_GRID,
    };
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let tokens: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["rotation", v] => spec.rotation = parse_f64(v, n)?,
            ["grid", v] => spec.grid = parse_int(v, n)?,
            [c, trig, k] => spec.terms.push((parse_f64(c, n)?, parse_trig(trig, n)?, parse_int(k, n)?)),
            _ => return Err(Error::parse(n, format!("unrecognized line {:?}", raw.trim()))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Parameters that determine a run; embedded in every report.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub input: Option<String>,
    pub depth: usize,
    pub tol: f64,
    pub seed: u64,
    pub grid: usize,
    pub iters: usize,
}

impl Provenance {
    pub fn table(&self) -> Table {
        let mut t = Table::new();
        t.insert("command".into(), Value::from(self.command.clone()));
        if let Some(input) = &self.input {
            t.insert("input".into(), Value::from(input.clone()));
        }
        t.insert("depth".into(), int(self.depth));
        t.insert("tol".into(), Value::from(self.tol));
        t.insert("seed".into(), Value::from(self.seed.to_string()));
        t.insert("grid".into(), int(self.grid));
        t.insert("iters".into(), int(self.iters));
        t.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        t
    }
}

fn int(n: impl TryInto<i64>) -> Value {
    Value::Integer(n.try_into().unwrap_or(i64::MAX))
}

fn floats(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(Value::from).collect())
}

/// A TOML document with a `[provenance]` table; keys render in sorted order.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    table: Table,
}

impl Report {
    pub fn new(provenance: &Provenance) -> Self {
        let mut table = Table::new();
        table.insert("provenance".into(), Value::Table(provenance.table()));
        Report { table }
    }

    pub fn insert(&mut self, key: &str, table: Table) {
        self.table.insert(key.into(), Value::Table(table));
    }

    pub fn get(&self, key: &str) -> Option<&Table> {
        self.table.get(key).and_then(Value::as_table)
    }

    pub fn render(&self) -> String {
        self.table.to_string()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

fn height_set(h: &HeightSet) -> Table {
    let mut t = Table::new();
    match *h {
        HeightSet::Point(z) => {
            t.insert("kind".into(), Value::from("point"));
            t.insert("height".into(), Value::from(z));
        }
        HeightSet::Interval { start, end } => {
            t.insert("kind".into(), Value::from("interval"));
            t.insert("start".into(), Value::from(start));
            t.insert("end".into(), Value::from(end));
        }
    }
    t
}

fn open_intervals(open: &[OpenInterval]) -> Value {
    let rows = open
        .iter()
        .map(|o| {
            let mut row = Table::new();
            row.insert("start".into(), Value::from(o.start));
            row.insert("end".into(), Value::from(o.end));
            row.insert("regime".into(), Value::from(o.regime.name()));
            if let Regime::Scaling { lambda } = o.regime {
                row.insert("lambda".into(), Value::from(lambda));
            }
            Value::Table(row)
        })
        .collect();
    Value::Array(rows)
}

pub fn classification_table(r: &ClassificationReport) -> Table {
    let mut t = Table::new();
    t.insert("case".into(), Value::from(r.case.tag()));
    match &r.case {
        Case::Accessible => {}
        Case::JointlyIntegrable { theta, rational } => {
            t.insert("theta".into(), Value::from(*theta));
            if let Some((p, q)) = rational {
                t.insert("theta_p".into(), Value::from(*p));
                t.insert("theta_q".into(), Value::from(*q));
            }
        }
        Case::Laminated { period, compact, open } => {
            t.insert("period".into(), int(*period));
            t.insert(
                "compact".into(),
                Value::Array(compact.iter().map(|h| Value::Table(height_set(h))).collect()),
            );
            t.insert("open".into(), open_intervals(open));
        }
        Case::Irrational { rho, compact, open } => {
            t.insert("rho".into(), Value::from(*rho));
            t.insert(
                "compact".into(),
                Value::Array(compact.iter().map(|h| Value::Table(height_set(h))).collect()),
            );
            t.insert("open".into(), open_intervals(open));
        }
    }
    let w = &r.witnesses;
    let mut wt = Table::new();
    wt.insert("min_displacement".into(), Value::from(w.min_displacement));
    wt.insert("max_displacement".into(), Value::from(w.max_displacement));
    wt.insert("rotation_estimate".into(), Value::from(w.rotation_estimate));
    wt.insert("rotation_error".into(), Value::from(w.rotation_error));
    wt.insert("tail_bound".into(), Value::from(w.tail_bound));
    wt.insert("generators".into(), int(w.generators));
    wt.insert("invariance_defect".into(), Value::from(w.invariance_defect));
    t.insert("witnesses".into(), Value::Table(wt));
    t.insert("band_fraction".into(), Value::from(r.band_fraction));
    let bands = r
        .indeterminate_bands
        .iter()
        .map(|&(a, b)| floats([a, b]))
        .collect();
    t.insert("indeterminate_bands".into(), Value::Array(bands));
    t
}

pub fn decomposition_table(r: &DecompositionReport) -> Table {
    let mut t = Table::new();
    t.insert("period".into(), int(r.period));
    t.insert("n_orbits".into(), int(r.n_orbits));
    t.insert("n_iters".into(), int(r.n_iters));
    let comps = r
        .components
        .iter()
        .map(|c| {
            let mut ct = Table::new();
            match c.support {
                Support::Interval { start, end } => {
                    ct.insert("support".into(), Value::from("interval"));
                    ct.insert("start".into(), Value::from(start));
                    ct.insert("end".into(), Value::from(end));
                }
                Support::Leaf { height } => {
                    ct.insert("support".into(), Value::from("leaf"));
                    ct.insert("height".into(), Value::from(height));
                }
            }
            ct.insert("ergodic".into(), Value::from(c.rows.iter().all(|r| r.ergodic)));
            Value::Table(ct)
        })
        .collect();
    t.insert("components".into(), Value::Array(comps));
    t
}

pub fn rotation_table(r: &RotationNumber) -> Table {
    let mut t = Table::new();
    t.insert("value".into(), Value::from(r.value));
    t.insert("estimate".into(), Value::from(r.estimate));
    t.insert("error_bound".into(), Value::from(r.error_bound));
    t.insert("rational".into(), Value::from(r.rational.is_some()));
    if let Some(q) = r.rational {
        t.insert("p".into(), Value::from(q.p));
        t.insert("q".into(), Value::from(q.q));
        t.insert("periodic_point".into(), Value::from(q.periodic_point));
    }
    t
}

pub fn holonomy_table(h: &HolonomyMap) -> Table {
    let mut t = Table::new();
    t.insert("kind".into(), Value::from(h.kind.name()));
    t.insert("truncation_depth".into(), int(h.truncation_depth));
    t.insert("tail_bound".into(), Value::from(h.tail_bound));
    t
}

pub fn compact_classes_table(k: &CompactClasses) -> Table {
    let mut t = Table::new();
    t.insert(
        "components".into(),
        Value::Array(k.components.iter().map(|h| Value::Table(height_set(h))).collect()),
    );
    t.insert(
        "bands".into(),
        Value::Array(k.bands.iter().map(|&(a, b)| floats([a, b])).collect()),
    );
    t.insert("band_fraction".into(), Value::from(k.band_fraction));
    t.insert("min_displacement".into(), Value::from(k.min_displacement));
    t.insert("max_displacement".into(), Value::from(k.max_displacement));
    t
}

/// Writes `x,value` rows in 17-significant-digit scientific notation.
pub fn write_xy_csv(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "value"])?;
    for &(x, v) in rows {
        w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a table whose numeric cells use 17-significant-digit notation.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sci(x: f64) -> String {
    format!("{x:.16e}")
}
