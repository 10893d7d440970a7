//! File formats: system and signal JSON, signal/trajectory/curve CSV and
//! certificate JSON.
//!
//! Floats in CSV are written with 17 significant digits, `.` as decimal
//! separator and LF line endings.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FieldTerm, Subsystem, SubsystemKind, SwitchedSystem};
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::lyapunov::{LyapunovForm, Monomial, PolynomialForm, QuadraticForm};
use crate::signals::SwitchingSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub dimension: usize,
    pub subsystems: Vec<SubsystemFile>,
    pub lyapunov: LyapunovFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemFile {
    #[serde(rename = "type")]
    pub kind: SubsystemKindFile,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<FieldTermFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsystemKindFile {
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldTermFile {
    pub target: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LyapunovFile {
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    Polynomial {
        terms: Vec<MonomialFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialFile {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::input(format!("{what} must be {d}×{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SystemFile {
    pub fn build(&self) -> Result<SwitchedSystem> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        let subsystems = self
            .subsystems
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let a = matrix_from_rows(&s.matrix, d, &format!("matrix of subsystem {}", k + 1))?;
                match s.kind {
                    SubsystemKindFile::Linear if !s.terms.is_empty() => Err(Error::input(format!(
                        "subsystem {} is linear but lists polynomial terms",
                        k + 1
                    ))),
                    SubsystemKindFile::Linear => Subsystem::linear(a),
                    SubsystemKindFile::Polynomial => Subsystem::polynomial(
                        a,
                        s.terms
                            .iter()
                            .map(|t| FieldTerm::new(t.target, t.coeff, t.exponents.clone()))
                            .collect(),
                    ),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let lyapunov = match &self.lyapunov {
            LyapunovFile::Quadratic { p } => LyapunovForm::Quadratic(QuadraticForm::new(matrix_from_rows(p, d, "P")?)?),
            LyapunovFile::Polynomial { terms } => LyapunovForm::Polynomial(PolynomialForm::new(
                d,
                terms
                    .iter()
                    .map(|t| Monomial::new(t.coeff, t.exponents.clone()))
                    .collect(),
            )?),
        };
        SwitchedSystem::new(subsystems, lyapunov)
    }

    pub fn from_system(sys: &SwitchedSystem) -> Self {
        let subsystems = sys
            .subsystems()
            .iter()
            .map(|s| SubsystemFile {
                kind: match s.kind() {
                    SubsystemKind::Linear => SubsystemKindFile::Linear,
                    SubsystemKind::Polynomial => SubsystemKindFile::Polynomial,
                },
                matrix: matrix_to_rows(s.matrix()),
                terms: s
                    .terms()
                    .iter()
                    .map(|t| FieldTermFile {
                        target: t.target,
                        coeff: t.coeff,
                        exponents: t.exponents.clone(),
                    })
                    .collect(),
            })
            .collect();
        let lyapunov = match sys.lyapunov() {
            LyapunovForm::Quadratic(q) => LyapunovFile::Quadratic {
                p: matrix_to_rows(q.matrix()),
            },
            LyapunovForm::Polynomial(f) => LyapunovFile::Polynomial {
                terms: f
                    .terms()
                    .iter()
                    .map(|t| MonomialFile {
                        coeff: t.coeff,
                        exponents: t.exponents.clone(),
                    })
                    .collect(),
            },
        };
        SystemFile {
            dimension: sys.dimension(),
            subsystems,
            lyapunov,
        }
    }
}

pub fn parse_system(text: &str) -> Result<SwitchedSystem> {
    serde_json::from_str::<SystemFile>(text)?.build()
}

pub fn read_system<R: Read>(reader: R) -> Result<SwitchedSystem> {
    serde_json::from_reader::<_, SystemFile>(reader)?.build()
}

pub fn system_to_json(sys: &SwitchedSystem) -> String {
    let mut s = serde_json::to_string_pretty(&SystemFile::from_system(sys)).expect("system file serializes");
    s.push('\n');
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalFile {
    switch_times: Vec<f64>,
    values: Vec<usize>,
    horizon: f64,
}

pub fn parse_signal_json(text: &str) -> Result<SwitchingSignal> {
    let f: SignalFile = serde_json::from_str(text)?;
    SwitchingSignal::new(f.switch_times, f.values, f.horizon)
}

pub fn signal_to_json(u: &SwitchingSignal) -> String {
    let mut s = serde_json::to_string_pretty(u).expect("signal serializes");
    s.push('\n');
    s
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse {
            line: p.line() as usize,
            column: 1,
            message: e.to_string(),
        },
        None => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse {
                line: 0,
                column: 0,
                message: format!("{other:?}"),
            },
        },
    }
}

#[derive(Deserialize)]
struct SignalRow {
    t: f64,
    i: usize,
}

/// Reads a `t,i` CSV; the horizon is not part of the format.
pub fn parse_signal_csv<R: Read>(reader: R, horizon: f64) -> Result<SwitchingSignal> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize::<SignalRow>() {
        let row = row.map_err(csv_error)?;
        times.push(row.t);
        values.push(row.i);
    }
    SwitchingSignal::new(times, values, horizon)
}

/// Fixed 17-significant-digit rendering.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn finish<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush()?;
    Ok(())
}

pub fn write_signal_csv<W: Write>(w: W, u: &SwitchingSignal) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["t", "i"]).map_err(csv_error)?;
    for (&t, &i) in u.switch_times().iter().zip(u.values()) {
        wtr.write_record([fmt_f64(t), i.to_string()]).map_err(csv_error)?;
    }
    finish(wtr)
}

/// Header `t,i,x1,…,xd,V,normP`, where `normP` is the Lyapunov norm.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory, v: &LyapunovForm) -> Result<()> {
    let d = v.dimension();
    let mut wtr = writer(w);
    let mut header = vec!["t".to_string(), "i".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    header.push("V".into());
    header.push("normP".into());
    wtr.write_record(&header).map_err(csv_error)?;
    for ((t, x), i) in traj.times.iter().zip(&traj.states).zip(&traj.indices) {
        let mut rec = vec![fmt_f64(*t), i.to_string()];
        rec.extend(x.iter().map(|c| fmt_f64(*c)));
        rec.push(fmt_f64(v.value(x.as_slice())));
        rec.push(fmt_f64(v.norm(x.as_slice())));
        wtr.write_record(&rec).map_err(csv_error)?;
    }
    finish(wtr)
}

/// `delta,M`
pub fn write_m_curve_csv<W: Write>(w: W, curve: &[(f64, f64)]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["delta", "M"]).map_err(csv_error)?;
    for (d, m) in curve {
        wtr.write_record([fmt_f64(*d), fmt_f64(*m)]).map_err(csv_error)?;
    }
    finish(wtr)
}

/// `t,beta_delta_<δ₁>,…`; `columns[k][j]` is the value for `deltas[k]` at `t_grid[j]`.
pub fn write_beta_curve_csv<W: Write>(w: W, t_grid: &[f64], deltas: &[f64], columns: &[Vec<f64>]) -> Result<()> {
    if deltas.len() != columns.len() || columns.iter().any(|c| c.len() != t_grid.len()) {
        return Err(Error::input("β curve columns do not match the grids"));
    }
    let mut wtr = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(deltas.iter().map(|d| format!("beta_delta_{d}")));
    wtr.write_record(&header).map_err(csv_error)?;
    for (j, t) in t_grid.iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(columns.iter().map(|c| fmt_f64(c[j])));
        wtr.write_record(&rec).map_err(csv_error)?;
    }
    finish(wtr)
}

/// `T,time_to_half`; an empty cell when the state never halved.
pub fn write_slow_csv<W: Write>(w: W, rows: &[crate::rates::SlowRow]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["T", "time_to_half"]).map_err(csv_error)?;
    for r in rows {
        let t = r.time_to_half.map(fmt_f64).unwrap_or_default();
        wtr.write_record([fmt_f64(r.tail_start), t]).map_err(csv_error)?;
    }
    finish(wtr)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `body` with tool name, version and a `kind` tag added.
pub fn to_report_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let env = Envelope {
        tool: "switchrate",
        version: crate::VERSION,
        kind,
        body,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
