//! Trajectory, yield-curve and scan writers.
//!
//! Floats are written in shortest round-trip form, so identical runs give
//! byte-identical files.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use thiserror::Error;

use crate::analysis::{AttractorSummary, YieldCurve};
use crate::integrator::{Event, EventKind, Sample, Trajectory};

pub const TRAJECTORY_HEADER: &str = "t,N,dNdt,lambda,E,Y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }

    pub fn extension(&self) -> &'static str {
        self.as_str()
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" => Ok(Format::JsonLines),
            _ => Err(format!("unknown format `{s}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Serialize)]
struct EventLine {
    event: EventKind,
    t: f64,
}

fn json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, format: Format, mut w: W) -> io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "{TRAJECTORY_HEADER}")?;
            for s in &traj.samples {
                writeln!(
                    w,
                    "{:?},{:?},{:?},{:?},{:?},{:?}",
                    s.t, s.n, s.dndt, s.lambda, s.effort, s.yield_rate
                )?;
            }
            for e in &traj.events {
                writeln!(w, "#event,{:?},{}", e.t, e.kind.as_str())?;
            }
        }
        Format::JsonLines => {
            for s in &traj.samples {
                json_line(&mut w, s)?;
            }
            for e in &traj.events {
                json_line(
                    &mut w,
                    &EventLine {
                        event: e.kind,
                        t: e.t,
                    },
                )?;
            }
        }
    }
    w.flush()
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ReadError {
    pub line: usize,
    pub message: String,
}

/// Parses the CSV form written by [`write_trajectory`].
pub fn read_trajectory_csv(text: &str) -> Result<Trajectory, ReadError> {
    let err = |line: usize, message: String| ReadError { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == TRAJECTORY_HEADER => {}
        _ => return Err(err(1, format!("expected header `{TRAJECTORY_HEADER}`"))),
    }
    let mut traj = Trajectory::default();
    for (no, line) in lines {
        if let Some(rest) = line.strip_prefix("#event,") {
            let (t, kind) = rest
                .split_once(',')
                .ok_or_else(|| err(no, "malformed event line".into()))?;
            traj.events.push(Event {
                t: t.parse()
                    .map_err(|e| err(no, format!("bad event time: {e}")))?,
                kind: EventKind::parse(kind)
                    .ok_or_else(|| err(no, format!("unknown event `{kind}`")))?,
            });
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| err(no, format!("bad number: {e}")))?;
        let [t, n, dndt, lambda, effort, yield_rate] = fields[..] else {
            return Err(err(
                no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        };
        if effort < 0.0 {
            traj.negative_effort_samples += 1;
        }
        traj.samples.push(Sample {
            t,
            n,
            dndt,
            lambda,
            effort,
            yield_rate,
        });
    }
    if traj.samples.is_empty() {
        return Err(err(2, "no samples".into()));
    }
    Ok(traj)
}

pub fn write_yield_curve<W: Write>(curve: &YieldCurve, format: Format, mut w: W) -> io::Result<()> {
    #[derive(Serialize)]
    struct Row {
        lambda_q_alpha: f64,
        #[serde(rename = "Y")]
        y: f64,
    }
    if format == Format::Csv {
        writeln!(w, "lambda_q_alpha,Y")?;
    }
    for (&x, &y) in curve.axis.iter().zip(&curve.yields) {
        match format {
            Format::Csv => writeln!(w, "{x:?},{y:?}")?,
            Format::JsonLines => json_line(
                &mut w,
                &Row {
                    lambda_q_alpha: x,
                    y,
                },
            )?,
        }
    }
    w.flush()
}

fn opt_csv(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_scan<W: Write>(scan: &[AttractorSummary], format: Format, mut w: W) -> io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(
                w,
                "control,final_N,extinct,singular,period,min_N,max_N,error"
            )?;
            for s in scan {
                writeln!(
                    w,
                    "{:?},{:?},{},{},{},{:?},{:?},{}",
                    s.control,
                    s.final_biomass,
                    s.extinct,
                    s.singular,
                    opt_csv(s.period),
                    s.min_biomass,
                    s.max_biomass,
                    s.error.as_deref().unwrap_or("").replace(',', ";"),
                )?;
            }
        }
        Format::JsonLines => {
            for s in scan {
                json_line(&mut w, s)?;
            }
        }
    }
    w.flush()
}

/// Pretty JSON for reports.
pub fn write_json<W: Write, T: Serialize>(value: &T, mut w: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}
