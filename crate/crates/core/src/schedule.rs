//! Time-dependent harvest intensity `lambda(t)`.
//!
//! Windows are half-open `[start, end)`, so every schedule is defined for all
//! `t >= 0` and breakpoints fall on the first instant of a new piece.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("invalid schedule parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ScheduleError {
    ScheduleError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Half-sine pulse of height `peak` over `[n + t_start, n + t_start + duration)`
    /// each year.
    SinePulse {
        t_start: f64,
        duration: f64,
        peak: f64,
    },
    /// `level` during open windows of length `open`, zero for `closed` after each.
    SquareWave { open: f64, closed: f64, level: f64 },
    /// `(1 + sin(2 pi t)) / 4`.
    Sinusoid,
    /// `inner` during the first `open_years` of every
    /// `open_years + closed_years` cycle, zero otherwise.
    Gated {
        inner: Box<Schedule>,
        open_years: u32,
        closed_years: u32,
    },
}

pub fn lambda_sine_pulse(t: f64, t_start: f64, duration: f64, peak: f64) -> f64 {
    let start = t.floor() + t_start;
    if t >= start && t < start + duration {
        peak * (PI * (t - start) / duration).sin()
    } else {
        0.0
    }
}

pub fn lambda_square(t: f64, open: f64, closed: f64, level: f64) -> f64 {
    let phase = t.rem_euclid(open + closed);
    if phase < open {
        level
    } else {
        0.0
    }
}

pub fn lambda_sinusoid(t: f64) -> f64 {
    (1.0 + (2.0 * PI * t).sin()) / 4.0
}

/// Whether calendar year `floor(t)` is an open year of the rotation.
pub fn rotation_is_open(t: f64, open_years: u32, closed_years: u32) -> bool {
    let cycle = f64::from(open_years + closed_years);
    t.floor().rem_euclid(cycle) < f64::from(open_years)
}

pub fn lambda_rotational(t: f64, inner: &Schedule, open_years: u32, closed_years: u32) -> f64 {
    if rotation_is_open(t, open_years, closed_years) {
        inner.value(t)
    } else {
        0.0
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        match self {
            Schedule::SinePulse {
                t_start,
                duration,
                peak,
            } => {
                if !(0.0..1.0).contains(t_start) {
                    return Err(invalid(
                        "t_start",
                        format!("must lie in [0, 1), got {t_start}"),
                    ));
                }
                if !(*duration > 0.0 && t_start + duration <= 1.0) {
                    return Err(invalid(
                        "H",
                        format!("must be > 0 with t_start + H <= 1, got {duration}"),
                    ));
                }
                if !(0.0..=1.0).contains(peak) {
                    return Err(invalid("peak", format!("must lie in [0, 1], got {peak}")));
                }
            }
            Schedule::SquareWave {
                open,
                closed,
                level,
            } => {
                if !(open.is_finite() && *open > 0.0) {
                    return Err(invalid("H", format!("must be > 0, got {open}")));
                }
                if !(closed.is_finite() && *closed >= 0.0) {
                    return Err(invalid("b", format!("must be >= 0, got {closed}")));
                }
                if !(0.0..=1.0).contains(level) {
                    return Err(invalid("level", format!("must lie in [0, 1], got {level}")));
                }
            }
            Schedule::Sinusoid => {}
            Schedule::Gated {
                inner, open_years, ..
            } => {
                if *open_years < 1 {
                    return Err(invalid("open_years", "must be >= 1"));
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Schedule::SinePulse {
                t_start,
                duration,
                peak,
            } => lambda_sine_pulse(t, *t_start, *duration, *peak),
            Schedule::SquareWave {
                open,
                closed,
                level,
            } => lambda_square(t, *open, *closed, *level),
            Schedule::Sinusoid => lambda_sinusoid(t),
            Schedule::Gated {
                inner,
                open_years,
                closed_years,
            } => lambda_rotational(t, inner, *open_years, *closed_years),
        }
    }

    /// Smallest forcing period.
    pub fn period(&self) -> f64 {
        match self {
            Schedule::SinePulse { .. } | Schedule::Sinusoid => 1.0,
            Schedule::SquareWave { open, closed, .. } => open + closed,
            Schedule::Gated {
                inner,
                open_years,
                closed_years,
            } => {
                if *closed_years == 0 {
                    inner.period()
                } else {
                    f64::from(open_years + closed_years)
                }
            }
        }
    }

    /// Upper bound on `value(t)`.
    pub fn max_value(&self) -> f64 {
        match self {
            Schedule::SinePulse { peak, .. } => *peak,
            Schedule::SquareWave { level, .. } => *level,
            Schedule::Sinusoid => 0.5,
            Schedule::Gated { inner, .. } => inner.max_value(),
        }
    }

    /// Points in the open interval `(t0, t1)` where `value` has a jump or a
    /// corner, ascending and without duplicates.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            Schedule::SinePulse {
                t_start, duration, ..
            } => {
                for year in year_range(t0, t1) {
                    push_inside(&mut out, year + t_start, t0, t1);
                    push_inside(&mut out, year + t_start + duration, t0, t1);
                }
            }
            Schedule::SquareWave { open, closed, .. } => {
                if *closed > 0.0 {
                    let period = open + closed;
                    let first = (t0 / period).floor() as i64;
                    let last = (t1 / period).ceil() as i64;
                    for k in first..=last {
                        let base = k as f64 * period;
                        push_inside(&mut out, base, t0, t1);
                        push_inside(&mut out, base + open, t0, t1);
                    }
                }
            }
            Schedule::Sinusoid => {}
            Schedule::Gated {
                inner,
                open_years,
                closed_years,
            } => {
                if *closed_years == 0 {
                    return inner.breakpoints(t0, t1);
                }
                let cycle = i64::from(open_years + closed_years);
                for year in year_range(t0, t1) {
                    let y = year as i64;
                    let phase = y.rem_euclid(cycle);
                    if phase == 0 || phase == i64::from(*open_years) {
                        push_inside(&mut out, year, t0, t1);
                    }
                }
                out.extend(
                    inner
                        .breakpoints(t0, t1)
                        .into_iter()
                        .filter(|&b| rotation_is_open(b, *open_years, *closed_years)),
                );
                out.sort_by(f64::total_cmp);
                out.dedup();
            }
        }
        out
    }
}

fn year_range(t0: f64, t1: f64) -> impl Iterator<Item = f64> {
    let first = t0.floor() as i64 - 1;
    let last = t1.ceil() as i64;
    (first..=last).map(|y| y as f64)
}

fn push_inside(out: &mut Vec<f64>, b: f64, t0: f64, t1: f64) {
    if b > t0 && b < t1 && out.last().is_none_or(|&l| b > l) {
        out.push(b);
    }
}
