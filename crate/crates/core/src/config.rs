//! Plain `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment. The same keys are accepted
//! as `key=value` command-line overrides. [`RunConfig::to_text`] writes a
//! file that parses back to an equal configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

use crate::analysis::Control;
use crate::integrator::{IntegrationConfig, IntegrationError};
use crate::model::{Coefficient, ModelError, ModelParams, Strategy};
use crate::output::Format;
use crate::schedule::{Schedule, ScheduleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    /// 1-based line in the config file; `None` for command-line overrides
    /// and missing keys.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if self.key.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "`{}`: {}", self.key, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Command {
    #[default]
    Simulate,
    Equilibria,
    YieldCurve,
    Bifurcation,
    Reproduce,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::YieldCurve => "yield-curve",
            Command::Bifurcation => "bifurcation",
            Command::Reproduce => "reproduce",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Command::Simulate,
            Command::Equilibria,
            Command::YieldCurve,
            Command::Bifurcation,
            Command::Reproduce,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

fn control_name(c: Control) -> &'static str {
    match c {
        Control::HarvestIntensity => "harvest-intensity",
        Control::Alpha => "alpha",
        Control::Lambda => "lambda",
        Control::Beta => "beta",
    }
}

fn parse_control(s: &str) -> Result<Control, String> {
    [
        Control::HarvestIntensity,
        Control::Alpha,
        Control::Lambda,
        Control::Beta,
    ]
    .into_iter()
    .find(|&c| control_name(c) == s)
    .ok_or_else(|| format!("unknown control `{s}` (harvest-intensity, alpha, lambda, beta)"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlineModel {
    pub params: ModelParams,
    pub strategy: Strategy,
    pub n0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Scenario(String),
    Inline(InlineModel),
}

/// Evenly spaced control values, both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        crate::analysis::linspace(self.start, self.end, self.points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub source: Source,
    pub dt: f64,
    /// `None` uses the scenario horizon, or 100 years for inline models.
    pub t_end: Option<f64>,
    pub event_tolerance: f64,
    pub extinction_floor: Option<f64>,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub control: Control,
    pub grid: Option<GridSpec>,
}

pub const DEFAULT_INLINE_HORIZON: f64 = 100.0;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        RawConfig::parse(text)?.build()
    }

    pub fn integration(&self, horizon: f64) -> IntegrationConfig {
        IntegrationConfig {
            dt: self.dt,
            t_end: self.t_end.unwrap_or(horizon),
            event_tolerance: self.event_tolerance,
            extinction_floor: self.extinction_floor,
        }
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut out = Vec::<(String, String)>::new();
        let mut put = |k: &str, v: String| out.push((k.to_owned(), v));
        let f = |v: f64| format!("{v:?}");
        put("command", self.command.as_str().into());
        match &self.source {
            Source::Scenario(name) => put("scenario", name.clone()),
            Source::Inline(m) => {
                let p = &m.params;
                put("r", f(p.r));
                put("K", f(p.k));
                put("q", f(p.q));
                for (name, c) in [("alpha", p.alpha), ("beta", p.beta)] {
                    match c {
                        Coefficient::Constant(v) => put(name, f(v)),
                        Coefficient::Harmonic {
                            mean,
                            amplitude,
                            period,
                        } => {
                            put(name, f(mean));
                            put(&format!("{name}_amplitude"), f(amplitude));
                            put(&format!("{name}_period"), f(period));
                        }
                    }
                }
                put("strategy", m.strategy.name().into());
                match &m.strategy {
                    Strategy::Constant { effort } => put("E", f(*effort)),
                    Strategy::Proportional { lambda } => put("lambda", f(*lambda)),
                    Strategy::RestrictedProportional { lambda, y_limit } => {
                        put("lambda", f(*lambda));
                        put("Y_limit", f(*y_limit));
                    }
                    Strategy::ProportionalThreshold { lambda, n_thre } => {
                        put("lambda", f(*lambda));
                        put("N_thre", f(*n_thre));
                    }
                    Strategy::Seasonal { schedule } => put_schedule(&mut put, schedule),
                    Strategy::Rotational {
                        schedule,
                        open_years,
                        closed_years,
                    } => {
                        put_schedule(&mut put, schedule);
                        put("open_years", open_years.to_string());
                        put("closed_years", closed_years.to_string());
                    }
                }
                put("N0", f(m.n0));
            }
        }
        put("dt", f(self.dt));
        if let Some(t) = self.t_end {
            put("t_end", f(t));
        }
        put("event_tolerance", f(self.event_tolerance));
        if let Some(x) = self.extinction_floor {
            put("extinction_floor", f(x));
        }
        put("format", self.format.as_str().into());
        if let Some(p) = &self.output {
            put("output", p.to_string_lossy().into_owned());
        }
        put("control", control_name(self.control).into());
        if let Some(g) = self.grid {
            put("grid_start", f(g.start));
            put("grid_end", f(g.end));
            put("grid_points", g.points.to_string());
        }
        out.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn put_schedule(put: &mut impl FnMut(&str, String), schedule: &Schedule) {
    let f = |v: f64| format!("{v:?}");
    match schedule {
        Schedule::SinePulse {
            t_start,
            duration,
            peak,
        } => {
            put("schedule", "sine-pulse".into());
            put("t_start", f(*t_start));
            put("H", f(*duration));
            put("peak", f(*peak));
        }
        Schedule::SquareWave {
            open,
            closed,
            level,
        } => {
            put("schedule", "square".into());
            put("H", f(*open));
            put("b", f(*closed));
            put("level", f(*level));
        }
        Schedule::Sinusoid => put("schedule", "sinusoid".into()),
        Schedule::Gated { inner, .. } => put_schedule(put, inner),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "scenario",
    "r",
    "K",
    "q",
    "alpha",
    "alpha_amplitude",
    "alpha_period",
    "beta",
    "beta_amplitude",
    "beta_period",
    "strategy",
    "E",
    "lambda",
    "Y_limit",
    "N_thre",
    "schedule",
    "t_start",
    "H",
    "b",
    "peak",
    "level",
    "open_years",
    "closed_years",
    "N0",
    "dt",
    "t_end",
    "event_tolerance",
    "extinction_floor",
    "format",
    "output",
    "control",
    "grid_start",
    "grid_end",
    "grid_points",
];

const MODEL_KEYS: &[&str] = &[
    "r",
    "K",
    "q",
    "alpha",
    "alpha_amplitude",
    "alpha_period",
    "beta",
    "beta_amplitude",
    "beta_period",
    "strategy",
    "E",
    "lambda",
    "Y_limit",
    "N_thre",
    "schedule",
    "t_start",
    "H",
    "b",
    "peak",
    "level",
    "open_years",
    "closed_years",
    "N0",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Unvalidated assignments, kept so command-line overrides can be layered
/// over a file before building.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                line: Some(no),
                key: String::new(),
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            if raw.entries.contains_key(key) {
                return Err(ConfigError {
                    line: Some(no),
                    key: key.into(),
                    message: "assigned more than once".into(),
                });
            }
            raw.insert(key, value.trim(), Some(no))?;
        }
        Ok(raw)
    }

    /// Adds or replaces a command-line `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError {
            line: None,
            key: String::new(),
            message: format!("expected `key=value`, found `{pair}`"),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.insert(key, value, None)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn insert(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError {
                line,
                key: key.into(),
                message: "unknown key".into(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError {
                line,
                key: key.into(),
                message: "empty value".into(),
            });
        }
        self.entries.insert(
            key.into(),
            Entry {
                value: value.into(),
                line,
            },
        );
        Ok(())
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let mut b = Builder {
            raw: self,
            used: BTreeSet::new(),
        };
        let config = b.run_config()?;
        if let Some((key, entry)) = self
            .entries
            .iter()
            .find(|(k, _)| !b.used.contains(&k.as_str()))
        {
            return Err(ConfigError {
                line: entry.line,
                key: key.clone(),
                message: "does not apply to this configuration".into(),
            });
        }
        Ok(config)
    }
}

struct Builder<'a> {
    raw: &'a RawConfig,
    used: BTreeSet<&'static str>,
}

impl Builder<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.raw.entries.get(key).and_then(|e| e.line),
            key: key.into(),
            message: message.into(),
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&str> {
        let e = self.raw.entries.get(key)?;
        self.used.insert(key);
        Some(e.value.as_str())
    }

    fn parsed<T: FromStr>(&mut self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.get(key).map(str::to_owned) else {
            return Ok(None);
        };
        v.parse::<T>()
            .map(Some)
            .map_err(|e| self.err(key, format!("cannot parse `{v}`: {e}")))
    }

    fn required<T: FromStr>(&mut self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key)?.ok_or_else(|| ConfigError {
            line: None,
            key: key.into(),
            message: "required key is missing".into(),
        })
    }

    fn model_error(&self, e: ModelError) -> ConfigError {
        match e {
            ModelError::InvalidParameter { name, reason }
            | ModelError::Schedule(ScheduleError::InvalidParameter { name, reason }) => {
                self.err(name, reason)
            }
            other => self.err("", other.to_string()),
        }
    }

    fn coefficient(&mut self, name: &'static str) -> Result<Coefficient, ConfigError> {
        let (amp_key, period_key) = match name {
            "alpha" => ("alpha_amplitude", "alpha_period"),
            _ => ("beta_amplitude", "beta_period"),
        };
        let mean: f64 = self.required(name)?;
        let amplitude: Option<f64> = self.parsed(amp_key)?;
        let period: Option<f64> = self.parsed(period_key)?;
        Ok(match (amplitude, period) {
            (None, None) => Coefficient::Constant(mean),
            (None, Some(_)) => return Err(self.err(period_key, format!("needs `{amp_key}`"))),
            (Some(amplitude), period) => Coefficient::Harmonic {
                mean,
                amplitude,
                period: period.unwrap_or(1.0),
            },
        })
    }

    fn schedule(&mut self) -> Result<Schedule, ConfigError> {
        let kind: String = self.required("schedule")?;
        Ok(match kind.as_str() {
            "sine-pulse" => Schedule::SinePulse {
                t_start: self.required("t_start")?,
                duration: self.required("H")?,
                peak: self.required("peak")?,
            },
            "square" => Schedule::SquareWave {
                open: self.required("H")?,
                closed: self.required("b")?,
                level: self.required("level")?,
            },
            "sinusoid" => Schedule::Sinusoid,
            other => {
                return Err(self.err(
                    "schedule",
                    format!("unknown schedule `{other}` (sine-pulse, square, sinusoid)"),
                ))
            }
        })
    }

    fn strategy(&mut self) -> Result<Strategy, ConfigError> {
        let kind: String = self.required("strategy")?;
        Ok(match kind.as_str() {
            "constant" => Strategy::Constant {
                effort: self.required("E")?,
            },
            "proportional" => Strategy::Proportional {
                lambda: self.required("lambda")?,
            },
            "restricted" => Strategy::RestrictedProportional {
                lambda: self.required("lambda")?,
                y_limit: self.required("Y_limit")?,
            },
            "threshold" => Strategy::ProportionalThreshold {
                lambda: self.required("lambda")?,
                n_thre: self.required("N_thre")?,
            },
            "seasonal" => Strategy::Seasonal {
                schedule: self.schedule()?,
            },
            "rotational" => Strategy::Rotational {
                schedule: self.schedule()?,
                open_years: self.required("open_years")?,
                closed_years: self.required("closed_years")?,
            },
            other => {
                return Err(self.err(
                    "strategy",
                    format!(
                        "unknown strategy `{other}` \
                         (constant, proportional, restricted, threshold, seasonal, rotational)"
                    ),
                ))
            }
        })
    }

    fn inline_model(&mut self) -> Result<InlineModel, ConfigError> {
        let params = ModelParams {
            r: self.required("r")?,
            k: self.required("K")?,
            q: self.required("q")?,
            alpha: self.coefficient("alpha")?,
            beta: self.coefficient("beta")?,
        };
        params.validate().map_err(|e| self.model_error(e))?;
        let strategy = self.strategy()?;
        strategy.validate().map_err(|e| self.model_error(e))?;
        let n0 = self.parsed("N0")?.unwrap_or(0.5 * params.k);
        if !(n0.is_finite() && n0 >= 0.0) {
            return Err(self.err("N0", format!("must be finite and >= 0, got {n0}")));
        }
        Ok(InlineModel {
            params,
            strategy,
            n0,
        })
    }

    fn run_config(&mut self) -> Result<RunConfig, ConfigError> {
        let command: Command = self.parsed("command")?.unwrap_or_default();
        let source = match self.get("scenario").map(str::to_owned) {
            Some(name) => {
                if let Some(k) = MODEL_KEYS.iter().find(|k| self.raw.contains(k)) {
                    return Err(self.err(k, "cannot be combined with `scenario`"));
                }
                Source::Scenario(name)
            }
            None => Source::Inline(self.inline_model()?),
        };
        let defaults = IntegrationConfig::default();
        let config = RunConfig {
            command,
            source,
            dt: self.parsed("dt")?.unwrap_or(defaults.dt),
            t_end: self.parsed("t_end")?,
            event_tolerance: self
                .parsed("event_tolerance")?
                .unwrap_or(defaults.event_tolerance),
            extinction_floor: self.parsed("extinction_floor")?,
            format: self.parsed("format")?.unwrap_or_default(),
            output: self.get("output").map(PathBuf::from),
            control: match self.get("control").map(parse_control) {
                None => Control::HarvestIntensity,
                Some(Ok(c)) => c,
                Some(Err(m)) => return Err(self.err("control", m)),
            },
            grid: self.grid()?,
        };
        config
            .integration(DEFAULT_INLINE_HORIZON)
            .validate()
            .map_err(|e| match e {
                IntegrationError::InvalidConfig { name, reason } => self.err(name, reason),
                other => self.err("", other.to_string()),
            })?;
        if config.command == Command::Bifurcation && config.grid.is_none() {
            return Err(self.err(
                "grid_start",
                "bifurcation needs grid_start, grid_end and grid_points",
            ));
        }
        Ok(config)
    }

    fn grid(&mut self) -> Result<Option<GridSpec>, ConfigError> {
        let start: Option<f64> = self.parsed("grid_start")?;
        let end: Option<f64> = self.parsed("grid_end")?;
        let points: Option<usize> = self.parsed("grid_points")?;
        match (start, end, points) {
            (None, None, None) => Ok(None),
            (Some(start), Some(end), Some(points)) => {
                if !(start.is_finite() && end.is_finite()) {
                    return Err(self.err("grid_start", "grid ends must be finite"));
                }
                if points < 2 || !(start < end) {
                    return Err(self.err(
                        "grid_points",
                        "grid needs at least 2 points and grid_start < grid_end",
                    ));
                }
                Ok(Some(GridSpec { start, end, points }))
            }
            _ => Err(self.err(
                "grid_start",
                "grid_start, grid_end and grid_points must be given together",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "\
# proportional run
r = 0.5
K = 1
q = 0.8
alpha = 1
beta = 1
strategy = proportional
lambda = 0.5
t_end = 200
";

    #[test]
    fn parses_inline() {
        let c = RunConfig::parse(FIG1).unwrap();
        assert_eq!(c.command, Command::Simulate);
        let Source::Inline(m) = &c.source else {
            panic!("expected inline")
        };
        assert_eq!(m.params, ModelParams::new(0.5, 1.0, 0.8, 1.0, 1.0).unwrap());
        assert_eq!(m.strategy, Strategy::Proportional { lambda: 0.5 });
        assert_eq!(m.n0, 0.5);
        assert_eq!(c.t_end, Some(200.0));
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.format, Format::Csv);
    }

    #[test]
    fn lambda_out_of_range_names_line_and_key() {
        let text = FIG1.replace("lambda = 0.5", "lambda = 1.5");
        let e = RunConfig::parse(&text).unwrap_err();
        assert_eq!(e.line, Some(8));
        assert_eq!(e.key, "lambda");
        assert!(e.to_string().starts_with("line 8: `lambda`"), "{e}");
    }

    #[test]
    fn structural_errors() {
        let e = RunConfig::parse("r = 0.5\nr = 0.6\n").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (Some(2), "r"));
        let e = RunConfig::parse("colour = red\n").unwrap_err();
        assert_eq!(e.key, "colour");
        let e = RunConfig::parse("just words\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = RunConfig::parse(&FIG1.replace("K = 1\n", "")).unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (None, "K"));
        let e = RunConfig::parse(&format!("{FIG1}Y_limit = 0.1\n")).unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (Some(10), "Y_limit"));
        let e = RunConfig::parse(&format!("{FIG1}scenario = fig1_proportional\n")).unwrap_err();
        assert!(e.message.contains("scenario"));
        let e = RunConfig::parse(&FIG1.replace("q = 0.8", "q = fast")).unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (Some(4), "q"));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut raw = RawConfig::parse(FIG1).unwrap();
        raw.set_pair("lambda=0.25").unwrap();
        raw.set_pair("format=jsonl").unwrap();
        let c = raw.build().unwrap();
        let Source::Inline(m) = c.source else {
            panic!()
        };
        assert_eq!(m.strategy, Strategy::Proportional { lambda: 0.25 });
        assert_eq!(c.format, Format::JsonLines);
        let e = {
            let mut raw = RawConfig::parse(FIG1).unwrap();
            raw.set_pair("lambda=2").unwrap();
            raw.build().unwrap_err()
        };
        assert_eq!((e.line, e.key.as_str()), (None, "lambda"));
    }

    #[test]
    fn schedules_and_harmonics() {
        let text = "\
r = 0.3
K = 1
q = 1
alpha = 0.4
alpha_amplitude = 0.1
beta = 1
strategy = rotational
schedule = square
H = 0.25
b = 0.25
level = 0.5
open_years = 1
closed_years = 2
";
        let c = RunConfig::parse(text).unwrap();
        let Source::Inline(m) = &c.source else {
            panic!()
        };
        assert_eq!(
            m.params.alpha,
            Coefficient::Harmonic {
                mean: 0.4,
                amplitude: 0.1,
                period: 1.0
            }
        );
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);

        let bad = text
            .replace(
                "schedule = square",
                "schedule = sine-pulse\nt_start = 0.9\npeak = 1",
            )
            .replace("b = 0.25\nlevel = 0.5\n", "");
        let e = RunConfig::parse(&bad).unwrap_err();
        assert_eq!(e.key, "H");
    }

    #[test]
    fn scenario_source_and_grid() {
        let c = RunConfig::parse(
            "command = bifurcation\nscenario = data1_sweep\ngrid_start = 0.2\ngrid_end = 0.4\ngrid_points = 3\n",
        )
        .unwrap();
        assert_eq!(c.source, Source::Scenario("data1_sweep".into()));
        assert_eq!(c.grid.unwrap().values().len(), 3);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        let e = RunConfig::parse("command = bifurcation\nscenario = x\n").unwrap_err();
        assert_eq!(e.key, "grid_start");
    }
}
