//! Fixed-step RK4 with breakpoint alignment and switching-surface events.
//!
//! The horizon is cut into segments at every schedule breakpoint; each
//! segment is split into the fewest equal steps no longer than `dt`, so
//! segment ends are hit exactly. Within a step the active branch of a
//! piecewise right-hand side is frozen. When the branch read off the new
//! state differs from the frozen one, the crossing is located by bisection
//! on the step length and the step is split there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HarvestSystem, ModelError, ModelParams, Regime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integration setting `{name}`: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("initial biomass must be finite and >= 0, got {0}")]
    InvalidInitialState(f64),
    #[error("non-finite state at t = {t}")]
    NumericalFailure { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    /// Largest step (years).
    pub dt: f64,
    pub t_end: f64,
    /// Bisection stops once the switching function is this close to zero.
    pub event_tolerance: f64,
    /// Biomass below which the stock counts as extinct. `None` means `1e-12 K`.
    pub extinction_floor: Option<f64>,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            dt: 1e-3,
            t_end: 100.0,
            event_tolerance: 1e-10,
            extinction_floor: None,
        }
    }
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        IntegrationConfig {
            dt,
            t_end,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |name, v: f64| IntegrationError::InvalidConfig {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(bad("dt", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(bad("t_end", self.t_end));
        }
        if !(self.event_tolerance.is_finite() && self.event_tolerance > 0.0) {
            return Err(bad("event_tolerance", self.event_tolerance));
        }
        if let Some(f) = self.extinction_floor {
            if !(f.is_finite() && f >= 0.0) {
                return Err(IntegrationError::InvalidConfig {
                    name: "extinction_floor",
                    reason: format!("must be finite and >= 0, got {f}"),
                });
            }
        }
        Ok(())
    }

    pub fn floor_for(&self, params: &ModelParams) -> f64 {
        self.extinction_floor.unwrap_or(1e-12 * params.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "dNdt")]
    pub dndt: f64,
    pub lambda: f64,
    #[serde(rename = "E")]
    pub effort: f64,
    #[serde(rename = "Y")]
    pub yield_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    CapEngaged,
    CapReleased,
    ThresholdCrossedUp,
    ThresholdCrossedDown,
    Extinction,
    Singularity,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::CapEngaged => "cap-engaged",
            EventKind::CapReleased => "cap-released",
            EventKind::ThresholdCrossedUp => "threshold-crossed-up",
            EventKind::ThresholdCrossedDown => "threshold-crossed-down",
            EventKind::Extinction => "extinction",
            EventKind::Singularity => "singularity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cap-engaged" => EventKind::CapEngaged,
            "cap-released" => EventKind::CapReleased,
            "threshold-crossed-up" => EventKind::ThresholdCrossedUp,
            "threshold-crossed-down" => EventKind::ThresholdCrossedDown,
            "extinction" => EventKind::Extinction,
            "singularity" => EventKind::Singularity,
            _ => return None,
        })
    }

    fn for_switch(to: Regime) -> Option<Self> {
        match to {
            Regime::Capped => Some(EventKind::CapEngaged),
            Regime::Uncapped => Some(EventKind::CapReleased),
            Regime::AboveThreshold => Some(EventKind::ThresholdCrossedUp),
            Regime::BelowThreshold => Some(EventKind::ThresholdCrossedDown),
            Regime::Smooth => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// Samples at which the computed effort was negative.
    pub negative_effort_samples: usize,
}

impl Trajectory {
    pub fn is_extinct(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Extinction)
    }

    pub fn is_singular(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Singularity)
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_biomass(&self) -> f64 {
        self.last().n
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Biomass extrema over samples with `t >= from`.
    pub fn biomass_range(&self, from: f64) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .filter(|s| s.t >= from)
            .fold(None, |acc, s| match acc {
                None => Some((s.n, s.n)),
                Some((lo, hi)) => Some((lo.min(s.n), hi.max(s.n))),
            })
    }
}

/// Segment boundaries: 0, interior breakpoints, `t_end`.
pub fn step_boundaries(system: &HarvestSystem, t_end: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    for b in system.strategy.breakpoints(0.0, t_end) {
        if b - out[out.len() - 1] > 1e-12 && t_end - b > 1e-12 {
            out.push(b);
        }
    }
    out.push(t_end);
    out
}

fn rk4_step(
    system: &HarvestSystem,
    regime: Regime,
    t: f64,
    n: f64,
    h: f64,
) -> Result<f64, ModelError> {
    let f = |t, n| system.rhs_in(regime, t, n);
    let k1 = f(t, n)?;
    let k2 = f(t + 0.5 * h, n + 0.5 * h * k1)?;
    let k3 = f(t + 0.5 * h, n + 0.5 * h * k2)?;
    let k4 = f(t + h, n + h * k3)?;
    Ok(n + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

enum Stop {
    Extinct,
    Singular(f64),
}

struct Stepper<'a> {
    system: &'a HarvestSystem,
    config: &'a IntegrationConfig,
    floor: f64,
    out: Trajectory,
}

impl Stepper<'_> {
    fn record(&mut self, regime: Regime, t: f64, n: f64) -> Result<(), Stop> {
        let obs = self
            .system
            .observe(regime, t, n)
            .map_err(|_| Stop::Singular(t))?;
        if obs.effort < 0.0 {
            self.out.negative_effort_samples += 1;
        }
        self.out.samples.push(Sample {
            t,
            n,
            dndt: obs.dndt,
            lambda: obs.lambda,
            effort: obs.effort,
            yield_rate: obs.yield_rate,
        });
        Ok(())
    }

    /// Lands on `(t, n)`; returns an extinction stop if `n` is below the floor.
    fn land(&mut self, regime: Regime, t: f64, n: f64) -> Result<f64, Stop> {
        if n < self.floor {
            self.record(regime, t, 0.0)?;
            self.out.events.push(Event {
                t,
                kind: EventKind::Extinction,
            });
            return Err(Stop::Extinct);
        }
        self.record(regime, t, n)?;
        Ok(n)
    }

    fn regime_at(&self, t: f64, n: f64) -> Result<Regime, Stop> {
        self.system.regime(t, n).map_err(|_| Stop::Singular(t))
    }

    /// Advances from `(t, n)` to `t_next`, splitting at any regime switch.
    fn advance(
        &mut self,
        regime: &mut Regime,
        mut t: f64,
        mut n: f64,
        t_next: f64,
    ) -> Result<Result<f64, Stop>, IntegrationError> {
        loop {
            let h = t_next - t;
            let n_new = match rk4_step(self.system, *regime, t, n, h) {
                Ok(v) => v,
                Err(ModelError::Singular { t, .. }) => return Ok(Err(Stop::Singular(t))),
                Err(e) => return Err(e.into()),
            };
            if !n_new.is_finite() {
                return Err(IntegrationError::NumericalFailure { t: t_next });
            }
            // Below the floor the stock is absorbed; no switch to locate.
            if n_new < self.floor {
                return Ok(self.land(*regime, t_next, n_new));
            }
            let next_regime = match self.regime_at(t_next, n_new) {
                Ok(r) => r,
                Err(stop) => return Ok(Err(stop)),
            };
            if next_regime == *regime {
                return Ok(self.land(*regime, t_next, n_new));
            }
            let (tau, n_tau, new_regime) = match self.locate_switch(*regime, t, n, h) {
                Ok(v) => v,
                Err(stop) => return Ok(Err(stop)),
            };
            if let Some(kind) = EventKind::for_switch(new_regime) {
                self.out.events.push(Event { t: t + tau, kind });
            }
            *regime = new_regime;
            if tau >= h {
                return Ok(self.land(*regime, t_next, n_tau));
            }
            n = match self.land(*regime, t + tau, n_tau) {
                Ok(n) => n,
                Err(stop) => return Ok(Err(stop)),
            };
            t += tau;
        }
    }

    /// Bisects the step length `h` from `(t, n)` for the first point where
    /// the branch differs from `regime`. Returns the offset, the state there
    /// and the new branch.
    fn locate_switch(
        &self,
        regime: Regime,
        t: f64,
        n: f64,
        h: f64,
    ) -> Result<(f64, f64, Regime), Stop> {
        let step = |tau: f64| -> Result<(f64, Regime, f64), Stop> {
            let n_tau =
                rk4_step(self.system, regime, t, n, tau).map_err(|_| Stop::Singular(t + tau))?;
            let r = self.regime_at(t + tau, n_tau)?;
            let s = self
                .system
                .switching_function(t + tau, n_tau)
                .map_err(|_| Stop::Singular(t + tau))?
                .unwrap_or(0.0);
            Ok((n_tau, r, s))
        };
        let (mut lo, mut hi) = (0.0, h);
        let (mut n_hi, mut r_hi, mut s_hi) = step(hi)?;
        let time_resolution = 4.0 * f64::EPSILON * (t + h).abs().max(1.0);
        while s_hi.abs() > self.config.event_tolerance && hi - lo > time_resolution {
            let mid = 0.5 * (lo + hi);
            let (n_mid, r_mid, s_mid) = step(mid)?;
            if r_mid == regime {
                lo = mid;
            } else {
                hi = mid;
                n_hi = n_mid;
                r_hi = r_mid;
                s_hi = s_mid;
            }
        }
        Ok((hi, n_hi, r_hi))
    }
}

/// Integrates `system` from `n0` at `t = 0` to `config.t_end`.
///
/// Extinction and singularities end the run early and are reported as
/// events; only invalid input and non-finite states are errors.
pub fn integrate(
    system: &HarvestSystem,
    n0: f64,
    config: &IntegrationConfig,
) -> Result<Trajectory, IntegrationError> {
    config.validate()?;
    system.params.validate()?;
    system.strategy.validate()?;
    if !(n0.is_finite() && n0 >= 0.0) {
        return Err(IntegrationError::InvalidInitialState(n0));
    }
    let mut stepper = Stepper {
        system,
        config,
        floor: config.floor_for(&system.params),
        out: Trajectory::default(),
    };

    let outcome = run(&mut stepper, n0, config)?;
    if let Some(Stop::Singular(t)) = outcome {
        stepper.out.events.push(Event {
            t,
            kind: EventKind::Singularity,
        });
    }
    Ok(stepper.out)
}

fn run(
    stepper: &mut Stepper<'_>,
    n0: f64,
    config: &IntegrationConfig,
) -> Result<Option<Stop>, IntegrationError> {
    let mut regime = match stepper.regime_at(0.0, n0) {
        Ok(r) => r,
        Err(stop) => return Ok(Some(stop)),
    };
    let mut n = match stepper.land(regime, 0.0, n0) {
        Ok(n) => n,
        Err(stop) => return Ok(Some(stop)),
    };
    let bounds = step_boundaries(stepper.system, config.t_end);
    for seg in bounds.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let steps = ((b - a) / config.dt - 1e-9).ceil().max(1.0) as u64;
        let mut t = a;
        for i in 1..=steps {
            let t_next = if i == steps {
                b
            } else {
                a + (b - a) * (i as f64) / (steps as f64)
            };
            match stepper.advance(&mut regime, t, n, t_next)? {
                Ok(n_next) => n = n_next,
                Err(stop) => return Ok(Some(stop)),
            }
            t = t_next;
        }
    }
    Ok(None)
}

/// Closed-form solution of proportional harvesting with constant
/// coefficients: a logistic curve with rate `(r - lqa)/(1 - lqb)` and
/// capacity `(1 - lqa/r) K`.
pub fn proportional_closed_form(
    params: &ModelParams,
    lambda: f64,
    n0: f64,
    t: f64,
) -> Result<f64, IntegrationError> {
    let (lqa, lqb) = closed_form_preconditions(params, lambda, n0)?;
    let capacity = (1.0 - lqa / params.r) * params.k;
    let rate = (params.r - lqa) / (1.0 - lqb);
    let c = capacity / n0 - 1.0;
    Ok(capacity / (1.0 + c * (-rate * t).exp()))
}

fn closed_form_preconditions(
    params: &ModelParams,
    lambda: f64,
    n0: f64,
) -> Result<(f64, f64), IntegrationError> {
    let domain = |reason: String| {
        IntegrationError::Model(ModelError::InvalidParameter {
            name: "closed_form",
            reason,
        })
    };
    if !params.alpha.is_constant() || !params.beta.is_constant() {
        return Err(domain("alpha and beta must be constant".into()));
    }
    let lqa = lambda * params.q * params.alpha.mean();
    let lqb = lambda * params.q * params.beta.mean();
    if !(lqa < params.r) {
        return Err(domain(format!(
            "needs lambda q alpha < r, got {lqa} >= {}",
            params.r
        )));
    }
    if !(lqb < 1.0) {
        return Err(domain(format!("needs lambda q beta < 1, got {lqb}")));
    }
    if !(n0 > 0.0) {
        return Err(domain(format!("needs N0 > 0, got {n0}")));
    }
    Ok((lqa, lqb))
}

/// Largest absolute gap between a proportional-harvesting RK4 run and the
/// closed form, over the samples of the run that fall on `t_grid`.
pub fn integrate_closed_form_check(
    params: &ModelParams,
    lambda: f64,
    n0: f64,
    t_grid: &[f64],
    dt: f64,
) -> Result<f64, IntegrationError> {
    closed_form_preconditions(params, lambda, n0)?;
    let t_end = t_grid.iter().copied().fold(0.0, f64::max);
    let system = HarvestSystem::new(*params, crate::model::Strategy::Proportional { lambda })?;
    let traj = integrate(&system, n0, &IntegrationConfig::new(dt, t_end))?;
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let n = sample_at(&traj, t).ok_or(IntegrationError::InvalidConfig {
            name: "t_grid",
            reason: format!("no sample at t = {t}"),
        })?;
        worst = worst.max((n - proportional_closed_form(params, lambda, n0, t)?).abs());
    }
    Ok(worst)
}

/// Biomass at the sample whose time is within `1e-9` of `t`.
pub fn sample_at(traj: &Trajectory, t: f64) -> Option<f64> {
    let idx = traj.samples.partition_point(|s| s.t < t - 1e-9);
    traj.samples
        .get(idx)
        .filter(|s| (s.t - t).abs() <= 1e-9)
        .map(|s| s.n)
}
