//! Logistic stock dynamics with a density-dependent fishing effort.
//!
//! Effort responds to the per-capita growth rate of the stock,
//!
//! ```text
//! E(t, N) = alpha(t) - beta(t) * (dN/dt) / N
//! ```
//!
//! which makes every harvested right-hand side implicit in `dN/dt`. Each
//! strategy resolves that implicit relation algebraically, so the integrator
//! only ever sees an explicit `f(t, N)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::schedule::{Schedule, ScheduleError};

/// Denominators smaller than this in magnitude are treated as singular.
pub const SINGULARITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("effort is undefined at N = 0")]
    ZeroBiomass,
    #[error("implicit effort term is singular at t = {t} (denominator {denominator:e})")]
    Singular { t: f64, denominator: f64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// A non-negative coefficient that may vary in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Constant(f64),
    /// `mean + amplitude * sin(2 pi t / period)`, with `amplitude <= mean`.
    Harmonic {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
}

impl Coefficient {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Coefficient::Constant(v) => v,
            Coefficient::Harmonic {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * PI * t / period).sin(),
        }
    }

    /// Baseline value; the constant itself or the harmonic mean.
    pub fn mean(&self) -> f64 {
        match *self {
            Coefficient::Constant(v) => v,
            Coefficient::Harmonic { mean, .. } => mean,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }

    fn validate(&self, name: &'static str) -> Result<(), ModelError> {
        match *self {
            Coefficient::Constant(v) => {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
                }
            }
            Coefficient::Harmonic {
                mean,
                amplitude,
                period,
            } => {
                if !(mean.is_finite() && amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(invalid(name, "harmonic mean and amplitude must be finite"));
                }
                if amplitude > mean {
                    return Err(invalid(
                        name,
                        format!(
                            "amplitude {amplitude} exceeds mean {mean}, value would go negative"
                        ),
                    ));
                }
                if !(period.is_finite() && period > 0.0) {
                    return Err(invalid(name, format!("period must be > 0, got {period}")));
                }
            }
        }
        Ok(())
    }
}

impl From<f64> for Coefficient {
    fn from(v: f64) -> Self {
        Coefficient::Constant(v)
    }
}

/// Biological and fishing constants plus the effort coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Intrinsic growth rate (1/year).
    pub r: f64,
    /// Carrying capacity.
    pub k: f64,
    /// Catchability.
    pub q: f64,
    /// Effort baseline.
    pub alpha: Coefficient,
    /// Effort density-feedback gain.
    pub beta: Coefficient,
}

impl ModelParams {
    /// Parameters with constant effort coefficients.
    pub fn new(r: f64, k: f64, q: f64, alpha: f64, beta: f64) -> Result<Self, ModelError> {
        let p = ModelParams {
            r,
            k,
            q,
            alpha: Coefficient::Constant(alpha),
            beta: Coefficient::Constant(beta),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(invalid("r", format!("must be >= 0, got {}", self.r)));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(invalid("K", format!("must be > 0, got {}", self.k)));
        }
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(invalid("q", format!("must be >= 0, got {}", self.q)));
        }
        self.alpha.validate("alpha")?;
        self.beta.validate("beta")?;
        Ok(())
    }

    pub fn alpha_at(&self, t: f64) -> f64 {
        self.alpha.at(t)
    }

    pub fn beta_at(&self, t: f64) -> f64 {
        self.beta.at(t)
    }

    /// `E = alpha(t) - beta(t) * dNdt / N`. May be negative; reported as-is.
    pub fn effort(&self, n: f64, dndt: f64, t: f64) -> Result<f64, ModelError> {
        if n == 0.0 {
            return Err(ModelError::ZeroBiomass);
        }
        Ok(self.alpha_at(t) - self.beta_at(t) * dndt / n)
    }

    /// Logistic growth `rN(1 - N/K)`.
    pub fn rhs_unharvested(&self, n: f64) -> f64 {
        self.r * n * (1.0 - n / self.k)
    }

    /// Logistic growth minus a constant removal `q * E`.
    pub fn rhs_constant(&self, n: f64, effort: f64) -> f64 {
        self.rhs_unharvested(n) - self.q * effort
    }

    /// Proportional harvesting with the effort feedback solved for `dN/dt`:
    ///
    /// `dN/dt = [rN(1 - N/K) - lambda q alpha N] / (1 - lambda q beta)`
    pub fn rhs_proportional(&self, n: f64, lambda: f64, t: f64) -> Result<f64, ModelError> {
        let denominator = 1.0 - lambda * self.q * self.beta_at(t);
        check_denominator(denominator, t)?;
        let harvest = lambda * self.q * self.alpha_at(t) * n;
        Ok((self.rhs_unharvested(n) - harvest) / denominator)
    }

    /// Proportional harvesting of the stock above `n_thre`.
    pub fn rhs_threshold(
        &self,
        n: f64,
        lambda: f64,
        n_thre: f64,
        t: f64,
    ) -> Result<f64, ModelError> {
        if n <= n_thre {
            Ok(self.rhs_unharvested(n))
        } else {
            self.rhs_threshold_harvested(n, lambda, n_thre, t)
        }
    }

    /// The harvested branch of [`rhs_threshold`](Self::rhs_threshold),
    /// evaluated regardless of which side of the threshold `n` lies on.
    pub(crate) fn rhs_threshold_harvested(
        &self,
        n: f64,
        lambda: f64,
        n_thre: f64,
        t: f64,
    ) -> Result<f64, ModelError> {
        let lq = lambda * self.q;
        let denominator = 1.0 - lq * self.beta_at(t) * (1.0 - n_thre / n);
        check_denominator(denominator, t)?;
        let numerator = self.rhs_unharvested(n) - lq * self.alpha_at(t) * (n - n_thre);
        Ok(numerator / denominator)
    }

    /// Self-consistent proportional yield `lambda q N E` with `dN/dt` taken
    /// from the proportional resolution.
    pub fn proportional_yield(&self, n: f64, lambda: f64, t: f64) -> Result<f64, ModelError> {
        let dndt = self.rhs_proportional(n, lambda, t)?;
        let lq = lambda * self.q;
        Ok(lq * self.alpha_at(t) * n - lq * self.beta_at(t) * dndt)
    }

    /// Proportional harvesting with an upper limit on the yield. The regime
    /// is decided by the uncapped self-consistent yield.
    pub fn rhs_restricted(
        &self,
        n: f64,
        lambda: f64,
        y_limit: f64,
        t: f64,
    ) -> Result<(f64, Regime), ModelError> {
        let dndt = self.rhs_proportional(n, lambda, t)?;
        let lq = lambda * self.q;
        let uncapped = lq * self.alpha_at(t) * n - lq * self.beta_at(t) * dndt;
        if uncapped <= y_limit {
            Ok((dndt, Regime::Uncapped))
        } else {
            Ok((self.rhs_unharvested(n) - y_limit, Regime::Capped))
        }
    }

    /// `factor * q * N * E`. Zero stock yields zero catch.
    pub fn harvest_yield(&self, n: f64, dndt: f64, factor: f64, t: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        factor * self.q * n * (self.alpha_at(t) - self.beta_at(t) * dndt / n)
    }
}

fn check_denominator(denominator: f64, t: f64) -> Result<(), ModelError> {
    if denominator.abs() < SINGULARITY_TOLERANCE {
        Err(ModelError::Singular { t, denominator })
    } else {
        Ok(())
    }
}

/// Harvesting policy and its policy-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Constant {
        effort: f64,
    },
    Proportional {
        lambda: f64,
    },
    RestrictedProportional {
        lambda: f64,
        y_limit: f64,
    },
    ProportionalThreshold {
        lambda: f64,
        n_thre: f64,
    },
    Seasonal {
        schedule: Schedule,
    },
    Rotational {
        schedule: Schedule,
        open_years: u32,
        closed_years: u32,
    },
}

/// Which branch of a piecewise right-hand side is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// The strategy has a single branch.
    Smooth,
    Uncapped,
    Capped,
    BelowThreshold,
    AboveThreshold,
}

impl Strategy {
    pub fn validate(&self) -> Result<(), ModelError> {
        fn lambda_ok(lambda: f64) -> Result<(), ModelError> {
            if (0.0..=1.0).contains(&lambda) {
                Ok(())
            } else {
                Err(invalid(
                    "lambda",
                    format!("must lie in [0, 1], got {lambda}"),
                ))
            }
        }
        match self {
            Strategy::Constant { effort } => {
                if !(effort.is_finite() && *effort >= 0.0) {
                    return Err(invalid("E", format!("must be >= 0, got {effort}")));
                }
            }
            Strategy::Proportional { lambda } => lambda_ok(*lambda)?,
            Strategy::RestrictedProportional { lambda, y_limit } => {
                lambda_ok(*lambda)?;
                if !(y_limit.is_finite() && *y_limit >= 0.0) {
                    return Err(invalid("Y_limit", format!("must be >= 0, got {y_limit}")));
                }
            }
            Strategy::ProportionalThreshold { lambda, n_thre } => {
                lambda_ok(*lambda)?;
                if !(n_thre.is_finite() && *n_thre >= 0.0) {
                    return Err(invalid("N_thre", format!("must be >= 0, got {n_thre}")));
                }
            }
            Strategy::Seasonal { schedule } => schedule.validate()?,
            Strategy::Rotational {
                schedule,
                open_years,
                ..
            } => {
                schedule.validate()?;
                if *open_years < 1 {
                    return Err(invalid("open_years", "must be >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Constant { .. } => "constant",
            Strategy::Proportional { .. } => "proportional",
            Strategy::RestrictedProportional { .. } => "restricted",
            Strategy::ProportionalThreshold { .. } => "threshold",
            Strategy::Seasonal { .. } => "seasonal",
            Strategy::Rotational { .. } => "rotational",
        }
    }

    /// Harvest intensity at time `t`. Constant harvesting has no proportional
    /// rate and reports 1.
    pub fn lambda_at(&self, t: f64) -> f64 {
        match self {
            Strategy::Constant { .. } => 1.0,
            Strategy::Proportional { lambda }
            | Strategy::RestrictedProportional { lambda, .. }
            | Strategy::ProportionalThreshold { lambda, .. } => *lambda,
            Strategy::Seasonal { schedule } => schedule.value(t),
            Strategy::Rotational {
                schedule,
                open_years,
                closed_years,
            } => crate::schedule::lambda_rotational(t, schedule, *open_years, *closed_years),
        }
    }

    /// The constant proportional rate, if the strategy has one.
    pub fn constant_lambda(&self) -> Option<f64> {
        match self {
            Strategy::Proportional { lambda }
            | Strategy::RestrictedProportional { lambda, .. }
            | Strategy::ProportionalThreshold { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn set_lambda(&mut self, value: f64) -> bool {
        match self {
            Strategy::Proportional { lambda }
            | Strategy::RestrictedProportional { lambda, .. }
            | Strategy::ProportionalThreshold { lambda, .. } => {
                *lambda = value;
                true
            }
            _ => false,
        }
    }

    /// The effective time-varying intensity schedule, if any.
    pub fn schedule(&self) -> Option<Schedule> {
        match self {
            Strategy::Seasonal { schedule } => Some(schedule.clone()),
            Strategy::Rotational {
                schedule,
                open_years,
                closed_years,
            } => Some(Schedule::Gated {
                inner: Box::new(schedule.clone()),
                open_years: *open_years,
                closed_years: *closed_years,
            }),
            _ => None,
        }
    }

    /// Discontinuities of the right-hand side in `(t0, t1)`, ascending.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.schedule()
            .map(|s| s.breakpoints(t0, t1))
            .unwrap_or_default()
    }
}

/// A fully specified harvested system: parameters plus a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestSystem {
    pub params: ModelParams,
    pub strategy: Strategy,
}

/// Derived quantities at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub dndt: f64,
    pub lambda: f64,
    pub effort: f64,
    pub yield_rate: f64,
}

impl HarvestSystem {
    pub fn new(params: ModelParams, strategy: Strategy) -> Result<Self, ModelError> {
        params.validate()?;
        strategy.validate()?;
        Ok(HarvestSystem { params, strategy })
    }

    /// The branch active at `(t, n)`.
    pub fn regime(&self, t: f64, n: f64) -> Result<Regime, ModelError> {
        Ok(match self.strategy {
            Strategy::RestrictedProportional { lambda, y_limit } => {
                self.params.rhs_restricted(n, lambda, y_limit, t)?.1
            }
            Strategy::ProportionalThreshold { n_thre, .. } => {
                if n > n_thre {
                    Regime::AboveThreshold
                } else {
                    Regime::BelowThreshold
                }
            }
            _ => Regime::Smooth,
        })
    }

    /// Signed distance to the switching surface, positive on the capped or
    /// above-threshold side. `None` for single-branch strategies.
    pub fn switching_function(&self, t: f64, n: f64) -> Result<Option<f64>, ModelError> {
        Ok(match self.strategy {
            Strategy::RestrictedProportional { lambda, y_limit } => {
                Some(self.params.proportional_yield(n, lambda, t)? - y_limit)
            }
            Strategy::ProportionalThreshold { n_thre, .. } => Some(n - n_thre),
            _ => None,
        })
    }

    /// `dN/dt` using whichever branch `regime` names, without re-deciding it.
    pub fn rhs_in(&self, regime: Regime, t: f64, n: f64) -> Result<f64, ModelError> {
        let p = &self.params;
        match (&self.strategy, regime) {
            (Strategy::Constant { effort }, _) => Ok(p.rhs_constant(n, *effort)),
            (Strategy::Proportional { lambda }, _) => p.rhs_proportional(n, *lambda, t),
            (Strategy::RestrictedProportional { y_limit, .. }, Regime::Capped) => {
                Ok(p.rhs_unharvested(n) - y_limit)
            }
            (Strategy::RestrictedProportional { lambda, .. }, _) => {
                p.rhs_proportional(n, *lambda, t)
            }
            (Strategy::ProportionalThreshold { .. }, Regime::BelowThreshold) => {
                Ok(p.rhs_unharvested(n))
            }
            (Strategy::ProportionalThreshold { lambda, n_thre }, _) => {
                p.rhs_threshold_harvested(n, *lambda, *n_thre, t)
            }
            (Strategy::Seasonal { .. } | Strategy::Rotational { .. }, _) => {
                p.rhs_proportional(n, self.strategy.lambda_at(t), t)
            }
        }
    }

    /// `dN/dt` with the branch decided from the state.
    pub fn rhs(&self, t: f64, n: f64) -> Result<f64, ModelError> {
        let regime = self.regime(t, n)?;
        self.rhs_in(regime, t, n)
    }

    /// Rate of change, intensity, effort and yield at a state on the given
    /// branch. At `N = 0` the effort is reported as the baseline `alpha(t)`.
    pub fn observe(&self, regime: Regime, t: f64, n: f64) -> Result<Observation, ModelError> {
        let p = &self.params;
        let lambda = self.strategy.lambda_at(t);
        if n == 0.0 {
            let effort = match self.strategy {
                Strategy::Constant { effort } => effort,
                _ => p.alpha_at(t),
            };
            return Ok(Observation {
                dndt: 0.0,
                lambda,
                effort,
                yield_rate: 0.0,
            });
        }
        let dndt = self.rhs_in(regime, t, n)?;
        let effort_fn = p.alpha_at(t) - p.beta_at(t) * dndt / n;
        let (effort, yield_rate) = match (&self.strategy, regime) {
            (Strategy::Constant { effort }, _) => (*effort, p.q * effort),
            (Strategy::RestrictedProportional { y_limit, .. }, Regime::Capped) => {
                (effort_fn, *y_limit)
            }
            (Strategy::ProportionalThreshold { .. }, Regime::BelowThreshold) => (effort_fn, 0.0),
            (Strategy::ProportionalThreshold { lambda, n_thre }, _) => (
                effort_fn,
                p.harvest_yield(n, dndt, lambda * (n - n_thre), t),
            ),
            _ => (effort_fn, p.harvest_yield(n, dndt, lambda, t)),
        };
        Ok(Observation {
            dndt,
            lambda,
            effort,
            yield_rate,
        })
    }
}
