//! Equilibria, stability, sustainable yield, parameter scans and
//! trajectory diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, IntegrationConfig, IntegrationError, Trajectory};
use crate::model::{HarvestSystem, ModelError, ModelParams, Strategy, SINGULARITY_TOLERANCE};
use crate::par::{map_ordered, Execution};

/// Default transient discarded before periodicity checks (years).
pub const DEFAULT_TRANSIENT: f64 = 50.0;

/// Samples closer than this (years) are treated as the same instant.
const TIME_MATCH: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

fn domain(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Domain(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Which formula produced an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    /// `N = 0`.
    Extinction,
    /// `(1 - lambda q alpha / r) K`.
    ProportionalCapacity,
    /// Root of `rN(1 - N/K) = lambda q alpha (N - N_thre)`.
    ThresholdQuadratic,
    /// Root of `rN(1 - N/K) = Y_limit`.
    CappedQuadratic,
    /// Unharvested carrying capacity.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub biomass: f64,
    pub stability: Stability,
    pub derivation: Derivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Ascending in biomass.
    pub points: Vec<Equilibrium>,
    /// Whether a stable positive population exists.
    pub feasible: bool,
}

impl EquilibriumReport {
    /// Largest stable equilibrium, if any.
    pub fn stable_point(&self) -> Option<f64> {
        self.points
            .iter()
            .rev()
            .find(|p| p.stability == Stability::Stable)
            .map(|p| p.biomass)
    }
}

/// Stability of `n_star` from the sign of a finite-difference slope of `f`.
///
/// Interior points use a centered difference with step `1e-6 K`; `N = 0`
/// sits on the boundary of the state space and uses a forward difference.
/// A vanishing slope falls back to the sign of `f` just above `n_star`.
pub fn classify<F>(f: F, n_star: f64, k: f64) -> Result<Stability, ModelError>
where
    F: Fn(f64) -> Result<f64, ModelError>,
{
    let h = 1e-6 * k;
    let slope = if n_star <= 0.0 {
        (f(n_star + h)? - f(n_star)?) / h
    } else {
        (f(n_star + h)? - f(n_star - h)?) / (2.0 * h)
    };
    let decided = if slope.abs() > 1e-8 {
        slope
    } else {
        f(n_star + h)?
    };
    Ok(if decided < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    })
}

fn constant_coefficients(params: &ModelParams) -> Result<(f64, f64), AnalysisError> {
    if !params.alpha.is_constant() || !params.beta.is_constant() {
        return Err(domain("equilibria need constant alpha and beta"));
    }
    Ok((params.alpha.mean(), params.beta.mean()))
}

fn check_singular(denominator: f64) -> Result<(), ModelError> {
    if denominator.abs() < SINGULARITY_TOLERANCE {
        Err(ModelError::Singular {
            t: 0.0,
            denominator,
        })
    } else {
        Ok(())
    }
}

pub fn equilibria_proportional(
    params: &ModelParams,
    lambda: f64,
) -> Result<EquilibriumReport, AnalysisError> {
    let (alpha, beta) = constant_coefficients(params)?;
    check_singular(1.0 - lambda * params.q * beta)?;
    let lqa = lambda * params.q * alpha;
    let f = |n| params.rhs_proportional(n, lambda, 0.0);
    let mut points = vec![Equilibrium {
        biomass: 0.0,
        stability: classify(f, 0.0, params.k)?,
        derivation: Derivation::Extinction,
    }];
    let feasible = lqa < params.r;
    if feasible {
        let n_star = (1.0 - lqa / params.r) * params.k;
        points.push(Equilibrium {
            biomass: n_star,
            stability: classify(f, n_star, params.k)?,
            derivation: Derivation::ProportionalCapacity,
        });
    }
    Ok(EquilibriumReport { points, feasible })
}

/// Real roots of `a x^2 + b x + c`, ascending.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // avoid cancellation in the smaller-magnitude root
    let qv = -0.5 * (b + b.signum() * sq);
    let mut roots = if qv == 0.0 {
        vec![0.0, 0.0]
    } else {
        vec![qv / a, c / qv]
    };
    roots.sort_by(f64::total_cmp);
    if disc == 0.0 {
        roots.truncate(1);
    }
    roots
}

pub fn equilibria_threshold(
    params: &ModelParams,
    lambda: f64,
    n_thre: f64,
) -> Result<EquilibriumReport, AnalysisError> {
    if !(n_thre >= 0.0) {
        return Err(domain(format!("N_thre must be >= 0, got {n_thre}")));
    }
    let (alpha, _) = constant_coefficients(params)?;
    let (r, k) = (params.r, params.k);
    let lqa = lambda * params.q * alpha;
    let f = |n| params.rhs_threshold(n, lambda, n_thre, 0.0);

    let mut candidates = vec![(0.0, Derivation::Extinction)];
    if k <= n_thre {
        candidates.push((k, Derivation::Logistic));
    }
    for root in quadratic_roots(r / k, -(r - lqa), -lqa * n_thre) {
        if root > n_thre {
            candidates.push((root, Derivation::ThresholdQuadratic));
        }
    }
    let mut points = Vec::with_capacity(candidates.len());
    for (biomass, derivation) in candidates {
        // the harvested branch must be regular at its own roots
        if derivation == Derivation::ThresholdQuadratic {
            params.rhs_threshold_harvested(biomass, lambda, n_thre, 0.0)?;
        }
        points.push(Equilibrium {
            biomass,
            stability: classify(f, biomass, k)?,
            derivation,
        });
    }
    points.sort_by(|a, b| a.biomass.total_cmp(&b.biomass));
    let feasible = points
        .iter()
        .any(|p| p.biomass > 0.0 && p.stability == Stability::Stable);
    Ok(EquilibriumReport { points, feasible })
}

/// Equilibria of the capped regime `rN(1 - N/K) - Y_limit`.
pub fn equilibria_restricted(
    params: &ModelParams,
    y_limit: f64,
) -> Result<EquilibriumReport, AnalysisError> {
    if !(y_limit >= 0.0) {
        return Err(domain(format!("Y_limit must be >= 0, got {y_limit}")));
    }
    let (r, k) = (params.r, params.k);
    let f = |n: f64| Ok(params.rhs_unharvested(n) - y_limit);
    let msy = r * k / 4.0;
    if y_limit > msy {
        return Ok(EquilibriumReport {
            points: vec![],
            feasible: false,
        });
    }
    let biomasses = if y_limit == 0.0 {
        vec![(0.0, Derivation::Extinction), (k, Derivation::Logistic)]
    } else {
        let disc = (1.0 - y_limit / msy).max(0.0).sqrt();
        let mut v = vec![(0.5 * k * (1.0 - disc), Derivation::CappedQuadratic)];
        if disc > 0.0 {
            v.push((0.5 * k * (1.0 + disc), Derivation::CappedQuadratic));
        }
        v
    };
    let points = biomasses
        .into_iter()
        .map(|(biomass, derivation)| {
            Ok(Equilibrium {
                biomass,
                stability: classify(f, biomass, k)?,
                derivation,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(EquilibriumReport {
        points,
        feasible: true,
    })
}

/// Whether the capped regime can sustain a stock started at `n0`:
/// `Y_limit < rN0(1 - N0/K)`.
pub fn restricted_start_is_viable(params: &ModelParams, y_limit: f64, n0: f64) -> bool {
    y_limit < params.rhs_unharvested(n0)
}

/// `(r - lambda q alpha) / (1 - lambda q beta)`, the decay rate toward the
/// positive proportional equilibrium.
pub fn proportional_convergence_rate(params: &ModelParams, lambda: f64) -> f64 {
    let lq = lambda * params.q;
    (params.r - lq * params.alpha.mean()) / (1.0 - lq * params.beta.mean())
}

/// Equilibrium yield of proportional harvesting, `lambda q alpha N*`.
pub fn proportional_equilibrium_yield(params: &ModelParams, lambda: f64) -> f64 {
    let lqa = lambda * params.q * params.alpha.mean();
    let n_star = ((1.0 - lqa / params.r) * params.k).max(0.0);
    lqa * n_star
}

/// Equilibrium yield of threshold harvesting, `lambda q alpha N* (N* - N_thre)`.
pub fn threshold_equilibrium_yield(
    params: &ModelParams,
    lambda: f64,
    n_thre: f64,
) -> Result<f64, AnalysisError> {
    let report = equilibria_threshold(params, lambda, n_thre)?;
    let n_star = report.stable_point().unwrap_or(0.0);
    let lqa = lambda * params.q * params.alpha.mean();
    Ok(lqa * n_star * (n_star - n_thre).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldCurve {
    /// Harvest intensities `lambda q alpha`.
    pub axis: Vec<f64>,
    pub yields: Vec<f64>,
    /// Grid point with the largest yield.
    pub argmax: f64,
    pub grid_max: f64,
    /// `rK/4`, attained at `lambda q alpha = r/2`.
    pub max_yield: f64,
}

/// `Y = x K (1 - x/r)` for harvest intensity `x = lambda q alpha`.
pub fn sustainable_yield(r: f64, k: f64, intensity: f64) -> f64 {
    intensity * k * (1.0 - intensity / r)
}

pub fn sustainable_yield_curve(r: f64, k: f64, grid: &[f64]) -> Result<YieldCurve, AnalysisError> {
    if !(r > 0.0) {
        return Err(domain(format!("yield curve needs r > 0, got {r}")));
    }
    if grid.is_empty() {
        return Err(domain("empty intensity grid"));
    }
    if let Some(x) = grid.iter().find(|&&x| !(0.0..=r).contains(&x)) {
        return Err(domain(format!("intensity {x} outside [0, r = {r}]")));
    }
    let yields: Vec<f64> = grid.iter().map(|&x| sustainable_yield(r, k, x)).collect();
    let (best, grid_max) =
        yields
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    Ok(YieldCurve {
        axis: grid.to_vec(),
        yields,
        argmax: grid[best],
        grid_max,
        max_yield: r * k / 4.0,
    })
}

/// `count` evenly spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    end
                } else {
                    start + (end - start) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Parameter varied by a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// `lambda q alpha`, realized by rescaling alpha.
    HarvestIntensity,
    Alpha,
    Lambda,
    Beta,
}

impl Control {
    pub fn apply(
        &self,
        system: &HarvestSystem,
        value: f64,
    ) -> Result<HarvestSystem, AnalysisError> {
        let mut out = system.clone();
        match self {
            Control::HarvestIntensity => {
                let lambda = system
                    .strategy
                    .constant_lambda()
                    .ok_or_else(|| domain("harvest intensity needs a constant lambda"))?;
                let lq = lambda * system.params.q;
                if !(lq > 0.0) {
                    return Err(domain("harvest intensity needs lambda q > 0"));
                }
                out.params.alpha = (value / lq).into();
            }
            Control::Alpha => out.params.alpha = value.into(),
            Control::Beta => out.params.beta = value.into(),
            Control::Lambda => {
                if !out.strategy.set_lambda(value) {
                    return Err(domain("strategy has no constant lambda"));
                }
            }
        }
        out.params.validate()?;
        out.strategy.validate()?;
        Ok(out)
    }
}

/// Long-run behaviour at one control value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorSummary {
    pub control: f64,
    pub final_biomass: f64,
    pub extinct: bool,
    pub singular: bool,
    /// Smallest forcing period the tail repeats with, if any was confirmed.
    pub period: Option<f64>,
    pub min_biomass: f64,
    pub max_biomass: f64,
    pub error: Option<String>,
}

/// Candidate attractor periods: one year and the strategy's forcing period.
pub fn candidate_periods(strategy: &Strategy) -> Vec<f64> {
    match strategy.schedule() {
        None => vec![],
        Some(s) => {
            let mut v = vec![1.0, s.period()];
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
    }
}

pub fn summarize(
    system: &HarvestSystem,
    control: f64,
    n0: f64,
    config: &IntegrationConfig,
) -> AttractorSummary {
    let failed = |e: String| AttractorSummary {
        control,
        final_biomass: f64::NAN,
        extinct: false,
        singular: false,
        period: None,
        min_biomass: f64::NAN,
        max_biomass: f64::NAN,
        error: Some(e),
    };
    let traj = match integrate(system, n0, config) {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    let extinct = traj.is_extinct();
    let transient = DEFAULT_TRANSIENT.min(0.5 * config.t_end);
    let period = if extinct {
        None
    } else {
        candidate_periods(&system.strategy)
            .into_iter()
            .find(|&p| attractor_period(&traj, p, transient, 1e-6).unwrap_or(false))
    };
    let (min_biomass, max_biomass) = traj.biomass_range(transient).unwrap_or((0.0, 0.0));
    AttractorSummary {
        control,
        final_biomass: traj.final_biomass(),
        extinct,
        singular: traj.is_singular(),
        period,
        min_biomass,
        max_biomass,
        error: None,
    }
}

pub fn bifurcation_scan(
    system: &HarvestSystem,
    control: Control,
    grid: &[f64],
    n0: f64,
    config: &IntegrationConfig,
) -> Result<Vec<AttractorSummary>, AnalysisError> {
    bifurcation_scan_with(system, control, grid, n0, config, Execution::default())
}

/// [`bifurcation_scan`] with an explicit execution mode.
pub fn bifurcation_scan_with(
    system: &HarvestSystem,
    control: Control,
    grid: &[f64],
    n0: f64,
    config: &IntegrationConfig,
    exec: Execution,
) -> Result<Vec<AttractorSummary>, AnalysisError> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("control grid must be strictly ascending"));
    }
    config.validate()?;
    Ok(map_ordered(grid, exec, |&c| {
        match control.apply(system, c) {
            Ok(sys) => summarize(&sys, c, n0, config),
            Err(e) => AttractorSummary {
                control: c,
                final_biomass: f64::NAN,
                extinct: false,
                singular: false,
                period: None,
                min_biomass: f64::NAN,
                max_biomass: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    }))
}

/// The first adjacent pair of control values where the stock goes from
/// persisting to extinct.
pub fn extinction_boundary(scan: &[AttractorSummary]) -> Option<(f64, f64)> {
    scan.windows(2)
        .find(|w| w[0].error.is_none() && !w[0].extinct && w[1].extinct)
        .map(|w| (w[0].control, w[1].control))
}

/// `sup |N(t + P) - N(t)|` over sample pairs with `t > transient`.
pub fn periodicity_defect(
    traj: &Trajectory,
    period: f64,
    transient: f64,
) -> Result<f64, AnalysisError> {
    if !(period > 0.0) {
        return Err(domain(format!("period must be > 0, got {period}")));
    }
    let t_last = traj.samples.last().map_or(0.0, |s| s.t);
    if t_last < transient + 2.0 * period {
        return Err(domain(format!(
            "trajectory ends at {t_last}, needs at least transient + 2P = {}",
            transient + 2.0 * period
        )));
    }
    let samples = &traj.samples;
    let mut worst: f64 = 0.0;
    let mut matched = 0usize;
    let mut j = 0;
    for s in samples.iter().filter(|s| s.t > transient) {
        let target = s.t + period;
        if target > t_last + TIME_MATCH {
            break;
        }
        while j < samples.len() && samples[j].t < target - TIME_MATCH {
            j += 1;
        }
        if let Some(partner) = samples
            .get(j)
            .filter(|p| (p.t - target).abs() <= TIME_MATCH)
        {
            worst = worst.max((partner.n - s.n).abs());
            matched += 1;
        }
    }
    if matched == 0 {
        return Err(domain("no sample pairs one period apart"));
    }
    Ok(worst)
}

/// Whether the trajectory repeats with period `period` after `transient`,
/// to within `tol`.
pub fn attractor_period(
    traj: &Trajectory,
    period: f64,
    transient: f64,
    tol: f64,
) -> Result<bool, AnalysisError> {
    Ok(periodicity_defect(traj, period, transient)? < tol)
}

/// First sample time after which `|N - target| < epsilon` for every later
/// sample, or `f64::INFINITY` if the final sample is outside the band.
pub fn convergence_time(traj: &Trajectory, target: f64, epsilon: f64) -> f64 {
    match traj
        .samples
        .iter()
        .rposition(|s| (s.n - target).abs() >= epsilon)
    {
        None => traj.samples.first().map_or(f64::INFINITY, |s| s.t),
        Some(i) => traj.samples.get(i + 1).map_or(f64::INFINITY, |s| s.t),
    }
}
