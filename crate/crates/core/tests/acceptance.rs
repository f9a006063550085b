//! Exit criteria. Each test writes one `criterion N: PASS|FAIL` line to the
//! real stdout so the verdicts show up even when output is captured.

use std::io::Write as _;

use proptest::prelude::{prop_assert, prop_assert_eq, prop_oneof, Just};
use proptest::strategy::Strategy as _;
use proptest::test_runner::{Config, TestRunner};

use harvest_core::analysis::{
    bifurcation_scan, convergence_time, equilibria_proportional, equilibria_restricted,
    equilibria_threshold, extinction_boundary, linspace, periodicity_defect, sustainable_yield,
    sustainable_yield_curve,
};
use harvest_core::config::RunConfig;
use harvest_core::integrator::{integrate_closed_form_check, EventKind};
use harvest_core::output::{read_trajectory_csv, write_trajectory, Format};
use harvest_core::scenarios::{run_scenario, RunSettings, ROTATIONAL_MIN_BIOMASS};
use harvest_core::{
    integrate, Control, HarvestSystem, IntegrationConfig, ModelParams, Regime, Schedule, Strategy,
};

fn verdict(id: &str, passed: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {id}: {} | {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = out.flush();
    assert!(passed, "criterion {id} failed: {detail}");
}

fn fig1() -> ModelParams {
    ModelParams::new(0.5, 1.0, 0.8, 1.0, 1.0).unwrap()
}

fn with_beta(p: ModelParams, beta: f64) -> ModelParams {
    ModelParams {
        beta: beta.into(),
        ..p
    }
}

fn system(p: ModelParams, s: Strategy) -> HarvestSystem {
    HarvestSystem::new(p, s).unwrap()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) < 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_01_proportional_equilibrium() {
    let sys = system(fig1(), Strategy::Proportional { lambda: 0.5 });
    let config = IntegrationConfig::new(1e-3, 200.0);
    let finals: Vec<f64> = [0.05, 0.5, 0.9]
        .iter()
        .map(|&n0| integrate(&sys, n0, &config).unwrap().final_biomass())
        .collect();
    let passed = finals.iter().all(|n| (n - 0.2).abs() < 1e-6);
    verdict(
        "1",
        passed,
        &format!("N(200) from N0 = 0.05, 0.5, 0.9: {finals:?}, target 0.2 +/- 1e-6"),
    );
}

#[test]
fn criterion_02_closed_form() {
    let p = fig1();
    let grid = linspace(0.0, 50.0, 101);
    let err = |dt: f64| integrate_closed_form_check(&p, 0.5, 0.5, &grid, dt).unwrap();
    let at_default = err(1e-3);
    // At dt = 1e-3 the gap already sits at roundoff, so the order is read
    // off a decade-plus of dyadic steps where truncation dominates.
    let steps = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    let errors: Vec<f64> = steps.iter().map(|&h| err(h)).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (15.0..=17.0).contains(r));
    let roundoff_ratio = at_default / err(5e-4);
    verdict(
        "2",
        at_default < 1e-6 && order_ok,
        &format!(
            "max gap at dt = 1e-3: {at_default:e} (< 1e-6); halving ratios for dt = 0.5..0.03125: \
             {ratios:.3?} (each 16 +/- 1); ratio 1e-3 -> 5e-4 at roundoff: {roundoff_ratio:.3}"
        ),
    );
}

#[test]
fn criterion_03_maximum_sustainable_yield() {
    let r = 0.5;
    let k = 1.0;
    let curve = sustainable_yield_curve(r, k, &linspace(0.0, r, 501)).unwrap();
    let analytic_ok =
        (curve.argmax - r / 2.0).abs() <= 5e-4 && (curve.max_yield - r * k / 4.0).abs() < 1e-12;

    let p = fig1();
    let config = IntegrationConfig::new(1e-3, 400.0);
    let mut worst: f64 = 0.0;
    for x in [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45] {
        let lambda = x / (p.q * p.alpha.mean());
        let traj = integrate(&system(p, Strategy::Proportional { lambda }), 0.5, &config).unwrap();
        worst = worst.max((traj.last().yield_rate - sustainable_yield(r, k, x)).abs());
    }
    verdict(
        "3",
        analytic_ok && worst < 1e-6,
        &format!(
            "argmax {} (r/2 = {} +/- 5e-4), max yield {} (rK/4 = {}), \
             worst integrated-vs-analytic yield gap {worst:e} (< 1e-6)",
            curve.argmax,
            r / 2.0,
            curve.max_yield,
            r * k / 4.0
        ),
    );
}

#[test]
fn criterion_04_transcritical_boundary() {
    let p = fig1();
    let base = system(p, Strategy::Proportional { lambda: 0.5 });
    let h = 1e-2;
    let grid = linspace(0.40, 0.60, 21);
    let scan = bifurcation_scan(
        &base,
        Control::HarvestIntensity,
        &grid,
        0.5,
        &IntegrationConfig::new(1e-2, 5000.0),
    )
    .unwrap();
    let boundary = extinction_boundary(&scan);
    let bracket_ok =
        boundary.is_some_and(|(lo, hi)| lo <= p.r && p.r <= hi && hi - lo <= h * (1.0 + 1e-9));

    let above = Control::HarvestIntensity.apply(&base, p.r + 0.1).unwrap();
    let traj = integrate(&above, 0.5, &IntegrationConfig::new(1e-3, 500.0)).unwrap();
    let extinct_at = traj.events_of(EventKind::Extinction).next().map(|e| e.t);
    verdict(
        "4",
        bracket_ok && extinct_at.is_some_and(|t| t <= 500.0),
        &format!(
            "boundary bracket {boundary:?} around r = {} with h = {h}; \
             extinction at lambda q alpha = r + 0.1 flagged at t = {extinct_at:?}",
            p.r
        ),
    );
}

#[test]
fn criterion_05_threshold_equilibrium() {
    let p = fig1();
    let (lambda, n_thre) = (0.5, 0.2);
    let lqa = lambda * p.q * p.alpha.mean();
    let oracle = bisect(
        |n| p.r * n * (1.0 - n / p.k) - lqa * (n - n_thre),
        n_thre + 1e-9,
        p.k,
    );
    let analytic = equilibria_threshold(&p, lambda, n_thre)
        .unwrap()
        .stable_point()
        .unwrap();
    let thr = integrate(
        &system(p, Strategy::ProportionalThreshold { lambda, n_thre }),
        0.5,
        &IntegrationConfig::new(1e-3, 300.0),
    )
    .unwrap();
    let prop = integrate(
        &system(p, Strategy::Proportional { lambda }),
        0.5,
        &IntegrationConfig::new(1e-3, 300.0),
    )
    .unwrap();
    let (n_thr, n_prop) = (thr.final_biomass(), prop.final_biomass());
    let (y_thr, y_prop) = (thr.last().yield_rate, prop.last().yield_rate);
    let passed = (n_thr - oracle).abs() < 1e-4
        && (analytic - oracle).abs() < 1e-12
        && n_thr > n_prop
        && y_thr < y_prop;
    verdict(
        "5",
        passed,
        &format!(
            "long-run N {n_thr} vs bisection root {oracle} (+/- 1e-4, analytic {analytic}); \
             N {n_thr} > proportional {n_prop}; yield {y_thr} < proportional {y_prop}"
        ),
    );
}

#[test]
fn criterion_06_restricted_basins() {
    let p = ModelParams::new(0.5, 1.0, 1.0, 1.0, 0.5).unwrap();
    let y_limit = 0.1;
    let logistic_gap = |n: f64| p.r * n * (1.0 - n / p.k) - y_limit;
    let lower = bisect(logistic_gap, 0.0, 0.5);
    let upper = bisect(logistic_gap, 0.5, 1.0);
    let report = equilibria_restricted(&p, y_limit).unwrap();
    let roots: Vec<f64> = report
        .points
        .iter()
        .map(|e| e.biomass)
        .filter(|&n| n > 0.0)
        .collect();
    let roots_ok =
        roots.len() == 2 && (roots[0] - lower).abs() < 1e-12 && (roots[1] - upper).abs() < 1e-12;

    let sys = system(
        p,
        Strategy::RestrictedProportional {
            lambda: 1.0,
            y_limit,
        },
    );
    let config = IntegrationConfig::new(1e-3, 200.0);
    let low = integrate(&sys, 0.2, &config).unwrap();
    let high = integrate(&sys, 0.4, &config).unwrap();
    let passed = roots_ok && low.is_extinct() && (high.final_biomass() - 0.72361).abs() < 1e-5;
    verdict(
        "6",
        passed,
        &format!(
            "capped roots {roots:?} vs bisection ({lower}, {upper}); N0 = 0.2 extinct = {}; \
             N0 = 0.4 ends at {} (0.72361 +/- 1e-5)",
            low.is_extinct(),
            high.final_biomass()
        ),
    );
}

fn convergence_times(
    base: ModelParams,
    strategy: &Strategy,
    betas: &[f64],
    n0: f64,
    t_end: f64,
) -> (Vec<f64>, Vec<f64>) {
    let config = IntegrationConfig::new(1e-3, t_end);
    betas
        .iter()
        .map(|&b| {
            let sys = system(with_beta(base, b), strategy.clone());
            let target = match *strategy {
                Strategy::ProportionalThreshold { lambda, n_thre } => {
                    equilibria_threshold(&sys.params, lambda, n_thre).unwrap()
                }
                Strategy::Proportional { lambda } => {
                    equilibria_proportional(&sys.params, lambda).unwrap()
                }
                _ => unreachable!(),
            }
            .stable_point()
            .unwrap();
            let traj = integrate(&sys, n0, &config).unwrap();
            (convergence_time(&traj, target, 1e-4), traj.final_biomass())
        })
        .unzip()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

const BETAS: [f64; 3] = [0.0, 0.5, 1.0];

#[test]
fn criterion_07a_proportional_beta_rate() {
    let (times, finals) = convergence_times(
        fig1(),
        &Strategy::Proportional { lambda: 0.5 },
        &BETAS,
        0.9,
        300.0,
    );
    let spread = finals.iter().cloned().fold(f64::MIN, f64::max)
        - finals.iter().cloned().fold(f64::MAX, f64::min);
    verdict(
        "7a",
        spread < 1e-8 && strictly_decreasing(&times),
        &format!(
            "proportional, beta = {BETAS:?}: final N {finals:?} (spread {spread:e} < 1e-8), \
             convergence times {times:?} strictly decreasing"
        ),
    );
}

fn fig7() -> (ModelParams, Strategy) {
    (
        ModelParams::new(0.1, 0.5, 0.4, 1.0, 1.0).unwrap(),
        Strategy::ProportionalThreshold {
            lambda: 0.5,
            n_thre: 0.3,
        },
    )
}

#[test]
fn criterion_07b_threshold_beta_rate_from_above() {
    let (p, s) = fig7();
    let (times, _) = convergence_times(p, &s, &BETAS, 0.45, 400.0);
    verdict(
        "7b",
        strictly_decreasing(&times),
        &format!(
            "threshold, N0 = 0.45 above N*, beta = {BETAS:?}: times {times:?} strictly decreasing"
        ),
    );
}

#[test]
fn criterion_07c_threshold_beta_rate_from_below() {
    let (p, s) = fig7();
    let (times, _) = convergence_times(p, &s, &BETAS, 0.32, 400.0);
    verdict(
        "7c",
        strictly_increasing(&times),
        &format!(
            "threshold, N0 = 0.32 below N*, beta = {BETAS:?}: times {times:?} strictly increasing"
        ),
    );
}

#[test]
fn criterion_08_seasonal_attractor() {
    let run = run_scenario("fig14_sinusoid_data1_long", &RunSettings::default()).unwrap();
    let mut detail = String::new();
    let mut passed = true;
    for (m, traj) in run.members.iter().zip(&run.trajectories) {
        let peak = m.system.params.q * m.system.params.alpha.mean() * 0.5;
        let d = periodicity_defect(traj, 1.0, 50.0).unwrap();
        passed &= peak < m.system.params.r && d < 1e-6 && !traj.is_extinct();
        detail.push_str(&format!(
            "{}: peak lambda q alpha {peak}, defect {d:e}; ",
            m.label
        ));
    }
    verdict("8", passed, detail.trim_end_matches("; "));
}

fn data1_at_full_intensity(strategy: Strategy) -> HarvestSystem {
    system(ModelParams::new(0.3, 1.0, 1.0, 1.0, 1.0).unwrap(), strategy)
}

#[test]
fn criterion_09a_rotational_period_three() {
    let sys = data1_at_full_intensity(Strategy::Rotational {
        schedule: Schedule::Sinusoid,
        open_years: 1,
        closed_years: 2,
    });
    let traj = integrate(&sys, 0.5, &IntegrationConfig::new(1e-3, 200.0)).unwrap();
    let d3 = periodicity_defect(&traj, 3.0, 100.0).unwrap();
    let d1 = periodicity_defect(&traj, 1.0, 100.0).unwrap();
    let (lo, hi) = traj.biomass_range(100.0).unwrap();
    let passed = !traj.is_extinct() && d3 < 1e-6 && d1 > 1e-3 && lo > ROTATIONAL_MIN_BIOMASS;
    verdict(
        "9a",
        passed,
        &format!(
            "rotational 1 open / 2 closed, alpha q = 1: period-3 defect {d3:e} (< 1e-6), \
             period-1 defect {d1:e}, N in [{lo}, {hi}] (min > {ROTATIONAL_MIN_BIOMASS})"
        ),
    );
}

#[test]
fn criterion_09b_continuous_seasonal_goes_extinct() {
    let sys = data1_at_full_intensity(Strategy::Seasonal {
        schedule: Schedule::Sinusoid,
    });
    let traj = integrate(&sys, 0.5, &IntegrationConfig::new(1e-3, 1000.0)).unwrap();
    let (lo, hi) = traj.biomass_range(900.0).unwrap_or((0.0, 0.0));
    verdict(
        "9b",
        traj.is_extinct(),
        &format!(
            "continuous sinusoid, alpha q = 1, t_end = 1000: extinct = {}, \
             N over the last century in [{lo}, {hi}]",
            traj.is_extinct()
        ),
    );
}

fn any_schedule() -> impl proptest::strategy::Strategy<Value = Schedule> {
    let pulse = (0.0f64..0.9, 0.01f64..1.0, 0.0f64..=1.0).prop_map(|(t_start, frac, peak)| {
        Schedule::SinePulse {
            t_start,
            duration: frac * (1.0 - t_start),
            peak,
        }
    });
    let square = (0.05f64..2.0, 0.0f64..2.0, 0.0f64..=1.0).prop_map(|(open, closed, level)| {
        Schedule::SquareWave {
            open,
            closed,
            level,
        }
    });
    prop_oneof![pulse, square, Just(Schedule::Sinusoid)]
}

fn record(name: &str, result: Result<(), impl std::fmt::Display>, failures: &mut Vec<String>) {
    if let Err(e) = result {
        failures.push(format!("{name}: {e}"));
    }
}

#[test]
fn criterion_10_property_suites() {
    let mut failures = Vec::new();
    let runner = || {
        TestRunner::new(Config {
            cases: 64,
            failure_persistence: None,
            ..Config::default()
        })
    };

    record(
        "branch continuity at N_thre",
        runner().run(
            &(
                0.05f64..1.0,
                0.5f64..2.0,
                0.0f64..1.0,
                0.0f64..=1.0,
                0.0f64..1.0,
                0.05f64..0.95,
            ),
            |(r, k, alpha, lambda, beta, frac)| {
                let p = ModelParams::new(r, k, 1.0, alpha, beta).unwrap();
                let n_thre = frac * k;
                let sys = system(p, Strategy::ProportionalThreshold { lambda, n_thre });
                let above = sys.rhs_in(Regime::AboveThreshold, 0.0, n_thre).unwrap();
                let below = sys.rhs_in(Regime::BelowThreshold, 0.0, n_thre).unwrap();
                prop_assert_eq!(above, below);
                Ok(())
            },
        ),
        &mut failures,
    );

    record(
        "cap events alternate",
        runner().run(
            &(
                0.2f64..1.0,
                0.2f64..1.5,
                0.0f64..0.9,
                0.3f64..=1.0,
                0.0f64..0.3,
                0.05f64..1.0,
            ),
            |(r, alpha, beta, lambda, y_frac, n0)| {
                let p = ModelParams::new(r, 1.0, 1.0, alpha, beta).unwrap();
                let sys = system(
                    p,
                    Strategy::RestrictedProportional {
                        lambda,
                        y_limit: y_frac * r,
                    },
                );
                let traj = integrate(&sys, n0, &IntegrationConfig::new(1e-2, 60.0)).unwrap();
                let caps: Vec<EventKind> = traj
                    .events
                    .iter()
                    .map(|e| e.kind)
                    .filter(|k| matches!(k, EventKind::CapEngaged | EventKind::CapReleased))
                    .collect();
                prop_assert!(caps.windows(2).all(|w| w[0] != w[1]), "{:?}", caps);
                prop_assert!(traj.events.windows(2).all(|w| w[0].t <= w[1].t));
                Ok(())
            },
        ),
        &mut failures,
    );

    record(
        "schedule periodicity and range",
        runner().run(
            &(any_schedule(), 0.0f64..20.0, 0u32..3),
            |(s, t, closed)| {
                let v = s.value(t);
                prop_assert!((0.0..=s.max_value()).contains(&v) && s.max_value() <= 1.0);
                let p = s.period();
                let near_edge = |x: f64| !s.breakpoints(x - 1e-6, x + 1e-6).is_empty();
                if !near_edge(t) && !near_edge(t + p) {
                    prop_assert!((s.value(t + p) - v).abs() < 1e-9);
                }
                let gated = Schedule::Gated {
                    inner: Box::new(s.clone()),
                    open_years: 1,
                    closed_years: closed,
                };
                if closed == 0 {
                    prop_assert_eq!(gated.value(t), v);
                }
                Ok(())
            },
        ),
        &mut failures,
    );

    record(
        "CSV round-trip and determinism",
        runner().run(
            &(0.1f64..1.0, 0.0f64..=1.0, 0.0f64..1.0, 0.05f64..1.0),
            |(r, lambda, beta, n0)| {
                let p = ModelParams::new(r, 1.0, 0.8, 1.0, beta).unwrap();
                let sys = system(
                    p,
                    Strategy::RestrictedProportional {
                        lambda,
                        y_limit: 0.1 * r,
                    },
                );
                let config = IntegrationConfig::new(0.05, 20.0);
                let mut a = Vec::new();
                let mut b = Vec::new();
                let first = integrate(&sys, n0, &config).unwrap();
                write_trajectory(&first, Format::Csv, &mut a).unwrap();
                write_trajectory(&integrate(&sys, n0, &config).unwrap(), Format::Csv, &mut b)
                    .unwrap();
                prop_assert_eq!(&a, &b);
                let parsed = read_trajectory_csv(std::str::from_utf8(&a).unwrap()).unwrap();
                prop_assert_eq!(parsed, first);
                Ok(())
            },
        ),
        &mut failures,
    );

    record(
        "config round-trip",
        runner().run(
            &(
                0.01f64..2.0,
                0.1f64..10.0,
                0.0f64..2.0,
                0.0f64..=1.0,
                0.0f64..3.0,
                0.0f64..1.0,
            ),
            |(r, k, alpha, lambda, y_limit, n0)| {
                let text = format!(
                    "r = {r}\nK = {k}\nq = 1\nalpha = {alpha}\nbeta = 0.5\n\
                     strategy = restricted\nlambda = {lambda}\nY_limit = {y_limit}\nN0 = {n0}\n"
                );
                let c = RunConfig::parse(&text).unwrap();
                prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
                Ok(())
            },
        ),
        &mut failures,
    );

    let detail = if failures.is_empty() {
        "threshold branch continuity, cap-event alternation, schedule periodicity and range, \
         CSV round-trip determinism, config round-trip: 64 cases each, no failures"
            .to_owned()
    } else {
        failures.join("; ")
    };
    verdict("10", failures.is_empty(), &detail);
}
