use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use harvest_core::analysis::{bifurcation_scan_with, extinction_boundary, linspace};
use harvest_core::config::{Command, RawConfig, RunConfig, Source, DEFAULT_INLINE_HORIZON};
use harvest_core::output::{write_json, write_scan, write_trajectory, write_yield_curve, Format};
use harvest_core::scenarios::{self, analytic_equilibria, Member, RunSettings, Scenario};
use harvest_core::{integrate, sustainable_yield_curve, Execution, HarvestSystem};

#[derive(Parser)]
#[command(name = "harvest", version, about = "Fishery harvesting simulator")]
struct Cli {
    /// Run sweep members one after another instead of in parallel.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate a model and write its trajectory.
    Simulate(Common),
    /// Print analytic equilibria and their stability as JSON.
    Equilibria(Common),
    /// Write the sustainable-yield curve.
    YieldCurve(Common),
    /// Scan a control parameter and summarize the long-run behaviour.
    Bifurcation(Common),
    /// Run named scenarios, write their outputs and check their predicates.
    Reproduce {
        /// Scenario names, or `all`.
        #[arg(required = true)]
        tags: Vec<String>,
        /// Output directory.
        #[arg(long, default_value = "results")]
        output: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        format: Option<Format>,
    },
    /// List the built-in scenarios.
    List,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: Option<String>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    format: Option<Format>,
    /// Output file; a directory when a scenario has several members.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self, command: Command) -> Result<RunConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                RawConfig::parse(&text).with_context(|| path.display().to_string())?
            }
            None => RawConfig::default(),
        };
        raw.set("command", command.as_str())?;
        if let Some(s) = &self.scenario {
            raw.set("scenario", s)?;
        }
        if let Some(v) = self.t_end {
            raw.set("t_end", &v.to_string())?;
        }
        if let Some(v) = self.dt {
            raw.set("dt", &v.to_string())?;
        }
        if let Some(v) = self.format {
            raw.set("format", v.as_str())?;
        }
        if let Some(p) = &self.output {
            raw.set("output", &p.to_string_lossy())?;
        }
        for pair in &self.overrides {
            raw.set_pair(pair)?;
        }
        Ok(raw.build()?)
    }
}

/// The base model plus the concrete runs it expands to.
struct Resolved {
    label: String,
    base: HarvestSystem,
    base_n0: f64,
    horizon: f64,
    members: Vec<Member>,
}

fn resolve_source(config: &RunConfig) -> Result<Resolved> {
    match &config.source {
        Source::Scenario(name) => {
            let s: Scenario = scenarios::lookup(name)?;
            Ok(Resolved {
                label: s.name.clone(),
                base: HarvestSystem::new(s.params, s.strategy.clone())?,
                base_n0: s.n0,
                horizon: s.horizon,
                members: s.members()?,
            })
        }
        Source::Inline(m) => {
            let system = HarvestSystem::new(m.params, m.strategy.clone())?;
            Ok(Resolved {
                label: "inline".into(),
                base: system.clone(),
                base_n0: m.n0,
                horizon: DEFAULT_INLINE_HORIZON,
                members: vec![Member {
                    label: "base".into(),
                    system,
                    n0: m.n0,
                }],
            })
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn simulate(config: &RunConfig, exec: Execution) -> Result<()> {
    let resolved = resolve_source(config)?;
    let ic = config.integration(resolved.horizon);
    let runs = harvest_core::par::map_ordered(&resolved.members, exec, |m| {
        integrate(&m.system, m.n0, &ic)
    });
    if runs.len() == 1 {
        let traj = runs.into_iter().next().expect("one run")?;
        report_negative_effort(&resolved.members[0].label, traj.negative_effort_samples);
        return Ok(write_trajectory(
            &traj,
            config.format,
            open_output(config.output.as_deref())?,
        )?);
    }
    let Some(dir) = &config.output else {
        bail!(
            "`{}` has {} members; pass --output DIR to write one file per member",
            resolved.label,
            runs.len()
        );
    };
    fs::create_dir_all(dir)?;
    for (i, (member, traj)) in resolved.members.iter().zip(runs).enumerate() {
        let traj = traj.with_context(|| member.label.clone())?;
        report_negative_effort(&member.label, traj.negative_effort_samples);
        let path = dir.join(format!("member_{i}.{}", config.format.extension()));
        write_trajectory(&traj, config.format, open_output(Some(&path))?)?;
        eprintln!("{} -> {}", member.label, path.display());
    }
    Ok(())
}

fn report_negative_effort(label: &str, count: usize) {
    if count > 0 {
        eprintln!("warning: {label}: effort was negative at {count} samples");
    }
}

fn equilibria(config: &RunConfig) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Row<'a> {
        member: &'a str,
        n0: f64,
        equilibria: harvest_core::EquilibriumReport,
    }
    let resolved = resolve_source(config)?;
    let mut rows = Vec::new();
    for m in &resolved.members {
        let Some(eq) = analytic_equilibria(&m.system) else {
            bail!(
                "strategy `{}` with time-varying or seasonal terms has no analytic equilibria",
                m.system.strategy.name()
            );
        };
        rows.push(Row {
            member: &m.label,
            n0: m.n0,
            equilibria: eq,
        });
    }
    Ok(write_json(&rows, open_output(config.output.as_deref())?)?)
}

fn yield_curve(config: &RunConfig) -> Result<()> {
    let resolved = resolve_source(config)?;
    let p = resolved.base.params;
    let grid = match config.grid {
        Some(g) => g.values(),
        None => linspace(0.0, p.r, 101),
    };
    let curve = sustainable_yield_curve(p.r, p.k, &grid)?;
    eprintln!(
        "peak on grid at lambda q alpha = {} (analytic r/2 = {}), max yield rK/4 = {}",
        curve.argmax,
        0.5 * p.r,
        curve.max_yield
    );
    Ok(write_yield_curve(
        &curve,
        config.format,
        open_output(config.output.as_deref())?,
    )?)
}

fn bifurcation(config: &RunConfig, exec: Execution) -> Result<()> {
    let resolved = resolve_source(config)?;
    let grid = config.grid.context("bifurcation needs a grid")?.values();
    let ic = config.integration(resolved.horizon);
    let scan = bifurcation_scan_with(
        &resolved.base,
        config.control,
        &grid,
        resolved.base_n0,
        &ic,
        exec,
    )?;
    match extinction_boundary(&scan) {
        Some((lo, hi)) => eprintln!("extinction boundary between {lo} and {hi}"),
        None => eprintln!("no persist-to-extinct transition on this grid"),
    }
    Ok(write_scan(
        &scan,
        config.format,
        open_output(config.output.as_deref())?,
    )?)
}

fn reproduce(
    tags: &[String],
    out_dir: &Path,
    dt: Option<f64>,
    format: Format,
    exec: Execution,
) -> Result<bool> {
    let selected: Vec<Scenario> = if tags.iter().any(|t| t == "all") {
        scenarios::registry()
    } else {
        tags.iter()
            .map(|t| scenarios::lookup(t))
            .collect::<Result<_, _>>()?
    };
    let settings = RunSettings {
        dt: dt.unwrap_or(RunSettings::default().dt),
        execution: exec,
        ..RunSettings::default()
    };
    let mut all_passed = true;
    for s in &selected {
        let run = scenarios::run(s, &settings)?;
        let dir = out_dir.join(&s.name);
        fs::create_dir_all(&dir)?;
        for (i, traj) in run.trajectories.iter().enumerate() {
            let path = dir.join(format!("member_{i}.{}", format.extension()));
            write_trajectory(traj, format, open_output(Some(&path))?)?;
        }
        write_json(&run.report, open_output(Some(&dir.join("report.json")))?)?;
        for c in &run.report.checks {
            println!(
                "{} {}: {} | measured {}",
                if c.passed { "PASS" } else { "FAIL" },
                s.name,
                c.expected,
                c.measured
            );
        }
        all_passed &= run.report.passed;
    }
    Ok(all_passed)
}

fn run(cli: Cli) -> Result<bool> {
    let exec = execution(cli.sequential);
    match cli.command {
        Sub::Simulate(c) => simulate(&c.resolve(Command::Simulate)?, exec)?,
        Sub::Equilibria(c) => equilibria(&c.resolve(Command::Equilibria)?)?,
        Sub::YieldCurve(c) => yield_curve(&c.resolve(Command::YieldCurve)?)?,
        Sub::Bifurcation(c) => bifurcation(&c.resolve(Command::Bifurcation)?, exec)?,
        Sub::Reproduce {
            tags,
            output,
            dt,
            format,
        } => return reproduce(&tags, &output, dt, format.unwrap_or_default(), exec),
        Sub::List => {
            let mut out = io::stdout().lock();
            for s in scenarios::registry() {
                writeln!(out, "{:<28} {}", s.name, s.description)?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
