use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aicon::bench::{
    generate_batch, run_batch, run_scenario, BenchConfig, BenchMode, Domain, Scenario, ScenarioOutcome,
};
use aicon::export::{
    export_csv, export_svg, field_grid, load_report, read_scenarios, trajectory_svg, write_scenarios, SCENARIOS_FILE,
};
use aicon::{Error, Result};

#[derive(Parser)]
#[command(
    name = "aicon",
    version,
    about = "Gradient-propagation controller with navigation and pushing testbeds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one rollout and write its trace and figure.
    Run {
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value = "full")]
        mode: BenchMode,
        /// Scenario file; the first scenario of the domain is used. Without
        /// it a scenario is generated from --seed.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "AICON_OUT_DIR", default_value = "aicon-out")]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run a seeded batch across modes and export tables and figures.
    Bench {
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "full,steepest")]
        modes: Vec<BenchMode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "AICON_OUT_DIR", default_value = "aicon-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Skip per-rollout trajectory figures.
        #[arg(long)]
        no_trajectories: bool,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Regenerate figures from a bench output directory.
    Plot {
        #[arg(long = "in", env = "AICON_OUT_DIR")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Config file plus command-line overrides of the domain's controller.
#[derive(Args)]
struct Tuning {
    /// TOML file with `[nav2d]` and `[pusht]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    lowpass_alpha: Option<f64>,
    #[arg(long)]
    max_speed: Option<f64>,
    #[arg(long)]
    max_ticks: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
}

impl Tuning {
    fn resolve(&self, domain: Domain) -> Result<BenchConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        let c = cfg.controller_mut(domain);
        if let Some(k) = self.gain {
            c.gain = vec![k; c.gain.len().max(1)];
        }
        if let Some(a) = self.lowpass_alpha {
            c.lowpass_alpha = a;
        }
        if let Some(v) = self.max_speed {
            c.max_speed = Some(v);
        }
        if let Some(t) = self.max_ticks {
            c.max_ticks = t;
        }
        if let Some(dt) = self.dt {
            c.dt = dt;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_config(path: Option<&Path>) -> Result<BenchConfig> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
    }
}

fn run(
    domain: Domain,
    mode: BenchMode,
    scenario: Option<&Path>,
    seed: u64,
    out: &Path,
    cfg: &BenchConfig,
) -> Result<()> {
    let sc = match scenario {
        Some(p) => read_scenarios(p)?
            .into_iter()
            .find(|s| s.domain() == domain)
            .ok_or_else(|| Error::InvalidArgument(format!("{} holds no {domain} scenario", p.display())))?,
        None => generate_batch(domain, 1, seed, cfg)?.remove(0),
    };
    fs::create_dir_all(out)?;
    let (record, collided) = run_scenario(&sc, mode, cfg)?;
    let trace = out.join(format!("{}__{}.csv", mode, sc.id()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&trace)
        .map_err(|e| Error::Io(e.to_string()))?;
    w.write_record([
        "tick",
        "time_s",
        "agent",
        "object",
        "action",
        "cos_top2",
        "exploring",
        "priority",
        "cost",
    ])
    .map_err(|e| Error::Io(e.to_string()))?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    for t in &record.ticks {
        w.write_record([
            t.tick.to_string(),
            t.time.to_string(),
            join(&t.agent),
            join(&t.object),
            join(&t.action),
            t.cos_top2.map(|c| c.to_string()).unwrap_or_default(),
            t.exploring.to_string(),
            t.priority.join(" "),
            t.cost.to_string(),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    let outcome = ScenarioOutcome::from_record(&sc, mode, record, collided);
    let grid = field_grid(&sc, &outcome.path, 20);
    let field = aicon::bench::gradient_field(&sc, cfg, &grid)?;
    let figure = out.join(format!("{}__{}.svg", mode, sc.id()));
    fs::write(&figure, trajectory_svg(&sc, &outcome, &field))?;
    println!(
        "{} {}: {:?} after {} ticks{}",
        sc.id(),
        mode,
        outcome.outcome,
        outcome.ticks,
        outcome
            .success_tick
            .map(|t| format!(" (success at tick {t})"))
            .unwrap_or_default()
    );
    println!("wrote {} and {}", trace.display(), figure.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    domain: Domain,
    n: usize,
    modes: &[BenchMode],
    seed: u64,
    out: &Path,
    jobs: usize,
    trajectories: bool,
    cfg: &BenchConfig,
) -> Result<()> {
    let scenarios = generate_batch(domain, n, seed, cfg)?;
    fs::create_dir_all(out)?;
    write_scenarios(&scenarios, &out.join(SCENARIOS_FILE))?;
    fs::write(
        out.join("config.toml"),
        toml::to_string(cfg).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    let report = run_batch(&scenarios, modes, cfg, jobs)?;
    export_csv(&report, out)?;
    let shown: &[Scenario] = if trajectories { &scenarios } else { &[] };
    export_svg(&report, shown, cfg, out)?;
    for m in &report.modes {
        let classes = m
            .classes
            .iter()
            .map(|(c, k)| format!("{c:?}={k}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!("{:<15} {:>4}/{:<4} {classes}", m.mode.name(), m.successes, m.scenarios);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn plot(input: &Path, config: Option<&Path>) -> Result<()> {
    let report = load_report(input)?;
    let cfg = match config {
        Some(p) => load_config(Some(p))?,
        None => {
            let saved = input.join("config.toml");
            load_config(saved.exists().then_some(saved.as_path()))?
        }
    };
    let scenarios_path = input.join(SCENARIOS_FILE);
    let scenarios = if scenarios_path.exists() {
        read_scenarios(&scenarios_path)?
    } else {
        Vec::new()
    };
    let files = export_svg(&report, &scenarios, &cfg, input)?;
    println!("wrote {} figures under {}", files.len(), input.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            domain,
            mode,
            scenario,
            seed,
            out,
            tuning,
        } => tuning
            .resolve(*domain)
            .and_then(|cfg| run(*domain, *mode, scenario.as_deref(), *seed, out, &cfg)),
        Command::Bench {
            domain,
            n,
            modes,
            seed,
            out,
            jobs,
            no_trajectories,
            tuning,
        } => tuning
            .resolve(*domain)
            .and_then(|cfg| bench(*domain, *n, modes, *seed, out, *jobs, !no_trajectories, &cfg)),
        Command::Plot { input, config } => plot(input, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
