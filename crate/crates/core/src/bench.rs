//! Seeded scenario batches, parallel rollouts and outcome classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{run_rollout, tick, ControlMode, ControllerConfig, ResolverState, RolloutRecord};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::graph::Vector;
use crate::nav2d::{convex_scenario, u_trap_scenario, NavModelConfig, NavNoise, NavScenario};
use crate::pusht::{
    corners, polygon_from, sample_scenario, t_template, PushModelConfig, PushNoise, PushScenario, DEFAULT_MAX_SPEED,
};

pub const STALL_EPS: f64 = 0.01;
pub const STALL_FRACTION: f64 = 0.1;
pub const CYCLE_TOL: f64 = 1e-3;
pub const CYCLE_MIN_PERIOD: usize = 20;
/// Every this many ticks a trajectory sample is kept for plotting.
pub const PATH_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Nav2d,
    Pusht,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Nav2d => "nav2d",
            Domain::Pusht => "pusht",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nav2d" => Ok(Domain::Nav2d),
            "pusht" => Ok(Domain::Pusht),
            _ => Err(Error::InvalidArgument(format!("unknown domain `{s}`"))),
        }
    }
}

/// A controller mode as run by the harness. `FullNoNoise` is the full
/// controller on the same scenario with every noise source switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    Full,
    FullNoNoise,
    #[serde(rename = "steepest")]
    SteepestBaseline,
    NoExploration,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [
        BenchMode::Full,
        BenchMode::FullNoNoise,
        BenchMode::SteepestBaseline,
        BenchMode::NoExploration,
    ];

    pub fn control_mode(self) -> ControlMode {
        match self {
            BenchMode::Full | BenchMode::FullNoNoise => ControlMode::Full,
            BenchMode::SteepestBaseline => ControlMode::SteepestBaseline,
            BenchMode::NoExploration => ControlMode::NoExploration,
        }
    }

    pub fn noisy(self) -> bool {
        self != BenchMode::FullNoNoise
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Full => "full",
            BenchMode::FullNoNoise => "full-no-noise",
            BenchMode::SteepestBaseline => "steepest",
            BenchMode::NoExploration => "no-exploration",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode `{s}`")))
    }
}

/// One task of either domain; the scenario file schema is this enum tagged
/// by `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "lowercase")]
pub enum Scenario {
    Nav2d(NavScenario),
    Pusht(PushScenario),
}

impl Scenario {
    pub fn id(&self) -> &str {
        match self {
            Scenario::Nav2d(s) => &s.id,
            Scenario::Pusht(s) => &s.id,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Scenario::Nav2d(s) => s.seed,
            Scenario::Pusht(s) => s.seed,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Scenario::Nav2d(_) => Domain::Nav2d,
            Scenario::Pusht(_) => Domain::Pusht,
        }
    }

    pub fn without_noise(&self) -> Self {
        match self {
            Scenario::Nav2d(s) => Scenario::Nav2d(s.clone().without_noise()),
            Scenario::Pusht(s) => Scenario::Pusht(s.clone().without_noise()),
        }
    }
}

/// A list of scenarios as stored on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavBench {
    pub controller: ControllerConfig,
    pub model: NavModelConfig,
    /// Share of generated scenarios with the trap between agent and target.
    pub trap_fraction: f64,
}

impl Default for NavBench {
    fn default() -> Self {
        Self {
            controller: ControllerConfig {
                max_speed: Some(1.0),
                max_ticks: 3000,
                ..Default::default()
            },
            model: NavModelConfig::default(),
            trap_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushBench {
    pub controller: ControllerConfig,
    pub model: PushModelConfig,
    /// Half-width of the square workspace scenarios are drawn from (m).
    pub workspace_half: f64,
}

impl Default for PushBench {
    fn default() -> Self {
        Self {
            controller: ControllerConfig {
                max_speed: Some(DEFAULT_MAX_SPEED),
                max_ticks: 5000,
                ..Default::default()
            },
            model: PushModelConfig::default(),
            workspace_half: 0.35,
        }
    }
}

/// Everything the harness needs besides the scenarios; also the config
/// file schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub nav2d: NavBench,
    pub pusht: PushBench,
}

impl BenchConfig {
    pub fn controller(&self, domain: Domain) -> &ControllerConfig {
        match domain {
            Domain::Nav2d => &self.nav2d.controller,
            Domain::Pusht => &self.pusht.controller,
        }
    }

    pub fn controller_mut(&mut self, domain: Domain) -> &mut ControllerConfig {
        match domain {
            Domain::Nav2d => &mut self.nav2d.controller,
            Domain::Pusht => &mut self.pusht.controller,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nav2d.controller.validate()?;
        self.pusht.controller.validate()?;
        if !(0.0..=1.0).contains(&self.nav2d.trap_fraction) {
            return Err(Error::InvalidArgument("trap_fraction must lie in [0, 1]".into()));
        }
        if !(self.pusht.workspace_half > 0.0) {
            return Err(Error::InvalidArgument("workspace_half must be positive".into()));
        }
        Ok(())
    }
}

/// `n` seeded scenarios of one domain. Scenario seeds are distinct and the
/// list depends only on the arguments.
pub fn generate_batch(domain: Domain, n: usize, master_seed: u64, config: &BenchConfig) -> Result<Vec<Scenario>> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let seed: u64 = rng.random();
        if !seen.insert(seed) {
            continue;
        }
        let scenario = match domain {
            Domain::Nav2d => {
                let trap = rng.random::<f64>() < config.nav2d.trap_fraction;
                Scenario::Nav2d(if trap {
                    u_trap_scenario(seed, NavNoise::default())
                } else {
                    convex_scenario(seed, false, NavNoise::default())
                })
            }
            Domain::Pusht => Scenario::Pusht(sample_scenario(
                seed,
                config.pusht.workspace_half,
                PushNoise::default(),
            )?),
        };
        out.push(scenario);
    }
    Ok(out)
}

/// One closed-loop episode and whether the agent ever touched an obstacle.
pub fn run_scenario(scenario: &Scenario, mode: BenchMode, config: &BenchConfig) -> Result<(RolloutRecord, bool)> {
    let scenario = if mode.noisy() {
        scenario.clone()
    } else {
        scenario.without_noise()
    };
    let mut controller = config.controller(scenario.domain()).clone();
    controller.mode = mode.control_mode();
    match &scenario {
        Scenario::Nav2d(s) => {
            let (mut model, mut env) = s.instantiate(config.nav2d.model)?;
            let mut record = run_rollout(&mut model, &mut env, &controller, &s.id, s.seed)?;
            record.mode = mode.name().into();
            Ok((record, env.collided))
        }
        Scenario::Pusht(s) => {
            let (mut model, mut env) = s.instantiate(config.pusht.model)?;
            let mut record = run_rollout(&mut model, &mut env, &controller, &s.id, s.seed)?;
            record.mode = mode.name().into();
            Ok((record, false))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    LocalMinimumStall,
    LimitCycle,
    Timeout,
    /// The rollout aborted with an error.
    Failed,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Success,
        Outcome::LocalMinimumStall,
        Outcome::LimitCycle,
        Outcome::Timeout,
        Outcome::Failed,
    ];
}

fn tick_state(t: &crate::controller::TickRecord) -> Vec<f64> {
    t.agent.iter().chain(&t.object).copied().collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Class of a finished rollout. A failed rollout is a local minimum stall
/// when agent and object stayed within `STALL_EPS` of their final state over
/// the last tenth of the ticks, a limit cycle when some state of that window
/// comes within `CYCLE_TOL` of a state at least `CYCLE_MIN_PERIOD` ticks
/// earlier, and a timeout otherwise.
pub fn classify(record: &RolloutRecord) -> Outcome {
    if record.success {
        return Outcome::Success;
    }
    let states: Vec<Vec<f64>> = record.ticks.iter().map(tick_state).collect();
    let n = states.len();
    if n == 0 {
        return Outcome::Timeout;
    }
    let window = ((n as f64 * STALL_FRACTION).ceil() as usize).clamp(1, n);
    let last = &states[n - 1];
    if states[n - window..].iter().all(|s| dist(s, last) < STALL_EPS) {
        return Outcome::LocalMinimumStall;
    }
    for j in n - window..n {
        if j < CYCLE_MIN_PERIOD {
            continue;
        }
        if states[..=j - CYCLE_MIN_PERIOD]
            .iter()
            .any(|s| dist(s, &states[j]) < CYCLE_TOL)
        {
            return Outcome::LimitCycle;
        }
    }
    Outcome::Timeout
}

/// Downsampled trajectory point kept for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub tick: usize,
    pub agent: Vec<f64>,
    pub object: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub mode: BenchMode,
    pub scenario_id: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub success_tick: Option<usize>,
    pub ticks: usize,
    pub collided: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub path: Vec<PathPoint>,
}

impl ScenarioOutcome {
    fn from_result(scenario: &Scenario, mode: BenchMode, result: Result<(RolloutRecord, bool)>) -> Self {
        match result {
            Ok((record, collided)) => Self::from_record(scenario, mode, record, collided),
            Err(e) => Self {
                mode,
                scenario_id: scenario.id().to_string(),
                seed: scenario.seed(),
                outcome: Outcome::Failed,
                success_tick: None,
                ticks: 0,
                collided: false,
                error: Some(e.to_string()),
                path: Vec::new(),
            },
        }
    }

    /// Classifies `record` and keeps every `PATH_STRIDE`-th state plus the last.
    pub fn from_record(scenario: &Scenario, mode: BenchMode, record: RolloutRecord, collided: bool) -> Self {
        let n = record.ticks.len();
        let path = record
            .ticks
            .iter()
            .enumerate()
            .filter(|(i, _)| i % PATH_STRIDE == 0 || i + 1 == n)
            .map(|(_, t)| PathPoint {
                tick: t.tick,
                agent: t.agent.clone(),
                object: t.object.clone(),
            })
            .collect();
        Self {
            mode,
            scenario_id: scenario.id().to_string(),
            seed: scenario.seed(),
            outcome: classify(&record),
            success_tick: record.success_tick,
            ticks: n,
            collided,
            error: None,
            path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: BenchMode,
    /// Fraction of scenarios solved by the end of each tick.
    pub curve: Vec<f64>,
    pub successes: usize,
    pub scenarios: usize,
    pub classes: BTreeMap<Outcome, usize>,
}

impl ModeSummary {
    pub fn final_fraction(&self) -> f64 {
        if self.scenarios == 0 {
            0.0
        } else {
            self.successes as f64 / self.scenarios as f64
        }
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.classes.get(&outcome).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub dt: f64,
    pub modes: Vec<ModeSummary>,
    /// Sorted by mode, then by position in the scenario list.
    pub outcomes: Vec<ScenarioOutcome>,
}

impl BatchReport {
    pub fn empty(dt: f64) -> Self {
        Self {
            dt,
            modes: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    pub fn summary(&self, mode: BenchMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn outcomes_for(&self, mode: BenchMode) -> impl Iterator<Item = &ScenarioOutcome> {
        self.outcomes.iter().filter(move |o| o.mode == mode)
    }
}

/// Success curve of length `horizon`: `curve[t]` is the share of `outcomes`
/// with a success tick of at most `t`.
pub fn success_curve<'a>(outcomes: impl IntoIterator<Item = &'a ScenarioOutcome>, horizon: usize) -> Vec<f64> {
    let mut hits = vec![0usize; horizon];
    let mut total = 0usize;
    for o in outcomes {
        total += 1;
        if let Some(t) = o.success_tick {
            if t < horizon {
                hits[t] += 1;
            }
        }
    }
    let mut acc = 0;
    hits.into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / total.max(1) as f64
        })
        .collect()
}

/// Builds the report from outcomes already in canonical order.
pub fn assemble_report(outcomes: Vec<ScenarioOutcome>, modes: &[BenchMode], horizon: usize, dt: f64) -> BatchReport {
    if outcomes.is_empty() {
        return BatchReport::empty(dt);
    }
    let summaries = modes
        .iter()
        .map(|&mode| {
            let mine: Vec<&ScenarioOutcome> = outcomes.iter().filter(|o| o.mode == mode).collect();
            let mut classes = BTreeMap::new();
            for o in &mine {
                *classes.entry(o.outcome).or_insert(0) += 1;
            }
            ModeSummary {
                mode,
                curve: success_curve(mine.iter().copied(), horizon),
                successes: mine.iter().filter(|o| o.outcome == Outcome::Success).count(),
                scenarios: mine.len(),
                classes,
            }
        })
        .collect();
    BatchReport {
        dt,
        modes: summaries,
        outcomes,
    }
}

/// Runs every (scenario, mode) pair on a pool of `jobs` threads. The report
/// does not depend on `jobs`: results are collected in job order and rollout
/// randomness is seeded per scenario.
pub fn run_batch(
    scenarios: &[Scenario],
    modes: &[BenchMode],
    config: &BenchConfig,
    jobs: usize,
) -> Result<BatchReport> {
    config.validate()?;
    let unique: BTreeSet<BenchMode> = modes.iter().copied().collect();
    if unique.len() != modes.len() {
        return Err(Error::InvalidArgument("modes must be distinct".into()));
    }
    let dt = scenarios
        .first()
        .map(|s| config.controller(s.domain()).dt)
        .unwrap_or(config.nav2d.controller.dt);
    if scenarios.is_empty() || modes.is_empty() {
        return Ok(BatchReport::empty(dt));
    }
    let horizon = scenarios
        .iter()
        .map(|s| config.controller(s.domain()).max_ticks)
        .max()
        .unwrap_or(0);
    let pairs: Vec<(BenchMode, &Scenario)> = modes
        .iter()
        .flat_map(|&m| scenarios.iter().map(move |s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes = pool.install(|| {
        pairs
            .par_iter()
            .map(|(mode, s)| ScenarioOutcome::from_result(s, *mode, run_scenario(s, *mode, config)))
            .collect::<Vec<_>>()
    });
    Ok(assemble_report(outcomes, modes, horizon, dt))
}

/// Combined update direction `−k·∇` at sampled agent (or pusher) positions
/// with the scenario's initial beliefs, as the controller would compute it
/// from rest without exploration.
pub fn gradient_field(scenario: &Scenario, config: &BenchConfig, points: &[Vec2]) -> Result<Vec<(Vec2, Vec2)>> {
    let probe = |mut cc: ControllerConfig| {
        cc.mode = ControlMode::NoExploration;
        cc.lowpass_alpha = 1.0;
        cc.max_speed = None;
        cc
    };
    let mut out = Vec::new();
    match scenario {
        Scenario::Nav2d(s) => {
            let cc = probe(config.nav2d.controller.clone());
            let world = s.world()?;
            let (model, _) = s.clone().without_noise().instantiate(config.nav2d.model)?;
            let target = model.belief.x_rob + model.belief.mu;
            for p in points {
                if world.collided_at(p) || !world.in_bounds(p) {
                    continue;
                }
                let mut m = model.clone();
                m.belief.x_rob = *p;
                m.belief.mu = target - p;
                m.belief.x_obs = world.clearance(p);
                if let Some(d) = field_direction(&m, &cc) {
                    out.push((*p, d));
                }
            }
        }
        Scenario::Pusht(s) => {
            let cc = probe(config.pusht.controller.clone());
            let (model, _) = s.clone().without_noise().instantiate(config.pusht.model)?;
            let body = polygon_from(&corners(&t_template(), &s.object));
            for p in points {
                if body.contains(p) {
                    continue;
                }
                let mut m = model.clone();
                m.belief.x_pusher = *p;
                if let Some(d) = field_direction(&m, &cc) {
                    out.push((*p, d));
                }
            }
        }
    }
    Ok(out)
}

fn field_direction<F: crate::controller::GraphFactory>(model: &F, cc: &ControllerConfig) -> Option<Vec2> {
    let rest = Vector::zeros(2);
    let graph = model.build(&rest).ok()?;
    let mut state = ResolverState::new(cc, rest).ok()?;
    let (next, _) = tick(&graph, cc, &mut state).ok()?;
    Some(Vec2::new(next[0], next[1]))
}
