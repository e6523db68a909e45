//! The closed control loop: estimation, path gradients, layered conflict
//! resolution with exploration, and the filtered actuation update.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::{cosine, detect_conflict, exploration_direction, ExplorationState, ExploreConfig, Mode};
use crate::gradient::{enumerate_paths, path_id, propagate, PathGradient, MAX_PATH_LEN};
use crate::graph::{all_finite, Graph, Matrix, Vector};
use crate::resolver::{normalize_magnitudes, order_and_project, Candidate, ResolverConfig, SoftmaxMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Projection-aware ordering plus nullspace exploration.
    Full,
    /// Follow the single steepest path gradient.
    SteepestBaseline,
    /// Projection-aware ordering without exploration.
    NoExploration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Per-actuator-component gain `k`.
    pub gain: Vec<f64>,
    pub dt: f64,
    pub lowpass_alpha: f64,
    pub mode: ControlMode,
    pub max_ticks: usize,
    /// Norm bound applied after filtering.
    pub max_speed: Option<f64>,
    pub resolver: ResolverConfig,
    pub explore: ExploreConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gain: vec![1.0, 1.0],
            dt: 0.02,
            lowpass_alpha: 0.3,
            mode: ControlMode::Full,
            max_ticks: 3000,
            max_speed: None,
            resolver: ResolverConfig::default(),
            explore: ExploreConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gain.is_empty() || self.gain.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::InvalidArgument("gain must be positive elementwise".into()));
        }
        if !(self.lowpass_alpha > 0.0 && self.lowpass_alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lowpass_alpha {} not in (0, 1]",
                self.lowpass_alpha
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt {} must be positive", self.dt)));
        }
        if !(self.resolver.tau > 0.0) || self.resolver.margin < 0.0 {
            return Err(Error::InvalidArgument("resolver tau/margin out of range".into()));
        }
        self.explore.validate()
    }
}

/// Runtime memory of one rollout's controller.
#[derive(Debug, Clone)]
pub struct ResolverState {
    /// Last priority order per quantity.
    pub incumbents: BTreeMap<String, Vec<String>>,
    pub exploration: ExplorationState,
    /// Last filtered action.
    pub filter: Vector,
    /// Motion-history average per quantity.
    pub motion: BTreeMap<String, Vector>,
    last_values: BTreeMap<String, Vector>,
    ticks: usize,
}

impl ResolverState {
    pub fn new(config: &ControllerConfig, initial_action: Vector) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            incumbents: BTreeMap::new(),
            exploration: ExplorationState::new(&config.explore, initial_action.len())?,
            filter: initial_action,
            motion: BTreeMap::new(),
            last_values: BTreeMap::new(),
            ticks: 0,
        })
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }
}

/// Where and how gradients were combined at one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub quantity: String,
    pub priority: Vec<String>,
    pub cos_top2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickDiagnostics {
    /// Per-path gradient magnitude at the actuator.
    pub path_magnitudes: Vec<(String, f64)>,
    pub resolutions: Vec<Resolution>,
    pub mode: Mode,
    pub exploring_at: Option<String>,
    /// Cosine of the two strongest gradients at the first resolved quantity.
    pub cos_top2: Option<f64>,
    /// Priority order at the first resolved quantity, or the steepest path.
    pub priority: Vec<String>,
    /// Gradient that entered the actuation update.
    pub gradient: Vector,
}

/// `(1 − α)·previous + α·raw`.
pub fn low_pass(previous: &Vector, raw: &Vector, alpha: f64) -> Result<Vector> {
    if previous.len() != raw.len() {
        return Err(Error::DimensionMismatch {
            context: "low_pass".into(),
            expected: (previous.len(), 1),
            got: (raw.len(), 1),
        });
    }
    Ok(previous * (1.0 - alpha) + raw * alpha)
}

fn saturate(v: Vector, max: Option<f64>) -> Vector {
    match max {
        Some(m) if v.norm() > m => {
            let n = v.norm();
            v * (m / n)
        }
        _ => v,
    }
}

/// Every goal's paths to the actuator with their gradients.
pub fn path_gradients(graph: &Graph, actuator: &str) -> Result<Vec<PathGradient>> {
    let mut out = Vec::new();
    for goal in graph.goals() {
        match enumerate_paths(graph, &goal.id, actuator, MAX_PATH_LEN) {
            Ok(paths) => {
                for p in &paths {
                    out.push(propagate(graph, p)?);
                }
            }
            Err(Error::NoPath { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One control step on a graph whose node values already hold the
/// predictions for the current action. Returns the next action.
pub fn tick(graph: &Graph, config: &ControllerConfig, state: &mut ResolverState) -> Result<(Vector, TickDiagnostics)> {
    let actuator = graph
        .actuators()
        .first()
        .ok_or_else(|| Error::InvalidArgument("graph has no actuator".into()))?
        .clone();
    let current = graph
        .node(&actuator)
        .map(|n| n.quantity.value.clone())
        .ok_or_else(|| Error::UnknownNode(actuator.clone()))?;
    if config.gain.len() != current.len() && config.gain.len() != 1 {
        return Err(Error::DimensionMismatch {
            context: "gain".into(),
            expected: (current.len(), 1),
            got: (config.gain.len(), 1),
        });
    }
    if state.filter.len() != current.len() {
        state.filter = current.clone();
    }

    let paths = path_gradients(graph, &actuator)?;
    track_motion(graph, &paths, config, state);

    let mut diag = TickDiagnostics {
        path_magnitudes: paths.iter().map(|p| (p.path.id(), p.magnitude)).collect(),
        resolutions: Vec::new(),
        mode: Mode::Pursuit,
        exploring_at: None,
        cos_top2: None,
        priority: Vec::new(),
        gradient: Vector::zeros(current.len()),
    };

    let gradient = match config.mode {
        ControlMode::SteepestBaseline => {
            let mut best: Option<&PathGradient> = None;
            for p in &paths {
                // Paths are visited in id order, so strict `>` keeps the
                // lexicographically first among equals.
                let better = best.is_none_or(|b| {
                    p.magnitude > b.magnitude || (p.magnitude == b.magnitude && p.path.id() < b.path.id())
                });
                if better {
                    best = Some(p);
                }
            }
            if let Some(b) = best {
                diag.priority = vec![b.path.id()];
            }
            best.map(|b| b.vector.clone())
                .unwrap_or_else(|| Vector::zeros(current.len()))
        }
        ControlMode::Full | ControlMode::NoExploration => {
            let explore = config.mode == ControlMode::Full;
            layered_resolution(graph, &paths, &actuator, config, state, explore, &mut diag)?
        }
    };
    if !explore_active(state) {
        state.exploration.leave();
    }
    diag.mode = state.exploration.mode;
    diag.exploring_at = state.exploration.active_quantity.clone();
    if let Some(first) = diag.resolutions.first() {
        diag.cos_top2 = first.cos_top2;
        diag.priority = first.priority.clone();
    }

    let raw = Vector::from_fn(current.len(), |i, _| {
        let k = config.gain.get(i).copied().unwrap_or(config.gain[0]);
        current[i] - k * gradient[i]
    });
    let filtered = low_pass(&state.filter, &raw, config.lowpass_alpha)?;
    let action = saturate(filtered, config.max_speed);
    if !all_finite(&action) {
        return Err(Error::NonFiniteAction(state.ticks));
    }
    state.filter = action.clone();
    state.ticks += 1;
    diag.gradient = gradient;
    Ok((action, diag))
}

fn explore_active(state: &ResolverState) -> bool {
    state.exploration.is_exploring() && state.exploration.active_quantity.is_some()
}

/// Updates per-quantity motion averages from the stored estimates.
fn track_motion(graph: &Graph, paths: &[PathGradient], config: &ControllerConfig, state: &mut ResolverState) {
    let mut on_paths = BTreeSet::new();
    for p in paths {
        on_paths.extend(p.path.nodes.iter().cloned());
    }
    let alpha = config.explore.ema_alpha;
    for id in on_paths {
        let Some(node) = graph.node(&id) else { continue };
        let value = &node.quantity.value;
        if let Some(prev) = state.last_values.get(&id) {
            if prev.len() == value.len() {
                let step = value - prev;
                let ema = state
                    .motion
                    .entry(id.clone())
                    .or_insert_with(|| Vector::zeros(step.len()));
                *ema = &*ema * (1.0 - alpha) + &step * alpha;
                if state.exploration.active_quantity.as_deref() == Some(id.as_str()) {
                    state.exploration.max_step = state.exploration.max_step.max(step.norm());
                }
            }
        }
        state.last_values.insert(id, value.clone());
    }
}

/// Propagates goal gradients from the goal side towards the actuator,
/// resolving wherever two or more gradients meet at a quantity.
fn layered_resolution(
    graph: &Graph,
    paths: &[PathGradient],
    actuator: &str,
    config: &ControllerConfig,
    state: &mut ResolverState,
    explore: bool,
    diag: &mut TickDiagnostics,
) -> Result<Vector> {
    let dim = graph.node(actuator).map(|n| n.dim()).unwrap_or(0);
    let used: BTreeSet<&str> = paths
        .iter()
        .flat_map(|p| p.path.edges.iter().map(String::as_str))
        .collect();
    let mut items: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
    for p in paths {
        let origin = &p.path.origin;
        let id = path_id(&p.path.goal, origin, std::iter::empty());
        let bucket = items.entry(origin.clone()).or_default();
        if bucket.iter().any(|c| c.id == id) {
            continue;
        }
        let term = graph
            .goal(&p.path.goal)
            .and_then(|g| g.term(origin))
            .ok_or_else(|| Error::UnknownNode(p.path.goal.clone()))?;
        let x = graph.value(origin).ok_or_else(|| Error::UnknownNode(origin.clone()))?;
        bucket.push(Candidate::new(id, term.gradient(x)));
    }

    let mut order = graph.topological_ids();
    order.reverse();
    let mut exploration_seen = false;
    let mut result = Vector::zeros(dim);
    for q in order {
        let Some(candidates) = items.remove(q) else { continue };
        let out = if candidates.len() >= 2 {
            let previous = state.incumbents.get(q).cloned().unwrap_or_default();
            let resolved = order_and_project(&candidates, &previous, &config.resolver)?;
            state.incumbents.insert(q.to_string(), resolved.priority_ids.clone());
            let (cos, top, others) = strongest_two(&candidates, &config.resolver);
            diag.resolutions.push(Resolution {
                quantity: q.to_string(),
                priority: resolved.priority_ids.clone(),
                cos_top2: cos,
            });
            let mut g = resolved.combined.clone();
            if explore {
                let owns = state.exploration.active_quantity.as_deref() == Some(q);
                let may_enter = !state.exploration.is_exploring();
                if owns || may_enter {
                    let conflict = match (&top, others.is_empty()) {
                        (Some(t), false) => match detect_conflict(t, &others, &state.exploration) {
                            Ok(c) => c,
                            // Softmax scaling can push a weak gradient below
                            // the projection threshold; it cannot conflict.
                            Err(Error::DegenerateGradient(_)) => false,
                            Err(e) => return Err(e),
                        },
                        _ => false,
                    };
                    if conflict && may_enter {
                        state.exploration.enter(q);
                    } else if !conflict && owns {
                        state.exploration.leave();
                    }
                }
                if state.exploration.active_quantity.as_deref() == Some(q) {
                    exploration_seen = true;
                    if let Some(dominant) = resolved.top().filter(|d| d.original.norm() > config.resolver.eps_proj) {
                        state.exploration.ema = state
                            .motion
                            .get(q)
                            .cloned()
                            .unwrap_or_else(|| Vector::zeros(dominant.original.len()));
                        let u = exploration_direction(&dominant.original, &mut state.exploration)?;
                        let w = match config.resolver.softmax_mode {
                            SoftmaxMode::OrderingOnly => 1.0,
                            SoftmaxMode::OrderingAndScaling => dominant.weight,
                        };
                        g -= u * (w * dominant.original.norm());
                    }
                }
            }
            vec![Candidate::new(format!("[{q}]"), g)]
        } else {
            candidates
        };
        if q == actuator {
            for c in &out {
                result += &c.vector;
            }
            continue;
        }
        // Parallel edges between the same pair of quantities are parts of
        // one Jacobian and carry a single candidate.
        let mut by_source: BTreeMap<&str, (Vec<&str>, Matrix)> = BTreeMap::new();
        for edge in graph.edges() {
            if edge.target != q || !used.contains(edge.id.as_str()) {
                continue;
            }
            let jac = edge.jacobian(graph.states());
            match by_source.get_mut(edge.source.as_str()) {
                Some((ids, sum)) => {
                    ids.push(&edge.id);
                    *sum += jac;
                }
                None => {
                    by_source.insert(&edge.source, (vec![&edge.id], jac));
                }
            }
        }
        for (source, (ids, jac)) in by_source {
            let via = ids.join("+");
            let bucket = items.entry(source.to_string()).or_default();
            for c in &out {
                bucket.push(Candidate::new(format!("{}>{via}", c.id), jac.tr_mul(&c.vector)));
            }
        }
    }
    if explore && state.exploration.is_exploring() && !exploration_seen {
        state.exploration.leave();
    }
    Ok(result)
}

/// Cosine of the two strongest candidates plus the softmax-scaled top
/// gradient and the scaled remainder, strongest first.
fn strongest_two(candidates: &[Candidate], config: &ResolverConfig) -> (Option<f64>, Option<Vector>, Vec<Vector>) {
    let mut live: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.vector.norm() > config.eps_proj)
        .collect();
    live.sort_by(|a, b| {
        b.vector
            .norm()
            .total_cmp(&a.vector.norm())
            .then_with(|| a.id.cmp(&b.id))
    });
    if live.len() < 2 {
        return (None, live.first().map(|c| c.vector.clone()), Vec::new());
    }
    let weights = normalize_magnitudes(&live.iter().map(|c| c.vector.norm()).collect::<Vec<_>>(), config.tau);
    let scaled: Vec<Vector> = live.iter().zip(&weights).map(|(c, w)| &c.vector * *w).collect();
    let cos = cosine(&scaled[0], &scaled[1]);
    let mut iter = scaled.into_iter();
    let top = iter.next();
    (Some(cos), top, iter.collect())
}

/// One time step of a rollout as recorded for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub time: f64,
    pub agent: Vec<f64>,
    pub object: Vec<f64>,
    pub target: Vec<f64>,
    pub action: Vec<f64>,
    pub cos_top2: Option<f64>,
    pub priority: Vec<String>,
    pub exploring: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub mode: String,
    pub ticks: Vec<TickRecord>,
    pub success: bool,
    pub success_tick: Option<usize>,
}

impl RolloutRecord {
    pub fn agent_path(&self) -> impl Iterator<Item = &[f64]> {
        self.ticks.iter().map(|t| t.agent.as_slice())
    }
}

/// What the environment exposes for recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    pub agent: Vec<f64>,
    pub object: Vec<f64>,
    pub target: Vec<f64>,
    /// Task-level error used for the trace (not for control).
    pub cost: f64,
}

/// Ground-truth simulator driven by the controller.
pub trait Environment {
    type Observation;

    fn action_dim(&self) -> usize;
    fn observe(&mut self) -> Self::Observation;
    fn step(&mut self, action: &Vector, dt: f64);
    fn snapshot(&self) -> EnvSnapshot;
    /// Called once per tick after stepping; may track sustained success.
    fn check_success(&mut self) -> bool;
}

/// Owns the model's beliefs and produces a fresh graph per tick.
pub trait GraphFactory {
    type Observation;

    fn update(&mut self, observation: &Self::Observation, action: &Vector, dt: f64) -> Result<()>;
    /// Graph with the action installed and the forward pass applied.
    fn build(&self, action: &Vector) -> Result<Graph>;
}

/// Runs one closed-loop episode of at most `config.max_ticks` ticks.
pub fn run_rollout<F, E>(
    factory: &mut F,
    env: &mut E,
    config: &ControllerConfig,
    scenario_id: &str,
    seed: u64,
) -> Result<RolloutRecord>
where
    E: Environment,
    F: GraphFactory<Observation = E::Observation>,
{
    let mut explore = config.explore;
    explore.seed ^= seed;
    let config = ControllerConfig {
        explore,
        ..config.clone()
    };
    let mut action = Vector::zeros(env.action_dim());
    let mut state = ResolverState::new(&config, action.clone())?;
    let mut record = RolloutRecord {
        scenario_id: scenario_id.to_string(),
        seed,
        mode: format!("{:?}", config.mode),
        ticks: Vec::new(),
        success: false,
        success_tick: None,
    };
    for t in 0..config.max_ticks {
        let graph = factory.build(&action)?;
        let (next, diag) = tick(&graph, &config, &mut state)?;
        action = next;
        env.step(&action, config.dt);
        let obs = env.observe();
        factory.update(&obs, &action, config.dt)?;
        let snap = env.snapshot();
        record.ticks.push(TickRecord {
            tick: t,
            time: (t + 1) as f64 * config.dt,
            agent: snap.agent,
            object: snap.object,
            target: snap.target,
            action: action.iter().copied().collect(),
            cos_top2: diag.cos_top2,
            priority: diag.priority,
            exploring: diag.mode == Mode::Exploring,
            cost: snap.cost,
        });
        if env.check_success() {
            record.success = true;
            record.success_tick = Some(t);
            break;
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EstimatorNode, GoalSpec, Interconnection, Matrix, Quantity, States};

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    /// Two goals on separate 2D nodes that copy the actuator, so each path
    /// gradient at the actuator equals the goal gradient.
    fn two_path_graph(action: &[f64], g1: Vector, g2: Vector) -> Graph {
        let node = |id: &str| EstimatorNode::derived(Quantity::new(id, v(&[0.0, 0.0]), "").unwrap());
        let copy = |id: &str, t: &str| {
            Interconnection::new(
                id,
                "a",
                t,
                |st: &States| st.get("a").clone(),
                |_| Matrix::identity(2, 2),
            )
        };
        build_graph(
            vec![
                EstimatorNode::derived(Quantity::new("a", v(action), "m/s").unwrap()),
                node("x"),
                node("y"),
            ],
            vec![copy("ax", "x"), copy("ay", "y")],
            vec!["a".into()],
            vec![
                GoalSpec::single("g1", "x", |_| 0.0, move |_| g1.clone()),
                GoalSpec::single("g2", "y", |_| 0.0, move |_| g2.clone()),
            ],
        )
        .unwrap()
    }

    fn cfg(mode: ControlMode, alpha: f64) -> ControllerConfig {
        ControllerConfig {
            gain: vec![1.0, 1.0],
            lowpass_alpha: alpha,
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn zero_gradients_keep_the_action() {
        let g = two_path_graph(&[0.4, -0.2], v(&[0.0, 0.0]), v(&[0.0, 0.0]));
        let config = cfg(ControlMode::Full, 1.0);
        let mut s = ResolverState::new(&config, v(&[0.4, -0.2])).unwrap();
        let (a, _) = tick(&g, &config, &mut s).unwrap();
        assert_eq!(a, v(&[0.4, -0.2]));
    }

    #[test]
    fn single_path_full_equals_steepest() {
        let g = two_path_graph(&[0.0, 0.0], v(&[0.3, 0.1]), v(&[0.0, 0.0]));
        let mut actions = Vec::new();
        for mode in [
            ControlMode::Full,
            ControlMode::SteepestBaseline,
            ControlMode::NoExploration,
        ] {
            let config = cfg(mode, 0.3);
            let mut s = ResolverState::new(&config, v(&[0.0, 0.0])).unwrap();
            actions.push(tick(&g, &config, &mut s).unwrap().0);
        }
        assert_eq!(actions[0], actions[1]);
        assert_eq!(actions[0], actions[2]);
    }

    #[test]
    fn opposing_pair_steepest_follows_tie_break_and_full_annihilates() {
        // Two ticks each. Oracle: by hand, SteepestBaseline picks g1 (first
        // id) so a = -k*alpha*(1,0) per tick; Full follows g1 scaled by its
        // softmax weight 1/2 and annihilates g2, then explores alongside the dominant gradient.
        let grad = v(&[1.0, 0.0]);
        let steep = cfg(ControlMode::SteepestBaseline, 1.0);
        let mut s = ResolverState::new(&steep, v(&[0.0, 0.0])).unwrap();
        let mut a = v(&[0.0, 0.0]);
        for _ in 0..2 {
            let g = two_path_graph(a.as_slice(), grad.clone(), -&grad);
            let (next, d) = tick(&g, &steep, &mut s).unwrap();
            assert_eq!(d.priority, ["g1@x>ax"]);
            a = next;
        }
        assert_eq!(a, v(&[-2.0, 0.0]));

        let full = cfg(ControlMode::NoExploration, 1.0);
        let mut s = ResolverState::new(&full, v(&[0.0, 0.0])).unwrap();
        let g = two_path_graph(&[0.0, 0.0], grad.clone(), -&grad);
        let (next, d) = tick(&g, &full, &mut s).unwrap();
        assert_eq!(d.resolutions[0].priority, ["g1@x>ax"]);
        assert!((next - v(&[-0.5, 0.0])).norm() < 1e-12);
        assert!((d.cos_top2.unwrap() + 1.0).abs() < 1e-12);

        let explore = cfg(ControlMode::Full, 1.0);
        let mut s = ResolverState::new(&explore, v(&[0.0, 0.0])).unwrap();
        let (next, d) = tick(&g, &explore, &mut s).unwrap();
        assert_eq!(d.mode, Mode::Exploring);
        assert!((next[0] + 0.5).abs() < 1e-12 && (next[1].abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn low_pass_cases() {
        assert_eq!(
            low_pass(&v(&[1.0, 1.0]), &v(&[3.0, -1.0]), 1.0).unwrap(),
            v(&[3.0, -1.0])
        );
        assert_eq!(low_pass(&v(&[0.0, 0.0]), &v(&[2.0, 0.0]), 0.5).unwrap(), v(&[1.0, 0.0]));
        let mut f = v(&[5.0, -5.0]);
        let r = v(&[1.0, 2.0]);
        for _ in 0..200 {
            f = low_pass(&f, &r, 0.3).unwrap();
        }
        assert!((f - r).norm() < 1e-12);
        assert!(low_pass(&v(&[0.0]), &v(&[0.0, 1.0]), 0.5).is_err());
    }

    #[test]
    fn saturation_bounds_the_action() {
        let g = two_path_graph(&[0.0, 0.0], v(&[10.0, 0.0]), v(&[0.0, 0.0]));
        let config = ControllerConfig {
            max_speed: Some(0.5),
            ..cfg(ControlMode::Full, 1.0)
        };
        let mut s = ResolverState::new(&config, v(&[0.0, 0.0])).unwrap();
        let (a, _) = tick(&g, &config, &mut s).unwrap();
        assert!((a.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_action_is_reported() {
        let g = two_path_graph(&[0.0, 0.0], v(&[f64::INFINITY, 0.0]), v(&[0.0, 0.0]));
        let config = cfg(ControlMode::SteepestBaseline, 1.0);
        let mut s = ResolverState::new(&config, v(&[0.0, 0.0])).unwrap();
        assert!(tick(&g, &config, &mut s).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = ControllerConfig {
            lowpass_alpha: 0.0,
            ..Default::default()
        };
        assert!(ResolverState::new(&bad, v(&[0.0, 0.0])).is_err());
        let bad = ControllerConfig {
            gain: vec![1.0, -1.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
