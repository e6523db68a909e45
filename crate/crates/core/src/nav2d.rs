//! Planar point robot with bearing-only target sensing among polygonal
//! obstacles.
//!
//! The model tracks the target relative to the robot as a Gaussian
//! `(μ_tar, Σ_tar)`, its own position by odometry, and its clearance
//! `x_obs`. Each tick a graph is built whose node values are predictions for
//! the candidate velocity over a short horizon:
//!
//! ```text
//!   a ──► x_rob ──► μ_tar   (g1: ‖μ‖)
//!            ├────► Σ_tar   (g1: Tr Σ, via the next bearing update)
//!            └────► x_obs   (g2: collision likelihood)
//! ```

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::{EnvSnapshot, Environment, GraphFactory};
use crate::error::{Error, Result};
use crate::geometry::{nearest_boundary, wrap_angle, Polygon, Vec2};
use crate::graph::{
    build_graph, ekf_correct, EstimatorNode, GoalSpec, GoalTerm, Graph, Interconnection, Matrix, MeasurementModel,
    Quantity, States, Vector,
};

pub const SUCCESS_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavNoise {
    /// Bearing noise (rad).
    pub bearing: f64,
    /// Range noise (m).
    pub range: f64,
    /// Velocity noise (m/s).
    pub action: f64,
    /// Odometry noise (m per tick); zero means exact odometry.
    pub odometry: f64,
}

impl Default for NavNoise {
    fn default() -> Self {
        Self {
            bearing: 0.02,
            range: 0.01,
            action: 0.01,
            odometry: 0.0,
        }
    }
}

impl NavNoise {
    pub fn none() -> Self {
        Self {
            bearing: 0.0,
            range: 0.0,
            action: 0.0,
            odometry: 0.0,
        }
    }
}

/// Ground truth of the planar world.
#[derive(Debug, Clone)]
pub struct NavWorld {
    pub agent: Vec2,
    pub target: Vec2,
    pub obstacles: Vec<Polygon>,
    pub bounds: [[f64; 2]; 2],
    pub noise: NavNoise,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavObservation {
    pub z_tar: f64,
    pub z_obs: f64,
    /// Reported displacement since the previous step.
    pub odometry: Vec2,
    pub collided: bool,
}

impl NavWorld {
    pub fn new(
        agent: Vec2,
        target: Vec2,
        obstacles: Vec<Polygon>,
        bounds: [[f64; 2]; 2],
        noise: NavNoise,
        seed: u64,
    ) -> Result<Self> {
        for p in &obstacles {
            p.validate()?;
        }
        let w = Self {
            agent,
            target,
            obstacles,
            bounds,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for (name, p) in [("agent", agent), ("target", target)] {
            if !w.in_bounds(&p) || w.collided_at(&p) {
                return Err(Error::InvalidArgument(format!("{name} outside free space")));
            }
        }
        Ok(w)
    }

    pub fn in_bounds(&self, p: &Vec2) -> bool {
        let [lo, hi] = self.bounds;
        p.x >= lo[0] && p.x <= hi[0] && p.y >= lo[1] && p.y <= hi[1]
    }

    pub fn collided_at(&self, p: &Vec2) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Unsigned distance from `p` to the nearest obstacle boundary.
    pub fn clearance(&self, p: &Vec2) -> f64 {
        nearest_boundary(&self.obstacles, p)
            .map(|n| n.signed_distance.abs())
            .unwrap_or(f64::INFINITY)
    }

    fn gauss(&mut self, std: f64) -> f64 {
        if std > 0.0 {
            Normal::new(0.0, std).map(|n| n.sample(&mut self.rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// Noisy measurements at the current state with zero odometry.
    pub fn measure(&mut self) -> NavObservation {
        let d = self.target - self.agent;
        let z_tar = wrap_angle(d.y.atan2(d.x) + self.gauss(self.noise.bearing));
        let clear = self.clearance(&self.agent);
        let z_obs = if clear.is_finite() {
            (clear + self.gauss(self.noise.range)).max(0.0)
        } else {
            clear
        };
        NavObservation {
            z_tar,
            z_obs,
            odometry: Vec2::zeros(),
            collided: self.collided_at(&self.agent),
        }
    }
}

/// Integrates the commanded velocity and returns fresh measurements.
pub fn env_step(world: &mut NavWorld, velocity: &Vec2, dt: f64) -> Result<NavObservation> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    let std = world.noise.action;
    let v = velocity + Vec2::new(world.gauss(std), world.gauss(std));
    let before = world.agent;
    let [lo, hi] = world.bounds;
    let next = before + v * dt;
    world.agent = Vec2::new(next.x.clamp(lo[0], hi[0]), next.y.clamp(lo[1], hi[1]));
    let mut obs = world.measure();
    let odo_std = world.noise.odometry;
    obs.odometry = world.agent - before + Vec2::new(world.gauss(odo_std), world.gauss(odo_std));
    Ok(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavModelConfig {
    /// Look-ahead over which a velocity is turned into a predicted position (s).
    pub horizon: f64,
    /// Bearing variance assumed by the filter (rad²).
    pub bearing_var: f64,
    /// Random-walk growth of the target covariance (m²/s).
    pub process_q: f64,
    /// Length scale of the collision likelihood (m).
    pub sigma_rep: f64,
}

impl Default for NavModelConfig {
    fn default() -> Self {
        Self {
            horizon: 0.5,
            bearing_var: 0.02 * 0.02,
            process_q: 1e-6,
            sigma_rep: 0.5,
        }
    }
}

/// Robot-side estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NavBelief {
    pub x_rob: Vec2,
    pub x_obs: f64,
    /// Target mean relative to the robot.
    pub mu: Vec2,
    pub sigma: Matrix2<f64>,
}

impl NavBelief {
    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }

    /// Shifts the relative target by the robot's own motion and inflates Σ.
    pub fn predict(&mut self, odometry: &Vec2, dt: f64, q: f64) {
        self.x_rob += odometry;
        self.mu -= odometry;
        self.sigma += Matrix2::identity() * (q * dt);
    }

    pub fn correct(&mut self, obs: &NavObservation, bearing_var: f64) {
        let mean = Vector::from_column_slice(self.mu.as_slice());
        let cov = Matrix::from_column_slice(2, 2, self.sigma.as_slice());
        let z = Vector::from_element(1, obs.z_tar);
        let noise = Matrix::from_element(1, 1, bearing_var);
        let predict = |m: &Vector| Vector::from_element(1, m[1].atan2(m[0]));
        let jacobian = |m: &Vector| {
            let h = bearing_row(&Vec2::new(m[0], m[1]));
            Matrix::from_row_slice(1, 2, &[h.x, h.y])
        };
        let residual = |r: Vector| r.map(wrap_angle);
        let model = MeasurementModel {
            predict: &predict,
            jacobian: &jacobian,
            noise: &noise,
            residual: &residual,
        };
        let (m, c) = ekf_correct(&mean, &cov, &z, &model);
        self.mu = Vec2::new(m[0], m[1]);
        self.sigma = Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]);
        if obs.z_obs.is_finite() {
            self.x_obs = obs.z_obs;
        }
    }
}

/// `∂ atan2(d_y, d_x) / ∂d`.
pub fn bearing_row(d: &Vec2) -> Vec2 {
    let r2 = d.norm_squared().max(1e-12);
    Vec2::new(-d.y, d.x) / r2
}

/// Target covariance after one bearing update taken with relative target
/// offset `d`.
pub fn bearing_posterior(sigma: &Matrix2<f64>, d: &Vec2, bearing_var: f64) -> Matrix2<f64> {
    let h = bearing_row(d);
    let u = sigma * h;
    let s = h.dot(&u) + bearing_var;
    sigma - u * u.transpose() / s
}

/// Jacobian of the row-major flattened posterior with respect to `d` (4×2).
pub fn bearing_posterior_jacobian(sigma: &Matrix2<f64>, d: &Vec2, bearing_var: f64) -> Matrix {
    let r2 = d.norm_squared().max(1e-12);
    let h = bearing_row(d);
    let u = sigma * h;
    let s = h.dot(&u) + bearing_var;
    let rot = Matrix2::new(0.0, -1.0, 1.0, 0.0);
    // ∂h/∂d = (R/r²)(I − 2 d dᵀ/r²)
    let dh = rot * (Matrix2::identity() - d * d.transpose() * (2.0 / r2)) / r2;
    let mut out = Matrix::zeros(4, 2);
    for k in 0..2 {
        let dhk: Vector2<f64> = dh.column(k).into();
        let du = sigma * dhk;
        let ds = 2.0 * u.dot(&dhk);
        let dpost = -(du * u.transpose() + u * du.transpose()) / s + u * u.transpose() * (ds / (s * s));
        for r in 0..2 {
            for c in 0..2 {
                out[(2 * r + c, k)] = dpost[(r, c)];
            }
        }
    }
    out
}

fn flat(m: &Matrix2<f64>) -> Vector {
    Vector::from_row_slice(&[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

fn v2(v: &Vector) -> Vec2 {
    Vec2::new(v[0], v[1])
}

/// `‖μ‖ + Tr Σ`, with `Σ` given row-major.
pub fn nav_goal_g1(mu: &Vec2, sigma: &Matrix2<f64>) -> f64 {
    mu.norm() + sigma.trace()
}

pub fn nav_goal_g1_grad_mu(mu: &Vec2) -> Vec2 {
    let n = mu.norm();
    if n > 0.0 {
        mu / n
    } else {
        Vec2::zeros()
    }
}

/// Collision likelihood `exp(−x_obs/σ_rep)`.
pub fn nav_goal_g2(x_obs: f64, sigma_rep: f64) -> f64 {
    (-x_obs / sigma_rep).exp()
}

pub fn nav_goal_g2_grad(x_obs: f64, sigma_rep: f64) -> f64 {
    -nav_goal_g2(x_obs, sigma_rep) / sigma_rep
}

/// Graph for the current belief with `action` installed and predictions
/// propagated.
pub fn build_nav_graph(belief: &NavBelief, map: &[Polygon], action: &Vec2, config: &NavModelConfig) -> Result<Graph> {
    let q = |id: &str, v: Vector, u: &str| Quantity::new(id, v, u);
    let x0 = belief.x_rob;
    let mu0 = belief.mu;
    let sigma0 = belief.sigma;
    let th = config.horizon;
    let r = config.bearing_var;
    let nodes = vec![
        EstimatorNode::derived(q("a", Vector::from_column_slice(action.as_slice()), "m/s")?),
        EstimatorNode::point(q("x_rob", Vector::from_column_slice(x0.as_slice()), "m")?),
        EstimatorNode::derived(q("mu_tar", Vector::from_column_slice(mu0.as_slice()), "m")?),
        EstimatorNode::derived(q("sigma_tar", flat(&sigma0), "m^2")?),
        EstimatorNode::point(q("x_obs", Vector::from_element(1, belief.x_obs), "m")?),
    ];
    let obstacles = map.to_vec();
    let obstacles_j = map.to_vec();
    let rel = move |st: &States| mu0 - (v2(st.get("x_rob")) - x0);
    let edges = vec![
        Interconnection::new(
            "a_rob",
            "a",
            "x_rob",
            move |st| Vector::from_column_slice((x0 + v2(st.get("a")) * th).as_slice()),
            move |_| Matrix::identity(2, 2) * th,
        ),
        Interconnection::new(
            "rob_mu",
            "x_rob",
            "mu_tar",
            move |st| Vector::from_column_slice(rel(st).as_slice()),
            |_| -Matrix::identity(2, 2),
        ),
        Interconnection::new(
            "rob_sigma",
            "x_rob",
            "sigma_tar",
            move |st| flat(&bearing_posterior(&sigma0, &rel(st), r)),
            move |st| -bearing_posterior_jacobian(&sigma0, &rel(st), r),
        ),
        Interconnection::new(
            "rob_obs",
            "x_rob",
            "x_obs",
            move |st| {
                let d = nearest_boundary(&obstacles, &v2(st.get("x_rob")))
                    .map(|n| n.signed_distance)
                    .unwrap_or(1e6);
                Vector::from_element(1, d)
            },
            move |st| {
                let g = nearest_boundary(&obstacles_j, &v2(st.get("x_rob")))
                    .map(|n| n.gradient)
                    .unwrap_or_else(Vec2::zeros);
                Matrix::from_row_slice(1, 2, &[g.x, g.y])
            },
        ),
    ];
    let rep = config.sigma_rep;
    let goals = vec![
        GoalSpec::new(
            "g1",
            vec![
                GoalTerm::new(
                    "mu_tar",
                    |m| v2(m).norm(),
                    |m| Vector::from_column_slice(nav_goal_g1_grad_mu(&v2(m)).as_slice()),
                ),
                GoalTerm::new(
                    "sigma_tar",
                    |s| s[0] + s[3],
                    |_| Vector::from_row_slice(&[1.0, 0.0, 0.0, 1.0]),
                ),
            ],
        ),
        GoalSpec::single(
            "g2",
            "x_obs",
            move |x| nav_goal_g2(x[0], rep),
            move |x| Vector::from_element(1, nav_goal_g2_grad(x[0], rep)),
        ),
    ];
    let mut graph = build_graph(nodes, edges, vec!["a".into()], goals)?;
    graph.forward_pass()?;
    Ok(graph)
}

/// A nav2d problem instance; also the scenario file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavScenario {
    pub id: String,
    pub seed: u64,
    pub bounds: [[f64; 2]; 2],
    pub obstacles: Vec<Polygon>,
    pub agent: [f64; 2],
    pub target: [f64; 2],
    #[serde(default)]
    pub noise: NavNoise,
    /// Initial target variance per axis (m²).
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
}

fn default_sigma0() -> f64 {
    0.25
}

impl NavScenario {
    pub fn world(&self) -> Result<NavWorld> {
        NavWorld::new(
            Vec2::from(self.agent),
            Vec2::from(self.target),
            self.obstacles.clone(),
            self.bounds,
            self.noise,
            self.seed,
        )
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = NavNoise::none();
        self
    }

    /// Ground truth plus a model whose mean is offset by one draw from the
    /// prior.
    pub fn instantiate(&self, config: NavModelConfig) -> Result<(NavModel, NavEnv)> {
        let mut world = self.world()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0b5e);
        let sd = self.sigma0.sqrt();
        let offset = if sd > 0.0 {
            let n = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Vec2::new(n.sample(&mut rng), n.sample(&mut rng))
        } else {
            Vec2::zeros()
        };
        let obs = world.measure();
        let belief = NavBelief {
            x_rob: world.agent,
            x_obs: obs.z_obs,
            mu: world.target - world.agent + offset,
            sigma: Matrix2::identity() * self.sigma0,
        };
        let model = NavModel {
            belief,
            map: self.obstacles.clone(),
            config,
        };
        Ok((model, NavEnv::new(world)))
    }
}

/// The U-shaped trap: the cup opens away from the agent and holds the target.
pub fn u_obstacle(center: Vec2, rot: f64) -> Polygon {
    let local = Polygon {
        vertices: vec![
            [-1.5, -2.5],
            [2.5, -2.5],
            [2.5, -1.5],
            [-0.5, -1.5],
            [-0.5, 1.5],
            [2.5, 1.5],
            [2.5, 2.5],
            [-1.5, 2.5],
        ],
    };
    local.transformed(rot, center)
}

/// One member of the U-trap family, randomized by `seed`.
pub fn u_trap_scenario(seed: u64, noise: NavNoise) -> NavScenario {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot: f64 = rng.random_range(-0.25..0.25);
    let center = Vec2::new(5.0, 5.0);
    let r = crate::geometry::rotation(rot);
    let target_local = Vec2::new(rng.random_range(0.3..1.3), rng.random_range(-0.6..0.6));
    let agent_local = Vec2::new(rng.random_range(-4.2..-3.3), rng.random_range(-1.2..1.2));
    let target = center + r * target_local;
    let agent = center + r * agent_local;
    NavScenario {
        id: format!("nav-utrap-{seed}"),
        seed,
        bounds: [[0.0, 0.0], [10.0, 10.0]],
        obstacles: vec![u_obstacle(center, rot)],
        agent: [agent.x, agent.y],
        target: [target.x, target.y],
        noise,
        sigma0: default_sigma0(),
    }
}

/// A single convex block, optionally between agent and target.
pub fn convex_scenario(seed: u64, blocking: bool, noise: NavNoise) -> NavScenario {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cy: f64 = rng.random_range(4.0..6.0);
    let (bx, by) = if blocking {
        (5.0, cy)
    } else {
        (5.0, if cy > 5.0 { 8.5 } else { 1.5 })
    };
    let block = Polygon {
        vertices: vec![
            [bx - 0.5, by - 0.8],
            [bx + 0.5, by - 0.8],
            [bx + 0.5, by + 0.8],
            [bx - 0.5, by + 0.8],
        ],
    };
    NavScenario {
        id: format!("nav-convex-{seed}"),
        seed,
        bounds: [[0.0, 0.0], [10.0, 10.0]],
        obstacles: vec![block],
        agent: [rng.random_range(1.0..2.0), rng.random_range(3.5..6.5)],
        target: [rng.random_range(8.0..9.0), rng.random_range(3.5..6.5)],
        noise,
        sigma0: default_sigma0(),
    }
}

/// Belief owner that rebuilds the graph every tick.
#[derive(Debug, Clone)]
pub struct NavModel {
    pub belief: NavBelief,
    pub map: Vec<Polygon>,
    pub config: NavModelConfig,
}

impl GraphFactory for NavModel {
    type Observation = NavObservation;

    fn update(&mut self, obs: &NavObservation, _action: &Vector, dt: f64) -> Result<()> {
        self.belief.predict(&obs.odometry, dt, self.config.process_q);
        self.belief.correct(obs, self.config.bearing_var);
        if !(self.belief.mu.iter().all(|x| x.is_finite()) && self.belief.sigma.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFiniteState("mu_tar".into()));
        }
        Ok(())
    }

    fn build(&self, action: &Vector) -> Result<Graph> {
        build_nav_graph(&self.belief, &self.map, &v2(action), &self.config)
    }
}

/// Environment wrapper that also tracks collisions.
#[derive(Debug, Clone)]
pub struct NavEnv {
    pub world: NavWorld,
    pub collided: bool,
    last: Option<NavObservation>,
}

impl NavEnv {
    pub fn new(world: NavWorld) -> Self {
        Self {
            world,
            collided: false,
            last: None,
        }
    }
}

impl Environment for NavEnv {
    type Observation = NavObservation;

    fn action_dim(&self) -> usize {
        2
    }

    fn observe(&mut self) -> NavObservation {
        match self.last.take() {
            Some(o) => o,
            None => self.world.measure(),
        }
    }

    fn step(&mut self, action: &Vector, dt: f64) {
        // dt is validated by the controller config.
        if let Ok(obs) = env_step(&mut self.world, &v2(action), dt) {
            self.collided |= obs.collided;
            self.last = Some(obs);
        }
    }

    fn snapshot(&self) -> EnvSnapshot {
        let w = &self.world;
        EnvSnapshot {
            agent: vec![w.agent.x, w.agent.y],
            object: vec![],
            target: vec![w.target.x, w.target.y],
            cost: (w.target - w.agent).norm(),
        }
    }

    fn check_success(&mut self) -> bool {
        (self.world.target - self.world.agent).norm() < SUCCESS_RADIUS
    }
}
