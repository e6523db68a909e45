//! Escape from irresolvable conflicts by moving through the nullspace of the
//! dominant gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Vector;
use crate::resolver::{projector_from, DEFAULT_EPS_PROJ};

/// Below this norm the motion history carries no nullspace information.
pub const EPS_DIR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreConfig {
    pub enter: f64,
    pub exit: f64,
    pub lambda: f64,
    pub ema_alpha: f64,
    pub seed: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            enter: -0.6,
            exit: -0.4,
            lambda: 3.0,
            ema_alpha: 0.1,
            seed: 0,
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.enter < self.exit) {
            return Err(Error::InvalidArgument(format!(
                "enter threshold {} must be below exit threshold {}",
                self.enter, self.exit
            )));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ema_alpha {} not in (0, 1]",
                self.ema_alpha
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Pursuit,
    Exploring,
}

#[derive(Debug, Clone)]
pub struct ExplorationState {
    pub mode: Mode,
    /// Exponential moving average of the monitored quantity's per-tick steps.
    pub ema: Vector,
    pub ema_alpha: f64,
    pub enter_thresh: f64,
    pub exit_thresh: f64,
    pub dominance: f64,
    pub active_quantity: Option<String>,
    /// Largest step norm ever fed to the average.
    pub max_step: f64,
    rng: ChaCha8Rng,
}

impl ExplorationState {
    pub fn new(config: &ExploreConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            mode: Mode::Pursuit,
            ema: Vector::zeros(dim),
            ema_alpha: config.ema_alpha,
            enter_thresh: config.enter,
            exit_thresh: config.exit,
            dominance: config.lambda,
            active_quantity: None,
            max_step: 0.0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn is_exploring(&self) -> bool {
        self.mode == Mode::Exploring
    }

    pub fn enter(&mut self, quantity: &str) {
        self.mode = Mode::Exploring;
        self.active_quantity = Some(quantity.to_string());
    }

    pub fn leave(&mut self) {
        self.mode = Mode::Pursuit;
        self.active_quantity = None;
    }
}

pub fn cosine(a: &Vector, b: &Vector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Whether a conflict between `top` and `others[0]` is (still) present.
///
/// Entering needs near-opposition of the two strongest gradients without one
/// already dominating all others by `λ`. Once exploring, the conflict
/// persists until the cosine rises above the exit threshold or `top`
/// dominates every other gradient by `λ`.
pub fn detect_conflict(top: &Vector, others: &[Vector], state: &ExplorationState) -> Result<bool> {
    let second = others.first().ok_or(Error::EmptyInput)?;
    for g in [top, second] {
        let n = g.norm();
        if !(n > DEFAULT_EPS_PROJ) {
            return Err(Error::DegenerateGradient(n));
        }
    }
    let cos = cosine(top, second);
    let strongest_other = others.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let dominated = top.norm() > state.dominance * strongest_other;
    Ok(match state.mode {
        Mode::Pursuit => cos < state.enter_thresh && !dominated,
        Mode::Exploring => cos <= state.exit_thresh && !dominated,
    })
}

/// Unit direction in the nullspace of `dominant` closest to recent motion.
/// With no usable history a seeded random nullspace direction is drawn; in
/// two dimensions that is a random sign on the left normal of `dominant`.
pub fn exploration_direction(dominant: &Vector, state: &mut ExplorationState) -> Result<Vector> {
    let projector = projector_from(dominant, DEFAULT_EPS_PROJ)?;
    if state.ema.len() == dominant.len() {
        let biased = projector.apply(&state.ema);
        let n = biased.norm();
        if n >= EPS_DIR {
            return Ok(biased / n);
        }
    }
    let u = if dominant.len() == 2 {
        let sign = if state.rng.random::<bool>() { 1.0 } else { -1.0 };
        let d = dominant / dominant.norm();
        Vector::from_row_slice(&[-d[1] * sign, d[0] * sign])
    } else {
        loop {
            let raw = Vector::from_fn(dominant.len(), |_, _| state.rng.sample::<f64, _>(StandardNormal));
            let p = projector.apply(&raw);
            let n = p.norm();
            if n > EPS_DIR {
                break p / n;
            }
        }
    };
    Ok(u)
}

/// `ema ← (1 − α)·ema + α·step`.
pub fn update_ema(state: &mut ExplorationState, step: &Vector) {
    if state.ema.len() != step.len() {
        state.ema = Vector::zeros(step.len());
    }
    state.ema = &state.ema * (1.0 - state.ema_alpha) + step * state.ema_alpha;
    state.max_step = state.max_step.max(step.norm());
}
