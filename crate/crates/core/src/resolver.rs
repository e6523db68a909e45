//! Conflict resolution between gradients that meet at one quantity.
//!
//! Candidates are ranked greedily by their magnitude after projection into
//! the nullspace of everything already selected. Each selected gradient is
//! projected through the product of all higher-priority projectors, so the
//! selected components are mutually orthogonal and their sum never works
//! against a higher-priority objective to first order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Matrix, Vector};

pub const DEFAULT_MARGIN: f64 = 0.10;
pub const DEFAULT_TAU: f64 = 0.8;
pub const DEFAULT_EPS_PROJ: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SoftmaxMode {
    /// Softmax weights only rank candidates.
    OrderingOnly,
    /// Softmax weights also scale each selected component in the sum.
    #[default]
    OrderingAndScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolverConfig {
    pub margin: f64,
    pub tau: f64,
    pub eps_proj: f64,
    pub softmax_mode: SoftmaxMode,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            tau: DEFAULT_TAU,
            eps_proj: DEFAULT_EPS_PROJ,
            softmax_mode: SoftmaxMode::OrderingAndScaling,
        }
    }
}

/// Rank-deficient orthogonal projector `I − v vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: Matrix,
}

impl Projector {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// Projector onto the orthogonal complement of `vector`.
pub fn projector_from(vector: &Vector, eps: f64) -> Result<Projector> {
    let norm = vector.norm();
    if !(norm > eps) {
        return Err(Error::DegenerateGradient(norm));
    }
    let v = vector / norm;
    let n = v.len();
    Ok(Projector {
        matrix: Matrix::identity(n, n) - &v * v.transpose(),
    })
}

/// `softmax(m / τ)`, computed with the max subtracted for stability.
pub fn normalize_magnitudes(magnitudes: &[f64], tau: f64) -> Vec<f64> {
    if magnitudes.is_empty() {
        return Vec::new();
    }
    let top = magnitudes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = magnitudes.iter().map(|m| ((m - top) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One gradient competing at a quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub vector: Vector,
}

impl Candidate {
    pub fn new(id: impl Into<String>, vector: Vector) -> Self {
        Self { id: id.into(), vector }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEntry {
    pub id: String,
    pub original: Vector,
    /// The candidate after projection through all higher priorities.
    pub projected: Vector,
    /// Softmax weight of the unprojected magnitude among all candidates.
    pub weight: f64,
    /// What this entry adds to `combined`.
    pub contribution: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSet {
    /// Selected candidates in descending priority.
    pub ordered: Vec<ResolvedEntry>,
    pub combined: Vector,
    pub priority_ids: Vec<String>,
}

impl ResolvedSet {
    pub fn top(&self) -> Option<&ResolvedEntry> {
        self.ordered.first()
    }
}

/// Greedy projection-aware ordering with hysteresis against `previous_order`.
///
/// At rank `i` the candidate with the largest softmax-normalized projected
/// magnitude wins, unless `previous_order[i]` is still live and the winner's
/// projected magnitude does not exceed it by the factor `1 + margin`.
/// Exactly equal magnitudes fall back to the lexicographically smallest id.
pub fn order_and_project(
    candidates: &[Candidate],
    previous_order: &[String],
    config: &ResolverConfig,
) -> Result<ResolvedSet> {
    let first = candidates.first().ok_or(Error::EmptyInput)?;
    let dim = first.vector.len();
    for c in candidates {
        if c.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                context: c.id.clone(),
                expected: (dim, 1),
                got: (c.vector.len(), 1),
            });
        }
    }
    let mut remaining: Vec<usize> = (0..candidates.len()).collect();
    remaining.sort_by(|&a, &b| candidates[a].id.cmp(&candidates[b].id));

    // Weights come from the unprojected magnitudes; later ranks are chosen by
    // projected magnitude, for which the softmax argmax is the plain argmax.
    let original: Vec<f64> = candidates.iter().map(|c| c.vector.norm()).collect();
    let nonzero: Vec<usize> = (0..candidates.len())
        .filter(|&j| original[j] > config.eps_proj)
        .collect();
    let nonzero_weights = normalize_magnitudes(&nonzero.iter().map(|&j| original[j]).collect::<Vec<_>>(), config.tau);
    let mut base_weight = vec![0.0; candidates.len()];
    for (k, &j) in nonzero.iter().enumerate() {
        base_weight[j] = nonzero_weights[k];
    }

    let mut nullspace = Matrix::identity(dim, dim);
    let mut ordered = Vec::new();
    while !remaining.is_empty() && ordered.len() < dim {
        let projected: Vec<Vector> = remaining.iter().map(|&j| &nullspace * &candidates[j].vector).collect();
        let live: Vec<usize> = (0..remaining.len())
            .filter(|&k| projected[k].norm() > config.eps_proj)
            .collect();
        if live.is_empty() {
            break;
        }
        let magnitudes: Vec<f64> = live.iter().map(|&k| projected[k].norm()).collect();
        let weights = normalize_magnitudes(&magnitudes, config.tau);

        let mut best = 0;
        for k in 1..live.len() {
            if weights[k] > weights[best] {
                best = k;
            }
        }
        if let Some(incumbent) = previous_order.get(ordered.len()) {
            let pos = live.iter().position(|&k| &candidates[remaining[k]].id == incumbent);
            if let Some(inc) = pos {
                if magnitudes[best] <= (1.0 + config.margin) * magnitudes[inc] {
                    best = inc;
                }
            }
        }

        let k = live[best];
        let j = remaining[k];
        let p = projected[k].clone();
        let weight = base_weight[j];
        let contribution = match config.softmax_mode {
            SoftmaxMode::OrderingOnly => p.clone(),
            SoftmaxMode::OrderingAndScaling => &p * weight,
        };
        nullspace *= projector_from(&p, 0.0)?.into_matrix();
        ordered.push(ResolvedEntry {
            id: candidates[j].id.clone(),
            original: candidates[j].vector.clone(),
            projected: p,
            weight,
            contribution,
        });
        remaining.remove(k);
    }

    let mut combined = Vector::zeros(dim);
    for e in &ordered {
        combined += &e.contribution;
    }
    let priority_ids = ordered.iter().map(|e| e.id.clone()).collect();
    Ok(ResolvedSet {
        ordered,
        combined,
        priority_ids,
    })
}

/// The conflict-free sum.
pub fn combine(resolved: &ResolvedSet) -> Vector {
    resolved.combined.clone()
}
