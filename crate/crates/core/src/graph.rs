//! The world model: recursive estimators coupled by differentiable,
//! state-dependent interconnections, with goals attached to estimator states.
//!
//! Edges point from the quantity closer to actuation (`source`) towards the
//! quantity it influences (`target`). Each edge carries a forward map that
//! predicts the target from the current states and the jacobian
//! `∂target/∂source`. Goal gradients flow against the edge direction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type PredictFn = Arc<dyn Fn(&Vector, Option<&Matrix>, &Vector, f64) -> (Vector, Option<Matrix>) + Send + Sync>;
pub type CorrectFn = Arc<dyn Fn(&Vector, Option<&Matrix>, &Vector) -> (Vector, Option<Matrix>) + Send + Sync>;
pub type ForwardFn = Arc<dyn Fn(&States) -> Vector + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&States) -> Matrix + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Symmetry tolerance for covariances.
pub const COV_SYMMETRY_TOL: f64 = 1e-9;

/// A named real vector estimated by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub id: String,
    pub value: Vector,
    pub units: String,
}

impl Quantity {
    pub fn new(id: impl Into<String>, value: Vector, units: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if value.is_empty() {
            return Err(Error::InvalidArgument(format!("quantity `{id}` has dim 0")));
        }
        if !all_finite(&value) {
            return Err(Error::NonFiniteState(id));
        }
        Ok(Self {
            id,
            value,
            units: units.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }
}

/// One recursive estimator.
#[derive(Clone)]
pub struct EstimatorNode {
    pub quantity: Quantity,
    pub covariance: Option<Matrix>,
    predict: Option<PredictFn>,
    correct: Option<CorrectFn>,
}

impl fmt::Debug for EstimatorNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatorNode")
            .field("quantity", &self.quantity)
            .field("covariance", &self.covariance)
            .finish_non_exhaustive()
    }
}

impl EstimatorNode {
    /// Point estimate: identity prediction, measurements substitute the state.
    pub fn point(quantity: Quantity) -> Self {
        Self {
            quantity,
            covariance: None,
            predict: None,
            correct: Some(Arc::new(|_, cov, z| (z.clone(), cov.cloned()))),
        }
    }

    /// Node that is only ever written by interconnections or by its owner.
    pub fn derived(quantity: Quantity) -> Self {
        Self {
            quantity,
            covariance: None,
            predict: None,
            correct: None,
        }
    }

    pub fn gaussian(quantity: Quantity, covariance: Matrix) -> Result<Self> {
        let n = quantity.dim();
        if covariance.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: quantity.id.clone(),
                expected: (n, n),
                got: covariance.shape(),
            });
        }
        check_psd(&quantity.id, &covariance)?;
        Ok(Self {
            quantity,
            covariance: Some(covariance),
            predict: None,
            correct: None,
        })
    }

    pub fn with_predict(
        mut self,
        f: impl Fn(&Vector, Option<&Matrix>, &Vector, f64) -> (Vector, Option<Matrix>) + Send + Sync + 'static,
    ) -> Self {
        self.predict = Some(Arc::new(f));
        self
    }

    pub fn with_correct(
        mut self,
        f: impl Fn(&Vector, Option<&Matrix>, &Vector) -> (Vector, Option<Matrix>) + Send + Sync + 'static,
    ) -> Self {
        self.correct = Some(Arc::new(f));
        self
    }

    pub fn id(&self) -> &str {
        &self.quantity.id
    }

    pub fn dim(&self) -> usize {
        self.quantity.dim()
    }
}

/// Measurement model for an extended-Kalman correction.
pub struct MeasurementModel<'a> {
    pub predict: &'a dyn Fn(&Vector) -> Vector,
    pub jacobian: &'a dyn Fn(&Vector) -> Matrix,
    pub noise: &'a Matrix,
    /// Maps a raw innovation into its canonical range (angle wrapping).
    pub residual: &'a dyn Fn(Vector) -> Vector,
}

/// EKF correction in Joseph form, which keeps the covariance PSD.
pub fn ekf_correct(mean: &Vector, cov: &Matrix, z: &Vector, model: &MeasurementModel<'_>) -> (Vector, Matrix) {
    let h = (model.jacobian)(mean);
    let innovation = (model.residual)(z - (model.predict)(mean));
    let s = &h * cov * h.transpose() + model.noise;
    let Some(s_inv) = s.clone().try_inverse() else {
        return (mean.clone(), cov.clone());
    };
    let gain = cov * h.transpose() * s_inv;
    let mean = mean + &gain * innovation;
    let n = cov.nrows();
    let i_kh = Matrix::identity(n, n) - &gain * &h;
    let cov = &i_kh * cov * i_kh.transpose() + &gain * model.noise * gain.transpose();
    (mean, symmetrize(&cov))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Read-only view of every node value, indexed by node id.
#[derive(Debug, Clone)]
pub struct States {
    index: Arc<BTreeMap<String, usize>>,
    values: Vec<Vector>,
}

impl States {
    pub fn get(&self, id: &str) -> &Vector {
        match self.try_get(id) {
            Some(v) => v,
            None => panic!("unknown node `{id}` in state lookup"),
        }
    }

    pub fn try_get(&self, id: &str) -> Option<&Vector> {
        self.index.get(id).map(|&i| &self.values[i])
    }

    /// Copy of the states with one node replaced.
    pub fn with(&self, id: &str, value: Vector) -> States {
        let mut out = self.clone();
        if let Some(&i) = self.index.get(id) {
            out.values[i] = value;
        }
        out
    }

    fn set(&mut self, i: usize, value: Vector) {
        self.values[i] = value;
    }
}

/// A differentiable coupling between two quantities.
#[derive(Clone)]
pub struct Interconnection {
    pub id: String,
    pub source: String,
    pub target: String,
    forward: ForwardFn,
    jacobian: JacobianFn,
}

impl fmt::Debug for Interconnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Interconnection({}: {} -> {})", self.id, self.source, self.target)
    }
}

impl Interconnection {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
        forward: impl Fn(&States) -> Vector + Send + Sync + 'static,
        jacobian: impl Fn(&States) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            forward: Arc::new(forward),
            jacobian: Arc::new(jacobian),
        }
    }

    /// Constructor for edges whose closures are already shared.
    pub fn from_parts(
        id: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
        forward: ForwardFn,
        jacobian: JacobianFn,
    ) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            forward,
            jacobian,
        }
    }

    pub fn forward(&self, states: &States) -> Vector {
        (self.forward)(states)
    }

    pub fn jacobian(&self, states: &States) -> Matrix {
        (self.jacobian)(states)
    }
}

/// One additive term of a goal, defined on a single node.
#[derive(Clone)]
pub struct GoalTerm {
    pub node: String,
    cost: CostFn,
    gradient: GradientFn,
}

impl GoalTerm {
    pub fn new(
        node: impl Into<String>,
        cost: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            node: node.into(),
            cost: Arc::new(cost),
            gradient: Arc::new(gradient),
        }
    }

    pub fn cost(&self, x: &Vector) -> f64 {
        (self.cost)(x)
    }

    /// Row vector `∂g/∂x`, stored as a column.
    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}

/// A scalar goal. Separable goals such as `‖μ‖ + Tr(Σ)` list one term per
/// node so that each term seeds its own gradient paths.
#[derive(Clone)]
pub struct GoalSpec {
    pub id: String,
    pub terms: Vec<GoalTerm>,
}

impl fmt::Debug for GoalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<&str> = self.terms.iter().map(|t| t.node.as_str()).collect();
        write!(f, "GoalSpec({} on {:?})", self.id, nodes)
    }
}

impl GoalSpec {
    pub fn new(id: impl Into<String>, terms: Vec<GoalTerm>) -> Self {
        Self { id: id.into(), terms }
    }

    pub fn single(
        id: impl Into<String>,
        node: impl Into<String>,
        cost: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self::new(id, vec![GoalTerm::new(node, cost, gradient)])
    }

    pub fn term(&self, node: &str) -> Option<&GoalTerm> {
        self.terms.iter().find(|t| t.node == node)
    }
}

/// Result of one estimator update for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeUpdate {
    pub id: String,
    pub value: Vector,
    pub covariance: Option<Matrix>,
}

/// Validated, immutable snapshot of the world model.
#[derive(Clone)]
pub struct Graph {
    nodes: Vec<EstimatorNode>,
    edges: Vec<Interconnection>,
    actuators: Vec<String>,
    goals: Vec<GoalSpec>,
    index: Arc<BTreeMap<String, usize>>,
    states: States,
    topo: Vec<usize>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.iter().map(|n| n.id()).collect::<Vec<_>>())
            .field("edges", &self.edges)
            .field("actuators", &self.actuators)
            .field("goals", &self.goals)
            .finish()
    }
}

/// Validates references and jacobian shapes and returns the graph.
pub fn build_graph(
    nodes: Vec<EstimatorNode>,
    edges: Vec<Interconnection>,
    actuators: Vec<String>,
    goals: Vec<GoalSpec>,
) -> Result<Graph> {
    let mut index = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id().to_string(), i).is_some() {
            return Err(Error::DuplicateId(n.id().to_string()));
        }
    }
    let mut edge_ids = BTreeSet::new();
    for e in &edges {
        if !edge_ids.insert(e.id.as_str()) {
            return Err(Error::DuplicateId(e.id.clone()));
        }
        for end in [&e.source, &e.target] {
            if !index.contains_key(end) {
                return Err(Error::UnknownNode(end.clone()));
            }
        }
    }
    for a in &actuators {
        if !index.contains_key(a) {
            return Err(Error::UnknownNode(a.clone()));
        }
    }
    for g in &goals {
        for t in &g.terms {
            if !index.contains_key(&t.node) {
                return Err(Error::UnknownNode(t.node.clone()));
            }
        }
    }
    let index = Arc::new(index);
    let states = States {
        index: index.clone(),
        values: nodes.iter().map(|n| n.quantity.value.clone()).collect(),
    };
    for e in &edges {
        let (s, t) = (index[&e.source], index[&e.target]);
        let expected = (nodes[t].dim(), nodes[s].dim());
        let got = e.jacobian(&states).shape();
        if got != expected {
            return Err(Error::DimensionMismatch {
                context: e.id.clone(),
                expected,
                got,
            });
        }
        let fwd = e.forward(&states).len();
        if fwd != nodes[t].dim() {
            return Err(Error::DimensionMismatch {
                context: e.id.clone(),
                expected: (nodes[t].dim(), 1),
                got: (fwd, 1),
            });
        }
    }
    for g in &goals {
        for term in &g.terms {
            let n = &nodes[index[&term.node]];
            let got = term.gradient(&n.quantity.value).len();
            if got != n.dim() {
                return Err(Error::DimensionMismatch {
                    context: g.id.clone(),
                    expected: (1, n.dim()),
                    got: (1, got),
                });
            }
        }
    }
    let topo = topological_order(&nodes, &edges, &index)?;
    Ok(Graph {
        nodes,
        edges,
        actuators,
        goals,
        index,
        states,
        topo,
    })
}

fn topological_order(
    nodes: &[EstimatorNode],
    edges: &[Interconnection],
    index: &BTreeMap<String, usize>,
) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in edges {
        let (s, t) = (index[&e.source], index[&e.target]);
        out[s].push(t);
        indegree[t] += 1;
    }
    // Kahn's algorithm, lowest index first for a stable order.
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &t in &out[i] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.insert(t);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(Error::Cyclic(nodes[stuck].id().to_string()));
    }
    Ok(order)
}

impl Graph {
    pub fn nodes(&self) -> &[EstimatorNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Interconnection] {
        &self.edges
    }

    pub fn actuators(&self) -> &[String] {
        &self.actuators
    }

    pub fn goals(&self) -> &[GoalSpec] {
        &self.goals
    }

    pub fn goal(&self, id: &str) -> Option<&GoalSpec> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&EstimatorNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn edge(&self, id: &str) -> Option<&Interconnection> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn states(&self) -> &States {
        &self.states
    }

    /// Current value of a node (after any forward pass).
    pub fn value(&self, id: &str) -> Option<&Vector> {
        self.states.try_get(id)
    }

    /// Node ids ordered from actuation towards goals.
    pub fn topological_ids(&self) -> Vec<&str> {
        self.topo.iter().map(|&i| self.nodes[i].id()).collect()
    }

    /// Overwrites a node value in the snapshot.
    pub fn set_value(&mut self, id: &str, value: Vector) -> Result<()> {
        let &i = self.index.get(id).ok_or_else(|| Error::UnknownNode(id.to_string()))?;
        if value.len() != self.nodes[i].dim() {
            return Err(Error::DimensionMismatch {
                context: id.to_string(),
                expected: (self.nodes[i].dim(), 1),
                got: (value.len(), 1),
            });
        }
        self.states.set(i, value);
        Ok(())
    }

    /// Recomputes every node with incoming edges from its first incoming
    /// edge, in topological order. Nodes without incoming edges keep their
    /// values. All edges into one node are expected to share a forward map.
    pub fn forward_pass(&mut self) -> Result<()> {
        for k in 0..self.topo.len() {
            let i = self.topo[k];
            let id = self.nodes[i].id().to_string();
            let Some(edge) = self.edges.iter().find(|e| e.target == id) else {
                continue;
            };
            let v = edge.forward(&self.states);
            if !all_finite(&v) {
                return Err(Error::NonFiniteState(id));
            }
            self.states.set(i, v);
        }
        Ok(())
    }

    /// One predict/correct cycle over every estimator node. Node values are
    /// the stored estimates, not forward-pass predictions.
    pub fn estimator_step(
        &self,
        measurements: &BTreeMap<String, Vector>,
        action: &Vector,
        dt: f64,
    ) -> Result<Vec<NodeUpdate>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        for id in measurements.keys() {
            if !self.contains(id) {
                return Err(Error::UnknownNode(id.clone()));
            }
        }
        let mut updates = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (mut value, mut cov) = (node.quantity.value.clone(), node.covariance.clone());
            if let Some(predict) = &node.predict {
                (value, cov) = predict(&value, cov.as_ref(), action, dt);
            }
            if let (Some(correct), Some(z)) = (&node.correct, measurements.get(node.id())) {
                (value, cov) = correct(&value, cov.as_ref(), z);
            }
            if value.len() != node.dim() {
                return Err(Error::DimensionMismatch {
                    context: node.id().to_string(),
                    expected: (node.dim(), 1),
                    got: (value.len(), 1),
                });
            }
            if !all_finite(&value) || cov.as_ref().is_some_and(|c| c.iter().any(|x| !x.is_finite())) {
                return Err(Error::NonFiniteState(node.id().to_string()));
            }
            let cov = cov.map(|c| symmetrize(&c));
            updates.push(NodeUpdate {
                id: node.id().to_string(),
                value,
                covariance: cov,
            });
        }
        Ok(updates)
    }

    /// Applies estimator results to the stored estimates.
    pub fn apply_updates(&mut self, updates: &[NodeUpdate]) -> Result<()> {
        for u in updates {
            let &i = self.index.get(&u.id).ok_or_else(|| Error::UnknownNode(u.id.clone()))?;
            self.nodes[i].quantity.value = u.value.clone();
            self.nodes[i].covariance = u.covariance.clone();
            self.states.set(i, u.value.clone());
        }
        Ok(())
    }
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Rejects asymmetric or indefinite covariances.
pub fn check_psd(id: &str, m: &Matrix) -> Result<()> {
    if (m - m.transpose()).amax() > COV_SYMMETRY_TOL {
        return Err(Error::InvalidArgument(format!("covariance of `{id}` is not symmetric")));
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    if eig.iter().any(|&l| l < -COV_SYMMETRY_TOL) {
        return Err(Error::InvalidArgument(format!("covariance of `{id}` is not PSD")));
    }
    Ok(())
}
