//! Goal-to-actuator path enumeration and chain-rule gradient propagation.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{all_finite, Graph, Vector};

/// Upper bound on the number of edges in an enumerated path.
pub const MAX_PATH_LEN: usize = 8;

/// One chain of interconnections from a goal term back to a quantity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GradientPath {
    pub goal: String,
    /// Node the goal term is defined on.
    pub origin: String,
    /// Edge ids, goal side first.
    pub edges: Vec<String>,
    /// Visited nodes, `origin` first and `terminal` last.
    pub nodes: Vec<String>,
    pub terminal: String,
}

impl GradientPath {
    /// Stable identifier, e.g. `g1@mu_tar>rob_mu>a_rob`.
    pub fn id(&self) -> String {
        path_id(&self.goal, &self.origin, self.edges.iter().map(String::as_str))
    }
}

impl fmt::Display for GradientPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

pub(crate) fn path_id<'a>(goal: &str, origin: &str, edges: impl Iterator<Item = &'a str>) -> String {
    let mut id = format!("{goal}@{origin}");
    for e in edges {
        id.push('>');
        id.push_str(e);
    }
    id
}

/// A path gradient expressed at the path's terminal quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGradient {
    pub path: GradientPath,
    pub vector: Vector,
    pub magnitude: f64,
}

impl PathGradient {
    pub fn new(path: GradientPath, vector: Vector) -> Self {
        let magnitude = vector.norm();
        Self {
            path,
            vector,
            magnitude,
        }
    }
}

/// All simple paths of at most `max_len` edges from any term of `goal` to
/// `terminal`, sorted lexicographically by edge id sequence.
pub fn enumerate_paths(graph: &Graph, goal: &str, terminal: &str, max_len: usize) -> Result<Vec<GradientPath>> {
    let goal_spec = graph.goal(goal).ok_or_else(|| Error::UnknownNode(goal.to_string()))?;
    if !graph.contains(terminal) {
        return Err(Error::UnknownNode(terminal.to_string()));
    }
    let mut out = Vec::new();
    for term in &goal_spec.terms {
        let mut nodes = vec![term.node.clone()];
        let mut edges = Vec::new();
        dfs(graph, terminal, max_len, &mut nodes, &mut edges, &mut |nodes, edges| {
            out.push(GradientPath {
                goal: goal.to_string(),
                origin: nodes[0].clone(),
                edges: edges.to_vec(),
                nodes: nodes.to_vec(),
                terminal: terminal.to_string(),
            });
        });
    }
    if out.is_empty() {
        return Err(Error::NoPath {
            goal: goal.to_string(),
            terminal: terminal.to_string(),
        });
    }
    out.sort_by(|a, b| a.edges.cmp(&b.edges).then_with(|| a.origin.cmp(&b.origin)));
    Ok(out)
}

fn dfs(
    graph: &Graph,
    terminal: &str,
    max_len: usize,
    nodes: &mut Vec<String>,
    edges: &mut Vec<String>,
    emit: &mut dyn FnMut(&[String], &[String]),
) {
    let here = nodes.last().cloned().unwrap_or_default();
    if here == terminal {
        emit(nodes, edges);
        return;
    }
    if edges.len() == max_len {
        return;
    }
    for e in graph.edges().iter().filter(|e| e.target == here) {
        if nodes.contains(&e.source) {
            continue;
        }
        nodes.push(e.source.clone());
        edges.push(e.id.clone());
        dfs(graph, terminal, max_len, nodes, edges, emit);
        nodes.pop();
        edges.pop();
    }
}

/// Chain-rule product of the goal gradient and each edge jacobian along the
/// path, evaluated at the graph's current states.
pub fn propagate(graph: &Graph, path: &GradientPath) -> Result<PathGradient> {
    let term = graph
        .goal(&path.goal)
        .and_then(|g| g.term(&path.origin))
        .ok_or_else(|| Error::UnknownNode(path.goal.clone()))?;
    let x = graph
        .value(&path.origin)
        .ok_or_else(|| Error::UnknownNode(path.origin.clone()))?;
    let mut row = term.gradient(x);
    for id in &path.edges {
        let edge = graph.edge(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
        row = edge.jacobian(graph.states()).tr_mul(&row);
    }
    if !all_finite(&row) {
        return Err(Error::NonFiniteGradient(path.id()));
    }
    Ok(PathGradient::new(path.clone(), row))
}

/// Central finite-difference estimate of the same path derivative. The
/// terminal value is perturbed and pushed back up the path through each
/// edge's forward map, holding every off-path state fixed.
pub fn fd_oracle(graph: &Graph, path: &GradientPath, h: f64) -> Result<PathGradient> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let term = graph
        .goal(&path.goal)
        .and_then(|g| g.term(&path.origin))
        .ok_or_else(|| Error::UnknownNode(path.goal.clone()))?;
    let base = graph
        .value(&path.terminal)
        .ok_or_else(|| Error::UnknownNode(path.terminal.clone()))?
        .clone();
    let composed = |x: &Vector| -> Result<f64> {
        let mut states = graph.states().with(&path.terminal, x.clone());
        for id in path.edges.iter().rev() {
            let edge = graph.edge(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
            let y = edge.forward(&states);
            states = states.with(&edge.target, y);
        }
        Ok(term.cost(states.get(&path.origin)))
    };
    let mut grad = Vector::zeros(base.len());
    for j in 0..base.len() {
        let step = h * (1.0 + base[j].abs());
        let mut plus = base.clone();
        plus[j] += step;
        let mut minus = base.clone();
        minus[j] -= step;
        grad[j] = (composed(&plus)? - composed(&minus)?) / (2.0 * step);
    }
    Ok(PathGradient::new(path.clone(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EstimatorNode, GoalSpec, Interconnection, Matrix, Quantity, States};

    fn node(id: &str, v: &[f64]) -> EstimatorNode {
        EstimatorNode::derived(Quantity::new(id, Vector::from_row_slice(v), "").unwrap())
    }

    fn linear(id: &str, s: &str, t: &str, m: Matrix) -> Interconnection {
        let (src, m2) = (s.to_string(), m.clone());
        Interconnection::new(id, s, t, move |st: &States| &m2 * st.get(&src), move |_| m.clone())
    }

    fn chain(a: Matrix, b: Matrix, goal: GoalSpec) -> Graph {
        // g on x1 (dim 1) <- x2 (dim 2) <- act (dim 2)
        build_graph(
            vec![node("x1", &[0.3]), node("x2", &[0.2, -0.1]), node("act", &[0.5, 0.4])],
            vec![linear("e1", "x2", "x1", a), linear("e2", "act", "x2", b)],
            vec!["act".into()],
            vec![goal],
        )
        .unwrap()
    }

    fn quadratic_goal(node: &str) -> GoalSpec {
        GoalSpec::single("g", node, |x| x.norm_squared(), |x| x * 2.0)
    }

    #[test]
    fn linear_chain_has_one_path() {
        let g = chain(Matrix::identity(1, 2), Matrix::identity(2, 2), quadratic_goal("x1"));
        let paths = enumerate_paths(&g, "g", "act", MAX_PATH_LEN).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].edges, ["e1", "e2"]);
        assert_eq!(paths[0].id(), "g@x1>e1>e2");
    }

    #[test]
    fn diamond_has_two_paths() {
        let i = || Matrix::identity(1, 1);
        let g = build_graph(
            vec![
                node("top", &[0.0]),
                node("l", &[0.0]),
                node("r", &[0.0]),
                node("a", &[0.0]),
            ],
            vec![
                linear("al", "a", "l", i()),
                linear("ar", "a", "r", i()),
                linear("lt", "l", "top", i()),
                linear("rt", "r", "top", i()),
            ],
            vec!["a".into()],
            vec![quadratic_goal("top")],
        )
        .unwrap();
        let paths = enumerate_paths(&g, "g", "a", MAX_PATH_LEN).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].edges, ["lt", "al"]);
        assert_eq!(paths[1].edges, ["rt", "ar"]);
    }

    #[test]
    fn missing_route_is_no_path() {
        let g = build_graph(
            vec![node("x", &[0.0]), node("a", &[0.0])],
            vec![],
            vec!["a".into()],
            vec![quadratic_goal("x")],
        )
        .unwrap();
        assert!(matches!(
            enumerate_paths(&g, "g", "a", MAX_PATH_LEN),
            Err(Error::NoPath { .. })
        ));
    }

    #[test]
    fn length_bound_is_respected() {
        let g = chain(Matrix::identity(1, 2), Matrix::identity(2, 2), quadratic_goal("x1"));
        assert!(enumerate_paths(&g, "g", "act", 1).is_err());
        assert_eq!(enumerate_paths(&g, "g", "act", 2).unwrap().len(), 1);
    }

    #[test]
    fn identity_jacobians_pass_goal_gradient_through() {
        let g = build_graph(
            vec![node("x", &[1.0, 2.0]), node("a", &[1.0, 2.0])],
            vec![linear("e", "a", "x", Matrix::identity(2, 2))],
            vec!["a".into()],
            vec![quadratic_goal("x")],
        )
        .unwrap();
        let p = &enumerate_paths(&g, "g", "a", MAX_PATH_LEN).unwrap()[0];
        let pg = propagate(&g, p).unwrap();
        assert_eq!(pg.vector, Vector::from_row_slice(&[2.0, 4.0]));
        let fd = fd_oracle(&g, p, 1e-6).unwrap();
        assert!((fd.vector - pg.vector).amax() < 1e-7);
    }

    #[test]
    fn chain_product_matches_finite_differences() {
        let a = Matrix::from_row_slice(1, 2, &[0.7, -1.3]);
        let b = Matrix::from_row_slice(2, 2, &[0.2, 1.1, -0.5, 0.9]);
        let g = chain(
            a.clone(),
            b.clone(),
            GoalSpec::single("g", "x1", |x| x[0].sin(), |x| Vector::from_row_slice(&[x[0].cos()])),
        );
        let p = &enumerate_paths(&g, "g", "act", MAX_PATH_LEN).unwrap()[0];
        let pg = propagate(&g, p).unwrap();
        let expected = (Matrix::from_row_slice(1, 1, &[0.3f64.cos()]) * &a * &b).transpose();
        assert!((&pg.vector - expected.column(0)).amax() < 1e-14);
        // Forward pass of this chain is not applied, so FD is taken around the
        // stored states: compose from `act` = (0.5, 0.4).
        let mut g2 = g.clone();
        g2.forward_pass().unwrap();
        let p2 = propagate(&g2, p).unwrap();
        let fd = fd_oracle(&g2, p, 1e-6).unwrap();
        let rel = (&fd.vector - &p2.vector).norm() / p2.vector.norm();
        assert!(rel < 1e-5, "rel {rel}");
    }

    #[test]
    fn zero_goal_gradient_gives_zero_vector() {
        let g = chain(
            Matrix::identity(1, 2),
            Matrix::identity(2, 2),
            GoalSpec::single("g", "x1", |_| 0.0, |_| Vector::zeros(1)),
        );
        let p = &enumerate_paths(&g, "g", "act", MAX_PATH_LEN).unwrap()[0];
        let pg = propagate(&g, p).unwrap();
        assert_eq!(pg.magnitude, 0.0);
        assert_eq!(pg.vector, Vector::zeros(2));
    }

    #[test]
    fn nan_gradient_is_reported() {
        let g = chain(
            Matrix::identity(1, 2),
            Matrix::identity(2, 2),
            GoalSpec::single("g", "x1", |_| 0.0, |_| Vector::from_row_slice(&[f64::NAN])),
        );
        let p = &enumerate_paths(&g, "g", "act", MAX_PATH_LEN).unwrap()[0];
        assert!(matches!(propagate(&g, p), Err(Error::NonFiniteGradient(_))));
    }

    #[test]
    fn fd_oracle_rejects_non_positive_step() {
        let g = chain(Matrix::identity(1, 2), Matrix::identity(2, 2), quadratic_goal("x1"));
        let p = &enumerate_paths(&g, "g", "act", MAX_PATH_LEN).unwrap()[0];
        assert!(fd_oracle(&g, p, 0.0).is_err());
    }
}
