//! Random model states and finite-difference checks shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use aicon::geometry::{nearest_boundary, Vec2};
use aicon::graph::{Graph, Matrix, Vector};
use aicon::nav2d::{build_nav_graph, u_trap_scenario, NavBelief, NavModelConfig, NavNoise};
use aicon::pusht::{
    build_push_graph, corners, polygon_from, radius_of_gyration, registration, t_template, Pose, PushBelief,
    PushModelConfig,
};
use nalgebra::Matrix2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_REL_TOL: f64 = 1e-5;
/// One-sided differences disagreeing by more than this (relative) mark a
/// switch point: a kink where the model is only piecewise differentiable.
pub const KINK_REL_TOL: f64 = 1e-3;

fn step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1e-6)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdTally {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl FdTally {
    pub fn merge(&mut self, o: FdTally) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.worst = self.worst.max(o.worst);
    }
}

/// Central, forward and backward difference jacobians of `f` at `x`.
fn differences(f: &dyn Fn(&Vector) -> Vector, x: &Vector) -> (Matrix, Matrix, Matrix) {
    let y0 = f(x);
    let (m, n) = (y0.len(), x.len());
    let (mut c, mut fw, mut bw) = (Matrix::zeros(m, n), Matrix::zeros(m, n), Matrix::zeros(m, n));
    for j in 0..n {
        let h = step(x[j]);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        let (yp, ym) = (f(&xp), f(&xm));
        c.set_column(j, &((&yp - &ym) / (2.0 * h)));
        fw.set_column(j, &((&yp - &y0) / h));
        bw.set_column(j, &((&y0 - &ym) / h));
    }
    (c, fw, bw)
}

/// Compares `analytic` against central differences of `f`, skipping kinks.
pub fn check_jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector, analytic: &Matrix) -> FdTally {
    let (c, fw, bw) = differences(f, x);
    let scale = c.norm();
    if rel((&fw - &bw).norm(), scale) > KINK_REL_TOL {
        return FdTally {
            skipped: 1,
            ..Default::default()
        };
    }
    FdTally {
        checked: 1,
        skipped: 0,
        worst: rel((analytic - &c).norm(), scale),
    }
}

/// Every edge jacobian of `graph` at its current states. Parallel edges
/// between the same pair of nodes share one forward map and split its
/// jacobian, so their jacobians are summed before comparison.
pub fn check_edges(graph: &Graph) -> FdTally {
    let states = graph.states();
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, e) in graph.edges().iter().enumerate() {
        groups.entry((e.source.clone(), e.target.clone())).or_default().push(i);
    }
    let mut tally = FdTally::default();
    for ((source, _), idx) in groups {
        let edges = graph.edges();
        let first = &edges[idx[0]];
        let analytic = idx
            .iter()
            .map(|&i| edges[i].jacobian(states))
            .fold(None::<Matrix>, |acc, j| Some(acc.map_or(j.clone(), |a| a + j)))
            .unwrap();
        let f = |x: &Vector| first.forward(&states.with(&source, x.clone()));
        tally.merge(check_jacobian(&f, states.get(&source), &analytic));
    }
    tally
}

/// Every goal term gradient of `graph` against differences of its cost.
pub fn check_goals(graph: &Graph) -> FdTally {
    let mut tally = FdTally::default();
    for g in graph.goals() {
        for t in &g.terms {
            let x = graph.value(&t.node).unwrap();
            let f = |x: &Vector| Vector::from_element(1, t.cost(x));
            let analytic = Matrix::from_row_slice(1, x.len(), t.gradient(x).as_slice());
            tally.merge(check_jacobian(&f, x, &analytic));
        }
    }
    tally
}

/// A nav2d graph at a random belief around the U-trap.
pub fn random_nav_graph(rng: &mut ChaCha8Rng) -> Graph {
    let sc = u_trap_scenario(rng.random_range(0..1000), NavNoise::none());
    let x_rob = loop {
        let p = Vec2::new(rng.random_range(1.0..9.0), rng.random_range(1.0..9.0));
        if !sc.obstacles.iter().any(|o| o.contains(&p)) {
            break p;
        }
    };
    let a: f64 = rng.random_range(0.05..1.0);
    let b = rng.random_range(0.05..1.0);
    let c = rng.random_range(-0.9..0.9) * (a * b).sqrt();
    let belief = NavBelief {
        x_rob,
        x_obs: nearest_boundary(&sc.obstacles, &x_rob).unwrap().signed_distance,
        mu: Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)),
        sigma: Matrix2::new(a, c, c, b),
    };
    let action = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    build_nav_graph(&belief, &sc.obstacles, &action, &NavModelConfig::default()).unwrap()
}

/// A pushT graph with the pusher at a random point near the block.
pub fn random_push_graph(rng: &mut ChaCha8Rng) -> Graph {
    let t = t_template();
    let pose = Pose::new(
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(-3.0..3.0),
    );
    let kp = corners(&t, &pose);
    let body = polygon_from(&kp);
    let cfg = PushModelConfig::default();
    let pusher = loop {
        let p = pose.position() + Vec2::new(rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25));
        let clear = nearest_boundary(std::slice::from_ref(&body), &p)
            .unwrap()
            .signed_distance;
        if clear > cfg.radius {
            break p;
        }
    };
    let belief = PushBelief {
        x_pusher: pusher,
        x_obj: registration(&kp, &t).unwrap(),
        x_keypoints: kp,
    };
    let target = Pose::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-3.0..3.0),
    );
    let speed = rng.random_range(0.0..0.1);
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let action = Vec2::new(speed * dir.cos(), speed * dir.sin());
    build_push_graph(&belief, &target, &action, &cfg, radius_of_gyration(&t)).unwrap()
}
