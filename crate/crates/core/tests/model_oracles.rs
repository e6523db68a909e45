mod common;

use std::collections::BTreeSet;

use aicon::geometry::{closest_on_segment, rotation, Vec2};
use aicon::gradient::{enumerate_paths, propagate, MAX_PATH_LEN};
use aicon::graph::{Graph, Matrix};
use aicon::pusht::{
    corners, dynamics_model, push_env_step, radius_of_gyration, registration, t_template, Contact, Pose,
    PushModelConfig, PushNoise, PushPhysics, PushWorld,
};
use common::{random_nav_graph, random_push_graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Every simple edge sequence from `terminal` up to a node carrying a term
/// of `goal`, found by breadth-first growth along edge direction.
fn walks_by_bfs(g: &Graph, goal: &str, terminal: &str) -> BTreeSet<Vec<String>> {
    let origins: BTreeSet<&str> = g.goal(goal).unwrap().terms.iter().map(|t| t.node.as_str()).collect();
    let mut found = BTreeSet::new();
    let mut frontier: Vec<(Vec<String>, Vec<String>)> = vec![(vec![terminal.to_string()], vec![])];
    for _ in 0..=MAX_PATH_LEN {
        let mut next = Vec::new();
        for (nodes, edges) in frontier {
            let here = nodes.last().unwrap();
            if origins.contains(here.as_str()) {
                found.insert(edges.iter().rev().cloned().collect::<Vec<_>>());
            }
            if edges.len() == MAX_PATH_LEN {
                continue;
            }
            for e in g
                .edges()
                .iter()
                .filter(|e| &e.source == here && !nodes.contains(&e.target))
            {
                let mut n = nodes.clone();
                n.push(e.target.clone());
                let mut es = edges.clone();
                es.push(e.id.clone());
                next.push((n, es));
            }
        }
        frontier = next;
    }
    found
}

#[test]
fn path_enumeration_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for g in [random_nav_graph(&mut rng), random_push_graph(&mut rng)] {
        for goal in g.goals() {
            for act in g.actuators() {
                let paths = enumerate_paths(&g, &goal.id, act, MAX_PATH_LEN).unwrap();
                let listed: Vec<Vec<String>> = paths.iter().map(|p| p.edges.clone()).collect();
                let mut sorted = listed.clone();
                sorted.sort();
                assert_eq!(listed, sorted, "paths of {} not in edge order", goal.id);
                let set: BTreeSet<Vec<String>> = listed.into_iter().collect();
                assert_eq!(set, walks_by_bfs(&g, &goal.id, act), "goal {}", goal.id);
            }
        }
    }
}

#[test]
fn path_gradient_is_independent_of_product_grouping() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        for g in [random_nav_graph(&mut rng), random_push_graph(&mut rng)] {
            for goal in g.goals() {
                for p in enumerate_paths(&g, &goal.id, "a", MAX_PATH_LEN).unwrap() {
                    let term = goal.term(&p.origin).unwrap();
                    let row = term.gradient(g.value(&p.origin).unwrap());
                    // Multiply the jacobians together first, innermost last.
                    let mut chain: Option<Matrix> = None;
                    for id in p.edges.iter().rev() {
                        let j = g.edge(id).unwrap().jacobian(g.states());
                        chain = Some(match chain {
                            None => j,
                            Some(c) => j * c,
                        });
                    }
                    let grouped = chain.unwrap().tr_mul(&row);
                    let forward = propagate(&g, &p).unwrap().vector;
                    let scale = forward.norm().max(grouped.norm()).max(1e-300);
                    assert!((grouped - &forward).norm() <= 1e-12 * scale.max(1.0), "{}", p.id());
                }
            }
        }
    }
}

#[test]
fn model_pushes_the_same_way_as_the_physics() {
    let template = t_template();
    let cfg = PushModelConfig::default();
    let rot_scale = radius_of_gyration(&template);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut checked, mut agree) = (0, 0);
    while checked < 1000 {
        let object = Pose::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-3.0..3.0),
        );
        let kp = corners(&template, &object);
        let n = kp.len();
        let side = rng.random_range(0..n);
        let (a, b) = (kp[side], kp[(side + 1) % n]);
        let e = b - a;
        // Outward normal of a counter-clockwise polygon.
        let normal = Vec2::new(e.y, -e.x).normalize();
        let on_side = a + e * rng.random_range(0.3..0.7);
        let r = cfg.radius;
        let pusher = on_side + normal * (r + 1e-4);
        let velocity = rotation(rng.random_range(-0.5..0.5)) * (-normal * 0.1);

        // Keep only configurations where the disk can reach this side alone.
        let after = pusher + velocity * 0.02;
        let lone = (0..n).filter(|&i| i != side).all(|i| {
            let (c, _) = closest_on_segment(&after, &kp[i], &kp[(i + 1) % n]);
            (after - c).norm() > r + 0.003
        });
        if !lone {
            continue;
        }
        checked += 1;

        let mut world = PushWorld::new(pusher, object, object, PushPhysics::default(), PushNoise::none(), 0).unwrap();
        let before = world.object.position();
        push_env_step(&mut world, &velocity, 0.02).unwrap();
        let moved = world.object.position() - before;

        let contact = Contact {
            point: on_side,
            normal,
            likelihood: 1.0,
            probe: pusher - normal * r,
            velocity,
        };
        let twist = dynamics_model(&[contact], &object, &cfg, rot_scale);
        if Vec2::new(twist.x, twist.y).dot(&moved) > 0.0 {
            agree += 1;
        }
    }
    assert_eq!(agree, checked);
}

fn corner_cost(kp: &[Vec2], pose: &Pose) -> f64 {
    corners(&t_template(), pose)
        .iter()
        .zip(kp)
        .map(|(c, k)| (c - k).norm_squared())
        .sum()
}

/// Coarse-to-fine grid search over SE(2) around `start`.
fn grid_search(kp: &[Vec2], start: Pose) -> Pose {
    let mut best = start;
    let mut step = (0.01, 0.05);
    for _ in 0..40 {
        let centre = best;
        for i in -3..=3 {
            for j in -3..=3 {
                for k in -3..=3 {
                    let p = Pose::new(
                        centre.x + i as f64 * step.0,
                        centre.y + j as f64 * step.0,
                        centre.theta + k as f64 * step.1,
                    );
                    if corner_cost(kp, &p) < corner_cost(kp, &best) {
                        best = p;
                    }
                }
            }
        }
        step = (step.0 * 0.5, step.1 * 0.5);
    }
    best
}

#[test]
fn registration_error_shrinks_with_noise() {
    let template = t_template();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut means = Vec::new();
    for sigma in [1e-2, 3e-3, 1e-3] {
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut total = 0.0;
        for draw in 0..100 {
            let truth = Pose::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-3.0..3.0),
            );
            let kp: Vec<Vec2> = corners(&template, &truth)
                .into_iter()
                .map(|c| c + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
                .collect();
            let est = registration(&kp, &template).unwrap();
            if draw < 10 {
                let grid = grid_search(&kp, truth);
                assert!(corner_cost(&kp, &est) <= corner_cost(&kp, &grid) + 1e-12);
                assert!((est.position() - grid.position()).norm() < 1e-4);
            }
            total += (est.position() - truth.position()).norm();
        }
        means.push(total / 100.0);
    }
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}
