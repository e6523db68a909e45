mod common;

use aicon::gradient::{enumerate_paths, fd_oracle, propagate, MAX_PATH_LEN};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sweep(build: fn(&mut ChaCha8Rng) -> aicon::graph::Graph, seed: u64) -> (FdTally, FdTally) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut edges, mut goals) = (FdTally::default(), FdTally::default());
    for _ in 0..100 {
        let g = build(&mut rng);
        edges.merge(check_edges(&g));
        goals.merge(check_goals(&g));
    }
    (edges, goals)
}

#[test]
fn nav_jacobians_match_differences() {
    let (edges, goals) = sweep(random_nav_graph, 1);
    assert!(edges.worst < FD_REL_TOL, "{edges:?}");
    assert!(goals.worst < FD_REL_TOL, "{goals:?}");
    assert!(edges.skipped * 10 < edges.checked, "{edges:?}");
}

#[test]
fn push_jacobians_match_differences() {
    let (edges, goals) = sweep(random_push_graph, 2);
    assert!(edges.worst < FD_REL_TOL, "{edges:?}");
    assert!(goals.worst < FD_REL_TOL, "{goals:?}");
    assert!(edges.skipped * 10 < edges.checked, "{edges:?}");
}

#[test]
fn nav_path_gradients_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let g = random_nav_graph(&mut rng);
        for goal in ["g1", "g2"] {
            for p in enumerate_paths(&g, goal, "a", MAX_PATH_LEN).unwrap() {
                let a = propagate(&g, &p).unwrap();
                let fd = fd_oracle(&g, &p, 1e-6).unwrap();
                let err = (&a.vector - &fd.vector).norm() / fd.vector.norm().max(1e-6);
                assert!(err < 1e-5, "{} err {err}", p.id());
            }
        }
    }
}

#[test]
fn push_model_has_two_paths_per_side() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = random_push_graph(&mut rng);
    let paths = enumerate_paths(&g, "g1", "a", MAX_PATH_LEN).unwrap();
    assert_eq!(paths.len(), 16);
    for p in &paths {
        assert!((propagate(&g, p).unwrap().magnitude).is_finite());
    }
}
