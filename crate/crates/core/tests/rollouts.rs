use std::collections::BTreeSet;

use aicon::bench::{generate_batch, run_batch, run_scenario, BenchConfig, BenchMode, Domain, Outcome, Scenario};
use aicon::controller::{run_rollout, ControlMode, ControllerConfig, EnvSnapshot, Environment, GraphFactory};
use aicon::export::{export_csv, CURVES_FILE, OUTCOMES_FILE, PATHS_FILE};
use aicon::graph::{build_graph, EstimatorNode, GoalSpec, Graph, Interconnection, Matrix, Quantity, States, Vector};
use aicon::pusht::{corners, pose_error, t_template};
use aicon::Result;

/// Point mass pulled towards a fixed target by one goal, so exactly one
/// gradient path reaches the actuator.
struct PointMass {
    position: Vector,
    target: Vector,
}

impl GraphFactory for PointMass {
    type Observation = Vector;

    fn update(&mut self, observation: &Vector, _action: &Vector, _dt: f64) -> Result<()> {
        self.position = observation.clone();
        Ok(())
    }

    fn build(&self, action: &Vector) -> Result<Graph> {
        let p = self.position.clone();
        let target = self.target.clone();
        let mut graph = build_graph(
            vec![
                EstimatorNode::derived(Quantity::new("a", action.clone(), "m/s")?),
                EstimatorNode::derived(Quantity::new("p", p.clone(), "m")?),
            ],
            vec![Interconnection::new(
                "move",
                "a",
                "p",
                move |st: &States| &p + st.get("a") * 0.1,
                |_| Matrix::identity(2, 2) * 0.1,
            )],
            vec!["a".into()],
            vec![GoalSpec::single(
                "reach",
                "p",
                {
                    let t = target.clone();
                    move |x: &Vector| 0.5 * (x - &t).norm_squared()
                },
                move |x: &Vector| x - &target,
            )],
        )?;
        graph.forward_pass()?;
        Ok(graph)
    }
}

struct Plane {
    position: Vector,
    target: Vector,
}

impl Environment for Plane {
    type Observation = Vector;

    fn action_dim(&self) -> usize {
        2
    }

    fn observe(&mut self) -> Vector {
        self.position.clone()
    }

    fn step(&mut self, action: &Vector, dt: f64) {
        self.position += action * dt;
    }

    fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            agent: self.position.iter().copied().collect(),
            object: vec![],
            target: self.target.iter().copied().collect(),
            cost: (&self.position - &self.target).norm(),
        }
    }

    fn check_success(&mut self) -> bool {
        (&self.position - &self.target).norm() < 0.05
    }
}

fn point_rollout(mode: ControlMode) -> Vec<Vec<f64>> {
    let start = Vector::from_vec(vec![1.0, -0.5]);
    let target = Vector::from_vec(vec![-0.3, 0.7]);
    let mut model = PointMass {
        position: start.clone(),
        target: target.clone(),
    };
    let mut env = Plane {
        position: start,
        target,
    };
    let config = ControllerConfig {
        gain: vec![2.0, 2.0],
        max_speed: Some(1.0),
        max_ticks: 400,
        mode,
        ..Default::default()
    };
    let record = run_rollout(&mut model, &mut env, &config, "point", 3).unwrap();
    let last = record.ticks.last().unwrap();
    assert!(last.cost < 0.5, "{mode:?} did not approach the target: {}", last.cost);
    record.ticks.into_iter().map(|t| t.agent).collect()
}

#[test]
fn modes_coincide_without_conflicts() {
    let full = point_rollout(ControlMode::Full);
    for mode in [ControlMode::SteepestBaseline, ControlMode::NoExploration] {
        let other = point_rollout(mode);
        assert_eq!(full.len(), other.len());
        for (a, b) in full.iter().zip(&other) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-9, "{mode:?} diverged from Full");
            }
        }
    }
}

#[test]
fn repeated_rollouts_are_identical() {
    let cfg = BenchConfig::default();
    for domain in [Domain::Nav2d, Domain::Pusht] {
        let sc = generate_batch(domain, 1, 17, &cfg).unwrap().remove(0);
        let mut cfg = cfg.clone();
        cfg.controller_mut(domain).max_ticks = 300;
        let first = run_scenario(&sc, BenchMode::Full, &cfg).unwrap();
        for _ in 0..4 {
            assert_eq!(run_scenario(&sc, BenchMode::Full, &cfg).unwrap(), first);
        }
    }
}

#[test]
fn batches_do_not_depend_on_parallelism() {
    let mut cfg = BenchConfig::default();
    cfg.pusht.controller.max_ticks = 200;
    let scenarios = generate_batch(Domain::Pusht, 6, 9, &cfg).unwrap();
    let modes = [BenchMode::Full, BenchMode::SteepestBaseline];
    let serial = run_batch(&scenarios, &modes, &cfg, 1).unwrap();
    let parallel = run_batch(&scenarios, &modes, &cfg, 8).unwrap();
    assert_eq!(serial, parallel);

    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export_csv(&serial, a.path()).unwrap();
    export_csv(&parallel, b.path()).unwrap();
    for f in [CURVES_FILE, OUTCOMES_FILE, PATHS_FILE] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn generated_batches_are_reproducible() {
    let cfg = BenchConfig::default();
    for domain in [Domain::Nav2d, Domain::Pusht] {
        let a = generate_batch(domain, 1, 5, &cfg).unwrap();
        assert_eq!(a, generate_batch(domain, 1, 5, &cfg).unwrap());
        let many = generate_batch(domain, 100, 5, &cfg).unwrap();
        let seeds: BTreeSet<u64> = many.iter().map(Scenario::seed).collect();
        assert_eq!(seeds.len(), 100);
    }
}

#[test]
fn pusht_tasks_fit_the_workspace() {
    let cfg = BenchConfig::default();
    let half = cfg.pusht.workspace_half;
    let template = t_template();
    for sc in generate_batch(Domain::Pusht, 100, 2, &cfg).unwrap() {
        let Scenario::Pusht(p) = sc else { panic!("wrong domain") };
        for pose in [p.object, p.target] {
            assert!(corners(&template, &pose)
                .iter()
                .all(|c| c.x.abs() <= half && c.y.abs() <= half));
        }
        assert!(p.pusher.iter().all(|c| c.abs() <= half));
        let (d, a) = pose_error(&p.object, &p.target);
        assert!(d > 0.0 || a > 0.0);
    }
}

#[test]
fn successful_nav_runs_avoid_obstacles() {
    let cfg = BenchConfig::default();
    let scenarios = generate_batch(Domain::Nav2d, 6, 21, &cfg).unwrap();
    let report = run_batch(&scenarios, &[BenchMode::Full], &cfg, 1).unwrap();
    for o in &report.outcomes {
        if o.outcome == Outcome::Success {
            assert!(!o.collided, "{} touched an obstacle", o.scenario_id);
        }
    }
}

#[test]
fn zero_sized_batches_are_rejected() {
    assert!(generate_batch(Domain::Nav2d, 0, 0, &BenchConfig::default()).is_err());
}

#[test]
fn shipped_samples_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let text = std::fs::read_to_string(root.join("configs/default.toml")).unwrap();
    let cfg: BenchConfig = toml::from_str(&text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg, BenchConfig::default());
    for (file, domain) in [("nav2d.toml", Domain::Nav2d), ("pusht.toml", Domain::Pusht)] {
        let scenarios = aicon::export::read_scenarios(&root.join("scenarios").join(file)).unwrap();
        assert!(!scenarios.is_empty());
        assert!(scenarios.iter().all(|s| s.domain() == domain));
    }
}
