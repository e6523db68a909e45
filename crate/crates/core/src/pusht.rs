//! Pushing a T-shaped block into a target pose with a round pusher.
//!
//! The ground-truth simulator is quasi-static: whenever the pusher disk
//! overlaps the block, the block is displaced out of it and rotated about its
//! centroid, then the pusher is put back on the surface.
//!
//! The internal model is deliberately coarser. For every side of the block
//! it predicts a contact likelihood `p_i` and a probe point `c_i` (the point
//! of the pusher disk deepest across that side) from a predicted pusher
//! position. The object twist is the likelihood-weighted sum of per-side
//! pushes: translation along the inward normal and rotation proportional to
//! the angle between the push direction and the direction to the centroid.

use nalgebra::{Matrix2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::{EnvSnapshot, Environment, GraphFactory};
use crate::error::{Error, Result};
use crate::geometry::{
    closest_on_segment, cross, nearest_boundary, rotation, travel_to_sides, wrap_angle, Polygon, Vec2,
};
use crate::graph::{build_graph, EstimatorNode, GoalSpec, Graph, Interconnection, Matrix, Quantity, States, Vector};

/// Number of T corners and sides.
pub const N_SIDES: usize = 8;
pub const POS_TOLERANCE: f64 = 0.05;
pub const ANGLE_TOLERANCE: f64 = 0.1;
pub const SUSTAIN_TICKS: usize = 10;

/// Planar pose `(x, y, θ)` of the block centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_row_slice(&[self.x, self.y, self.theta])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Maps a point from the block frame into the world.
    pub fn apply(&self, p: &Vec2) -> Vec2 {
        rotation(self.theta) * p + self.position()
    }

    /// `T ∘ self` for a rigid transform `(rot, shift)` applied in the world.
    pub fn transformed(&self, rot: f64, shift: Vec2) -> Pose {
        let p = rotation(rot) * self.position() + shift;
        Pose::new(p.x, p.y, wrap_angle(self.theta + rot))
    }
}

/// The T outline, counter-clockwise, centroid at the origin: a 0.2 × 0.05 m
/// bar on top of a 0.05 × 0.15 m stem.
pub fn t_template() -> Polygon {
    let raw = Polygon {
        vertices: vec![
            [-0.025, -0.15],
            [0.025, -0.15],
            [0.025, 0.0],
            [0.1, 0.0],
            [0.1, 0.05],
            [-0.1, 0.05],
            [-0.1, 0.0],
            [-0.025, 0.0],
        ],
    };
    let c = raw.centroid();
    raw.transformed(0.0, -c)
}

/// Polar radius of gyration of a uniform polygon about its centroid.
pub fn radius_of_gyration(poly: &Polygon) -> f64 {
    let c = poly.centroid();
    let mut j = 0.0;
    for i in 0..poly.len() {
        let (a, b) = poly.edge(i);
        let (a, b) = (a - c, b - c);
        let k = cross(&a, &b);
        j += k * (a.dot(&a) + a.dot(&b) + b.dot(&b));
    }
    (j / 12.0 / poly.signed_area()).sqrt()
}

/// World-frame corners of the block at `pose`.
pub fn corners(template: &Polygon, pose: &Pose) -> Vec<Vec2> {
    (0..template.len()).map(|i| pose.apply(&template.vertex(i))).collect()
}

pub fn polygon_from(points: &[Vec2]) -> Polygon {
    Polygon {
        vertices: points.iter().map(|p| [p.x, p.y]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushPhysics {
    /// Rotation per unit of `(contact − centroid) × displacement / ρ²`.
    pub rotation_coupling: f64,
    /// Fraction of the penetration removed by translating the block.
    pub penetration_stiffness: f64,
}

impl Default for PushPhysics {
    fn default() -> Self {
        Self {
            rotation_coupling: 0.7,
            penetration_stiffness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushNoise {
    /// Velocity noise (m/s).
    pub action: f64,
    /// Pusher position noise (m).
    pub pusher: f64,
    /// Per-corner keypoint noise (m).
    pub keypoints: f64,
}

impl Default for PushNoise {
    fn default() -> Self {
        Self {
            action: 0.05 * DEFAULT_MAX_SPEED,
            pusher: 0.0005,
            keypoints: 0.0005,
        }
    }
}

impl PushNoise {
    pub fn none() -> Self {
        Self {
            action: 0.0,
            pusher: 0.0,
            keypoints: 0.0,
        }
    }
}

pub const DEFAULT_MAX_SPEED: f64 = 0.1;
pub const DEFAULT_PUSHER_RADIUS: f64 = 0.015;

/// Ground truth of the pushing task.
#[derive(Debug, Clone)]
pub struct PushWorld {
    pub pusher: Vec2,
    pub radius: f64,
    pub object: Pose,
    pub template: Polygon,
    pub target: Pose,
    pub physics: PushPhysics,
    pub noise: PushNoise,
    gyration: f64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushObservation {
    pub pusher: Vec2,
    pub keypoints: Vec<Vec2>,
}

impl PushWorld {
    pub fn new(
        pusher: Vec2,
        object: Pose,
        target: Pose,
        physics: PushPhysics,
        noise: PushNoise,
        seed: u64,
    ) -> Result<Self> {
        let template = t_template();
        template.validate()?;
        let gyration = radius_of_gyration(&template);
        let mut w = Self {
            pusher,
            radius: DEFAULT_PUSHER_RADIUS,
            object,
            template,
            target,
            physics,
            noise,
            gyration,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        w.resolve_contact();
        Ok(w)
    }

    pub fn object_polygon(&self) -> Polygon {
        polygon_from(&corners(&self.template, &self.object))
    }

    fn gauss(&mut self, std: f64) -> f64 {
        if std > 0.0 {
            Normal::new(0.0, std).map(|n| n.sample(&mut self.rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    pub fn measure(&mut self) -> PushObservation {
        let (sp, sk) = (self.noise.pusher, self.noise.keypoints);
        let pusher = self.pusher + Vec2::new(self.gauss(sp), self.gauss(sp));
        let keypoints = corners(&self.template, &self.object)
            .into_iter()
            .map(|c| c + Vec2::new(self.gauss(sk), self.gauss(sk)))
            .collect();
        PushObservation { pusher, keypoints }
    }

    /// Displaces the block out of the pusher disk, then puts the pusher on
    /// the surface. Returns the total displacement applied to the block.
    fn resolve_contact(&mut self) -> Vec2 {
        let mut moved = Vec2::zeros();
        for _ in 0..4 {
            let poly = self.object_polygon();
            let Some(near) = nearest_boundary(std::slice::from_ref(&poly), &self.pusher) else {
                break;
            };
            let pen = self.radius - near.signed_distance;
            if pen <= 1e-12 {
                break;
            }
            // The block moves away from the pusher along the contact normal.
            let dir = -near.gradient;
            let shift = dir * (pen * self.physics.penetration_stiffness);
            let arm = near.point - self.object.position();
            let dtheta = self.physics.rotation_coupling * cross(&arm, &shift) / (self.gyration * self.gyration);
            self.object = Pose::new(
                self.object.x + shift.x,
                self.object.y + shift.y,
                wrap_angle(self.object.theta + dtheta),
            );
            moved += shift;
        }
        // Quasi-static: the pusher ends exactly on the surface.
        let poly = self.object_polygon();
        if let Some(near) = nearest_boundary(std::slice::from_ref(&poly), &self.pusher) {
            if near.signed_distance < self.radius {
                self.pusher = near.point + near.gradient * self.radius;
            }
        }
        moved
    }

    pub fn pose_error(&self) -> (f64, f64) {
        pose_error(&self.object, &self.target)
    }
}

/// Position and absolute wrapped angle error.
pub fn pose_error(a: &Pose, b: &Pose) -> (f64, f64) {
    (
        (a.position() - b.position()).norm(),
        wrap_angle(a.theta - b.theta).abs(),
    )
}

/// Moves the pusher and resolves any overlap with the block.
pub fn push_env_step(world: &mut PushWorld, velocity: &Vec2, dt: f64) -> Result<PushObservation> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    let std = world.noise.action;
    let v = velocity + Vec2::new(world.gauss(std), world.gauss(std));
    world.pusher += v * dt;
    world.resolve_contact();
    Ok(world.measure())
}

/// One candidate contact on one side of the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Closest point on the side to the pusher centre.
    pub point: Vec2,
    /// Outward unit normal of the side.
    pub normal: Vec2,
    pub likelihood: f64,
    /// Leading point of the pusher disk towards the side, `x − r·n`.
    pub probe: Vec2,
    /// Pusher velocity the side would experience.
    pub velocity: Vec2,
}

/// Outward unit normals of a counter-clockwise polygon given by `points`.
fn side_normals(points: &[Vec2]) -> Result<Vec<Vec2>> {
    let n = points.len();
    let mut area = 0.0;
    for i in 0..n {
        area += cross(&points[i], &points[(i + 1) % n]);
    }
    if n < 3 || area.abs() < 1e-12 {
        return Err(Error::DegeneratePolygon(format!("{n} keypoints, area {area}")));
    }
    let orientation = area.signum();
    (0..n)
        .map(|i| {
            let e = points[(i + 1) % n] - points[i];
            let len = e.norm();
            if len < 1e-12 {
                return Err(Error::DegeneratePolygon(format!("side {i} has zero length")));
            }
            Ok(Vec2::new(e.y, -e.x) * (orientation / len))
        })
        .collect()
}

/// Contact likelihood of every side and its gradient with respect to the
/// pusher centre `x`: `exp(−max(0, d − r)/σ_c)`, where `d` is the length of
/// the shortest way from `x` to the side around the block.
pub fn side_likelihoods(keypoints: &[Vec2], normals: &[Vec2], x: &Vec2, radius: f64, sigma_c: f64) -> Vec<(f64, Vec2)> {
    travel_to_sides(keypoints, normals, x)
        .into_iter()
        .map(|(d, grad)| {
            if d > radius {
                let p = (-(d - radius) / sigma_c).exp();
                (p, grad * (-p / sigma_c))
            } else {
                (1.0, Vec2::zeros())
            }
        })
        .collect()
}

/// Per-side closest points, outward normals and contact likelihoods.
pub fn contact_model(
    keypoints: &[Vec2],
    pusher: &Vec2,
    velocity: &Vec2,
    radius: f64,
    sigma_c: f64,
) -> Result<Vec<Contact>> {
    let normals = side_normals(keypoints)?;
    let n = keypoints.len();
    let p = side_likelihoods(keypoints, &normals, pusher, radius, sigma_c);
    Ok((0..n)
        .map(|i| {
            let (a, b) = (keypoints[i], keypoints[(i + 1) % n]);
            let (point, _) = closest_on_segment(pusher, &a, &b);
            Contact {
                point,
                normal: normals[i],
                likelihood: p[i].0,
                probe: pusher - normals[i] * radius,
                velocity: *velocity,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushModelConfig {
    /// Look-ahead turning a pusher velocity into a predicted position (s).
    pub horizon: f64,
    /// Contact likelihood length scale σ_c (m).
    pub sigma_c: f64,
    /// Rotation coupling κ of the internal model.
    pub kappa: f64,
    /// Angle weight of the pose error (m/rad).
    pub angle_weight: f64,
    pub radius: f64,
    /// Floor on the summed likelihood that normalizes the predicted twist.
    pub min_total: f64,
}

impl Default for PushModelConfig {
    fn default() -> Self {
        Self {
            horizon: 0.2,
            sigma_c: 0.05,
            kappa: 1.0,
            angle_weight: 0.3,
            radius: DEFAULT_PUSHER_RADIUS,
            min_total: 1.0,
        }
    }
}

/// Object twist caused by pushing one side, with its derivative with
/// respect to the probe point. The probe enters through the velocity,
/// `v = (probe − probe₀)/T_h`, and through the rotation angle.
struct SidePush {
    /// `(t_x, t_y, ω)` per unit likelihood.
    twist: Vector3<f64>,
    /// `∂twist/∂probe`, 3×2.
    jac: nalgebra::Matrix3x2<f64>,
}

fn side_push(c: &Contact, centroid: &Vec2, config: &PushModelConfig, rot_scale: f64) -> SidePush {
    let d = -c.normal;
    let along = c.velocity.dot(&d);
    // The one-sided derivative at zero lets a resting pusher see every side.
    let (speed, dspeed) = if along >= 0.0 {
        (along, d / config.horizon)
    } else {
        (0.0, Vec2::zeros())
    };
    let w = centroid - c.probe;
    let phi = cross(&d, &w).atan2(d.dot(&w));
    let w2 = w.norm_squared().max(1e-18);
    // ∂φ/∂w = (−w_y, w_x)/|w|², and w = centroid − probe.
    let dphi = -Vec2::new(-w.y, w.x) / w2;
    let k = config.kappa / rot_scale;
    let twist = Vector3::new(d.x * speed, d.y * speed, k * phi * speed);
    let mut jac = nalgebra::Matrix3x2::zeros();
    for j in 0..2 {
        jac[(0, j)] = d.x * dspeed[j];
        jac[(1, j)] = d.y * dspeed[j];
        jac[(2, j)] = k * (dphi[j] * speed + phi * dspeed[j]);
    }
    SidePush { twist, jac }
}

/// Likelihood-weighted object twist `(v_x, v_y, ω)` predicted by the model.
pub fn dynamics_model(contacts: &[Contact], x_obj: &Pose, config: &PushModelConfig, rot_scale: f64) -> Vector3<f64> {
    let total: f64 = contacts.iter().map(|c| c.likelihood).sum();
    let norm = total.max(config.min_total);
    let centroid = x_obj.position();
    contacts
        .iter()
        .filter(|c| c.likelihood > 0.0)
        .map(|c| side_push(c, &centroid, config, rot_scale).twist * c.likelihood)
        .sum::<Vector3<f64>>()
        / norm
}

/// Least-squares rigid alignment of `template` onto `keypoints`.
pub fn registration(keypoints: &[Vec2], template: &Polygon) -> Result<Pose> {
    let n = keypoints.len();
    if n != template.len() || n < 2 {
        return Err(Error::DimensionMismatch {
            context: "registration".into(),
            expected: (template.len(), 2),
            got: (n, 2),
        });
    }
    let kc = keypoints.iter().sum::<Vec2>() / n as f64;
    let tc = (0..n).map(|i| template.vertex(i)).sum::<Vec2>() / n as f64;
    if keypoints.iter().all(|k| (k - kc).norm() < 1e-12) {
        return Err(Error::DegenerateConfiguration("keypoints coincide".into()));
    }
    let mut h = Matrix2::zeros();
    for (i, k) in keypoints.iter().enumerate() {
        h += (template.vertex(i) - tc) * (k - kc).transpose();
    }
    let theta = (h[(0, 1)] - h[(1, 0)]).atan2(h[(0, 0)] + h[(1, 1)]);
    let t = kc - rotation(theta) * tc;
    Ok(Pose::new(t.x, t.y, theta))
}

/// `‖p − p*‖ + w_θ·|wrap(θ − θ*)|`.
pub fn push_goal_g1(x_obj: &Pose, target: &Pose, angle_weight: f64) -> f64 {
    let (dp, da) = pose_error(x_obj, target);
    dp + angle_weight * da
}

pub fn push_goal_g1_grad(x_obj: &Pose, target: &Pose, angle_weight: f64) -> Vector3<f64> {
    let e = x_obj.position() - target.position();
    let n = e.norm();
    let dp = if n > 0.0 { e / n } else { Vec2::zeros() };
    let da = wrap_angle(x_obj.theta - target.theta);
    Vector3::new(dp.x, dp.y, angle_weight * da.signum() * (da != 0.0) as u8 as f64)
}

/// Robot-side estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PushBelief {
    pub x_pusher: Vec2,
    pub x_keypoints: Vec<Vec2>,
    pub x_obj: Pose,
}

impl PushBelief {
    pub fn from_observation(obs: &PushObservation, template: &Polygon) -> Result<Self> {
        Ok(Self {
            x_pusher: obs.pusher,
            x_keypoints: obs.keypoints.clone(),
            x_obj: registration(&obs.keypoints, template)?,
        })
    }

    pub fn contacts(&self, velocity: &Vec2, config: &PushModelConfig) -> Result<Vec<Contact>> {
        contact_model(
            &self.x_keypoints,
            &self.x_pusher,
            velocity,
            config.radius,
            config.sigma_c,
        )
    }
}

fn v2(v: &Vector) -> Vec2 {
    Vec2::new(v[0], v[1])
}

/// Graph for the current belief with `action` installed and predictions
/// propagated. Nodes: `a`, `x_pusher`, `x_keypoints`, `x_contact` (probe
/// points, 2N), `p_contact` (N) and `x_obj`. Every side has its own edge
/// into each contact quantity, so each side contributes one likelihood path
/// and one position path.
pub fn build_push_graph(
    belief: &PushBelief,
    target: &Pose,
    action: &Vec2,
    config: &PushModelConfig,
    rot_scale: f64,
) -> Result<Graph> {
    let kp = belief.x_keypoints.clone();
    let n = kp.len();
    let normals = side_normals(&kp)?;
    let x0 = belief.x_pusher;
    let obj0 = belief.x_obj;
    let th = config.horizon;
    let cfg = *config;

    let vec = |v: &Vec2| Vector::from_column_slice(v.as_slice());
    let contacts0 = contact_model(&kp, &x0, action, cfg.radius, cfg.sigma_c)?;
    let nodes = vec![
        EstimatorNode::derived(Quantity::new("a", vec(action), "m/s")?),
        EstimatorNode::point(Quantity::new("x_pusher", vec(&x0), "m")?),
        EstimatorNode::point(Quantity::new(
            "x_keypoints",
            Vector::from_iterator(2 * n, kp.iter().flat_map(|k| [k.x, k.y])),
            "m",
        )?),
        EstimatorNode::derived(Quantity::new(
            "x_contact",
            Vector::from_iterator(2 * n, contacts0.iter().flat_map(|c| [c.probe.x, c.probe.y])),
            "m",
        )?),
        EstimatorNode::derived(Quantity::new(
            "p_contact",
            Vector::from_iterator(n, contacts0.iter().map(|c| c.likelihood)),
            "",
        )?),
        EstimatorNode::derived(Quantity::new("x_obj", obj0.to_vector(), "m,rad")?),
    ];
    let mut edges = vec![Interconnection::new(
        "a_pusher",
        "a",
        "x_pusher",
        move |st| vec(&(x0 + v2(st.get("a")) * th)),
        move |_| Matrix::identity(2, 2) * th,
    )];

    let probes: crate::graph::ForwardFn = {
        let normals = normals.clone();
        std::sync::Arc::new(move |st: &States| {
            let x = v2(st.get("x_pusher"));
            Vector::from_iterator(
                2 * n,
                normals.iter().flat_map(|ni| {
                    let c = x - ni * cfg.radius;
                    [c.x, c.y]
                }),
            )
        })
    };
    let likelihoods: crate::graph::ForwardFn = {
        let kp = kp.clone();
        let normals = normals.clone();
        std::sync::Arc::new(move |st: &States| {
            let x = v2(st.get("x_pusher"));
            Vector::from_iterator(
                n,
                side_likelihoods(&kp, &normals, &x, cfg.radius, cfg.sigma_c)
                    .into_iter()
                    .map(|(p, _)| p),
            )
        })
    };
    for i in 0..n {
        edges.push(Interconnection::from_parts(
            format!("pusher_c{i}"),
            "x_pusher",
            "x_contact",
            probes.clone(),
            std::sync::Arc::new(move |_: &States| {
                let mut j = Matrix::zeros(2 * n, 2);
                j[(2 * i, 0)] = 1.0;
                j[(2 * i + 1, 1)] = 1.0;
                j
            }),
        ));
        let (kp_i, normals_i) = (kp.clone(), normals.clone());
        edges.push(Interconnection::from_parts(
            format!("pusher_p{i}"),
            "x_pusher",
            "p_contact",
            likelihoods.clone(),
            std::sync::Arc::new(move |st: &States| {
                let mut j = Matrix::zeros(n, 2);
                let (_, grad) =
                    side_likelihoods(&kp_i, &normals_i, &v2(st.get("x_pusher")), cfg.radius, cfg.sigma_c)[i];
                j[(i, 0)] = grad.x;
                j[(i, 1)] = grad.y;
                j
            }),
        ));
    }

    // Object prediction from all contacts; both edges into x_obj share it.
    let gather = {
        let normals = normals.clone();
        std::sync::Arc::new(move |st: &States| -> Vec<Contact> {
            let probes = st.get("x_contact");
            let p = st.get("p_contact");
            (0..n)
                .map(|i| {
                    let probe = Vec2::new(probes[2 * i], probes[2 * i + 1]);
                    let rest = x0 - normals[i] * cfg.radius;
                    Contact {
                        point: probe,
                        normal: normals[i],
                        likelihood: p[i],
                        probe,
                        velocity: (probe - rest) / th,
                    }
                })
                .collect()
        })
    };
    let forward: crate::graph::ForwardFn = {
        let gather = gather.clone();
        std::sync::Arc::new(move |st: &States| {
            let twist = dynamics_model(&gather(st), &obj0, &cfg, rot_scale);
            let p = obj0.to_vector();
            Vector::from_row_slice(&[p[0] + th * twist.x, p[1] + th * twist.y, p[2] + th * twist.z])
        })
    };
    let g = gather.clone();
    edges.push(Interconnection::from_parts(
        "contact_obj",
        "x_contact",
        "x_obj",
        forward.clone(),
        std::sync::Arc::new(move |st: &States| {
            let cs = g(st);
            let norm = cs.iter().map(|c| c.likelihood).sum::<f64>().max(cfg.min_total);
            let mut j = Matrix::zeros(3, 2 * n);
            for (i, c) in cs.iter().enumerate() {
                let sp = side_push(c, &obj0.position(), &cfg, rot_scale);
                for r in 0..3 {
                    for k in 0..2 {
                        j[(r, 2 * i + k)] = th * c.likelihood / norm * sp.jac[(r, k)];
                    }
                }
            }
            j
        }),
    ));
    let g = gather;
    edges.push(Interconnection::from_parts(
        "likelihood_obj",
        "p_contact",
        "x_obj",
        forward,
        std::sync::Arc::new(move |st: &States| {
            let cs = g(st);
            let total: f64 = cs.iter().map(|c| c.likelihood).sum();
            let centroid = obj0.position();
            let twist = dynamics_model(&cs, &obj0, &cfg, rot_scale);
            let mut j = Matrix::zeros(3, n);
            for (i, c) in cs.iter().enumerate() {
                let ui = side_push(c, &centroid, &cfg, rot_scale).twist;
                let col = if total > cfg.min_total {
                    (ui - twist) / total
                } else {
                    ui
                };
                for r in 0..3 {
                    j[(r, i)] = th * col[r];
                }
            }
            j
        }),
    ));

    let target = *target;
    let w = config.angle_weight;
    let goals = vec![GoalSpec::single(
        "g1",
        "x_obj",
        move |x| push_goal_g1(&Pose::from_slice(x.as_slice()), &target, w),
        move |x| {
            let g = push_goal_g1_grad(&Pose::from_slice(x.as_slice()), &target, w);
            Vector::from_column_slice(g.as_slice())
        },
    )];
    let mut graph = build_graph(nodes, edges, vec!["a".into()], goals)?;
    graph.forward_pass()?;
    Ok(graph)
}

/// A pushT problem instance; also the scenario file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushScenario {
    pub id: String,
    pub seed: u64,
    pub pusher: [f64; 2],
    pub object: Pose,
    pub target: Pose,
    #[serde(default)]
    pub noise: PushNoise,
    #[serde(default)]
    pub physics: PushPhysics,
}

impl PushScenario {
    pub fn without_noise(mut self) -> Self {
        self.noise = PushNoise::none();
        self
    }

    /// The same task moved rigidly: pusher, start and target poses together.
    pub fn transformed(&self, rot: f64, shift: Vec2) -> Self {
        let p = rotation(rot) * Vec2::from(self.pusher) + shift;
        Self {
            pusher: [p.x, p.y],
            object: self.object.transformed(rot, shift),
            target: self.target.transformed(rot, shift),
            ..self.clone()
        }
    }

    pub fn world(&self) -> Result<PushWorld> {
        PushWorld::new(
            Vec2::from(self.pusher),
            self.object,
            self.target,
            self.physics,
            self.noise,
            self.seed,
        )
    }

    pub fn instantiate(&self, config: PushModelConfig) -> Result<(PushModel, PushEnv)> {
        let mut world = self.world()?;
        let obs = world.measure();
        let belief = PushBelief::from_observation(&obs, &world.template)?;
        let model = PushModel {
            belief,
            template: world.template.clone(),
            target: self.target,
            rot_scale: radius_of_gyration(&world.template),
            config,
        };
        Ok((model, PushEnv::new(world)))
    }
}

/// Belief owner that rebuilds the graph every tick.
#[derive(Debug, Clone)]
pub struct PushModel {
    pub belief: PushBelief,
    pub template: Polygon,
    pub target: Pose,
    pub rot_scale: f64,
    pub config: PushModelConfig,
}

impl GraphFactory for PushModel {
    type Observation = PushObservation;

    fn update(&mut self, obs: &PushObservation, _action: &Vector, _dt: f64) -> Result<()> {
        self.belief = PushBelief::from_observation(obs, &self.template)?;
        Ok(())
    }

    fn build(&self, action: &Vector) -> Result<Graph> {
        build_push_graph(&self.belief, &self.target, &v2(action), &self.config, self.rot_scale)
    }
}

/// Environment wrapper tracking sustained success.
#[derive(Debug, Clone)]
pub struct PushEnv {
    pub world: PushWorld,
    streak: usize,
    last: Option<PushObservation>,
}

impl PushEnv {
    pub fn new(world: PushWorld) -> Self {
        Self {
            world,
            streak: 0,
            last: None,
        }
    }
}

impl Environment for PushEnv {
    type Observation = PushObservation;

    fn action_dim(&self) -> usize {
        2
    }

    fn observe(&mut self) -> PushObservation {
        match self.last.take() {
            Some(o) => o,
            None => self.world.measure(),
        }
    }

    fn step(&mut self, action: &Vector, dt: f64) {
        if let Ok(obs) = push_env_step(&mut self.world, &v2(action), dt) {
            self.last = Some(obs);
        }
    }

    fn snapshot(&self) -> EnvSnapshot {
        let w = &self.world;
        EnvSnapshot {
            agent: vec![w.pusher.x, w.pusher.y],
            object: vec![w.object.x, w.object.y, w.object.theta],
            target: vec![w.target.x, w.target.y, w.target.theta],
            cost: push_goal_g1(&w.object, &w.target, 0.3),
        }
    }

    fn check_success(&mut self) -> bool {
        let (dp, da) = self.world.pose_error();
        if dp < POS_TOLERANCE && da < ANGLE_TOLERANCE {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= SUSTAIN_TICKS
    }
}

/// Samples one task within a square workspace of half-width `half`.
pub fn sample_scenario(seed: u64, half: f64, noise: PushNoise) -> Result<PushScenario> {
    use rand::Rng;
    let template = t_template();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inside = |pose: &Pose| {
        corners(&template, pose)
            .iter()
            .all(|c| c.x.abs() <= half && c.y.abs() <= half)
    };
    for _ in 0..1000 {
        let mut pose = || {
            Pose::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        };
        let (object, target) = (pose(), pose());
        let pusher = Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half));
        if !inside(&object) || !inside(&target) {
            continue;
        }
        let (dp, da) = pose_error(&object, &target);
        if dp < 2.0 * POS_TOLERANCE && da < 2.0 * ANGLE_TOLERANCE {
            continue;
        }
        let poly = polygon_from(&corners(&template, &object));
        let clear = nearest_boundary(std::slice::from_ref(&poly), &pusher)
            .map(|n| n.signed_distance)
            .unwrap_or(f64::INFINITY);
        if clear < DEFAULT_PUSHER_RADIUS + 0.01 {
            continue;
        }
        return Ok(PushScenario {
            id: format!("pusht-{seed}"),
            seed,
            pusher: [pusher.x, pusher.y],
            object,
            target,
            noise,
            physics: PushPhysics::default(),
        });
    }
    Err(Error::InfeasibleScenario(1000))
}
