//! Planar polygon helpers shared by both testbeds.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Closest point on segment `[a, b]` to `p` and its clamped parameter.
pub fn closest_on_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Counter-clockwise rotation by 90°.
pub fn left_normal(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let p = Self { vertices };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, i: usize) -> Vec2 {
        let v = self.vertices[i % self.vertices.len()];
        Vec2::new(v[0], v[1])
    }

    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        (self.vertex(i), self.vertex(i + 1))
    }

    pub fn signed_area(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                cross(&a, &b)
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn centroid(&self) -> Vec2 {
        let area = self.signed_area();
        let mut c = Vec2::zeros();
        for i in 0..self.len() {
            let (a, b) = self.edge(i);
            c += (a + b) * cross(&a, &b);
        }
        c / (6.0 * area)
    }

    /// At least three distinct vertices, nonzero area, no two non-adjacent
    /// edges intersecting.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n < 3 || self.vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::DegeneratePolygon(format!("{n} vertices")));
        }
        if self.signed_area().abs() < 1e-12 {
            return Err(Error::DegeneratePolygon("zero area".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = self.edge(i);
                let (c, d) = self.edge(j);
                if segments_intersect(&a, &b, &c, &d) {
                    return Err(Error::DegeneratePolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    /// Even-odd rule; boundary points count as outside.
    pub fn contains(&self, p: &Vec2) -> bool {
        let mut inside = false;
        let n = self.len();
        let mut j = n - 1;
        for i in 0..n {
            let (vi, vj) = (self.vertex(i), self.vertex(j));
            if (vi.y > p.y) != (vj.y > p.y) {
                let x = vj.x + (p.y - vj.y) * (vi.x - vj.x) / (vi.y - vj.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn transformed(&self, rot: f64, shift: Vec2) -> Polygon {
        let r = rotation(rot);
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| {
                    let p = r * Vec2::new(v[0], v[1]) + shift;
                    [p.x, p.y]
                })
                .collect(),
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for i in 0..self.len() {
            let v = self.vertex(i);
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
        (lo, hi)
    }
}

fn orient(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    cross(&(b - a), &(c - a))
}

pub fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: &Vec2, q: &Vec2, r: &Vec2, o: f64| {
        o == 0.0 && r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// Nearest boundary point over a set of polygons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub polygon: usize,
    pub edge: usize,
    pub point: Vec2,
    /// Negative inside a polygon.
    pub signed_distance: f64,
    /// Unit gradient of the signed distance with respect to the query point.
    pub gradient: Vec2,
}

/// Nearest boundary point; equal distances keep the lowest edge index.
pub fn nearest_boundary(polygons: &[Polygon], p: &Vec2) -> Option<Nearest> {
    let mut best: Option<(usize, usize, Vec2, f64)> = None;
    for (k, poly) in polygons.iter().enumerate() {
        for i in 0..poly.len() {
            let (a, b) = poly.edge(i);
            let (c, _) = closest_on_segment(p, &a, &b);
            let d = (p - c).norm();
            if best.is_none_or(|(_, _, _, bd)| d < bd) {
                best = Some((k, i, c, d));
            }
        }
    }
    let (k, i, c, d) = best?;
    let inside = polygons.iter().any(|poly| poly.contains(p));
    let gradient = if d > 0.0 {
        (p - c) / d
    } else {
        // On the boundary: use the outward edge normal.
        let (a, b) = polygons[k].edge(i);
        let n = -left_normal(&(b - a)).normalize();
        if polygons[k].signed_area() > 0.0 {
            n
        } else {
            -n
        }
    };
    Some(if inside {
        Nearest {
            polygon: k,
            edge: i,
            point: c,
            signed_distance: -d,
            gradient: -gradient,
        }
    } else {
        Nearest {
            polygon: k,
            edge: i,
            point: c,
            signed_distance: d,
            gradient,
        }
    })
}

/// Whether segment `[p, q]` stays outside the interior of the closed
/// polygon `pts`. Touching the boundary is allowed.
pub fn segment_clear(p: &Vec2, q: &Vec2, pts: &[Vec2]) -> bool {
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        // Orientations this small are roundoff on a touching endpoint.
        let eps = 1e-9 * (b - a).norm() * (q - p).norm();
        let opposite = |u: f64, v: f64| (u > eps && v < -eps) || (u < -eps && v > eps);
        let (d1, d2) = (orient(&a, &b, p), orient(&a, &b, q));
        let (d3, d4) = (orient(p, q, &a), orient(p, q, &b));
        if opposite(d1, d2) && opposite(d3, d4) {
            return false;
        }
    }
    let poly = Polygon {
        vertices: pts.iter().map(|v| [v.x, v.y]).collect(),
    };
    [0.25, 0.5, 0.75].iter().all(|t| !poly.contains(&(p + (q - p) * *t)))
}

/// Shortest travel from `x` to each side of the polygon `pts` without
/// entering it, with the gradient of that length with respect to `x`.
///
/// A side is reached either straight from `x` or from a vertex, and only
/// from its outer half-plane. Paths bend at vertices; the gradient is the
/// unit vector from the first bend (or the reached point) towards `x`.
/// `normals[i]` is the outward normal of side `i`. A point inside the
/// polygon falls back to straight-line distances.
pub fn travel_to_sides(pts: &[Vec2], normals: &[Vec2], x: &Vec2) -> Vec<(f64, Vec2)> {
    let n = pts.len();
    let straight = |i: usize| {
        let (c, _) = closest_on_segment(x, &pts[i], &pts[(i + 1) % n]);
        let e = x - c;
        let d = e.norm();
        (d, if d > 0.0 { e / d } else { normals[i] })
    };
    let poly = Polygon {
        vertices: pts.iter().map(|v| [v.x, v.y]).collect(),
    };
    if poly.contains(x) {
        return (0..n).map(straight).collect();
    }
    // Dijkstra over the vertices; `first[k]` is the first vertex on the
    // best path from `x` to vertex `k`.
    let mut dist = vec![f64::INFINITY; n];
    let mut first = vec![usize::MAX; n];
    let mut done = vec![false; n];
    for k in 0..n {
        if segment_clear(x, &pts[k], pts) {
            dist[k] = (pts[k] - x).norm();
            first[k] = k;
        }
    }
    for _ in 0..n {
        let Some(u) = (0..n)
            .filter(|&k| !done[k] && dist[k].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        for v in 0..n {
            if done[v] {
                continue;
            }
            let adjacent = v == (u + 1) % n || u == (v + 1) % n;
            if !adjacent && !segment_clear(&pts[u], &pts[v], pts) {
                continue;
            }
            let alt = dist[u] + (pts[v] - pts[u]).norm();
            if alt < dist[v] {
                dist[v] = alt;
                first[v] = first[u];
            }
        }
    }
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let outside = |v: &Vec2| (v - a).dot(&normals[i]) > 0.0;
            let mut best = if outside(x) {
                let (c, _) = closest_on_segment(x, &a, &b);
                if segment_clear(x, &c, pts) {
                    Some(straight(i))
                } else {
                    None
                }
            } else {
                None
            };
            for k in 0..n {
                if !dist[k].is_finite() {
                    continue;
                }
                let v = pts[k];
                let extra = if k == i || k == (i + 1) % n {
                    0.0
                } else if outside(&v) {
                    let (c, _) = closest_on_segment(&v, &a, &b);
                    if !segment_clear(&v, &c, pts) {
                        continue;
                    }
                    (v - c).norm()
                } else {
                    continue;
                };
                let total = dist[k] + extra;
                if best.is_none_or(|(d, _)| total < d) {
                    let h = pts[first[k]];
                    let e = x - h;
                    let len = e.norm();
                    best = Some((total, if len > 0.0 { e / len } else { normals[i] }));
                }
            }
            best.unwrap_or_else(|| straight(i))
        })
        .collect()
}
