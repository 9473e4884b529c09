//! Planar shapes: discs, ellipses and simple polygons.
//!
//! Every shape is a closed curve bounding a bounded region. Shapes answer
//! point-membership, signed-distance and ray-intersection queries, and can be
//! sampled as polylines for arclength parametrization.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counter-clockwise rotation by 90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

/// Closed planar shape. Polygons are given counter-clockwise or clockwise;
/// orientation is normalized on construction of derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        #[serde(default)]
        rotation: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

/// Nearest intersection of a ray with a shape boundary.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub distance: f64,
    pub point: Vec2,
    /// Outward unit normal of the shape at the hit point.
    pub normal: Vec2,
}

/// One smooth piece of a boundary, sampled as a polyline.
#[derive(Debug, Clone)]
pub struct BoundaryPiece {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl BoundaryPiece {
    pub fn length(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.points.len();
        let m = if self.closed { n } else { n.saturating_sub(1) };
        (0..m).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Closest point on the polyline: (distance, arclength of the projection,
    /// projected point).
    pub fn project(&self, p: Vec2) -> (f64, f64, Vec2) {
        let mut best = (f64::INFINITY, 0.0, p);
        let mut s0 = 0.0;
        for (a, b) in self.edges() {
            let e = b - a;
            let len = e.norm();
            let t = if len > 0.0 {
                ((p - a).dot(e) / (len * len)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = a + e * t;
            let d = (p - q).norm();
            if d < best.0 {
                best = (d, s0 + t * len, q);
            }
            s0 += len;
        }
        best
    }
}

impl Shape {
    pub fn disc(center: [f64; 2], radius: f64) -> Self {
        Shape::Disc { center, radius }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// Signed distance to the boundary, negative inside.
    ///
    /// Discs are exact; ellipses and polygons minimize over boundary segments.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            Shape::Disc { center, radius } => (p - Vec2::from(*center)).norm() - radius,
            Shape::Ellipse { .. } => {
                let inside = self.ellipse_level(p) < 1.0;
                let d = self.boundary_polyline(720).project(p).0;
                if inside {
                    -d
                } else {
                    d
                }
            }
            Shape::Polygon { vertices } => {
                let piece = BoundaryPiece {
                    points: vertices.iter().map(|&v| v.into()).collect(),
                    closed: true,
                };
                let d = piece.project(p).0;
                if point_in_polygon(vertices, p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    fn ellipse_level(&self, p: Vec2) -> f64 {
        match self {
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let q = (p - Vec2::from(*center)).rotate(-rotation);
                (q.x / semi_axes[0]).powi(2) + (q.y / semi_axes[1]).powi(2)
            }
            _ => unreachable!(),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match self {
            Shape::Disc { center, radius } => (
                Vec2::new(center[0] - radius, center[1] - radius),
                Vec2::new(center[0] + radius, center[1] + radius),
            ),
            Shape::Ellipse { center, semi_axes, .. } => {
                let r = semi_axes[0].max(semi_axes[1]);
                (
                    Vec2::new(center[0] - r, center[1] - r),
                    Vec2::new(center[0] + r, center[1] + r),
                )
            }
            Shape::Polygon { vertices } => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo = Vec2::new(lo.x.min(v[0]), lo.y.min(v[1]));
                    hi = Vec2::new(hi.x.max(v[0]), hi.y.max(v[1]));
                }
                (lo, hi)
            }
        }
    }

    /// Largest distance from the origin to any boundary point.
    pub fn max_radius(&self) -> f64 {
        self.boundary_polyline(720)
            .points
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let pts = self.boundary_polyline(360).points;
        let mut d: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                d = d.max((*a - *b).norm());
            }
        }
        d
    }

    pub fn centroid(&self) -> Vec2 {
        match self {
            Shape::Disc { center, .. } | Shape::Ellipse { center, .. } => (*center).into(),
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    let w = p[0] * q[1] - q[0] * p[1];
                    a += w;
                    cx += (p[0] + q[0]) * w;
                    cy += (p[1] + q[1]) * w;
                }
                Vec2::new(cx / (3.0 * a), cy / (3.0 * a))
            }
        }
    }

    /// Boundary sampled as one closed polyline, counter-clockwise.
    pub fn boundary_polyline(&self, samples: usize) -> BoundaryPiece {
        let points = match self {
            Shape::Disc { center, radius } => (0..samples)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / samples as f64;
                    Vec2::new(center[0] + radius * a.cos(), center[1] + radius * a.sin())
                })
                .collect(),
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => (0..samples)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / samples as f64;
                    Vec2::new(semi_axes[0] * a.cos(), semi_axes[1] * a.sin()).rotate(*rotation)
                        + Vec2::from(*center)
                })
                .collect(),
            Shape::Polygon { vertices } => {
                let mut v: Vec<Vec2> = vertices.iter().map(|&p| p.into()).collect();
                if signed_area(&v) < 0.0 {
                    v.reverse();
                }
                v
            }
        };
        BoundaryPiece {
            points,
            closed: true,
        }
    }

    /// The smooth pieces of the boundary: one closed curve for discs and
    /// ellipses, one open segment per edge for polygons (counter-clockwise),
    /// each sampled with spacing at most `ds`.
    pub fn smooth_pieces(&self, ds: f64) -> Vec<BoundaryPiece> {
        match self {
            Shape::Polygon { .. } => {
                let v = self.boundary_polyline(0).points;
                let n = v.len();
                (0..n)
                    .map(|i| {
                        let a = v[i];
                        let b = v[(i + 1) % n];
                        let m = (((b - a).norm() / ds).ceil() as usize).max(1);
                        BoundaryPiece {
                            points: (0..=m).map(|k| a + (b - a) * (k as f64 / m as f64)).collect(),
                            closed: false,
                        }
                    })
                    .collect()
            }
            _ => {
                let rough = self.boundary_polyline(256).length();
                let m = ((rough / ds).ceil() as usize).max(64);
                vec![self.boundary_polyline(m)]
            }
        }
    }

    /// Polygon vertices (corners); smooth shapes have none.
    pub fn corners(&self) -> Vec<Vec2> {
        match self {
            Shape::Polygon { vertices } => vertices.iter().map(|&v| v.into()).collect(),
            _ => Vec::new(),
        }
    }

    /// Outward unit normal at the boundary point nearest to `p`.
    pub fn outward_normal(&self, p: Vec2) -> Vec2 {
        match self {
            Shape::Disc { center, .. } => (p - Vec2::from(*center)).normalized(),
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let q = (p - Vec2::from(*center)).rotate(-rotation);
                let g = Vec2::new(q.x / semi_axes[0].powi(2), q.y / semi_axes[1].powi(2));
                g.normalized().rotate(*rotation)
            }
            Shape::Polygon { .. } => {
                let piece = self.boundary_polyline(0);
                let mut best = (f64::INFINITY, Vec2::ZERO);
                for (a, b) in piece.edges() {
                    let e = b - a;
                    let t = ((p - a).dot(e) / e.dot(e)).clamp(0.0, 1.0);
                    let d = (p - (a + e * t)).norm();
                    if d < best.0 {
                        // counter-clockwise orientation: outward is to the right
                        best = (d, Vec2::new(e.y, -e.x).normalized());
                    }
                }
                best.1
            }
        }
    }

    /// Nearest boundary crossing of the ray `origin + t·dir` with `t > eps`.
    pub fn intersect_ray(&self, origin: Vec2, dir: Vec2, eps: f64) -> Option<RayHit> {
        match self {
            Shape::Disc { center, radius } => {
                let oc = origin - Vec2::from(*center);
                circle_roots(oc, dir, *radius, eps).map(|t| {
                    let point = origin + dir * t;
                    RayHit {
                        distance: t,
                        point,
                        normal: (point - Vec2::from(*center)).normalized(),
                    }
                })
            }
            Shape::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                // map to the unit circle; the ray parameter is preserved
                let o = (origin - Vec2::from(*center)).rotate(-rotation);
                let d = dir.rotate(-rotation);
                let os = Vec2::new(o.x / semi_axes[0], o.y / semi_axes[1]);
                let ds = Vec2::new(d.x / semi_axes[0], d.y / semi_axes[1]);
                let a = ds.dot(ds);
                let b = 2.0 * os.dot(ds);
                let c = os.dot(os) - 1.0;
                smallest_root(a, b, c, eps).map(|t| {
                    let point = origin + dir * t;
                    RayHit {
                        distance: t,
                        point,
                        normal: self.outward_normal(point),
                    }
                })
            }
            Shape::Polygon { .. } => {
                let piece = self.boundary_polyline(0);
                let mut best: Option<RayHit> = None;
                for (a, b) in piece.edges() {
                    let e = b - a;
                    let denom = dir.cross(e);
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let t = (a - origin).cross(e) / denom;
                    let u = (a - origin).cross(dir) / denom;
                    if t > eps && (0.0..=1.0).contains(&u) && best.map_or(true, |h| t < h.distance) {
                        best = Some(RayHit {
                            distance: t,
                            point: origin + dir * t,
                            normal: Vec2::new(e.y, -e.x).normalized(),
                        });
                    }
                }
                best
            }
        }
    }
}

fn circle_roots(oc: Vec2, dir: Vec2, radius: f64, eps: f64) -> Option<f64> {
    let a = dir.dot(dir);
    let b = 2.0 * oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    smallest_root(a, b, c, eps)
}

fn smallest_root(a: f64, b: f64, c: f64, eps: f64) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let (mut t0, mut t1) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    [t0, t1].into_iter().find(|&t| t > eps)
}

pub fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn point_in_polygon(vertices: &[[f64; 2]], p: Vec2) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (vertices[i][0], vertices[i][1]);
        let (xj, yj) = (vertices[j][0], vertices[j][1]);
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Interior angle (radians) at each polygon vertex, for cusp checks.
pub fn interior_angles(shape: &Shape) -> Vec<f64> {
    let v = shape.boundary_polyline(0).points;
    let n = v.len();
    if !matches!(shape, Shape::Polygon { .. }) {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let prev = v[(i + n - 1) % n];
            let next = v[(i + 1) % n];
            let a = prev - v[i];
            let b = next - v[i];
            let ang = b.cross(a).atan2(b.dot(a));
            if ang < 0.0 {
                ang + 2.0 * PI
            } else {
                ang
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Shape {
        Shape::Polygon {
            vertices: vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]],
        }
    }

    #[test]
    fn disc_signed_distance() {
        let d = Shape::disc([1.0, 0.0], 2.0);
        assert!((d.signed_distance(Vec2::new(1.0, 0.0)) + 2.0).abs() < 1e-15);
        assert!((d.signed_distance(Vec2::new(4.0, 0.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polygon_membership_and_distance() {
        let s = square();
        assert!(s.contains(Vec2::new(0.2, -0.3)));
        assert!(!s.contains(Vec2::new(1.2, 0.0)));
        assert!((s.signed_distance(Vec2::new(0.5, 0.0)) + 0.5).abs() < 1e-14);
        assert!((s.signed_distance(Vec2::new(2.0, 0.0)) - 1.0).abs() < 1e-14);
        let c = s.centroid();
        assert!(c.norm() < 1e-14);
    }

    #[test]
    fn polygon_angles_are_right_angles() {
        for a in interior_angles(&square()) {
            assert!((a - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_ray_hits_major_axis() {
        let e = Shape::Ellipse {
            center: [0.0, 0.0],
            semi_axes: [2.0, 1.0],
            rotation: 0.0,
        };
        let hit = e.intersect_ray(Vec2::ZERO, Vec2::new(1.0, 0.0), 1e-12).unwrap();
        assert!((hit.distance - 2.0).abs() < 1e-12);
        assert!((hit.normal.x - 1.0).abs() < 1e-12);
        assert!(e.contains(Vec2::new(1.9, 0.0)));
        assert!(!e.contains(Vec2::new(0.0, 1.1)));
        assert!((e.signed_distance(Vec2::new(0.0, 1.5)) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn disc_ray_from_outside() {
        let d = Shape::disc([0.0, 0.0], 1.0);
        let hit = d
            .intersect_ray(Vec2::new(-3.0, 0.0), Vec2::new(1.0, 0.0), 1e-12)
            .unwrap();
        assert!((hit.distance - 2.0).abs() < 1e-12);
        assert!((hit.normal.x + 1.0).abs() < 1e-12);
        assert!(d
            .intersect_ray(Vec2::new(-3.0, 2.0), Vec2::new(1.0, 0.0), 1e-12)
            .is_none());
    }

    #[test]
    fn polygon_pieces_and_normals() {
        let pieces = square().smooth_pieces(0.1);
        assert_eq!(pieces.len(), 4);
        let total: f64 = pieces.iter().map(BoundaryPiece::length).sum();
        assert!((total - 8.0).abs() < 1e-12);
        let n = square().outward_normal(Vec2::new(1.0, 0.2));
        assert!((n.x - 1.0).abs() < 1e-12 && n.y.abs() < 1e-12);
    }
}
