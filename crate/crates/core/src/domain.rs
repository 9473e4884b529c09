//! Exterior domain description and its rasterization.
//!
//! A [`ZoneLayout`] holds the obstacle, the nested transmission interfaces and
//! the measurement ball. [`ZoneMap::build`] rasterizes it onto a uniform
//! cell-centered grid: every node receives a zone index, a density weight `c`
//! and a metric `g`, and every face between nodes receives a harmonically
//! averaged conormal coefficient.
//!
//! Zone indices count from the obstacle outwards: zone 1 is adjacent to the
//! obstacle, zone `N + 1` is the exterior where `c = 1`, `g = I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interior_angles, BoundaryPiece, Shape, Vec2};

/// Minimum number of cells across any gap between consecutive boundaries.
pub const MIN_GAP_CELLS: f64 = 4.0;

/// Symmetric 2x2 metric stored as `(g11, g12, g22)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
}

impl Metric {
    pub const IDENTITY: Metric = Metric {
        g11: 1.0,
        g12: 0.0,
        g22: 1.0,
    };

    pub fn isotropic(s: f64) -> Metric {
        Metric {
            g11: s,
            g12: 0.0,
            g22: s,
        }
    }

    pub fn from_rows(m: [[f64; 2]; 2]) -> Metric {
        Metric {
            g11: m[0][0],
            g12: 0.5 * (m[0][1] + m[1][0]),
            g22: m[1][1],
        }
    }

    pub fn as_rows(&self) -> [[f64; 2]; 2] {
        [[self.g11, self.g12], [self.g12, self.g22]]
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let tr = self.g11 + self.g22;
        let det = self.g11 * self.g22 - self.g12 * self.g12;
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        (0.5 * tr - disc, 0.5 * tr + disc)
    }

    /// `a^T g b`
    pub fn bilinear(&self, a: Vec2, b: Vec2) -> f64 {
        a.x * (self.g11 * b.x + self.g12 * b.y) + a.y * (self.g12 * b.x + self.g22 * b.y)
    }
}

/// Coefficients of one zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ZoneCoefficient {
    /// Transmission-problem convention: `P = -s^2 Δ`, i.e. weight `1/s^2`
    /// and identity metric.
    Speed { speed: f64 },
    /// Explicit constant weight and metric.
    Constant { weight: f64, metric: [[f64; 2]; 2] },
    /// Isotropic speed varying smoothly with the distance to `center`:
    /// `speed_inner` for `r <= r_inner`, `speed_outer` for `r >= r_outer`.
    Radial {
        center: [f64; 2],
        speed_inner: f64,
        speed_outer: f64,
        r_inner: f64,
        r_outer: f64,
    },
}

impl ZoneCoefficient {
    pub fn at(&self, p: Vec2) -> (f64, Metric) {
        match self {
            ZoneCoefficient::Speed { speed } => (1.0 / (speed * speed), Metric::IDENTITY),
            ZoneCoefficient::Constant { weight, metric } => (*weight, Metric::from_rows(*metric)),
            ZoneCoefficient::Radial {
                center,
                speed_inner,
                speed_outer,
                r_inner,
                r_outer,
            } => {
                let r = (p - Vec2::from(*center)).norm();
                let s = smoothstep5(((r - r_inner) / (r_outer - r_inner)).clamp(0.0, 1.0));
                let speed = speed_inner + (speed_outer - speed_inner) * s;
                (1.0 / (speed * speed), Metric::IDENTITY)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, ZoneCoefficient::Radial { .. })
    }

    /// Local wave speed `sqrt(λ_max(g) / c)` at `p`.
    pub fn speed_at(&self, p: Vec2) -> f64 {
        let (c, g) = self.at(p);
        (g.eigenvalues().1 / c).sqrt()
    }

    fn validate(&self, zone: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidCoefficients(format!("zone {zone}: {msg}")));
        match self {
            ZoneCoefficient::Speed { speed } if !(*speed > 0.0) => bad("speed must be positive"),
            ZoneCoefficient::Constant { weight, metric } => {
                if !(*weight > 0.0) {
                    return bad("weight must be positive");
                }
                if (metric[0][1] - metric[1][0]).abs() > 1e-12 {
                    return bad("metric must be symmetric");
                }
                if Metric::from_rows(*metric).eigenvalues().0 <= 0.0 {
                    return bad("metric must be positive definite");
                }
                Ok(())
            }
            ZoneCoefficient::Radial {
                speed_inner,
                speed_outer,
                r_inner,
                r_outer,
                ..
            } => {
                if !(*speed_inner > 0.0 && *speed_outer > 0.0) {
                    return bad("speeds must be positive");
                }
                if !(r_outer > r_inner) {
                    return bad("r_outer must exceed r_inner");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Quintic smoothstep `6s^5 - 15s^4 + 10s^3` on `[0, 1]`.
pub fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// Geometry of the exterior domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLayout {
    /// Obstacle components; empty for free space.
    pub obstacle: Vec<Shape>,
    /// Transmission interfaces, outermost first.
    pub zones: Vec<Shape>,
    /// Radius `a` of the measurement ball `B_a` centered at the origin.
    pub measurement_radius: f64,
    /// Half width of the square computational box centered at the origin.
    pub box_half_width: f64,
}

/// Per-zone coefficients, listed in the same order as `ZoneLayout::zones`
/// (outermost first). The exterior is fixed to `c = 1`, `g = I`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientField {
    pub zones: Vec<ZoneCoefficient>,
}

impl CoefficientField {
    pub fn from_speeds_outermost_first(speeds: &[f64]) -> Self {
        Self {
            zones: speeds.iter().map(|&speed| ZoneCoefficient::Speed { speed }).collect(),
        }
    }

    /// Coefficient for zone index `k` (1 = innermost, `N + 1` = exterior).
    pub fn for_zone(&self, k: usize) -> Option<&ZoneCoefficient> {
        let n = self.zones.len();
        if k == 0 || k > n {
            None
        } else {
            Some(&self.zones[n - k])
        }
    }

    /// Speeds of the transmission ordering, innermost zone first, exterior
    /// last. `None` if some zone is not a constant isotropic speed.
    pub fn transmission_speeds(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self
            .zones
            .iter()
            .rev()
            .map(|z| match z {
                ZoneCoefficient::Speed { speed } => Some(*speed),
                _ => None,
            })
            .collect::<Option<_>>()?;
        out.push(1.0);
        Some(out)
    }

    /// Whether the strict ordering `c_1 > c_2 > ... > c_{m+1} > 0` holds.
    pub fn is_transmission_ordered(&self) -> bool {
        self.transmission_speeds()
            .map(|s| s.windows(2).all(|w| w[0] > w[1]) && s.iter().all(|&x| x > 0.0))
            .unwrap_or(false)
    }
}

impl ZoneLayout {
    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    pub fn in_obstacle(&self, p: Vec2) -> bool {
        self.obstacle.iter().any(|s| shape_contains(s, p))
    }

    /// Zone index of a point outside the obstacle (1 = innermost).
    pub fn zone_of(&self, p: Vec2) -> usize {
        let n = self.zones.len();
        let inside = self.zones.iter().filter(|s| shape_contains(s, p)).count();
        n + 1 - inside
    }

    /// Coefficients `(c, g)` at a point of the fluid region.
    pub fn coefficient_at(&self, coeffs: &CoefficientField, p: Vec2) -> Result<(f64, Metric)> {
        if self.in_obstacle(p) {
            return Err(Error::PointInObstacle(p.x, p.y));
        }
        Ok(match coeffs.for_zone(self.zone_of(p)) {
            Some(z) => z.at(p),
            None => (1.0, Metric::IDENTITY),
        })
    }

    /// Checks nesting, containment and grid resolution.
    pub fn validate(&self, coeffs: &CoefficientField, grid_spacing: f64) -> Result<()> {
        if coeffs.zones.len() != self.zones.len() {
            return Err(Error::InvalidCoefficients(format!(
                "{} zones but {} coefficient entries",
                self.zones.len(),
                coeffs.zones.len()
            )));
        }
        for (i, z) in coeffs.zones.iter().enumerate() {
            z.validate(self.zones.len() - i)?;
        }
        let samples = 720;
        let min_gap = MIN_GAP_CELLS * grid_spacing;
        // consecutive interfaces
        for (j, pair) in self.zones.windows(2).enumerate() {
            let gap = nested_gap(&pair[0], &pair[1], samples).ok_or_else(|| {
                Error::InvalidNesting(format!("interface {} is not strictly inside interface {}", j + 1, j))
            })?;
            if gap < min_gap {
                return Err(Error::UnresolvedGeometry(format!(
                    "gap {gap:.4} between interfaces {j} and {} is below {MIN_GAP_CELLS} cells",
                    j + 1
                )));
            }
        }
        // innermost interface against every obstacle part
        if let Some(inner) = self.zones.last() {
            for (k, part) in self.obstacle.iter().enumerate() {
                let gap = nested_gap(inner, part, samples).ok_or_else(|| {
                    Error::InvalidNesting(format!("obstacle part {k} is not strictly inside the innermost interface"))
                })?;
                if gap < min_gap {
                    return Err(Error::UnresolvedGeometry(format!(
                        "gap {gap:.4} between the innermost interface and obstacle part {k} is below {MIN_GAP_CELLS} cells"
                    )));
                }
            }
        }
        for i in 0..self.obstacle.len() {
            for j in i + 1..self.obstacle.len() {
                let pts = self.obstacle[j].boundary_polyline(samples).points;
                let gap = pts
                    .iter()
                    .map(|&p| self.obstacle[i].signed_distance(p))
                    .fold(f64::INFINITY, f64::min);
                if gap <= 0.0 {
                    return Err(Error::InvalidNesting(format!("obstacle parts {i} and {j} overlap")));
                }
                if gap < min_gap {
                    return Err(Error::UnresolvedGeometry(format!(
                        "gap {gap:.4} between obstacle parts {i} and {j} is below {MIN_GAP_CELLS} cells"
                    )));
                }
            }
        }
        let a = self.measurement_radius;
        let outer = self
            .zones
            .iter()
            .chain(self.obstacle.iter())
            .map(Shape::max_radius)
            .fold(0.0, f64::max);
        if outer > a {
            return Err(Error::InvalidNesting(format!(
                "measurement ball of radius {a} does not contain the zones and obstacle (radius {outer:.4})"
            )));
        }
        if self.box_half_width < a {
            return Err(Error::InvalidNesting(format!(
                "box half width {} smaller than measurement radius {a}",
                self.box_half_width
            )));
        }
        Ok(())
    }
}

fn shape_contains(s: &Shape, p: Vec2) -> bool {
    match s {
        Shape::Ellipse {
            center,
            semi_axes,
            rotation,
        } => {
            let q = (p - Vec2::from(*center)).rotate(-rotation);
            (q.x / semi_axes[0]).powi(2) + (q.y / semi_axes[1]).powi(2) < 1.0
        }
        _ => s.contains(p),
    }
}

/// Smallest distance from the boundary of `inner` to the boundary of
/// `outer`, or `None` if `inner` is not strictly inside `outer`.
fn nested_gap(outer: &Shape, inner: &Shape, samples: usize) -> Option<f64> {
    let mut gap = f64::INFINITY;
    for p in inner.boundary_polyline(samples).points {
        let d = outer.signed_distance(p);
        if d >= 0.0 {
            return None;
        }
        gap = gap.min(-d);
    }
    for p in outer.boundary_polyline(samples).points {
        if shape_contains(inner, p) {
            return None;
        }
        gap = gap.min(inner.signed_distance(p));
    }
    Some(gap)
}

/// Uniform cell-centered grid on `[-L, L]^2` stored with a one-node ring of
/// always-zero padding, so every interior node has four neighbours in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Coordinates of node (0, 0).
    pub origin: [f64; 2],
}

impl Grid {
    pub fn square(half_width: f64, h: f64) -> Grid {
        let n = (2.0 * half_width / h).round().max(1.0) as usize;
        let span = n as f64 * h;
        Grid {
            nx: n,
            ny: n,
            h,
            origin: [-0.5 * span + 0.5 * h, -0.5 * span + 0.5 * h],
        }
    }

    pub fn unit_box(n: usize) -> Grid {
        let h = 1.0 / (n as f64 + 1.0);
        Grid {
            nx: n,
            ny: n,
            h,
            origin: [h, h],
        }
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.nx + 2
    }

    /// Length of a padded field.
    pub fn len(&self) -> usize {
        (self.nx + 2) * (self.ny + 2)
    }

    pub fn is_empty(&self) -> bool {
        self.nx == 0 || self.ny == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j + 1) * self.stride() + i + 1
    }

    /// Inverse of [`Grid::index`] for interior nodes.
    pub fn coords(&self, k: usize) -> Option<(usize, usize)> {
        let s = self.stride();
        let (ii, jj) = (k % s, k / s);
        if ii == 0 || jj == 0 || ii > self.nx || jj > self.ny {
            None
        } else {
            Some((ii - 1, jj - 1))
        }
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        )
    }

    pub fn point_of(&self, k: usize) -> Vec2 {
        let s = self.stride();
        let (ii, jj) = (k % s, k / s);
        Vec2::new(
            self.origin[0] + (ii as f64 - 1.0) * self.h,
            self.origin[1] + (jj as f64 - 1.0) * self.h,
        )
    }

    /// Padded indices of all interior nodes, row by row.
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.index(i, j)))
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    /// Node nearest to `p`, if inside the grid.
    pub fn nearest(&self, p: Vec2) -> Option<usize> {
        let fi = ((p.x - self.origin[0]) / self.h).round();
        let fj = ((p.y - self.origin[1]) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            None
        } else {
            Some(self.index(fi as usize, fj as usize))
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }
}

/// Rasterized zone layout: per-node zone index, coefficients and masks, and
/// per-face conormal coefficients.
#[derive(Debug, Clone)]
pub struct ZoneMap {
    pub grid: Grid,
    pub layout: ZoneLayout,
    pub coeffs: CoefficientField,
    /// 0 for obstacle and padding nodes, otherwise 1..=N+1.
    pub zone: Vec<u8>,
    pub weight: Vec<f64>,
    pub metric: Vec<Metric>,
    /// Face coefficient between `k` and `k + 1` (harmonic mean of `g11`).
    pub face_x: Vec<f64>,
    /// Face coefficient between `k` and `k + stride` (harmonic mean of `g22`).
    pub face_y: Vec<f64>,
    /// Off-diagonal metric on the dual square with lower-left node `k`.
    pub cross: Vec<f64>,
    pub has_cross: bool,
    pub obstacle: Vec<bool>,
    /// Fluid nodes with an obstacle node among their four neighbours.
    pub obstacle_boundary: Vec<bool>,
    pub ball: Vec<bool>,
    /// Largest local wave speed over fluid nodes.
    pub max_speed: f64,
}

impl ZoneMap {
    /// Rasterize `layout` with cell-center staircase masking.
    pub fn build(layout: &ZoneLayout, coeffs: &CoefficientField, grid_spacing: f64) -> Result<ZoneMap> {
        layout.validate(coeffs, grid_spacing)?;
        let grid = Grid::square(layout.box_half_width, grid_spacing);
        Ok(Self::rasterize(grid, layout, coeffs))
    }

    /// Rasterize on an explicit grid without geometric validation. Used for
    /// test harnesses such as the unit Dirichlet box.
    pub fn rasterize(grid: Grid, layout: &ZoneLayout, coeffs: &CoefficientField) -> ZoneMap {
        let n = grid.len();
        let mut zone = vec![0u8; n];
        let mut weight = vec![0.0; n];
        let mut metric = vec![Metric::IDENTITY; n];
        let mut obstacle = vec![false; n];
        let mut ball = vec![false; n];
        let a2 = layout.measurement_radius * layout.measurement_radius;
        let mut max_speed: f64 = 0.0;
        for k in grid.nodes() {
            let p = grid.point_of(k);
            if layout.in_obstacle(p) {
                obstacle[k] = true;
                continue;
            }
            let z = layout.zone_of(p);
            zone[k] = z as u8;
            let (c, g) = match coeffs.for_zone(z) {
                Some(zc) => zc.at(p),
                None => (1.0, Metric::IDENTITY),
            };
            weight[k] = c;
            metric[k] = g;
            max_speed = max_speed.max((g.eigenvalues().1 / c).sqrt());
            ball[k] = p.dot(p) <= a2;
        }
        let s = grid.stride();
        let mut face_x = vec![0.0; n];
        let mut face_y = vec![0.0; n];
        let mut cross = vec![0.0; n];
        let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                // padded coordinates (i, j) .. (i + 1, j + 1)
                let k = j * s + i;
                let fluid = |q: usize| zone[q] != 0;
                if j >= 1 {
                    face_x[k] = match (fluid(k), fluid(k + 1)) {
                        (true, true) => harmonic(metric[k].g11, metric[k + 1].g11),
                        (true, false) => metric[k].g11,
                        (false, true) => metric[k + 1].g11,
                        _ => 0.0,
                    };
                }
                if i >= 1 {
                    face_y[k] = match (fluid(k), fluid(k + s)) {
                        (true, true) => harmonic(metric[k].g22, metric[k + s].g22),
                        (true, false) => metric[k].g22,
                        (false, true) => metric[k + s].g22,
                        _ => 0.0,
                    };
                }
                let corners = [k, k + 1, k + s, k + s + 1];
                let fl: Vec<usize> = corners.iter().copied().filter(|&q| fluid(q)).collect();
                if !fl.is_empty() {
                    cross[k] = fl.iter().map(|&q| metric[q].g12).sum::<f64>() / fl.len() as f64;
                }
            }
        }
        let has_cross = cross.iter().any(|&c| c != 0.0);
        let mut obstacle_boundary = vec![false; n];
        for k in grid.nodes() {
            if zone[k] != 0 && [k - 1, k + 1, k - s, k + s].iter().any(|&q| obstacle[q]) {
                obstacle_boundary[k] = true;
            }
        }
        ZoneMap {
            grid,
            layout: layout.clone(),
            coeffs: coeffs.clone(),
            zone,
            weight,
            metric,
            face_x,
            face_y,
            cross,
            has_cross,
            obstacle,
            obstacle_boundary,
            ball,
            max_speed,
        }
    }

    /// Constant-coefficient unit square `[0, 1]^2` with `n x n` interior
    /// nodes and homogeneous Dirichlet walls. Test harness for the solver.
    pub fn unit_box(n: usize) -> ZoneMap {
        let layout = ZoneLayout {
            obstacle: vec![],
            zones: vec![],
            measurement_radius: 2.0,
            box_half_width: 0.5,
        };
        Self::rasterize(Grid::unit_box(n), &layout, &CoefficientField::default())
    }

    pub fn is_fluid(&self, k: usize) -> bool {
        self.zone[k] != 0
    }

    /// Lookup of `(c, g)` at a fluid node.
    pub fn node_coefficient(&self, k: usize) -> Option<(f64, Metric)> {
        self.is_fluid(k).then(|| (self.weight[k], self.metric[k]))
    }

    /// Rasterized area of each zone (index 1..=N+1), restricted to `B_a`.
    pub fn zone_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.zone_count() + 2];
        for k in self.grid.nodes() {
            if self.ball[k] {
                out[self.zone[k] as usize] += self.grid.cell_area();
            }
        }
        out.remove(0);
        out
    }
}

/// Tag of one smooth piece of the control-region boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentTag {
    /// Strictly inside one zone.
    Zone(usize),
    /// Crosses a transmission interface; trace regularity is assumed.
    Crossing,
    /// Part of the obstacle boundary: homogeneous Dirichlet, no control.
    Obstacle,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: usize,
    pub piece: BoundaryPiece,
    pub tag: SegmentTag,
}

/// The control region `Ω*`: a shape with piecewise-smooth boundary, minus the
/// obstacle, together with its collar width `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRegion {
    pub shape: Shape,
    /// Collar width; defaults to 10% of the diameter.
    pub delta: Option<f64>,
}

impl ControlRegion {
    pub fn new(shape: Shape) -> Self {
        Self { shape, delta: None }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| 0.1 * self.shape.diameter())
    }

    /// Smooth pieces of `∂Ω*` with their zone tags. Obstacle components lying
    /// inside the shape contribute `Obstacle` segments.
    pub fn segments(&self, layout: &ZoneLayout, ds: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        for piece in self.shape.smooth_pieces(ds) {
            let zones: Vec<usize> = piece
                .points
                .iter()
                .filter(|&&p| !layout.in_obstacle(p))
                .map(|&p| layout.zone_of(p))
                .collect();
            let touches_obstacle = piece.points.iter().any(|&p| layout.in_obstacle(p));
            let tag = if touches_obstacle && zones.is_empty() {
                SegmentTag::Obstacle
            } else if touches_obstacle || zones.windows(2).any(|w| w[0] != w[1]) {
                SegmentTag::Crossing
            } else {
                SegmentTag::Zone(zones[0])
            };
            out.push(Segment {
                id: out.len(),
                piece,
                tag,
            });
        }
        for part in &layout.obstacle {
            let pts = part.boundary_polyline(256).points;
            if pts.iter().all(|&p| self.shape.contains(p)) {
                let rough = part.boundary_polyline(256).length();
                out.push(Segment {
                    id: out.len(),
                    piece: part.boundary_polyline(((rough / ds).ceil() as usize).max(64)),
                    tag: SegmentTag::Obstacle,
                });
            }
        }
        out
    }

    pub fn validate(&self, layout: &ZoneLayout) -> Result<()> {
        let a = layout.measurement_radius;
        let delta = self.delta();
        if !(delta > 0.0) {
            return Err(Error::DegenerateCollar(format!("collar width {delta} must be positive")));
        }
        let r = self.shape.max_radius();
        if r + delta > a {
            return Err(Error::InvalidNesting(format!(
                "collar of the control region (radius {:.4}) leaves the measurement ball (radius {a})",
                r + delta
            )));
        }
        for ang in interior_angles(&self.shape) {
            let eps = 5f64.to_radians();
            if ang < eps || ang > 2.0 * std::f64::consts::PI - eps {
                return Err(Error::InvalidNesting(format!(
                    "control region has a cusp (interior angle {:.2} deg)",
                    ang.to_degrees()
                )));
            }
        }
        let c = self.shape.centroid();
        if layout.in_obstacle(c) && layout.obstacle.iter().all(|o| !self.shape.contains(o.centroid())) {
            return Err(Error::InvalidNesting("control region centroid lies in the obstacle".into()));
        }
        Ok(())
    }
}

/// Masks and signed distance of the control region on a zone map.
#[derive(Debug, Clone)]
pub struct RegionMap {
    pub region: ControlRegion,
    pub delta: f64,
    /// Signed distance to the boundary of the region shape; `+inf` far away.
    pub distance: Vec<f64>,
    /// Fluid nodes inside `Ω*`.
    pub inside: Vec<bool>,
    /// Fluid nodes inside the collar `Ω*_δ`.
    pub collar: Vec<bool>,
}

impl RegionMap {
    pub fn build(zone_map: &ZoneMap, region: &ControlRegion) -> Result<RegionMap> {
        region.validate(&zone_map.layout)?;
        let grid = &zone_map.grid;
        let delta = region.delta();
        let (lo, hi) = region.shape.bounding_box();
        let reach = delta + 3.0 * grid.h;
        let n = grid.len();
        let mut distance = vec![f64::INFINITY; n];
        let mut inside = vec![false; n];
        let mut collar = vec![false; n];
        for k in grid.nodes() {
            let p = grid.point_of(k);
            if p.x < lo.x - reach || p.x > hi.x + reach || p.y < lo.y - reach || p.y > hi.y + reach {
                continue;
            }
            let d = region.shape.signed_distance(p);
            distance[k] = d;
            if zone_map.is_fluid(k) {
                inside[k] = d < 0.0;
                collar[k] = d < delta;
            }
        }
        if !inside.iter().any(|&b| b) {
            return Err(Error::UnresolvedGeometry("control region contains no fluid node".into()));
        }
        Ok(RegionMap {
            region: region.clone(),
            delta,
            distance,
            inside,
            collar,
        })
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Smooth cutoff: 1 where the signed distance is below `inner·δ`, 0 beyond
    /// `outer·δ`, quintic smoothstep in between. Obstacle nodes get 0.
    pub fn cutoff(&self, zone_map: &ZoneMap, inner_fraction: f64, outer_fraction: f64) -> Result<Vec<f64>> {
        if !(0.0 <= inner_fraction && inner_fraction < outer_fraction && outer_fraction <= 1.0) {
            return Err(Error::DegenerateCollar(format!(
                "cutoff fractions must satisfy 0 <= {inner_fraction} < {outer_fraction} <= 1"
            )));
        }
        let band = (outer_fraction - inner_fraction) * self.delta;
        if band < 3.0 * zone_map.grid.h {
            return Err(Error::DegenerateCollar(format!(
                "transition band {band:.4} is thinner than 3 cells (h = {})",
                zone_map.grid.h
            )));
        }
        let d_in = inner_fraction * self.delta;
        let d_out = outer_fraction * self.delta;
        Ok(self
            .distance
            .iter()
            .zip(&zone_map.zone)
            .map(|(&d, &z)| {
                if z == 0 || !d.is_finite() {
                    0.0
                } else {
                    smoothstep5((d_out - d) / (d_out - d_in))
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concentric() -> (ZoneLayout, CoefficientField) {
        let layout = ZoneLayout {
            obstacle: vec![Shape::disc([0.0, 0.0], 1.0)],
            zones: vec![Shape::disc([0.0, 0.0], 3.0), Shape::disc([0.0, 0.0], 2.0)],
            measurement_radius: 3.5,
            box_half_width: 4.0,
        };
        // outermost first: zone 2 (between radii 2 and 3), zone 1 (inside 2)
        let coeffs = CoefficientField::from_speeds_outermost_first(&[1.5, 2.0]);
        (layout, coeffs)
    }

    #[test]
    fn obstacle_cells_are_masked() {
        let layout = ZoneLayout {
            obstacle: vec![Shape::disc([0.0, 0.0], 1.0)],
            zones: vec![],
            measurement_radius: 2.0,
            box_half_width: 2.0,
        };
        let map = ZoneMap::build(&layout, &CoefficientField::default(), 0.1).unwrap();
        for k in map.grid.nodes() {
            let r = map.grid.point_of(k).norm();
            assert_eq!(map.obstacle[k], r < 1.0, "node at radius {r}");
        }
    }

    #[test]
    fn zone_lookup_between_interfaces() {
        let (layout, coeffs) = concentric();
        let map = ZoneMap::build(&layout, &coeffs, 0.1).unwrap();
        let k = map.grid.nearest(Vec2::new(2.5, 0.05)).unwrap();
        assert_eq!(map.zone[k], 2);
        let (c, _) = map.node_coefficient(k).unwrap();
        assert!((1.0 / c.sqrt() - 1.5).abs() < 1e-12);
        let k1 = map.grid.nearest(Vec2::new(1.5, 0.05)).unwrap();
        assert_eq!(map.zone[k1], 1);
        assert!(coeffs.is_transmission_ordered());
    }

    #[test]
    fn exterior_is_flat() {
        let (layout, coeffs) = concentric();
        let (c, g) = layout.coefficient_at(&coeffs, Vec2::new(3.2, 0.0)).unwrap();
        assert_eq!(c, 1.0);
        assert_eq!(g, Metric::IDENTITY);
    }

    #[test]
    fn configured_metric_lookup() {
        let layout = ZoneLayout {
            obstacle: vec![Shape::disc([0.0, 0.0], 0.5)],
            zones: vec![Shape::disc([0.0, 0.0], 2.0)],
            measurement_radius: 2.5,
            box_half_width: 3.0,
        };
        let coeffs = CoefficientField {
            zones: vec![ZoneCoefficient::Constant {
                weight: 2.0,
                metric: [[2.0, 0.0], [0.0, 1.0]],
            }],
        };
        let (c, g) = layout.coefficient_at(&coeffs, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(c, 2.0);
        assert_eq!(g.as_rows(), [[2.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            layout.coefficient_at(&coeffs, Vec2::new(0.1, 0.0)),
            Err(Error::PointInObstacle(..))
        ));
    }

    #[test]
    fn unresolved_and_bad_nesting_are_rejected() {
        let (layout, coeffs) = concentric();
        assert!(matches!(
            ZoneMap::build(&layout, &coeffs, 0.3),
            Err(Error::UnresolvedGeometry(_))
        ));
        let mut swapped = layout.clone();
        swapped.zones.reverse();
        assert!(matches!(
            ZoneMap::build(&swapped, &coeffs, 0.1),
            Err(Error::InvalidNesting(_))
        ));
    }

    #[test]
    fn zone_index_is_monotone_along_rays() {
        let (layout, coeffs) = concentric();
        let map = ZoneMap::build(&layout, &coeffs, 0.1).unwrap();
        for a in 0..16 {
            let dir = Vec2::new(1.0, 0.0).rotate(a as f64 * 0.39);
            let mut last = 0u8;
            let mut r = 1.05;
            while r < 3.9 {
                if let Some(k) = map.grid.nearest(dir * r) {
                    if map.is_fluid(k) {
                        assert!(map.zone[k] >= last);
                        last = map.zone[k];
                    }
                }
                r += 0.05;
            }
        }
    }

    #[test]
    fn masks_partition_grid() {
        let (layout, coeffs) = concentric();
        let map = ZoneMap::build(&layout, &coeffs, 0.1).unwrap();
        let (mut fluid, mut obst, mut pad) = (0, 0, 0);
        for k in 0..map.grid.len() {
            match (map.grid.coords(k), map.obstacle[k], map.is_fluid(k)) {
                (None, false, false) => pad += 1,
                (Some(_), true, false) => obst += 1,
                (Some(_), false, true) => fluid += 1,
                other => panic!("node {k} classified inconsistently: {other:?}"),
            }
        }
        assert_eq!(fluid + obst + pad, map.grid.len());
    }

    #[test]
    fn refinement_changes_areas_by_order_h() {
        let (layout, coeffs) = concentric();
        let coarse = ZoneMap::build(&layout, &coeffs, 0.1).unwrap().zone_areas();
        let fine = ZoneMap::build(&layout, &coeffs, 0.05).unwrap().zone_areas();
        let exact = [
            std::f64::consts::PI * (4.0 - 1.0),
            std::f64::consts::PI * (9.0 - 4.0),
        ];
        for z in 0..2 {
            assert!((coarse[z] - fine[z]).abs() < 0.1 * 2.0 * std::f64::consts::PI * 3.0);
            assert!((fine[z] - exact[z]).abs() < 0.05 * 2.0 * std::f64::consts::PI * 3.0);
        }
    }

    fn region_setup() -> (ZoneMap, RegionMap) {
        let layout = ZoneLayout {
            obstacle: vec![Shape::disc([0.0, 0.0], 0.3)],
            zones: vec![],
            measurement_radius: 2.0,
            box_half_width: 2.5,
        };
        let map = ZoneMap::build(&layout, &CoefficientField::default(), 0.02).unwrap();
        let region = ControlRegion {
            shape: Shape::disc([0.0, 0.0], 1.0),
            delta: Some(0.4),
        };
        let rm = RegionMap::build(&map, &region).unwrap();
        (map, rm)
    }

    #[test]
    fn cutoff_values_and_range() {
        let (map, rm) = region_setup();
        let phi = rm.cutoff(&map, 0.5, 0.75).unwrap();
        let at = |p: Vec2| phi[map.grid.nearest(p).unwrap()];
        assert_eq!(at(Vec2::new(0.6, 0.01)), 1.0);
        assert_eq!(at(Vec2::new(1.5, 0.0)), 0.0);
        for (k, &v) in phi.iter().enumerate() {
            assert!((0.0..=1.0).contains(&v));
            let d = rm.distance[k];
            if d < 0.2 - 1e-12 || d > 0.3 + 1e-12 {
                assert_eq!(v * (1.0 - v), 0.0);
            }
        }
    }

    #[test]
    fn cutoff_gradient_matches_smoothstep_profile() {
        let (map, rm) = region_setup();
        let phi = rm.cutoff(&map, 0.0, 0.5).unwrap();
        let band = 0.2;
        let h = map.grid.h;
        // 1-D oracle: derivative of the quintic on the signed-distance profile
        let oracle_max = (0..=1000)
            .map(|i| {
                let s = i as f64 / 1000.0;
                30.0 * s * s * (1.0 - s) * (1.0 - s) / band
            })
            .fold(0.0, f64::max);
        let mut measured: f64 = 0.0;
        let s = map.grid.stride();
        for k in map.grid.nodes() {
            if map.is_fluid(k) && map.is_fluid(k + 1) && map.is_fluid(k + s) {
                let gx = (phi[k + 1] - phi[k]) / h;
                let gy = (phi[k + s] - phi[k]) / h;
                measured = measured.max(gx.hypot(gy));
            }
        }
        assert!(measured <= 3.0 / band);
        assert!(measured <= oracle_max * 1.1);
        assert!(measured >= oracle_max * 0.8);
    }

    #[test]
    fn thin_cutoff_band_is_degenerate() {
        let (map, rm) = region_setup();
        assert!(matches!(rm.cutoff(&map, 0.5, 0.55), Err(Error::DegenerateCollar(_))));
    }

    #[test]
    fn segments_tag_obstacle_and_zone() {
        let layout = ZoneLayout {
            obstacle: vec![Shape::disc([0.0, 0.0], 0.3)],
            zones: vec![Shape::disc([0.0, 0.0], 1.5)],
            measurement_radius: 2.5,
            box_half_width: 3.0,
        };
        let region = ControlRegion::new(Shape::disc([0.0, 0.0], 1.0));
        let segs = region.segments(&layout, 0.05);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].tag, SegmentTag::Zone(1));
        assert_eq!(segs[1].tag, SegmentTag::Obstacle);
        let square = ControlRegion::new(Shape::Polygon {
            vertices: vec![[-2.0, -0.5], [2.0, -0.5], [2.0, 0.5], [-2.0, 0.5]],
        });
        assert!(square
            .segments(&layout, 0.05)
            .iter()
            .any(|s| s.tag == SegmentTag::Crossing));
    }
}
