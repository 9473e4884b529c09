//! Ray survey for the nontrapping hypothesis: straight segments inside
//! zones, specular reflection at the obstacle, and Snell refraction with
//! reflection splitting at transmission interfaces.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{CoefficientField, ZoneCoefficient, ZoneLayout};
use crate::error::{Error, Result};
use crate::geometry::{Shape, Vec2};

/// Branches below this amplitude are pruned.
pub const PRUNE_AMPLITUDE: f64 = 1e-3;
/// Incidence within this angle of tangency is a glancing event.
pub const GLANCE_ANGLE_DEG: f64 = 0.5;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Transmitted(f64),
    TotalInternalReflection,
}

/// Snell's law `sin θ_t = (c_t / c_i) sin θ_i`.
pub fn snell_refract(theta_i: f64, c_i: f64, c_t: f64) -> Refraction {
    let s = c_t / c_i * theta_i.sin();
    if s.abs() > 1.0 {
        Refraction::TotalInternalReflection
    } else {
        Refraction::Transmitted(s.asin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Refracted and reflected children each take half.
    #[default]
    EqualHalves,
    /// Acoustic energy coefficients with impedance `1/c`.
    Acoustic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Launch,
    Reflect,
    Refract,
    #[serde(rename = "TIR")]
    Tir,
    Glance,
    Escape,
    Prune,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Launch => "launch",
            EventKind::Reflect => "reflect",
            EventKind::Refract => "refract",
            EventKind::Tir => "TIR",
            EventKind::Glance => "glance",
            EventKind::Escape => "escape",
            EventKind::Prune => "prune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub position: Vec2,
    pub direction: Vec2,
    pub zone: usize,
    pub time: f64,
    pub amplitude: f64,
    pub generation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub t: f64,
    pub position: Vec2,
    pub kind: EventKind,
    /// Zone the ray travels in after the event.
    pub zone: usize,
    pub amplitude: f64,
    /// Direction before and after the event.
    pub incoming: Vec2,
    pub outgoing: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Escaped { t: f64 },
    Trapped,
    Pruned,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub branch_id: usize,
    pub parent: Option<usize>,
    pub events: Vec<PathEvent>,
    pub outcome: Outcome,
}

/// Piecewise-constant speeds for the ray model.
#[derive(Debug, Clone)]
pub struct RayMedium {
    pub layout: ZoneLayout,
    /// Speed per zone index, `speeds[k - 1]` for zone `k`; last is exterior.
    pub speeds: Vec<f64>,
    pub split: SplitRule,
}

impl RayMedium {
    pub fn new(layout: &ZoneLayout, coeffs: &CoefficientField, split: SplitRule) -> Result<RayMedium> {
        let n = layout.zones.len();
        let mut speeds = Vec::with_capacity(n + 1);
        for k in 1..=n {
            let speed = match coeffs.for_zone(k) {
                Some(ZoneCoefficient::Speed { speed }) => *speed,
                Some(ZoneCoefficient::Constant { weight, metric })
                    if metric[0][1] == 0.0 && metric[1][0] == 0.0 && metric[0][0] == metric[1][1] =>
                {
                    (metric[0][0] / weight).sqrt()
                }
                _ => return Err(Error::UnsupportedVariableMetric(k)),
            };
            speeds.push(speed);
        }
        speeds.push(1.0);
        Ok(RayMedium {
            layout: layout.clone(),
            speeds,
            split,
        })
    }

    pub fn speed(&self, zone: usize) -> f64 {
        self.speeds[zone - 1]
    }

    pub fn min_speed(&self) -> f64 {
        self.speeds.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn ball(&self) -> Shape {
        Shape::disc([0.0, 0.0], self.layout.measurement_radius)
    }
}

enum Hit {
    Obstacle,
    Interface,
    Escape,
}

fn nearest_hit(m: &RayMedium, ray: &Ray) -> Option<(f64, Vec2, Vec2, Hit)> {
    let mut best: Option<(f64, Vec2, Vec2, Hit)> = None;
    let mut consider = |shape: &Shape, kind: Hit| {
        if let Some(hit) = shape.intersect_ray(ray.position, ray.direction, EPS) {
            if best.as_ref().map_or(true, |b| hit.distance < b.0) {
                best = Some((hit.distance, hit.point, hit.normal, kind));
            }
        }
    };
    for s in &m.layout.obstacle {
        consider(s, Hit::Obstacle);
    }
    for s in &m.layout.zones {
        consider(s, Hit::Interface);
    }
    consider(&m.ball(), Hit::Escape);
    best
}

fn reflect(d: Vec2, n: Vec2) -> Vec2 {
    (d - n * (2.0 * d.dot(n))).normalized()
}

/// Trace one launched ray and all its split branches up to `t_max`.
pub fn trace(medium: &RayMedium, ray: Ray, t_max: f64, max_splits: usize) -> Result<Vec<Branch>> {
    if medium.layout.in_obstacle(ray.position) {
        return Err(Error::PointInObstacle(ray.position.x, ray.position.y));
    }
    let launch = PathEvent {
        t: ray.time,
        position: ray.position,
        kind: EventKind::Launch,
        zone: ray.zone,
        amplitude: ray.amplitude,
        incoming: ray.direction,
        outgoing: ray.direction,
    };
    let mut pending = vec![(ray, None, launch)];
    let mut branches = Vec::new();
    let cos_glance = GLANCE_ANGLE_DEG.to_radians().sin();
    while let Some((mut r, parent, first)) = pending.pop() {
        let id = branches.len();
        let mut events = vec![first];
        let outcome = 'walk: loop {
            if first.kind != EventKind::Launch && (r.amplitude < PRUNE_AMPLITUDE || r.generation > max_splits) {
                events.push(PathEvent {
                    kind: EventKind::Prune,
                    ..*events.last().unwrap()
                });
                break 'walk Outcome::Pruned;
            }
            if events.len() > 100_000 {
                break 'walk Outcome::Trapped;
            }
            let c = medium.speed(r.zone);
            let Some((dist, point, normal, kind)) = nearest_hit(medium, &r) else {
                break 'walk Outcome::Trapped;
            };
            let t_hit = r.time + dist / c;
            if t_hit > t_max {
                break 'walk Outcome::Trapped;
            }
            r.position = point;
            r.time = t_hit;
            let d = r.direction;
            let cos_i = d.dot(normal).abs();
            let push = |events: &mut Vec<PathEvent>, kind: EventKind, r: &Ray, incoming: Vec2| {
                events.push(PathEvent {
                    t: r.time,
                    position: r.position,
                    kind,
                    zone: r.zone,
                    amplitude: r.amplitude,
                    incoming,
                    outgoing: r.direction,
                })
            };
            match kind {
                Hit::Escape => {
                    push(&mut events, EventKind::Escape, &r, d);
                    break 'walk Outcome::Escaped { t: r.time };
                }
                _ if cos_i < cos_glance => {
                    // continue along the tangent
                    let n = normal;
                    r.direction = (d - n * d.dot(n)).normalized();
                    r.position = r.position + r.direction * EPS;
                    push(&mut events, EventKind::Glance, &r, d);
                }
                Hit::Obstacle => {
                    r.direction = reflect(d, normal);
                    push(&mut events, EventKind::Reflect, &r, d);
                }
                Hit::Interface => {
                    let n_t = if d.dot(normal) > 0.0 { normal } else { -normal };
                    let probe = point + n_t * (1e-7 * medium.layout.measurement_radius);
                    let z_t = medium.layout.zone_of(probe);
                    let (c_i, c_t) = (c, medium.speed(z_t));
                    let sin_i = (1.0 - cos_i * cos_i).max(0.0).sqrt();
                    let reflected = reflect(d, n_t);
                    match snell_refract(sin_i.asin(), c_i, c_t) {
                        Refraction::TotalInternalReflection => {
                            r.direction = reflected;
                            push(&mut events, EventKind::Tir, &r, d);
                        }
                        Refraction::Transmitted(theta_t) => {
                            let cos_t = theta_t.cos();
                            let tangential = d - n_t * d.dot(n_t);
                            let transmitted = (tangential * (c_t / c_i) + n_t * cos_t).normalized();
                            let r_energy = match medium.split {
                                SplitRule::EqualHalves => 0.5,
                                SplitRule::Acoustic => {
                                    let (z1, z2) = (1.0 / c_i, 1.0 / c_t);
                                    ((z1 * cos_i - z2 * cos_t) / (z1 * cos_i + z2 * cos_t)).powi(2)
                                }
                            };
                            let parent_amp = r.amplitude;
                            let refl_amp = parent_amp * r_energy;
                            let child = Ray {
                                direction: reflected,
                                amplitude: refl_amp,
                                generation: r.generation + 1,
                                ..r
                            };
                            r.direction = transmitted;
                            r.zone = z_t;
                            r.amplitude = parent_amp - refl_amp;
                            r.generation += 1;
                            push(&mut events, EventKind::Refract, &r, d);
                            if refl_amp > 0.0 {
                                let birth = PathEvent {
                                    t: child.time,
                                    position: child.position,
                                    kind: EventKind::Reflect,
                                    zone: child.zone,
                                    amplitude: child.amplitude,
                                    incoming: d,
                                    outgoing: child.direction,
                                };
                                pending.push((child, Some(id), birth));
                            }
                            if r.amplitude <= 0.0 {
                                break 'walk Outcome::Pruned;
                            }
                        }
                    }
                }
            }
        };
        branches.push(Branch {
            branch_id: id,
            parent,
            events,
            outcome,
        });
    }
    Ok(branches)
}

/// Launch specification for one ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayProbe {
    pub position: [f64; 2],
    pub direction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub ray_id: usize,
    pub branch_id: usize,
    pub amplitude: f64,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub rays: usize,
    pub branches: usize,
    pub escaped: usize,
    pub trapped: usize,
    pub pruned: usize,
    pub max_escape_time: f64,
    /// Surviving branches at the horizon.
    pub trapped_census: Vec<CensusEntry>,
    /// Amplitude of surviving branches relative to the total launch weight.
    pub surviving_weight: f64,
    pub nontrapping_consistent: bool,
    /// `(2a + π r_K) / c_min` for a single disc obstacle in a homogeneous
    /// medium.
    pub chord_bound: Option<f64>,
    pub t_max: f64,
}

#[derive(Debug, Clone)]
pub struct Survey {
    pub report: EscapeReport,
    /// Per launched ray, its branches.
    pub traces: Vec<Vec<Branch>>,
}

/// Deterministic stratified launches in the fluid part of `B_a`: positions
/// on a golden-angle spiral, several evenly spaced directions each.
pub fn stratified_launches(layout: &ZoneLayout, n_rays: usize) -> Vec<RayProbe> {
    let a = layout.measurement_radius;
    let per = (n_rays as f64).sqrt().ceil().max(1.0) as usize;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut out = Vec::with_capacity(n_rays);
    let mut i = 0usize;
    let mut attempts = 0usize;
    while out.len() < n_rays && attempts < 50 * n_rays + 100 {
        attempts += 1;
        let m = 4 * per;
        let r = a * 0.999 * (((i % m) as f64 + 0.5) / m as f64).sqrt();
        let th = i as f64 * golden;
        i += 1;
        let p = Vec2::new(r * th.cos(), r * th.sin());
        if layout.in_obstacle(p) {
            continue;
        }
        let phase = th * 0.5;
        for d in 0..per {
            if out.len() == n_rays {
                break;
            }
            let ang = phase + 2.0 * std::f64::consts::PI * d as f64 / per as f64;
            out.push(RayProbe {
                position: [p.x, p.y],
                direction: [ang.cos(), ang.sin()],
            });
        }
    }
    out
}

pub fn escape_time_survey(
    medium: &RayMedium,
    n_rays: usize,
    probes: &[RayProbe],
    t_max: f64,
    max_splits: usize,
) -> Result<Survey> {
    let mut launches = stratified_launches(&medium.layout, n_rays);
    launches.extend_from_slice(probes);
    let mut traces = Vec::with_capacity(launches.len());
    let (mut escaped, mut trapped, mut pruned, mut n_branches) = (0, 0, 0, 0);
    let mut max_escape: f64 = 0.0;
    let mut census = Vec::new();
    let mut surviving = 0.0;
    for (ray_id, l) in launches.iter().enumerate() {
        let p = Vec2::from(l.position);
        let ray = Ray {
            position: p,
            direction: Vec2::from(l.direction).normalized(),
            zone: medium.layout.zone_of(p),
            time: 0.0,
            amplitude: 1.0,
            generation: 0,
        };
        let branches = trace(medium, ray, t_max, max_splits)?;
        for b in &branches {
            n_branches += 1;
            match b.outcome {
                Outcome::Escaped { t } => {
                    escaped += 1;
                    max_escape = max_escape.max(t);
                }
                Outcome::Trapped => {
                    trapped += 1;
                    let last = b.events.last().unwrap();
                    surviving += last.amplitude;
                    census.push(CensusEntry {
                        ray_id,
                        branch_id: b.branch_id,
                        amplitude: last.amplitude,
                        position: [last.position.x, last.position.y],
                    });
                }
                Outcome::Pruned => pruned += 1,
            }
        }
        traces.push(branches);
    }
    let chord_bound = match medium.layout.obstacle.as_slice() {
        [Shape::Disc { radius, .. }] if medium.layout.zones.is_empty() => {
            Some((2.0 * medium.layout.measurement_radius + std::f64::consts::PI * radius) / medium.min_speed())
        }
        _ => None,
    };
    let nontrapping_consistent = census.iter().all(|c| c.amplitude <= PRUNE_AMPLITUDE);
    Ok(Survey {
        report: EscapeReport {
            rays: launches.len(),
            branches: n_branches,
            escaped,
            trapped,
            pruned,
            max_escape_time: max_escape,
            trapped_census: census,
            surviving_weight: surviving / launches.len().max(1) as f64,
            nontrapping_consistent,
            chord_bound,
            t_max,
        },
        traces,
    })
}

/// `rays.csv`: `ray_id,branch_id,event_index,t,x,y,event_type,zone,amplitude`.
pub fn write_rays_csv(path: &Path, traces: &[Vec<Branch>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "ray_id,branch_id,event_index,t,x,y,event_type,zone,amplitude")?;
    for (ray_id, branches) in traces.iter().enumerate() {
        for b in branches {
            for (i, e) in b.events.iter().enumerate() {
                writeln!(
                    f,
                    "{ray_id},{},{i},{:?},{:?},{:?},{},{},{:?}",
                    b.branch_id,
                    e.t,
                    e.position.x,
                    e.position.y,
                    e.kind.as_str(),
                    e.zone,
                    e.amplitude
                )?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium(obstacle: Vec<Shape>, zones: Vec<Shape>, speeds: &[f64], a: f64) -> RayMedium {
        let layout = ZoneLayout {
            obstacle,
            zones,
            measurement_radius: a,
            box_half_width: a,
        };
        RayMedium::new(&layout, &CoefficientField::from_speeds_outermost_first(speeds), SplitRule::EqualHalves).unwrap()
    }

    fn launch(m: &RayMedium, p: [f64; 2], d: [f64; 2]) -> Ray {
        let p = Vec2::from(p);
        Ray {
            position: p,
            direction: Vec2::from(d).normalized(),
            zone: m.layout.zone_of(p),
            time: 0.0,
            amplitude: 1.0,
            generation: 0,
        }
    }

    #[test]
    fn snell_examples() {
        assert_eq!(snell_refract(0.0, 1.0, 2.0), Refraction::Transmitted(0.0));
        match snell_refract(30f64.to_radians(), 1.0, 1.0) {
            Refraction::Transmitted(t) => assert!((t - 30f64.to_radians()).abs() < 1e-12),
            _ => panic!(),
        }
        assert_eq!(
            snell_refract(60f64.to_radians(), 1.0, 1.5),
            Refraction::TotalInternalReflection
        );
    }

    #[test]
    fn free_space_escape_time() {
        let m = medium(vec![], vec![], &[], 2.5);
        let b = trace(&m, launch(&m, [0.0, 0.0], [0.6, 0.8]), 100.0, 10).unwrap();
        assert_eq!(b.len(), 1);
        match b[0].outcome {
            Outcome::Escaped { t } => assert!((t - 2.5).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn axis_ray_between_discs_is_trapped() {
        let m = medium(
            vec![Shape::disc([-1.0, 0.0], 0.5), Shape::disc([1.0, 0.0], 0.5)],
            vec![],
            &[],
            3.0,
        );
        let b = trace(&m, launch(&m, [0.0, 0.0], [1.0, 0.0]), 50.0, 10).unwrap();
        assert_eq!(b[0].outcome, Outcome::Trapped);
        assert!(b[0].events.iter().filter(|e| e.kind == EventKind::Reflect).count() >= 49);
    }

    #[test]
    fn refraction_preserves_tangential_slowness_and_weights() {
        let m = medium(vec![], vec![Shape::disc([0.0, 0.0], 1.0)], &[2.0], 3.0);
        let branches = trace(&m, launch(&m, [-2.0, 0.3], [1.0, 0.0]), 20.0, 8).unwrap();
        let mut refractions = 0;
        for b in &branches {
            for w in b.events.windows(2) {
                let e = w[1];
                if e.kind == EventKind::Refract {
                    refractions += 1;
                    let n = m.layout.zones[0].outward_normal(e.position);
                    let t = n.perp();
                    let c_in = m.speed(w[0].zone);
                    let c_out = m.speed(e.zone);
                    let s_in = e.incoming.dot(t) / c_in;
                    let s_out = e.outgoing.dot(t) / c_out;
                    assert!((s_in - s_out).abs() < 1e-12);
                }
            }
        }
        assert!(refractions > 0);
        // weights: escaped + surviving + pruned leaf amplitudes add to 1
        let leaves: f64 = branches.iter().map(|b| b.events.last().unwrap().amplitude).sum();
        assert!((leaves - 1.0).abs() < 1e-12, "{leaves}");
    }

    #[test]
    fn obstacle_reflection_is_reversible() {
        let m = medium(vec![Shape::disc([0.0, 0.0], 0.7)], vec![], &[], 3.0);
        let fwd = trace(&m, launch(&m, [-2.0, 0.4], [1.0, 0.05]), 100.0, 5).unwrap();
        assert_eq!(fwd.len(), 1);
        let ev = &fwd[0].events;
        let last = ev.last().unwrap();
        assert_eq!(last.kind, EventKind::Escape);
        let back_ray = Ray {
            position: last.position,
            direction: -last.incoming,
            zone: 1,
            time: 0.0,
            amplitude: 1.0,
            generation: 0,
        };
        // stop at the original launch time-distance
        let back = trace(&m, back_ray, last.t, 5).unwrap();
        let bev = &back[0].events;
        let fwd_pts: Vec<Vec2> = ev.iter().filter(|e| e.kind == EventKind::Reflect).map(|e| e.position).collect();
        let back_pts: Vec<Vec2> = bev.iter().filter(|e| e.kind == EventKind::Reflect).map(|e| e.position).collect();
        assert_eq!(fwd_pts.len(), back_pts.len());
        for (a, b) in fwd_pts.iter().zip(back_pts.iter().rev()) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn acoustic_split_conserves_weight() {
        let mut m = medium(vec![], vec![Shape::disc([0.0, 0.0], 1.0)], &[1.7], 3.0);
        m.split = SplitRule::Acoustic;
        let branches = trace(&m, launch(&m, [-2.0, 0.1], [1.0, 0.0]), 20.0, 8).unwrap();
        let leaves: f64 = branches.iter().map(|b| b.events.last().unwrap().amplitude).sum();
        assert!((leaves - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variable_metric_is_rejected() {
        let layout = ZoneLayout {
            obstacle: vec![],
            zones: vec![Shape::disc([0.0, 0.0], 1.0)],
            measurement_radius: 2.0,
            box_half_width: 2.0,
        };
        let coeffs = CoefficientField {
            zones: vec![ZoneCoefficient::Radial {
                center: [0.0, 0.0],
                speed_inner: 2.0,
                speed_outer: 1.0,
                r_inner: 0.2,
                r_outer: 0.8,
            }],
        };
        assert!(matches!(
            RayMedium::new(&layout, &coeffs, SplitRule::EqualHalves),
            Err(Error::UnsupportedVariableMetric(1))
        ));
    }
}
