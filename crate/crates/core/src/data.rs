//! Initial data: position/velocity pairs and smooth random bump generators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Grid, ZoneMap};
use crate::geometry::Vec2;
use crate::propagator::State;

/// Position and velocity fields on the padded grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

impl DataPair {
    pub fn zeros(grid: &Grid) -> DataPair {
        DataPair {
            w0: grid.zeros(),
            w1: grid.zeros(),
        }
    }

    pub fn from_state(s: &State) -> DataPair {
        DataPair {
            w0: s.u.clone(),
            w1: s.v.clone(),
        }
    }

    pub fn to_state(&self) -> State {
        State::new(self.w0.clone(), self.w1.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.w0.iter().chain(&self.w1).all(|&x| x == 0.0)
    }

    /// Zero both fields outside `mask`.
    pub fn restricted(&self, mask: &[bool]) -> DataPair {
        let keep = |f: &[f64]| f.iter().zip(mask).map(|(&x, &m)| if m { x } else { 0.0 }).collect();
        DataPair {
            w0: keep(&self.w0),
            w1: keep(&self.w1),
        }
    }

    pub fn scaled(&self, a: f64) -> DataPair {
        DataPair {
            w0: self.w0.iter().map(|x| a * x).collect(),
            w1: self.w1.iter().map(|x| a * x).collect(),
        }
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &DataPair, b: f64) -> DataPair {
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        DataPair {
            w0: lin(&self.w0, &other.w0),
            w1: lin(&self.w1, &other.w1),
        }
    }

    pub fn with_negated_velocity(&self) -> DataPair {
        DataPair {
            w0: self.w0.clone(),
            w1: self.w1.iter().map(|x| -x).collect(),
        }
    }

    pub fn norm_l2(&self) -> f64 {
        self.w0.iter().chain(&self.w1).map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// One compactly supported `C³` bump `A (1 - r²/ρ²)^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn value(&self, p: Vec2) -> f64 {
        let q = (p - Vec2::from(self.center)).norm() / self.radius;
        if q >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - q * q).powi(4)
        }
    }
}

/// Sum of bumps sampled on every fluid node of `map` (zero elsewhere).
pub fn bump_field(map: &ZoneMap, bumps: &[Bump]) -> Vec<f64> {
    let mut f = map.grid.zeros();
    for k in map.grid.nodes() {
        if map.is_fluid(k) {
            let p = map.grid.point_of(k);
            f[k] = bumps.iter().map(|b| b.value(p)).sum();
        }
    }
    f
}

/// Bump data: `w0` from `position`, `w1` from `velocity`.
pub fn bump_pair(map: &ZoneMap, position: &[Bump], velocity: &[Bump]) -> DataPair {
    DataPair {
        w0: bump_field(map, position),
        w1: bump_field(map, velocity),
    }
}

/// Draw `count` bumps whose supports lie in `allowed` (checked on the grid
/// with a safety margin of two cells). Radii are drawn in `radius_range`.
pub fn random_bumps<R: Rng>(
    map: &ZoneMap,
    allowed: &[bool],
    count: usize,
    radius_range: (f64, f64),
    rng: &mut R,
) -> Vec<Bump> {
    let grid = &map.grid;
    let candidates: Vec<usize> = grid.nodes().filter(|&k| allowed[k]).collect();
    let mut out = Vec::with_capacity(count);
    if candidates.is_empty() {
        return out;
    }
    let mut attempts = 0;
    while out.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        let c = grid.point_of(candidates[rng.gen_range(0..candidates.len())]);
        let radius = rng.gen_range(radius_range.0..=radius_range.1);
        if support_fits(grid, allowed, c, radius + 2.0 * grid.h) {
            out.push(Bump {
                center: [c.x, c.y],
                radius,
                amplitude: rng.gen_range(-1.0..1.0),
            });
        }
    }
    out
}

fn support_fits(grid: &Grid, allowed: &[bool], c: Vec2, r: f64) -> bool {
    let h = grid.h;
    let lo_i = ((c.x - r - grid.origin[0]) / h).floor();
    let hi_i = ((c.x + r - grid.origin[0]) / h).ceil();
    let lo_j = ((c.y - r - grid.origin[1]) / h).floor();
    let hi_j = ((c.y + r - grid.origin[1]) / h).ceil();
    if lo_i < 0.0 || lo_j < 0.0 || hi_i >= grid.nx as f64 || hi_j >= grid.ny as f64 {
        return false;
    }
    for j in lo_j as usize..=hi_j as usize {
        for i in lo_i as usize..=hi_i as usize {
            if (grid.point(i, j) - c).norm() < r && !allowed[grid.index(i, j)] {
                return false;
            }
        }
    }
    true
}

/// Smooth random data: a few bumps in both components.
pub fn random_smooth_pair<R: Rng>(
    map: &ZoneMap,
    allowed: &[bool],
    bumps_per_component: usize,
    radius_range: (f64, f64),
    rng: &mut R,
) -> DataPair {
    let p = random_bumps(map, allowed, bumps_per_component, radius_range, rng);
    let v = random_bumps(map, allowed, bumps_per_component, radius_range, rng);
    bump_pair(map, &p, &v)
}
