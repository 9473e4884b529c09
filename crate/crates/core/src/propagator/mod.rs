//! Explicit leapfrog solver for `∂_t² u + P u = 0`, `P = -c⁻¹ ∂_i (g_ij ∂_j)`.
//!
//! The spatial operator is the divergence-form stiffness `K` over faces (plus
//! a dual-square term for off-diagonal metrics), with lumped mass
//! `M = c h²`, so the semi-discrete system is `M ü + K u = 0`. Time stepping
//! is velocity Verlet, which is exactly reversible and conserves the
//! modified energy [`Propagator::conserved_energy`].

mod oracle;
mod snapshot;

pub use oracle::{assemble_discrete_operator, propagate_oracle, DenseOperator, SpectralOracle, ORACLE_LIMIT};
pub use snapshot::{read_snapshot, write_history, write_snapshot, Snapshot, SnapshotFormat};

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, ZoneMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleBc {
    #[default]
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    /// Homogeneous Dirichlet walls on a box big enough that nothing returns.
    #[default]
    ExactBox,
    /// Graded damping `σ = strength·(depth/width)²` in a layer along the walls.
    SpongeLayer { width: f64, strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Explicit time step; `None` picks `cfl_safety` times the stability limit.
    #[serde(default)]
    pub time_step: Option<f64>,
    #[serde(default)]
    pub obstacle_bc: ObstacleBc,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
}

fn default_cfl_safety() -> f64 {
    0.9
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_step: None,
            obstacle_bc: ObstacleBc::Dirichlet,
            truncation: Truncation::ExactBox,
            cfl_safety: default_cfl_safety(),
        }
    }
}

/// Displacement and velocity on the padded grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn zeros(grid: &Grid) -> State {
        State {
            u: grid.zeros(),
            v: grid.zeros(),
            time: 0.0,
        }
    }

    pub fn new(u: Vec<f64>, v: Vec<f64>) -> State {
        State { u, v, time: 0.0 }
    }

    pub fn scaled(&self, a: f64) -> State {
        State {
            u: self.u.iter().map(|x| a * x).collect(),
            v: self.v.iter().map(|x| a * x).collect(),
            time: self.time,
        }
    }

    pub fn with_negated_velocity(mut self) -> State {
        self.v.iter_mut().for_each(|x| *x = -*x);
        self
    }

    pub fn norm_l2(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `‖self - other‖ / ‖other‖` over the concatenation `[u; v]`.
    pub fn rel_diff(&self, other: &State) -> f64 {
        let num: f64 = self
            .u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        num.sqrt() / other.norm_l2()
    }
}

/// Stiffness and mass of the discrete operator on a zone map.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub grid: Grid,
    pub face_x: Vec<f64>,
    pub face_y: Vec<f64>,
    /// Off-diagonal metric per dual square, `None` if identically zero.
    pub cross: Option<Vec<f64>>,
    pub mass: Vec<f64>,
    pub inv_mass: Vec<f64>,
    pub fluid: Vec<bool>,
}

impl Stencil {
    pub fn new(map: &ZoneMap, bc: ObstacleBc) -> Stencil {
        let grid = map.grid;
        let s = grid.stride();
        let mut face_x = map.face_x.clone();
        let mut face_y = map.face_y.clone();
        let mut cross = map.has_cross.then(|| map.cross.clone());
        if bc == ObstacleBc::Neumann {
            for k in 0..grid.len() {
                if k + 1 < grid.len() && (map.obstacle[k] || map.obstacle[k + 1]) {
                    face_x[k] = 0.0;
                }
                if k + s < grid.len() && (map.obstacle[k] || map.obstacle[k + s]) {
                    face_y[k] = 0.0;
                }
            }
            if let Some(c) = cross.as_mut() {
                for k in 0..grid.len() - s - 1 {
                    if [k, k + 1, k + s, k + s + 1].iter().any(|&q| map.obstacle[q]) {
                        c[k] = 0.0;
                    }
                }
            }
        }
        let h2 = grid.h * grid.h;
        let mass: Vec<f64> = map.weight.iter().map(|&c| c * h2).collect();
        let inv_mass = mass.iter().map(|&m| if m > 0.0 { 1.0 / m } else { 0.0 }).collect();
        let fluid = map.zone.iter().map(|&z| z != 0).collect();
        Stencil {
            grid,
            face_x,
            face_y,
            cross,
            mass,
            inv_mass,
            fluid,
        }
    }

    /// `out = K u` on fluid nodes, zero elsewhere. `u` must vanish off fluid.
    pub fn apply_stiffness(&self, u: &[f64], out: &mut [f64]) {
        let s = self.grid.stride();
        let (fx, fy) = (&self.face_x, &self.face_y);
        for j in 1..=self.grid.ny {
            let row = j * s;
            for k in row + 1..=row + self.grid.nx {
                out[k] = if self.fluid[k] {
                    let uk = u[k];
                    fx[k] * (uk - u[k + 1])
                        + fx[k - 1] * (uk - u[k - 1])
                        + fy[k] * (uk - u[k + s])
                        + fy[k - s] * (uk - u[k - s])
                } else {
                    0.0
                };
            }
        }
        if let Some(cross) = &self.cross {
            for j in 0..=self.grid.ny {
                for i in 0..=self.grid.nx {
                    let a = j * s + i;
                    let g = cross[a];
                    if g == 0.0 {
                        continue;
                    }
                    let (b, c, d) = (a + 1, a + s, a + s + 1);
                    let x = u[b] + u[d] - u[a] - u[c];
                    let y = u[c] + u[d] - u[a] - u[b];
                    let q = 0.25 * g;
                    if self.fluid[a] {
                        out[a] += q * (-x - y);
                    }
                    if self.fluid[b] {
                        out[b] += q * (y - x);
                    }
                    if self.fluid[c] {
                        out[c] += q * (x - y);
                    }
                    if self.fluid[d] {
                        out[d] += q * (x + y);
                    }
                }
            }
        }
    }

    /// Upper bound on the spectrum of `M⁻¹K` from Gershgorin row sums.
    pub fn spectral_bound(&self) -> f64 {
        let s = self.grid.stride();
        let mut row = vec![0.0; self.grid.len()];
        for k in self.grid.nodes() {
            if self.fluid[k] {
                let diag = self.face_x[k] + self.face_x[k - 1] + self.face_y[k] + self.face_y[k - s];
                row[k] = 2.0 * diag;
            }
        }
        if let Some(cross) = &self.cross {
            for j in 0..=self.grid.ny {
                for i in 0..=self.grid.nx {
                    let a = j * s + i;
                    for q in [a, a + 1, a + s, a + s + 1] {
                        row[q] += cross[a].abs();
                    }
                }
            }
        }
        self.grid
            .nodes()
            .filter(|&k| self.fluid[k])
            .map(|k| row[k] * self.inv_mass[k])
            .fold(0.0, f64::max)
    }

    /// Largest stable leapfrog step `2 / sqrt(λ_max)`.
    pub fn cfl_limit(&self) -> f64 {
        2.0 / self.spectral_bound().sqrt()
    }

    pub fn unknowns(&self) -> usize {
        self.fluid.iter().filter(|&&f| f).count()
    }

    /// `uᵀ K u`.
    pub fn stiffness_energy(&self, u: &[f64]) -> f64 {
        let mut ku = vec![0.0; u.len()];
        self.apply_stiffness(u, &mut ku);
        u.iter().zip(&ku).map(|(a, b)| a * b).sum()
    }

    /// `vᵀ M v`.
    pub fn kinetic_energy(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.mass).map(|(x, m)| m * x * x).sum()
    }

    /// Node density of `uᵀKu + vᵀMv`: each face's share goes half to each
    /// fluid endpoint (all of it if the other end is masked or padding).
    pub fn energy_density(&self, state: &State) -> Vec<f64> {
        let s = self.grid.stride();
        let u = &state.u;
        let mut e: Vec<f64> = state
            .v
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| m * v * v)
            .collect();
        let mut deposit = |p: usize, q: usize, val: f64| match (self.fluid[p], self.fluid[q]) {
            (true, true) => {
                e[p] += 0.5 * val;
                e[q] += 0.5 * val;
            }
            (true, false) => e[p] += val,
            (false, true) => e[q] += val,
            _ => {}
        };
        for k in 0..self.grid.len() {
            if k + 1 < u.len() && self.face_x[k] != 0.0 {
                let d = u[k] - u[k + 1];
                deposit(k, k + 1, self.face_x[k] * d * d);
            }
            if k + s < u.len() && self.face_y[k] != 0.0 {
                let d = u[k] - u[k + s];
                deposit(k, k + s, self.face_y[k] * d * d);
            }
        }
        if let Some(cross) = &self.cross {
            for j in 0..=self.grid.ny {
                for i in 0..=self.grid.nx {
                    let a = j * s + i;
                    if cross[a] == 0.0 {
                        continue;
                    }
                    let corners = [a, a + 1, a + s, a + s + 1];
                    let x = u[a + 1] + u[a + s + 1] - u[a] - u[a + s];
                    let y = u[a + s] + u[a + s + 1] - u[a] - u[a + 1];
                    let val = 0.5 * cross[a] * x * y;
                    let nf = corners.iter().filter(|&&q| self.fluid[q]).count();
                    for q in corners {
                        if self.fluid[q] {
                            e[q] += val / nf as f64;
                        }
                    }
                }
            }
        }
        e
    }

    /// Energy `Σ g|∇u|² + Σ c|v|²` (cell-area scaled) restricted to `mask`.
    pub fn energy(&self, state: &State, mask: Option<&[bool]>) -> f64 {
        let e = self.energy_density(state);
        match mask {
            None => e.iter().sum(),
            Some(m) => e.iter().zip(m).filter(|(_, &b)| b).map(|(x, _)| x).sum(),
        }
    }
}

/// Per-step samples of `u` on a fixed node set, plus sparse snapshots.
#[derive(Debug, Clone, Default)]
pub struct SolutionHistory {
    pub slab_nodes: Vec<usize>,
    /// Row-major `[step][node]`, steps `0..=n_steps`.
    pub slab_values: Vec<f64>,
    pub times: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub warnings: Vec<String>,
}

impl SolutionHistory {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    pub fn slab(&self, step: usize) -> &[f64] {
        let n = self.slab_nodes.len();
        &self.slab_values[step * n..(step + 1) * n]
    }

    /// Position of a grid node within the slab, if recorded.
    pub fn slot(&self, node: usize) -> Option<usize> {
        self.slab_nodes.binary_search(&node).ok()
    }
}

/// What to record while evolving.
#[derive(Debug, Clone, Default)]
pub struct HistorySpec {
    pub slab_nodes: Vec<usize>,
    /// Full `u` snapshot every this many steps (and at the final step).
    pub snapshot_every: Option<usize>,
}

impl HistorySpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn slabs(mut nodes: Vec<usize>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        Self {
            slab_nodes: nodes,
            snapshot_every: None,
        }
    }
}

/// Leapfrog propagator bound to one zone map and configuration.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub stencil: Stencil,
    pub config: SolverConfig,
    pub dt: f64,
    pub cfl_limit: f64,
    pub max_speed: f64,
    damping: Option<Vec<f64>>,
    box_half_width: f64,
}

impl Propagator {
    pub fn new(map: &ZoneMap, config: SolverConfig) -> Result<Propagator> {
        let stencil = Stencil::new(map, config.obstacle_bc);
        let cfl_limit = stencil.cfl_limit();
        let dt = config.time_step.unwrap_or(config.cfl_safety * cfl_limit);
        if !(dt > 0.0) || dt > config.cfl_safety * cfl_limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation {
                dt,
                limit: config.cfl_safety * cfl_limit,
            });
        }
        let damping = match config.truncation {
            Truncation::ExactBox => None,
            Truncation::SpongeLayer { width, strength } => Some(sponge_profile(&map.grid, width, strength)),
        };
        let g = map.grid;
        let box_half_width = 0.5 * (g.nx.min(g.ny) as f64) * g.h;
        Ok(Propagator {
            stencil,
            config,
            dt,
            cfl_limit,
            max_speed: map.max_speed.max(1.0),
            damping,
            box_half_width,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.stencil.grid
    }

    /// Number of steps and effective step for the interval `[t0, t1]`. The
    /// step is shrunk so the interval is covered exactly.
    pub fn schedule(&self, t0: f64, t1: f64) -> (usize, f64) {
        let span = t1 - t0;
        let n = (span / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, span / n as f64)
    }

    pub fn energy(&self, state: &State, mask: Option<&[bool]>) -> f64 {
        self.stencil.energy(state, mask)
    }

    /// `vᵀMv + uᵀKu − (dt²/4)(Ku)ᵀM⁻¹(Ku)`, invariant under velocity Verlet
    /// with step `dt` up to roundoff.
    pub fn conserved_energy(&self, state: &State, dt: f64) -> f64 {
        let st = &self.stencil;
        let mut ku = vec![0.0; state.u.len()];
        st.apply_stiffness(&state.u, &mut ku);
        let uku: f64 = state.u.iter().zip(&ku).map(|(a, b)| a * b).sum();
        let kmk: f64 = ku.iter().zip(&st.inv_mass).map(|(a, m)| a * a * m).sum();
        st.kinetic_energy(&state.v) + uku - 0.25 * dt * dt * kmk
    }

    /// Radius (about the origin) of the numerical support of `state`.
    pub fn support_radius(&self, state: &State) -> f64 {
        let peak = state
            .u
            .iter()
            .chain(&state.v)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if peak == 0.0 {
            return 0.0;
        }
        let thr = 1e-12 * peak;
        self.grid()
            .nodes()
            .filter(|&k| state.u[k].abs() > thr || state.v[k].abs() > thr)
            .map(|k| self.grid().point_of(k).norm())
            .fold(0.0, f64::max)
    }

    /// Advance `state` from `t0` to `t1`.
    pub fn evolve(&self, state: &State, t0: f64, t1: f64, spec: &HistorySpec) -> Result<(State, SolutionHistory)> {
        if !(t1 > t0) {
            return Err(Error::Config(format!("evolve needs t1 > t0, got [{t0}, {t1}]")));
        }
        let (n_steps, dt) = self.schedule(t0, t1);
        let mut hist = SolutionHistory {
            slab_nodes: spec.slab_nodes.clone(),
            slab_values: Vec::with_capacity(spec.slab_nodes.len() * (n_steps + 1)),
            times: Vec::with_capacity(n_steps + 1),
            ..Default::default()
        };
        if self.damping.is_none() {
            let reach = self.support_radius(state) + self.max_speed * (t1 - t0);
            if reach >= self.box_half_width {
                let msg = format!(
                    "support radius plus travel distance {reach:.3} reaches the box half width {:.3}",
                    self.box_half_width
                );
                log::info!("{}", Error::BoxContamination(msg.clone()));
                hist.warnings.push(msg);
            }
        }
        let st = &self.stencil;
        let mut u = state.u.clone();
        let mut v = state.v.clone();
        for k in 0..u.len() {
            if !st.fluid[k] {
                u[k] = 0.0;
                v[k] = 0.0;
            }
        }
        let mut acc = vec![0.0; u.len()];
        st.apply_stiffness(&u, &mut acc);
        let record = |hist: &mut SolutionHistory, u: &[f64], step: usize, t: f64| {
            hist.times.push(t);
            hist.slab_values.extend(spec.slab_nodes.iter().map(|&k| u[k]));
            if let Some(every) = spec.snapshot_every {
                if step % every.max(1) == 0 || step == n_steps {
                    hist.snapshots.push((t, u.to_vec()));
                }
            }
        };
        record(&mut hist, &u, 0, t0);
        let half = 0.5 * dt;
        let decay: Option<Vec<f64>> = self
            .damping
            .as_ref()
            .map(|sig| sig.iter().map(|s| (-s * dt).exp()).collect());
        for step in 1..=n_steps {
            for k in 0..u.len() {
                v[k] -= half * st.inv_mass[k] * acc[k];
                u[k] += dt * v[k];
            }
            st.apply_stiffness(&u, &mut acc);
            for k in 0..u.len() {
                v[k] -= half * st.inv_mass[k] * acc[k];
            }
            if let Some(d) = &decay {
                v.iter_mut().zip(d).for_each(|(x, f)| *x *= f);
            }
            record(&mut hist, &u, step, t0 + step as f64 * dt);
        }
        Ok((State { u, v, time: t1 }, hist))
    }

    /// `S_T^*`: negate velocity, evolve forward for `horizon`, negate again.
    pub fn evolve_backward(&self, terminal: &State, horizon: f64, spec: &HistorySpec) -> Result<(State, SolutionHistory)> {
        let flipped = terminal.clone().with_negated_velocity();
        let (out, hist) = self.evolve(&flipped, 0.0, horizon, spec)?;
        let mut out = out.with_negated_velocity();
        out.time = terminal.time - horizon;
        Ok((out, hist))
    }
}

fn sponge_profile(grid: &Grid, width: f64, strength: f64) -> Vec<f64> {
    let mut sig = grid.zeros();
    let half = 0.5 * grid.nx.min(grid.ny) as f64 * grid.h;
    for k in grid.nodes() {
        let p = grid.point_of(k);
        let depth = p.x.abs().max(p.y.abs()) - (half - width);
        if depth > 0.0 {
            sig[k] = strength * (depth / width).powi(2);
        }
    }
    sig
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CoefficientField, ZoneCoefficient, ZoneLayout};
    use crate::geometry::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn eigenmode(map: &ZoneMap) -> State {
        let mut u = map.grid.zeros();
        for k in map.grid.nodes() {
            let p = map.grid.point_of(k);
            u[k] = (PI * p.x).sin() * (PI * p.y).sin();
        }
        State::new(u, map.grid.zeros())
    }

    fn random_state(map: &ZoneMap, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = State::zeros(&map.grid);
        for k in map.grid.nodes() {
            if map.is_fluid(k) {
                s.u[k] = rng.gen_range(-1.0..1.0);
                s.v[k] = rng.gen_range(-1.0..1.0);
            }
        }
        s
    }

    #[test]
    fn zero_state_stays_zero() {
        let map = ZoneMap::unit_box(12);
        let p = Propagator::new(&map, SolverConfig::default()).unwrap();
        let (out, _) = p.evolve(&State::zeros(&map.grid), 0.0, 0.7, &HistorySpec::none()).unwrap();
        assert!(out.u.iter().chain(&out.v).all(|&x| x == 0.0));
        let (back, _) = p.evolve_backward(&State::zeros(&map.grid), 0.7, &HistorySpec::none()).unwrap();
        assert!(back.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cfl_limit_for_flat_laplacian() {
        let map = ZoneMap::unit_box(20);
        let st = Stencil::new(&map, ObstacleBc::Dirichlet);
        let h = map.grid.h;
        assert!((st.cfl_limit() - h / 2f64.sqrt()).abs() < 1e-12);
        let bad = SolverConfig {
            time_step: Some(h),
            ..Default::default()
        };
        assert!(matches!(Propagator::new(&map, bad), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn eigenmode_oscillates_at_analytic_frequency() {
        let mut errs = Vec::new();
        for n in [15, 31] {
            let map = ZoneMap::unit_box(n);
            let p = Propagator::new(&map, SolverConfig::default()).unwrap();
            let s0 = eigenmode(&map);
            let t = 0.6;
            let (out, _) = p.evolve(&s0, 0.0, t, &HistorySpec::none()).unwrap();
            let w = 2f64.sqrt() * PI;
            let err = map
                .grid
                .nodes()
                .map(|k| (out.u[k] - s0.u[k] * (w * t).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 5e-3, "{errs:?}");
        // second order: halving h cuts the error by about four
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn modified_energy_is_conserved_over_a_period() {
        let map = ZoneMap::unit_box(24);
        let p = Propagator::new(&map, SolverConfig::default()).unwrap();
        let s0 = eigenmode(&map);
        let period = 2.0 / 2f64.sqrt();
        let (n, dt) = p.schedule(0.0, period);
        let e0 = p.conserved_energy(&s0, dt);
        let mut s = s0;
        for i in 0..n {
            s = p.evolve(&s, i as f64 * dt, (i + 1) as f64 * dt, &HistorySpec::none()).unwrap().0;
            let e = p.conserved_energy(&s, dt);
            assert!(((e - e0) / e0).abs() < 1e-8);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let map = ZoneMap::unit_box(16);
        let p = Propagator::new(&map, SolverConfig::default()).unwrap();
        let s0 = random_state(&map, 3);
        let (fwd, _) = p.evolve(&s0, 0.0, 1.3, &HistorySpec::none()).unwrap();
        let (back, _) = p.evolve_backward(&fwd, 1.3, &HistorySpec::none()).unwrap();
        assert!(back.rel_diff(&s0) < 1e-10, "{}", back.rel_diff(&s0));
    }

    #[test]
    fn energy_is_quadratic_and_sums_to_quadratic_forms() {
        let map = ZoneMap::unit_box(10);
        let st = Stencil::new(&map, ObstacleBc::Dirichlet);
        let s = random_state(&map, 9);
        let e1 = st.energy(&s, None);
        let e2 = st.energy(&s.scaled(2.0), None);
        assert!((e2 - 4.0 * e1).abs() < 1e-12 * e2);
        let direct = st.stiffness_energy(&s.u) + st.kinetic_energy(&s.v);
        assert!((e1 - direct).abs() < 1e-12 * direct);
        assert_eq!(st.energy(&State::zeros(&map.grid), None), 0.0);
    }

    fn anisotropic_map() -> ZoneMap {
        let layout = ZoneLayout {
            obstacle: vec![Shape::disc([0.0, 0.0], 0.2)],
            zones: vec![Shape::disc([0.0, 0.0], 0.6)],
            measurement_radius: 0.7,
            box_half_width: 0.75,
        };
        let coeffs = CoefficientField {
            zones: vec![ZoneCoefficient::Constant {
                weight: 0.8,
                metric: [[1.5, 0.4], [0.4, 1.0]],
            }],
        };
        ZoneMap::build(&layout, &coeffs, 0.05).unwrap()
    }

    #[test]
    fn cross_terms_keep_energy_identity_and_reversibility() {
        let map = anisotropic_map();
        assert!(map.has_cross);
        for bc in [ObstacleBc::Dirichlet, ObstacleBc::Neumann] {
            let p = Propagator::new(
                &map,
                SolverConfig {
                    obstacle_bc: bc,
                    ..Default::default()
                },
            )
            .unwrap();
            let s = random_state(&map, 5);
            let direct = p.stencil.stiffness_energy(&s.u) + p.stencil.kinetic_energy(&s.v);
            assert!((p.energy(&s, None) - direct).abs() < 1e-11 * direct);
            let (n, dt) = p.schedule(0.0, 0.5);
            let e0 = p.conserved_energy(&s, dt);
            let (out, _) = p.evolve(&s, 0.0, 0.5, &HistorySpec::none()).unwrap();
            assert!(n > 5);
            assert!(((p.conserved_energy(&out, dt) - e0) / e0).abs() < 1e-8);
            let (back, _) = p.evolve_backward(&out, 0.5, &HistorySpec::none()).unwrap();
            assert!(back.rel_diff(&s) < 1e-10);
        }
    }

    #[test]
    fn neumann_obstacle_has_no_flux_faces() {
        let map = anisotropic_map();
        let st = Stencil::new(&map, ObstacleBc::Neumann);
        let s = map.grid.stride();
        for k in map.grid.nodes() {
            if map.obstacle[k] {
                assert_eq!(st.face_x[k], 0.0);
                assert_eq!(st.face_x[k - 1], 0.0);
                assert_eq!(st.face_y[k], 0.0);
                assert_eq!(st.face_y[k - s], 0.0);
            }
        }
    }

    #[test]
    fn history_records_every_step() {
        let map = ZoneMap::unit_box(10);
        let p = Propagator::new(&map, SolverConfig::default()).unwrap();
        let s0 = eigenmode(&map);
        let node = map.grid.index(4, 5);
        let spec = HistorySpec {
            slab_nodes: vec![node],
            snapshot_every: Some(3),
        };
        let (out, hist) = p.evolve(&s0, 0.0, 0.5, &spec).unwrap();
        let (n, _) = p.schedule(0.0, 0.5);
        assert_eq!(hist.steps(), n + 1);
        assert_eq!(hist.slab(0)[0], s0.u[node]);
        assert_eq!(hist.slab(n)[0], out.u[node]);
        assert!(hist.snapshots.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(hist.snapshots.last().unwrap().0, 0.5);
    }

    #[test]
    fn sponge_dissipates() {
        let map = ZoneMap::unit_box(20);
        let cfg = SolverConfig {
            truncation: Truncation::SpongeLayer {
                width: 0.2,
                strength: 20.0,
            },
            ..Default::default()
        };
        let p = Propagator::new(&map, cfg).unwrap();
        let s0 = eigenmode(&map);
        let (out, _) = p.evolve(&s0, 0.0, 2.0, &HistorySpec::none()).unwrap();
        assert!(p.energy(&out, None) < 0.9 * p.energy(&s0, None));
    }
}
