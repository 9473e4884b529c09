//! Boundary control synthesis by the fixed-point construction
//! `(I − K_T) w = f`, `K_T = R F S_T^* M_φ S_T E`.
//!
//! `E` extends data from `Ω*` into the collar, `S_T` and `S_T^*` are the
//! forward and backward flows, `M_φ` multiplies by a cutoff that is 1 near
//! `Ω*`, `F` is a binomial low-pass filter and `R` restricts to `Ω*`. The
//! filter removes grid modes near the Nyquist frequency, whose group
//! velocity vanishes on the lattice so that they never leave `Ω*` and would
//! keep `K_T` at norm one.

mod extension;
mod trace;
mod verify;

pub use extension::Extension;
pub use trace::{
    boundary_trace, build_stations, read_control_csv, write_control_csv, ControlSignal, SegmentSignal, Station,
};
pub use verify::{verify_control, VerifyReport};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataPair;
use crate::domain::{Grid, RegionMap, Segment, ZoneMap};
use crate::error::{Error, Result};
use crate::propagator::{HistorySpec, Propagator, State};

/// Cutoff band of the extension, as fractions of `δ`.
pub const EXTENSION_CUTOFF: (f64, f64) = (0.0, 0.5);
/// Cutoff band of `M_φ`, as fractions of `δ`.
pub const MULTIPLIER_CUTOFF: (f64, f64) = (0.5, 0.75);
/// Largest accepted contraction estimate in the horizon search.
pub const LADDER_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    /// Control horizon `T`.
    pub horizon: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "one_usize")]
    pub filter_passes: usize,
    #[serde(default = "default_power_steps")]
    pub power_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    200
}
fn default_power_steps() -> usize {
    20
}

impl ControlParams {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            alpha: 1.0,
            beta: 0.0,
            tol: default_tol(),
            max_iter: default_max_iter(),
            filter_passes: 1,
            power_steps: default_power_steps(),
            seed: 0,
        }
    }
}

/// Everything the pipeline needs about one geometry and solver.
pub struct ControlProblem<'a> {
    pub map: &'a ZoneMap,
    pub prop: &'a Propagator,
    pub region: &'a RegionMap,
    pub segments: Vec<Segment>,
    pub stations: Vec<Station>,
    pub extension: Extension,
    /// `M_φ` cutoff.
    pub phi: Vec<f64>,
    pub filter_passes: usize,
}

impl<'a> ControlProblem<'a> {
    pub fn new(map: &'a ZoneMap, prop: &'a Propagator, region: &'a RegionMap, filter_passes: usize) -> Result<Self> {
        let phi_ext = region.cutoff(map, EXTENSION_CUTOFF.0, EXTENSION_CUTOFF.1)?;
        let phi = region.cutoff(map, MULTIPLIER_CUTOFF.0, MULTIPLIER_CUTOFF.1)?;
        let extension = Extension::new(&region.inside, &region.distance, &prop.stencil.fluid, region.delta, phi_ext);
        let segments = region.region.segments(&map.layout, 0.5 * map.grid.h);
        let stations = build_stations(map, region, &segments)?;
        Ok(Self {
            map,
            prop,
            region,
            segments,
            stations,
            extension,
            phi,
            filter_passes,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.map.grid
    }

    /// Energy of data on `Ω*`: faces with both ends in `Ω*` (or one end on
    /// the obstacle) and `Σ c h² w1²` over `Ω*`.
    pub fn data_energy(&self, p: &DataPair) -> f64 {
        let st = &self.prop.stencil;
        let inside = &self.region.inside;
        let obst = &self.map.obstacle;
        let s = st.grid.stride();
        let mut e = 0.0;
        for k in st.grid.nodes() {
            if inside[k] {
                e += st.mass[k] * p.w1[k] * p.w1[k];
            }
            for (q, w) in [(k + 1, st.face_x[k]), (k + s, st.face_y[k])] {
                let counted = (inside[k] && (inside[q] || obst[q])) || (obst[k] && inside[q]);
                if counted && w != 0.0 {
                    let a = if inside[k] { p.w0[k] } else { 0.0 };
                    let b = if inside[q] { p.w0[q] } else { 0.0 };
                    e += w * (a - b) * (a - b);
                }
            }
        }
        if let Some(cross) = &st.cross {
            for j in 0..=st.grid.ny {
                for i in 0..=st.grid.nx {
                    let a = j * s + i;
                    let c = [a, a + 1, a + s, a + s + 1];
                    if cross[a] != 0.0 && c.iter().all(|&q| inside[q] || obst[q]) && c.iter().any(|&q| inside[q]) {
                        let val = |q: usize| if inside[q] { p.w0[q] } else { 0.0 };
                        let x = val(c[1]) + val(c[3]) - val(c[0]) - val(c[2]);
                        let y = val(c[2]) + val(c[3]) - val(c[0]) - val(c[1]);
                        e += 0.5 * cross[a] * x * y;
                    }
                }
            }
        }
        e
    }

    pub fn data_norm(&self, p: &DataPair) -> f64 {
        self.data_energy(p).max(0.0).sqrt()
    }

    pub fn restrict(&self, s: &State) -> DataPair {
        DataPair::from_state(s).restricted(&self.region.inside)
    }

    pub fn extend(&self, p: &DataPair) -> Result<State> {
        self.extension.apply(&self.prop.stencil, &self.region.inside, p)
    }

    pub fn apply_m_phi(&self, s: &State) -> State {
        apply_m_phi(s, &self.phi)
    }

    fn filter(&self, s: State) -> State {
        let fluid = &self.prop.stencil.fluid;
        let grid = self.grid();
        let mut out = s;
        for _ in 0..self.filter_passes {
            out.u = binomial_filter(&out.u, fluid, grid);
            out.v = binomial_filter(&out.v, fluid, grid);
        }
        out
    }

    /// `R F S_T^* M_φ S_T E`.
    pub fn apply_kt(&self, p: &DataPair, horizon: f64) -> Result<DataPair> {
        let e = self.extend(p)?;
        let (fwd, _) = self.prop.evolve(&e, 0.0, horizon, &HistorySpec::none())?;
        let cut = self.apply_m_phi(&fwd);
        let (back, _) = self.prop.evolve_backward(&cut, horizon, &HistorySpec::none())?;
        Ok(self.restrict(&self.filter(back)))
    }

    /// White-noise data on `Ω*` for power iteration.
    pub fn random_data(&self, seed: u64) -> DataPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DataPair::zeros(self.grid());
        for k in self.grid().nodes() {
            if self.region.inside[k] {
                p.w0[k] = rng.gen_range(-1.0..1.0);
                p.w1[k] = rng.gen_range(-1.0..1.0) / self.grid().h;
            }
        }
        p
    }

    /// Power-iteration estimate of `‖K_T‖` in the data energy norm.
    pub fn estimate_norm(&self, horizon: f64, steps: usize, seed: u64) -> Result<f64> {
        let mut x = self.random_data(seed);
        let n0 = self.data_norm(&x);
        x = x.scaled(1.0 / n0);
        let mut rho = 0.0;
        for _ in 0..steps.max(1) {
            let y = self.apply_kt(&x, horizon)?;
            rho = self.data_norm(&y);
            if rho == 0.0 {
                return Ok(0.0);
            }
            x = y.scaled(1.0 / rho);
        }
        Ok(rho)
    }

    /// Increase `T` along `ladder` until the estimate drops to `threshold`.
    pub fn select_horizon(&self, ladder: &[f64], threshold: f64, steps: usize, seed: u64) -> Result<(f64, Vec<(f64, f64)>)> {
        let mut probes = Vec::new();
        for &t in ladder {
            let rho = self.estimate_norm(t, steps, seed)?;
            log::info!("horizon {t}: contraction estimate {rho:.4}");
            probes.push((t, rho));
            if rho <= threshold {
                return Ok((t, probes));
            }
        }
        let (t, rho) = probes.last().copied().unwrap_or((0.0, f64::INFINITY));
        Err(Error::NotAContraction { ratio: rho, horizon: t })
    }

    /// Nodes whose values the trace stations read.
    pub fn slab_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.stations.iter().flat_map(|s| s.nodes()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Lengths and closedness of each segment, for signal norms.
    pub fn segment_lengths(&self) -> BTreeMap<usize, (f64, bool)> {
        self.segments
            .iter()
            .map(|s| (s.id, (s.piece.length(), s.piece.closed)))
            .collect()
    }

    /// Full pipeline: fixed point, extended data, final solve, Robin trace.
    pub fn synthesize(&self, f: &DataPair, params: &ControlParams) -> Result<Synthesis> {
        if params.alpha * params.alpha + params.beta * params.beta == 0.0 {
            return Err(Error::Config("alpha and beta cannot both vanish".into()));
        }
        let t_start = Instant::now();
        let horizon = params.horizon;
        let (w, neumann) = solve_neumann(
            f,
            |x| self.apply_kt(x, horizon),
            |x| self.data_norm(x),
            params.tol,
            params.max_iter,
        )?;
        let t_neumann = t_start.elapsed().as_secs_f64();

        let e = self.extend(&w)?;
        let (fwd, _) = self.prop.evolve(&e, 0.0, horizon, &HistorySpec::none())?;
        let (back, _) = self.prop.evolve_backward(&self.apply_m_phi(&fwd), horizon, &HistorySpec::none())?;
        let mut data = State::new(
            e.u.iter().zip(&back.u).map(|(a, b)| a - b).collect(),
            e.v.iter().zip(&back.v).map(|(a, b)| a - b).collect(),
        );
        for k in self.grid().nodes() {
            if self.region.inside[k] {
                data.u[k] = f.w0[k];
                data.v[k] = f.w1[k];
            }
        }
        let t_final = Instant::now();
        let (terminal, history) = self.prop.evolve(&data, 0.0, horizon, &HistorySpec::slabs(self.slab_nodes()))?;
        let final_solve = t_final.elapsed().as_secs_f64();

        let t_trace = Instant::now();
        let signal = boundary_trace(&history, &self.stations, self.grid(), params.alpha, params.beta)?;
        let trace_secs = t_trace.elapsed().as_secs_f64();

        let e_f = self.data_energy(f);
        let e_t = self.data_energy(&self.restrict(&terminal));
        let report = SynthesisReport {
            iterations: neumann.iterations,
            residuals: neumann.residuals.clone(),
            rho_estimate: neumann.rho_estimate,
            terminal_rel_energy: if e_f > 0.0 { e_t / e_f } else { e_t },
            control_l2_norm: signal.l2_norm(&self.segment_lengths()),
            horizon,
            alpha: params.alpha,
            beta: params.beta,
            grid: GridInfo {
                spacing: self.grid().h,
                nx: self.grid().nx,
                ny: self.grid().ny,
                time_step: self.prop.schedule(0.0, horizon).1,
            },
            timings: Timings {
                neumann: t_neumann,
                final_solve,
                trace: trace_secs,
                total: t_start.elapsed().as_secs_f64(),
            },
            contraction_probes: vec![],
        };
        Ok(Synthesis {
            signal,
            report,
            fixed_point: w,
            extended_data: data,
            terminal,
        })
    }
}

/// Multiply both components by `phi`.
pub fn apply_m_phi(s: &State, phi: &[f64]) -> State {
    State {
        u: s.u.iter().zip(phi).map(|(a, p)| a * p).collect(),
        v: s.v.iter().zip(phi).map(|(a, p)| a * p).collect(),
        time: s.time,
    }
}

/// One pass of the `[1 2 1] ⊗ [1 2 1] / 16` filter over fluid nodes; other
/// nodes read as zero.
pub fn binomial_filter(field: &[f64], fluid: &[bool], grid: &Grid) -> Vec<f64> {
    let s = grid.stride();
    let val = |k: usize| if fluid[k] { field[k] } else { 0.0 };
    let mut tmp = grid.zeros();
    for k in grid.nodes() {
        if fluid[k] {
            tmp[k] = 0.25 * (val(k - 1) + 2.0 * val(k) + val(k + 1));
        }
    }
    let mut out = grid.zeros();
    for k in grid.nodes() {
        if fluid[k] {
            out[k] = 0.25 * (tmp[k - s] + 2.0 * tmp[k] + tmp[k + s]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// Last residual ratio.
    pub rho_estimate: f64,
}

/// Fixed point of `w = f + K w` by the Neumann iteration from `w = f`,
/// stopping when `‖w_{k+1} − w_k‖ ≤ tol·‖f‖`.
pub fn solve_neumann<K, N>(f: &DataPair, apply: K, norm: N, tol: f64, max_iter: usize) -> Result<(DataPair, NeumannReport)>
where
    K: Fn(&DataPair) -> Result<DataPair>,
    N: Fn(&DataPair) -> f64,
{
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Config("solve_neumann needs tol > 0 and max_iter >= 1".into()));
    }
    let fnorm = norm(f);
    if fnorm == 0.0 {
        return Ok((
            f.clone(),
            NeumannReport {
                iterations: 1,
                residuals: vec![0.0],
                rho_estimate: 0.0,
            },
        ));
    }
    let mut w = f.clone();
    let mut residuals: Vec<f64> = Vec::new();
    let mut growth = 0;
    let mut rho = 0.0;
    for it in 1..=max_iter {
        let next = f.combine(1.0, &apply(&w)?, 1.0);
        let r = norm(&next.combine(1.0, &w, -1.0));
        if let Some(&prev) = residuals.last() {
            rho = r / prev;
            if rho >= 1.0 {
                growth += 1;
                if growth >= 3 {
                    return Err(Error::NotAContraction { ratio: rho, horizon: f64::NAN });
                }
            } else {
                growth = 0;
            }
        }
        residuals.push(r);
        log::debug!("neumann iteration {it}: residual {:.3e}", r / fnorm);
        w = next;
        if r <= tol * fnorm {
            return Ok((
                w,
                NeumannReport {
                    iterations: it,
                    residuals,
                    rho_estimate: rho,
                },
            ));
        }
    }
    Err(Error::MaxIterExceeded(max_iter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub time_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub neumann: f64,
    pub final_solve: f64,
    pub trace: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub rho_estimate: f64,
    pub terminal_rel_energy: f64,
    pub control_l2_norm: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub grid: GridInfo,
    pub timings: Timings,
    /// `(T, ρ(T))` pairs from a horizon search, if one was run.
    #[serde(default)]
    pub contraction_probes: Vec<(f64, f64)>,
}

pub struct Synthesis {
    pub signal: ControlSignal,
    pub report: SynthesisReport,
    pub fixed_point: DataPair,
    pub extended_data: State,
    pub terminal: State,
}
