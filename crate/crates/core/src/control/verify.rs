//! Independent re-simulation of the controlled problem on `Ω*` alone.
//!
//! Only nodes of `Ω*` are advanced. Ghost values outside are set at every
//! step so that the Robin condition `α u + β ∂_ν u = g` holds at each
//! station; obstacle nodes stay at zero.

use serde::{Deserialize, Serialize};

use super::trace::ControlSignal;
use super::ControlProblem;
use crate::data::DataPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub terminal_rel_energy: f64,
    pub terminal_energy: f64,
    pub initial_energy: f64,
    pub steps: usize,
    /// Ghost updates that fell back to `u = g/α`.
    pub dirichlet_fallbacks: usize,
}

/// Row weights `(j0, j1, w)` mapping solver step times onto signal rows.
fn time_rows(signal: &ControlSignal, times: &[f64], dt: f64) -> Result<Vec<(usize, usize, f64)>> {
    let st = &signal.t;
    if st.is_empty() {
        return Err(Error::IncompatibleSignal("signal has no time samples".into()));
    }
    let eps = 1e-9 * dt;
    times
        .iter()
        .map(|&t| {
            let j = st.partition_point(|&x| x < t - eps);
            if j < st.len() && (st[j] - t).abs() <= eps {
                Ok((j, j, 0.0))
            } else if j == 0 || j == st.len() {
                Err(Error::IncompatibleSignal(format!(
                    "solver time {t} outside the signal range [{}, {}]",
                    st[0],
                    st[st.len() - 1]
                )))
            } else {
                Ok((j - 1, j, (t - st[j - 1]) / (st[j] - st[j - 1])))
            }
        })
        .collect()
}

pub fn verify_control(problem: &ControlProblem, f: &DataPair, signal: &ControlSignal, horizon: f64) -> Result<VerifyReport> {
    let (alpha, beta) = (signal.alpha, signal.beta);
    if alpha * alpha + beta * beta == 0.0 {
        return Err(Error::Config("alpha and beta cannot both vanish".into()));
    }
    let prop = problem.prop;
    let st = &prop.stencil;
    let h = st.grid.h;
    let inside = &problem.region.inside;
    let (n_steps, dt) = prop.schedule(0.0, horizon);
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    let rows = time_rows(signal, &times, dt)?;

    // per station: segment id, arclength and period for lookups
    let lookups: Vec<Option<(usize, f64, Option<f64>)>> = problem
        .stations
        .iter()
        .map(|s| {
            (!s.near_corner).then(|| {
                let seg = &problem.segments[s.segment];
                (s.segment, s.s, seg.piece.closed.then(|| seg.piece.length()))
            })
        })
        .collect();
    let nodes: Vec<usize> = (0..inside.len()).filter(|&k| inside[k]).collect();
    let len = st.grid.len();
    let mut u = vec![0.0; len];
    let mut v = vec![0.0; len];
    for &k in &nodes {
        u[k] = f.w0[k];
        v[k] = f.w1[k];
    }
    let scale = alpha.abs() + beta.abs() / h;
    let mut fallbacks = 0usize;
    let mut set_ghosts = |u: &mut Vec<f64>, step: usize| -> Result<()> {
        let (j0, j1, w) = rows[step];
        for (station, look) in problem.stations.iter().zip(&lookups) {
            let g = match look {
                None => 0.0,
                Some((seg, s, period)) => {
                    let a = signal.value_at(*seg, *s, j0, *period)?;
                    if w == 0.0 {
                        a
                    } else {
                        let b = signal.value_at(*seg, *s, j1, *period)?;
                        a * (1.0 - w) + b * w
                    }
                }
            };
            let (coeff, rest) = station.affine(|k| u[k], h, alpha, beta);
            u[station.ghost] = if coeff.abs() > 1e-12 * scale {
                (g - rest) / coeff
            } else if alpha != 0.0 {
                fallbacks += 1;
                g / alpha
            } else {
                return Err(Error::RobinSingular(format!(
                    "ghost coefficient vanishes at station s = {:.4} on segment {}",
                    station.s, station.segment
                )));
            };
        }
        Ok(())
    };
    set_ghosts(&mut u, 0)?;
    let mut acc = vec![0.0; len];
    st.apply_stiffness(&u, &mut acc);
    let half = 0.5 * dt;
    for step in 1..=n_steps {
        for &k in &nodes {
            v[k] -= half * st.inv_mass[k] * acc[k];
            u[k] += dt * v[k];
        }
        set_ghosts(&mut u, step)?;
        st.apply_stiffness(&u, &mut acc);
        for &k in &nodes {
            v[k] -= half * st.inv_mass[k] * acc[k];
        }
    }
    let terminal = DataPair { w0: u, w1: v }.restricted(inside);
    let terminal_energy = problem.data_energy(&terminal);
    let initial_energy = problem.data_energy(f);
    Ok(VerifyReport {
        terminal_rel_energy: if initial_energy > 0.0 {
            terminal_energy / initial_energy
        } else {
            terminal_energy
        },
        terminal_energy,
        initial_energy,
        steps: n_steps,
        dirichlet_fallbacks: fallbacks,
    })
}
