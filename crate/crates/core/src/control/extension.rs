//! Collar-harmonic extension of data on `Ω*`.

use crate::data::DataPair;
use crate::error::{Error, Result};
use crate::propagator::{State, Stencil};

/// Precomputed pieces of the extension operator.
#[derive(Debug, Clone)]
pub struct Extension {
    /// Fluid nodes outside `Ω*` with signed distance below `δ/2`.
    pub collar: Vec<usize>,
    /// Cutoff that is 1 on `Ω*` and 0 beyond `δ/2`.
    pub phi: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Extension {
    pub fn new(inside: &[bool], distance: &[f64], fluid: &[bool], delta: f64, phi: Vec<f64>) -> Extension {
        let collar = (0..inside.len())
            .filter(|&k| fluid[k] && !inside[k] && distance[k] < 0.5 * delta)
            .collect();
        Extension {
            collar,
            phi,
            tol: 1e-13,
            max_iter: 5000,
        }
    }

    /// Extend `pair` (supported on `Ω*`) to the whole grid. The position is
    /// continued by a discrete `K`-harmonic function on the collar with zero
    /// outer values, then multiplied by the cutoff; the velocity is extended
    /// by zero.
    pub fn apply(&self, stencil: &Stencil, inside: &[bool], pair: &DataPair) -> Result<State> {
        let n = pair.w0.len();
        let mut u: Vec<f64> = (0..n).map(|k| if inside[k] { pair.w0[k] } else { 0.0 }).collect();
        let v: Vec<f64> = (0..n).map(|k| if inside[k] { pair.w1[k] } else { 0.0 }).collect();
        if !self.collar.is_empty() {
            // rhs = -K_{C,Ω*} w0 restricted to the collar
            let mut ku = vec![0.0; n];
            stencil.apply_stiffness(&u, &mut ku);
            let rhs: Vec<f64> = self.collar.iter().map(|&k| -ku[k]).collect();
            if rhs.iter().any(|&x| x != 0.0) {
                let x = self.solve_collar(stencil, &rhs)?;
                for (&k, xv) in self.collar.iter().zip(x) {
                    u[k] = xv;
                }
            }
        }
        for (x, p) in u.iter_mut().zip(&self.phi) {
            *x *= p;
        }
        for k in 0..n {
            if inside[k] {
                u[k] = pair.w0[k];
            }
        }
        Ok(State::new(u, v))
    }

    fn solve_collar(&self, stencil: &Stencil, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = stencil.grid.len();
        let m = self.collar.len();
        let s = stencil.grid.stride();
        let diag: Vec<f64> = self
            .collar
            .iter()
            .map(|&k| stencil.face_x[k] + stencil.face_x[k - 1] + stencil.face_y[k] + stencil.face_y[k - s])
            .collect();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::SingularCollarSolve("isolated collar node".into()));
        }
        let mut full = vec![0.0; n];
        let mut kfull = vec![0.0; n];
        let mut apply = |x: &[f64], out: &mut [f64]| {
            for (&k, xv) in self.collar.iter().zip(x) {
                full[k] = *xv;
            }
            stencil.apply_stiffness(&full, &mut kfull);
            for (o, &k) in out.iter_mut().zip(&self.collar) {
                *o = kfull[k];
            }
            for &k in &self.collar {
                full[k] = 0.0;
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = vec![0.0; m];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; m];
        let mut rz = dot(&r, &z);
        let bnorm = dot(rhs, rhs).sqrt();
        for _ in 0..self.max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SingularCollarSolve(format!("non-positive curvature {pap:e}")));
            }
            let a = rz / pap;
            for i in 0..m {
                x[i] += a * p[i];
                r[i] -= a * ap[i];
            }
            if dot(&r, &r).sqrt() <= self.tol * bnorm {
                return Ok(x);
            }
            for i in 0..m {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let b = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + b * p[i];
            }
        }
        Err(Error::SingularCollarSolve(format!(
            "conjugate gradients did not converge in {} iterations",
            self.max_iter
        )))
    }
}
