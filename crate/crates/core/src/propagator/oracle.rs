//! Dense spectral solution of `M ü + K u = 0` for small grids.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{State, Stencil};
use crate::error::{Error, Result};

/// Largest number of unknowns accepted by the dense oracle.
pub const ORACLE_LIMIT: usize = 2500;

/// `A = M⁻¹K` restricted to fluid nodes.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub a: DMatrix<f64>,
    /// Padded grid index of each unknown.
    pub nodes: Vec<usize>,
    pub mass: Vec<f64>,
    pub grid_len: usize,
}

impl DenseOperator {
    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    /// `⟨x, y⟩_c = Σ m_i x_i y_i` on reduced vectors.
    pub fn inner_c(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (0..x.len()).map(|i| self.mass[i] * x[i] * y[i]).sum()
    }

    pub fn restrict(&self, field: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.nodes.len(), self.nodes.iter().map(|&k| field[k]))
    }

    pub fn extend(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.grid_len];
        for (i, &k) in self.nodes.iter().enumerate() {
            out[k] = x[i];
        }
        out
    }
}

pub fn assemble_discrete_operator(stencil: &Stencil) -> Result<DenseOperator> {
    let nodes: Vec<usize> = stencil.grid.nodes().filter(|&k| stencil.fluid[k]).collect();
    let n = nodes.len();
    if n > ORACLE_LIMIT {
        return Err(Error::TooLargeForOracle {
            unknowns: n,
            limit: ORACLE_LIMIT,
        });
    }
    let len = stencil.grid.len();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; len];
    let mut col = vec![0.0; len];
    for (j, &kj) in nodes.iter().enumerate() {
        e[kj] = 1.0;
        stencil.apply_stiffness(&e, &mut col);
        for (i, &ki) in nodes.iter().enumerate() {
            a[(i, j)] = col[ki] * stencil.inv_mass[ki];
        }
        e[kj] = 0.0;
    }
    Ok(DenseOperator {
        a,
        mass: nodes.iter().map(|&k| stencil.mass[k]).collect(),
        nodes,
        grid_len: len,
    })
}

/// Eigendecomposition of the symmetrized operator `M^{1/2} A M^{-1/2}`,
/// reusable across times.
pub struct SpectralOracle {
    op: DenseOperator,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
    sqrt_mass: DVector<f64>,
}

impl SpectralOracle {
    pub fn new(op: DenseOperator) -> SpectralOracle {
        let sqrt_mass = DVector::from_iterator(op.mass.len(), op.mass.iter().map(|m| m.sqrt()));
        let n = op.unknowns();
        let sym = DMatrix::from_fn(n, n, |i, j| {
            let v = sqrt_mass[i] * op.a[(i, j)] / sqrt_mass[j];
            let w = sqrt_mass[j] * op.a[(j, i)] / sqrt_mass[i];
            0.5 * (v + w)
        });
        let eigen = SymmetricEigen::new(sym);
        SpectralOracle { op, eigen, sqrt_mass }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen.eigenvalues
    }

    pub fn operator(&self) -> &DenseOperator {
        &self.op
    }

    /// Random data in the span of the modes with frequency `√λ ≤ omega_max`,
    /// coefficients uniform in `[-1, 1]`. Padded layout.
    pub fn band_limited_data<R: rand::Rng>(&self, omega_max: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let q = &self.eigen.eigenvectors;
        let n = q.nrows();
        let mut y1 = DVector::zeros(n);
        let mut y2 = DVector::zeros(n);
        for i in 0..n {
            if self.eigen.eigenvalues[i].max(0.0).sqrt() <= omega_max {
                y1[i] = rng.gen_range(-1.0..1.0);
                y2[i] = rng.gen_range(-1.0..1.0);
            }
        }
        let f1 = (q * y1).component_div(&self.sqrt_mass);
        let f2 = (q * y2).component_div(&self.sqrt_mass);
        (self.op.extend(&f1), self.op.extend(&f2))
    }

    /// Exact-in-time solution at `t` for padded-layout data `(f1, f2)`.
    pub fn propagate(&self, f1: &[f64], f2: &[f64], t: f64) -> State {
        let q = &self.eigen.eigenvectors;
        let y1 = q.transpose() * self.op.restrict(f1).component_mul(&self.sqrt_mass);
        let y2 = q.transpose() * self.op.restrict(f2).component_mul(&self.sqrt_mass);
        let n = y1.len();
        let mut zu = DVector::zeros(n);
        let mut zv = DVector::zeros(n);
        for i in 0..n {
            let w = self.eigen.eigenvalues[i].max(0.0).sqrt();
            let (s, c) = (w * t).sin_cos();
            let sinc = if w > 0.0 { s / w } else { t };
            zu[i] = c * y1[i] + sinc * y2[i];
            zv[i] = -w * s * y1[i] + c * y2[i];
        }
        let u = (q * zu).component_div(&self.sqrt_mass);
        let v = (q * zv).component_div(&self.sqrt_mass);
        State {
            u: self.op.extend(&u),
            v: self.op.extend(&v),
            time: t,
        }
    }
}

/// `u(t) = cos(t√A) f1 + A^{-1/2} sin(t√A) f2` and its time derivative.
pub fn propagate_oracle(op: &DenseOperator, f1: &[f64], f2: &[f64], t: f64) -> Result<State> {
    if op.unknowns() > ORACLE_LIMIT {
        return Err(Error::TooLargeForOracle {
            unknowns: op.unknowns(),
            limit: ORACLE_LIMIT,
        });
    }
    Ok(SpectralOracle::new(op.clone()).propagate(f1, f2, t))
}
