//! Low-rank preconditioners built from an approximate top-k eigensystem.
//!
//! Both forms are kept factored as `(E, weights)`; the dense `d x d` (or
//! `n x n`) operator is never materialized outside of tests. Applying either
//! costs `O(kd)`.
//!
//! * Linear form: `P v = v - E diag(w) E^T v` with `w_i = 1 - tau*lam_tail/lam_i`.
//!   With an exact eigensystem and `tau = 1` this flattens the top of the
//!   covariance spectrum down to the tail eigenvalue.
//! * Kernel form: the correction `D v = E diag(q) E^T v` with
//!   `q_i = (1/lam_i)(1 - tau*lam_tail/lam_i)`, the extra `1/lam_i` accounting
//!   for the kernel-space parameterization. The optimizer applies it to
//!   `K_m^T g / n`.

use nalgebra::{DMatrix, DVector};

use crate::eigensolver::EigenSystem;
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelSpec};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!(
            "damping factor tau must be in (0, 1], got {tau}"
        )));
    }
    Ok(())
}

/// Factored `P = I - E diag(w) E^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPreconditioner {
    eigensystem: EigenSystem,
    tau: f64,
    weights: Vec<f64>,
    // E diag(w), precomputed so apply is two mat-vecs
    scaled: DMatrix<f64>,
}

fn correction_weights(es: &EigenSystem, tau: f64, extra_inverse: bool) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(es.k());
    for (i, &lam) in es.values.iter().enumerate() {
        let mut w = 1.0 - tau * es.tail / lam;
        if w < 0.0 {
            // tail above a retained eigenvalue means the eigensolver output is
            // inconsistent; fail loudly instead of clamping
            return Err(Error::DegenerateInput(format!(
                "preconditioner weight {i} is negative ({w}); tail {} exceeds tau-scaled eigenvalue {lam}",
                es.tail
            )));
        }
        if extra_inverse {
            w /= lam;
        }
        weights.push(w);
    }
    Ok(weights)
}

fn scale_columns(e: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut scaled = e.clone();
    for (j, &wj) in w.iter().enumerate() {
        scaled.column_mut(j).apply(|v| *v = *v * wj);
    }
    scaled
}

impl LinearPreconditioner {
    pub fn build(es: EigenSystem, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let weights = correction_weights(&es, tau, false)?;
        // weights inherit the eigenvalue ordering
        debug_assert!(weights.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let scaled = scale_columns(&es.vectors, &weights);
        Ok(LinearPreconditioner {
            eigensystem: es,
            tau,
            weights,
            scaled,
        })
    }

    /// Identity preconditioner (`k = 0`).
    pub fn identity(dim: usize) -> Self {
        LinearPreconditioner {
            eigensystem: EigenSystem {
                vectors: DMatrix::zeros(dim, 0),
                values: vec![],
                tail: 0.0,
                subsample: vec![],
            },
            tau: 1.0,
            weights: vec![],
            scaled: DMatrix::zeros(dim, 0),
        }
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eigensystem
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.eigensystem.vectors.nrows()
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// `P v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::dim(self.dim(), v.len(), "preconditioner apply"));
        }
        if self.k() == 0 {
            return Ok(v.clone());
        }
        let coeffs = self.eigensystem.vectors.transpose() * v;
        Ok(v - &self.scaled * coeffs)
    }

    /// `P G` for a `d x c` matrix of stacked gradients.
    pub fn apply_matrix(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if g.nrows() != self.dim() {
            return Err(Error::dim(self.dim(), g.nrows(), "preconditioner apply_matrix"));
        }
        if self.k() == 0 {
            return Ok(g.clone());
        }
        let coeffs = self.eigensystem.vectors.transpose() * g;
        Ok(g - &self.scaled * coeffs)
    }

    /// Dense `d x d` form; test/diagnostic use only.
    pub fn materialize(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim())
            - &self.scaled * self.eigensystem.vectors.transpose()
    }
}

/// Factored kernel-space correction `D = E diag(q) E^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPreconditioner {
    eigensystem: EigenSystem,
    tau: f64,
    weights: Vec<f64>,
    scaled: DMatrix<f64>,
}

impl KernelPreconditioner {
    pub fn build(es: EigenSystem, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let weights = correction_weights(&es, tau, true)?;
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::DegenerateInput(
                "kernel preconditioner weights are not finite".into(),
            ));
        }
        let scaled = scale_columns(&es.vectors, &weights);
        Ok(KernelPreconditioner {
            eigensystem: es,
            tau,
            weights,
            scaled,
        })
    }

    /// Identity correction (`k = 0`, plain SGD).
    pub fn identity(dim: usize) -> Self {
        KernelPreconditioner {
            eigensystem: EigenSystem {
                vectors: DMatrix::zeros(dim, 0),
                values: vec![],
                tail: 0.0,
                subsample: vec![],
            },
            tau: 1.0,
            weights: vec![],
            scaled: DMatrix::zeros(dim, 0),
        }
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eigensystem
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.eigensystem.vectors.nrows()
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// `D G`: the additive correction the kernel optimizer applies to
    /// `K_m^T g / n`.
    pub fn correction(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if g.nrows() != self.dim() {
            return Err(Error::dim(self.dim(), g.nrows(), "kernel correction"));
        }
        if self.k() == 0 {
            return Ok(DMatrix::zeros(g.nrows(), g.ncols()));
        }
        let coeffs = self.eigensystem.vectors.transpose() * g;
        Ok(&self.scaled * coeffs)
    }
}

/// Evaluate the flattened kernel `k_EP(x, z) = k(x, z) - sum_i (lam_i -
/// lam_tail) e_i(x) e_i(z)`, where `e_i` is the Nystrom extension of the i-th
/// empirical eigenfunction (normalized in the empirical L2 norm over the `n`
/// training rows).
pub fn eigenpro_kernel_eval(
    es: &EigenSystem,
    spec: &KernelSpec,
    x_train: &DMatrix<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<f64> {
    let n = x_train.nrows();
    if es.vectors.nrows() != n {
        return Err(Error::dim(n, es.vectors.nrows(), "eigensystem rows"));
    }
    if x.len() != x_train.ncols() || z.len() != x_train.ncols() {
        return Err(Error::dim(x_train.ncols(), x.len().min(z.len()), "evaluation point"));
    }
    let base = crate::kernels::kernel_eval(spec, x, z)?;
    if es.k() == 0 {
        return Ok(base);
    }
    // psi_i(w) = k(w, X) E_i / (sqrt(n) lam_i)
    let extend = |w: &DVector<f64>| -> Result<DVector<f64>> {
        let xm = DMatrix::from_row_slice(1, w.len(), w.as_slice());
        let kr = kernel_matrix(spec, &xm, x_train)?; // 1 x n
        let proj = (kr * &es.vectors).transpose(); // k-vector
        let sqrt_n = (n as f64).sqrt();
        Ok(DVector::from_iterator(
            es.k(),
            proj.iter().zip(&es.values).map(|(p, lam)| p / (sqrt_n * lam)),
        ))
    };
    let px = extend(x)?;
    let pz = extend(z)?;
    let mut out = base;
    for i in 0..es.k() {
        out -= (es.values[i] - es.tail) * px[i] * pz[i];
    }
    Ok(out)
}
