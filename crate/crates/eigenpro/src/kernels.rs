//! Kernel evaluation and kernel-matrix assembly.
//!
//! Three radial kernel families are supported, all normalized so that
//! `k(x, x) = 1`:
//!
//! * Gaussian: `exp(-||x-y||^2 / (2 sigma^2))`, parameterized by `sigma^2`
//! * Laplace:  `exp(-||x-y|| / sigma)`, parameterized by `sigma`
//! * Cauchy:   `(1 + ||x-y||^2 / sigma^2)^-1`, parameterized by `sigma^2`

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Laplace,
    Cauchy,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplace => "laplace",
            KernelFamily::Cauchy => "cauchy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "laplace" => Ok(KernelFamily::Laplace),
            "cauchy" => Ok(KernelFamily::Cauchy),
            other => Err(Error::invalid(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// A kernel family with its bandwidth.
///
/// The bandwidth is `sigma^2` for the Gaussian and Cauchy families and
/// `sigma` for the Laplace family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec { family, bandwidth })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Kernel value from a squared distance.
    pub fn eval_dist2(&self, dist2: f64) -> f64 {
        let d2 = dist2.max(0.0);
        match self.family {
            KernelFamily::Gaussian => (-d2 / (2.0 * self.bandwidth)).exp(),
            KernelFamily::Laplace => (-d2.sqrt() / self.bandwidth).exp(),
            KernelFamily::Cauchy => 1.0 / (1.0 + d2 / self.bandwidth),
        }
    }
}

/// Pointwise kernel evaluation using the direct subtraction form.
pub fn kernel_eval(spec: &KernelSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(x.len(), y.len(), "kernel_eval operands"));
    }
    let mut d2 = 0.0;
    for i in 0..x.len() {
        let diff = x[i] - y[i];
        d2 += diff * diff;
    }
    Ok(spec.eval_dist2(d2))
}

/// Assemble the `n x q` kernel matrix between the rows of `a` and the rows
/// of `b`.
///
/// Distances use the expansion `||x-y||^2 = ||x||^2 + ||y||^2 - 2 x.y`,
/// clamped at zero. When `a` and `b` are the same matrix the upper triangle
/// is computed and mirrored, so the result is exactly symmetric with a unit
/// diagonal. Rows are filled in parallel; the output does not depend on the
/// partitioning.
pub fn kernel_matrix(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim(a.ncols(), b.ncols(), "kernel_matrix column counts"));
    }
    let n = a.nrows();
    let q = b.nrows();
    let symmetric = std::ptr::eq(a, b) || (n == q && a == b);

    let gram = a * b.transpose();
    let a_norms: Vec<f64> = (0..n).map(|i| a.row(i).norm_squared()).collect();
    let b_norms: Vec<f64> = if symmetric {
        a_norms.clone()
    } else {
        (0..q).map(|j| b.row(j).norm_squared()).collect()
    };

    // Row-major buffer so rayon can hand each row to a worker.
    let mut buf = vec![0.0f64; n * q];
    buf.par_chunks_mut(q).enumerate().for_each(|(i, row)| {
        let start = if symmetric { i } else { 0 };
        for j in start..q {
            let d2 = a_norms[i] + b_norms[j] - 2.0 * gram[(i, j)];
            row[j] = spec.eval_dist2(d2);
        }
        if symmetric {
            row[i] = 1.0;
        }
    });

    let mut out = DMatrix::from_row_slice(n, q, &buf);
    if symmetric {
        // Mirror the upper triangle.
        for j in 0..q {
            for i in (j + 1)..n {
                out[(i, j)] = out[(j, i)];
            }
        }
    }
    Ok(out)
}
