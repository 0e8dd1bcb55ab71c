//! Explicit feature maps: random Fourier features for the Gaussian kernel
//! and RBF-network features.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::seed::rng_for;

/// Random Fourier feature map approximating a Gaussian kernel with
/// bandwidth `sigma^2`.
///
/// Frequencies are drawn i.i.d. from `N(0, sigma^-2 I)` (the spectral
/// measure of the Gaussian kernel) and phases uniformly from `[0, 2pi)`,
/// using a ChaCha8 stream seeded from `seed`, so the map regenerates
/// bit-exactly for the same `(p, d, bandwidth, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// d x p frequency matrix.
    omega: DMatrix<f64>,
    /// d phases in [0, 2pi).
    phase: DVector<f64>,
    source_bandwidth: f64,
    seed: u64,
}

impl RffMap {
    pub fn new(input_dim: usize, feature_count: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || feature_count == 0 {
            return Err(Error::invalid("RFF map needs input_dim >= 1 and feature_count >= 1"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid(format!(
                "RFF bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        let sigma = bandwidth.sqrt();
        let mut rng = rng_for(seed, "rff");
        // Row-major fill: frequencies first, then phases, so the stream
        // layout is part of the on-disk contract.
        let mut omega_data = Vec::with_capacity(feature_count * input_dim);
        for _ in 0..feature_count * input_dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            omega_data.push(z / sigma);
        }
        let omega = DMatrix::from_row_slice(feature_count, input_dim, &omega_data);
        let phase =
            DVector::from_fn(feature_count, |_, _| rng.random::<f64>() * std::f64::consts::TAU);
        Ok(RffMap {
            omega,
            phase,
            source_bandwidth: bandwidth,
            seed,
        })
    }

    /// Rebuild a map from stored parts (used by model deserialization).
    pub fn from_parts(
        omega: DMatrix<f64>,
        phase: DVector<f64>,
        source_bandwidth: f64,
        seed: u64,
    ) -> Result<Self> {
        if omega.nrows() != phase.len() {
            return Err(Error::dim(omega.nrows(), phase.len(), "RFF omega/phase rows"));
        }
        Ok(RffMap {
            omega,
            phase,
            source_bandwidth,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn feature_count(&self) -> usize {
        self.omega.nrows()
    }

    pub fn source_bandwidth(&self) -> f64 {
        self.source_bandwidth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn phase(&self) -> &DVector<f64> {
        &self.phase
    }

    /// `sqrt(2/d) * cos(omega_i . x + b_i)` for each feature i.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), x.len(), "rff_apply input"));
        }
        let scale = (2.0 / self.feature_count() as f64).sqrt();
        let mut out = &self.omega * x + &self.phase;
        out.apply(|v| *v = scale * v.cos());
        Ok(out)
    }

    /// Apply the map to every row of `x`, returning an `n x d` matrix.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), x.ncols(), "rff_apply input"));
        }
        let scale = (2.0 / self.feature_count() as f64).sqrt();
        let mut out = x * self.omega.transpose();
        let d = self.feature_count();
        for j in 0..d {
            let b = self.phase[j];
            out.column_mut(j).apply(|v| *v = scale * (*v + b).cos());
        }
        Ok(out)
    }
}

/// RBF-network feature map: `phi(x) = (k(x, z_1), ..., k(x, z_d))` for a set
/// of centers `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfMap {
    centers: DMatrix<f64>,
    spec: KernelSpec,
}

impl RbfMap {
    /// Build from externally supplied centers.
    pub fn new(centers: DMatrix<f64>, spec: KernelSpec) -> Result<Self> {
        if centers.nrows() == 0 {
            return Err(Error::invalid("RBF map needs at least one center"));
        }
        Ok(RbfMap { centers, spec })
    }

    /// Sample `d` centers from the rows of `x` without replacement.
    pub fn from_training(x: &DMatrix<f64>, d: usize, spec: KernelSpec, seed: u64) -> Result<Self> {
        if d == 0 || d > x.nrows() {
            return Err(Error::invalid(format!(
                "center count {d} must be in 1..={}",
                x.nrows()
            )));
        }
        let idx = crate::data::sample_indices(x.nrows(), d, seed);
        let centers = select_rows(x, &idx);
        RbfMap::new(centers, spec)
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn feature_count(&self) -> usize {
        self.centers.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), x.len(), "rbf_apply input"));
        }
        let row = DMatrix::from_row_slice(1, x.len(), x.as_slice());
        let m = kernel_matrix(&self.spec, &row, &self.centers)?;
        Ok(m.row(0).transpose())
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        kernel_matrix(&self.spec, x, &self.centers)
    }
}

/// Either explicit feature map, as referenced by a trained linear model.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Rff(RffMap),
    Rbf(RbfMap),
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Rff(m) => m.input_dim(),
            FeatureMap::Rbf(m) => m.input_dim(),
        }
    }

    pub fn feature_count(&self) -> usize {
        match self {
            FeatureMap::Rff(m) => m.feature_count(),
            FeatureMap::Rbf(m) => m.feature_count(),
        }
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            FeatureMap::Rff(m) => m.apply_matrix(x),
            FeatureMap::Rbf(m) => m.apply_matrix(x),
        }
    }
}

pub(crate) fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let p = x.ncols();
    let mut buf = vec![0.0; idx.len() * p];
    buf.par_chunks_mut(p).zip(idx.par_iter()).for_each(|(row, &i)| {
        for j in 0..p {
            row[j] = x[(i, j)];
        }
    });
    DMatrix::from_row_slice(idx.len(), p, &buf)
}
