//! Approximate top-k eigensystems of sample covariance and kernel operators.
//!
//! All three solvers work on a subsample of `m_sub` rows drawn without
//! replacement and return eigenvalues in the covariance scale: for features,
//! eigenvalues of `X_M^T X_M / M`; for kernels, eigenvalues of `K_M / M`.
//! Each returns `k` eigenpairs plus the `(k+1)`-th eigenvalue as the tail
//! estimate the preconditioner needs.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::select_rows;
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::seed::{derive_seed, rng_for};

/// Above this input dimension `rsvd` switches from a dense symmetric
/// eigendecomposition of the `d x d` covariance to a randomized range finder.
const DENSE_DIM_CUTOFF: usize = 2048;

/// Top-k eigenpairs plus a tail eigenvalue estimate.
///
/// `vectors` is `d x k` with orthonormal columns (or `n x k` for kernel
/// systems, orthonormal in the sample inner product); `values` is sorted
/// non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub vectors: DMatrix<f64>,
    pub values: Vec<f64>,
    pub tail: f64,
    pub subsample: Vec<usize>,
}

impl EigenSystem {
    /// Validating constructor: values must be positive, finite, and sorted
    /// non-increasing; `tail` must be nonnegative and no larger than the last
    /// value; vector columns must be orthonormal to within `1e-8`.
    pub fn new(
        vectors: DMatrix<f64>,
        values: Vec<f64>,
        tail: f64,
        subsample: Vec<usize>,
    ) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(Error::dim(values.len(), vectors.ncols(), "eigenvector count"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "eigenvalue {i} must be positive and finite, got {v}"
                )));
            }
            if i > 0 && values[i - 1] < v {
                return Err(Error::invalid(format!(
                    "eigenvalues must be sorted non-increasing; value {i} rose from {} to {v}",
                    values[i - 1]
                )));
            }
        }
        if !(tail >= 0.0) || !tail.is_finite() {
            return Err(Error::invalid(format!("tail eigenvalue must be >= 0, got {tail}")));
        }
        if let Some(&last) = values.last() {
            if tail > last * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "tail eigenvalue {tail} exceeds smallest retained value {last}"
                )));
            }
        }
        let k = vectors.ncols();
        if k > 0 {
            let gram = vectors.transpose() * &vectors;
            for i in 0..k {
                for j in 0..k {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (gram[(i, j)] - expect).abs() > 1e-8 {
                        return Err(Error::DegenerateInput(format!(
                            "eigenvectors are not orthonormal: gram[{i},{j}] = {}",
                            gram[(i, j)]
                        )));
                    }
                }
            }
        }
        Ok(EigenSystem {
            vectors,
            values,
            tail,
            subsample,
        })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }
}

fn check_subsolver_args(n: usize, d: usize, k: usize, m_sub: usize) -> Result<()> {
    if m_sub == 0 || m_sub > n {
        return Err(Error::invalid(format!(
            "subsample size must satisfy 1 <= m_sub <= n; got m_sub={m_sub}, n={n}"
        )));
    }
    if k + 1 > m_sub.min(d) {
        return Err(Error::invalid(format!(
            "need k+1 <= min(m_sub, d); got k={k}, m_sub={m_sub}, d={d}"
        )));
    }
    Ok(())
}

// Sorted (descending) eigenpairs of a symmetric matrix; small negative
// roundoff is clamped to zero.
fn dense_sym_eig(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = h.clone().symmetric_eigen();
    let d = h.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = eig.eigenvectors.select_columns(order.iter());
    (values, vectors)
}

// Top (k+1) eigenpairs of X_M^T X_M / M.
fn top_cov_eig(xm: &DMatrix<f64>, k_plus_1: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
    let m = xm.nrows() as f64;
    let d = xm.ncols();
    if d <= DENSE_DIM_CUTOFF {
        let h = xm.transpose() * xm / m;
        let (values, vectors) = dense_sym_eig(&h);
        return (
            values[..k_plus_1].to_vec(),
            vectors.columns(0, k_plus_1).into_owned(),
        );
    }

    // Randomized range finder with oversampling and power iterations, then a
    // Rayleigh-Ritz step in the captured subspace.
    let l = (k_plus_1 + 10).min(d);
    let mut rng = rng_for(seed, "range-finder");
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(xm.transpose() * (xm * omega) / m);
    for _ in 0..2 {
        q = orthonormalize(xm.transpose() * (xm * &q) / m);
    }
    let xq = xm * &q;
    let b = xq.transpose() * &xq / m; // = Q^T H Q
    let (values, u) = dense_sym_eig(&b);
    let vectors = q * u.columns(0, k_plus_1);
    (values[..k_plus_1].to_vec(), vectors)
}

fn orthonormalize(a: DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.qr();
    qr.q()
}

/// Randomized top-k eigensystem of the subsampled covariance
/// `X_M^T X_M / M`.
pub fn rsvd(x: &DMatrix<f64>, k: usize, m_sub: usize, seed: u64) -> Result<EigenSystem> {
    let (n, d) = (x.nrows(), x.ncols());
    check_subsolver_args(n, d, k, m_sub)?;
    let idx = crate::data::sample_indices(n, m_sub, derive_seed(seed, "eig-subsample"));
    let xm = select_rows(x, &idx);
    if xm.norm() == 0.0 {
        return Err(Error::DegenerateInput("subsampled data matrix is zero".into()));
    }
    let (mut values, vectors) = top_cov_eig(&xm, k + 1, seed);
    let tail = values.pop().unwrap();
    EigenSystem::new(vectors.columns(0, k).into_owned(), values, tail, idx)
}

/// Nystrom-flavored solver: eigendecompose the `M x M` inner-product matrix
/// `X_M X_M^T / M`, back-project the top vectors through `X_M^T`, and
/// re-orthonormalize. Useful when `m_sub` is much smaller than `d`.
pub fn nsvd(x: &DMatrix<f64>, k: usize, m_sub: usize, seed: u64) -> Result<EigenSystem> {
    let (n, d) = (x.nrows(), x.ncols());
    check_subsolver_args(n, d, k, m_sub)?;
    let idx = crate::data::sample_indices(n, m_sub, derive_seed(seed, "eig-subsample"));
    let xm = select_rows(x, &idx);
    if xm.norm() == 0.0 {
        return Err(Error::DegenerateInput("subsampled data matrix is zero".into()));
    }
    let m = m_sub as f64;
    let w = &xm * xm.transpose() / m;
    let (values, vecs) = dense_sym_eig(&w);
    let tail = values[k];
    let values = values[..k].to_vec();
    if values.last().is_some_and(|&v| v <= 0.0) {
        return Err(Error::DegenerateInput(format!(
            "subsampled matrix has rank below k = {k}"
        )));
    }

    // Back-project and orthonormalize. For exact arithmetic the projected
    // vectors are already orthogonal; Gram-Schmidt only cleans up roundoff
    // and fixes the scale.
    let mut e = xm.transpose() * vecs.columns(0, k);
    for j in 0..k {
        for pass in 0..2 {
            let _ = pass;
            for i in 0..j {
                let qi = e.column(i).clone_owned();
                let proj = qi.dot(&e.column(j));
                e.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = e.column(j).norm();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "back-projected eigenvector {j} vanished"
            )));
        }
        e.column_mut(j).apply(|v| *v = *v / norm);
    }

    // Keep vectors ordered by their Rayleigh quotient under H_M, which
    // matches the eigenvalue ordering up to ties.
    let mut order: Vec<usize> = (0..k).collect();
    let rayleigh: Vec<f64> = (0..k)
        .map(|j| (&xm * e.column(j)).norm_squared() / m)
        .collect();
    order.sort_by(|&a, &b| rayleigh[b].partial_cmp(&rayleigh[a]).unwrap());
    let e = e.select_columns(order.iter());

    EigenSystem::new(e, values, tail, idx)
}

/// Top-k eigensystem of the subsampled kernel operator `K_M / M`, with the
/// eigenfunctions extended to all `n` input rows via the kernel and
/// re-orthonormalized there.
pub fn kernel_eigensystem(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    k: usize,
    m_sub: usize,
    seed: u64,
) -> Result<EigenSystem> {
    let n = x.nrows();
    if m_sub == 0 || m_sub > n {
        return Err(Error::invalid(format!(
            "subsample size must satisfy 1 <= m_sub <= n; got m_sub={m_sub}, n={n}"
        )));
    }
    if k + 1 > m_sub {
        return Err(Error::invalid(format!(
            "need k+1 <= m_sub; got k={k}, m_sub={m_sub}"
        )));
    }
    let idx = crate::data::sample_indices(n, m_sub, derive_seed(seed, "eig-subsample"));
    let xm = select_rows(x, &idx);
    let km = kernel_matrix(spec, &xm, &xm)?;
    let m = m_sub as f64;
    let (values, vecs) = dense_sym_eig(&(km / m));
    let tail = values[k];
    let values = values[..k].to_vec();
    if values.last().is_some_and(|&v| v <= 1e-14) {
        return Err(Error::DegenerateInput(format!(
            "subsampled kernel matrix is numerically rank-deficient below k = {k}"
        )));
    }

    // Nystrom extension to every input row, then Gram-Schmidt so the
    // extended system is orthonormal even when m_sub < n.
    let k_nm = kernel_matrix(spec, x, &xm)?;
    let mut e = &k_nm * vecs.columns(0, k);
    for j in 0..k {
        for pass in 0..2 {
            let _ = pass;
            for i in 0..j {
                let qi = e.column(i).clone_owned();
                let proj = qi.dot(&e.column(j));
                e.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = e.column(j).norm();
        if norm <= 1e-300 {
            return Err(Error::DegenerateInput(format!(
                "extended kernel eigenvector {j} vanished"
            )));
        }
        e.column_mut(j).apply(|v| *v = *v / norm);
    }

    EigenSystem::new(e, values, tail, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::Rng;

    #[test]
    fn diagonal_covariance_recovers_spectrum() {
        // rows are scaled unit vectors, so X^T X / 3 = diag(3, 2, 1, 0)
        let mut x = DMatrix::zeros(3, 4);
        x[(0, 0)] = 9f64.sqrt();
        x[(1, 1)] = 6f64.sqrt();
        x[(2, 2)] = 3f64.sqrt();
        let es = rsvd(&x, 2, 3, 0).unwrap();
        assert_relative_eq!(es.values[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(es.values[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(es.tail, 1.0, max_relative = 1e-12);
        // eigenvectors align with the axes
        assert_relative_eq!(es.vectors.column(0)[0].abs(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(es.vectors.column(1)[1].abs(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn rank_one_matrix() {
        // every row equals v, so X^T X / n = v v^T with eigenvalue ||v||^2
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let n = 5;
        let x = DMatrix::from_fn(n, 2, |_, j| v[j]);
        let es = rsvd(&x, 1, n, 1).unwrap();
        assert_relative_eq!(es.values[0], 25.0, max_relative = 1e-12);
        assert!(es.tail.abs() < 1e-10, "tail {} should vanish", es.tail);
        let e0 = es.vectors.column(0);
        assert_relative_eq!(e0[0].abs(), 0.6, max_relative = 1e-10);
        assert_relative_eq!(e0[1].abs(), 0.8, max_relative = 1e-10);
    }

    #[test]
    fn rsvd_matches_dense_oracle() {
        let mut rng = crate::seed::rng_for(7, "rsvd-oracle");
        let n = 500;
        let d = 50;
        let x = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let es = rsvd(&x, 10, n, 3).unwrap();

        let h = x.transpose() * &x / n as f64;
        let eig = h.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..10 {
            assert_relative_eq!(es.values[i], vals[i], max_relative = 1e-6);
        }
        assert_relative_eq!(es.tail, vals[10], max_relative = 1e-6);
    }

    #[test]
    fn randomized_path_close_on_decaying_spectrum() {
        // force the randomized branch with d > DENSE_DIM_CUTOFF but verify on
        // a spectrum with a clean gap, where the range finder converges fast
        let d = DENSE_DIM_CUTOFF + 50;
        let n = 64;
        let mut rng = crate::seed::rng_for(2, "rand-path");
        let mut x = DMatrix::from_fn(n, d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.001 * z
        });
        // plant strong directions on the first coordinates
        for i in 0..n {
            for j in 0..6 {
                if i % 6 == j {
                    x[(i, j)] += 10.0 / (j + 1) as f64;
                }
            }
        }
        let es = rsvd(&x, 4, n, 5).unwrap();
        let h = x.transpose() * &x / n as f64;
        let eig = h.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..4 {
            assert_relative_eq!(es.values[i], vals[i], max_relative = 1e-4);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = DMatrix::<f64>::zeros(10, 5);
        assert!(rsvd(&x, 5, 10, 0).is_err()); // k+1 > d
        assert!(rsvd(&x, 2, 11, 0).is_err()); // m_sub > n
        assert!(rsvd(&x, 2, 0, 0).is_err());
        assert!(rsvd(&x, 2, 10, 0).is_err()); // all-zero matrix
    }

    #[test]
    fn nsvd_agrees_with_rsvd() {
        let mut rng = crate::seed::rng_for(9, "nsvd");
        let n = 200;
        let d = 30;
        let x = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let a = rsvd(&x, 8, n, 4).unwrap();
        let b = nsvd(&x, 8, n, 4).unwrap();
        for i in 0..8 {
            assert_relative_eq!(a.values[i], b.values[i], max_relative = 1e-8);
            // vectors agree up to sign
            let dot = a.vectors.column(i).dot(&b.vectors.column(i)).abs();
            assert!(dot > 1.0 - 1e-6, "vector {i} misaligned, |dot| = {dot}");
        }
        assert_relative_eq!(a.tail, b.tail, max_relative = 1e-8);
    }

    #[test]
    fn nsvd_back_projection_orthonormal_small_subsample() {
        let mut rng = crate::seed::rng_for(10, "nsvd-sub");
        let x = DMatrix::from_fn(300, 80, |_, _| StandardNormal.sample(&mut rng));
        let es = nsvd(&x, 12, 60, 8).unwrap();
        let gram = es.vectors.transpose() * &es.vectors;
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_full_sample_matches_dense() {
        let mut rng = crate::seed::rng_for(12, "keig");
        let n = 50;
        let x = DMatrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let spec = KernelSpec::new(KernelFamily::Gaussian, 2.0).unwrap();
        let es = kernel_eigensystem(&spec, &x, 10, n, 6).unwrap();

        let k_full = kernel_matrix(&spec, &x, &x).unwrap();
        let eig = (k_full / n as f64).symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..10 {
            assert_relative_eq!(es.values[i], vals[i], max_relative = 1e-6);
        }
        assert_relative_eq!(es.tail, vals[10], max_relative = 1e-6);
    }

    #[test]
    fn kernel_duplicated_points() {
        // identical rows give K = all-ones, whose scaled top eigenvalue is 1
        let n = 20;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.5 } else { -0.5 });
        let spec = KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap();
        let es = kernel_eigensystem(&spec, &x, 1, n, 0).unwrap();
        assert_relative_eq!(es.values[0], 1.0, max_relative = 1e-12);
        assert!(es.tail.abs() < 1e-12);
        // extended eigenvector is the constant vector 1/sqrt(n)
        let expect = 1.0 / (n as f64).sqrt();
        for i in 0..n {
            assert_relative_eq!(es.vectors.column(0)[i].abs(), expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn kernel_subsampled_close_to_dense() {
        // points on the unit circle: the empirical spectrum concentrates fast
        // enough that half-sample top-10 estimates land within 10%
        let mut rng = crate::seed::rng_for(14, "keig-sub");
        let n = 500;
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            x[(i, 0)] = th.cos();
            x[(i, 1)] = th.sin();
        }
        let spec = KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap();
        let k = 20;
        let es = kernel_eigensystem(&spec, &x, k, n / 2, 2).unwrap();

        let k_full = kernel_matrix(&spec, &x, &x).unwrap();
        let eig = (k_full / n as f64).symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // half-sample estimates of the top-10 land within 10%
        for i in 0..10 {
            let rel = (es.values[i] - vals[i]).abs() / vals[i];
            assert!(rel < 0.10, "eigenvalue {i}: {} vs {} (rel {rel})", es.values[i], vals[i]);
        }
        // extension is orthonormal over all n rows
        let gram = es.vectors.transpose() * &es.vectors;
        for i in 0..k {
            for j in 0..k {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eigensystem_constructor_validates() {
        let e = DMatrix::identity(3, 2);
        assert!(EigenSystem::new(e.clone(), vec![2.0, 1.0], 0.5, vec![]).is_ok());
        assert!(EigenSystem::new(e.clone(), vec![1.0, 2.0], 0.5, vec![]).is_err()); // unsorted
        assert!(EigenSystem::new(e.clone(), vec![2.0, 0.0], 0.0, vec![]).is_err()); // zero value
        assert!(EigenSystem::new(e.clone(), vec![2.0, 1.0], 1.5, vec![]).is_err()); // tail too big
        assert!(EigenSystem::new(e.clone(), vec![2.0, 1.0], -0.1, vec![]).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(EigenSystem::new(skew, vec![2.0, 1.0], 0.5, vec![]).is_err()); // not orthonormal
    }

    #[test]
    fn scaling_data_scales_eigenvalues_quadratically() {
        let mut rng = crate::seed::rng_for(21, "scale");
        let x = DMatrix::from_fn(120, 10, |_, _| StandardNormal.sample(&mut rng));
        let a = rsvd(&x, 5, 120, 11).unwrap();
        let b = rsvd(&(&x * 3.0), 5, 120, 11).unwrap();
        for i in 0..5 {
            assert_relative_eq!(b.values[i], 9.0 * a.values[i], max_relative = 1e-10);
        }
        assert_relative_eq!(b.tail, 9.0 * a.tail, max_relative = 1e-10);
        // ratios are scale-invariant
        for i in 1..5 {
            assert_relative_eq!(
                b.values[i] / b.values[0],
                a.values[i] / a.values[0],
                max_relative = 1e-10
            );
        }
    }
}
