//! Step-size selection.
//!
//! The safe default inverts an operator-Bernstein bound on the spectral norm
//! of the preconditioned mini-batch covariance: with probability at least
//! `1 - delta`,
//!
//! ```text
//! ||P H_m|| <= lam + (2(lam + kappa) / 3m) ln(D/delta)
//!                  + sqrt((2 lam kappa / m) ln(D/delta))
//! ```
//!
//! where `lam` is the tail eigenvalue the preconditioner leaves in place,
//! `kappa` bounds `||x||^2` (or `k(x, x)` in the kernel case), and `D` is
//! `2d` for `d`-dimensional features or `8 dhat` with `dhat` an intrinsic-
//! dimension estimate for kernels. A faster opt-in heuristic scales as
//! `sqrt(m / lam)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::eigensolver::EigenSystem;
use crate::error::{Error, Result};
use crate::features::select_rows;
use crate::preconditioner::LinearPreconditioner;
use crate::seed::derive_seed;

/// Dimension term inside the Bernstein logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimTerm {
    /// Feature dimension `d`; the log argument is `2d/delta`.
    Linear(usize),
    /// Intrinsic-dimension estimate `dhat`; the log argument is `8*dhat/delta`.
    Kernel(f64),
}

impl DimTerm {
    fn log_argument(&self, delta: f64) -> Result<f64> {
        let num = match *self {
            DimTerm::Linear(d) => {
                if d == 0 {
                    return Err(Error::invalid("dimension term must be positive"));
                }
                2.0 * d as f64
            }
            DimTerm::Kernel(dhat) => {
                if !(dhat > 0.0) || !dhat.is_finite() {
                    return Err(Error::invalid(format!(
                        "intrinsic dimension estimate must be positive, got {dhat}"
                    )));
                }
                8.0 * dhat
            }
        };
        Ok((num / delta).ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// The eigenvalue the preconditioner cannot reduce (`lam_{k+1}`, or
    /// `lam_1` when unpreconditioned).
    pub lambda: f64,
    /// Upper bound on squared row norms (linear) or the kernel diagonal.
    pub kappa: f64,
    /// Mini-batch size.
    pub m: usize,
    pub dim: DimTerm,
    pub delta: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.m == 0 {
            return Err(Error::invalid("mini-batch size must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "failure probability must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// High-probability upper bound on `||P H_m||`.
pub fn bernstein_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let log_term = inputs.dim.log_argument(inputs.delta)?;
    let m = inputs.m as f64;
    let lam = inputs.lambda;
    let kappa = inputs.kappa;
    Ok(lam + (2.0 * (lam + kappa) / (3.0 * m)) * log_term + ((2.0 * lam * kappa / m) * log_term).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaMode {
    /// `eta = 1 / bernstein_bound(lam_{k+1}, ...)`; safe with probability
    /// `1 - delta` per batch.
    Bound,
    /// `eta = c sqrt(m) / sqrt(lam_{k+1} kappa)`, `c = 1`. Faster but
    /// unguarded.
    Heuristic,
}

/// Step size for EigenPro SGD from the eigensystem's tail eigenvalue.
pub fn auto_step_size(
    es: &EigenSystem,
    m: usize,
    kappa: f64,
    delta: f64,
    mode: EtaMode,
    dim: DimTerm,
) -> Result<f64> {
    let lambda = if es.k() == 0 {
        return Err(Error::invalid(
            "auto step size needs at least one eigenvalue; use a fixed eta for k = 0",
        ));
    } else {
        // a zero tail would allow an unbounded step; cap using the last
        // retained eigenvalue instead
        if es.tail > 0.0 {
            es.tail
        } else {
            *es.values.last().unwrap()
        }
    };
    match mode {
        EtaMode::Bound => {
            let b = bernstein_bound(&BoundInputs {
                lambda,
                kappa,
                m,
                dim,
                delta,
            })?;
            Ok(1.0 / b)
        }
        EtaMode::Heuristic => {
            if !(kappa > 0.0) {
                return Err(Error::invalid("kappa must be positive"));
            }
            Ok((m as f64).sqrt() / (lambda * kappa).sqrt())
        }
    }
}

/// Intrinsic-dimension estimate for a kernel eigensystem: effective rank
/// `tr(K_M/M) / lam_1`. For the unit-diagonal kernels here `tr(K_M/M) = 1`.
pub fn kernel_intdim(es: &EigenSystem) -> f64 {
    match es.values.first() {
        Some(&top) => (1.0 / top).max(1.0),
        None => 1.0,
    }
}

/// Monte-Carlo check of the bound: the fraction of sampled mini-batches for
/// which `||P H_m||` stays at or below `bernstein_bound`. Materializes the
/// `d x d` batch covariance, so intended for small `d`.
pub fn empirical_norm_check(
    x: &DMatrix<f64>,
    p: &LinearPreconditioner,
    m: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<f64> {
    let n = x.nrows();
    let d = x.ncols();
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "mini-batch size must satisfy 1 <= m <= n; got m={m}, n={n}"
        )));
    }
    if p.dim() != d {
        return Err(Error::dim(d, p.dim(), "preconditioner dimension"));
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let kappa = (0..n)
        .map(|i| x.row(i).norm_squared())
        .fold(0.0f64, f64::max);
    let lambda = if p.k() == 0 {
        // unpreconditioned: bound the full top eigenvalue via the dense
        // covariance (d is small here by contract)
        let h = x.transpose() * x / n as f64;
        h.symmetric_eigen().eigenvalues.max()
    } else if p.eigensystem().tail > 0.0 {
        p.eigensystem().tail
    } else {
        *p.eigensystem().values.last().unwrap()
    };
    let bound = bernstein_bound(&BoundInputs {
        lambda,
        kappa,
        m,
        dim: DimTerm::Linear(d),
        delta,
    })?;

    let ok: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let idx = crate::data::sample_indices(n, m, derive_seed(seed, &format!("norm-check-{t}")));
            let xm = select_rows(x, &idx);
            let hm = xm.transpose() * &xm / m as f64;
            let phm = p.apply_matrix(&hm).expect("dimensions checked above");
            let top = phm.singular_values()[0];
            usize::from(top <= bound)
        })
        .sum();
    Ok(ok as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::eigensolver::EigenSystem;
    use rand_distr::{Distribution, StandardNormal};

    fn inputs(lambda: f64, kappa: f64, m: usize, d: usize, delta: f64) -> BoundInputs {
        BoundInputs {
            lambda,
            kappa,
            m,
            dim: DimTerm::Linear(d),
            delta,
        }
    }

    #[test]
    fn hand_computed_bound() {
        // lam=0.1, kappa=1, m=256, d=100, delta=0.01
        let b = bernstein_bound(&inputs(0.1, 1.0, 256, 100, 0.01)).unwrap();
        let log_term = (20000.0f64).ln();
        let expect = 0.1 + (2.2 / 768.0) * log_term + ((0.2 / 256.0) * log_term).sqrt();
        assert_relative_eq!(b, expect, max_relative = 1e-14);
        assert_relative_eq!(b, 0.21632, max_relative = 1e-3);
    }

    #[test]
    fn large_batch_limit_is_lambda() {
        let b = bernstein_bound(&inputs(0.3, 2.0, 1 << 40, 50, 0.05)).unwrap();
        assert_relative_eq!(b, 0.3, max_relative = 1e-4);
    }

    #[test]
    fn kernel_log_argument() {
        // dhat = 1 -> log argument 8/delta; check against manual evaluation
        let delta = 0.02;
        let b = bernstein_bound(&BoundInputs {
            lambda: 0.5,
            kappa: 1.0,
            m: 64,
            dim: DimTerm::Kernel(1.0),
            delta,
        })
        .unwrap();
        let lt = (8.0 / delta).ln();
        let expect = 0.5 + (3.0 / 192.0) * lt + ((1.0 / 64.0) * lt).sqrt();
        assert_relative_eq!(b, expect, max_relative = 1e-14);
    }

    #[test]
    fn bound_monotonicities() {
        let base = bernstein_bound(&inputs(0.1, 1.0, 256, 100, 0.01)).unwrap();
        assert!(base >= 0.1);
        assert!(bernstein_bound(&inputs(0.1, 1.0, 512, 100, 0.01)).unwrap() < base);
        assert!(bernstein_bound(&inputs(0.1, 2.0, 256, 100, 0.01)).unwrap() > base);
        assert!(bernstein_bound(&inputs(0.1, 1.0, 256, 100, 0.001)).unwrap() > base);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(bernstein_bound(&inputs(0.0, 1.0, 256, 100, 0.01)).is_err());
        assert!(bernstein_bound(&inputs(0.1, -1.0, 256, 100, 0.01)).is_err());
        assert!(bernstein_bound(&inputs(0.1, 1.0, 0, 100, 0.01)).is_err());
        assert!(bernstein_bound(&inputs(0.1, 1.0, 256, 0, 0.01)).is_err());
        assert!(bernstein_bound(&inputs(0.1, 1.0, 256, 100, 1.0)).is_err());
    }

    fn es_with_tail(tail: f64) -> EigenSystem {
        EigenSystem::new(DMatrix::identity(100, 1), vec![1.0], tail, vec![]).unwrap()
    }

    #[test]
    fn auto_bound_is_reciprocal() {
        let es = es_with_tail(0.1);
        let eta = auto_step_size(&es, 256, 1.0, 0.01, EtaMode::Bound, DimTerm::Linear(100)).unwrap();
        let b = bernstein_bound(&inputs(0.1, 1.0, 256, 100, 0.01)).unwrap();
        assert_eq!(eta * b, 1.0);
        assert_relative_eq!(eta, 4.6228, max_relative = 1e-3);
    }

    #[test]
    fn auto_bound_large_batch_approaches_inverse_tail() {
        let es = es_with_tail(0.1);
        let eta = auto_step_size(&es, 1 << 40, 1.0, 0.01, EtaMode::Bound, DimTerm::Linear(100)).unwrap();
        assert_relative_eq!(eta, 10.0, max_relative = 1e-4);
    }

    #[test]
    fn heuristic_and_bound_share_sqrt_m_scaling() {
        // in the variance-dominated regime both rules grow like sqrt(m)
        let es = es_with_tail(0.15);
        let mut ratios = Vec::new();
        for m in [16usize, 64, 256] {
            let b = auto_step_size(&es, m, 1.0, 0.01, EtaMode::Bound, DimTerm::Linear(100)).unwrap();
            let h = auto_step_size(&es, m, 1.0, 0.01, EtaMode::Heuristic, DimTerm::Linear(100)).unwrap();
            ratios.push(h / b);
        }
        for r in &ratios[1..] {
            assert!(
                (r / ratios[0] - 1.0).abs() < 0.2,
                "ratio drifted: {ratios:?}"
            );
        }
    }

    #[test]
    fn norm_check_identical_rows_always_within_bound() {
        // identical rows make H_m = H for every batch
        let n = 60;
        let x = DMatrix::from_fn(n, 4, |_, j| (j + 1) as f64 / 10.0);
        let h = x.transpose() * &x / n as f64;
        let eig = h.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let es = EigenSystem::new(
            eig.eigenvectors.select_columns(order[..1].iter()),
            vec![eig.eigenvalues[order[0]]],
            eig.eigenvalues[order[1]].max(0.0),
            vec![],
        );
        // rank-one data: tail is 0, so fall back to the retained eigenvalue
        let es = es.unwrap();
        let p = LinearPreconditioner::build(es, 1.0).unwrap();
        let frac = empirical_norm_check(&x, &p, 10, 50, 0.01, 7).unwrap();
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn norm_check_monte_carlo_validates_bound() {
        let mut rng = crate::seed::rng_for(3, "mc");
        let n = 2000;
        let d = 20;
        let x = DMatrix::from_fn(n, d, |_, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / (1 + j) as f64
        });
        let h = x.transpose() * &x / n as f64;
        let eig = h.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let k = 5;
        let es = EigenSystem::new(
            eig.eigenvectors.select_columns(order[..k].iter()),
            order[..k].iter().map(|&i| eig.eigenvalues[i]).collect(),
            eig.eigenvalues[order[k]].max(0.0),
            vec![],
        )
        .unwrap();
        let p = LinearPreconditioner::build(es, 1.0).unwrap();
        let frac = empirical_norm_check(&x, &p, 64, 300, 0.01, 11).unwrap();
        assert!(frac >= 0.99, "exceedance-free fraction {frac}");
    }

    #[test]
    fn norm_check_full_batch_exact_eigensystem() {
        let mut rng = crate::seed::rng_for(5, "fb");
        let n = 200;
        let d = 10;
        let x = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let h = x.transpose() * &x / n as f64;
        let eig = h.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let k = 3;
        let es = EigenSystem::new(
            eig.eigenvectors.select_columns(order[..k].iter()),
            order[..k].iter().map(|&i| eig.eigenvalues[i]).collect(),
            eig.eigenvalues[order[k]].max(0.0),
            vec![],
        )
        .unwrap();
        let tail = es.tail;
        let p = LinearPreconditioner::build(es, 1.0).unwrap();
        // with m = n every batch covariance is H itself, so ||PH|| = tail
        let hm = &h;
        let phm = p.apply_matrix(hm).unwrap();
        let top = phm.singular_values()[0];
        assert_relative_eq!(top, tail, max_relative = 1e-8);
        let frac = empirical_norm_check(&x, &p, n, 5, 0.01, 2).unwrap();
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn norm_check_rejects_oversized_batch() {
        let x = DMatrix::<f64>::identity(5, 5);
        let p = LinearPreconditioner::identity(5);
        assert!(empirical_norm_check(&x, &p, 6, 10, 0.01, 0).is_err());
    }
}
