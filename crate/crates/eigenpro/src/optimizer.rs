//! Training loops: full-gradient Richardson iteration and preconditioned
//! mini-batch SGD in both feature space and kernel space.
//!
//! All loops start from `alpha = 0`, use `1/n` (full batch) or `1/m`
//! (mini-batch) gradient scaling, and sample mini-batches without replacement
//! via a seeded per-epoch shuffle followed by sequential chunks. Setting
//! `k = 0` disables the preconditioner, giving the plain-SGD baselines the
//! accelerated runs are compared against.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::eigensolver::{kernel_eigensystem, rsvd};
use crate::error::{Error, Result};
use crate::features::{select_rows, FeatureMap};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::preconditioner::{KernelPreconditioner, LinearPreconditioner};
use crate::seed::rng_for;
use crate::stepsize::{auto_step_size, bernstein_bound, kernel_intdim, BoundInputs, DimTerm, EtaMode};

/// Step-size policy for a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// Invert the Bernstein bound on the preconditioned batch covariance.
    AutoBound,
    /// `sqrt(m / (lam_tail * kappa))`; faster, unguarded.
    AutoHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Eigen-directions removed by the preconditioner; 0 disables it.
    pub k: usize,
    /// Eigensolver subsample size.
    pub m_sub: usize,
    /// Mini-batch size.
    pub batch: usize,
    /// Preconditioner damping factor.
    pub tau: f64,
    pub eta: EtaRule,
    pub epochs: usize,
    pub seed: u64,
    /// Failure probability for the bound-mode step size.
    pub delta: f64,
    /// Optional early exit once train loss drops to this level.
    pub loss_target: Option<f64>,
}

impl TrainConfig {
    /// Library defaults: `m = 256`, `k = 160`, `M = 4800`, `tau = 0.25`.
    pub fn defaults() -> Self {
        TrainConfig {
            k: 160,
            m_sub: 4800,
            batch: 256,
            tau: 0.25,
            eta: EtaRule::AutoBound,
            epochs: 10,
            seed: 0,
            delta: 0.01,
            loss_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    /// Classification error for multi-column targets, eval (or train) MSE
    /// otherwise.
    pub metric: Option<f64>,
    pub alpha_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// The step size actually used.
    pub eta: f64,
    /// Echo of run parameters, in insertion order.
    pub params: Vec<(String, String)>,
}

impl TrainReport {
    fn new(eta: f64) -> Self {
        TrainReport {
            records: vec![],
            eta,
            params: vec![],
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_string(), value.to_string()));
    }

    /// One CSV row per epoch. The wall-clock column is opt-in so that default
    /// outputs are reproducible byte for byte.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("epoch,train_loss,eval_loss,metric,alpha_norm");
        if include_timing {
            out.push_str(",seconds");
        }
        out.push('\n');
        for r in &self.records {
            write!(out, "{},{}", r.epoch, r.train_loss).unwrap();
            match r.eval_loss {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
            match r.metric {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
            write!(out, ",{}", r.alpha_norm).unwrap();
            if include_timing {
                write!(out, ",{}", r.seconds).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// First epoch whose train loss is at or below `target`.
    pub fn epochs_to_target(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.train_loss <= target)
            .map(|r| r.epoch)
    }
}

/// Weights in feature space, with the feature map baked in when one was used.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub alpha: DMatrix<f64>,
    pub feature_map: Option<FeatureMap>,
}

impl LinearModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.feature_map {
            Some(map) => Ok(map.apply_matrix(x)? * &self.alpha),
            None => {
                if x.ncols() != self.alpha.nrows() {
                    return Err(Error::dim(self.alpha.nrows(), x.ncols(), "predict features"));
                }
                Ok(x * &self.alpha)
            }
        }
    }
}

/// Coefficients over kernel sections centered at the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub alpha: DMatrix<f64>,
    pub train_x: DMatrix<f64>,
    pub spec: KernelSpec,
}

impl KernelModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = kernel_matrix(&self.spec, x, &self.train_x)?;
        Ok(k * &self.alpha)
    }
}

/// Fraction of rows whose predicted argmax disagrees with the label argmax.
pub fn c_error(pred: &DMatrix<f64>, labels: &DMatrix<f64>) -> Result<f64> {
    if pred.nrows() != labels.nrows() || pred.ncols() != labels.ncols() {
        return Err(Error::dim(labels.nrows(), pred.nrows(), "c_error shapes"));
    }
    if pred.nrows() == 0 {
        return Err(Error::invalid("c_error on empty matrices"));
    }
    let argmax = |m: &DMatrix<f64>, i: usize| -> usize {
        let mut best = 0;
        for j in 1..m.ncols() {
            if m[(i, j)] > m[(i, best)] {
                best = j;
            }
        }
        best
    };
    let wrong = (0..pred.nrows())
        .filter(|&i| argmax(pred, i) != argmax(labels, i))
        .count();
    Ok(wrong as f64 / pred.nrows() as f64)
}

/// Mean squared deviation over all entries.
pub fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if pred.nrows() != target.nrows() || pred.ncols() != target.ncols() {
        return Err(Error::dim(target.nrows(), pred.nrows(), "mse shapes"));
    }
    if pred.nrows() == 0 || pred.ncols() == 0 {
        return Err(Error::invalid("mse on empty matrices"));
    }
    Ok((pred - target).norm_squared() / (pred.nrows() * pred.ncols()) as f64)
}

fn residual_loss(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (pred - y).norm_squared() / (y.nrows() * y.ncols()) as f64
}

fn check_divergence(eta: f64, loss: f64, initial: f64) -> Result<()> {
    if !loss.is_finite() || loss > 1e3 * initial {
        return Err(Error::Divergence {
            eta,
            loss,
            initial,
        });
    }
    Ok(())
}

fn eval_metric(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if y.ncols() > 1 {
        c_error(pred, y)
    } else {
        mse(pred, y)
    }
}

/// Full-gradient (preconditioned) Richardson iteration
/// `alpha <- alpha - eta P (H alpha - b)` with `H = X^T X / n`,
/// `b = X^T y / n`, started from zero. One report record per step.
pub fn richardson_gd(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    eta: f64,
    steps: usize,
    p: Option<&LinearPreconditioner>,
) -> Result<(LinearModel, TrainReport)> {
    let n = x.nrows();
    let d = x.ncols();
    if y.nrows() != n {
        return Err(Error::dim(n, y.nrows(), "target rows"));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {eta}")));
    }
    if let Some(p) = p {
        if p.dim() != d {
            return Err(Error::dim(d, p.dim(), "preconditioner dimension"));
        }
    }
    let c = y.ncols();
    let mut alpha = DMatrix::zeros(d, c);
    let initial = residual_loss(&(x * &alpha), y);
    let mut report = TrainReport::new(eta);
    report.param("method", "richardson");
    report.param("eta", eta);
    report.param("steps", steps);
    let nf = n as f64;
    for step in 1..=steps {
        let start = Instant::now();
        let resid = x * &alpha - y;
        let mut g = x.transpose() * resid / nf;
        if let Some(p) = p {
            g = p.apply_matrix(&g)?;
        }
        alpha -= eta * g;
        let loss = residual_loss(&(x * &alpha), y);
        check_divergence(eta, loss, initial.max(f64::MIN_POSITIVE))?;
        report.records.push(EpochRecord {
            epoch: step,
            train_loss: loss,
            eval_loss: None,
            metric: None,
            alpha_norm: alpha.norm(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((
        LinearModel {
            alpha,
            feature_map: None,
        },
        report,
    ))
}

fn resolve_linear_eta(
    x: &DMatrix<f64>,
    config: &TrainConfig,
    p: &LinearPreconditioner,
    kappa: f64,
) -> Result<f64> {
    let d = x.ncols();
    match config.eta {
        EtaRule::Fixed(v) => {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("fixed step size must be positive, got {v}")));
            }
            Ok(v)
        }
        EtaRule::AutoBound | EtaRule::AutoHeuristic => {
            let mode = if config.eta == EtaRule::AutoBound {
                EtaMode::Bound
            } else {
                EtaMode::Heuristic
            };
            if p.k() > 0 {
                auto_step_size(p.eigensystem(), config.batch, kappa, config.delta, mode, DimTerm::Linear(d))
            } else {
                // unpreconditioned: probe the top eigenvalue so plain SGD also
                // gets a safe step size
                let probe = rsvd(x, 1, config.m_sub.min(x.nrows()), config.seed)?;
                let lambda = probe.values[0];
                match mode {
                    EtaMode::Bound => {
                        let b = bernstein_bound(&BoundInputs {
                            lambda,
                            kappa,
                            m: config.batch,
                            dim: DimTerm::Linear(d),
                            delta: config.delta,
                        })?;
                        Ok(1.0 / b)
                    }
                    EtaMode::Heuristic => Ok((config.batch as f64).sqrt() / (lambda * kappa).sqrt()),
                }
            }
        }
    }
}

fn validate_sgd_args(n: usize, d: usize, config: &TrainConfig) -> Result<()> {
    if config.batch == 0 || config.batch > n {
        return Err(Error::invalid(format!(
            "mini-batch size must satisfy 1 <= m <= n; got m={}, n={n}",
            config.batch
        )));
    }
    if config.k > 0 {
        if config.m_sub > n {
            return Err(Error::invalid(format!(
                "eigensolver subsample {} exceeds n = {n}",
                config.m_sub
            )));
        }
        if config.k + 1 > config.m_sub.min(d) {
            return Err(Error::invalid(format!(
                "need k+1 <= min(M, d); got k={}, M={}, d={d}",
                config.k, config.m_sub
            )));
        }
    }
    Ok(())
}

/// Preconditioned mini-batch SGD in feature space. With `k = 0` this is the
/// plain SGD baseline.
pub fn eigenpro_linear_sgd(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    eval: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainReport)> {
    let n = x.nrows();
    let d = x.ncols();
    if y.nrows() != n {
        return Err(Error::dim(n, y.nrows(), "target rows"));
    }
    validate_sgd_args(n, d, config)?;

    let p = if config.k > 0 {
        let es = rsvd(x, config.k, config.m_sub, config.seed)?;
        LinearPreconditioner::build(es, config.tau)?
    } else {
        LinearPreconditioner::identity(d)
    };
    let kappa = (0..n).map(|i| x.row(i).norm_squared()).fold(0.0f64, f64::max);
    if kappa == 0.0 {
        return Err(Error::DegenerateInput("all-zero design matrix".into()));
    }
    let eta = resolve_linear_eta(x, config, &p, kappa)?;

    let c = y.ncols();
    let mut alpha = DMatrix::zeros(d, c);
    let initial = residual_loss(&DMatrix::zeros(n, c), y).max(f64::MIN_POSITIVE);
    let mut report = TrainReport::new(eta);
    report.param("method", if config.k > 0 { "eigenpro-linear" } else { "sgd-linear" });
    report.param("k", config.k);
    report.param("m", config.batch);
    report.param("eta", eta);
    report.param("seed", config.seed);

    let mut rng = rng_for(config.seed, "batch-shuffle");
    let mut idx: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(config.batch) {
            let xb = select_rows(x, chunk);
            let yb = select_rows(y, chunk);
            let g = xb.transpose() * (&xb * &alpha - yb) / chunk.len() as f64;
            let g = p.apply_matrix(&g)?;
            alpha -= eta * g;
        }
        let loss = residual_loss(&(x * &alpha), y);
        check_divergence(eta, loss, initial)?;
        let (eval_loss, metric) = match eval {
            Some((xe, ye)) => {
                let pe = xe * &alpha;
                (Some(residual_loss(&pe, ye)), Some(eval_metric(&pe, ye)?))
            }
            None => (None, None),
        };
        report.records.push(EpochRecord {
            epoch,
            train_loss: loss,
            eval_loss,
            metric,
            alpha_norm: alpha.norm(),
            seconds: start.elapsed().as_secs_f64(),
        });
        if config.loss_target.is_some_and(|t| loss <= t) {
            break;
        }
    }
    Ok((
        LinearModel {
            alpha,
            feature_map: None,
        },
        report,
    ))
}

/// Preconditioned mini-batch SGD in kernel space (coefficients over kernel
/// sections). With `k = 0` this is plain kernel SGD.
///
/// The full kernel matrix is materialized once and batch rows are sliced from
/// it, so memory is `O(n^2)`; intended for datasets that fit that budget.
pub fn eigenpro_kernel_sgd(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    eval: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    config: &TrainConfig,
) -> Result<(KernelModel, TrainReport)> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::dim(n, y.nrows(), "target rows"));
    }
    validate_sgd_args(n, n, config)?;

    let kp = if config.k > 0 {
        let es = kernel_eigensystem(spec, x, config.k, config.m_sub, config.seed)?;
        KernelPreconditioner::build(es, config.tau)?
    } else {
        KernelPreconditioner::identity(n)
    };
    // unit-diagonal kernels: kappa = max k(x, x) = 1
    let kappa = 1.0;
    let eta = match config.eta {
        EtaRule::Fixed(v) => {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("fixed step size must be positive, got {v}")));
            }
            v
        }
        EtaRule::AutoBound | EtaRule::AutoHeuristic => {
            let mode = if config.eta == EtaRule::AutoBound {
                EtaMode::Bound
            } else {
                EtaMode::Heuristic
            };
            if kp.k() > 0 {
                let dim = DimTerm::Kernel(kernel_intdim(kp.eigensystem()));
                auto_step_size(kp.eigensystem(), config.batch, kappa, config.delta, mode, dim)?
            } else {
                let probe = kernel_eigensystem(spec, x, 1, config.m_sub.min(n), config.seed)?;
                let lambda = probe.values[0];
                match mode {
                    EtaMode::Bound => {
                        let b = bernstein_bound(&BoundInputs {
                            lambda,
                            kappa,
                            m: config.batch,
                            dim: DimTerm::Kernel(kernel_intdim(&probe)),
                            delta: config.delta,
                        })?;
                        1.0 / b
                    }
                    EtaMode::Heuristic => (config.batch as f64).sqrt() / (lambda * kappa).sqrt(),
                }
            }
        }
    };

    let k_full = kernel_matrix(spec, x, x)?;
    let c = y.ncols();
    let mut alpha = DMatrix::zeros(n, c);
    let initial = residual_loss(&DMatrix::zeros(n, c), y).max(f64::MIN_POSITIVE);
    let mut report = TrainReport::new(eta);
    report.param("method", if config.k > 0 { "eigenpro-kernel" } else { "sgd-kernel" });
    report.param("k", config.k);
    report.param("m", config.batch);
    report.param("eta", eta);
    report.param("seed", config.seed);
    let nf = n as f64;

    let mut rng = rng_for(config.seed, "batch-shuffle");
    let mut idx: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(config.batch) {
            let kb = select_rows(&k_full, chunk); // m x n
            let yb = select_rows(y, chunk);
            let g = (&kb * &alpha - yb) / chunk.len() as f64; // m x c
            // split update: batch coordinates step along g, all coordinates
            // receive the low-rank correction
            for (row, &i) in chunk.iter().enumerate() {
                for j in 0..c {
                    alpha[(i, j)] -= eta * g[(row, j)];
                }
            }
            if kp.k() > 0 {
                let corr = kp.correction(&(kb.transpose() * &g / nf))?;
                alpha += eta * corr;
            }
        }
        let loss = residual_loss(&(&k_full * &alpha), y);
        check_divergence(eta, loss, initial)?;
        let (eval_loss, metric) = match eval {
            Some((xe, ye)) => {
                let ke = kernel_matrix(spec, xe, x)?;
                let pe = ke * &alpha;
                (Some(residual_loss(&pe, ye)), Some(eval_metric(&pe, ye)?))
            }
            None => (None, None),
        };
        report.records.push(EpochRecord {
            epoch,
            train_loss: loss,
            eval_loss,
            metric,
            alpha_norm: alpha.norm(),
            seconds: start.elapsed().as_secs_f64(),
        });
        if config.loss_target.is_some_and(|t| loss <= t) {
            break;
        }
    }
    Ok((
        KernelModel {
            alpha,
            train_x: x.clone(),
            spec: *spec,
        },
        report,
    ))
}
