//! Spectral diagnostics: which targets gradient descent can reach in a given
//! iteration budget, iteration lower bounds, eigenspectrum reports, and the
//! 1-D heat-kernel/Heaviside demonstration.
//!
//! For gradient descent on a quadratic with spectrum `lam_i` and target
//! coefficients `a_i = <e_i, v>`, the residual along mode `i` after `t` steps
//! is `(1 - eta lam_i)^t a_i`, so everything here reduces to closed-form sums
//! over the spectrum.

use crate::eigensolver::EigenSystem;
use crate::error::{Error, Result};

/// A target vector expressed in the eigenbasis of the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    eigenvalues: Vec<f64>,
    coefficients: Vec<f64>,
    eta: f64,
}

impl SpectralProfile {
    pub fn new(eigenvalues: Vec<f64>, coefficients: Vec<f64>, eta: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("profile needs at least one eigenvalue"));
        }
        if eigenvalues.len() != coefficients.len() {
            return Err(Error::dim(
                eigenvalues.len(),
                coefficients.len(),
                "profile coefficients",
            ));
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!("eigenvalue {i} must be positive, got {l}")));
            }
            if i > 0 && eigenvalues[i - 1] < l {
                return Err(Error::invalid("eigenvalues must be sorted non-increasing"));
            }
        }
        if coefficients.iter().map(|a| a * a).sum::<f64>() == 0.0 {
            return Err(Error::invalid("target vector is zero"));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("step size must be positive, got {eta}")));
        }
        Ok(SpectralProfile {
            eigenvalues,
            coefficients,
            eta,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Result of the two reach tests for one `(t, eps)` query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachMembership {
    /// The exact criterion: relative residual after `t` steps below `eps`.
    pub exact: bool,
    /// The spectral necessary condition: mass on modes with
    /// `lam_i < lam_1 / (2t)` below `eps^2`. Exact membership implies this
    /// (up to the constant in the weakened form), never the converse.
    pub necessary: bool,
}

/// Test whether the profiled target is reachable to relative error `eps`
/// within `t` gradient-descent steps.
pub fn reach_membership(p: &SpectralProfile, t: u64, eps: f64) -> Result<ReachMembership> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let lam1 = p.eigenvalues[0];
    let step = p.eta * lam1;
    if !(step > 0.0 && step < 2.0) {
        return Err(Error::invalid(format!(
            "need 0 < eta * lam_1 < 2 for convergent dynamics, got {step}"
        )));
    }
    let total: f64 = p.coefficients.iter().map(|a| a * a).sum();
    let mut residual = 0.0;
    let mut slow_mass = 0.0;
    let cutoff = lam1 / (2.0 * t.max(1) as f64);
    for (&lam, &a) in p.eigenvalues.iter().zip(&p.coefficients) {
        let factor = (1.0 - p.eta * lam).abs().powf(2.0 * t as f64);
        residual += factor * a * a;
        if lam < cutoff {
            slow_mass += a * a;
        }
    }
    Ok(ReachMembership {
        exact: residual < eps * eps * total,
        necessary: slow_mass < eps * eps * total,
    })
}

/// Necessary iteration count for mode `i` to be resolved: any run reaching
/// relative error `eps` must satisfy `t > (lam_1 / 2 lam_i) ln(r / eps)`
/// where `r = |<e_i, v>| / ||v||`. Valid in the regime `lam_i < lam_1 / 2`.
pub fn min_iterations(lambda1: f64, lambda_i: f64, coeff_ratio: f64, eps: f64) -> Result<f64> {
    if !(lambda1 > 0.0) || !(lambda_i > 0.0) {
        return Err(Error::invalid("eigenvalues must be positive"));
    }
    if lambda_i >= lambda1 / 2.0 {
        return Err(Error::invalid(format!(
            "bound requires lambda_i < lambda_1 / 2; got lambda_i = {lambda_i}, lambda_1 = {lambda1}"
        )));
    }
    if !(coeff_ratio > 0.0) {
        return Err(Error::invalid("coefficient ratio must be positive"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let bound = (lambda1 / (2.0 * lambda_i)) * (coeff_ratio / eps).ln();
    Ok(bound.max(0.0))
}

/// First `J` eigenvalues of the heat kernel on the circle with bandwidth `s`:
/// `1, e^-s, e^-s, e^-4s, e^-4s, ...` — the j-th entry is
/// `exp(-ceil(j/2)^2 s)`. Large indices underflow to exactly 0.
pub fn heat_kernel_spectrum(s: f64, j_count: usize) -> Result<Vec<f64>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {s}")));
    }
    if j_count == 0 {
        return Err(Error::invalid("need at least one eigenvalue"));
    }
    Ok((0..j_count)
        .map(|j| {
            let q = j.div_ceil(2) as f64;
            (-q * q * s).exp()
        })
        .collect())
}

/// Output of [`heaviside_demo`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeavisideDemo {
    /// Iteration counts queried.
    pub t_steps: Vec<u64>,
    /// Relative L2 reconstruction error for each t.
    pub errors: Vec<f64>,
    /// Error floor of the J-harmonic truncation itself.
    pub truncation_error: f64,
}

/// Gradient-descent reconstruction of the square wave
/// `f(x) = (4/pi) sum_{q odd} sin(qx)/q` under the heat kernel on the circle.
///
/// The dynamics are simulated in the eigenbasis (diagonal, exact) with
/// `eta = 1/lam_1 = 1`: mode `q` carries target coefficient `4/(pi q)` (odd
/// `q` only) and recovers by the factor `1 - (1 - lam_q)^t`. The relative L2
/// error also charges the mass of every harmonic beyond the first `J`.
pub fn heaviside_demo(s: f64, t_steps: &[u64], j_count: usize) -> Result<HeavisideDemo> {
    if t_steps.is_empty() {
        return Err(Error::invalid("need at least one iteration count"));
    }
    let spectrum = heat_kernel_spectrum(s, j_count)?;
    // sine harmonic of frequency q sits at index 2q - 1
    let q_max = j_count / 2;
    // ||f||^2 = sum over all odd q of (4/(pi q))^2 = 2
    let total = 2.0f64;
    let mut modeled = Vec::new(); // (a^2, lambda) for modeled odd harmonics
    let mut modeled_mass = 0.0;
    for q in (1..=q_max).step_by(2) {
        let a2 = (4.0 / (std::f64::consts::PI * q as f64)).powi(2);
        let lam = spectrum[2 * q - 1];
        modeled.push((a2, lam));
        modeled_mass += a2;
    }
    let tail = (total - modeled_mass).max(0.0);
    let errors = t_steps
        .iter()
        .map(|&t| {
            let mut num = tail;
            for &(a2, lam) in &modeled {
                num += a2 * (1.0 - lam).powf(2.0 * t as f64);
            }
            (num / total).sqrt()
        })
        .collect();
    Ok(HeavisideDemo {
        t_steps: t_steps.to_vec(),
        errors,
        truncation_error: (tail / total).sqrt(),
    })
}

/// One row of [`spectrum_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRatio {
    pub k: usize,
    pub lambda_top: f64,
    pub lambda_next: f64,
    /// `lam_1 / lam_{k+1}`, the guaranteed acceleration factor of a rank-k
    /// preconditioner.
    pub ratio: f64,
}

/// Tabulate `lam_1 / lam_{k+1}` for each requested `k`.
pub fn spectrum_report(es: &EigenSystem, k_list: &[usize]) -> Result<Vec<SpectrumRatio>> {
    if es.k() == 0 {
        return Err(Error::invalid("eigensystem is empty"));
    }
    let top = es.values[0];
    k_list
        .iter()
        .map(|&k| {
            if k == 0 || k >= es.k() {
                return Err(Error::invalid(format!(
                    "requested k = {k} outside the {}-eigenvalue system",
                    es.k()
                )));
            }
            let next = es.values[k];
            Ok(SpectrumRatio {
                k,
                lambda_top: top,
                lambda_next: next,
                ratio: top / next,
            })
        })
        .collect()
}

/// Least-squares slopes of `log lam_i` vs `log i` over `segments` equal
/// splits of the index range — a decay-rate diagnostic. Steepening
/// (decreasing) slopes indicate super-polynomial decay.
pub fn loglog_slopes(values: &[f64], segments: usize) -> Result<Vec<f64>> {
    if segments == 0 || values.len() < 2 * segments {
        return Err(Error::invalid(format!(
            "need at least 2 points per segment; got {} values for {segments} segments",
            values.len()
        )));
    }
    let positive: Vec<f64> = values.iter().take_while(|&&v| v > 0.0).cloned().collect();
    if positive.len() < 2 * segments {
        return Err(Error::DegenerateInput(
            "spectrum hits zero too early for the requested segmentation".into(),
        ));
    }
    let per = positive.len() / segments;
    let mut slopes = Vec::with_capacity(segments);
    for seg in 0..segments {
        let lo = seg * per;
        let hi = if seg + 1 == segments { positive.len() } else { lo + per };
        let pts: Vec<(f64, f64)> = (lo..hi)
            .map(|i| (((i + 1) as f64).ln(), positive[i].ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return Err(Error::DegenerateInput("degenerate index range in slope fit".into()));
        }
        slopes.push(sxy / sxx);
    }
    Ok(slopes)
}
