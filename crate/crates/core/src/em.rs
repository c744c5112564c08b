//! EM estimation of the defect probability `p` from observed switching
//! times alone, with the stopped sums `S_T` as missing data.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::sampling::{run_chain_joint_pgf, SamplingPlan};
use crate::series::Series;

/// Coefficients read beyond the largest observation.
pub const GUARD_TERMS: usize = 8;

const P_CLAMP: f64 = 1e-9;
const MIN_PROB: f64 = 1e-300;

/// The known part of a sampling plan: sample size, acceptance number and
/// run length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanShape {
    pub n: u32,
    pub c: u32,
    pub k: u32,
}

impl PlanShape {
    pub fn new(n: u32, c: u32, k: u32) -> Result<Self> {
        SamplingPlan::new(n, 0.5, c, k)?;
        Ok(PlanShape { n, c, k })
    }

    pub fn plan(&self, p: f64) -> Result<SamplingPlan> {
        SamplingPlan::new(self.n, p, self.c, self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub shape: PlanShape,
    pub p0: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Truncation order; `None` uses the largest observation plus
    /// [`GUARD_TERMS`].
    pub series_order: Option<usize>,
    /// The interval has confidence `1 - alpha`.
    pub alpha: f64,
}

impl EmConfig {
    pub fn new(shape: PlanShape) -> Self {
        EmConfig { shape, p0: 0.5, epsilon: 1e-8, max_iter: 10_000, series_order: None, alpha: 0.05 }
    }

    fn validate(&self, taus: &[u64]) -> Result<usize> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Domain(format!("initial p must lie in (0,1), got {}", self.p0)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        let order = check_taus(taus, &self.shape)?;
        match self.series_order {
            Some(n) if n < order - GUARD_TERMS => Err(Error::Domain(format!(
                "series order {n} is below the largest observation {}",
                order - GUARD_TERMS
            ))),
            Some(n) => Ok(n),
            None => Ok(order),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmFitResult {
    pub p_hat: f64,
    pub iterations: usize,
    /// `p0, p1, ..., p_hat`.
    pub trace: Vec<f64>,
    pub cond_means: Vec<f64>,
    pub fisher: f64,
    pub ci: (f64, f64),
    /// Incomplete-data log-likelihood at each entry of `trace`.
    pub loglik_trace: Vec<f64>,
}

/// Conditional means `E(S_T | T = tau_i)` and the log-likelihood
/// `sum log P(T = tau_i)` at one value of `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct EStep {
    pub p: f64,
    pub cond_means: Vec<f64>,
    pub loglik: f64,
}

fn check_taus(taus: &[u64], shape: &PlanShape) -> Result<usize> {
    if taus.is_empty() {
        return Err(Error::Usage("no observations".into()));
    }
    for &tau in taus {
        if tau < shape.k as u64 {
            return Err(Error::Support { tau, k: shape.k });
        }
    }
    let max = *taus.iter().max().expect("nonempty") as usize;
    Ok(max + GUARD_TERMS)
}

/// Coefficients of `E(u^T t^{S_T})` and its `t`-derivative at `t = 1`:
/// entry `r` holds `P(T = r)` and `sum_m m P(T = r, S_T = m)`.
pub fn moment_series(shape: &PlanShape, p: f64, order: usize) -> Result<Vec<Dual>> {
    let plan = shape.plan(p)?;
    let u = Series::variable_like(&Dual::constant(0.0), order);
    let t = Series::constant(Dual::variable(1.0), order);
    Ok(run_chain_joint_pgf(&plan, &u, &t)?.into_coeffs())
}

fn ratio_at(coeffs: &[Dual], tau: u64) -> Result<f64> {
    let c = coeffs[tau as usize];
    if !(c.val > MIN_PROB) {
        return Err(Error::ImpossibleObservation { tau, prob: c.val });
    }
    Ok(c.der / c.val)
}

/// `E(S_T | T = tau)` at defect probability `p`.
pub fn conditional_mean_st(tau: u64, p: f64, shape: &PlanShape) -> Result<f64> {
    let order = check_taus(&[tau], shape)?;
    ratio_at(&moment_series(shape, p, order)?, tau)
}

pub fn e_step(p: f64, taus: &[u64], shape: &PlanShape, order: usize) -> Result<EStep> {
    let coeffs = moment_series(shape, p, order)?;
    let mut cond_means = Vec::with_capacity(taus.len());
    let mut loglik = 0.0;
    for &tau in taus {
        cond_means.push(ratio_at(&coeffs, tau)?);
        loglik += coeffs[tau as usize].val.ln();
    }
    Ok(EStep { p, cond_means, loglik })
}

fn m_step(cond_means: &[f64], taus: &[u64], n: u32) -> f64 {
    let num: f64 = cond_means.iter().sum();
    let den = n as f64 * taus.iter().sum::<u64>() as f64;
    (num / den).clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// One EM update `p -> sum E(S_T | tau_i, p) / (n sum tau_i)`.
pub fn em_step(p: f64, taus: &[u64], shape: &PlanShape) -> Result<f64> {
    let order = check_taus(taus, shape)?;
    let e = e_step(p, taus, shape, order)?;
    Ok(m_step(&e.cond_means, taus, shape.n))
}

/// Sum of `log P(T = tau_i)` at `p`.
pub fn log_likelihood(p: f64, taus: &[u64], shape: &PlanShape) -> Result<f64> {
    let order = check_taus(taus, shape)?;
    let coeffs = moment_series(shape, p, order)?;
    let mut total = 0.0;
    for &tau in taus {
        let v = coeffs[tau as usize].val;
        if !(v > MIN_PROB) {
            return Err(Error::ImpossibleObservation { tau, prob: v });
        }
        total += v.ln();
    }
    Ok(total)
}

/// Observed information
/// `[(1 - 2p) sum E_i + n p^2 sum tau_i] / ((1 - p)^2 p^2)` and the normal
/// interval `p -/+ z_{alpha/2} I^{-1/2}`.
pub fn fisher_info_and_ci(
    p_hat: f64,
    cond_means: &[f64],
    taus: &[u64],
    n: u32,
    alpha: f64,
) -> Result<(f64, (f64, f64))> {
    let sum_e: f64 = cond_means.iter().sum();
    let sum_tau = taus.iter().sum::<u64>() as f64;
    let q = 1.0 - p_hat;
    let info = ((1.0 - 2.0 * p_hat) * sum_e + n as f64 * p_hat * p_hat * sum_tau)
        / (q * q * p_hat * p_hat);
    if !(info > 0.0 && info.is_finite()) {
        return Err(Error::DegenerateInformation(info));
    }
    let half = normal_quantile(1.0 - alpha / 2.0) / info.sqrt();
    Ok((info, (p_hat - half, p_hat + half)))
}

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

pub fn em_fit(taus: &[u64], config: &EmConfig) -> Result<EmFitResult> {
    let order = config.validate(taus)?;
    let shape = &config.shape;
    let mut p = config.p0;
    let mut trace = vec![p];
    let mut loglik_trace = Vec::new();
    let mut last_delta = f64::INFINITY;
    for iteration in 1..=config.max_iter {
        let e = e_step(p, taus, shape, order)?;
        loglik_trace.push(e.loglik);
        let next = m_step(&e.cond_means, taus, shape.n);
        trace.push(next);
        last_delta = (next - p).abs();
        p = next;
        if last_delta < config.epsilon {
            let fin = e_step(p, taus, shape, order)?;
            loglik_trace.push(fin.loglik);
            let (fisher, ci) = fisher_info_and_ci(p, &fin.cond_means, taus, shape.n, config.alpha)?;
            return Ok(EmFitResult {
                p_hat: p,
                iterations: iteration,
                trace,
                cond_means: fin.cond_means,
                fisher,
                ci,
                loglik_trace,
            });
        }
    }
    Err(Error::NonConvergence { iterations: config.max_iter, last_delta, trace })
}
