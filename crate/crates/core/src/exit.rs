//! First exit of the mixed-exponential random walk from `(-a, b)`, and the
//! first crossing of `b` when there is no lower barrier.
//!
//! Every generating function here is built from the root `w_u` of
//! `E(e^{wZ}) = 1/u` and its companion root `w_u + beta_u`. Under the
//! measure tilted by `w_u` the walk is again mixed-exponential, so the
//! tilted up-crossing probability has the same closed form as the untilted
//! one, and `E(u^T) = E~(e^{-w_u S_T})` splits over the two exits.
//!
//! The expressions are evaluated with every exponential rescaled to a
//! non-positive exponent (`e^{beta_u a}`, `e^{-w_u b}`, `e^{(w_u+beta_u) a}`)
//! and with the explicit `1/u` factors multiplied through, so the same code
//! serves real points and truncated series without overflow.

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::Series;
use crate::tilted::MixedExpStep;

/// Below this `|w*|` the up-crossing probability uses the zero-drift limit.
pub const WSTAR_SWITCH_TOL: f64 = 1e-10;

/// Required captured mass before a mean is reported from a truncated pmf.
pub const MEAN_MASS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LowerBarrier {
    Finite(f64),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitModel {
    pub step: MixedExpStep,
    pub lower: LowerBarrier,
    pub b: f64,
}

/// Coefficient arithmetic used for series expansions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[default]
    Double,
    DoubleDouble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitDistributions {
    /// `pmf_t[m] = P(T = m)` for `m = 0..=order`.
    pub pmf_t: Vec<f64>,
    pub prob_up: f64,
    pub mass_total: f64,
}

impl ExitDistributions {
    /// The pmf with rounding-level negatives replaced by zero.
    pub fn clamped(&self) -> Vec<f64> {
        self.pmf_t.iter().map(|&x| x.max(0.0)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitMean {
    pub mean: f64,
    /// Estimated contribution of `m > order` to the mean.
    pub tail_bound: f64,
    pub mass: f64,
}

impl ExitModel {
    pub fn two_sided(step: MixedExpStep, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("lower barrier a must be positive, got {a}")));
        }
        Self::check_b(b)?;
        Ok(ExitModel { step, lower: LowerBarrier::Finite(a), b })
    }

    pub fn one_sided(step: MixedExpStep, b: f64) -> Result<Self> {
        Self::check_b(b)?;
        Ok(ExitModel { step, lower: LowerBarrier::Infinite, b })
    }

    fn check_b(b: f64) -> Result<()> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("upper barrier b must be positive, got {b}")));
        }
        Ok(())
    }

    pub fn a(&self) -> Option<f64> {
        match self.lower {
            LowerBarrier::Finite(a) => Some(a),
            LowerBarrier::Infinite => None,
        }
    }

    fn finite_a(&self) -> Result<f64> {
        self.a().ok_or_else(|| {
            Error::Usage("this quantity needs a finite lower barrier".into())
        })
    }
}

/// `w_u` and `beta_u = -sqrt(...)`; the companion root is `w_u + beta_u`.
#[derive(Clone, Debug)]
pub struct Roots<S> {
    pub w: S,
    pub beta: S,
}

pub fn roots<S: Scalar>(step: &MixedExpStep, u: &S) -> Result<Roots<S>> {
    let MixedExpStep { p, theta1, theta2 } = *step;
    let slope = (1.0 - p) * theta2 - p * theta1;
    let lin = u.clone() * slope + (theta1 - theta2);
    let radicand = lin.clone() * lin.clone() + (-u.clone() + 1.0) * (4.0 * theta1 * theta2);
    let beta = -radicand.sqrt()?;
    let w = (lin - beta.clone()) * 0.5;
    Ok(Roots { w, beta })
}

/// The root `w_u` of `E(e^{wZ}) = 1/u` lying in `[0, theta1)`.
pub fn w_u_point(step: &MixedExpStep, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("u must lie in (0, 1], got {u}")));
    }
    Ok(roots(step, &u)?.w)
}

/// `w_u` expanded about `u = 0`; the constant term is `theta1`.
pub fn w_u_series(step: &MixedExpStep, order: usize) -> Result<Series<f64>> {
    Ok(roots(step, &Series::var(order))?.w)
}

/// Mean step under the measure tilted by `w_u`; positive for `u` in (0,1).
pub fn tilted_drift(step: &MixedExpStep, u: f64) -> Result<f64> {
    let w = w_u_point(step, u)?;
    let MixedExpStep { p, theta1, theta2 } = *step;
    Ok(p * theta1 * u / (theta1 - w).powi(2) - (1.0 - p) * theta2 * u / (theta2 + w).powi(2))
}

/// `P(S_T >= b)`.
pub fn exit_up_probability(model: &ExitModel) -> Result<f64> {
    let a = model.finite_a()?;
    let MixedExpStep { p, theta1, theta2 } = model.step;
    let b = model.b;
    let ws = model.step.w_star();
    let prob = if ws.abs() < WSTAR_SWITCH_TOL {
        (theta1 + a * theta1 * theta2) / (theta1 + theta2 + (b + a) * theta1 * theta2)
    } else {
        let down = theta2 * (-ws * a).exp() / ((1.0 - p) * (theta1 + theta2));
        let up = theta1 * (ws * b).exp() / (p * (theta1 + theta2));
        (1.0 - down) / (up - down)
    };
    Ok(prob.clamp(0.0, 1.0))
}

struct Pieces<S> {
    w: S,
    beta: S,
    /// `theta1 - w_u`
    up_gap: S,
    /// `theta2 + w_u`
    down_gap: S,
    xs: S,
    ys: S,
    /// `u e^{beta a} - xs`: numerator of the tilted up-crossing probability.
    num: S,
    /// `ys e^{beta (a+b)} - xs`
    den: S,
}

fn pieces<S: Scalar>(step: &MixedExpStep, a: f64, u: &S, b: f64) -> Result<Pieces<S>> {
    let MixedExpStep { p, theta1, theta2 } = *step;
    let Roots { w, beta } = roots(step, u)?;
    let total = theta1 + theta2;
    let up_gap = -w.clone() + theta1;
    let down_gap = w.clone() + theta2;
    let xs = down_gap.clone() * down_gap.clone() * (1.0 / ((1.0 - p) * theta2 * total));
    let ys = up_gap.clone() * up_gap.clone() * (1.0 / (p * theta1 * total));
    let den = ys.clone() * (beta.clone() * (a + b)).exp() - xs.clone();
    let num = u.clone() * (beta.clone() * a).exp() - xs.clone();
    Ok(Pieces { w, beta, up_gap, down_gap, xs, ys, num, den })
}

impl<S: Scalar> Pieces<S> {
    /// `e^{w a} (1 - P~)` times `den`, rescaled.
    fn down_weight(&self, u: &S, a: f64, b: f64) -> S {
        let other = self.w.clone() + self.beta.clone();
        let e_other = (other * a).exp();
        self.ys.clone() * (self.beta.clone() * b).exp() * e_other.clone() - u.clone() * e_other
    }
}

/// `E(u^T)` for the two-sided exit, at a point or as a series.
pub fn exit_pgf<S: Scalar>(model: &ExitModel, u: &S) -> Result<S> {
    let a = model.finite_a()?;
    let b = model.b;
    let MixedExpStep { theta1, theta2, .. } = model.step;
    let pc = pieces(&model.step, a, u, b)?;
    let down = pc.down_gap.clone() * (1.0 / theta2) * pc.down_weight(u, a, b);
    let e_wb = (-pc.w.clone() * b).exp();
    let up = pc.up_gap.clone()
        * (1.0 / theta1)
        * (u.clone() * (pc.beta.clone() * a).exp() * e_wb.clone() - pc.xs.clone() * e_wb);
    (down + up).try_div(&pc.den)
}

pub fn exit_pgf_point(model: &ExitModel, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("u must lie in (0, 1), got {u}")));
    }
    exit_pgf(model, &u)
}

/// `P~_{w_u}(S_T >= b)`: the up-crossing probability of the tilted walk.
pub fn tilted_prob_up<S: Scalar>(model: &ExitModel, u: &S) -> Result<S> {
    let a = model.finite_a()?;
    let pc = pieces(&model.step, a, u, model.b)?;
    pc.num.try_div(&pc.den)
}

/// Joint generating function `E(u^T e^{x S_T})` at a point.
pub fn exit_joint_gf(model: &ExitModel, u: f64, x: f64) -> Result<f64> {
    let a = model.finite_a()?;
    let b = model.b;
    let MixedExpStep { theta1, theta2, .. } = model.step;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("u must lie in (0, 1), got {u}")));
    }
    if !(x > -theta2 && x < theta1) {
        return Err(Error::Domain(format!("x = {x} outside ({}, {theta1})", -theta2)));
    }
    let pc = pieces(&model.step, a, &u, b)?;
    let up = pc.up_gap * ((x - pc.w) * b).exp() / (theta1 - x) * pc.num;
    let down = pc.down_gap * (-x * a).exp() / (x + theta2) * pc.down_weight(&u, a, b);
    Ok((up + down) / pc.den)
}

/// `E(u^T | S_T >= b)`.
pub fn exit_conditional_pgf<S: Scalar>(model: &ExitModel, u: &S) -> Result<S> {
    let a = model.finite_a()?;
    let prob_up = exit_up_probability(model)?;
    if prob_up <= 0.0 {
        return Err(Error::Domain("the upper barrier is never reached".into()));
    }
    let b = model.b;
    let theta1 = model.step.theta1;
    let pc = pieces(&model.step, a, u, b)?;
    let lead = pc.up_gap.clone() * (-pc.w.clone() * b).exp() * (1.0 / (theta1 * prob_up));
    (lead * pc.num).try_div(&pc.den)
}

/// `E(u^T | T < inf)` for the one-sided barrier.
pub fn one_sided_conditional_pgf<S: Scalar>(step: &MixedExpStep, b: f64, u: &S) -> Result<S> {
    let w1 = step.w_star().max(0.0);
    let Roots { w, .. } = roots(step, u)?;
    let scale = 1.0 / (step.theta1 - w1);
    Ok((-w.clone() + step.theta1) * scale * ((-w + w1) * b).exp())
}

fn expand<C, F>(order: usize, template: C, f: F) -> Result<Vec<f64>>
where
    C: Scalar,
    F: Fn(&Series<C>) -> Result<Series<C>>,
{
    let u = Series::variable_like(&template, order);
    let g = f(&u)?;
    // T >= 1: the constant term must cancel to rounding level.
    g.shift_div_u(1)?;
    Ok(g.map(Scalar::lead))
}

fn expand_with<F32, F64>(order: usize, precision: Precision, f: F32, g: F64) -> Result<Vec<f64>>
where
    F32: Fn(&Series<f64>) -> Result<Series<f64>>,
    F64: Fn(&Series<TwoFloat>) -> Result<Series<TwoFloat>>,
{
    if order == 0 {
        return Err(Error::Usage("series order must be at least 1".into()));
    }
    match precision {
        Precision::Double => expand(order, 0.0, f),
        Precision::DoubleDouble => expand(order, TwoFloat::from(0.0), g),
    }
}

/// Coefficients of `E(u^T)` up to `u^order`, i.e. `P(T = m)`.
pub fn exit_pgf_series(model: &ExitModel, order: usize) -> Result<ExitDistributions> {
    exit_pgf_series_with(model, order, Precision::Double)
}

pub fn exit_pgf_series_with(
    model: &ExitModel,
    order: usize,
    precision: Precision,
) -> Result<ExitDistributions> {
    let pmf_t = expand_with(order, precision, |u| exit_pgf(model, u), |u| exit_pgf(model, u))?;
    let prob_up = exit_up_probability(model)?;
    let mass_total = pmf_t.iter().sum();
    Ok(ExitDistributions { pmf_t, prob_up, mass_total })
}

/// `h(m) = P(T = m | S_T >= b)` for `m = 0..=order`.
pub fn exit_conditional_pgf_series(
    model: &ExitModel,
    order: usize,
    precision: Precision,
) -> Result<Vec<f64>> {
    expand_with(
        order,
        precision,
        |u| exit_conditional_pgf(model, u),
        |u| exit_conditional_pgf(model, u),
    )
}

/// Prop-3 style crossing probability `P(T < inf)` for the barrier `b` alone.
pub fn one_sided_prob_finite(step: &MixedExpStep, b: f64) -> Result<f64> {
    ExitModel::check_b(b)?;
    let w1 = step.w_star();
    if w1 >= 0.0 {
        Ok(step.p * (step.theta1 + step.theta2) / step.theta1 * (-w1 * b).exp())
    } else {
        Ok(1.0)
    }
}

/// `s(m) = P(T = m | T < inf)` for the one-sided barrier.
pub fn one_sided_conditional_pmf(
    step: &MixedExpStep,
    b: f64,
    order: usize,
    precision: Precision,
) -> Result<Vec<f64>> {
    ExitModel::check_b(b)?;
    expand_with(
        order,
        precision,
        |u| one_sided_conditional_pgf(step, b, u),
        |u| one_sided_conditional_pgf(step, b, u),
    )
}

/// Truncation order used for plotting data: `max(4 m_max, 128)`.
pub fn default_order(m_max: usize) -> usize {
    (4 * m_max).max(128)
}

/// `E(T)` from the expanded pmf, with an estimate of the truncated tail.
pub fn expected_exit_time(model: &ExitModel, order: usize) -> Result<ExitMean> {
    let dist = exit_pgf_series(model, order)?;
    mean_from_pmf(&dist.pmf_t, order)
}

pub(crate) fn mean_from_pmf(pmf: &[f64], order: usize) -> Result<ExitMean> {
    let mass: f64 = pmf.iter().sum();
    if mass < 1.0 - MEAN_MASS_TOL {
        return Err(Error::Truncation {
            order,
            captured: mass,
            required: 1.0 - MEAN_MASS_TOL,
            suggested: 2 * order,
        });
    }
    let mean = pmf.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
    let n = pmf.len();
    let ratio = if n >= 2 && pmf[n - 2] > 0.0 { (pmf[n - 1] / pmf[n - 2]).clamp(0.0, 0.999) } else { 0.0 };
    let missing = (1.0 - mass).max(0.0);
    let tail_bound = missing * ((n - 1) as f64 + 1.0 / (1.0 - ratio));
    Ok(ExitMean { mean, tail_bound, mass })
}

/// `E(u^T)` for Laplace steps (`theta1 = theta2 = theta`, `p = 1/2`):
/// `(e^{a θ ũ} + e^{b θ ũ}) u / (1 - ũ + (1 + ũ) e^{(a+b) θ ũ})`, `ũ = sqrt(1-u)`.
///
/// Numerator and denominator are divided by `e^{(a+b) θ ũ}` before expansion;
/// the raw exponentials have alternating coefficients of size `e^{(a+b)θ}`.
pub fn laplace_pgf<S: Scalar>(theta: f64, a: f64, b: f64, u: &S) -> Result<S> {
    let ut = (-u.clone() + 1.0).sqrt()?;
    let num = ((ut.clone() * (-b * theta)).exp() + (ut.clone() * (-a * theta)).exp()) * u.clone();
    let den = (-ut.clone() + 1.0) * (ut.clone() * (-(a + b) * theta)).exp() + ut + 1.0;
    num.try_div(&den)
}

/// `E(u^T | S_T >= b)` for Laplace steps:
/// `e^{θbũ}(2+aθ+bθ)(1-ũ)(-u + e^{2aθũ}(2-u+2ũ)) / ((1+aθ)((1-E)(u-2) + 2(1+E)ũ))`
/// with `E = e^{2(a+b)θũ}`, rescaled by `1/E` like [`laplace_pgf`].
pub fn laplace_conditional_pgf<S: Scalar>(theta: f64, a: f64, b: f64, u: &S) -> Result<S> {
    let ut = (-u.clone() + 1.0).sqrt()?;
    let inv_e = (ut.clone() * (-2.0 * (a + b) * theta)).exp();
    let bracket = -u.clone() * (ut.clone() * (-(2.0 * a + b) * theta)).exp()
        + (ut.clone() * (-b * theta)).exp() * (-u.clone() + ut.clone() * 2.0 + 2.0);
    let num = (-ut.clone() + 1.0) * bracket * (2.0 + a * theta + b * theta);
    let den = ((inv_e.clone() - 1.0) * (u.clone() - 2.0) + (inv_e + 1.0) * ut * 2.0) * (1.0 + a * theta);
    num.try_div(&den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn down_walk() -> ExitModel {
        ExitModel::two_sided(MixedExpStep::new(1.0 / 3.0, 2.0, 1.0).unwrap(), 8.0, 6.0).unwrap()
    }

    #[test]
    fn symmetric_up_probability() {
        let m = ExitModel::two_sided(MixedExpStep::new(0.5, 1.3, 1.3).unwrap(), 3.0, 3.0).unwrap();
        assert!((exit_up_probability(&m).unwrap() - 0.5).abs() < 1e-15);
        let m = ExitModel::two_sided(MixedExpStep::new(0.5, 1.0, 1.0).unwrap(), 4.0, 4.0).unwrap();
        assert!((exit_up_probability(&m).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn up_probability_continuous_across_zero_drift() {
        let a = 4.0;
        let b = 2.5;
        let zero = MixedExpStep::new(0.5, 1.0, 1.0).unwrap();
        let near = MixedExpStep::new(0.5 + 1e-7, 1.0, 1.0).unwrap();
        let pz = exit_up_probability(&ExitModel::two_sided(zero, a, b).unwrap()).unwrap();
        let pn = exit_up_probability(&ExitModel::two_sided(near, a, b).unwrap()).unwrap();
        assert!((pz - pn).abs() < 1e-6);
    }

    #[test]
    fn w_u_endpoints() {
        let s = MixedExpStep::new(1.0 / 3.0, 2.0, 1.0).unwrap();
        assert_eq!(w_u_series(&s, 4).unwrap().coeffs()[0], 2.0);
        assert!((w_u_point(&s, 1.0).unwrap() - 1.0).abs() < 1e-14);
        let neg = MixedExpStep::new(0.7, 1.0, 1.0).unwrap();
        assert!(w_u_point(&neg, 1.0).unwrap().abs() < 1e-14);
        let w = w_u_point(&s, 0.7).unwrap();
        assert!((s.mgf(&w).unwrap() - 1.0 / 0.7).abs() < 1e-10);
        assert!(w_u_point(&s, 0.0).is_err());
        assert!(w_u_point(&s, 1.2).is_err());
    }

    #[test]
    fn squared_gap_over_u() {
        let s = MixedExpStep::new(1.0 / 3.0, 2.0, 1.0).unwrap();
        let gap = -w_u_series(&s, 6).unwrap() + 2.0;
        let shifted = (gap.clone() * gap).shift_div_u(1).unwrap();
        assert!(shifted.coeffs()[0].abs() < 1e-9);
        assert!((shifted.coeffs()[1] - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn one_sided_values() {
        let s = MixedExpStep::new(0.4, 1.5, 2.0).unwrap();
        let p = one_sided_prob_finite(&s, 3.0).unwrap();
        assert!((p - 14.0 / 15.0 * (-0.3f64).exp()).abs() < 1e-15);
        let lap = MixedExpStep::new(0.5, 1.0, 1.0).unwrap();
        assert_eq!(one_sided_prob_finite(&lap, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn pmf_starts_at_one_step() {
        let d = exit_pgf_series(&down_walk(), 64).unwrap();
        assert_eq!(d.pmf_t[0].abs(), d.pmf_t[0].abs().min(1e-12));
        assert!(d.pmf_t[1] > 0.0);
    }

    #[test]
    fn one_sided_needs_finite_a_for_two_sided_quantities() {
        let m = ExitModel::one_sided(MixedExpStep::new(0.4, 1.5, 2.0).unwrap(), 3.0).unwrap();
        assert!(matches!(exit_up_probability(&m), Err(Error::Usage(_))));
        assert!(matches!(exit_pgf_series(&m, 10), Err(Error::Usage(_))));
    }

    #[test]
    fn truncated_mean_errors() {
        assert!(matches!(expected_exit_time(&down_walk(), 8), Err(Error::Truncation { .. })));
    }
}
