//! Step and sample distributions together with their exponentially tilted
//! forms `f_w(z) = e^{wz} f(z) / E(e^{wZ})`.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Random-walk step: `+Exp(theta1)` with probability `p`, otherwise
/// `-Exp(theta2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedExpStep {
    pub p: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// A [`MixedExpStep`] after tilting by `w`: still a mixed-exponential step,
/// with mixing probability `c_w` and rates `theta1 - w`, `theta2 + w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedMixedExpStep {
    pub w: f64,
    pub c_w: f64,
    pub rate_up: f64,
    pub rate_down: f64,
}

impl MixedExpStep {
    pub fn new(p: f64, theta1: f64, theta2: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("p must lie in (0,1), got {p}")));
        }
        if !(theta1 > 0.0 && theta1.is_finite() && theta2 > 0.0 && theta2.is_finite()) {
            return Err(Error::Domain(format!(
                "rates must be positive, got theta1={theta1}, theta2={theta2}"
            )));
        }
        Ok(MixedExpStep { p, theta1, theta2 })
    }

    pub fn mean(&self) -> f64 {
        self.p / self.theta1 - (1.0 - self.p) / self.theta2
    }

    pub fn density(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.p * self.theta1 * (-self.theta1 * x).exp()
        } else {
            (1.0 - self.p) * self.theta2 * (self.theta2 * x).exp()
        }
    }

    fn check_strip(&self, w: f64) -> Result<()> {
        if !(w > -self.theta2 && w < self.theta1) {
            return Err(Error::Domain(format!(
                "tilt {w} outside the strip ({}, {})",
                -self.theta2, self.theta1
            )));
        }
        Ok(())
    }

    /// `E(e^{wZ}) = p θ1/(θ1 - w) + (1-p) θ2/(θ2 + w)`.
    ///
    /// For series arguments the strip condition applies to the constant term.
    pub fn mgf<S: Scalar>(&self, w: &S) -> Result<S> {
        self.check_strip(w.lead())?;
        let up = (-w.clone() + self.theta1).recip()? * (self.p * self.theta1);
        let down = (w.clone() + self.theta2).recip()? * ((1.0 - self.p) * self.theta2);
        Ok(up + down)
    }

    /// The nonzero root of `E(e^{wZ}) = 1` (zero when the walk has zero drift).
    pub fn w_star(&self) -> f64 {
        (1.0 - self.p) * self.theta1 - self.p * self.theta2
    }

    pub fn tilt(&self, w: f64) -> Result<TiltedMixedExpStep> {
        self.check_strip(w)?;
        let up = self.p * self.theta1 / (self.theta1 - w);
        let down = (1.0 - self.p) * self.theta2 / (self.theta2 + w);
        Ok(TiltedMixedExpStep {
            w,
            c_w: up / (up + down),
            rate_up: self.theta1 - w,
            rate_down: self.theta2 + w,
        })
    }
}

impl TiltedMixedExpStep {
    /// The tilted law as an ordinary step distribution.
    pub fn as_step(&self) -> MixedExpStep {
        MixedExpStep { p: self.c_w, theta1: self.rate_up, theta2: self.rate_down }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.as_step().density(x)
    }
}

/// Number of defectives in a sample of `n` items, each defective with
/// probability `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialSample {
    pub n: u32,
    pub p: f64,
}

impl BinomialSample {
    pub fn new(n: u32, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("p must lie in (0,1), got {p}")));
        }
        Ok(BinomialSample { n, p })
    }

    pub fn pmf(&self) -> Vec<f64> {
        let start = (1.0 - self.p).powi(self.n as i32);
        if start > 1e-250 {
            let ratio = self.p / (1.0 - self.p);
            let mut term = start;
            return (0..=self.n)
                .map(|x| {
                    let out = term;
                    term *= ratio * (self.n - x) as f64 / (x + 1) as f64;
                    out
                })
                .collect();
        }
        let (lp, lq) = (self.p.ln(), (-self.p).ln_1p());
        (0..=self.n as u64)
            .map(|x| {
                let rest = self.n as u64 - x;
                (ln_binomial(self.n as u64, x) + x as f64 * lp + rest as f64 * lq).exp()
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.n as f64 * self.p
    }

    /// `E(t^Z) = (1 - p + p t)^n`.
    pub fn pgf<S: Scalar>(&self, t: &S) -> S {
        (t.clone() * self.p + (1.0 - self.p)).powi(self.n)
    }

    fn check_t<S: Scalar>(t: &S) -> Result<()> {
        if !S::FORMAL && t.lead() <= 0.0 {
            return Err(Error::Domain(format!("tilt parameter t must be positive, got {}", t.lead())));
        }
        Ok(())
    }

    /// Defect probability under the tilted measure: `p t / (1 - p + p t)`.
    pub fn tilted_p<S: Scalar>(&self, t: &S) -> Result<S> {
        Self::check_t(t)?;
        let pt = t.clone() * self.p;
        pt.try_div(&(pt.clone() + (1.0 - self.p)))
    }

    pub fn tilt(&self, t: f64) -> Result<BinomialSample> {
        let p = self.tilted_p(&t)?;
        Ok(BinomialSample { n: self.n, p })
    }

    /// `q_t`: probability that a sample holds more than `c` defectives under
    /// the measure tilted by `t` (`t = 1` gives the untilted value).
    pub fn q_exceed<S: Scalar>(&self, c: u32, t: &S) -> Result<S> {
        if c >= self.n {
            return Err(Error::Usage(format!(
                "acceptance number c={c} must be below the sample size n={}",
                self.n
            )));
        }
        Self::check_t(t)?;
        // With r = p t / (1 - p): P(Z = x) = (1 - p_t)^n C(n,x) r^x.
        let r = t.clone() * (self.p / (1.0 - self.p));
        let base = (t.clone() * self.p + (1.0 - self.p)).recip()? * (1.0 - self.p);
        let mut term = t.lift(1.0);
        let mut sum = term.clone();
        for x in 0..c {
            term = term * r.clone() * ((self.n - x) as f64 / (x + 1) as f64);
            sum = sum + term.clone();
        }
        Ok(-(base.powi(self.n) * sum) + 1.0)
    }
}
