//! Truncated univariate power series.
//!
//! A [`Series`] of order `N` holds the coefficients of `u^0 .. u^N`; every
//! operation is carried out modulo `u^(N+1)`. Coefficients may be any
//! [`Scalar`], so a series with [`Dual`](crate::Dual) coefficients carries a
//! derivative in a second variable, and a series of series is a bivariate
//! expansion.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Low-order coefficients below this are treated as exact cancellation
/// residue by [`Series::shift_div_u`].
pub const SHIFT_TOLERANCE: f64 = 1e-9;

/// Constant terms at or below this are not invertible.
pub const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Series<C> {
    coeffs: Vec<C>,
}

impl<C: Scalar> Series<C> {
    /// Builds a series of order `coeffs.len() - 1`.
    pub fn from_coeffs(coeffs: Vec<C>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Usage("a series needs at least one coefficient".into()));
        }
        Ok(Series { coeffs })
    }

    pub fn constant(c: C, order: usize) -> Self {
        let zero = c.lift(0.0);
        let mut coeffs = vec![zero; order + 1];
        coeffs[0] = c;
        Series { coeffs }
    }

    /// The expansion variable `u`, with coefficients shaped like `template`.
    pub fn variable_like(template: &C, order: usize) -> Self {
        let mut s = Series::constant(template.lift(0.0), order);
        if order >= 1 {
            s.coeffs[1] = template.lift(1.0);
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C> {
        self.coeffs
    }

    pub fn coeff(&self, m: usize) -> Option<&C> {
        self.coeffs.get(m)
    }

    fn zero(&self) -> C {
        self.coeffs[0].lift(0.0)
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch { left: self.order(), right: other.order() });
        }
        Ok(())
    }

    /// Multiplies every coefficient by the ring element `c`.
    pub fn scale_by(&self, c: &C) -> Self {
        Series { coeffs: self.coeffs.iter().map(|a| a.clone() * c.clone()).collect() }
    }

    /// Cauchy product truncated at the common order.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let n = self.coeffs.len();
        let mut out = Vec::with_capacity(n);
        for m in 0..n {
            let mut acc = self.coeffs[0].clone() * other.coeffs[m].clone();
            for j in 1..=m {
                acc = acc + self.coeffs[j].clone() * other.coeffs[m - j].clone();
            }
            out.push(acc);
        }
        Ok(Series { coeffs: out })
    }

    fn check_unit(&self) -> Result<()> {
        let c0 = self.coeffs[0].lead().abs();
        if c0 <= UNIT_TOLERANCE || !c0.is_finite() {
            return Err(Error::NonInvertible { magnitude: c0 });
        }
        Ok(())
    }

    /// `self / divisor`; the divisor needs an invertible constant term.
    pub fn try_div_series(&self, divisor: &Self) -> Result<Self> {
        self.check_order(divisor)?;
        divisor.check_unit()?;
        let inv0 = divisor.coeffs[0].recip()?;
        let b = &divisor.coeffs;
        let mut q: Vec<C> = Vec::with_capacity(self.coeffs.len());
        for m in 0..self.coeffs.len() {
            let mut acc = self.coeffs[m].clone();
            for j in 1..=m {
                acc = acc - b[j].clone() * q[m - j].clone();
            }
            q.push(acc * inv0.clone());
        }
        Ok(Series { coeffs: q })
    }

    /// Exponential via `exp(c0) * exp(a - c0)` and the recurrence from
    /// `exp' = a' exp`.
    pub fn exp_series(&self) -> Self {
        let a = &self.coeffs;
        let scale = a[0].exp();
        let mut b: Vec<C> = Vec::with_capacity(a.len());
        b.push(a[0].lift(1.0));
        for m in 1..a.len() {
            let mut acc = a[1].clone() * b[m - 1].clone();
            for j in 2..=m {
                acc = acc + a[j].clone() * b[m - j].clone() * j as f64;
            }
            b.push(acc * (1.0 / m as f64));
        }
        Series { coeffs: b }.scale_by(&scale)
    }

    /// Principal square root; the constant term must be positive.
    pub fn sqrt_series(&self) -> Result<Self> {
        let a = &self.coeffs;
        if a[0].lead() <= 0.0 {
            return Err(Error::Branch { value: a[0].lead() });
        }
        let s0 = a[0].sqrt()?;
        let inv = (s0.clone() * 2.0).recip()?;
        let mut s: Vec<C> = Vec::with_capacity(a.len());
        s.push(s0);
        for m in 1..a.len() {
            let mut acc = a[m].clone();
            for j in 1..m {
                acc = acc - s[j].clone() * s[m - j].clone();
            }
            s.push(acc * inv.clone());
        }
        Ok(Series { coeffs: s })
    }

    /// Divides by `u^k`, dropping the first `k` coefficients. Each dropped
    /// coefficient must be below [`SHIFT_TOLERANCE`]: they are supposed to
    /// cancel exactly, so anything larger is an algebra error.
    pub fn shift_div_u(&self, k: usize) -> Result<Self> {
        if k > self.order() {
            return Err(Error::Usage(format!(
                "cannot shift a series of order {} by {k}",
                self.order()
            )));
        }
        for (index, c) in self.coeffs[..k].iter().enumerate() {
            if c.magnitude() >= SHIFT_TOLERANCE {
                return Err(Error::ShiftResidual { shift: k, index, value: c.magnitude() });
            }
        }
        Ok(Series { coeffs: self.coeffs[k..].to_vec() })
    }

    /// Multiplies by `u^k` keeping the order.
    pub fn shift_mul_u(&self, k: usize) -> Self {
        let zero = self.zero();
        let n = self.coeffs.len();
        let mut coeffs = vec![zero; n];
        if k < n {
            coeffs[k..].clone_from_slice(&self.coeffs[..n - k]);
        }
        Series { coeffs }
    }

    /// Coefficientwise `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_order(other)?;
        Ok(Series {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone() * alpha + b.clone() * beta)
                .collect(),
        })
    }

    pub fn map<D, F: FnMut(&C) -> D>(&self, f: F) -> Vec<D> {
        self.coeffs.iter().map(f).collect()
    }
}

impl Series<f64> {
    /// The series `u` of the given order.
    pub fn var(order: usize) -> Self {
        Series::variable_like(&0.0, order)
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

fn mismatch(op: &str, a: usize, b: usize) -> ! {
    panic!("series {op}: order mismatch ({a} vs {b}); use the try_ methods to handle this")
}

impl<C: Scalar> Add for Series<C> {
    type Output = Series<C>;
    fn add(self, rhs: Series<C>) -> Series<C> {
        if self.order() != rhs.order() {
            mismatch("add", self.order(), rhs.order());
        }
        Series { coeffs: self.coeffs.into_iter().zip(rhs.coeffs).map(|(a, b)| a + b).collect() }
    }
}

impl<C: Scalar> Sub for Series<C> {
    type Output = Series<C>;
    fn sub(self, rhs: Series<C>) -> Series<C> {
        if self.order() != rhs.order() {
            mismatch("sub", self.order(), rhs.order());
        }
        Series { coeffs: self.coeffs.into_iter().zip(rhs.coeffs).map(|(a, b)| a - b).collect() }
    }
}

impl<C: Scalar> Mul for Series<C> {
    type Output = Series<C>;
    fn mul(self, rhs: Series<C>) -> Series<C> {
        match self.try_mul(&rhs) {
            Ok(s) => s,
            Err(_) => mismatch("mul", self.order(), rhs.order()),
        }
    }
}

impl<C: Scalar> Neg for Series<C> {
    type Output = Series<C>;
    fn neg(self) -> Series<C> {
        Series { coeffs: self.coeffs.into_iter().map(|a| -a).collect() }
    }
}

impl<C: Scalar> Add<f64> for Series<C> {
    type Output = Series<C>;
    fn add(mut self, rhs: f64) -> Series<C> {
        self.coeffs[0] = self.coeffs[0].clone() + rhs;
        self
    }
}

impl<C: Scalar> Sub<f64> for Series<C> {
    type Output = Series<C>;
    fn sub(mut self, rhs: f64) -> Series<C> {
        self.coeffs[0] = self.coeffs[0].clone() - rhs;
        self
    }
}

impl<C: Scalar> Mul<f64> for Series<C> {
    type Output = Series<C>;
    fn mul(self, rhs: f64) -> Series<C> {
        Series { coeffs: self.coeffs.into_iter().map(|a| a * rhs).collect() }
    }
}

impl<C: Scalar> Scalar for Series<C> {
    const FORMAL: bool = true;

    fn lift(&self, c: f64) -> Self {
        Series::constant(self.coeffs[0].lift(c), self.order())
    }

    fn lead(&self) -> f64 {
        self.coeffs[0].lead()
    }

    fn magnitude(&self) -> f64 {
        self.coeffs.iter().map(Scalar::magnitude).fold(0.0, f64::max)
    }

    fn recip(&self) -> Result<Self> {
        self.lift(1.0).try_div_series(self)
    }

    fn try_div(&self, rhs: &Self) -> Result<Self> {
        self.try_div_series(rhs)
    }

    fn exp(&self) -> Self {
        self.exp_series()
    }

    fn sqrt(&self) -> Result<Self> {
        self.sqrt_series()
    }

    fn norm1(&self) -> f64 {
        self.coeffs.iter().map(Scalar::norm1).sum()
    }

    fn nilpotent_order(&self) -> Option<usize> {
        (self.coeffs[0].magnitude() == 0.0).then(|| self.order())
    }
}
