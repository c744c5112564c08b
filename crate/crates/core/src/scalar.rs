//! The numeric interface shared by every generating-function formula.
//!
//! Formulas are written once against [`Scalar`] and evaluated at real
//! points (`f64`), with a derivative attached ([`Dual`](crate::Dual)), in
//! double-double precision, or as truncated power series
//! ([`Series`](crate::Series)) whose coefficients are themselves scalars.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use twofloat::TwoFloat;

use crate::error::{Error, Result};

pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Formal power series do not carry a point value, so pointwise domain
    /// checks are skipped for them.
    const FORMAL: bool = false;

    /// The constant `c` with the same shape (order, nesting) as `self`.
    fn lift(&self, c: f64) -> Self;

    /// Real part of the constant term.
    fn lead(&self) -> f64;

    /// Largest absolute component.
    fn magnitude(&self) -> f64;

    fn recip(&self) -> Result<Self>;

    fn exp(&self) -> Self;

    fn sqrt(&self) -> Result<Self>;

    fn try_div(&self, rhs: &Self) -> Result<Self> {
        Ok(self.clone() * rhs.recip()?)
    }

    fn powi(&self, n: u32) -> Self {
        let mut acc = self.lift(1.0);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    /// Sum of absolute components; bounds the magnitude of products.
    fn norm1(&self) -> f64 {
        self.magnitude()
    }

    /// For a truncated series of order `N` whose constant term is exactly
    /// zero, returns `N`: every power above `N` vanishes.
    fn nilpotent_order(&self) -> Option<usize> {
        None
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }

    fn lead(&self) -> f64 {
        *self
    }

    fn magnitude(&self) -> f64 {
        self.abs()
    }

    fn recip(&self) -> Result<Self> {
        if self.abs() < f64::MIN_POSITIVE || !self.is_finite() {
            return Err(Error::NonInvertible { magnitude: self.abs() });
        }
        Ok(1.0 / self)
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn sqrt(&self) -> Result<Self> {
        if *self < 0.0 {
            return Err(Error::Branch { value: *self });
        }
        Ok(f64::sqrt(*self))
    }

    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }
}

impl Scalar for TwoFloat {
    fn lift(&self, c: f64) -> Self {
        TwoFloat::from(c)
    }

    fn lead(&self) -> f64 {
        self.hi() + self.lo()
    }

    fn magnitude(&self) -> f64 {
        self.lead().abs()
    }

    fn recip(&self) -> Result<Self> {
        if self.lead().abs() < f64::MIN_POSITIVE {
            return Err(Error::NonInvertible { magnitude: self.lead().abs() });
        }
        Ok(TwoFloat::from(1.0) / *self)
    }

    fn exp(&self) -> Self {
        TwoFloat::exp(*self)
    }

    fn sqrt(&self) -> Result<Self> {
        if self.lead() < 0.0 {
            return Err(Error::Branch { value: self.lead() });
        }
        if self.lead() == 0.0 {
            return Ok(TwoFloat::from(0.0));
        }
        Ok(TwoFloat::sqrt(*self))
    }
}
