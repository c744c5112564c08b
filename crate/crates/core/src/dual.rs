use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A value paired with its first derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dual {
    pub val: f64,
    pub der: f64,
}

impl Dual {
    pub const fn new(val: f64, der: f64) -> Self {
        Dual { val, der }
    }

    /// The independent variable at `x`.
    pub const fn variable(x: f64) -> Self {
        Dual { val: x, der: 1.0 }
    }

    pub const fn constant(x: f64) -> Self {
        Dual { val: x, der: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.val + rhs.val, self.der + rhs.der)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.val - rhs.val, self.der - rhs.der)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.val * rhs.val, self.val * rhs.der + self.der * rhs.val)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let v = self.val / rhs.val;
        Dual::new(v, (self.der - v * rhs.der) / rhs.val)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.val, -self.der)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, rhs: f64) -> Dual {
        Dual::new(self.val + rhs, self.der)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, rhs: f64) -> Dual {
        Dual::new(self.val - rhs, self.der)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        Dual::new(self.val * rhs, self.der * rhs)
    }
}

impl Scalar for Dual {
    fn lift(&self, c: f64) -> Self {
        Dual::constant(c)
    }

    fn lead(&self) -> f64 {
        self.val
    }

    fn magnitude(&self) -> f64 {
        self.val.abs().max(self.der.abs())
    }

    fn recip(&self) -> Result<Self> {
        if self.val.abs() < f64::MIN_POSITIVE {
            return Err(Error::NonInvertible { magnitude: self.val.abs() });
        }
        let r = 1.0 / self.val;
        Ok(Dual::new(r, -self.der * r * r))
    }

    fn exp(&self) -> Self {
        let e = self.val.exp();
        Dual::new(e, e * self.der)
    }

    fn sqrt(&self) -> Result<Self> {
        if self.val <= 0.0 {
            return Err(Error::Branch { value: self.val });
        }
        let s = self.val.sqrt();
        Ok(Dual::new(s, self.der / (2.0 * s)))
    }

    fn powi(&self, n: u32) -> Self {
        if n == 0 {
            return Dual::constant(1.0);
        }
        let lower = self.val.powi(n as i32 - 1);
        Dual::new(lower * self.val, n as f64 * lower * self.der)
    }
}

/// Unary functions with exact dual-number derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryFn {
    Square,
    Exp,
    Sqrt,
    Recip,
    Powi(u32),
}

impl UnaryFn {
    pub fn apply<S: Scalar>(self, x: &S) -> Result<S> {
        match self {
            UnaryFn::Square => Ok(x.clone() * x.clone()),
            UnaryFn::Exp => Ok(x.exp()),
            UnaryFn::Sqrt => x.sqrt(),
            UnaryFn::Recip => x.recip(),
            UnaryFn::Powi(n) => Ok(x.powi(n)),
        }
    }
}

/// Evaluates `f` and its derivative at `x` by dual arithmetic.
pub fn eval_unary(f: UnaryFn, x: f64) -> Result<Dual> {
    match f {
        UnaryFn::Sqrt if x <= 0.0 => {
            return Err(Error::Domain(format!("sqrt needs x > 0, got {x}")))
        }
        UnaryFn::Recip if x == 0.0 => return Err(Error::Domain("recip at 0".into())),
        _ => {}
    }
    f.apply(&Dual::variable(x))
}
