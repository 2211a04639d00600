//! Forward-mode automatic differentiation with first-order dual numbers.
//!
//! A [`Dual`] carries a value together with one directional derivative.
//! Differentiating an n-input function costs n evaluations (one seed per
//! input), which is cheap at the dimensions used here and gives derivatives
//! that are exact up to floating rounding — the independent cross-check for
//! the hand-written Jacobians in [`crate::model`].

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction so model right-hand sides can be written once and
/// evaluated with either plain `f64` or [`Dual`] arguments.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    /// Embed a constant (derivative zero).
    fn lift(x: f64) -> Self;
}

impl Scalar for f64 {
    #[inline(always)]
    fn lift(x: f64) -> Self {
        x
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    /// Value part.
    pub re: f64,
    /// Derivative part.
    pub eps: f64,
}

impl Dual {
    /// A constant: value `x`, derivative 0.
    #[inline(always)]
    pub fn constant(x: f64) -> Self {
        Dual { re: x, eps: 0.0 }
    }

    /// The seeded variable: value `x`, derivative 1.
    #[inline(always)]
    pub fn variable(x: f64) -> Self {
        Dual { re: x, eps: 1.0 }
    }

    #[inline(always)]
    pub fn sin(self) -> Self {
        Dual {
            re: self.re.sin(),
            eps: self.eps * self.re.cos(),
        }
    }

    #[inline(always)]
    pub fn cos(self) -> Self {
        Dual {
            re: self.re.cos(),
            eps: -self.eps * self.re.sin(),
        }
    }
}

impl Scalar for Dual {
    #[inline(always)]
    fn lift(x: f64) -> Self {
        Dual::constant(x)
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline(always)]
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re + rhs.re,
            eps: self.eps + rhs.eps,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline(always)]
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re - rhs.re,
            eps: self.eps - rhs.eps,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline(always)]
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re * rhs.re,
            eps: self.re * rhs.eps + self.eps * rhs.re,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline(always)]
    fn div(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re / rhs.re,
            eps: (self.eps * rhs.re - self.re * rhs.eps) / (rhs.re * rhs.re),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline(always)]
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            eps: -self.eps,
        }
    }
}
