//! Forward-mode dual numbers `a + b·ε`, `ε² = 0`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub const fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }

    pub const fn constant(re: f64) -> Self {
        Self { re, eps: 0.0 }
    }

    /// The independent variable seeded with unit derivative.
    pub const fn variable(re: f64) -> Self {
        Self { re, eps: 1.0 }
    }

    pub fn sin(self) -> Self {
        Self::new(self.re.sin(), self.eps * self.re.cos())
    }

    pub fn cos(self) -> Self {
        Self::new(self.re.cos(), -self.eps * self.re.sin())
    }

    pub fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, self.eps * e)
    }

    /// Caller guarantees `re > 0`.
    pub fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }

    /// Caller guarantees `re > 0`.
    pub fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.eps / (2.0 * s))
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        Self::new(self.re.powi(n), self.eps * f64::from(n) * self.re.powi(n - 1))
    }

    /// Constant real exponent; caller guarantees `re > 0` unless `p` is integral.
    pub fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Self::constant(1.0);
        }
        Self::new(self.re.powf(p), self.eps * p * self.re.powf(p - 1.0))
    }

    /// General power `self^other`; caller guarantees `self.re > 0`.
    pub fn pow(self, other: Self) -> Self {
        let v = self.re.powf(other.re);
        Self::new(
            v,
            v * (other.eps * self.re.ln() + other.re * self.eps / self.re),
        )
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Self::new(
            self.re / o.re,
            (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}
