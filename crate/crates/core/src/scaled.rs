//! Complex numbers with a separate natural-log exponent.
//!
//! The series terms of the analytic solution multiply powers of energies of
//! order ω_c ~ 1e8 up to k ~ 200, which overflows `f64` long before the
//! factorial in the denominator tames them. A `Scaled` value stores
//! `mant * e^exp` and keeps `|mant|` inside a comfortable window.

use num_complex::Complex64 as C64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

const LN_HI: f64 = 300.0;
const LN_LO: f64 = -300.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    mant: C64,
    exp: f64,
}

impl Default for Scaled {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { mant: C64::new(0.0, 0.0), exp: 0.0 };
    pub const ONE: Scaled = Scaled { mant: C64::new(1.0, 0.0), exp: 0.0 };

    pub fn new(mant: C64, exp: f64) -> Self {
        Scaled { mant, exp }.normalized()
    }

    pub fn from_c64(z: C64) -> Self {
        Self::new(z, 0.0)
    }

    pub fn from_real(x: f64) -> Self {
        Self::new(C64::new(x, 0.0), 0.0)
    }

    /// `phase * e^ln_mag`; `phase` need not be unit modulus.
    pub fn from_ln(ln_mag: f64, phase: C64) -> Self {
        if ln_mag == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        Self::new(phase, ln_mag)
    }

    fn normalized(self) -> Self {
        let m = self.mant.norm();
        if m == 0.0 {
            return Self::ZERO;
        }
        if !m.is_finite() || !self.exp.is_finite() {
            return Scaled { mant: self.mant, exp: self.exp };
        }
        let l = m.ln();
        if l > LN_HI || l < LN_LO {
            Scaled { mant: self.mant / m, exp: self.exp + l }
        } else {
            self
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.re == 0.0 && self.mant.im == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.mant.re.is_finite() && self.mant.im.is_finite() && self.exp.is_finite()
    }

    /// Natural log of the modulus; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mant.norm().ln() + self.exp
        }
    }

    /// Converts back to an ordinary complex number (may overflow to infinity
    /// or underflow to zero).
    pub fn to_c64(&self) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        if self.exp == 0.0 {
            return self.mant;
        }
        let m = self.mant.norm();
        let l = m.ln() + self.exp;
        if l > 709.78 {
            let inf = |x: f64| if x == 0.0 { 0.0 } else { f64::INFINITY.copysign(x) };
            return C64::new(inf(self.mant.re), inf(self.mant.im));
        }
        self.mant * self.exp.exp()
    }

    pub fn re(&self) -> f64 {
        self.to_c64().re
    }

    pub fn conj(&self) -> Self {
        Scaled { mant: self.mant.conj(), exp: self.exp }
    }

    pub fn norm_sqr(&self) -> Self {
        Scaled { mant: C64::new(self.mant.norm_sqr(), 0.0), exp: 2.0 * self.exp }.normalized()
    }

    pub fn scale(&self, s: f64) -> Self {
        Scaled { mant: self.mant * s, exp: self.exp }.normalized()
    }

    pub fn mul_c(&self, z: C64) -> Self {
        Scaled { mant: self.mant * z, exp: self.exp }.normalized()
    }

    /// Real part, kept scaled.
    pub fn real_part(&self) -> Self {
        Scaled { mant: C64::new(self.mant.re, 0.0), exp: self.exp }.normalized()
    }

    /// Integer power through the log-modulus and argument, so that large k
    /// never passes through an intermediate overflow.
    pub fn powi(&self, k: u32) -> Self {
        if k == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return Self::ZERO;
        }
        let m = self.mant.norm();
        let arg = self.mant.arg();
        let kf = k as f64;
        let phase = if self.mant.im == 0.0 {
            let s = if self.mant.re < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
            C64::new(s, 0.0)
        } else {
            C64::from_polar(1.0, kf * arg)
        };
        Self::from_ln(kf * (m.ln() + self.exp), phase)
    }
}

impl From<f64> for Scaled {
    fn from(x: f64) -> Self {
        Scaled::from_real(x)
    }
}

impl From<C64> for Scaled {
    fn from(z: C64) -> Self {
        Scaled::from_c64(z)
    }
}

impl Mul for Scaled {
    type Output = Scaled;
    fn mul(self, o: Scaled) -> Scaled {
        if self.is_zero() || o.is_zero() {
            return Scaled::ZERO;
        }
        Scaled { mant: self.mant * o.mant, exp: self.exp + o.exp }.normalized()
    }
}

impl Add for Scaled {
    type Output = Scaled;
    fn add(self, o: Scaled) -> Scaled {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let e = self.exp.max(o.exp);
        let a = scale_down(self.mant, self.exp - e);
        let b = scale_down(o.mant, o.exp - e);
        Scaled { mant: a + b, exp: e }.normalized()
    }
}

fn scale_down(m: C64, d: f64) -> C64 {
    if d == 0.0 {
        m
    } else if d < -800.0 {
        C64::new(0.0, 0.0)
    } else {
        m * d.exp()
    }
}

impl AddAssign for Scaled {
    fn add_assign(&mut self, o: Scaled) {
        *self = *self + o;
    }
}

impl Neg for Scaled {
    type Output = Scaled;
    fn neg(self) -> Scaled {
        Scaled { mant: -self.mant, exp: self.exp }
    }
}

impl Sub for Scaled {
    type Output = Scaled;
    fn sub(self, o: Scaled) -> Scaled {
        self + (-o)
    }
}

/// `cosh(y)` without overflow.
pub fn cosh_scaled(y: f64) -> Scaled {
    let a = y.abs();
    if a < 50.0 {
        Scaled::from_real(a.cosh())
    } else {
        Scaled::from_ln(a - std::f64::consts::LN_2, C64::new(1.0, 0.0))
    }
}

/// `sinh(a*s)/s`, with the `s -> 0` limit `a`.
pub fn sinh_over(a: f64, s: f64) -> Scaled {
    let y = a * s;
    let ay = y.abs();
    if ay < 1e-4 {
        let y2 = y * y;
        return Scaled::from_real(a * (1.0 + y2 / 6.0 + y2 * y2 / 120.0));
    }
    if ay < 50.0 {
        Scaled::from_real(y.sinh() / s)
    } else {
        let sign = y.signum() * s.signum();
        Scaled::from_ln(ay - std::f64::consts::LN_2 - s.abs().ln(), C64::new(sign, 0.0))
    }
}

/// `sin(a*s)/s`, with the `s -> 0` limit `a`.
pub fn sin_over(a: f64, s: f64) -> f64 {
    let y = a * s;
    if y.abs() < 1e-4 {
        let y2 = y * y;
        a * (1.0 - y2 / 6.0 + y2 * y2 / 120.0)
    } else {
        y.sin() / s
    }
}

/// `ln(n!)` by direct summation for small n, Stirling series beyond.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 64 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        let x = n as f64 + 1.0;
        // ln Γ(x), Stirling with three correction terms
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn round_trip_ordinary_values() {
        let z = C64::new(-3.5, 2.25);
        assert_eq!(Scaled::from_c64(z).to_c64(), z);
        assert!(Scaled::ZERO.is_zero());
    }

    #[test]
    fn products_beyond_f64_range_come_back() {
        let big = Scaled::from_real(1e200);
        let tiny = Scaled::from_real(1e-250);
        let p = big * big * tiny * tiny;
        assert_relative_eq!(p.to_c64().re, 1e-100, max_relative = 1e-12);
        assert_relative_eq!((big * big).ln_abs(), 400.0 * 10f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn powi_matches_repeated_multiplication() {
        let r = Scaled::from_real(-2.0e8);
        let mut acc = Scaled::ONE;
        for _ in 0..57 {
            acc = acc * r;
        }
        let p = r.powi(57);
        assert_relative_eq!(p.ln_abs(), acc.ln_abs(), max_relative = 1e-13);
        assert!(p.to_c64().re.is_infinite() && p.to_c64().re < 0.0);
        let c = Scaled::from_c64(C64::new(0.3, -0.4));
        let d = c.powi(5).to_c64() - C64::new(0.3, -0.4).powi(5);
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn addition_with_disparate_exponents() {
        let a = Scaled::from_ln(1000.0, C64::new(1.0, 0.0));
        let b = Scaled::from_ln(1000.0, C64::new(-1.0, 0.0));
        assert!((a + b).is_zero());
        let c = Scaled::from_real(1.0);
        assert_eq!((a + c).ln_abs(), 1000.0);
        assert_relative_eq!((c + Scaled::from_real(2.0)).re(), 3.0);
    }

    #[test]
    fn hyperbolic_helpers() {
        assert_relative_eq!(cosh_scaled(3.0).re(), 3f64.cosh(), max_relative = 1e-15);
        assert_relative_eq!(cosh_scaled(900.0).ln_abs(), 900.0 - 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(sinh_over(2.0, 0.0).re(), 2.0);
        assert_relative_eq!(sinh_over(-1.5, 2.0).re(), (-3f64).sinh() / 2.0, max_relative = 1e-15);
        assert_relative_eq!(sin_over(2.0, 1e-9), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn ln_factorial_both_branches() {
        assert_relative_eq!(ln_factorial(10), 3628800f64.ln(), max_relative = 1e-15);
        let direct: f64 = (2..=100).map(|i| (i as f64).ln()).sum();
        assert_relative_eq!(ln_factorial(100), direct, max_relative = 1e-14);
        assert_eq!(ln_factorial(0), 0.0);
    }
}
