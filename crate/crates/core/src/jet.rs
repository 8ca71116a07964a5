//! Truncated derivative stacks ("jets") over complex scalars.
//!
//! A [`Jet`] of order `M` holds `f(x), f'(x), …, f^(M)(x)` at one complex
//! point. Coefficients use the *derivative* convention (`coeffs[k] = f^(k)`),
//! so the Leibniz product is a binomial convolution. Transcendental functions
//! are evaluated with the usual Taylor-mode recurrences on normalized
//! coefficients and converted back.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest admissible `|a(x)|` before a reciprocal is treated as a pole.
pub const DEFAULT_POLE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<Complex64>,
}

impl Jet {
    /// Builds a jet from raw derivative values. `coeffs` must be nonempty.
    pub fn from_derivatives(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least the value");
        Jet { coeffs }
    }

    /// The identity function `f(x) = x` at `x`.
    pub fn variable(x: Complex64, order: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); order + 1];
        coeffs[0] = x;
        if order >= 1 {
            coeffs[1] = Complex64::new(1.0, 0.0);
        }
        Jet { coeffs }
    }

    pub fn constant(c: Complex64, order: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); order + 1];
        coeffs[0] = c;
        Jet { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Jet::constant(Complex64::new(0.0, 0.0), order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// `f^(k)(x)`.
    pub fn derivative(&self, k: usize) -> Complex64 {
        self.coeffs[k]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|&c| crate::is_finite(c))
    }

    fn check_order(&self, other: &Jet) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, c: Complex64) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Adds a constant to the value only.
    pub fn offset(&self, c: Complex64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// Leibniz product: `(ab)^(n) = Σ_j C(n,j) a^(j) b^(n−j)`.
    pub fn mul(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        let order = self.order();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); order + 1];
        for (n, out) in coeffs.iter_mut().enumerate() {
            let mut binom = 1.0;
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=n {
                acc += self.coeffs[j] * other.coeffs[n - j] * binom;
                binom = binom * (n - j) as f64 / (j + 1) as f64;
            }
            *out = acc;
        }
        Ok(Jet { coeffs })
    }

    pub fn exp(&self) -> Jet {
        let a = self.normalized();
        let mut b = vec![Complex64::new(0.0, 0.0); a.len()];
        b[0] = a[0].exp();
        for k in 1..a.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                acc += a[j] * b[k - j] * j as f64;
            }
            b[k] = acc / k as f64;
        }
        Jet::from_normalized(b)
    }

    /// `(cosh f, sinh f)` evaluated together.
    pub fn cosh_sinh(&self) -> (Jet, Jet) {
        let a = self.normalized();
        let len = a.len();
        let mut c = vec![Complex64::new(0.0, 0.0); len];
        let mut s = vec![Complex64::new(0.0, 0.0); len];
        c[0] = a[0].cosh();
        s[0] = a[0].sinh();
        for k in 1..len {
            let mut ck = Complex64::new(0.0, 0.0);
            let mut sk = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                let w = a[j] * j as f64;
                ck += w * s[k - j];
                sk += w * c[k - j];
            }
            c[k] = ck / k as f64;
            s[k] = sk / k as f64;
        }
        (Jet::from_normalized(c), Jet::from_normalized(s))
    }

    pub fn cosh(&self) -> Jet {
        self.cosh_sinh().0
    }

    pub fn recip(&self) -> Result<Jet> {
        self.recip_with(DEFAULT_POLE_EPS)
    }

    /// `1/f`, failing with [`Error::PoleProximity`] when `|f(x)| < eps`.
    pub fn recip_with(&self, eps: f64) -> Result<Jet> {
        let lead = self.coeffs[0];
        if lead.norm() < eps {
            return Err(Error::PoleProximity {
                x: lead,
                distance: lead.norm(),
            });
        }
        let a = self.normalized();
        let inv = 1.0 / lead;
        let mut b = vec![Complex64::new(0.0, 0.0); a.len()];
        b[0] = inv;
        for k in 1..a.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                acc += a[j] * b[k - j];
            }
            b[k] = -acc * inv;
        }
        Ok(Jet::from_normalized(b))
    }

    pub fn sech2(&self) -> Result<Jet> {
        self.sech2_with(DEFAULT_POLE_EPS)
    }

    /// `sech²(f) = 1/cosh²(f)`; the pole test is applied to `cosh f`.
    pub fn sech2_with(&self, eps: f64) -> Result<Jet> {
        let c = self.cosh();
        if c.value().norm() < eps {
            return Err(Error::PoleProximity {
                x: self.value(),
                distance: c.value().norm(),
            });
        }
        c.mul(&c)?.recip_with(0.0)
    }

    pub fn conj(&self) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Taylor coefficients `f^(k)/k!`.
    fn normalized(&self) -> Vec<Complex64> {
        let mut fact = 1.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                if k > 0 {
                    fact *= k as f64;
                }
                c / fact
            })
            .collect()
    }

    fn from_normalized(mut taylor: Vec<Complex64>) -> Jet {
        let mut fact = 1.0;
        for (k, c) in taylor.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *c *= fact;
        }
        Jet { coeffs: taylor }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn jet(vals: &[f64]) -> Jet {
        Jet::from_derivatives(vals.iter().map(|&v| c(v, 0.0)).collect())
    }

    fn assert_jet(j: &Jet, expected: &[f64]) {
        assert_eq!(j.order() + 1, expected.len());
        for (k, (&a, &e)) in j.coeffs().iter().zip(expected).enumerate() {
            assert!((a - c(e, 0.0)).norm() < 1e-12, "coeff {k}: {a} vs {e}");
        }
    }

    #[test]
    fn variable_jets() {
        assert_jet(&Jet::variable(c(2.0, 0.0), 2), &[2.0, 1.0, 0.0]);
        assert_jet(&Jet::variable(c(0.0, 0.0), 0), &[0.0]);
        let j = Jet::variable(c(1.0, 1.0), 3);
        assert_eq!(j.coeffs(), &[c(1.0, 1.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn leibniz_products() {
        assert_jet(&jet(&[1.0, 1.0, 0.0]).mul(&jet(&[1.0, 1.0, 0.0])).unwrap(), &[1.0, 2.0, 2.0]);
        // f''g + 2f'g' + fg'' = 1 - 6 + 0
        let p = jet(&[2.0, 3.0, 1.0]).mul(&jet(&[1.0, -1.0, 0.0])).unwrap();
        assert_jet(&p, &[2.0, 1.0, -5.0]);
        let k = c(3.0, -2.0);
        let b = jet(&[0.5, -1.5, 2.0, 4.0]);
        let scaled = Jet::constant(k, 3).mul(&b).unwrap();
        assert_eq!(scaled, b.scale(k));
    }

    #[test]
    fn order_mismatch_is_an_error() {
        let e = jet(&[1.0, 2.0]).mul(&jet(&[1.0])).unwrap_err();
        assert_eq!(e, Error::OrderMismatch { left: 1, right: 0 });
    }

    #[test]
    fn elementary_functions() {
        assert_jet(&jet(&[0.0, 1.0, 0.0]).cosh(), &[1.0, 0.0, 1.0]);
        assert_jet(&jet(&[1.0, 0.0, 0.0]).recip().unwrap(), &[1.0, 0.0, 0.0]);
        assert_jet(&jet(&[0.0, 1.0, 0.0, 0.0]).sech2().unwrap(), &[1.0, 0.0, -2.0, 0.0]);
        let e = Jet::variable(c(0.0, 0.0), 4).exp();
        assert_jet(&e, &[1.0; 5]);
    }

    #[test]
    fn pole_detection() {
        let x = Jet::variable(c(0.0, std::f64::consts::FRAC_PI_2), 2);
        assert!(matches!(x.sech2(), Err(Error::PoleProximity { .. })));
        assert!(matches!(Jet::zero(2).recip(), Err(Error::PoleProximity { .. })));
    }
}
