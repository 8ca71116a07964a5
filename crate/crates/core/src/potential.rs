//! Analytic potentials evaluable with all derivatives at complex arguments.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, DEFAULT_POLE_EPS};

/// Minimum distance from a singularity at which potentials are evaluated.
pub const DEFAULT_POLE_CLEARANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    /// `V(x) = D / cosh²(βx)`.
    Eckart { depth: f64, beta: f64 },
    /// `V(x) = k x² / 2`.
    Harmonic { k: f64 },
    Free,
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Eckart { depth, beta } => {
                if !(depth > 0.0 && depth.is_finite()) {
                    return Err(Error::config("potential.depth", "must be positive"));
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::config("potential.beta", "must be positive"));
                }
            }
            Potential::Harmonic { k } => {
                if !(k >= 0.0 && k.is_finite()) {
                    return Err(Error::config("potential.k", "must be non-negative"));
                }
            }
            Potential::Free => {}
        }
        Ok(())
    }

    /// `V(x), V'(x), …, V^(order)(x)`, refusing points within `clearance` of a pole.
    pub fn jet(&self, x: Complex64, order: usize, clearance: f64) -> Result<Jet> {
        match *self {
            Potential::Eckart { depth, beta } => {
                let distance = self.pole_distance(x);
                if distance <= clearance {
                    return Err(Error::PoleProximity { x, distance });
                }
                let arg = Jet::variable(x, order).scale(Complex64::new(beta, 0.0));
                let sech2 = arg.sech2_with(DEFAULT_POLE_EPS).map_err(|_| Error::PoleProximity { x, distance })?;
                Ok(sech2.scale(Complex64::new(depth, 0.0)))
            }
            Potential::Harmonic { k } => {
                let mut coeffs = vec![Complex64::new(0.0, 0.0); order + 1];
                coeffs[0] = 0.5 * k * x * x;
                if order >= 1 {
                    coeffs[1] = k * x;
                }
                if order >= 2 {
                    coeffs[2] = Complex64::new(k, 0.0);
                }
                Ok(Jet::from_derivatives(coeffs))
            }
            Potential::Free => Ok(Jet::zero(order)),
        }
    }

    /// Distance to the nearest singularity of `V` (`+∞` if there are none).
    ///
    /// Eckart poles sit at `x = i(π/2 + kπ)/β` for every integer `k`.
    pub fn pole_distance(&self, x: Complex64) -> f64 {
        match *self {
            Potential::Eckart { beta, .. } => {
                let k = ((x.im * beta - FRAC_PI_2) / PI).round();
                let pole_im = (FRAC_PI_2 + k * PI) / beta;
                x.re.hypot(x.im - pole_im)
            }
            Potential::Harmonic { .. } | Potential::Free => f64::INFINITY,
        }
    }

    /// Locations of the poles with `|Im x| <= im_max`.
    pub fn poles(&self, im_max: f64) -> Vec<Complex64> {
        match *self {
            Potential::Eckart { beta, .. } => {
                let kmax = (im_max * beta / PI).ceil() as i64 + 1;
                (-kmax..=kmax)
                    .map(|k| Complex64::new(0.0, (FRAC_PI_2 + k as f64 * PI) / beta))
                    .filter(|p| p.im.abs() <= im_max)
                    .collect()
            }
            Potential::Harmonic { .. } | Potential::Free => Vec::new(),
        }
    }

    /// Real-axis value, used by the grid propagator.
    pub fn value_real(&self, x: f64) -> f64 {
        match *self {
            Potential::Eckart { depth, beta } => {
                let c = (beta * x).cosh();
                depth / (c * c)
            }
            Potential::Harmonic { k } => 0.5 * k * x * x,
            Potential::Free => 0.0,
        }
    }
}
