//! Adaptive Dormand–Prince 5(4) integration of complex-valued ODE systems.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, TrajectoryState, LOG_OVERFLOW};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// `None` means `t_f / 100`.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            h_init: 1e-4,
            h_min: 1e-12,
            h_max: None,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn h_max_for(&self, span: f64) -> f64 {
        self.h_max.unwrap_or(span / 100.0)
    }

    pub fn validate(&self, span: f64) -> Result<()> {
        let field = |f: &str| format!("integrator.{f}");
        if !(self.rel_tol > 0.0) {
            return Err(Error::config(field("rel_tol"), "must be positive"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::config(field("abs_tol"), "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::config(field("max_steps"), "must be positive"));
        }
        let h_max = self.h_max_for(span);
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= h_max) {
            return Err(Error::config(
                field("h_init"),
                format!(
                    "need 0 < h_min ({}) <= h_init ({}) <= h_max ({h_max})",
                    self.h_min, self.h_init
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub min_pole_distance: f64,
}

/// A first-order system `dy/dt = f(t, y)` over complex components.
pub trait OdeSystem {
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()>;

    /// Per-component absolute scale for the error norm.
    fn weights(&self, dim: usize) -> Vec<f64> {
        vec![1.0; dim]
    }

    /// Called on every accepted state.
    fn check(&self, _y: &[Complex64]) -> Result<()> {
        Ok(())
    }

    fn pole_distance(&self, _y: &[Complex64]) -> f64 {
        f64::INFINITY
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded error coefficients
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

/// Integrates from `t0` to exactly `t_f`, returning the final state.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    t0: f64,
    y0: &[Complex64],
    t_f: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<Complex64>, StepDiagnostics)> {
    let dim = y0.len();
    let span = t_f - t0;
    let forward = span >= 0.0;
    let dir = if forward { 1.0 } else { -1.0 };
    let h_max = cfg.h_max_for(span.abs());
    let weights = system.weights(dim);

    let zero = Complex64::new(0.0, 0.0);
    let mut k: [Vec<Complex64>; 7] = std::array::from_fn(|_| vec![zero; dim]);
    let mut stage = vec![zero; dim];
    let mut y_new = vec![zero; dim];
    let mut y = y0.to_vec();
    let mut t = t0;

    let mut diag = StepDiagnostics {
        min_pole_distance: system.pole_distance(&y),
        ..Default::default()
    };
    if span == 0.0 {
        return Ok((y, diag));
    }

    system.rhs(t, &y, &mut k[0])?;
    diag.rhs_evals += 1;

    let mut h = cfg.h_init.min(h_max).min(span.abs());
    let mut err_prev: f64 = 1.0;
    let mut last_rejected = false;

    loop {
        if diag.steps >= cfg.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: cfg.max_steps,
            });
        }
        let remaining = (t_f - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;

        let attempt = (|| -> Result<f64> {
            let rows: [(&[f64], f64); 6] = [
                (&[A21], C2),
                (&[A31, A32], C3),
                (&[A41, A42, A43], C4),
                (&[A51, A52, A53, A54], C5),
                (&[A61, A62, A63, A64, A65], 1.0),
                (&[B1, 0.0, B3, B4, B5, B6], 1.0),
            ];
            for (s, (coeffs, c)) in rows.iter().enumerate() {
                let target = if s == 5 { &mut y_new } else { &mut stage };
                for i in 0..dim {
                    let mut acc = zero;
                    for (j, &a) in coeffs.iter().enumerate() {
                        acc += a * k[j][i];
                    }
                    target[i] = y[i] + hs * acc;
                }
                let (_, tail) = k.split_at_mut(s + 1);
                let src = if s == 5 { &y_new } else { &stage };
                system.rhs(t + c * hs, src, &mut tail[0])?;
            }
            let mut sum = 0.0;
            for i in 0..dim {
                let e = hs
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sc = cfg.abs_tol * weights[i] + cfg.rel_tol * y[i].norm().max(y_new[i].norm());
                let r = e.norm() / sc;
                sum += r * r;
            }
            let err = (sum / dim as f64).sqrt();
            if !err.is_finite() || !y_new.iter().all(|&z| crate::is_finite(z)) {
                return Err(Error::NonFinite { context: "integrator step" });
            }
            Ok(err)
        })();
        diag.rhs_evals += 6;

        let (err, failure) = match attempt {
            Ok(e) => (e, None),
            Err(e @ (Error::PoleProximity { .. } | Error::NonFinite { .. })) => (f64::INFINITY, Some(e)),
            Err(e) => return Err(e),
        };

        if err <= 1.0 {
            system.check(&y_new)?;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            t = if last { t_f } else { t + hs };
            diag.steps += 1;
            diag.min_pole_distance = diag.min_pole_distance.min(system.pole_distance(&y));
            if last {
                return Ok((y, diag));
            }
            let err = err.max(1e-10);
            let mut fac = SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(h_max);
            err_prev = err;
            last_rejected = false;
        } else {
            diag.rejected += 1;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(FAC_MIN)
            } else {
                0.25
            };
            h = if last { remaining } else { h } * fac;
            last_rejected = true;
            if h < cfg.h_min {
                return Err(failure.unwrap_or(Error::StepSizeUnderflow { t, h }));
            }
        }
    }
}

impl OdeSystem for Hierarchy {
    fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
        self.rhs_packed(y, dy)
    }

    fn weights(&self, dim: usize) -> Vec<f64> {
        let n_max = self.truncation();
        let inv_len = 1.0 / self.length_scale;
        let mut w = vec![1.0; dim];
        for n in 0..=n_max {
            w[1 + n] = inv_len.powi(n as i32);
        }
        w[n_max + 2] = self.consts.hbar;
        for n in 0..=n_max {
            w[n_max + 4 + n] = inv_len.powi(n as i32 + 1);
        }
        w
    }

    fn check(&self, y: &[Complex64]) -> Result<()> {
        let log_amplitude = -y[self.truncation() + 2].im / self.consts.hbar;
        if log_amplitude > LOG_OVERFLOW {
            return Err(Error::Overflow { log_amplitude });
        }
        Ok(())
    }

    fn pole_distance(&self, y: &[Complex64]) -> f64 {
        self.potential.pole_distance(y[0])
    }
}

/// Propagates one trajectory to `t_f`.
pub fn propagate(
    state0: &TrajectoryState,
    hierarchy: &Hierarchy,
    t_f: f64,
    cfg: &IntegratorConfig,
) -> Result<(TrajectoryState, StepDiagnostics)> {
    debug_assert_eq!(state0.truncation(), hierarchy.truncation());
    let (y, diag) = integrate(hierarchy, state0.t, &state0.to_vec(), t_f, cfg)?;
    Ok((TrajectoryState::from_slice(t_f, &y), diag))
}
