//! Equations of motion along a complex quantum trajectory.
//!
//! The state carries the position `x`, the velocity field and its spatial
//! derivatives `v^(0..=N)` evaluated on the trajectory, the complex action `S`
//! and the monodromy `M = ∂x/∂x₀`. The hierarchy
//!
//! ```text
//! dv^(n)/dt = −V^(n+1)/m + (iħ/2m) v^(n+2) − g̃ₙ,
//! g̃ₙ = Σ_{j=1..n} C(n,j) v^(j) v^(n−j+1)
//! ```
//!
//! is closed by `v^(N+1) = v^(N+2) = 0`.
//!
//! The monodromy is obtained from the tangent (variational) system of the
//! truncated equations, `δx` and `δv^(n)` with respect to `x₀`. At `N = 1`
//! this reduces to `dM/dt = v^(1) M`; for `N ≥ 2` the quantum-force term makes
//! `δv^(0)` differ from `v^(1) δx` and the full tangent is required for the
//! Newton Jacobian to be exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{Potential, DEFAULT_POLE_CLEARANCE};

/// `−Im(S)/ħ` beyond this cannot be exponentiated in `f64`.
pub const LOG_OVERFLOW: f64 = 700.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub mass: f64,
    pub hbar: f64,
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::config("constants.mass", "must be positive"));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::config("constants.hbar", "must be positive"));
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants { mass: 1.0, hbar: 1.0 }
    }
}

/// `ψ(x,0) = (2 Re α/π)^{1/4} exp[−α(x−x_c)² + (i/ħ) p_c (x−x_c)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket {
    pub alpha: Complex64,
    pub center: f64,
    pub momentum: f64,
}

impl GaussianPacket {
    pub fn new(alpha: f64, center: f64, momentum: f64) -> Self {
        GaussianPacket {
            alpha: Complex64::new(alpha, 0.0),
            center,
            momentum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.re > 0.0) || !crate::is_finite(self.alpha) {
            return Err(Error::config("initial.alpha", "real part must be positive"));
        }
        if !self.center.is_finite() || !self.momentum.is_finite() {
            return Err(Error::config("initial", "center and momentum must be finite"));
        }
        Ok(())
    }

    fn log_norm(&self) -> f64 {
        0.25 * (2.0 * self.alpha.re / std::f64::consts::PI).ln()
    }

    /// `S(x, 0) = −iħ ln ψ(x, 0)`, from the quadratic exponent (no branch cut).
    pub fn action(&self, x: Complex64, hbar: f64) -> Complex64 {
        let d = x - self.center;
        self.momentum * d + I * hbar * self.alpha * d * d - I * hbar * self.log_norm()
    }

    pub fn psi(&self, x: Complex64, hbar: f64) -> Complex64 {
        let d = x - self.center;
        (-self.alpha * d * d + I * self.momentum * d / hbar + self.log_norm()).exp()
    }

    /// `v(x,0) = −(iħ/m) ψ_x/ψ`.
    pub fn velocity(&self, x: Complex64, consts: &PhysicalConstants) -> Complex64 {
        (self.momentum + 2.0 * I * consts.hbar * self.alpha * (x - self.center)) / consts.mass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub x: Complex64,
    /// `v[n]` is the `n`-th spatial derivative of the velocity field.
    pub v: Vec<Complex64>,
    pub action: Complex64,
    /// `∂x/∂x₀`.
    pub monodromy: Complex64,
    /// `∂v[n]/∂x₀`.
    pub tangent: Vec<Complex64>,
}

impl TrajectoryState {
    pub fn truncation(&self) -> usize {
        self.v.len() - 1
    }

    /// Packs as `[x, v[0..=N], S, M, δv[0..=N]]`.
    pub fn to_vec(&self) -> Vec<Complex64> {
        let mut y = Vec::with_capacity(2 * self.v.len() + 3);
        y.push(self.x);
        y.extend_from_slice(&self.v);
        y.push(self.action);
        y.push(self.monodromy);
        y.extend_from_slice(&self.tangent);
        y
    }

    pub fn from_slice(t: f64, y: &[Complex64]) -> Self {
        let len = (y.len() - 3) / 2;
        TrajectoryState {
            t,
            x: y[0],
            v: y[1..=len].to_vec(),
            action: y[len + 1],
            monodromy: y[len + 2],
            tangent: y[len + 3..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        crate::is_finite(self.x)
            && crate::is_finite(self.action)
            && crate::is_finite(self.monodromy)
            && self.v.iter().chain(&self.tangent).all(|&z| crate::is_finite(z))
    }

    /// `log|ψ| = −Im(S)/ħ`.
    pub fn log_amplitude(&self, hbar: f64) -> f64 {
        -self.action.im / hbar
    }
}

/// Initial state for a trajectory launched at complex `x0`.
///
/// For a Gaussian `ln ψ` is quadratic, so `v[1]` is constant in `x0` and every
/// higher derivative vanishes. Only `v[0]` depends on `x0`, with slope `v[1]`.
pub fn initial_state(
    packet: &GaussianPacket,
    x0: Complex64,
    truncation: usize,
    consts: &PhysicalConstants,
) -> TrajectoryState {
    let mut v = vec![Complex64::new(0.0, 0.0); truncation + 1];
    v[0] = packet.velocity(x0, consts);
    let slope = 2.0 * I * consts.hbar * packet.alpha / consts.mass;
    if truncation >= 1 {
        v[1] = slope;
    }
    let mut tangent = vec![Complex64::new(0.0, 0.0); truncation + 1];
    tangent[0] = slope;
    TrajectoryState {
        t: 0.0,
        x: x0,
        v,
        action: packet.action(x0, consts.hbar),
        monodromy: Complex64::new(1.0, 0.0),
        tangent,
    }
}

/// `g̃ₙ = Σ_{j=1..n} C(n,j) v[j] v[n−j+1]`; entries past the end of `v` are zero.
pub fn gtilde(n: usize, v: &[Complex64]) -> Complex64 {
    let get = |k: usize| v.get(k).copied().unwrap_or_default();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut binom = 1.0;
    for j in 1..=n {
        binom = binom * (n - j + 1) as f64 / j as f64;
        acc += binom * get(j) * get(n - j + 1);
    }
    acc
}

/// Directional derivative of [`gtilde`]: `Σ_j C(n,j) (δv[j] v[n−j+1] + v[j] δv[n−j+1])`.
pub fn gtilde_tangent(n: usize, v: &[Complex64], dv: &[Complex64]) -> Complex64 {
    let get = |s: &[Complex64], k: usize| s.get(k).copied().unwrap_or_default();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut binom = 1.0;
    for j in 1..=n {
        binom = binom * (n - j + 1) as f64 / j as f64;
        acc += binom * (get(dv, j) * get(v, n - j + 1) + get(v, j) * get(dv, n - j + 1));
    }
    acc
}

/// Truncated equations of motion for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hierarchy {
    pub potential: Potential,
    pub consts: PhysicalConstants,
    truncation: usize,
    pub clearance: f64,
    /// Characteristic length used to weight `v[n]` in the step-error norm.
    pub length_scale: f64,
}

impl Hierarchy {
    pub fn new(potential: Potential, consts: PhysicalConstants, truncation: usize) -> Result<Self> {
        if truncation < 1 {
            return Err(Error::config(
                "truncation",
                "minimum truncation order is 1 (the action equation needs v_x)",
            ));
        }
        Ok(Hierarchy {
            potential,
            consts,
            truncation,
            clearance: DEFAULT_POLE_CLEARANCE,
            length_scale: 1.0,
        })
    }

    pub fn with_clearance(mut self, clearance: f64) -> Self {
        self.clearance = clearance;
        self
    }

    /// Uses the Gaussian width `1/√(2 Re α)` as the length scale.
    pub fn with_packet_scale(mut self, packet: &GaussianPacket) -> Self {
        self.length_scale = 1.0 / (2.0 * packet.alpha.re).sqrt();
        self
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Length of the packed state `[x, v[0..=N], S, M, δv[0..=N]]`.
    pub fn dim(&self) -> usize {
        2 * self.truncation + 5
    }

    pub fn initial_state(&self, packet: &GaussianPacket, x0: Complex64) -> TrajectoryState {
        initial_state(packet, x0, self.truncation, &self.consts)
    }

    /// Time derivative of a packed state, written into `dy`.
    pub fn rhs_packed(&self, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
        let n_max = self.truncation;
        let m = self.consts.mass;
        let hbar = self.consts.hbar;
        let x = y[0];
        let v = &y[1..n_max + 2];
        let monodromy = y[n_max + 3];
        let dv = &y[n_max + 4..];
        let pot = self.potential.jet(x, n_max + 2, self.clearance)?;
        let quantum = I * hbar / (2.0 * m);

        dy[0] = v[0];
        for n in 0..=n_max {
            let ahead = v.get(n + 2).copied().unwrap_or_default();
            dy[1 + n] = -pot.derivative(n + 1) / m + quantum * ahead - gtilde(n, v);

            let d_ahead = dv.get(n + 2).copied().unwrap_or_default();
            dy[n_max + 4 + n] =
                -pot.derivative(n + 2) / m * monodromy + quantum * d_ahead - gtilde_tangent(n, v, dv);
        }
        dy[n_max + 2] = 0.5 * m * v[0] * v[0] - pot.value() + 0.5 * I * hbar * v[1];
        dy[n_max + 3] = dv[0];
        Ok(())
    }

    pub fn rhs(&self, state: &TrajectoryState) -> Result<TrajectoryState> {
        let y = state.to_vec();
        let mut dy = vec![Complex64::new(0.0, 0.0); y.len()];
        self.rhs_packed(&y, &mut dy)?;
        Ok(TrajectoryState::from_slice(state.t, &dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn eckart_packet() -> GaussianPacket {
        GaussianPacket::new(30.0 * std::f64::consts::PI, -0.7, 300f64.sqrt())
    }

    const CONSTS: PhysicalConstants = PhysicalConstants { mass: 30.0, hbar: 1.0 };
    const ECKART: Potential = Potential::Eckart { depth: 40.0, beta: 4.32 };

    #[test]
    fn initial_velocity_at_center() {
        let s = initial_state(&eckart_packet(), c(-0.7, 0.0), 3, &CONSTS);
        assert!((s.v[0] - c(300f64.sqrt() / 30.0, 0.0)).norm() < 1e-15);
        assert_eq!(s.v[2], c(0.0, 0.0));
        assert_eq!(s.v[3], c(0.0, 0.0));
        assert_eq!(s.monodromy, c(1.0, 0.0));
    }

    #[test]
    fn initial_velocity_off_axis() {
        let s = initial_state(&eckart_packet(), c(-0.7, 0.1), 1, &CONSTS);
        let expected = (300f64.sqrt() - 6.0 * std::f64::consts::PI) / 30.0;
        assert!((s.v[0] - c(expected, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn initial_conditions_match_numerical_log_derivative() {
        let packet = eckart_packet();
        let x0 = c(-0.63, 0.04);
        let s = initial_state(&packet, x0, 2, &CONSTS);
        let h = 1e-5;
        let dlog = |x: Complex64| {
            let p = |z: Complex64| packet.psi(z, CONSTS.hbar);
            (p(x + h) - p(x - h)) / (2.0 * h) / p(x)
        };
        let v_num = -I * CONSTS.hbar * dlog(x0) / CONSTS.mass;
        assert!((v_num - s.v[0]).norm() < 1e-6 * s.v[0].norm());
        let vx_num = -I * CONSTS.hbar * (dlog(x0 + h) - dlog(x0 - h)) / (2.0 * h) / CONSTS.mass;
        assert!((vx_num - s.v[1]).norm() < 1e-4 * s.v[1].norm());
        // ψ = exp(iS/ħ)
        let psi = (I * s.action / CONSTS.hbar).exp();
        assert!((psi - packet.psi(x0, CONSTS.hbar)).norm() < 1e-12 * psi.norm());
    }

    #[test]
    fn gtilde_values() {
        assert_eq!(gtilde(0, &[c(1.0, 2.0), c(3.0, 0.0)]), c(0.0, 0.0));
        let cc = c(0.3, -1.1);
        assert!((gtilde(1, &[c(5.0, 0.0), cc]) - cc * cc).norm() < 1e-15);
        let (a, b) = (c(0.7, 0.2), c(-1.3, 0.4));
        assert!((gtilde(2, &[c(5.0, 0.0), a, b]) - 3.0 * a * b).norm() < 1e-14);
        // v[3] absent at N = 2, so g̃₂ ignores it
        assert!((gtilde(2, &[c(5.0, 0.0), a]) ).norm() < 1e-15);
    }

    #[test]
    fn n1_closure_is_newtonian() {
        let h = Hierarchy::new(ECKART, CONSTS, 1).unwrap();
        let s = TrajectoryState {
            t: 0.0,
            x: c(-0.4, 0.05),
            v: vec![c(0.5, 0.1), c(0.2, 3.0)],
            action: c(0.0, 0.0),
            monodromy: c(1.0, 0.0),
            tangent: vec![c(0.0, 0.0); 3],
        };
        let d = h.rhs(&s).unwrap();
        let pot = ECKART.jet(s.x, 2, 0.0).unwrap();
        assert!((d.v[0] + pot.derivative(1) / 30.0).norm() < 1e-13);
        assert!((d.v[1] - (-pot.derivative(2) / 30.0 - s.v[1] * s.v[1])).norm() < 1e-12);
        let ds = 0.5 * 30.0 * s.v[0] * s.v[0] - pot.value() + 0.5 * I * s.v[1];
        assert!((d.action - ds).norm() < 1e-12);
        assert_eq!(d.x, s.v[0]);
        assert_eq!(d.monodromy, s.tangent[0]);
    }

    #[test]
    fn n2_closure() {
        let h = Hierarchy::new(ECKART, CONSTS, 2).unwrap();
        let s = TrajectoryState {
            t: 0.0,
            x: c(-0.3, -0.02),
            v: vec![c(0.5, 0.1), c(0.2, 3.0), c(-4.0, 1.5)],
            action: c(0.0, 0.0),
            monodromy: c(1.0, 0.0),
            tangent: vec![c(0.0, 0.0); 3],
        };
        let d = h.rhs(&s).unwrap();
        let pot = ECKART.jet(s.x, 3, 0.0).unwrap();
        let q = I / 60.0;
        assert!((d.v[0] - (-pot.derivative(1) / 30.0 + q * s.v[2])).norm() < 1e-12);
        let expect = -pot.derivative(3) / 30.0 - 3.0 * s.v[1] * s.v[2];
        assert!((d.v[2] - expect).norm() < 1e-10);
    }

    #[test]
    fn truncation_zero_rejected() {
        let e = Hierarchy::new(Potential::Free, CONSTS, 0).unwrap_err();
        assert!(matches!(e, Error::InvalidConfig { ref field, .. } if field == "truncation"));
    }
}
