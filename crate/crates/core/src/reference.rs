//! Grid reference: split-operator propagation and the conventional quantum potential.
//!
//! The propagator alternates half potential kicks with a kinetic step applied
//! in momentum space, so each step is exactly unitary and the norm is
//! conserved to round-off. An optional fourth-order composition of three
//! Strang steps (the "triple jump") lowers the time-step error for the
//! grid-refinement checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{GaussianPacket, PhysicalConstants};
use crate::potential::Potential;

/// Amplitudes at the grid edges above this indicate wrap-around contamination.
pub const DEFAULT_EDGE_TOL: f64 = 1e-10;
/// Below this amplitude the quantum potential is not evaluated.
pub const DEFAULT_AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub x_min: f64,
    pub x_max: f64,
    /// Sampled at `x_min + j·dx`, `dx = (x_max − x_min)/n`; periodic.
    pub values: Vec<Complex64>,
}

impl GridWavefunction {
    pub fn from_fn(x_min: f64, x_max: f64, n_points: usize, f: impl Fn(f64) -> Complex64) -> Self {
        let dx = (x_max - x_min) / n_points as f64;
        GridWavefunction {
            x_min,
            x_max,
            values: (0..n_points).map(|j| f(x_min + j as f64 * dx)).collect(),
        }
    }

    pub fn gaussian(packet: &GaussianPacket, hbar: f64, x_min: f64, x_max: f64, n_points: usize) -> Self {
        Self::from_fn(x_min, x_max, n_points, |x| packet.psi(Complex64::new(x, 0.0), hbar))
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.values.len() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| self.x(j)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx()
    }

    pub fn edge_amplitude(&self) -> f64 {
        let n = self.values.len();
        let k = (n / 64).max(1);
        self.values[..k]
            .iter()
            .chain(&self.values[n - k..])
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn check_edges(&self, tol: f64) -> Result<()> {
        let amplitude = self.edge_amplitude();
        if amplitude > tol {
            return Err(Error::EdgeContamination { amplitude, tol });
        }
        Ok(())
    }

    /// Largest wavenumber representable on the grid.
    pub fn nyquist_wavenumber(&self) -> f64 {
        PI / self.dx()
    }

    pub fn check_nyquist(&self, max_momentum: f64, hbar: f64) -> Result<()> {
        let required = max_momentum / hbar;
        let limit = self.nyquist_wavenumber();
        if required >= limit {
            return Err(Error::NyquistViolation { required, limit });
        }
        Ok(())
    }

    /// Band-limited (trigonometric) interpolation at arbitrary points.
    pub fn interpolate(&self, points: &[f64]) -> Vec<Complex64> {
        let n = self.n_points();
        let mut spectrum = self.values.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut spectrum);
        let l = self.x_max - self.x_min;
        let ks: Vec<f64> = (0..n).map(|j| wavenumber(j, n, l)).collect();
        points
            .iter()
            .map(|&x| {
                let u = x - self.x_min;
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, (&c, &k)) in spectrum.iter().zip(&ks).enumerate() {
                    if n.is_multiple_of(2) && j == n / 2 {
                        // split the Nyquist mode symmetrically
                        acc += c * (k * u).cos();
                    } else {
                        acc += c * Complex64::from_polar(1.0, k * u);
                    }
                }
                acc / n as f64
            })
            .collect()
    }

    /// Σ_{x_j > x_split} |ψ|² dx; requires `|ψ(x_split)| < split_tol`.
    pub fn transmission_probability(&self, x_split: f64, split_tol: f64) -> Result<f64> {
        let dx = self.dx();
        let amplitude = if x_split <= self.x_min || x_split >= self.x_max {
            0.0
        } else {
            let j = ((x_split - self.x_min) / dx).round() as usize;
            self.values[j.min(self.n_points() - 1)].norm()
        };
        if amplitude >= split_tol {
            return Err(Error::SplitPointContaminated { amplitude });
        }
        Ok(self
            .values
            .iter()
            .enumerate()
            .filter(|(j, _)| self.x(*j) > x_split)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            * dx)
    }
}

fn wavenumber(j: usize, n: usize, length: f64) -> f64 {
    let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    2.0 * PI * signed / length
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitOrder {
    /// Strang splitting.
    Second,
    /// Triple-jump composition of Strang steps.
    #[default]
    Fourth,
}

struct Stepper {
    fft: std::sync::Arc<dyn Fft<f64>>,
    ifft: std::sync::Arc<dyn Fft<f64>>,
    potential: Vec<f64>,
    k2: Vec<f64>,
    hbar: f64,
    mass: f64,
    scratch: Vec<Complex64>,
}

impl Stepper {
    fn new(grid: &GridWavefunction, potential: &Potential, consts: &PhysicalConstants) -> Self {
        let n = grid.n_points();
        let l = grid.x_max - grid.x_min;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len())];
        Stepper {
            fft,
            ifft,
            potential: grid.xs().iter().map(|&x| potential.value_real(x)).collect(),
            k2: (0..n).map(|j| wavenumber(j, n, l).powi(2)).collect(),
            hbar: consts.hbar,
            mass: consts.mass,
            scratch,
        }
    }

    fn kick(&self, psi: &mut [Complex64], dt: f64) {
        for (z, &v) in psi.iter_mut().zip(&self.potential) {
            *z *= Complex64::from_polar(1.0, -v * dt / self.hbar);
        }
    }

    fn drift(&mut self, psi: &mut [Complex64], dt: f64) {
        let n = psi.len() as f64;
        self.fft.process_with_scratch(psi, &mut self.scratch);
        let c = self.hbar * dt / (2.0 * self.mass);
        for (z, &k2) in psi.iter_mut().zip(&self.k2) {
            *z *= Complex64::from_polar(1.0 / n, -c * k2);
        }
        self.ifft.process_with_scratch(psi, &mut self.scratch);
    }

    fn strang(&mut self, psi: &mut [Complex64], dt: f64) {
        self.kick(psi, 0.5 * dt);
        self.drift(psi, dt);
        self.kick(psi, 0.5 * dt);
    }
}

/// Propagates `psi0` to `t_f` in `n_steps` equal steps.
pub fn split_operator_propagate(
    psi0: &GridWavefunction,
    potential: &Potential,
    t_f: f64,
    n_steps: usize,
    consts: &PhysicalConstants,
    order: SplitOrder,
    edge_tol: f64,
) -> Result<GridWavefunction> {
    psi0.check_edges(edge_tol)?;
    let mut stepper = Stepper::new(psi0, potential, consts);
    let mut psi = psi0.values.clone();
    let dt = t_f / n_steps.max(1) as f64;
    let cbrt2 = 2f64.cbrt();
    let w1 = 1.0 / (2.0 - cbrt2);
    let w0 = -cbrt2 / (2.0 - cbrt2);
    for _ in 0..n_steps {
        match order {
            SplitOrder::Second => stepper.strang(&mut psi, dt),
            SplitOrder::Fourth => {
                stepper.strang(&mut psi, w1 * dt);
                stepper.strang(&mut psi, w0 * dt);
                stepper.strang(&mut psi, w1 * dt);
            }
        }
    }
    let out = GridWavefunction {
        values: psi,
        ..psi0.clone()
    };
    out.check_edges(edge_tol)?;
    Ok(out)
}

/// `|p_c| + 6ħ√(Re α)`: momenta beyond this carry negligible weight.
pub fn packet_momentum_bound(packet: &GaussianPacket, hbar: f64) -> f64 {
    packet.momentum.abs() + 6.0 * hbar * packet.alpha.re.sqrt()
}

/// Propagates `psi0` in chunks of `chunk` until the packet has split at
/// `x_split`, then returns the transmission probability and the time reached.
#[allow(clippy::too_many_arguments)]
pub fn separated_transmission(
    psi0: &GridWavefunction,
    potential: &Potential,
    consts: &PhysicalConstants,
    x_split: f64,
    split_tol: f64,
    dt: f64,
    t_max: f64,
    order: SplitOrder,
    edge_tol: f64,
) -> Result<(f64, f64)> {
    let chunk = 0.25;
    let steps = ((chunk / dt).ceil() as usize).max(1);
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let mut last = Error::SplitPointContaminated { amplitude: f64::NAN };
    while t < t_max {
        psi = split_operator_propagate(&psi, potential, chunk, steps, consts, order, edge_tol)?;
        t += chunk;
        match psi.transmission_probability(x_split, split_tol) {
            Ok(p) => return Ok((p, t)),
            Err(e @ Error::SplitPointContaminated { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Conventional Bohmian quantum potential `Q = −(ħ²/2m) A_xx / A` with `A = |ψ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPotentialField {
    pub x: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// `None` where `A` is below the floor or the stencil does not fit.
    pub q: Vec<Option<f64>>,
}

impl QuantumPotentialField {
    /// Largest `|Q|` over evaluated points with `lo <= x <= hi`.
    pub fn max_abs_in(&self, lo: f64, hi: f64) -> Option<f64> {
        self.x
            .iter()
            .zip(&self.q)
            .filter(|(&x, _)| x >= lo && x <= hi)
            .filter_map(|(_, q)| q.map(f64::abs))
            .reduce(f64::max)
    }
}

pub fn quantum_potential(psi: &GridWavefunction, consts: &PhysicalConstants, amplitude_floor: f64) -> QuantumPotentialField {
    let a: Vec<f64> = psi.values.iter().map(|z| z.norm()).collect();
    let n = a.len();
    let dx = psi.dx();
    let pref = -consts.hbar * consts.hbar / (2.0 * consts.mass);
    let q = (0..n)
        .map(|j| {
            if j < 2 || j + 2 >= n || a[j] < amplitude_floor {
                return None;
            }
            let axx = (-a[j + 2] + 16.0 * a[j + 1] - 30.0 * a[j] + 16.0 * a[j - 1] - a[j - 2]) / (12.0 * dx * dx);
            Some(pref * axx / a[j])
        })
        .collect();
    QuantumPotentialField { x: psi.xs(), amplitude: a, q }
}

/// Freely spreading Gaussian `ψ(x, t)` for the packet of [`GaussianPacket`].
pub fn free_gaussian(packet: &GaussianPacket, consts: &PhysicalConstants, x: f64, t: f64) -> Complex64 {
    let i = Complex64::i();
    let a = packet.alpha;
    let (m, hbar) = (consts.mass, consts.hbar);
    let denom = 1.0 + 2.0 * i * hbar * a * t / m;
    let v = packet.momentum / m;
    let d = x - packet.center - v * t;
    let norm = (2.0 * a.re / PI).powf(0.25);
    let phase = i * packet.momentum * (x - packet.center) / hbar - i * packet.momentum * packet.momentum * t / (2.0 * m * hbar);
    norm / denom.sqrt() * (-a * d * d / denom + phase).exp()
}

/// Harmonic-oscillator Gaussian with `α = mω/2ħ` (coherent state): the packet
/// keeps its shape and its center follows the classical orbit.
pub fn coherent_state(packet: &GaussianPacket, consts: &PhysicalConstants, omega: f64, x: f64, t: f64) -> Complex64 {
    let i = Complex64::i();
    let (m, hbar) = (consts.mass, consts.hbar);
    let (s, c) = (omega * t).sin_cos();
    let xt = packet.center * c + packet.momentum / (m * omega) * s;
    let pt = packet.momentum * c - m * omega * packet.center * s;
    let a = m * omega / (2.0 * hbar);
    let norm = (2.0 * a / PI).powf(0.25);
    // classical action of the orbit plus the zero-point phase
    let gamma = 0.5 * (pt * xt - packet.momentum * packet.center) - 0.5 * hbar * omega * t;
    let d = x - xt;
    norm * (-a * d * d + i * pt * d / hbar + i * gamma / hbar).exp()
}
