//! Bohmian mechanics with complex action.
//!
//! The wavefunction is written as `ψ = exp(iS/ħ)` with a complex action `S`.
//! Along a complex trajectory `dx/dt = v` the velocity field and its spatial
//! derivatives obey an infinite hierarchy of local ODEs; truncating it at order
//! `N` gives a closed system that is integrated here. Real final positions are
//! reached from several complex starting points (branches), and summing the
//! branch contributions reproduces interference and nodes.
//!
//! Layout:
//! - [`jet`]: derivative stacks of analytic functions at complex arguments.
//! - [`potential`]: Eckart, harmonic and free potentials with pole metadata.
//! - [`hierarchy`]: equations of motion and Gaussian initial conditions.
//! - [`integrator`]: adaptive Dormand–Prince 5(4) propagation.
//! - [`branch`]: Newton root search, seed scans and branch continuation.
//! - [`reconstruction`]: per-branch wavefunctions, superposition, comparison.
//! - [`reference`]: split-operator grid propagator and quantum potential.
//! - [`experiment`]: config file, end-to-end pipeline and output files.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod integrator;
pub mod jet;
pub mod potential;
pub mod reconstruction;
pub mod reference;

pub use num_complex::Complex64;

pub use branch::{Branch, BranchLabel, BranchSearch, NewtonConfig, RootSolution, SearchRegion, TrajectoryMap};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};

pub use hierarchy::{GaussianPacket, Hierarchy, PhysicalConstants, TrajectoryState};
pub use integrator::{IntegratorConfig, StepDiagnostics};
pub use jet::Jet;
pub use potential::Potential;
pub use reconstruction::{BranchWavefunction, Comparison, SuperpositionMode, SuperpositionPolicy};
pub use reference::{GridWavefunction, SplitOrder};

/// Complex scalar used throughout: positions, velocities, actions.
pub type ComplexScalar = Complex64;

/// Returns `true` when both parts are finite.
#[inline]
pub fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
