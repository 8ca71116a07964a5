//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use bomca_core::{GaussianPacket, Hierarchy, IntegratorConfig, PhysicalConstants, Potential, TrajectoryMap};

pub fn eckart() -> Potential {
    Potential::Eckart { depth: 40.0, beta: 4.32 }
}

pub fn consts() -> PhysicalConstants {
    PhysicalConstants { mass: 30.0, hbar: 1.0 }
}

pub fn packet() -> GaussianPacket {
    GaussianPacket::new(30.0 * PI, -0.7, 300f64.sqrt())
}

/// Eckart scattering map at truncation `n`, `t_f = 0.995`.
pub fn eckart_map(n: usize) -> TrajectoryMap {
    let h = Hierarchy::new(eckart(), consts(), n).expect("valid hierarchy").with_packet_scale(&packet());
    TrajectoryMap::new(h, packet(), 0.995, IntegratorConfig::default())
}
