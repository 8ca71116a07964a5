#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use bomca_core::branch::SearchRegion;
use bomca_core::{Complex64, GaussianPacket, Hierarchy, IntegratorConfig, PhysicalConstants, Potential, TrajectoryMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MASS: f64 = 30.0;
pub const T_F: f64 = 0.995;

pub fn eckart() -> Potential {
    Potential::Eckart { depth: 40.0, beta: 4.32 }
}

pub fn consts() -> PhysicalConstants {
    PhysicalConstants { mass: MASS, hbar: 1.0 }
}

pub fn packet() -> GaussianPacket {
    GaussianPacket::new(30.0 * PI, -0.7, 300f64.sqrt())
}

pub fn region() -> SearchRegion {
    SearchRegion {
        re_range: [-1.2, -0.2],
        im_range: [-0.3, 0.3],
        grid: [40, 40],
    }
}

pub fn eckart_map(n: usize) -> TrajectoryMap {
    eckart_map_with(n, IntegratorConfig::default())
}

pub fn eckart_map_with(n: usize, integrator: IntegratorConfig) -> TrajectoryMap {
    let h = Hierarchy::new(eckart(), consts(), n).unwrap().with_packet_scale(&packet());
    TrajectoryMap::new(h, packet(), T_F, integrator)
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point of the Eckart search region.
pub fn random_x0(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.2..-0.2), rng.gen_range(-0.3..0.3))
}

pub struct MonodromyCheck {
    pub x0: Complex64,
    pub truncation: usize,
    pub monodromy: Complex64,
    pub finite_difference: Complex64,
}

impl MonodromyCheck {
    pub fn rel_error(&self) -> f64 {
        (self.monodromy - self.finite_difference).norm() / self.monodromy.norm()
    }
}

/// Integrated monodromy against `(x(x₀+δ) − x(x₀−δ))/(2δ)` on `count` random
/// starting points, alternating N = 1 and N = 2. Points whose trajectories
/// fail are redrawn.
pub fn monodromy_checks(count: usize, seed: u64) -> Vec<MonodromyCheck> {
    let delta = 1e-6;
    let maps = [eckart_map(1), eckart_map(2)];
    let mut rng = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let map = &maps[out.len() % 2];
        let x0 = random_x0(&mut rng);
        let shots = (map.shoot(x0), map.shoot(x0 + delta), map.shoot(x0 - delta));
        if let (Ok((c, _)), Ok((p, _)), Ok((m, _))) = shots {
            out.push(MonodromyCheck {
                x0,
                truncation: map.hierarchy.truncation(),
                monodromy: c.monodromy,
                finite_difference: (p.x - m.x) / (2.0 * delta),
            });
        }
    }
    out
}
