//! Per-branch wavefunctions on the real final grid, their superposition, and
//! comparison against a reference.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branch::Branch;
use crate::error::{Error, Result};
use crate::hierarchy::PhysicalConstants;

/// Entries with `−Im S / ħ` above this are flagged instead of exponentiated.
pub const DEFAULT_LOG_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub log_cap: f64,
    /// Keep roots flagged as focal points.
    pub include_focal: bool,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            log_cap: DEFAULT_LOG_CAP,
            include_focal: false,
        }
    }
}

/// `exp(iS/ħ)`, or `None` when the amplitude exceeds `e^log_cap` or is not finite.
pub fn psi_from_action(action: Complex64, hbar: f64, log_cap: f64) -> Option<Complex64> {
    let log_amp = -action.im / hbar;
    if !(log_amp <= log_cap) || !action.re.is_finite() {
        return None;
    }
    Some(Complex64::from_polar(log_amp.exp(), action.re / hbar))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchWavefunction {
    pub branch_id: usize,
    pub xf_grid: Vec<f64>,
    /// `None` where the branch has no root, the root is focal, or the
    /// amplitude is over the cap.
    pub psi: Vec<Option<Complex64>>,
}

impl BranchWavefunction {
    pub fn valid_count(&self) -> usize {
        self.psi.iter().filter(|p| p.is_some()).count()
    }
}

/// Exponentiates the branch action at every grid point it reaches.
pub fn branch_psi(
    branch: &Branch,
    xf_grid: &[f64],
    consts: &PhysicalConstants,
    cfg: &ReconstructionConfig,
) -> BranchWavefunction {
    let mut roots = branch.solutions.iter().peekable();
    let psi = xf_grid
        .iter()
        .map(|&x| {
            while roots.next_if(|s| s.x_f < x).is_some() {}
            let s = roots.next_if(|s| s.x_f == x)?;
            if s.focal && !cfg.include_focal {
                return None;
            }
            psi_from_action(s.action, consts.hbar, cfg.log_cap)
        })
        .collect();
    BranchWavefunction {
        branch_id: branch.id,
        xf_grid: xf_grid.to_vec(),
        psi,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SuperpositionMode {
    Single { branch: usize },
    Pair { branches: [usize; 2] },
    All,
    Explicit { branches: Vec<usize> },
    /// At each point, the pair closest to the reference. Needs a reference
    /// wavefunction, so it is a diagnostic rather than a prediction.
    BestPairPerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionPolicy {
    #[serde(flatten)]
    pub mode: SuperpositionMode,
    /// Branch values with `|ψ|` above this are treated as missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl SuperpositionPolicy {
    pub fn new(mode: SuperpositionMode) -> Self {
        SuperpositionPolicy { mode, cap: None }
    }

    pub fn single(id: usize) -> Self {
        Self::new(SuperpositionMode::Single { branch: id })
    }

    pub fn pair(i: usize, j: usize) -> Self {
        Self::new(SuperpositionMode::Pair { branches: [i, j] })
    }

    /// Short name used in output file names.
    pub fn slug(&self) -> String {
        let join = |ids: &[usize]| ids.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        match &self.mode {
            SuperpositionMode::Single { branch } => format!("single-{branch}"),
            SuperpositionMode::Pair { branches } => format!("pair-{}", join(branches)),
            SuperpositionMode::All => "all".into(),
            SuperpositionMode::Explicit { branches } => format!("set-{}", join(branches)),
            SuperpositionMode::BestPairPerPoint => "best-pair".into(),
        }
    }

    pub fn requires_reference(&self) -> bool {
        matches!(self.mode, SuperpositionMode::BestPairPerPoint)
    }

    /// Checks that every referenced id is in `ids`.
    pub fn validate(&self, ids: &[usize]) -> Result<()> {
        let referenced: Vec<usize> = match &self.mode {
            SuperpositionMode::Single { branch } => vec![*branch],
            SuperpositionMode::Pair { branches } => {
                if branches[0] == branches[1] {
                    return Err(Error::config("superposition.branches", "a pair needs two distinct branches"));
                }
                branches.to_vec()
            }
            SuperpositionMode::Explicit { branches } => {
                if branches.is_empty() {
                    return Err(Error::config("superposition.branches", "empty branch set"));
                }
                branches.clone()
            }
            SuperpositionMode::All | SuperpositionMode::BestPairPerPoint => Vec::new(),
        };
        if let Some(bad) = referenced.iter().find(|id| !ids.contains(id)) {
            return Err(Error::config("superposition.branches", format!("no branch with id {bad}")));
        }
        if let Some(cap) = self.cap {
            if !(cap > 0.0) {
                return Err(Error::config("superposition.cap", "must be positive"));
            }
        }
        Ok(())
    }
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Pointwise sum over the branches selected by `policy`.
///
/// A point is `None` when any selected branch is missing there. For
/// [`SuperpositionMode::BestPairPerPoint`], `reference` must be given on the
/// same grid and a point is `None` only when no pair is complete.
pub fn superpose(
    set: &[BranchWavefunction],
    policy: &SuperpositionPolicy,
    reference: Option<&[Complex64]>,
) -> Result<Vec<Option<Complex64>>> {
    let Some(first) = set.first() else {
        return Err(Error::config("superposition", "no branches to superpose"));
    };
    if set.iter().any(|w| !same_grid(&w.xf_grid, &first.xf_grid) || w.psi.len() != first.xf_grid.len()) {
        return Err(Error::GridMismatch);
    }
    let ids: Vec<usize> = set.iter().map(|w| w.branch_id).collect();
    policy.validate(&ids)?;
    let n = first.xf_grid.len();
    let capped = |w: &BranchWavefunction, k: usize| -> Option<Complex64> {
        w.psi[k].filter(|z| policy.cap.is_none_or(|c| z.norm() <= c))
    };
    let by_id = |id: usize| set.iter().find(|w| w.branch_id == id).expect("validated");
    let sum_of = |members: &[&BranchWavefunction]| -> Vec<Option<Complex64>> {
        (0..n)
            .map(|k| members.iter().map(|w| capped(w, k)).sum::<Option<Complex64>>())
            .collect()
    };
    Ok(match &policy.mode {
        SuperpositionMode::Single { branch } => sum_of(&[by_id(*branch)]),
        SuperpositionMode::Pair { branches } => sum_of(&[by_id(branches[0]), by_id(branches[1])]),
        SuperpositionMode::All => sum_of(&set.iter().collect::<Vec<_>>()),
        SuperpositionMode::Explicit { branches } => {
            let unique: BTreeSet<usize> = branches.iter().copied().collect();
            sum_of(&unique.into_iter().map(by_id).collect::<Vec<_>>())
        }
        SuperpositionMode::BestPairPerPoint => {
            let reference = reference
                .ok_or_else(|| Error::config("superposition.mode", "best-pair-per-point needs a reference"))?;
            if reference.len() != n {
                return Err(Error::GridMismatch);
            }
            (0..n)
                .map(|k| {
                    let target = reference[k].norm();
                    let mut best: Option<(f64, Complex64)> = None;
                    for (a, wa) in set.iter().enumerate() {
                        for wb in &set[a + 1..] {
                            if let (Some(p), Some(q)) = (capped(wa, k), capped(wb, k)) {
                                let z = p + q;
                                let miss = ((z.norm() - target).abs(), z);
                                if best.is_none_or(|(m, _)| miss.0 < m) {
                                    best = Some(miss);
                                }
                            }
                        }
                    }
                    best.map(|(_, z)| z)
                })
                .collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub region: [f64; 2],
    pub points: usize,
    /// Points in the region where the approximation is missing; they count as
    /// `|ψ| = 0` in the error norms.
    pub missing: usize,
    pub l2_rel: f64,
    pub linf_rel: f64,
    pub nodes_approx: Vec<f64>,
    pub nodes_reference: Vec<f64>,
}

impl Comparison {
    /// Whether every reference minimum has an approximate minimum within `tol`.
    pub fn nodes_reproduced(&self, tol: f64) -> bool {
        self.nodes_reference
            .iter()
            .all(|r| self.nodes_approx.iter().any(|a| (a - r).abs() <= tol))
    }
}

/// Relative L2 and max errors of `|ψ|` on `[lo, hi]`, and local minima of
/// both curves.
pub fn compare(
    xs: &[f64],
    approx: &[Option<Complex64>],
    reference: &[Complex64],
    region: [f64; 2],
) -> Result<Comparison> {
    if xs.len() != approx.len() || xs.len() != reference.len() {
        return Err(Error::GridMismatch);
    }
    let idx: Vec<usize> = (0..xs.len())
        .filter(|&k| xs[k] >= region[0] && xs[k] <= region[1])
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyRegion {
            lo: region[0],
            hi: region[1],
        });
    }
    let (mut num, mut den, mut max_diff, mut max_ref, mut missing) = (0.0, 0.0, 0.0f64, 0.0f64, 0);
    for &k in &idx {
        let a = match approx[k] {
            Some(z) => z.norm(),
            None => {
                missing += 1;
                0.0
            }
        };
        let r = reference[k].norm();
        num += (a - r) * (a - r);
        den += r * r;
        max_diff = max_diff.max((a - r).abs());
        max_ref = max_ref.max(r);
    }
    let sub_x: Vec<f64> = idx.iter().map(|&k| xs[k]).collect();
    let amp_a: Vec<Option<f64>> = idx.iter().map(|&k| approx[k].map(|z| z.norm())).collect();
    let amp_r: Vec<Option<f64>> = idx.iter().map(|&k| Some(reference[k].norm())).collect();
    Ok(Comparison {
        region,
        points: idx.len(),
        missing,
        l2_rel: relative(num.sqrt(), den.sqrt()),
        linf_rel: relative(max_diff, max_ref),
        nodes_approx: local_minima(&sub_x, &amp_a),
        nodes_reference: local_minima(&sub_x, &amp_r),
    })
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Interior strict local minima of `values`, refined by the vertex of the
/// parabola through the three neighbouring samples.
pub fn local_minima(xs: &[f64], values: &[Option<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..xs.len().saturating_sub(1) {
        let (Some(a), Some(b), Some(c)) = (values[k - 1], values[k], values[k + 1]) else {
            continue;
        };
        if !(b < a && b <= c) {
            continue;
        }
        out.push(parabola_vertex([xs[k - 1], xs[k], xs[k + 1]], [a, b, c]).unwrap_or(xs[k]));
    }
    out
}

fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let (d1, d2) = (x[1] - x[0], x[2] - x[1]);
    let s1 = (y[1] - y[0]) / d1;
    let s2 = (y[2] - y[1]) / d2;
    let curvature = (s2 - s1) / (x[2] - x[0]);
    if !(curvature > 0.0) {
        return None;
    }
    // slope at the midpoint of the first interval is s1
    let v = 0.5 * (x[0] + x[1]) - s1 / (2.0 * curvature);
    (v >= x[0] && v <= x[2]).then_some(v)
}
