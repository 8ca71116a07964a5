//! Root search for complex initial positions that land on real final positions.
//!
//! For a fixed final time the map `x₀ ↦ x(t_f; x₀)` is holomorphic away from
//! the potential's poles, and its derivative is the propagated monodromy. A
//! complex Newton iteration therefore converges quadratically. Roots are found
//! by launching Newton from a lattice of seeds, deduplicated, then continued
//! along an increasing grid of targets to form branches.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{GaussianPacket, Hierarchy, TrajectoryState};
use crate::integrator::{propagate, IntegratorConfig, StepDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Convergence threshold on `|x(t_f; x₀) − x_f|`.
    pub tol: f64,
    pub max_iters: usize,
    /// `|M_f|` below this marks a focal point.
    pub focal_tol: f64,
    /// Roots closer than this (in `x₀`) at the same target are one root.
    pub dedup_tol: f64,
    /// Fraction of the search-region size Newton may wander outside it.
    pub region_margin: f64,
    /// Bound on `|Δx₀|` relative to the first-order estimate `|Δx_f / M|`.
    pub continuation_jump_tol: f64,
    /// Maximum number of target-step halvings when a continuation step fails.
    pub max_substep_depth: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-9,
            max_iters: 25,
            focal_tol: 1e-6,
            dedup_tol: 1e-5,
            region_margin: 0.5,
            continuation_jump_tol: 8.0,
            max_substep_depth: 6,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("newton.{f}");
        for (name, value) in [
            ("tol", self.tol),
            ("focal_tol", self.focal_tol),
            ("dedup_tol", self.dedup_tol),
            ("continuation_jump_tol", self.continuation_jump_tol),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(field(name), "must be positive"));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::config(field("max_iters"), "must be positive"));
        }
        if !(self.region_margin >= 0.0) {
            return Err(Error::config(field("region_margin"), "must be non-negative"));
        }
        Ok(())
    }
}

/// Rectangle of the complex `x₀` plane covered by a seed lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub re_range: [f64; 2],
    pub im_range: [f64; 2],
    /// `[n_re, n_im]` seeds.
    pub grid: [usize; 2],
}

impl SearchRegion {
    pub fn validate(&self) -> Result<()> {
        if !(self.re_range[0] < self.re_range[1]) {
            return Err(Error::config("search.re_range", "must be a nonempty interval"));
        }
        if !(self.im_range[0] < self.im_range[1]) {
            return Err(Error::config("search.im_range", "must be a nonempty interval"));
        }
        if self.grid[0] < 2 || self.grid[1] < 2 {
            return Err(Error::config("search.grid", "need at least 2x2 seeds"));
        }
        Ok(())
    }

    /// Seeds in row-major order (real part fastest).
    pub fn seeds(&self) -> Vec<Complex64> {
        let lerp = |r: [f64; 2], i: usize, n: usize| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64;
        let [n_re, n_im] = self.grid;
        (0..n_im)
            .flat_map(|j| {
                (0..n_re).map(move |i| {
                    Complex64::new(lerp(self.re_range, i, n_re), lerp(self.im_range, j, n_im))
                })
            })
            .collect()
    }

    pub fn contains(&self, z: Complex64, margin: f64) -> bool {
        let dre = (self.re_range[1] - self.re_range[0]) * margin;
        let dim = (self.im_range[1] - self.im_range[0]) * margin;
        z.re >= self.re_range[0] - dre
            && z.re <= self.re_range[1] + dre
            && z.im >= self.im_range[0] - dim
            && z.im <= self.im_range[1] + dim
    }

    /// The same rectangle with `factor`× the seed density along each axis.
    pub fn refined(&self, factor: usize) -> SearchRegion {
        SearchRegion {
            grid: [
                (self.grid[0] - 1) * factor + 1,
                (self.grid[1] - 1) * factor + 1,
            ],
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSolution {
    pub x0: Complex64,
    pub x_f: f64,
    pub action: Complex64,
    pub monodromy: Complex64,
    pub residual: f64,
    pub newton_iters: usize,
    /// `|M_f| < focal_tol`: kept for diagnostics, excluded from reconstruction.
    pub focal: bool,
}

/// The map `x₀ ↦` final trajectory state, for one physical setup.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryMap {
    pub hierarchy: Hierarchy,
    pub packet: GaussianPacket,
    pub t_f: f64,
    pub integrator: IntegratorConfig,
}

impl TrajectoryMap {
    pub fn new(hierarchy: Hierarchy, packet: GaussianPacket, t_f: f64, integrator: IntegratorConfig) -> Self {
        TrajectoryMap {
            hierarchy: hierarchy.with_packet_scale(&packet),
            packet,
            t_f,
            integrator,
        }
    }

    pub fn shoot(&self, x0: Complex64) -> Result<(TrajectoryState, StepDiagnostics)> {
        let s0 = self.hierarchy.initial_state(&self.packet, x0);
        propagate(&s0, &self.hierarchy, self.t_f, &self.integrator)
    }

    /// Complex Newton iteration `x₀ ← x₀ − (x(t_f;x₀) − x_f)/M_f`.
    pub fn newton_solve(
        &self,
        guess: Complex64,
        x_f: f64,
        region: &SearchRegion,
        cfg: &NewtonConfig,
    ) -> Result<RootSolution> {
        let (x0, end, iters, residual) = self.newton_complex(guess, Complex64::new(x_f, 0.0), region, cfg)?;
        Ok(RootSolution {
            x0,
            x_f,
            action: end.action,
            monodromy: end.monodromy,
            residual,
            newton_iters: iters,
            focal: end.monodromy.norm() < cfg.focal_tol,
        })
    }

    /// Newton toward a possibly complex target; used on continuation detours.
    fn newton_complex(
        &self,
        guess: Complex64,
        target: Complex64,
        region: &SearchRegion,
        cfg: &NewtonConfig,
    ) -> Result<(Complex64, TrajectoryState, usize, f64)> {
        let mut x0 = guess;
        let mut residual = f64::INFINITY;
        for iter in 0..=cfg.max_iters {
            let (end, _) = self.shoot(x0)?;
            let miss = end.x - target;
            residual = miss.norm();
            if residual < cfg.tol {
                return Ok((x0, end, iter, residual));
            }
            if iter == cfg.max_iters {
                break;
            }
            let modulus = end.monodromy.norm();
            if modulus < cfg.focal_tol {
                return Err(Error::DegenerateJacobian { modulus });
            }
            x0 -= miss / end.monodromy;
            if !crate::is_finite(x0) || !region.contains(x0, cfg.region_margin) {
                return Err(Error::LeftRegion { x0 });
            }
        }
        Err(Error::NoConvergence {
            iters: cfg.max_iters,
            residual,
        })
    }

    /// Newton from every lattice seed, converged roots clustered by `dedup_tol`.
    pub fn seed_scan(&self, region: &SearchRegion, x_f: f64, cfg: &NewtonConfig) -> ScanResult {
        let seeds = region.seeds();
        let outcomes: Vec<Result<RootSolution>> = seeds
            .par_iter()
            .map(|&seed| self.newton_solve(seed, x_f, region, cfg))
            .collect();

        let mut result = ScanResult {
            x_f,
            roots: Vec::new(),
            seeds: seeds.len(),
            failures: FailureCounts::default(),
        };
        for outcome in outcomes {
            match outcome {
                Ok(sol) => {
                    if !region.contains(sol.x0, 0.0) {
                        result.failures.outside += 1;
                        continue;
                    }
                    match result.roots.iter_mut().find(|r| (r.x0 - sol.x0).norm() < cfg.dedup_tol) {
                        Some(existing) if existing.residual > sol.residual => *existing = sol,
                        Some(_) => {}
                        None => result.roots.push(sol),
                    }
                }
                Err(e) => result.failures.record(&e),
            }
        }
        result.roots.sort_by(|a, b| {
            b.x0.im
                .total_cmp(&a.x0.im)
                .then(a.x0.re.total_cmp(&b.x0.re))
        });
        result
    }

    /// Walks the target grid outward from `founding`, warm-starting each
    /// Newton solve from the previous root with the predictor
    /// `x₀ += Δx_f / M_f`.
    pub fn continue_branch(
        &self,
        founding: &RootSolution,
        xf_grid: &[f64],
        region: &SearchRegion,
        cfg: &NewtonConfig,
    ) -> Result<Branch> {
        let start = xf_grid
            .iter()
            .position(|&x| (x - founding.x_f).abs() <= 1e-12 * x.abs().max(1.0))
            .ok_or_else(|| Error::config("xf_grid", "founding target is not a grid point"))?;

        let walk = |indices: &mut dyn Iterator<Item = usize>| -> (Vec<RootSolution>, Option<String>) {
            let mut out = Vec::new();
            let mut prev = founding.clone();
            for k in indices {
                match self.step_to(&prev, xf_grid[k], region, cfg, 0) {
                    Ok(sol) => {
                        out.push(sol.clone());
                        prev = sol;
                    }
                    Err(e) => return (out, Some(format!("x_f = {}: {e}", xf_grid[k]))),
                }
            }
            (out, None)
        };
        let (mut left, left_stop) = walk(&mut (0..start).rev());
        let (right, right_stop) = walk(&mut (start + 1..xf_grid.len()));
        left.reverse();
        left.push(founding.clone());
        left.extend(right);
        Ok(Branch {
            id: 0,
            seed: founding.x0,
            solutions: left,
            truncated_low: left_stop,
            truncated_high: right_stop,
            label: None,
            seams: Vec::new(),
            anchor: None,
        })
    }

    fn step_to(
        &self,
        prev: &RootSolution,
        x_f: f64,
        region: &SearchRegion,
        cfg: &NewtonConfig,
        depth: usize,
    ) -> Result<RootSolution> {
        let direct = self.straight_step(prev, x_f, region, cfg);
        match direct {
            Ok(sol) => Ok(sol),
            Err(_) if depth < cfg.max_substep_depth => {
                let halved = self
                    .step_to(prev, prev.x_f + 0.5 * (x_f - prev.x_f), region, cfg, depth + 1)
                    .and_then(|mid| self.step_to(&mid, x_f, region, cfg, depth + 1));
                match halved {
                    Ok(sol) => Ok(sol),
                    Err(e) if depth == 0 => self.detour_step(prev, x_f, region, cfg).map_err(|_| e),
                    Err(e) => Err(e),
                }
            }
            Err(e) => Err(e),
        }
    }

    fn straight_step(
        &self,
        prev: &RootSolution,
        x_f: f64,
        region: &SearchRegion,
        cfg: &NewtonConfig,
    ) -> Result<RootSolution> {
        let dxf = x_f - prev.x_f;
        let predicted = prev.x0 + dxf / prev.monodromy;
        let sol = self.newton_solve(predicted, x_f, region, cfg)?;
        self.check_jump(prev.x0, prev.monodromy, &sol, dxf.abs(), cfg)?;
        Ok(sol)
    }

    fn check_jump(
        &self,
        from: Complex64,
        from_m: Complex64,
        sol: &RootSolution,
        dxf: f64,
        cfg: &NewtonConfig,
    ) -> Result<()> {
        let expected = dxf * (1.0 / from_m.norm()).max(1.0 / sol.monodromy.norm());
        if (sol.x0 - from).norm() > cfg.continuation_jump_tol * expected {
            return Err(Error::LeftRegion { x0: sol.x0 });
        }
        Ok(())
    }

    /// Analytic continuation along an arc in the complex target plane, used to
    /// pass folds (`M → 0`) and images of poles that lie on or near the real
    /// axis. The upper arc is tried first, then the lower one, at growing heights.
    fn detour_step(
        &self,
        prev: &RootSolution,
        x_f: f64,
        region: &SearchRegion,
        cfg: &NewtonConfig,
    ) -> Result<RootSolution> {
        const ARC_STEPS: usize = 24;
        let dxf = x_f - prev.x_f;
        let mut last_err = Error::NoConvergence { iters: 0, residual: f64::INFINITY };
        for height in [0.5, 2.0, 6.0] {
            for side in [1.0, -1.0] {
                let bulge = side * height * dxf.abs();
                let point = |s: f64| {
                    Complex64::new(prev.x_f + s * dxf, bulge * (std::f64::consts::PI * s).sin())
                };
                let mut x0 = prev.x0;
                let mut m = prev.monodromy;
                let mut target = point(0.0);
                let mut ok = true;
                for k in 1..=ARC_STEPS {
                    let next = point(k as f64 / ARC_STEPS as f64);
                    let guess = x0 + (next - target) / m;
                    match self.newton_complex(guess, next, region, cfg) {
                        Ok((root, end, _, _)) => {
                            let expected = (next - target).norm() * (1.0 / m.norm()).max(1.0 / end.monodromy.norm());
                            if (root - x0).norm() > cfg.continuation_jump_tol * expected {
                                last_err = Error::LeftRegion { x0: root };
                                ok = false;
                                break;
                            }
                            x0 = root;
                            m = end.monodromy;
                            target = next;
                        }
                        Err(e) => {
                            last_err = e;
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    // polish on the real target
                    return self.newton_solve(x0, x_f, region, cfg);
                }
            }
        }
        Err(last_err)
    }

    /// Scans at each founding target, continues every new root across the
    /// grid, and drops rediscoveries of an existing branch.
    pub fn find_branches(
        &self,
        region: &SearchRegion,
        xf_grid: &[f64],
        founding_indices: &[usize],
        cfg: &NewtonConfig,
    ) -> Result<BranchSearch> {
        let mut branches: Vec<Branch> = Vec::new();
        let mut scans = Vec::new();
        for &idx in founding_indices {
            let x_f = *xf_grid
                .get(idx)
                .ok_or_else(|| Error::config("branches.founding", "index outside xf_grid"))?;
            let scan = self.seed_scan(region, x_f, cfg);
            let fresh: Vec<&RootSolution> = scan
                .roots
                .iter()
                .filter(|r| !branches.iter().any(|b| b.matches(r, cfg.dedup_tol)))
                .collect();
            let continued: Vec<Result<Branch>> = fresh
                .par_iter()
                .map(|r| self.continue_branch(r, xf_grid, region, cfg))
                .collect();
            for b in continued {
                let b = b?;
                if !branches.iter().any(|old| old.overlaps(&b, cfg.dedup_tol)) {
                    branches.push(b);
                }
            }
            scans.push(scan);
        }
        let mut branches = stitch_branches(branches, xf_grid, cfg);
        let anchor_target = self.anchor_target(xf_grid);
        if let Some(x_f) = anchor_target {
            let anchors: Vec<Option<RootSolution>> =
                branches.par_iter().map(|b| self.anchor(b, x_f, region, cfg)).collect();
            for (b, a) in branches.iter_mut().zip(anchors) {
                b.anchor = a;
            }
        }
        let labels = classify_branches(&branches, REAL_BRANCH_TOL);
        let mut order: Vec<usize> = (0..branches.len()).collect();
        order.sort_by(|&a, &b| {
            branches[b]
                .mean_imag()
                .total_cmp(&branches[a].mean_imag())
                .then(branches[a].seed.re.total_cmp(&branches[b].seed.re))
        });
        let mut sorted = Vec::with_capacity(branches.len());
        for (rank, &i) in order.iter().enumerate() {
            let mut b = branches[i].clone();
            b.id = rank + 1;
            b.label = Some(labels[i]);
            sorted.push(b);
        }
        Ok(BranchSearch {
            branches: sorted,
            scans,
            anchor_target,
        })
    }

    /// Real landing point of the trajectory launched from the packet center,
    /// if it stays real and falls inside the grid.
    pub fn anchor_target(&self, xf_grid: &[f64]) -> Option<f64> {
        let (end, _) = self.shoot(Complex64::new(self.packet.center, 0.0)).ok()?;
        let (lo, hi) = (*xf_grid.first()?, *xf_grid.last()?);
        (end.x.im.abs() < REAL_BRANCH_TOL && end.x.re >= lo && end.x.re <= hi).then_some(end.x.re)
    }

    /// Solves on `branch` at the off-grid target `x_f`, predicting from the
    /// nearest stored root and accepting only a continuous step.
    fn anchor(&self, branch: &Branch, x_f: f64, region: &SearchRegion, cfg: &NewtonConfig) -> Option<RootSolution> {
        let near = branch
            .solutions
            .iter()
            .min_by(|a, b| (a.x_f - x_f).abs().total_cmp(&(b.x_f - x_f).abs()))?;
        let spacing = branch
            .solutions
            .windows(2)
            .map(|w| w[1].x_f - w[0].x_f)
            .fold(f64::INFINITY, f64::min);
        if (near.x_f - x_f).abs() > spacing {
            return None;
        }
        let sol = self.newton_solve(near.x0 + (x_f - near.x_f) / near.monodromy, x_f, region, cfg).ok()?;
        let bound = cfg.continuation_jump_tol
            * (x_f - near.x_f).abs().max(cfg.tol)
            * (1.0 / near.monodromy.norm()).max(1.0 / sol.monodromy.norm());
        ((sol.x0 - near.x0).norm() <= bound).then_some(sol)
    }
}

/// `|Im x₀|` below this somewhere along a branch makes it the real branch.
pub const REAL_BRANCH_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub no_convergence: usize,
    pub left_region: usize,
    pub degenerate: usize,
    pub pole: usize,
    pub overflow: usize,
    pub step_failure: usize,
    pub outside: usize,
    pub other: usize,
}

impl FailureCounts {
    fn record(&mut self, e: &Error) {
        match e {
            Error::NoConvergence { .. } => self.no_convergence += 1,
            Error::LeftRegion { .. } => self.left_region += 1,
            Error::DegenerateJacobian { .. } => self.degenerate += 1,
            Error::PoleProximity { .. } => self.pole += 1,
            Error::Overflow { .. } => self.overflow += 1,
            Error::StepSizeUnderflow { .. } | Error::MaxStepsExceeded { .. } | Error::NonFinite { .. } => {
                self.step_failure += 1
            }
            _ => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.no_convergence
            + self.left_region
            + self.degenerate
            + self.pole
            + self.overflow
            + self.step_failure
            + self.outside
            + self.other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub x_f: f64,
    /// Deduplicated roots, ordered by decreasing `Im x₀`.
    pub roots: Vec<RootSolution>,
    pub seeds: usize,
    pub failures: FailureCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "rank")]
pub enum BranchLabel {
    Real,
    /// 1-based rank by mean `|Im x₀|`.
    Secondary(usize),
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchLabel::Real => write!(f, "real"),
            BranchLabel::Secondary(r) => write!(f, "secondary-{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub seed: Complex64,
    /// Ordered by strictly increasing `x_f`.
    pub solutions: Vec<RootSolution>,
    /// Why continuation stopped below / above the founding point, if it did.
    pub truncated_low: Option<String>,
    pub truncated_high: Option<String>,
    pub label: Option<BranchLabel>,
    /// Targets at which two pieces were joined across a trajectory singularity.
    pub seams: Vec<f64>,
    /// Root at the landing point of the trajectory launched from the packet
    /// center, when that point lies inside the grid.
    pub anchor: Option<RootSolution>,
}

impl Branch {
    pub fn at(&self, x_f: f64) -> Option<&RootSolution> {
        self.solutions.iter().find(|s| s.x_f == x_f)
    }

    fn matches(&self, root: &RootSolution, tol: f64) -> bool {
        self.at(root.x_f).is_some_and(|s| (s.x0 - root.x0).norm() < tol)
    }

    fn overlaps(&self, other: &Branch, tol: f64) -> bool {
        other.solutions.iter().any(|s| self.matches(s, tol))
    }

    pub fn min_abs_imag(&self) -> f64 {
        self.solutions
            .iter()
            .chain(&self.anchor)
            .map(|s| s.x0.im.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_abs_imag(&self) -> f64 {
        self.solutions.iter().map(|s| s.x0.im.abs()).sum::<f64>() / self.solutions.len().max(1) as f64
    }

    fn mean_imag(&self) -> f64 {
        self.solutions.iter().map(|s| s.x0.im).sum::<f64>() / self.solutions.len().max(1) as f64
    }

    /// Whether the branch reaches every point of `grid`.
    pub fn covers(&self, grid: &[f64]) -> bool {
        self.solutions.len() == grid.len()
    }

    fn first(&self) -> &RootSolution {
        &self.solutions[0]
    }

    fn last(&self) -> &RootSolution {
        &self.solutions[self.solutions.len() - 1]
    }
}

/// Joins branch pieces that stop at neighbouring grid points with a small
/// `x₀` gap.
///
/// The map `x₀ ↦ x(t_f)` is discontinuous across the curve of initial points
/// whose trajectories hit a singularity at some real time. A locus that meets
/// that curve reappears on the other side a short distance away; continuation
/// stops there, leaving two pieces. The gap is accepted under the same bound
/// as an ordinary continuation step.
pub fn stitch_branches(mut branches: Vec<Branch>, xf_grid: &[f64], cfg: &NewtonConfig) -> Vec<Branch> {
    let index = |x: f64| xf_grid.iter().position(|&g| g == x);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (a, lo) in branches.iter().enumerate() {
            if lo.truncated_high.is_none() {
                continue;
            }
            let Some(end) = index(lo.last().x_f) else { continue };
            for (b, hi) in branches.iter().enumerate() {
                if a == b || hi.truncated_low.is_none() || index(hi.first().x_f) != Some(end + 1) {
                    continue;
                }
                let (p, q) = (lo.last(), hi.first());
                let gap = (q.x0 - p.x0).norm();
                let bound = cfg.continuation_jump_tol
                    * (q.x_f - p.x_f)
                    * (1.0 / p.monodromy.norm()).max(1.0 / q.monodromy.norm());
                if gap <= bound && best.is_none_or(|(_, _, g)| gap < g) {
                    best = Some((a, b, gap));
                }
            }
        }
        let Some((a, b, _)) = best else { return branches };
        let upper = branches[b].clone();
        let lower = &mut branches[a];
        lower.seams.push(upper.first().x_f);
        lower.seams.extend(upper.seams);
        lower.solutions.extend(upper.solutions);
        lower.truncated_high = upper.truncated_high;
        branches.remove(b);
    }
}

/// Labels each branch: real if `min |Im x₀| < real_tol`, otherwise secondary,
/// ranked by mean `|Im x₀|`.
pub fn classify_branches(branches: &[Branch], real_tol: f64) -> Vec<BranchLabel> {
    let mut secondary: Vec<usize> = (0..branches.len())
        .filter(|&i| branches[i].min_abs_imag() >= real_tol)
        .collect();
    secondary.sort_by(|&a, &b| {
        branches[a]
            .mean_abs_imag()
            .total_cmp(&branches[b].mean_abs_imag())
            .then(a.cmp(&b))
    });
    let mut labels = vec![BranchLabel::Real; branches.len()];
    for (rank, &i) in secondary.iter().enumerate() {
        labels[i] = BranchLabel::Secondary(rank + 1);
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSearch {
    /// Canonically ordered, ids starting at 1.
    pub branches: Vec<Branch>,
    pub scans: Vec<ScanResult>,
    /// Landing point of the center trajectory, used to anchor the real branch.
    pub anchor_target: Option<f64>,
}

impl BranchSearch {
    /// Branches that reach every point of `grid`.
    pub fn complete<'a>(&'a self, grid: &'a [f64]) -> impl Iterator<Item = &'a Branch> + 'a {
        self.branches.iter().filter(move |b| b.covers(grid))
    }

    pub fn by_id(&self, id: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::PhysicalConstants;
    use crate::potential::Potential;
    use std::f64::consts::PI;

    const CONSTS: PhysicalConstants = PhysicalConstants { mass: 30.0, hbar: 1.0 };

    fn free_map() -> TrajectoryMap {
        let h = Hierarchy::new(Potential::Free, CONSTS, 1).unwrap();
        TrajectoryMap::new(h, GaussianPacket::new(30.0 * PI, -0.7, 300f64.sqrt()), 0.995, IntegratorConfig::default())
    }

    /// `x(t_f) = x₀(1 + 2iħαt/m) + (p_c/m − 2iħαx_c/m)t`, solved for `x₀`.
    fn free_root(x_f: f64) -> Complex64 {
        let (m, a, xc, pc, t) = (30.0, 30.0 * PI, -0.7, 300f64.sqrt(), 0.995);
        let i = Complex64::i();
        (x_f - pc / m * t + 2.0 * i * a / m * xc * t) / (1.0 + 2.0 * i * a * t / m)
    }

    fn region() -> SearchRegion {
        SearchRegion {
            re_range: [-1.2, -0.2],
            im_range: [-0.3, 0.3],
            grid: [4, 4],
        }
    }

    #[test]
    fn free_newton_is_one_step() {
        let map = free_map();
        let sol = map
            .newton_solve(Complex64::new(-0.5, 0.2), -0.4, &region(), &NewtonConfig::default())
            .unwrap();
        assert!(sol.newton_iters <= 2, "{}", sol.newton_iters);
        assert!((sol.x0 - free_root(-0.4)).norm() < 1e-9);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn free_scan_has_one_cluster() {
        let scan = free_map().seed_scan(&region(), -0.4, &NewtonConfig::default());
        assert_eq!(scan.roots.len(), 1);
        assert_eq!(scan.seeds, 16);
    }

    #[test]
    fn free_branch_is_a_straight_line() {
        let map = free_map();
        let cfg = NewtonConfig::default();
        let grid: Vec<f64> = (0..9).map(|k| -1.0 + 0.1 * k as f64).collect();
        let founding = map.newton_solve(free_root(grid[4]), grid[4], &region(), &cfg).unwrap();
        let b = map.continue_branch(&founding, &grid, &region(), &cfg).unwrap();
        assert!(b.covers(&grid));
        for (s, &x_f) in b.solutions.iter().zip(&grid) {
            assert!((s.x0 - free_root(x_f)).norm() < 1e-9);
        }
        let labels = classify_branches(&[b], REAL_BRANCH_TOL);
        assert!(matches!(labels[0], BranchLabel::Secondary(1)));
    }

    #[test]
    fn single_point_grid() {
        let map = free_map();
        let cfg = NewtonConfig::default();
        let founding = map.newton_solve(free_root(-0.3), -0.3, &region(), &cfg).unwrap();
        let b = map.continue_branch(&founding, &[-0.3], &region(), &cfg).unwrap();
        assert_eq!(b.solutions.len(), 1);
        assert!(b.truncated_low.is_none() && b.truncated_high.is_none());
    }

    #[test]
    fn converged_guess_is_a_fixed_point() {
        let map = free_map();
        let cfg = NewtonConfig::default();
        let root = map.newton_solve(free_root(-0.6), -0.6, &region(), &cfg).unwrap();
        let again = map.newton_solve(root.x0, -0.6, &region(), &cfg).unwrap();
        assert_eq!(again.newton_iters, 0);
        assert_eq!(again.x0, root.x0);
    }

    #[test]
    fn empty_classification() {
        assert!(classify_branches(&[], REAL_BRANCH_TOL).is_empty());
    }

    #[test]
    fn region_checks() {
        assert!(region().validate().is_ok());
        let bad = SearchRegion { grid: [1, 4], ..region() };
        assert!(bad.validate().is_err());
        assert_eq!(region().refined(2).grid, [7, 7]);
        assert_eq!(region().seeds().len(), 16);
    }
}
