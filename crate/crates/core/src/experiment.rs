//! Experiment config files and the end-to-end pipeline.
//!
//! One TOML file describes one run: physics, the real target grid, the seed
//! lattice, solver settings, the reference propagator and the superpositions
//! to report. [`run_experiment`] goes trajectories → branches → per-branch
//! wavefunctions → sums → comparison and writes every number it reports to a
//! data file in the output directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branch::{Branch, BranchSearch, FailureCounts, NewtonConfig, SearchRegion, TrajectoryMap};
use crate::error::{Error, Result};
use crate::hierarchy::{GaussianPacket, Hierarchy, PhysicalConstants};
use crate::integrator::IntegratorConfig;
use crate::potential::Potential;
use crate::reconstruction::{
    branch_psi, compare, local_minima, superpose, BranchWavefunction, Comparison, ReconstructionConfig,
    SuperpositionMode, SuperpositionPolicy,
};
use crate::reference::{
    coherent_state, free_gaussian, packet_momentum_bound, quantum_potential, separated_transmission,
    split_operator_propagate, GridWavefunction, QuantumPotentialField, SplitOrder, DEFAULT_AMPLITUDE_FLOOR,
    DEFAULT_EDGE_TOL,
};

/// Founding targets as fractions of the grid when the config names none.
const DEFAULT_FOUNDING: [f64; 5] = [0.05, 0.3, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub alpha: f64,
    #[serde(default)]
    pub alpha_imag: f64,
    pub center: f64,
    pub momentum: f64,
}

impl InitialConfig {
    pub fn packet(&self) -> GaussianPacket {
        GaussianPacket {
            alpha: Complex64::new(self.alpha, self.alpha_imag),
            center: self.center,
            momentum: self.momentum,
        }
    }
}

/// `count` equally spaced points on `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.count)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::config(format!("{field}.lo"), "need finite lo < hi"));
        }
        if self.count < 2 {
            return Err(Error::config(format!("{field}.count"), "need at least 2 points"));
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let last = count.saturating_sub(1).max(1) as f64;
    (0..count)
        .map(|k| if k + 1 == count { hi } else { lo + (hi - lo) * (k as f64 / last) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub re_range: [f64; 2],
    pub im_range: [f64; 2],
    pub grid: [usize; 2],
    /// Grid indices at which seed scans found branches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub founding: Option<Vec<usize>>,
}

impl SearchConfig {
    pub fn region(&self) -> SearchRegion {
        SearchRegion {
            re_range: self.re_range,
            im_range: self.im_range,
            grid: self.grid,
        }
    }

    pub fn founding_indices(&self, count: usize) -> Vec<usize> {
        match &self.founding {
            Some(f) => f.clone(),
            None => DEFAULT_FOUNDING
                .iter()
                .map(|f| (f * (count - 1) as f64).round() as usize)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        }
    }
}

fn default_edge_tol() -> f64 {
    DEFAULT_EDGE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum OracleConfig {
    /// Grid propagation; the domain is periodic with `n_points` samples.
    SplitOperator {
        x_min: f64,
        x_max: f64,
        n_points: usize,
        n_steps: usize,
        #[serde(default)]
        order: SplitOrder,
        #[serde(default = "default_edge_tol")]
        edge_tol: f64,
        /// Also propagate on a grid with twice the points and steps.
        #[serde(default)]
        refinement_check: bool,
    },
    /// Closed form: free spreading or a harmonic coherent state.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

fn default_split_tol() -> f64 {
    1e-8
}

/// Continues the branches past the right end of the target grid and compares
/// the transmitted part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionConfig {
    #[serde(default)]
    pub x_split: f64,
    /// The extended grid runs from the target grid's right end to `hi`.
    pub hi: f64,
    pub count: usize,
    #[serde(default = "default_split_tol")]
    pub split_tol: f64,
    /// Enlarged domain on which the reference is run until the packet splits.
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dt: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub truncation: usize,
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub constants: PhysicalConstants,
    pub initial: InitialConfig,
    pub potential: Potential,
    pub xf_grid: GridSpec,
    pub search: SearchConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmission: Option<TransmissionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub superposition: Vec<SuperpositionPolicy>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn packet(&self) -> GaussianPacket {
        self.initial.packet()
    }

    pub fn xf_points(&self) -> Vec<f64> {
        self.xf_grid.points()
    }

    pub fn hierarchy(&self) -> Result<Hierarchy> {
        Ok(Hierarchy::new(self.potential, self.constants, self.truncation)?.with_packet_scale(&self.packet()))
    }

    pub fn trajectory_map(&self) -> Result<TrajectoryMap> {
        Ok(TrajectoryMap::new(self.hierarchy()?, self.packet(), self.t_final, self.integrator))
    }

    /// Checks every precondition that does not need a trajectory.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file-name-safe string"));
        }
        if self.truncation < 1 {
            return Err(Error::config("truncation", "minimum truncation order is 1"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be positive"));
        }
        self.constants.validate()?;
        self.packet().validate()?;
        self.potential.validate()?;
        self.xf_grid.validate("xf_grid")?;
        self.search.region().validate()?;
        if let Some(bad) = self
            .search
            .founding_indices(self.xf_grid.count)
            .iter()
            .find(|&&i| i >= self.xf_grid.count)
        {
            return Err(Error::config("search.founding", format!("index {bad} outside xf_grid")));
        }
        if self.search.founding.as_ref().is_some_and(|f| f.is_empty()) {
            return Err(Error::config("search.founding", "empty list"));
        }
        self.newton.validate()?;
        self.integrator.validate(self.t_final)?;
        if !(self.reconstruction.log_cap > 0.0) {
            return Err(Error::config("reconstruction.log_cap", "must be positive"));
        }
        self.validate_oracle()?;
        if let Some(t) = &self.transmission {
            self.validate_transmission(t)?;
        }
        let mut names = BTreeSet::new();
        for r in &self.regions {
            if r.name.is_empty() || !names.insert(r.name.as_str()) {
                return Err(Error::config("regions.name", "names must be non-empty and unique"));
            }
            if !(r.lo < r.hi) {
                return Err(Error::config("regions.lo", format!("region `{}` needs lo < hi", r.name)));
            }
        }
        for p in &self.superposition {
            p.validate(&referenced_ids(p))?;
        }
        Ok(())
    }

    fn validate_oracle(&self) -> Result<()> {
        match &self.oracle {
            OracleConfig::Analytic => {
                analytic_oracle(self).map(drop)?;
            }
            &OracleConfig::SplitOperator {
                x_min,
                x_max,
                n_points,
                n_steps,
                edge_tol,
                ..
            } => {
                if !(x_min < self.xf_grid.lo && self.xf_grid.hi < x_max) {
                    return Err(Error::config("oracle.x_min", "domain must contain xf_grid"));
                }
                if !n_points.is_power_of_two() || n_points < 16 {
                    return Err(Error::config("oracle.n_points", "must be a power of two, at least 16"));
                }
                if n_steps == 0 {
                    return Err(Error::config("oracle.n_steps", "must be positive"));
                }
                if !(edge_tol > 0.0) {
                    return Err(Error::config("oracle.edge_tol", "must be positive"));
                }
                let psi0 = GridWavefunction::gaussian(&self.packet(), self.constants.hbar, x_min, x_max, n_points);
                psi0.check_edges(edge_tol)
                    .map_err(|e| Error::config("oracle.x_min", format!("initial packet: {e}")))?;
                psi0.check_nyquist(self.momentum_bound(x_min, x_max), self.constants.hbar)
                    .map_err(|e| Error::config("oracle.n_points", e.to_string()))?;
            }
        }
        Ok(())
    }

    fn validate_transmission(&self, t: &TransmissionConfig) -> Result<()> {
        if !(t.hi > self.xf_grid.hi) {
            return Err(Error::config("transmission.hi", "must lie right of xf_grid.hi"));
        }
        if !(t.x_split > self.xf_grid.hi && t.x_split < t.hi) {
            return Err(Error::config("transmission.x_split", "must lie inside the extended grid"));
        }
        if t.count < 2 {
            return Err(Error::config("transmission.count", "need at least 2 points"));
        }
        if !(t.split_tol > 0.0) {
            return Err(Error::config("transmission.split_tol", "must be positive"));
        }
        if !(t.x_min < t.x_split && t.x_split < t.x_max) {
            return Err(Error::config("transmission.x_min", "domain must contain x_split"));
        }
        if !t.n_points.is_power_of_two() || t.n_points < 16 {
            return Err(Error::config("transmission.n_points", "must be a power of two, at least 16"));
        }
        if !(t.dt > 0.0 && t.t_max >= self.t_final) {
            return Err(Error::config("transmission.dt", "need dt > 0 and t_max >= t_final"));
        }
        if let OracleConfig::SplitOperator { x_min, x_max, .. } = self.oracle {
            if !(x_min < self.xf_grid.hi && t.hi < x_max) {
                return Err(Error::config("transmission.hi", "extended grid must lie inside the oracle domain"));
            }
        }
        Ok(())
    }

    /// Packet momentum bound raised by the largest potential drop on the domain.
    fn momentum_bound(&self, x_min: f64, x_max: f64) -> f64 {
        let p = packet_momentum_bound(&self.packet(), self.constants.hbar);
        let vs: Vec<f64> = linspace(x_min, x_max, 1025)
            .iter()
            .map(|&x| self.potential.value_real(x))
            .collect();
        let drop = vs.iter().cloned().fold(f64::MIN, f64::max) - vs.iter().cloned().fold(f64::MAX, f64::min);
        (p * p + 2.0 * self.constants.mass * drop).sqrt()
    }
}

fn referenced_ids(p: &SuperpositionPolicy) -> Vec<usize> {
    match &p.mode {
        SuperpositionMode::Single { branch } => vec![*branch],
        SuperpositionMode::Pair { branches } => branches.to_vec(),
        SuperpositionMode::Explicit { branches } => branches.clone(),
        SuperpositionMode::All | SuperpositionMode::BestPairPerPoint => Vec::new(),
    }
}

type AnalyticFn = Box<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

fn analytic_oracle(cfg: &ExperimentConfig) -> Result<AnalyticFn> {
    let packet = cfg.packet();
    let consts = cfg.constants;
    match cfg.potential {
        Potential::Free => Ok(Box::new(move |x, t| free_gaussian(&packet, &consts, x, t))),
        Potential::Harmonic { k } => {
            let omega = (k / consts.mass).sqrt();
            let coherent = consts.mass * omega / (2.0 * consts.hbar);
            if (packet.alpha - coherent).norm() > 1e-12 * coherent {
                return Err(Error::config(
                    "oracle.method",
                    format!("analytic harmonic oracle needs alpha = m*omega/(2*hbar) = {coherent}"),
                ));
            }
            Ok(Box::new(move |x, t| coherent_state(&packet, &consts, omega, x, t)))
        }
        Potential::Eckart { .. } => Err(Error::config("oracle.method", "no closed form for this potential")),
    }
}

/// Reference wavefunction at `t_final`.
pub struct OracleRun {
    /// Values on the target grid.
    pub psi: Vec<Complex64>,
    /// Conventional quantum potential at `t_final`.
    pub field: QuantumPotentialField,
    /// Final grid wavefunction (split-operator only).
    pub grid: Option<GridWavefunction>,
    pub summary: OracleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub method: String,
    pub norm_initial: Option<f64>,
    pub norm_final: Option<f64>,
    pub norm_drift: Option<f64>,
    pub edge_amplitude: Option<f64>,
    /// Max change of `|ψ|` on the target grid under 2× points and steps.
    pub refinement_change: Option<f64>,
    /// Max `|Q|` of the initial packet over its `1/e` amplitude core.
    pub q_initial_core: f64,
}

impl OracleRun {
    /// Analytic or grid value at arbitrary points inside the domain.
    pub fn sample(&self, cfg: &ExperimentConfig, xs: &[f64]) -> Result<Vec<Complex64>> {
        match &self.grid {
            Some(g) => Ok(g.interpolate(xs)),
            None => {
                let f = analytic_oracle(cfg)?;
                Ok(xs.iter().map(|&x| f(x, cfg.t_final)).collect())
            }
        }
    }
}

/// Max `|Q|` of the initial Gaussian over `|x − x_c| ≤ 1/√Re α`.
pub fn initial_core_q(packet: &GaussianPacket, consts: &PhysicalConstants) -> f64 {
    let w = 1.0 / packet.alpha.re.sqrt();
    let g = GridWavefunction::gaussian(packet, consts.hbar, packet.center - 4.0 * w, packet.center + 4.0 * w, 1024);
    quantum_potential(&g, consts, 0.0)
        .max_abs_in(packet.center - w, packet.center + w)
        .unwrap_or(0.0)
}

pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleRun> {
    let xs = cfg.xf_points();
    let consts = cfg.constants;
    let packet = cfg.packet();
    let q_initial_core = initial_core_q(&packet, &consts);
    match cfg.oracle {
        OracleConfig::Analytic => {
            let f = analytic_oracle(cfg)?;
            let dx = cfg.xf_grid.spacing();
            let g = GridWavefunction::from_fn(cfg.xf_grid.lo, cfg.xf_grid.hi + dx, cfg.xf_grid.count, |x| {
                f(x, cfg.t_final)
            });
            Ok(OracleRun {
                psi: xs.iter().map(|&x| f(x, cfg.t_final)).collect(),
                field: quantum_potential(&g, &consts, DEFAULT_AMPLITUDE_FLOOR),
                grid: None,
                summary: OracleSummary {
                    method: "analytic".into(),
                    norm_initial: None,
                    norm_final: None,
                    norm_drift: None,
                    edge_amplitude: None,
                    refinement_change: None,
                    q_initial_core,
                },
            })
        }
        OracleConfig::SplitOperator {
            x_min,
            x_max,
            n_points,
            n_steps,
            order,
            edge_tol,
            refinement_check,
        } => {
            let propagate = |n: usize, steps: usize| {
                let psi0 = GridWavefunction::gaussian(&packet, consts.hbar, x_min, x_max, n);
                let out = split_operator_propagate(&psi0, &cfg.potential, cfg.t_final, steps, &consts, order, edge_tol)?;
                Ok::<_, Error>((psi0.norm(), out))
            };
            let (norm0, g) = propagate(n_points, n_steps)?;
            let psi = g.interpolate(&xs);
            let refinement_change = if refinement_check {
                let (_, fine) = propagate(2 * n_points, 2 * n_steps)?;
                Some(
                    fine.interpolate(&xs)
                        .iter()
                        .zip(&psi)
                        .map(|(a, b)| (a.norm() - b.norm()).abs())
                        .fold(0.0, f64::max),
                )
            } else {
                None
            };
            let norm1 = g.norm();
            Ok(OracleRun {
                psi,
                field: quantum_potential(&g, &consts, DEFAULT_AMPLITUDE_FLOOR),
                summary: OracleSummary {
                    method: "split-operator".into(),
                    norm_initial: Some(norm0),
                    norm_final: Some(norm1),
                    norm_drift: Some((norm1 - norm0).abs()),
                    edge_amplitude: Some(g.edge_amplitude()),
                    refinement_change,
                    q_initial_core,
                },
                grid: Some(g),
            })
        }
    }
}

/// Writes `psi_exact.csv` and `qpotential.csv`.
pub fn write_oracle_files(cfg: &ExperimentConfig, oracle: &OracleRun, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let xs = cfg.xf_points();
    let mut w = CsvOut::create(dir, "psi_exact.csv", &["x", "re_psi", "im_psi", "abs_psi"])?;
    for (x, z) in xs.iter().zip(&oracle.psi) {
        w.row([num(*x), num(z.re), num(z.im), num(z.norm())])?;
    }
    w.finish()?;
    let f = &oracle.field;
    let mut w = CsvOut::create(dir, "qpotential.csv", &["x", "abs_psi", "q"])?;
    for k in 0..f.x.len() {
        w.row([num(f.x[k]), num(f.amplitude[k]), opt(f.q[k])])?;
    }
    w.finish()?;
    Ok(vec!["psi_exact.csv".into(), "qpotential.csv".into()])
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct CsvOut(csv::Writer<fs::File>);

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        Ok(CsvOut(w))
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.0.write_record(fields).map_err(csv_err)
    }

    fn finish(mut self) -> Result<()> {
        self.0.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_psi(dir: &Path, name: &str, xs: &[f64], psi: &[Option<Complex64>]) -> Result<()> {
    let mut w = CsvOut::create(dir, name, &["x_f", "re_psi", "im_psi", "abs_psi"])?;
    for (x, z) in xs.iter().zip(psi) {
        w.row([num(*x), opt(z.map(|z| z.re)), opt(z.map(|z| z.im)), opt(z.map(|z| z.norm()))])?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub id: usize,
    pub label: String,
    /// Reaches every point of the target grid.
    pub complete: bool,
    pub points: usize,
    pub x_f_range: [f64; 2],
    pub x0_first: [f64; 2],
    pub x0_last: [f64; 2],
    pub truncated_low: Option<String>,
    pub truncated_high: Option<String>,
    pub seams: Vec<f64>,
    pub anchor_x0: Option<[f64; 2]>,
    pub max_residual: f64,
    pub max_newton_iters: usize,
    pub focal_points: usize,
    pub max_abs_psi: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub x_f: f64,
    pub seeds: usize,
    pub roots: usize,
    pub failures: FailureCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRegion {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Max conventional `|Q|` of the reference on the region.
    pub max_abs_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionComparison {
    pub region: String,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: String,
    pub file: String,
    pub comparisons: Vec<RegionComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    /// Branches whose continuation reached the end of the extended grid.
    pub candidates: Vec<usize>,
    pub branch: Option<usize>,
    pub probability: Option<f64>,
    /// `∫_{x > x_split} |ψ|²` of the reference at `t_final`.
    pub reference_at_t_final: Option<f64>,
    /// Reference probability once `|ψ(x_split)|` has dropped below `split_tol`.
    pub reference_separated: Option<f64>,
    pub separation_time: Option<f64>,
    pub comparison: Option<Comparison>,
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub threads: usize,
    pub total_seconds: f64,
    pub oracle_seconds: f64,
    pub branch_seconds: f64,
    pub transmission_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub truncation: usize,
    pub grid_points: usize,
    pub branch_count: usize,
    pub complete_count: usize,
    pub real_count: usize,
    pub anchor_target: Option<f64>,
    pub branches: Vec<BranchSummary>,
    pub scans: Vec<ScanSummary>,
    pub oracle: Option<OracleSummary>,
    pub regions: Vec<NamedRegion>,
    pub superpositions: Vec<PolicyResult>,
    pub transmission: Option<TransmissionReport>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub runtime: RuntimeStats,
}

/// Everything a run computed, in memory.
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub search: BranchSearch,
    pub wavefunctions: Vec<BranchWavefunction>,
    pub oracle: Option<OracleRun>,
    /// Transmitted-branch `(x, ψ)` on the extended grid.
    pub transmitted: Option<(Vec<f64>, Vec<Option<Complex64>>)>,
}

/// Runs the full pipeline and writes its files into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    run_pipeline(cfg, out_dir).map(|o| o.report)
}

pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let xs = cfg.xf_points();
    let mut warnings = Vec::new();
    let mut files = Vec::new();

    let clock = Instant::now();
    let oracle = match run_oracle(cfg) {
        Ok(o) => {
            files.extend(write_oracle_files(cfg, &o, out_dir)?);
            Some(o)
        }
        Err(e) => {
            warnings.push(format!("reference propagation failed: {e}"));
            None
        }
    };
    let oracle_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let map = cfg.trajectory_map()?;
    let region = cfg.search.region();
    let founding = cfg.search.founding_indices(xs.len());
    let search = map
        .find_branches(&region, &xs, &founding, &cfg.newton)
        .map_err(|e| Error::Pipeline(format!("branch search: {e}")))?;
    if search.branches.is_empty() {
        return Err(Error::Pipeline("no branches found".into()));
    }
    let branch_seconds = clock.elapsed().as_secs_f64();

    let wavefunctions: Vec<BranchWavefunction> = search
        .branches
        .iter()
        .map(|b| branch_psi(b, &xs, &cfg.constants, &cfg.reconstruction))
        .collect();
    write_branches(out_dir, &search.branches)?;
    files.push("branches.csv".into());
    let mut summaries = Vec::new();
    for (b, w) in search.branches.iter().zip(&wavefunctions) {
        let file = format!("psi_branch_{}.csv", b.id);
        write_psi(out_dir, &file, &xs, &w.psi)?;
        summaries.push(summarize(b, w, &xs, &file));
        files.push(file);
        if let Some(reason) = &b.truncated_low {
            warnings.push(format!("branch {} stops at low end: {reason}", b.id));
        }
        if let Some(reason) = &b.truncated_high {
            warnings.push(format!("branch {} stops at high end: {reason}", b.id));
        }
    }

    let regions = regions(cfg, &xs, oracle.as_ref());
    let policies = if cfg.superposition.is_empty() {
        let mut p = vec![SuperpositionPolicy::new(SuperpositionMode::All)];
        if oracle.is_some() {
            p.push(SuperpositionPolicy::new(SuperpositionMode::BestPairPerPoint));
        }
        p
    } else {
        cfg.superposition.clone()
    };
    let mut superpositions = Vec::new();
    for policy in &policies {
        let reference = oracle.as_ref().map(|o| o.psi.as_slice());
        if policy.requires_reference() && reference.is_none() {
            warnings.push(format!("superposition {}: no reference available", policy.slug()));
            continue;
        }
        let sum = match superpose(&wavefunctions, policy, reference) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("superposition {}: {e}", policy.slug()));
                continue;
            }
        };
        let file = format!("psi_sum_{}.csv", policy.slug());
        write_psi(out_dir, &file, &xs, &sum)?;
        files.push(file.clone());
        let mut comparisons = Vec::new();
        if let Some(o) = &oracle {
            for r in &regions {
                match compare(&xs, &sum, &o.psi, [r.lo, r.hi]) {
                    Ok(c) => comparisons.push(RegionComparison {
                        region: r.name.clone(),
                        comparison: c,
                    }),
                    Err(e) => warnings.push(format!("comparison {} on {}: {e}", policy.slug(), r.name)),
                }
            }
        }
        superpositions.push(PolicyResult {
            policy: policy.slug(),
            file,
            comparisons,
        });
    }

    let clock = Instant::now();
    let mut transmitted = None;
    let transmission = match &cfg.transmission {
        Some(t) => {
            let (report, psi) = transmission(cfg, t, &map, &search, oracle.as_ref(), out_dir, &mut warnings)?;
            if let Some(f) = &report.file {
                files.push(f.clone());
            }
            transmitted = psi;
            Some(report)
        }
        None => None,
    };
    let transmission_seconds = clock.elapsed().as_secs_f64();

    files.push("report.json".into());
    files.sort();
    let report = ExperimentReport {
        name: cfg.name.clone(),
        truncation: cfg.truncation,
        grid_points: xs.len(),
        branch_count: search.branches.len(),
        complete_count: search.complete(&xs).count(),
        real_count: search
            .branches
            .iter()
            .filter(|b| b.label == Some(crate::branch::BranchLabel::Real))
            .count(),
        anchor_target: search.anchor_target,
        branches: summaries,
        scans: search
            .scans
            .iter()
            .map(|s| ScanSummary {
                x_f: s.x_f,
                seeds: s.seeds,
                roots: s.roots.len(),
                failures: s.failures,
            })
            .collect(),
        oracle: oracle.as_ref().map(|o| o.summary.clone()),
        regions,
        superpositions,
        transmission,
        warnings,
        files,
        runtime: RuntimeStats {
            threads: rayon::current_num_threads(),
            total_seconds: started.elapsed().as_secs_f64(),
            oracle_seconds,
            branch_seconds,
            transmission_seconds,
        },
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out_dir.join("report.json"), json + "\n")?;
    Ok(ExperimentOutcome {
        report,
        search,
        wavefunctions,
        oracle,
        transmitted,
    })
}

fn write_branches(dir: &Path, branches: &[Branch]) -> Result<()> {
    let mut w = CsvOut::create(
        dir,
        "branches.csv",
        &[
            "branch_id", "x_f", "re_x0", "im_x0", "re_S", "im_S", "residual", "re_M", "im_M", "newton_iters", "focal",
        ],
    )?;
    for b in branches {
        for s in &b.solutions {
            w.row([
                b.id.to_string(),
                num(s.x_f),
                num(s.x0.re),
                num(s.x0.im),
                num(s.action.re),
                num(s.action.im),
                num(s.residual),
                num(s.monodromy.re),
                num(s.monodromy.im),
                s.newton_iters.to_string(),
                s.focal.to_string(),
            ])?;
        }
    }
    w.finish()
}

fn summarize(b: &Branch, w: &BranchWavefunction, xs: &[f64], file: &str) -> BranchSummary {
    let first = &b.solutions[0];
    let last = &b.solutions[b.solutions.len() - 1];
    BranchSummary {
        id: b.id,
        label: b.label.map(|l| l.to_string()).unwrap_or_default(),
        complete: b.covers(xs),
        points: b.solutions.len(),
        x_f_range: [first.x_f, last.x_f],
        x0_first: [first.x0.re, first.x0.im],
        x0_last: [last.x0.re, last.x0.im],
        truncated_low: b.truncated_low.clone(),
        truncated_high: b.truncated_high.clone(),
        seams: b.seams.clone(),
        anchor_x0: b.anchor.as_ref().map(|a| [a.x0.re, a.x0.im]),
        max_residual: b.solutions.iter().map(|s| s.residual).fold(0.0, f64::max),
        max_newton_iters: b.solutions.iter().map(|s| s.newton_iters).max().unwrap_or(0),
        focal_points: b.solutions.iter().filter(|s| s.focal).count(),
        max_abs_psi: w.psi.iter().flatten().map(|z| z.norm()).reduce(f64::max),
        file: file.into(),
    }
}

/// The whole grid, configured regions, and when the reference shows at least
/// two local maxima: `rippled` between the outermost ones and the parts left
/// and right of the global maximum.
fn regions(cfg: &ExperimentConfig, xs: &[f64], oracle: Option<&OracleRun>) -> Vec<NamedRegion> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let mut out = vec![("grid".to_string(), lo, hi)];
    if let Some(o) = oracle {
        let neg: Vec<Option<f64>> = o.psi.iter().map(|z| Some(-z.norm())).collect();
        let maxima = local_minima(xs, &neg);
        if maxima.len() >= 2 {
            let global = maxima
                .iter()
                .copied()
                .max_by(|a, b| nearest(xs, &o.psi, *a).total_cmp(&nearest(xs, &o.psi, *b)))
                .expect("non-empty");
            out.push(("rippled".into(), maxima[0], maxima[maxima.len() - 1]));
            out.push(("left-of-max".into(), lo, global));
            out.push(("right-of-max".into(), global, hi));
        }
    }
    out.extend(cfg.regions.iter().map(|r| (r.name.clone(), r.lo, r.hi)));
    out.into_iter()
        .map(|(name, lo, hi)| NamedRegion {
            max_abs_q: oracle.and_then(|o| o.field.max_abs_in(lo, hi)),
            name,
            lo,
            hi,
        })
        .collect()
}

fn nearest(xs: &[f64], psi: &[Complex64], x: f64) -> f64 {
    let k = xs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    psi[k].norm()
}

type TransmittedPsi = Option<(Vec<f64>, Vec<Option<Complex64>>)>;

/// Continues every complete branch over the extended grid; the first one that
/// reaches its end is the transmitted branch.
fn transmission(
    cfg: &ExperimentConfig,
    t: &TransmissionConfig,
    map: &TrajectoryMap,
    search: &BranchSearch,
    oracle: Option<&OracleRun>,
    dir: &Path,
    warnings: &mut Vec<String>,
) -> Result<(TransmissionReport, TransmittedPsi)> {
    let xs = cfg.xf_points();
    let ext = linspace(cfg.xf_grid.hi, t.hi, t.count);
    let region = cfg.search.region();
    let complete: Vec<&Branch> = search.complete(&xs).collect();
    let continued: Vec<Option<Branch>> = complete
        .par_iter()
        .map(|b| {
            let founding = &b.solutions[b.solutions.len() - 1];
            map.continue_branch(founding, &ext, &region, &cfg.newton)
                .ok()
                .filter(|c| c.covers(&ext))
                .map(|mut c| {
                    c.id = b.id;
                    c
                })
        })
        .collect();
    let candidates: Vec<usize> = continued.iter().flatten().map(|c| c.id).collect();
    let mut report = TransmissionReport {
        candidates: candidates.clone(),
        branch: None,
        probability: None,
        reference_at_t_final: None,
        reference_separated: None,
        separation_time: None,
        comparison: None,
        file: None,
    };

    if let Some(g) = oracle.and_then(|o| o.grid.as_ref()) {
        let dx = g.dx();
        report.reference_at_t_final = Some(
            g.values
                .iter()
                .enumerate()
                .filter(|(j, _)| g.x(*j) > t.x_split)
                .map(|(_, z)| z.norm_sqr())
                .sum::<f64>()
                * dx,
        );
    }
    let packet = cfg.packet();
    let psi0 = GridWavefunction::gaussian(&packet, cfg.constants.hbar, t.x_min, t.x_max, t.n_points);
    let edge_tol = match cfg.oracle {
        OracleConfig::SplitOperator { edge_tol, .. } => edge_tol,
        OracleConfig::Analytic => DEFAULT_EDGE_TOL,
    };
    let order = match cfg.oracle {
        OracleConfig::SplitOperator { order, .. } => order,
        OracleConfig::Analytic => SplitOrder::default(),
    };
    match separated_transmission(
        &psi0,
        &cfg.potential,
        &cfg.constants,
        t.x_split,
        t.split_tol,
        t.dt,
        t.t_max,
        order,
        edge_tol,
    ) {
        Ok((p, time)) => {
            report.reference_separated = Some(p);
            report.separation_time = Some(time);
        }
        Err(e) => warnings.push(format!("separated transmission reference: {e}")),
    }

    let Some(branch) = continued.into_iter().flatten().next() else {
        warnings.push("no branch continues across the extended grid".into());
        return Ok((report, None));
    };
    if candidates.len() > 1 {
        warnings.push(format!("several branches continue across the extended grid: {candidates:?}"));
    }
    let psi = branch_psi(&branch, &ext, &cfg.constants, &cfg.reconstruction).psi;
    let dx = ext[1] - ext[0];
    report.branch = Some(branch.id);
    report.probability = Some(
        ext.iter()
            .zip(&psi)
            .filter(|(x, _)| **x > t.x_split)
            .map(|(_, z)| z.map_or(0.0, |z| z.norm_sqr()))
            .sum::<f64>()
            * dx,
    );
    let reference = match oracle {
        Some(o) => Some(o.sample(cfg, &ext)?),
        None => None,
    };
    if let Some(r) = &reference {
        report.comparison = compare(&ext, &psi, r, [t.x_split, t.hi]).ok();
    }
    let file = "psi_transmitted.csv".to_string();
    let mut w = CsvOut::create(dir, &file, &["x", "re_psi", "im_psi", "abs_psi", "abs_exact"])?;
    for (k, (x, z)) in ext.iter().zip(&psi).enumerate() {
        w.row([
            num(*x),
            opt(z.map(|z| z.re)),
            opt(z.map(|z| z.im)),
            opt(z.map(|z| z.norm())),
            opt(reference.as_ref().map(|r| r[k].norm())),
        ])?;
    }
    w.finish()?;
    report.file = Some(file);
    Ok((report, Some((ext, psi))))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
name = "free"
truncation = 1
t_final = 1.0

[constants]
mass = 1.0
hbar = 1.0

[initial]
alpha = 1.0
center = 0.0
momentum = 0.5

[potential]
kind = "free"

[xf_grid]
lo = -2.0
hi = 2.0
count = 41

[search]
re_range = [-1.0, 1.0]
im_range = [-1.5, 1.5]
grid = [6, 6]

[oracle]
method = "analytic"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(FREE).unwrap();
        assert_eq!(cfg.truncation, 1);
        assert_eq!(cfg.newton, NewtonConfig::default());
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn zero_truncation_names_field() {
        let err = ExperimentConfig::from_toml_str(&FREE.replace("truncation = 1", "truncation = 0")).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "truncation"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_str(&FREE.replace("center = 0.0", "center = 0.0\ncentre = 1.0"));
        assert!(err.is_err());
    }

    #[test]
    fn analytic_oracle_needs_closed_form() {
        let text = FREE.replace("kind = \"free\"", "kind = \"eckart\"\ndepth = 1.0\nbeta = 1.0");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "oracle.method"), "{err}");
        let text = FREE.replace("kind = \"free\"", "kind = \"harmonic\"\nk = 9.0");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let text = FREE.replace("kind = \"free\"", "kind = \"harmonic\"\nk = 4.0");
        assert!(ExperimentConfig::from_toml_str(&text).is_ok());
    }

    #[test]
    fn split_operator_domain_checked() {
        let base = FREE.replace(
            "method = \"analytic\"",
            "method = \"split-operator\"\nx_min = -12.0\nx_max = 12.0\nn_points = 512\nn_steps = 200",
        );
        assert!(ExperimentConfig::from_toml_str(&base).is_ok());
        let narrow = base.replace("x_min = -12.0", "x_min = -3.0");
        let err = ExperimentConfig::from_toml_str(&narrow).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "oracle.x_min"), "{err}");
        let odd = base.replace("n_points = 512", "n_points = 500");
        let err = ExperimentConfig::from_toml_str(&odd).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "oracle.n_points"), "{err}");
    }

    #[test]
    fn default_founding_indices() {
        let cfg = ExperimentConfig::from_toml_str(FREE).unwrap();
        assert_eq!(cfg.search.founding_indices(200), vec![10, 60, 100, 149, 189]);
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = GridSpec { lo: -1.0, hi: -0.05, count: 200 }.points();
        assert_eq!((g[0], g[199], g.len()), (-1.0, -0.05, 200));
    }

    #[test]
    fn core_q_matches_closed_form() {
        let packet = GaussianPacket::new(30.0 * std::f64::consts::PI, -0.7, 300f64.sqrt());
        let consts = PhysicalConstants { mass: 30.0, hbar: 1.0 };
        let q = initial_core_q(&packet, &consts);
        assert!((q - std::f64::consts::PI).abs() < 1e-4, "{q}");
    }
}
