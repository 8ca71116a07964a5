use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bomca_core::experiment::{run_oracle, write_oracle_files, ExperimentConfig};
use bomca_core::{run_experiment, Error};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bomca", version, about = "Complex-action quantum trajectory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (default: the config's output_dir, else out/<name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: reference, branches, reconstruction, comparison.
    Run { config: PathBuf },
    /// Reference propagation only.
    Oracle { config: PathBuf },
    /// Seed scan at a single real target; prints the roots found.
    Scan {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        xf: f64,
    },
    /// Parse and check a config file.
    Validate { config: PathBuf },
}

enum Failure {
    Invalid(Error),
    Fatal(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } => Failure::Invalid(e),
            _ => Failure::Fatal(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Fatal(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(_) => Failure::Invalid(e),
        e => e.into(),
    })
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = load(config)?;
            println!(
                "{}: ok (N = {}, {} targets, {}x{} seeds)",
                cfg.name, cfg.truncation, cfg.xf_grid.count, cfg.search.grid[0], cfg.search.grid[1]
            );
        }
        Command::Oracle { config } => {
            let cfg = load(config)?;
            let dir = out_dir(cli, &cfg);
            let oracle = run_oracle(&cfg)?;
            let files = write_oracle_files(&cfg, &oracle, &dir)?;
            let s = &oracle.summary;
            println!("method {}", s.method);
            if let (Some(n0), Some(drift)) = (s.norm_initial, s.norm_drift) {
                println!("norm {n0:.12} drift {drift:.3e}");
            }
            if let Some(c) = s.refinement_change {
                println!("refinement change {c:.3e}");
            }
            println!("initial core max|Q| {:.6e}", s.q_initial_core);
            for f in files {
                println!("wrote {}", dir.join(f).display());
            }
        }
        Command::Scan { config, xf } => {
            let cfg = load(config)?;
            let map = cfg.trajectory_map()?;
            let scan = map.seed_scan(&cfg.search.region(), *xf, &cfg.newton);
            println!(
                "x_f = {xf}: {} roots from {} seeds ({} failed)",
                scan.roots.len(),
                scan.seeds,
                scan.failures.total()
            );
            println!("{:>24} {:>24} {:>24} {:>24} {:>11} {:>11}", "re_x0", "im_x0", "re_S", "im_S", "|psi|", "residual");
            for r in &scan.roots {
                println!(
                    "{:>24.16e} {:>24.16e} {:>24.16e} {:>24.16e} {:>11.3e} {:>11.3e}",
                    r.x0.re,
                    r.x0.im,
                    r.action.re,
                    r.action.im,
                    (-r.action.im / cfg.constants.hbar).exp(),
                    r.residual
                );
            }
            if cli.verbose {
                eprintln!("{:?}", scan.failures);
            }
        }
        Command::Run { config } => {
            let cfg = load(config)?;
            let dir = out_dir(cli, &cfg);
            let report = run_experiment(&cfg, &dir)?;
            println!(
                "{}: {} branches ({} complete, {} real) in {:.1} s",
                report.name, report.branch_count, report.complete_count, report.real_count, report.runtime.total_seconds
            );
            for b in &report.branches {
                println!(
                    "  branch {:>2} {:<12} {:>3} points  x_f [{:.4}, {:.4}]{}",
                    b.id,
                    b.label,
                    b.points,
                    b.x_f_range[0],
                    b.x_f_range[1],
                    if b.complete { "  complete" } else { "" }
                );
            }
            for p in &report.superpositions {
                for c in &p.comparisons {
                    println!(
                        "  {:<12} {:<14} L2 {:.3e}  Linf {:.3e}",
                        p.policy, c.region, c.comparison.l2_rel, c.comparison.linf_rel
                    );
                }
            }
            if let Some(t) = &report.transmission {
                if let (Some(b), Some(p)) = (t.branch, t.probability) {
                    println!(
                        "  transmitted branch {b}: T = {p:.4e} (reference {:?})",
                        t.reference_separated.or(t.reference_at_t_final)
                    );
                }
            }
            if !report.warnings.is_empty() {
                println!("  {} warnings (see report.json)", report.warnings.len());
                if cli.verbose {
                    for w in &report.warnings {
                        eprintln!("warning: {w}");
                    }
                }
            }
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}
