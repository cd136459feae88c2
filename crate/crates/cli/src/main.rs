use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use twoscale::config::RunConfig;
use twoscale::export;
use twoscale::geometry::{Epsilon, PerforatedGrid};
use twoscale::study::{self, CellSummary, Check};
use twoscale::{limit, micro, presets, verify};

#[derive(Parser)]
#[command(
    name = "twoscale",
    version,
    about = "Two-scale thermo-diffusion runs and convergence studies"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run outputs (overrides flags.output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit runtimes so that reports are byte-identical across reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Comma-separated sweep such as "1/4,1/8,1/16" (overrides the config).
    #[arg(long, global = true)]
    sweep: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Effective diffusion tensor of the unit cell.
    Cell,
    /// Single microscale run.
    Micro {
        /// Defaults to the finest epsilon of the sweep.
        #[arg(long)]
        eps: Option<Epsilon>,
    },
    /// Two-scale limit run.
    Limit {
        /// Sign of the exchange term (defaults to physics.sign_limit_exchange).
        #[arg(long, allow_hyphen_values = true)]
        sign: Option<i8>,
    },
    /// Full convergence study.
    Study,
    /// Operator identity suite on the sweep.
    OpsCheck,
    /// List the named coefficient, reaction, source and initial presets.
    Presets,
    /// Print the resolved configuration.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `full` adds the time-stepping and mollifier checks to the data checks.
fn resolve(common: &Common, full: bool) -> twoscale::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &common.sweep {
        cfg.sweep.epsilons = s.split(',').map(str::parse).collect::<twoscale::Result<_>>()?;
    }
    if common.deterministic {
        cfg.flags.deterministic = true;
    }
    if let Some(out) = &common.out {
        cfg.flags.output_dir = out.display().to_string();
    }
    let warnings = if full { cfg.validate()? } else { cfg.validate_data()? };
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn run_dir(cfg: &RunConfig) -> twoscale::Result<PathBuf> {
    let dir = export::create_run_dir(Path::new(&cfg.flags.output_dir), &cfg.hash())?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

fn pool(workers: Option<usize>) -> twoscale::Result<()> {
    if let Some(w) = workers {
        // Ignored if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    Ok(())
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!(
            "[{}] {:<40} {:>12.6} {} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.threshold
        );
    }
    checks.iter().all(|c| c.pass)
}

fn run(cli: Cli) -> twoscale::Result<bool> {
    let common = &cli.common;
    match cli.command {
        Command::Presets => {
            print!("{}", presets::listing());
            Ok(true)
        }
        Command::Config => {
            let cfg = resolve(common, true)?;
            print!("{}", cfg.to_toml());
            Ok(true)
        }
        Command::Cell => {
            let cfg = resolve(common, false)?;
            let cell = study::build_cell(&cfg)?;
            let tensor = study::solve_tensor(&cfg, &cell)?;
            let summary = CellSummary::new(&cell, &tensor);
            let dir = run_dir(&cfg)?;
            export::write_json(&dir.join("cell.json"), &summary)?;
            export::write_tensor_csv(&dir.join("tensor.csv"), &tensor)?;
            let d = tensor.d_eff;
            println!("|Y*| = {:.6}", summary.volume);
            println!(
                "d_eff = [[{:.10}, {:.10}], [{:.10}, {:.10}]]",
                d[0][0], d[0][1], d[1][0], d[1][1]
            );
            println!("written to {}", dir.display());
            Ok(true)
        }
        Command::Micro { eps } => {
            let cfg = resolve(common, true)?;
            pool(common.workers)?;
            let eps = eps.unwrap_or_else(|| cfg.finest());
            let cell = study::build_cell(&cfg)?;
            let problem = study::micro_problem(&cfg, &cfg.physics, cell, eps)?;
            let tr = micro::run(&problem)?;
            let dir = run_dir(&cfg)?;
            export::write_jsonl(&dir.join("diagnostics.jsonl"), &tr.diagnostics)?;
            let coords = &problem.grid.mesh.coords;
            for (k, s) in tr.snapshots.iter().enumerate() {
                export::write_nodal_csv(&dir.join(format!("u_{k:03}.csv")), coords, &s.u)?;
                export::write_nodal_csv(&dir.join(format!("theta_{k:03}.csv")), coords, &s.theta)?;
            }
            #[derive(Serialize)]
            struct Summary {
                epsilon: Epsilon,
                min_value: f64,
                max_value: f64,
                positivity_flags: Vec<usize>,
                energy: Vec<f64>,
                stability_indicator: f64,
            }
            let summary = Summary {
                epsilon: eps,
                min_value: tr.min_value(),
                max_value: tr.max_value(),
                positivity_flags: tr.positivity_flags.clone(),
                energy: tr.energy.clone(),
                stability_indicator: tr.stability_indicator,
            };
            export::write_json(&dir.join("micro.json"), &summary)?;
            let check = [Check::new(
                "min nodal value",
                summary.min_value,
                ">=",
                -cfg.discretization.tol_pos,
            )];
            println!(
                "eps = {eps}, min = {:.3e}, max = {:.6}",
                summary.min_value, summary.max_value
            );
            let ok = print_checks(&check);
            println!("written to {}", dir.display());
            Ok(ok)
        }
        Command::Limit { sign } => {
            let cfg = resolve(common, true)?;
            pool(common.workers)?;
            let sign = sign.unwrap_or(cfg.physics.sign_limit_exchange);
            if sign != 1 && sign != -1 {
                return Err(twoscale::Error::Parameter(format!("sign must be 1 or -1, got {sign}")));
            }
            let cell = study::build_cell(&cfg)?;
            let tensor = Arc::new(study::solve_tensor(&cfg, &cell)?);
            let problem = study::limit_problem(&cfg, &cfg.physics, cell.clone(), tensor, sign)?;
            let tr = limit::run(&problem)?;
            let dir = run_dir(&cfg)?;
            export::write_jsonl(&dir.join("diagnostics.jsonl"), &tr.diagnostics)?;
            let coords = problem.grid.mesh().coords;
            for (k, s) in tr.snapshots.iter().enumerate() {
                export::write_nodal_csv(&dir.join(format!("u_{k:03}.csv")), &coords, &s.u)?;
                export::write_two_scale_csv(&dir.join(format!("theta_{k:03}.csv")), &cell, &s.theta)?;
            }
            let min = tr.min_value();
            println!("sign = {sign:+}, min = {min:.3e}");
            let ok = print_checks(&[Check::new("min nodal value", min, ">=", -cfg.discretization.tol_pos)]);
            println!("written to {}", dir.display());
            Ok(ok)
        }
        Command::Study => {
            let cfg = resolve(common, true)?;
            let out = study::run_study(&cfg, common.workers)?;
            let dir = run_dir(&cfg)?;
            export::write_study(&dir, &out)?;
            let checks = study::assess(&out.report);
            export::write_json(&dir.join("checks.json"), &checks)?;
            let ok = print_checks(&checks);
            println!("written to {}", dir.display());
            Ok(ok)
        }
        Command::OpsCheck => {
            let cfg = resolve(common, false)?;
            let cell = study::build_cell(&cfg)?;
            let mut all = Vec::new();
            for eps in cfg.epsilons() {
                let grid = PerforatedGrid::new(cell.clone(), eps, cfg.geometry.lengths)?;
                all.extend(verify::ops_check(&grid, cfg.flags.seed)?);
            }
            for c in &all {
                println!(
                    "[{}] eps = {:<5} {:<32} rel. error {:.2e} (tol {:.0e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.epsilon,
                    c.identity,
                    c.relative_error,
                    c.tolerance
                );
            }
            let dir = run_dir(&cfg)?;
            export::write_json(&dir.join("ops_check.json"), &all)?;
            println!("written to {}", dir.display());
            Ok(all.iter().all(|c| c.pass))
        }
    }
}
