use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tissue_homog::config::{load_config, RunConfig};
use tissue_homog::diffusion::effective_diffusion;
use tissue_homog::geometry::{measure_cell, presets, CellKind, PhaseSelector};
use tissue_homog::io::{write_atomic, write_mask, write_matrix_csv};
use tissue_homog::macro_flow::FlowCase;
use tissue_homog::pipeline::{self, cell_mask, cell_results_cached, run_flow, run_oxygen, FlowReport};
use tissue_homog::stokes::permeability;
use tissue_homog::{Error, ErrorCategory, Result};

const THREADS_VAR: &str = "TISSUE_HOMOG_THREADS";

/// Homogenized blood flow and oxygen transport in two-layer tissue.
#[derive(Parser)]
#[command(name = "tissue-homog", version)]
#[command(after_help = "Environment:\n  TISSUE_HOMOG_THREADS  worker threads (default: all cores)\n\nExit codes: 0 ok, 1 I/O or failed validation, 2 config, 3 solver, 4 geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Without it the defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative tolerance of every Krylov solve.
    #[arg(long)]
    tol: Option<f64>,
    /// Flow case.
    #[arg(long, value_parser = parse_case)]
    case: Option<FlowCase>,
    /// Preset cell; replaces the fat or skin cell depending on its family.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CellKindArg {
    Stokes,
    Diffusion,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems of one cell and write its tensors.
    CellSolve {
        #[arg(long, value_enum)]
        kind: CellKindArg,
        #[command(flatten)]
        common: Common,
    },
    /// Cell tensors plus the macroscopic Darcy flow.
    MacroFlow(Common),
    /// Cell tensors, flow and oxygen transport.
    OxygenRun(Common),
    /// Micro-scale epsilon sweep against the homogenized model.
    DnsValidate(Common),
    /// The whole chain with report and provenance.
    Pipeline(Common),
}

fn parse_case(s: &str) -> std::result::Result<FlowCase, String> {
    FlowCase::parse(s).map_err(|e| e.to_string())
}

/// Loads the config and applies the command line overrides.
fn configure(c: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => RunConfig::new(c.case.unwrap_or(FlowCase::Case1)),
    };
    if let Some(case) = c.case {
        if case == FlowCase::Case2Intermediate && cfg.domain.delta.is_none() && c.config.is_none() {
            cfg.domain.delta = Some(0.1);
        }
        cfg.case = case;
    }
    if let Some(tol) = c.tol {
        cfg.solver.tolerance = tol;
    }
    if let Some(name) = &c.preset {
        let spec = presets::cell(name)?;
        if spec.kind == CellKind::Fat {
            cfg.geometry.fat = name.clone();
        } else {
            cfg.geometry.skin = Some(name.clone());
        }
    }
    cfg.validate()?;
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn cell_solve(kind: CellKindArg, c: &Common) -> Result<()> {
    let (cfg, out) = configure(c)?;
    let spec = match &c.preset {
        Some(name) => presets::cell(name)?,
        None => cfg.fat_cell()?,
    };
    let mask = cell_mask(&spec, cfg.grid.cell)?;
    let dir = out.join("cell");
    let measures = measure_cell(&mask);
    write_atomic(&dir.join("measures.toml"), measures.summary().as_bytes())?;
    write_mask(&dir.join("mask.bin"), &mask)?;
    let solver = cfg.solver.options();
    match kind {
        CellKindArg::Stokes => {
            let phases: &[PhaseSelector] = if spec.kind == CellKind::Fat {
                &[PhaseSelector::Artery, PhaseSelector::Vein]
            } else {
                &[PhaseSelector::Blood]
            };
            for &sel in phases {
                if mask.count_selected(sel) == 0 {
                    continue;
                }
                let (k, _) = permeability(&mask, sel, cfg.physics.viscosity, solver)
                    .map_err(|e| e.context(format!("{} permeability", sel.name())))?;
                let path = dir.join(format!("k_{}.csv", sel.name()));
                write_matrix_csv(&path, &k.k)?;
                println!("{}: K = {:?} -> {}", sel.name(), k.k.as_slice(), path.display());
            }
        }
        CellKindArg::Diffusion => {
            let coef = pipeline::phase_coefficient(&mask, cfg.physics.diffusion);
            for sel in [PhaseSelector::Artery, PhaseSelector::Vein, PhaseSelector::Tissue] {
                if mask.count_selected(sel) == 0 {
                    continue;
                }
                let (a, _) = effective_diffusion(&mask, sel, &coef, solver)
                    .map_err(|e| e.context(format!("{} diffusion", sel.name())))?;
                let path = dir.join(format!("a_{}.csv", sel.name()));
                write_matrix_csv(&path, &a.a)?;
                println!("{}: A = {:?} -> {}", sel.name(), a.a.as_slice(), path.display());
            }
            if spec.kind.is_skin() {
                let (a, _) = effective_diffusion(&mask, PhaseSelector::Blood, &coef, solver)
                    .map_err(|e| e.context("blood diffusion"))?;
                let path = dir.join("a_blood.csv");
                write_matrix_csv(&path, &a.a)?;
                println!("blood: A = {:?} -> {}", a.a.as_slice(), path.display());
            }
        }
    }
    Ok(())
}

fn macro_flow(c: &Common, with_oxygen: bool) -> Result<()> {
    let (cfg, out) = configure(c)?;
    let (cells, hit) = cell_results_cached(&cfg, &out.join("cache")).map_err(|e| e.context("cell problems"))?;
    pipeline::write_tensors(&out.join("tensors"), &cells)?;
    let flow = run_flow(&cfg, &cells)?;
    pipeline::write_flow(&out.join("fields"), &flow)?;
    let report = FlowReport::new(&flow, 1e-6);
    println!(
        "case {}: flow converged in {} iterations, interface imbalance {:.3e} (cells {})",
        cfg.case.name(),
        report.iterations,
        report.interface_imbalance,
        if hit { "cached" } else { "solved" }
    );
    if with_oxygen {
        let run = run_oxygen(&cfg, &cells, &flow)?;
        pipeline::write_oxygen(&out.join("fields"), &run)?;
        let r = pipeline::OxygenReport::new(&run);
        println!(
            "oxygen: t = {} with dt = {:.3e}, range [{:.6}, {:.6}], mass {:.6e} -> {:.6e}",
            r.final_time, r.dt, r.min, r.max, r.mass_initial, r.mass_final
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn dns_validate(c: &Common) -> Result<bool> {
    let (cfg, out) = configure(c)?;
    let report = pipeline::run_dns_validation(&cfg, &out)?;
    println!("{:>4} {:>12} {:>12} {:>12} {:>8}", "N", "L2", "Linf", "L2 control", "rate");
    for (i, r) in report.rows.iter().enumerate() {
        let rate = if i == 0 { String::from("-") } else { format!("{:.3}", report.rates[i - 1]) };
        println!("{:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>8}", r.n, r.l2, r.linf, r.l2_control, rate);
    }
    println!("verdict: {}", if report.pass { "PASS" } else { "FAIL" });
    println!("wrote {}", out.join("dns_sweep.csv").display());
    Ok(report.pass)
}

fn run_pipeline(c: &Common) -> Result<()> {
    let (cfg, out) = configure(c)?;
    let o = pipeline::run_pipeline(&cfg, &out)?;
    println!(
        "case {}: config {} (cells {}), {:.2} s",
        cfg.case.name(),
        &o.provenance.config_hash[..12],
        if o.provenance.cache_hit { "cached" } else { "solved" },
        o.provenance.wall_clock_seconds
    );
    println!("wrote {}", Path::new(&out).join("report.toml").display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Solver => 3,
        ErrorCategory::Geometry => 4,
        ErrorCategory::Io => 1,
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_VAR} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {n} threads: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::CellSolve { kind, common } => cell_solve(*kind, common).map(|()| true),
        Command::MacroFlow(c) => macro_flow(c, false).map(|()| true),
        Command::OxygenRun(c) => macro_flow(c, true).map(|()| true),
        Command::DnsValidate(c) => dns_validate(c),
        Command::Pipeline(c) => run_pipeline(c).map(|()| true),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
