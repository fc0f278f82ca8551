//! `gdflow` command-line driver.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gdflow::adaptivity::StepControl;
use gdflow::analysis::{run_checks, run_fem_checks, CheckResult};
use gdflow::benchmarks::{
    least_squares_slope, run_cylinder, run_manufactured_on, write_series_csv, ConvergenceReport, ConvergenceRow,
    CylinderCase, ManufacturedCase,
};
use gdflow::fem::{FeSpace, Operators};
use gdflow::mesh::{cylinder, io, Mesh};
use rayon::prelude::*;

use config::{Driver, MeshSource, RunConfig, RunFlags, CYLINDER, MANUFACTURED};

#[derive(Parser)]
#[command(name = "gdflow", version, about = "Grad-div stabilized P2/P1 Navier-Stokes solver with adaptive BDF2")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a structured unit-square mesh or the cylinder channel mesh
    MeshGen {
        /// Subdivisions per side of the unit square
        #[arg(long, conflicts_with = "cylinder", required_unless_present = "cylinder")]
        mesh_n: Option<usize>,
        /// Generate the channel-with-cylinder mesh instead
        #[arg(long)]
        cylinder: bool,
        /// Point placement seed for the cylinder mesh
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Manufactured-solution convergence study over meshes and viscosities
    Manufactured(RunFlags),
    /// Flow around a cylinder: drag, lift and pressure difference series
    Cylinder(RunFlags),
    /// Algebraic and finite element property checks
    Check {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn control(driver: &Driver, i: usize) -> StepControl {
    match driver {
        Driver::Adaptive(tols) => StepControl::Adaptive { tol_r: tols[i] },
        Driver::Fixed(dt) => StepControl::Fixed { dt: *dt },
    }
}

fn mesh_gen(mesh_n: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mesh = match mesh_n {
        Some(n) => Mesh::unit_square(n)?,
        None => {
            let mut params = cylinder::CylinderMeshParams::default();
            if let Some(s) = seed {
                params.seed = s;
            }
            cylinder::generate(&params)?
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    io::save_mesh(&mesh, out)?;
    let s = mesh.stats();
    println!(
        "{}: {} nodes, {} triangles, {} boundary edges, h in [{:.6e}, {:.6e}]",
        out.display(),
        mesh.num_nodes(),
        mesh.num_triangles(),
        mesh.boundary_edges().len(),
        s.h_min,
        s.h_max
    );
    Ok(())
}

fn nu_label(nu: f64) -> String {
    format!("{nu:e}").replace('-', "m")
}

fn manufactured(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let spaces: Vec<FeSpace> = match &cfg.mesh {
        MeshSource::Generated(ns) => ns.iter().map(|&n| FeSpace::unit_square(n)).collect::<gdflow::Result<_>>()?,
        MeshSource::File(p) => vec![FeSpace::new(io::load_mesh(p)?)?],
    };
    let ops: Vec<Operators> = spaces.iter().map(Operators::new).collect();
    let jobs: Vec<(f64, usize)> = cfg
        .nus
        .iter()
        .flat_map(|&nu| (0..spaces.len()).map(move |i| (nu, i)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(nu, i)| {
            let case = ManufacturedCase {
                mu: cfg.mu,
                t_final: cfg.t_final,
                ..ManufacturedCase::new(nu)
            };
            let run = run_manufactured_on(&spaces[i], &ops[i], &case, cfg.scheme, control(&cfg.driver, i))
                .with_context(|| format!("mesh {i}, nu = {nu:e}"))?;
            log::info!(
                "N = {}, nu = {nu:e}: error {:.6e}, {} steps, {} rejections",
                run.n,
                run.error,
                run.summary.accepted_steps,
                run.summary.rejections
            );
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (&(nu, i), run) in jobs.iter().zip(&runs) {
        let tol = match &cfg.driver {
            Driver::Adaptive(t) => t[i],
            Driver::Fixed(_) => f64::NAN,
        };
        run.log.save_csv(&cfg.out.join(format!("steps_N{}_nu{}.csv", run.n, nu_label(nu))))?;
        rows.push(ConvergenceRow {
            n: run.n,
            h: run.h,
            nu,
            tol,
            error: run.error,
            steps: run.summary.accepted_steps,
            rejections: run.summary.rejections,
            factorizations: run.summary.factorizations,
        });
    }
    let mut slopes = Vec::new();
    if spaces.len() >= 2 {
        for &nu in &cfg.nus {
            let (h, e): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.nu == nu).map(|r| (r.h, r.error)).unzip();
            slopes.push((nu, least_squares_slope(&h, &e)?));
        }
    }
    let report = ConvergenceReport { rows, slopes };
    let mut w = create(&cfg.out.join("convergence.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    if !report.slopes.is_empty() {
        let mut w = create(&cfg.out.join("slopes.csv"))?;
        writeln!(w, "nu,slope")?;
        for (nu, s) in &report.slopes {
            writeln!(w, "{nu:.11e},{s:.11e}")?;
            println!("nu = {nu:e}: slope {s:.4}");
        }
        w.flush()?;
    }
    println!("wrote {}", cfg.out.join("convergence.csv").display());
    Ok(())
}

fn cylinder_run(cfg: &RunConfig) -> Result<()> {
    let MeshSource::File(path) = &cfg.mesh else {
        bail!("the cylinder case needs --mesh-file");
    };
    if cfg.nus.len() != 1 {
        bail!("the cylinder case takes a single nu");
    }
    let space = FeSpace::new(io::load_mesh(path)?)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let case = CylinderCase {
        nu: cfg.nus[0],
        mu: cfg.mu,
        t_final: cfg.t_final,
    };
    let mut next_report = 0.0;
    let run = run_cylinder(&space, &case, cfg.scheme, control(&cfg.driver, 0), |s| {
        if s.t >= next_report {
            log::info!("t = {:.4}: cd {:.6}, cl {:.6}, dp {:.6}", s.t, s.cd, s.cl, s.dp);
            next_report += 0.5;
        }
    })?;
    let mut w = create(&cfg.out.join("series.csv"))?;
    write_series_csv(&run.series, &mut w)?;
    w.flush()?;
    run.log.save_csv(&cfg.out.join("steps.csv"))?;
    let mut w = create(&cfg.out.join("summary.txt"))?;
    run.summary.write(&mut w)?;
    w.flush()?;
    run.summary.write(std::io::stdout().lock())?;
    Ok(())
}

fn print_table(results: &[CheckResult]) -> bool {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in results {
        println!(
            "{:<width$}  {}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    results.iter().all(|r| r.passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::MeshGen {
            mesh_n,
            cylinder: _,
            seed,
            out,
        } => mesh_gen(mesh_n, seed, &out).map(|_| true),
        Command::Manufactured(flags) => {
            let cfg = RunConfig::resolve(&flags.merged()?, &MANUFACTURED)?;
            manufactured(&cfg).map(|_| true)
        }
        Command::Cylinder(flags) => {
            let cfg = RunConfig::resolve(&flags.merged()?, &CYLINDER)?;
            cylinder_run(&cfg).map(|_| true)
        }
        Command::Check { seed } => {
            let mut results = run_checks(seed);
            results.extend(run_fem_checks(seed)?);
            Ok(print_table(&results))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
