//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion that ran failed.
//!
//! ```text
//! cargo test -p gdflow-core --test acceptance -- --extended
//! ```
//!
//! Criterion 6 (cylinder benchmark, about ten minutes) only runs with
//! `--extended`.

use std::process::ExitCode;
use std::time::Instant;

use gdflow::adaptivity::StepControl;
use gdflow::analysis::run_checks;
use gdflow::benchmarks::{
    least_squares_slope, run_convergence_study, run_cylinder, run_manufactured, CylinderCase, ManufacturedCase,
};
use gdflow::fem::{FeSpace, Operators, SparseMatrix};
use gdflow::mesh::io::load_mesh;
use gdflow::timestepping::SchemeKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> gdflow::Result<Outcome> {
    Ok(Outcome { passed, detail })
}

const NS: [usize; 3] = [6, 12, 24];
const TOLS: [f64; 3] = [1e-4, 1e-5, 1e-6];

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
}

fn spatial_robustness() -> gdflow::Result<Outcome> {
    let rep = run_convergence_study(&NS, &TOLS, &[1e-6, 1e-8], 0.05, SchemeKind::SemiImplicit)?;
    let slope = rep.slope(1e-6).expect("three meshes");
    let (e6, e8) = (rep.errors(1e-6), rep.errors(1e-8));
    let spread = e6.iter().zip(&e8).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
    outcome(
        (1.7..=2.6).contains(&slope) && spread <= 0.1,
        format!(
            "slope {slope:.3} (want [1.7, 2.6]); errors nu=1e-6 [{}], nu=1e-8 [{}], max rel. diff {spread:.3}",
            fmt_list(&e6),
            fmt_list(&e8)
        ),
    )
}

fn supraconvergence() -> gdflow::Result<Outcome> {
    let rep = run_convergence_study(&NS, &TOLS, &[1e-2], 0.05, SchemeKind::SemiImplicit)?;
    let slope = rep.slope(1e-2).expect("three meshes");
    outcome(
        slope >= 2.7,
        format!(
            "slope {slope:.3} over N = 6, 12, 24 (want >= 2.7); errors [{}]",
            fmt_list(&rep.errors(1e-2))
        ),
    )
}

fn temporal_order() -> gdflow::Result<Outcome> {
    // at nu = 1e-6 the explicit convection on N = 24 needs dt <= T/2560
    let case = ManufacturedCase::new(0.05);
    let dt = |m: usize| case.t_final / m as f64;
    let mut passed = true;
    let mut detail = Vec::new();
    for scheme in [SchemeKind::Imex, SchemeKind::SemiImplicit] {
        let reference = run_manufactured(&case, 24, scheme, StepControl::Fixed { dt: dt(1280) })?;
        let mut diffs = Vec::new();
        for m in [80, 160, 320] {
            let run = run_manufactured(&case, 24, scheme, StepControl::Fixed { dt: dt(m) })?;
            let d: f64 = run.u.iter().zip(&reference.u).map(|(a, b)| (a - b) * (a - b)).sum();
            diffs.push(d.sqrt());
        }
        let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let fit = least_squares_slope(&[dt(80), dt(160), dt(320)], &diffs)?;
        passed &= orders.iter().all(|p| (p - 2.0).abs() <= 0.3);
        detail.push(format!(
            "{scheme}: orders {:.3}, {:.3} (fit {:.3})",
            orders[0],
            orders[1],
            fit
        ));
    }
    outcome(passed, format!("nu = 0.05, N = 24; {}", detail.join("; ")))
}

fn controller_behavior() -> gdflow::Result<Outcome> {
    let run = run_manufactured(&ManufacturedCase::new(1e-6), 12, SchemeKind::Imex, StepControl::Adaptive {
        tol_r: 1e-5,
    })?;
    let s = &run.summary;
    let attempts = s.accepted_steps + s.rejections;
    let rej = s.rejections as f64 / attempts as f64;
    let fac = s.factorizations as f64 / s.accepted_steps as f64;
    // startup ends once the step has grown out of its initial transient
    let (lo, hi) = run
        .log
        .accepted()
        .filter(|r| r.t > 0.2)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.dt), hi.max(r.dt)));
    let range_ok = lo >= 0.001 / 3.0 && hi <= 0.005 * 3.0;
    outcome(
        rej <= 0.05 && fac <= 0.05 && range_ok,
        format!(
            "IMEX N = 12: {} rejections of {attempts} attempts ({:.2}%), {} factorizations for {} steps ({:.2}%), dt in [{lo:.3e}, {hi:.3e}] for t > 0.2",
            s.rejections,
            100.0 * rej,
            s.factorizations,
            s.accepted_steps,
            100.0 * fac
        ),
    )
}

fn cfl_manifestation() -> gdflow::Result<Outcome> {
    let case = ManufacturedCase::new(1e-6);
    let control = StepControl::Adaptive { tol_r: 1e-4 };
    let mut steps = Vec::new();
    for scheme in [SchemeKind::Imex, SchemeKind::SemiImplicit] {
        for n in [24, 48] {
            steps.push(run_manufactured(&case, n, scheme, control)?.summary.accepted_steps as f64);
        }
    }
    let growth = steps[1] / steps[0];
    let change = (steps[3] - steps[2]) / steps[2];
    outcome(
        growth >= 1.5 && change.abs() <= 0.3,
        format!(
            "IMEX {} -> {} steps (x{growth:.2}), semi-implicit {} -> {} steps ({:+.1}%)",
            steps[0],
            steps[1],
            steps[2],
            steps[3],
            100.0 * change
        ),
    )
}

fn cylinder_benchmark() -> gdflow::Result<Outcome> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cylinder.mesh");
    let space = FeSpace::new(load_mesh(path)?)?;
    let run = run_cylinder(
        &space,
        &CylinderCase::default(),
        SchemeKind::Imex,
        StepControl::Adaptive { tol_r: 1e-4 },
        |_| {},
    )?;
    let s = &run.summary;
    let rel_cd = (s.cd_max - 2.950921575).abs() / 2.950921575;
    let rel_cl = (s.cl_max - 0.47795).abs() / 0.47795;
    let dt_cd = (s.t_cd_max - 3.93625).abs();
    let dt_cl = (s.t_cl_max - 5.693125).abs();
    let ddp = (s.dp8 + 0.1116).abs();
    outcome(
        rel_cd <= 0.03 && rel_cl <= 0.08 && dt_cd <= 0.02 && dt_cl <= 0.02 && ddp <= 0.02,
        format!(
            "cd_max {:.6} at {:.4} (rel {rel_cd:.4}), cl_max {:.6} at {:.4} (rel {rel_cl:.4}), dp8 {:.5}; {} steps, {} rejections",
            s.cd_max, s.t_cd_max, s.cl_max, s.t_cl_max, s.dp8, s.steps, s.rejections
        ),
    )
}

fn algebraic_suite() -> gdflow::Result<Outcome> {
    let checks = run_checks(20240601);
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    let detail = if failed.is_empty() {
        format!("{} checks", checks.len())
    } else {
        failed.join("; ")
    };
    outcome(failed.is_empty(), detail)
}

fn cholesky_ok(a: &SparseMatrix) -> bool {
    let mut l = a.to_dense();
    let n = l.len();
    for j in 0..n {
        let d = l[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let s = l[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / d;
        }
    }
    true
}

fn fem_suite() -> gdflow::Result<Outcome> {
    let space = FeSpace::unit_square(5)?;
    let ops = Operators::new(&space);
    let mask = space.dofs().dirichlet_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut field = |constrained: bool| -> Vec<f64> {
        (0..ops.n_vel())
            .map(|i| if constrained && mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect()
    };

    let mut skew: f64 = 0.0;
    for _ in 0..100 {
        let (u, w) = (field(false), field(true));
        let n = ops.convection_matrix(&space, &u);
        let scale: f64 = n.values().iter().map(|x| x.abs()).sum();
        skew = skew.max(n.bilinear(&w, &w).abs() / scale);
    }

    let mass_spd = cholesky_ok(&FeSpace::unit_square(2).map(|s| Operators::new(&s).mass_matrix())?);
    let g = ops.graddiv_matrix();
    let mut graddiv_min: f64 = f64::INFINITY;
    for _ in 0..100 {
        let x = field(false);
        let xx: f64 = x.iter().map(|v| v * v).sum();
        graddiv_min = graddiv_min.min(g.bilinear(&x, &x) / xx);
    }

    let case = ManufacturedCase::new(1e-6);
    let mut div: f64 = 0.0;
    for _ in 0..100 {
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        let (_, grad, _) = case.velocity_derivatives(x, rng.gen_range(0.0..4.0));
        div = div.max((grad[0][0] + grad[1][1]).abs());
    }

    outcome(
        skew <= 1e-12 && mass_spd && graddiv_min >= -1e-12 && div <= 1e-12,
        format!(
            "max |b(u,w,w)|/scale {skew:.2e}, mass Cholesky {}, min grad-div Rayleigh {graddiv_min:.2e}, max |div u| {div:.2e}",
            if mass_spd { "ok" } else { "failed" }
        ),
    )
}

fn main() -> ExitCode {
    let extended = std::env::args().any(|a| a == "--extended");
    let criteria: [(usize, &str, fn() -> gdflow::Result<Outcome>, bool); 8] = [
        (1, "spatial robustness", spatial_robustness, false),
        (2, "supraconvergence", supraconvergence, false),
        (3, "temporal order 2", temporal_order, false),
        (4, "controller behavior", controller_behavior, false),
        (5, "CFL manifestation", cfl_manifestation, false),
        (6, "cylinder benchmark", cylinder_benchmark, true),
        (7, "algebraic properties", algebraic_suite, false),
        (8, "FEM properties", fem_suite, false),
    ];
    let mut failures = 0;
    for (id, name, run, gated) in criteria {
        if gated && !extended {
            println!("criterion {id} ({name}): SKIPPED, pass --extended to run");
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!passed);
        println!(
            "criterion {id} ({name}): {} [{:.1} s] {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
