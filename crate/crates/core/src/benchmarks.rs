//! Problem definitions and drivers: a manufactured solution on the unit
//! square and the flow around a cylinder in a channel.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::adaptivity::{integrate, AcceptedStep, IntegrationOptions, RunLog, RunSummary, StepControl};
use crate::error::{Error, Result};
use crate::fem::{BlockWeights, FEFunction, FeSpace, FieldKind, Operators, SaddleLayout};
use crate::linsolve::Factorization;
use crate::mesh::cylinder::{CENTER, HEIGHT, RADIUS};
use crate::mesh::BoundaryTag;
use crate::timestepping::{FlowProblem, SchemeKind, Stepper};

/// Discrete initial velocity of the manufactured case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialValue {
    /// Stokes projection of `u(·, 0)`, discretely divergence-free.
    #[default]
    StokesProjection,
    /// Lagrange interpolant of `u(·, 0)`.
    Interpolant,
}

/// Manufactured solution with stream function `8a(t) sin²(πx) (y(1−y))²`
/// and pressure `a(t) sin(πx) cos(πy)`, `a(t) = (6 + 4cos 4t)/10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub nu: f64,
    pub mu: f64,
    pub t_final: f64,
    /// Freezes the amplitude at `a = 1`.
    pub steady: bool,
    pub initial: InitialValue,
}

impl ManufacturedCase {
    pub fn new(nu: f64) -> Self {
        ManufacturedCase {
            nu,
            mu: 0.05,
            t_final: 4.0,
            steady: false,
            initial: InitialValue::StokesProjection,
        }
    }

    pub fn steady(nu: f64) -> Self {
        ManufacturedCase {
            steady: true,
            ..Self::new(nu)
        }
    }

    pub fn amplitude(&self, t: f64) -> (f64, f64) {
        if self.steady {
            (1.0, 0.0)
        } else {
            ((6.0 + 4.0 * (4.0 * t).cos()) / 10.0, -1.6 * (4.0 * t).sin())
        }
    }

    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (a, _) = self.amplitude(t);
        let s = (PI * x[0]).sin();
        let g = x[1] * (1.0 - x[1]);
        let gp = 1.0 - 2.0 * x[1];
        [
            16.0 * a * s * s * g * gp,
            -8.0 * a * PI * (2.0 * PI * x[0]).sin() * g * g,
        ]
    }

    pub fn pressure(&self, x: [f64; 2], t: f64) -> f64 {
        self.amplitude(t).0 * (PI * x[0]).sin() * (PI * x[1]).cos()
    }

    pub fn exact_fields(&self, x: [f64; 2], t: f64) -> ([f64; 2], f64) {
        (self.velocity(x, t), self.pressure(x, t))
    }

    /// `(u, ∇u, Δu)` with `∇u[c][d] = ∂_d u_c`.
    pub fn velocity_derivatives(&self, x: [f64; 2], t: f64) -> ([f64; 2], [[f64; 2]; 2], [f64; 2]) {
        let (a, _) = self.amplitude(t);
        let s = (PI * x[0]).sin();
        let (s2, c2) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[0]).cos());
        let g = x[1] * (1.0 - x[1]);
        let gp = 1.0 - 2.0 * x[1];
        let u = [16.0 * a * s * s * g * gp, -8.0 * a * PI * s2 * g * g];
        let grad = [
            [16.0 * a * PI * s2 * g * gp, 16.0 * a * s * s * (gp * gp - 2.0 * g)],
            [-16.0 * a * PI * PI * c2 * g * g, -16.0 * a * PI * s2 * g * gp],
        ];
        let lap = [
            32.0 * a * PI * PI * c2 * g * gp - 96.0 * a * s * s * gp,
            32.0 * a * PI.powi(3) * s2 * g * g - 16.0 * a * PI * s2 * (gp * gp - 2.0 * g),
        ];
        (u, grad, lap)
    }

    /// Discrete velocity at time `t` according to `self.initial`.
    pub fn initial_velocity(&self, space: &FeSpace, ops: &Operators, t: f64) -> Result<Vec<f64>> {
        match self.initial {
            InitialValue::Interpolant => Ok(FEFunction::interpolate_velocity(space, |x| self.velocity(x, t)).into_coeffs()),
            InitialValue::StokesProjection => stokes_projection(space, ops, |x| {
                let (_, _, lap) = self.velocity_derivatives(x, t);
                [-lap[0], -lap[1]]
            }),
        }
    }

    /// `∂_t u − νΔu + (u·∇)u + ∇p`
    pub fn forcing(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (a, da) = self.amplitude(t);
        let (u, g, lap) = self.velocity_derivatives(x, t);
        let gp = [
            a * PI * (PI * x[0]).cos() * (PI * x[1]).cos(),
            -a * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
        ];
        let mut f = [0.0; 2];
        for c in 0..2 {
            f[c] = da / a * u[c] - self.nu * lap[c] + u[0] * g[c][0] + u[1] * g[c][1] + gp[c];
        }
        f
    }
}

impl FlowProblem for ManufacturedCase {
    fn boundary_velocity(&self, _: BoundaryTag, x: [f64; 2], t: f64) -> [f64; 2] {
        self.velocity(x, t)
    }

    fn forcing(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        ManufacturedCase::forcing(self, x, t)
    }

    fn has_forcing(&self) -> bool {
        true
    }
}

/// Velocity part `s_h` of the Stokes problem
/// `(∇s_h, ∇v) − (∇·v, l_h) = (g, v)`, `(∇·s_h, q) = 0` with zero boundary
/// data. For `g = −Δu` with `u` solenoidal and vanishing on the boundary this
/// is the Stokes projection of `u`.
pub fn stokes_projection(space: &FeSpace, ops: &Operators, g: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    let layout = SaddleLayout::new(space, ops);
    let a = layout.matrix(ops, BlockWeights { mass: 0.0, nu: 1.0, mu: 0.0 }, None);
    let f = Factorization::new(&a, 0)?;
    let rhs = layout.restrict(&ops.load_vector(space, g), &vec![0.0; ops.n_pr()]);
    let mut y = f.solve(&rhs);
    let mut r = a.mul_vec(&y);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    f.solve_in_place(&mut r);
    for (yi, ei) in y.iter_mut().zip(&r) {
        *yi += ei;
    }
    Ok(layout.expand(&y, &vec![0.0; ops.n_vel()]).0)
}

/// `6/0.41² sin(πt/8) y(0.41 − y)`
pub fn inflow_profile(y: f64, t: f64) -> [f64; 2] {
    [6.0 / (HEIGHT * HEIGHT) * (PI * t / 8.0).sin() * y * (HEIGHT - y), 0.0]
}

/// Channel flow around a cylinder driven by a parabolic profile on both
/// vertical sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderCase {
    pub nu: f64,
    pub mu: f64,
    pub t_final: f64,
}

impl Default for CylinderCase {
    fn default() -> Self {
        CylinderCase {
            nu: 1e-3,
            mu: 0.01,
            t_final: 8.0,
        }
    }
}

impl FlowProblem for CylinderCase {
    fn boundary_velocity(&self, tag: BoundaryTag, x: [f64; 2], t: f64) -> [f64; 2] {
        match tag {
            BoundaryTag::Inflow => inflow_profile(x[1], t),
            BoundaryTag::NoSlip | BoundaryTag::Square => [0.0, 0.0],
        }
    }
}

/// Test fields and probe points for drag, lift and pressure difference.
#[derive(Debug, Clone)]
pub struct FunctionalProbe {
    pub v_drag: Vec<f64>,
    pub v_lift: Vec<f64>,
    pub front: [f64; 2],
    pub back: [f64; 2],
    // M v, A v and B v for both test fields
    mass_v: [Vec<f64>; 2],
    stiff_v: [Vec<f64>; 2],
    div_v: [Vec<f64>; 2],
}

impl FunctionalProbe {
    pub fn new(space: &FeSpace, ops: &Operators) -> Result<Self> {
        let dofs = space.dofs();
        let n = dofs.n_p2_nodes();
        let mut v_drag = vec![0.0; 2 * n];
        let mut v_lift = vec![0.0; 2 * n];
        let mut count = 0;
        for (i, p) in dofs.coords().iter().enumerate() {
            let r = ((p[0] - CENTER[0]).powi(2) + (p[1] - CENTER[1]).powi(2)).sqrt();
            if dofs.node_tag(i) == Some(BoundaryTag::NoSlip) && (r - RADIUS).abs() < 1e-8 {
                v_drag[i] = 1.0;
                v_lift[n + i] = 1.0;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidMesh("mesh has no nodes on the cylinder".into()));
        }
        let mass_v = [ops.apply_mass(&v_drag), ops.apply_mass(&v_lift)];
        let stiff_v = [ops.apply_stiffness(&v_drag), ops.apply_stiffness(&v_lift)];
        let div_v = [ops.apply_divergence(&v_drag), ops.apply_divergence(&v_lift)];
        Ok(FunctionalProbe {
            v_drag,
            v_lift,
            front: [CENTER[0] - RADIUS, CENTER[1]],
            back: [CENTER[0] + RADIUS, CENTER[1]],
            mass_v,
            stiff_v,
            div_v,
        })
    }

    /// `c = −20[(d, v) + ν(∇u, ∇v) + b(u, u, v) − (p, ∇·v)]` for `v = v_d, v_l`,
    /// `d` being the discrete time derivative.
    pub fn drag_lift(&self, space: &FeSpace, ops: &Operators, nu: f64, d: &[f64], u: &[f64], p: &[f64]) -> (f64, f64) {
        let conv = ops.convection_vector(space, u);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let tests = [&self.v_drag, &self.v_lift];
        let mut c = [0.0; 2];
        for k in 0..2 {
            let s = dot(d, &self.mass_v[k]) + nu * dot(u, &self.stiff_v[k]) + dot(&conv, tests[k])
                - dot(p, &self.div_v[k]);
            c[k] = -20.0 * s;
        }
        (c[0], c[1])
    }

    /// Drag and lift at an accepted level, with the derivative of the step
    /// that produced it.
    pub fn drag_lift_at(&self, space: &FeSpace, ops: &Operators, nu: f64, step: &AcceptedStep) -> Result<(f64, f64)> {
        let d = step.time_derivative()?;
        Ok(self.drag_lift(space, ops, nu, &d, step.u, step.p))
    }

    /// `p(front) − p(back)`
    pub fn pressure_difference(&self, space: &FeSpace, p: &[f64]) -> Result<f64> {
        pressure_difference(space, p, self.front, self.back)
    }
}

/// `p(a) − p(b)` for a P1 pressure.
pub fn pressure_difference(space: &FeSpace, p: &[f64], a: [f64; 2], b: [f64; 2]) -> Result<f64> {
    let f = FEFunction::from_coeffs(space, FieldKind::Pressure, p.to_vec())?;
    Ok(f.eval(space, a)?[0] - f.eval(space, b)?[0])
}

/// Least-squares slope of `log₁₀ e` against `log₁₀ h`.
pub fn least_squares_slope(h: &[f64], e: &[f64]) -> Result<f64> {
    if h.len() != e.len() || h.len() < 2 {
        return Err(Error::InvalidArgument("slope needs at least two (h, error) pairs".into()));
    }
    if h.iter().chain(e).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("slope needs positive sizes and errors".into()));
    }
    let x: Vec<f64> = h.iter().map(|v| v.log10()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.log10()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope needs distinct mesh sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Final state and statistics of a manufactured-solution run.
#[derive(Debug, Clone)]
pub struct ManufacturedRun {
    /// Subdivisions per side.
    pub n: usize,
    pub h: f64,
    /// `‖u_h − I_h u(T)‖₀`
    pub error: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub omegas: Vec<f64>,
    pub summary: RunSummary,
    pub log: RunLog,
}

/// Runs the manufactured case on the `n × n` square from `case.initial`.
pub fn run_manufactured(case: &ManufacturedCase, n: usize, scheme: SchemeKind, control: StepControl) -> Result<ManufacturedRun> {
    let space = FeSpace::unit_square(n)?;
    let ops = Operators::new(&space);
    run_manufactured_on(&space, &ops, case, scheme, control)
}

pub fn run_manufactured_on(
    space: &FeSpace,
    ops: &Operators,
    case: &ManufacturedCase,
    scheme: SchemeKind,
    control: StepControl,
) -> Result<ManufacturedRun> {
    let stepper = Stepper::new(space, ops, case, case.nu, case.mu, scheme)?;
    let u0 = case.initial_velocity(space, ops, 0.0)?;
    let p0 = FEFunction::interpolate_pressure(space, |x| case.pressure(x, 0.0)).into_coeffs();
    let opts = IntegrationOptions {
        t0: 0.0,
        t_final: case.t_final,
        control,
        max_dt: None,
    };
    let mut omegas = Vec::new();
    let mut last_dt = None;
    let res = integrate(&stepper, u0, p0, &opts, |s| {
        if let Some(prev) = last_dt {
            omegas.push(s.dt / prev);
        }
        last_dt = Some(s.dt);
        Ok(())
    })?;
    let exact = FEFunction::interpolate_velocity(space, |x| case.velocity(x, res.t)).into_coeffs();
    let diff: Vec<f64> = res.u.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(ManufacturedRun {
        n: ((space.mesh().num_triangles() / 2) as f64).sqrt().round() as usize,
        h: space.h_max(),
        error: ops.l2_norm(&diff),
        u: res.u,
        p: res.p,
        omegas,
        summary: res.summary,
        log: res.log,
    })
}

/// Fixed-step run, the controller disabled.
pub fn run_fixed_step(case: &ManufacturedCase, n: usize, dt: f64, scheme: SchemeKind) -> Result<ManufacturedRun> {
    run_manufactured(case, n, scheme, StepControl::Fixed { dt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub nu: f64,
    pub tol: f64,
    pub error: f64,
    pub steps: usize,
    pub rejections: usize,
    pub factorizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// `(ν, slope)` over all meshes of that viscosity.
    pub slopes: Vec<(f64, f64)>,
}

impl ConvergenceReport {
    pub fn slope(&self, nu: f64) -> Option<f64> {
        self.slopes.iter().find(|s| s.0 == nu).map(|s| s.1)
    }

    pub fn errors(&self, nu: f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.nu == nu).map(|r| r.error).collect()
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "N,h,nu,tol,error")?;
        for r in &self.rows {
            writeln!(w, "{},{:.11e},{:.11e},{:.11e},{:.11e}", r.n, r.h, r.nu, r.tol, r.error)?;
        }
        Ok(())
    }
}

/// Adaptive manufactured runs over meshes `ns` (paired with tolerances
/// `tols`) and viscosities `nus`.
pub fn run_convergence_study(
    ns: &[usize],
    tols: &[f64],
    nus: &[f64],
    mu: f64,
    scheme: SchemeKind,
) -> Result<ConvergenceReport> {
    if ns.len() != tols.len() {
        return Err(Error::InvalidArgument(format!(
            "{} meshes but {} tolerances",
            ns.len(),
            tols.len()
        )));
    }
    let jobs: Vec<(f64, usize, f64)> = nus
        .iter()
        .flat_map(|&nu| ns.iter().zip(tols).map(move |(&n, &tol)| (nu, n, tol)))
        .collect();
    let rows: Vec<ConvergenceRow> = jobs
        .par_iter()
        .map(|&(nu, n, tol)| {
            let case = ManufacturedCase { mu, ..ManufacturedCase::new(nu) };
            let run = run_manufactured(&case, n, scheme, StepControl::Adaptive { tol_r: tol }).map_err(|e| {
                Error::Integration {
                    t: f64::NAN,
                    msg: format!("N = {n}, nu = {nu}: {e}"),
                }
            })?;
            Ok(ConvergenceRow {
                n,
                h: run.h,
                nu,
                tol,
                error: run.error,
                steps: run.summary.accepted_steps,
                rejections: run.summary.rejections,
                factorizations: run.summary.factorizations,
            })
        })
        .collect::<Result<_>>()?;
    let mut slopes = Vec::new();
    if ns.len() >= 2 {
        for &nu in nus {
            let (h, e): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.nu == nu).map(|r| (r.h, r.error)).unzip();
            slopes.push((nu, least_squares_slope(&h, &e)?));
        }
    }
    Ok(ConvergenceReport { rows, slopes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderSample {
    pub t: f64,
    pub cd: f64,
    pub cl: f64,
    pub dp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderSummary {
    pub cd_max: f64,
    pub t_cd_max: f64,
    pub cl_max: f64,
    pub t_cl_max: f64,
    pub dp8: f64,
    pub steps: usize,
    pub rejections: usize,
    pub factorizations: usize,
}

impl CylinderSummary {
    pub fn from_series(series: &[CylinderSample], run: &RunSummary) -> Self {
        let mut s = CylinderSummary {
            cd_max: f64::NEG_INFINITY,
            t_cd_max: f64::NAN,
            cl_max: f64::NEG_INFINITY,
            t_cl_max: f64::NAN,
            dp8: series.last().map_or(f64::NAN, |r| r.dp),
            steps: run.accepted_steps,
            rejections: run.rejections,
            factorizations: run.factorizations,
        };
        for r in series {
            if r.cd > s.cd_max {
                s.cd_max = r.cd;
                s.t_cd_max = r.t;
            }
            if r.cl > s.cl_max {
                s.cl_max = r.cl;
                s.t_cl_max = r.t;
            }
        }
        s
    }

    pub fn write(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for (k, v) in [
            ("cd_max", self.cd_max),
            ("t_cd_max", self.t_cd_max),
            ("cl_max", self.cl_max),
            ("t_cl_max", self.t_cl_max),
            ("dp8", self.dp8),
        ] {
            writeln!(w, "{k} = {v:.11e}")?;
        }
        writeln!(w, "steps = {}", self.steps)?;
        writeln!(w, "rejections = {}", self.rejections)?;
        writeln!(w, "factorizations = {}", self.factorizations)
    }
}

#[derive(Debug, Clone)]
pub struct CylinderRun {
    pub series: Vec<CylinderSample>,
    pub summary: CylinderSummary,
    pub run: RunSummary,
    pub log: RunLog,
}

pub fn write_series_csv(series: &[CylinderSample], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "t,cd,cl,dp")?;
    for r in series {
        writeln!(w, "{:.11e},{:.11e},{:.11e},{:.11e}", r.t, r.cd, r.cl, r.dp)?;
    }
    Ok(())
}

/// Runs the cylinder case from rest, sampling the functionals at every
/// accepted level. `progress` sees each sample as it is produced.
pub fn run_cylinder(
    space: &FeSpace,
    case: &CylinderCase,
    scheme: SchemeKind,
    control: StepControl,
    mut progress: impl FnMut(&CylinderSample),
) -> Result<CylinderRun> {
    let ops = Operators::new(space);
    let probe = FunctionalProbe::new(space, &ops)?;
    let stepper = Stepper::new(space, &ops, case, case.nu, case.mu, scheme)?;
    let u0 = vec![0.0; ops.n_vel()];
    let p0 = vec![0.0; ops.n_pr()];
    let first = CylinderSample {
        t: 0.0,
        cd: 0.0,
        cl: 0.0,
        dp: probe.pressure_difference(space, &p0)?,
    };
    progress(&first);
    let mut series = vec![first];
    let opts = IntegrationOptions {
        t0: 0.0,
        t_final: case.t_final,
        control,
        max_dt: None,
    };
    let res = integrate(&stepper, u0, p0, &opts, |s| {
        let (cd, cl) = probe.drag_lift_at(space, &ops, case.nu, s)?;
        let dp = probe.pressure_difference(space, s.p)?;
        let sample = CylinderSample { t: s.t, cd, cl, dp };
        progress(&sample);
        series.push(sample);
        Ok(())
    })?;
    let summary = CylinderSummary::from_series(&series, &res.summary);
    Ok(CylinderRun {
        series,
        summary,
        run: res.summary,
        log: res.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_field_examples() {
        let c = ManufacturedCase::new(1e-6);
        assert_eq!(c.amplitude(0.0).0, 1.0);
        let (u, p) = c.exact_fields([0.5, 0.5], 0.0);
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15 && p.abs() < 1e-15);
        for t in [0.0, 0.7, 3.9] {
            for s in [0.0, 0.3, 0.77, 1.0] {
                for x in [[0.0, s], [1.0, s], [s, 0.0], [s, 1.0]] {
                    let u = c.velocity(x, t);
                    assert!(u[0].abs() < 1e-14 && u[1].abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn exact_velocity_is_divergence_free() {
        let c = ManufacturedCase::new(1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let (_, g, _) = c.velocity_derivatives(x, rng.gen_range(0.0..4.0));
            assert!((g[0][0] + g[1][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = ManufacturedCase::new(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..50 {
            let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
            let t = rng.gen_range(0.0..4.0);
            let (u, g, lap) = c.velocity_derivatives(x, t);
            let u0 = c.velocity(x, t);
            for k in 0..2 {
                assert!((u[k] - u0[k]).abs() < 1e-14);
            }
            let shift = |dx: f64, dy: f64| c.velocity([x[0] + dx, x[1] + dy], t);
            for comp in 0..2 {
                let dx = (shift(h, 0.0)[comp] - shift(-h, 0.0)[comp]) / (2.0 * h);
                let dy = (shift(0.0, h)[comp] - shift(0.0, -h)[comp]) / (2.0 * h);
                assert!((dx - g[comp][0]).abs() < 1e-6);
                assert!((dy - g[comp][1]).abs() < 1e-6);
                let l = (shift(h, 0.0)[comp] + shift(-h, 0.0)[comp] + shift(0.0, h)[comp] + shift(0.0, -h)[comp]
                    - 4.0 * u0[comp])
                    / (h * h);
                assert!((l - lap[comp]).abs() < 1e-3 * (1.0 + lap[comp].abs()));
            }
            // forcing against differences of the defining expression
            let ut = |s: f64| c.velocity(x, s);
            let pg = [
                (c.pressure([x[0] + h, x[1]], t) - c.pressure([x[0] - h, x[1]], t)) / (2.0 * h),
                (c.pressure([x[0], x[1] + h], t) - c.pressure([x[0], x[1] - h], t)) / (2.0 * h),
            ];
            let f = c.forcing(x, t);
            for comp in 0..2 {
                let dt = (ut(t + h)[comp] - ut(t - h)[comp]) / (2.0 * h);
                let dx = (shift(h, 0.0)[comp] - shift(-h, 0.0)[comp]) / (2.0 * h);
                let dy = (shift(0.0, h)[comp] - shift(0.0, -h)[comp]) / (2.0 * h);
                let l = (shift(h, 0.0)[comp] + shift(-h, 0.0)[comp] + shift(0.0, h)[comp] + shift(0.0, -h)[comp]
                    - 4.0 * u0[comp])
                    / (h * h);
                let fd = dt - c.nu * l + u0[0] * dx + u0[1] * dy + pg[comp];
                assert!((fd - f[comp]).abs() < 1e-4 * (1.0 + f[comp].abs()), "{fd} vs {}", f[comp]);
            }
        }
    }

    #[test]
    fn inviscid_forcing_splits() {
        let c = ManufacturedCase::new(0.0);
        let x = [0.31, 0.62];
        let t = 1.3;
        let (a, da) = c.amplitude(t);
        let (u, g, _) = c.velocity_derivatives(x, t);
        let f = c.forcing(x, t);
        let px = a * PI * (PI * x[0]).cos() * (PI * x[1]).cos();
        let expect = da / a * u[0] + u[0] * g[0][0] + u[1] * g[0][1] + px;
        assert!((f[0] - expect).abs() < 1e-14);
        let s = ManufacturedCase::steady(0.0);
        assert_eq!(s.amplitude(2.0), (1.0, 0.0));
    }

    #[test]
    fn inflow_examples() {
        assert_eq!(inflow_profile(0.2, 0.0)[0], 0.0);
        assert_eq!(inflow_profile(0.0, 4.0)[0], 0.0);
        assert!(inflow_profile(HEIGHT, 4.0)[0].abs() < 1e-15);
        assert!((inflow_profile(0.205, 4.0)[0] - 1.5).abs() < 1e-14);
        assert_eq!(inflow_profile(0.3, 1.0)[1], 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let h = [0.4, 0.2, 0.1];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((least_squares_slope(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert!(least_squares_slope(&h[..1], &e[..1]).is_err());
        assert!(least_squares_slope(&[0.1, 0.1], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pressure_difference_examples() {
        let s = FeSpace::unit_square(4).unwrap();
        let c = FEFunction::interpolate_pressure(&s, |_| 2.5).into_coeffs();
        assert!(pressure_difference(&s, &c, [0.15, 0.2], [0.25, 0.2]).unwrap().abs() < 1e-14);
        let x = FEFunction::interpolate_pressure(&s, |p| p[0]).into_coeffs();
        assert!((pressure_difference(&s, &x, [0.15, 0.2], [0.25, 0.2]).unwrap() + 0.1).abs() < 1e-14);
        assert!(pressure_difference(&s, &x, [1.15, 0.2], [0.25, 0.2]).is_err());
    }

    #[test]
    fn cylinder_boundary_data() {
        let c = CylinderCase::default();
        assert_eq!(c.boundary_velocity(BoundaryTag::NoSlip, [0.25, 0.2], 4.0), [0.0, 0.0]);
        assert_eq!(c.boundary_velocity(BoundaryTag::Inflow, [0.0, 0.205], 4.0), inflow_profile(0.205, 4.0));
        assert!(!c.has_forcing());
    }
}
