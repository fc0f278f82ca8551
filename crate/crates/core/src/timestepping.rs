//! Variable-step BDF2 with explicit (IMEX) or linearly implicit
//! (semi-implicit) convection.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{
    dirichlet_values, recenter_pressure, BlockWeights, FeSpace, Operators, SaddleLayout, SparseMatrix,
};
use crate::linsolve::{Factorization, LinearSolver, SolveStats};
use crate::mesh::BoundaryTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Convection `b(û, û, ·)` on the right-hand side.
    Imex,
    /// Convection `b(û, u, ·)` in the matrix.
    SemiImplicit,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Imex => "imex",
            SchemeKind::SemiImplicit => "semi",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imex" => Ok(SchemeKind::Imex),
            "semi" | "semi-implicit" => Ok(SchemeKind::SemiImplicit),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scheme `{s}` (expected imex or semi)"
            ))),
        }
    }
}

/// Coefficients `(a₊, a₀, a₋)` of `𝒟u^{n+1} = a₊u^{n+1} + a₀u^n + a₋u^{n−1}`
/// for the step ratio `ω = Δt_n / Δt_{n−1}`.
pub fn bdf2_weights(omega: f64) -> Result<(f64, f64, f64)> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("step ratio must be positive, got {omega}")));
    }
    let s = 1.0 + omega;
    Ok((1.0 + omega / s, -s, omega * omega / s))
}

/// `û = (1 + ω)u^n − ωu^{n−1}`
pub fn extrapolate(u: &[f64], u_prev: &[f64], omega: f64) -> Result<Vec<f64>> {
    if u.len() != u_prev.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: u_prev.len(),
        });
    }
    Ok(u.iter()
        .zip(u_prev)
        .map(|(a, b)| (1.0 + omega) * a - omega * b)
        .collect())
}

/// Data of a flow problem needed by the time stepper.
pub trait FlowProblem {
    fn boundary_velocity(&self, tag: BoundaryTag, x: [f64; 2], t: f64) -> [f64; 2];

    fn forcing(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn has_forcing(&self) -> bool {
        false
    }
}

/// Time difference operator of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDerivative {
    /// `u^{n+1} − u^n`
    Euler,
    /// Variable-step BDF2 with ratio `omega`.
    Bdf2 { omega: f64 },
}

impl TimeDerivative {
    pub fn weights(self) -> Result<(f64, f64, f64)> {
        match self {
            TimeDerivative::Euler => Ok((1.0, -1.0, 0.0)),
            TimeDerivative::Bdf2 { omega } => bdf2_weights(omega),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convection {
    Explicit,
    Implicit,
    /// Drops the nonlinear term (Stokes).
    Omitted,
}

/// Two retained levels of a run at `t_n`.
#[derive(Debug, Clone)]
pub struct StepState {
    pub t: f64,
    pub dt: f64,
    pub dt_prev: f64,
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub p: Vec<f64>,
}

impl StepState {
    pub fn omega(&self) -> f64 {
        self.dt / self.dt_prev
    }
}

/// Reduced saddle system of one step together with the Dirichlet lift.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub u_dirichlet: Vec<f64>,
    pub symmetric: bool,
}

/// Solution of one step before the controller decides on it.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Reduced solution vector, kept to extrapolate later initial guesses.
    pub y: Vec<f64>,
    pub stats: SolveStats,
}

/// Assembles and solves single time steps of one problem on one space.
pub struct Stepper<'a> {
    space: &'a FeSpace,
    ops: &'a Operators,
    problem: &'a dyn FlowProblem,
    layout: SaddleLayout,
    nu: f64,
    mu: f64,
    scheme: SchemeKind,
    implicit_first_step: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(
        space: &'a FeSpace,
        ops: &'a Operators,
        problem: &'a dyn FlowProblem,
        nu: f64,
        mu: f64,
        scheme: SchemeKind,
    ) -> Result<Self> {
        if !(nu >= 0.0) || !(mu >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "viscosity and grad-div parameter must be nonnegative (nu = {nu}, mu = {mu})"
            )));
        }
        Ok(Stepper {
            space,
            ops,
            problem,
            layout: SaddleLayout::new(space, ops),
            nu,
            mu,
            scheme,
            implicit_first_step: false,
        })
    }

    /// Lets the semi-implicit scheme treat convection implicitly on the
    /// first step too. Off by default.
    pub fn with_implicit_first_step(mut self, on: bool) -> Self {
        self.implicit_first_step = on;
        self
    }

    pub fn space(&self) -> &FeSpace {
        self.space
    }

    pub fn ops(&self) -> &Operators {
        self.ops
    }

    pub fn layout(&self) -> &SaddleLayout {
        &self.layout
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Convection treatment of the scheme on a regular step.
    pub fn convection(&self) -> Convection {
        match self.scheme {
            SchemeKind::Imex => Convection::Explicit,
            SchemeKind::SemiImplicit => Convection::Implicit,
        }
    }

    /// System for `u^{n+1}` at `t_next = t_n + dt`.
    ///
    /// The velocity block is `(a₊/Δt)M + νA + μG`, plus `N(û)` for implicit
    /// convection; the right-hand side is
    /// `(f, φ) − M(a₀u^n + a₋u^{n−1})/Δt − b(û, û, φ)` (explicit convection
    /// only) minus the lift of the boundary data.
    pub fn build_system(
        &self,
        t_next: f64,
        dt: f64,
        deriv: TimeDerivative,
        conv: Convection,
        u: &[f64],
        u_prev: Option<&[f64]>,
    ) -> Result<SaddleSystem> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
        }
        let nv = self.ops.n_vel();
        if u.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, got: u.len() });
        }
        let (ap, a0, am) = deriv.weights()?;
        let w_hat = match deriv {
            TimeDerivative::Euler => u.to_vec(),
            TimeDerivative::Bdf2 { omega } => {
                let up = u_prev.ok_or(Error::InsufficientHistory { need: 2, have: 1 })?;
                extrapolate(u, up, omega)?
            }
        };

        let u_d = dirichlet_values(self.space, |tag, x| self.problem.boundary_velocity(tag, x, t_next));
        let conv_vals = match conv {
            Convection::Implicit => Some(self.ops.convection_values(self.space, &w_hat)),
            _ => None,
        };
        let weights = BlockWeights {
            mass: ap / dt,
            nu: self.nu,
            mu: self.mu,
        };
        let matrix = self.layout.matrix(self.ops, weights, conv_vals.as_deref());

        let mut hist: Vec<f64> = u.iter().map(|v| a0 * v / dt).collect();
        if am != 0.0 {
            let up = u_prev.ok_or(Error::InsufficientHistory { need: 2, have: 1 })?;
            if up.len() != nv {
                return Err(Error::DimensionMismatch { expected: nv, got: up.len() });
            }
            for (h, v) in hist.iter_mut().zip(up) {
                *h += am * v / dt;
            }
        }
        let mut momentum: Vec<f64> = self.ops.apply_mass(&hist).iter().map(|v| -v).collect();
        if self.problem.has_forcing() {
            let f = self.ops.load_vector(self.space, |x| self.problem.forcing(x, t_next));
            for (m, fi) in momentum.iter_mut().zip(&f) {
                *m += fi;
            }
        }
        if conv == Convection::Explicit {
            let c = self.ops.convection_vector(self.space, &w_hat);
            for (m, ci) in momentum.iter_mut().zip(&c) {
                *m -= ci;
            }
        }
        let mut continuity = vec![0.0; self.ops.n_pr()];
        if u_d.iter().any(|&v| v != 0.0) {
            let mass = self.ops.apply_mass(&u_d);
            let stiff = self.ops.apply_stiffness(&u_d);
            let gd = self.ops.apply_graddiv(&u_d);
            for i in 0..nv {
                momentum[i] -= weights.mass * mass[i] + self.nu * stiff[i] + self.mu * gd[i];
            }
            if let Some(cv) = &conv_vals {
                let nu_d = self.ops.apply_scalar(cv, &u_d);
                for (m, v) in momentum.iter_mut().zip(&nu_d) {
                    *m -= v;
                }
            }
            continuity = self.ops.apply_divergence(&u_d);
        }
        let rhs = self.layout.restrict(&momentum, &continuity);
        let symmetric = matrix.is_symmetric();
        Ok(SaddleSystem {
            matrix,
            rhs,
            u_dirichlet: u_d,
            symmetric,
        })
    }

    /// Mass-matrix norm of the velocity part of a reduced vector.
    pub fn increment_norm(&self, y: &[f64]) -> f64 {
        self.ops.l2_norm(&self.layout.velocity_increment(y))
    }

    fn finish(&self, sys: &SaddleSystem, y: Vec<f64>, stats: SolveStats) -> Candidate {
        let (u, mut p) = self.layout.expand(&y, &sys.u_dirichlet);
        recenter_pressure(&mut p, self.ops.pressure_weights());
        Candidate { u, p, y, stats }
    }

    /// Solves with a fresh factorization.
    pub fn solve_direct(&self, sys: &SaddleSystem) -> Result<Candidate> {
        let f = Factorization::new(&sys.matrix, 0)?;
        let mut y = f.solve(&sys.rhs);
        // one correction step to clean up the pivoting error
        let mut r = sys.matrix.mul_vec(&y);
        for (ri, bi) in r.iter_mut().zip(&sys.rhs) {
            *ri = bi - *ri;
        }
        f.solve_in_place(&mut r);
        for (yi, ei) in y.iter_mut().zip(&r) {
            *yi += ei;
        }
        let stats = SolveStats {
            iterations: 0,
            refactored: true,
        };
        Ok(self.finish(sys, y, stats))
    }

    /// Solves with iterative refinement against the solver's stored factors.
    pub fn solve_with(
        &self,
        sys: &SaddleSystem,
        solver: &mut LinearSolver,
        guess: Vec<f64>,
        velocity_norm: f64,
        dt: f64,
        level: usize,
    ) -> Result<Candidate> {
        let threshold = solver.policy().threshold_for_step(velocity_norm, dt);
        let (y, stats) = solver.solve(&sys.matrix, &sys.rhs, guess, threshold, level, |e| {
            self.increment_norm(e)
        })?;
        Ok(self.finish(sys, y, stats))
    }

    /// Implicit Euler step from `(t0, u0)` with explicit convection `b(u⁰, u⁰, ·)`,
    /// used to start both schemes.
    pub fn first_step(
        &self,
        t0: f64,
        u0: &[f64],
        dt0: f64,
        solver: &mut LinearSolver,
        guess: Vec<f64>,
    ) -> Result<Candidate> {
        let conv = if self.implicit_first_step && self.scheme == SchemeKind::SemiImplicit {
            Convection::Implicit
        } else {
            Convection::Explicit
        };
        let sys = self.build_system(t0 + dt0, dt0, TimeDerivative::Euler, conv, u0, None)?;
        self.solve_with(&sys, solver, guess, self.ops.l2_norm(u0), dt0, 0)
    }

    /// Candidate `u^{n+1}` of order `k` from the state at `t_n`. Order 1 is
    /// an Euler step with `û = u^n`.
    pub fn advance(
        &self,
        state: &StepState,
        k: usize,
        solver: &mut LinearSolver,
        guess: Vec<f64>,
        level: usize,
    ) -> Result<Candidate> {
        let deriv = match k {
            1 => TimeDerivative::Euler,
            2 => TimeDerivative::Bdf2 { omega: state.omega() },
            _ => return Err(Error::InvalidArgument(format!("order {k} not supported"))),
        };
        let sys = self.build_system(
            state.t + state.dt,
            state.dt,
            deriv,
            self.convection(),
            &state.u,
            Some(&state.u_prev),
        )?;
        self.solve_with(&sys, solver, guess, self.ops.l2_norm(&state.u), state.dt, level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::RefinePolicy;

    struct Still;

    impl FlowProblem for Still {
        fn boundary_velocity(&self, _: BoundaryTag, _: [f64; 2], _: f64) -> [f64; 2] {
            [0.0, 0.0]
        }
    }

    #[test]
    fn weights_at_unit_ratio() {
        assert_eq!(bdf2_weights(1.0).unwrap(), (1.5, -2.0, 0.5));
        assert!(bdf2_weights(0.0).is_err());
        assert!(bdf2_weights(-1.0).is_err());
    }

    #[test]
    fn weights_differentiate_quadratics_exactly() {
        for &(omega, dt_prev) in &[(0.3, 0.1), (1.0, 0.02), (2.7, 0.05), (4.9, 0.013)] {
            let t_prev = 0.37;
            let t = t_prev + dt_prev;
            let dt = omega * dt_prev;
            let t_next = t + dt;
            let (ap, a0, am) = bdf2_weights(omega).unwrap();
            assert!((ap + a0 + am).abs() < 1e-15);
            let d = (ap * t_next * t_next + a0 * t * t + am * t_prev * t_prev) / dt;
            assert!((d - 2.0 * t_next).abs() < 1e-12, "omega = {omega}");
        }
    }

    #[test]
    fn extrapolation() {
        let (u, v) = ([1.0, 2.0], [0.5, -1.0]);
        assert_eq!(extrapolate(&u, &v, 1.0).unwrap(), vec![1.5, 5.0]);
        assert_eq!(extrapolate(&u, &v, 0.0).unwrap(), u.to_vec());
        assert!(extrapolate(&u, &[1.0], 1.0).is_err());
        // linear-in-time data: u(t) = 3 - 2t at t = 0.2, 0.5, predicted at 1.1
        let omega = 0.6 / 0.3;
        let hat = extrapolate(&[3.0 - 1.0], &[3.0 - 0.4], omega).unwrap();
        assert!((hat[0] - (3.0 - 2.2)).abs() < 1e-14);
    }

    #[test]
    fn quiescent_step_stays_at_rest() {
        let space = FeSpace::unit_square(3).unwrap();
        let ops = Operators::new(&space);
        for scheme in [SchemeKind::Imex, SchemeKind::SemiImplicit] {
            let st = Stepper::new(&space, &ops, &Still, 0.0, 0.0, scheme).unwrap();
            let zero = vec![0.0; ops.n_vel()];
            let sys = st
                .build_system(0.1, 0.1, TimeDerivative::Bdf2 { omega: 1.0 }, st.convection(), &zero, Some(&zero))
                .unwrap();
            assert!(sys.rhs.iter().all(|&v| v == 0.0));
            let c = st.solve_direct(&sys).unwrap();
            assert!(c.u.iter().all(|&v| v == 0.0));
            let mut solver = LinearSolver::new(RefinePolicy::new(1e-4));
            let c1 = st.first_step(0.0, &zero, 0.01, &mut solver, vec![0.0; st.layout().dim()]).unwrap();
            assert!(c1.u.iter().chain(&c1.p).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn imex_system_is_symmetric() {
        let space = FeSpace::unit_square(3).unwrap();
        let ops = Operators::new(&space);
        let st = Stepper::new(&space, &ops, &Still, 0.01, 0.05, SchemeKind::Imex).unwrap();
        let u: Vec<f64> = (0..ops.n_vel()).map(|i| (i as f64 * 0.37).sin()).collect();
        let sys = st
            .build_system(0.2, 0.05, TimeDerivative::Bdf2 { omega: 1.3 }, Convection::Explicit, &u, Some(&u))
            .unwrap();
        assert!(sys.symmetric);
        assert!(sys.matrix.asymmetry() <= 1e-14);
        assert!(matches!(
            st.build_system(0.2, 0.0, TimeDerivative::Euler, Convection::Explicit, &u, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn semi_implicit_matrix_adds_convection() {
        let space = FeSpace::unit_square(3).unwrap();
        let ops = Operators::new(&space);
        let u: Vec<f64> = (0..ops.n_vel()).map(|i| (i as f64 * 0.21).cos()).collect();
        let up: Vec<f64> = u.iter().map(|v| 0.9 * v).collect();
        let deriv = TimeDerivative::Bdf2 { omega: 0.8 };
        let imex = Stepper::new(&space, &ops, &Still, 0.01, 0.05, SchemeKind::Imex).unwrap();
        let semi = Stepper::new(&space, &ops, &Still, 0.01, 0.05, SchemeKind::SemiImplicit).unwrap();
        let a = imex.build_system(0.3, 0.04, deriv, Convection::Explicit, &u, Some(&up)).unwrap();
        let b = semi.build_system(0.3, 0.04, deriv, Convection::Implicit, &u, Some(&up)).unwrap();
        assert!(!b.symmetric);
        let w_hat = extrapolate(&u, &up, 0.8).unwrap();
        let conv = ops.convection_values(&space, &w_hat);
        let w = BlockWeights { mass: bdf2_weights(0.8).unwrap().0 / 0.04, nu: 0.01, mu: 0.05 };
        let expect = semi.layout().matrix(&ops, w, Some(&conv));
        assert_eq!(b.matrix.values(), expect.values());
        let diff: f64 = b.matrix.values().iter().zip(a.matrix.values()).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 0.0);
    }
}
