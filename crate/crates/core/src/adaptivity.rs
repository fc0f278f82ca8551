//! Adaptive step-size and order control from divided-difference error
//! estimates.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use crate::analysis::cfl_diagnostic;
use crate::error::{Error, Result};
use crate::linsolve::{LinearSolver, RefinePolicy};
use crate::timestepping::{extrapolate, Candidate, StepState, Stepper, TimeDerivative};

pub const SAFETY: f64 = 0.9;
pub const MAX_GROWTH: f64 = 2.0;
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 10;
/// Smallest admissible step as a fraction of the integration interval.
pub const MIN_RELATIVE_STEP: f64 = 1e-10;

/// Divided difference `f[t₀, …, t_m]` of vector samples, coefficientwise.
pub fn divided_difference(times: &[f64], values: &[&[f64]]) -> Result<Vec<f64>> {
    if times.is_empty() || times.len() != values.len() {
        return Err(Error::InvalidArgument(format!(
            "divided difference needs matching times and values, got {} and {}",
            times.len(),
            values.len()
        )));
    }
    let len = values[0].len();
    if let Some(v) = values.iter().find(|v| v.len() != len) {
        return Err(Error::DimensionMismatch { expected: len, got: v.len() });
    }
    for i in 0..times.len() {
        for j in 0..i {
            if times[i] == times[j] {
                return Err(Error::RepeatedTime(times[i]));
            }
        }
    }
    let mut table: Vec<Vec<f64>> = values.iter().map(|v| v.to_vec()).collect();
    for order in 1..times.len() {
        for i in 0..times.len() - order {
            let dt = times[i + order] - times[i];
            let (lo, hi) = table.split_at_mut(i + 1);
            for (a, b) in lo[i].iter_mut().zip(&hi[0]) {
                *a = (b - *a) / dt;
            }
        }
    }
    Ok(table.swap_remove(0))
}

/// `EST_n = Δt_n/(t_{n+1} − t_{n−k}) · ‖Π_{i<k}(t_{n+1} − t_{n−i}) u[t_{n+1}, …, t_{n−k}]‖`
///
/// `times` and `values` run from the newest level `t_{n+1}` backwards and
/// must hold at least `k + 2` entries.
pub fn error_estimate(times: &[f64], values: &[&[f64]], k: usize, norm: impl Fn(&[f64]) -> f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("estimator order must be positive".into()));
    }
    if times.len() < k + 2 || values.len() < k + 2 {
        return Err(Error::InsufficientHistory {
            need: k + 2,
            have: times.len().min(values.len()),
        });
    }
    let dd = divided_difference(&times[..k + 2], &values[..k + 2])?;
    let prod: f64 = (1..=k).map(|i| times[0] - times[i]).product();
    let dt = times[0] - times[1];
    Ok(dt / (times[0] - times[k + 1]) * prod.abs() * norm(&dd))
}

/// `TOL_n = TOL_r (max(‖u^{n+1}‖, ‖u^n‖) + 0.001)`
pub fn tolerance(norm_next: f64, norm_now: f64, tol_r: f64) -> f64 {
    tol_r * (norm_next.max(norm_now) + 0.001)
}

/// `0.9 Δt (TOL/EST)^{1/(k+1)}`, never more than doubling the step.
pub fn step_update(dt: f64, est: f64, tol: f64, k: usize) -> f64 {
    if est <= 1e-14 * tol {
        return MAX_GROWTH * dt;
    }
    (SAFETY * dt * (tol / est).powf(1.0 / (k as f64 + 1.0))).min(MAX_GROWTH * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

pub fn accept_or_reject(est: f64, tol: f64) -> Decision {
    if est > tol {
        Decision::Reject
    } else {
        Decision::Accept
    }
}

/// Initial order and the first two step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Startup {
    pub order: usize,
    pub dt0: f64,
    pub dt1: f64,
}

pub fn startup(tol_r: f64) -> Result<Startup> {
    if !(tol_r > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol_r}")));
    }
    let dt = tol_r.sqrt() / 100.0;
    Ok(Startup { order: 1, dt0: dt, dt1: dt })
}

/// An accepted time level.
#[derive(Debug, Clone)]
pub struct Level {
    pub t: f64,
    /// Step that produced this level; zero for the initial level.
    pub dt: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub y: Vec<f64>,
}

/// The most recent accepted levels, newest first.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    levels: VecDeque<Level>,
    capacity: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        HistoryBuffer {
            levels: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, level: Level) -> Result<()> {
        if let Some(last) = self.levels.front() {
            if !(level.t > last.t) {
                return Err(Error::InvalidArgument(format!(
                    "history times must increase ({} after {})",
                    level.t, last.t
                )));
            }
        }
        if self.levels.len() == self.capacity {
            self.levels.pop_back();
        }
        self.levels.push_front(level);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `i` steps back from the newest.
    pub fn get(&self, i: usize) -> Option<&Level> {
        self.levels.get(i)
    }

    pub fn newest(&self) -> Option<&Level> {
        self.levels.front()
    }

    pub fn times(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.t).collect()
    }

    /// Keeps only the `n` oldest levels.
    pub fn rewind_to(&mut self, n: usize) {
        while self.levels.len() > n {
            self.levels.pop_front();
        }
    }

    /// EST of order `k` for a candidate at `t` on top of the stored levels.
    pub fn estimate(&self, t: f64, u: &[f64], k: usize, norm: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let mut times = vec![t];
        let mut values: Vec<&[f64]> = vec![u];
        for l in self.levels.iter().take(k + 1) {
            times.push(l.t);
            values.push(&l.u);
        }
        error_estimate(&times, &values, k, norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub order: usize,
    pub tol_r: f64,
    pub dt_next: f64,
    pub steps: usize,
    pub rejections: usize,
    pub consecutive_rejections: usize,
    pub safety: f64,
}

impl ControllerState {
    pub fn new(tol_r: f64) -> Result<Self> {
        let s = startup(tol_r)?;
        Ok(ControllerState {
            order: s.order,
            tol_r,
            dt_next: s.dt0,
            steps: 0,
            rejections: 0,
            consecutive_rejections: 0,
            safety: SAFETY,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// End time of the attempted step.
    pub t: f64,
    pub dt: f64,
    pub est: f64,
    pub tol: f64,
    pub accepted: bool,
    pub refine_iters: usize,
    pub refactored: bool,
    pub order: usize,
}

/// Append-only log of attempted steps.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    records: Vec<StepRecord>,
}

impl RunLog {
    pub fn push(&mut self, r: StepRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Marks the most recent accepted record as discarded.
    fn discard_last_accepted(&mut self) {
        if let Some(r) = self.records.iter_mut().rev().find(|r| r.accepted) {
            r.accepted = false;
        }
    }

    pub fn accepted(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,dt,est,tol,accepted,refine_iters,refactored")?;
        for r in &self.records {
            writeln!(
                w,
                "{:.11e},{:.11e},{:.11e},{:.11e},{},{},{}",
                r.t, r.dt, r.est, r.tol, r.accepted as u8, r.refine_iters, r.refactored as u8
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    Adaptive { tol_r: f64 },
    /// Constant steps; `dt` must divide the interval.
    Fixed { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub t0: f64,
    pub t_final: f64,
    pub control: StepControl,
    /// Defaults to a twentieth of the interval.
    pub max_dt: Option<f64>,
}

impl IntegrationOptions {
    pub fn adaptive(t_final: f64, tol_r: f64) -> Self {
        IntegrationOptions {
            t0: 0.0,
            t_final,
            control: StepControl::Adaptive { tol_r },
            max_dt: None,
        }
    }

    pub fn fixed(t_final: f64, dt: f64) -> Self {
        IntegrationOptions {
            t0: 0.0,
            t_final,
            control: StepControl::Fixed { dt },
            max_dt: None,
        }
    }
}

/// What the observer sees of an accepted level.
#[derive(Debug)]
pub struct AcceptedStep<'a> {
    pub index: usize,
    pub t: f64,
    pub dt: f64,
    pub order: usize,
    pub deriv: TimeDerivative,
    pub u: &'a [f64],
    pub p: &'a [f64],
    pub u_prev: &'a [f64],
    pub u_prev2: Option<&'a [f64]>,
}

impl AcceptedStep<'_> {
    /// `𝒟u^n / Δt_{n−1}` with the derivative of the step that produced `u^n`.
    pub fn time_derivative(&self) -> Result<Vec<f64>> {
        let (ap, a0, am) = self.deriv.weights()?;
        let mut d: Vec<f64> = self
            .u
            .iter()
            .zip(self.u_prev)
            .map(|(a, b)| (ap * a + a0 * b) / self.dt)
            .collect();
        if am != 0.0 {
            let u2 = self.u_prev2.ok_or(Error::InsufficientHistory { need: 3, have: 2 })?;
            for (di, v) in d.iter_mut().zip(u2) {
                *di += am * v / self.dt;
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub accepted_steps: usize,
    pub rejections: usize,
    pub factorizations: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Accepted-step count at which order 2 was first used.
    pub switch_step: Option<usize>,
    pub cfl_max: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone)]
pub struct IntegrationResult {
    pub t: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub log: RunLog,
    pub summary: RunSummary,
}

fn clip_step(t: f64, dt: f64, t_final: f64, max_dt: f64) -> f64 {
    let dt = dt.min(max_dt);
    let rest = t_final - t;
    if dt >= rest * (1.0 - 1e-12) {
        rest
    } else if rest - dt < 0.5 * dt {
        0.5 * rest
    } else {
        dt
    }
}

fn emit(
    hist: &HistoryBuffer,
    i: usize,
    index: usize,
    order: usize,
    deriv: TimeDerivative,
    observer: &mut impl FnMut(&AcceptedStep) -> Result<()>,
) -> Result<()> {
    let l = hist.get(i).expect("level present");
    let prev = hist.get(i + 1).expect("previous level present");
    observer(&AcceptedStep {
        index,
        t: l.t,
        dt: l.dt,
        order,
        deriv,
        u: &l.u,
        p: &l.p,
        u_prev: &prev.u,
        u_prev2: hist.get(i + 2).map(|l| l.u.as_slice()),
    })
}

fn check_finite(c: &Candidate, t: f64) -> Result<()> {
    if c.u.iter().chain(&c.p).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration {
            t,
            msg: "non-finite solution".into(),
        })
    }
}

/// Runs the scheme from `(u0, p0)` at `opts.t0` to `opts.t_final`.
///
/// The observer is called once per accepted level in time order. Under
/// adaptive control the first level is reported only after the first
/// estimated step has been accepted, since a rejection there restarts the
/// run from the initial level.
pub fn integrate(
    stepper: &Stepper,
    u0: Vec<f64>,
    p0: Vec<f64>,
    opts: &IntegrationOptions,
    mut observer: impl FnMut(&AcceptedStep) -> Result<()>,
) -> Result<IntegrationResult> {
    let span = opts.t_final - opts.t0;
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "final time {} must exceed initial time {}",
            opts.t_final, opts.t0
        )));
    }
    let nv = stepper.ops().n_vel();
    if u0.len() != nv {
        return Err(Error::DimensionMismatch { expected: nv, got: u0.len() });
    }
    if p0.len() != stepper.ops().n_pr() {
        return Err(Error::DimensionMismatch {
            expected: stepper.ops().n_pr(),
            got: p0.len(),
        });
    }
    let max_dt = opts.max_dt.unwrap_or(span / 20.0);
    let (adaptive, tol_r, fixed_steps) = match opts.control {
        StepControl::Adaptive { tol_r } => {
            startup(tol_r)?;
            (true, tol_r, 0)
        }
        StepControl::Fixed { dt } => {
            let n = (span / dt).round();
            if !(dt > 0.0) || n < 1.0 || ((n * dt - span) / span).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("fixed step {dt} does not divide {span}")));
            }
            (false, 1e-8, n as usize)
        }
    };
    let fixed_dt = span / fixed_steps.max(1) as f64;

    let ops = stepper.ops();
    let norm = |v: &[f64]| ops.l2_norm(v);
    let h = stepper.space().h_max();
    let mut solver = LinearSolver::new(RefinePolicy::new(tol_r));
    let mut ctl = ControllerState::new(tol_r)?;
    if !adaptive {
        ctl.dt_next = fixed_dt;
    }
    let mut log = RunLog::default();
    let mut hist = HistoryBuffer::new(4);
    let y0 = stepper.layout().reduce(&u0, &p0);
    hist.push(Level {
        t: opts.t0,
        dt: 0.0,
        u: u0,
        p: p0,
        y: y0,
    })?;

    let mut summary = RunSummary {
        accepted_steps: 0,
        rejections: 0,
        factorizations: 0,
        omega_min: f64::INFINITY,
        omega_max: 0.0,
        switch_step: None,
        cfl_max: 0.0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
    };
    let mut first_pending = false;
    let mut accepted = 0usize;
    let mut level_id = 0usize;

    let record = |c: &Candidate, t: f64, dt: f64, est: f64, tol: f64, accepted: bool, order: usize| StepRecord {
        t,
        dt,
        est,
        tol,
        accepted,
        refine_iters: c.stats.iterations,
        refactored: c.stats.refactored,
        order,
    };

    loop {
        let cur = hist.newest().expect("history never empty");
        let t = cur.t;
        if t >= opts.t_final {
            break;
        }
        level_id += 1;

        if hist.len() == 1 {
            let dt = if adaptive {
                clip_step(t, ctl.dt_next, opts.t_final, max_dt)
            } else {
                fixed_dt
            };
            let c = stepper.first_step(t, &cur.u, dt, &mut solver, cur.y.clone())?;
            check_finite(&c, t)?;
            let t_new = if adaptive { t + dt } else { opts.t0 + fixed_dt };
            let t_new = if (t_new - opts.t_final).abs() <= 1e-12 * span { opts.t_final } else { t_new };
            log.push(record(&c, t_new, dt, f64::NAN, f64::NAN, true, 1));
            hist.push(Level {
                t: t_new,
                dt,
                u: c.u,
                p: c.p,
                y: c.y,
            })?;
            accepted += 1;
            summary.cfl_max = summary.cfl_max.max(cfl_diagnostic(dt, h));
            if adaptive && t_new < opts.t_final {
                first_pending = true;
                ctl.dt_next = dt;
            } else {
                emit(&hist, 0, accepted, 1, TimeDerivative::Euler, &mut observer)?;
            }
            continue;
        }

        let prev = hist.get(1).expect("two levels");
        let k = if adaptive { ctl.order } else { 2 };
        let dt = if adaptive {
            clip_step(t, ctl.dt_next, opts.t_final, max_dt)
        } else {
            fixed_dt
        };
        let dt_prev = cur.dt;
        let omega = dt / dt_prev;
        let state = StepState {
            t,
            dt,
            dt_prev,
            u: cur.u.clone(),
            u_prev: prev.u.clone(),
            p: cur.p.clone(),
        };
        let guess = if k == 2 {
            extrapolate(&cur.y, &prev.y, omega)?
        } else {
            cur.y.clone()
        };
        let c = stepper.advance(&state, k, &mut solver, guess, level_id)?;
        check_finite(&c, t)?;
        let t_new = if adaptive {
            if (t + dt - opts.t_final).abs() <= 1e-12 * span { opts.t_final } else { t + dt }
        } else if accepted + 1 == fixed_steps {
            opts.t_final
        } else {
            opts.t0 + (accepted + 1) as f64 * fixed_dt
        };

        let (est, tol) = if adaptive {
            let est = hist.estimate(t_new, &c.u, k, norm)?;
            (est, tolerance(norm(&c.u), norm(&cur.u), tol_r))
        } else {
            (f64::NAN, f64::NAN)
        };

        if adaptive && accept_or_reject(est, tol) == Decision::Reject {
            log.push(record(&c, t_new, dt, est, tol, false, k));
            summary.rejections += 1;
            ctl.rejections += 1;
            ctl.consecutive_rejections += 1;
            if ctl.consecutive_rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::Integration {
                    t,
                    msg: format!(
                        "{} consecutive rejections, last dt = {dt:.3e}, EST = {est:.3e}, TOL = {tol:.3e}",
                        ctl.consecutive_rejections
                    ),
                });
            }
            let dt_new = step_update(dt, est, tol, k);
            if dt_new < MIN_RELATIVE_STEP * span {
                return Err(Error::Integration {
                    t,
                    msg: format!("step size underflow, dt = {dt_new:.3e}, EST = {est:.3e}, TOL = {tol:.3e}"),
                });
            }
            if hist.len() == 2 {
                hist.rewind_to(1);
                log.discard_last_accepted();
                accepted -= 1;
                first_pending = false;
            }
            ctl.dt_next = dt_new;
            continue;
        }

        ctl.consecutive_rejections = 0;
        let mut next_order = k;
        let mut dt_next = if adaptive { step_update(dt, est, tol, k) } else { fixed_dt };
        if adaptive && k == 1 && hist.len() >= 3 {
            let est2 = hist.estimate(t_new, &c.u, 2, norm)?;
            if est2 < est {
                next_order = 2;
                dt_next = step_update(dt, est2, tol, 2);
            }
        }
        log.push(record(&c, t_new, dt, est, tol, true, k));
        let deriv = if k == 1 {
            TimeDerivative::Euler
        } else {
            TimeDerivative::Bdf2 { omega }
        };
        hist.push(Level {
            t: t_new,
            dt,
            u: c.u,
            p: c.p,
            y: c.y,
        })?;
        accepted += 1;
        if k == 2 && summary.switch_step.is_none() {
            summary.switch_step = Some(accepted);
        }
        summary.omega_min = summary.omega_min.min(omega);
        summary.omega_max = summary.omega_max.max(omega);
        summary.cfl_max = summary.cfl_max.max(cfl_diagnostic(dt, h));
        if first_pending {
            emit(&hist, 1, accepted - 1, 1, TimeDerivative::Euler, &mut observer)?;
            first_pending = false;
        }
        emit(&hist, 0, accepted, k, deriv, &mut observer)?;
        ctl.order = next_order;
        ctl.dt_next = dt_next;
        ctl.steps = accepted;
    }

    for r in log.accepted() {
        summary.dt_min = summary.dt_min.min(r.dt);
        summary.dt_max = summary.dt_max.max(r.dt);
    }
    summary.accepted_steps = accepted;
    summary.factorizations = solver.factorizations();
    let last = hist.levels.pop_front().expect("history never empty");
    Ok(IntegrationResult {
        t: last.t,
        u: last.u,
        p: last.p,
        log,
        summary,
    })
}
