//! Algebraic facts behind the stability analysis of variable-step BDF2,
//! as executable checks.

use crate::error::{Error, Result};
use crate::fem::SparseMatrix;

/// Inner product used by the energy functionals.
pub trait InnerProduct {
    fn inner(&self, a: &[f64], b: &[f64]) -> f64;

    fn norm_sq(&self, a: &[f64]) -> f64 {
        self.inner(a, a)
    }
}

/// Plain `ℓ²` inner product.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl InnerProduct for Euclidean {
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

impl InnerProduct for SparseMatrix {
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.bilinear(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub alpha: f64,
    pub kappa: f64,
}

impl StabilityParams {
    pub fn new(gamma_lo: f64, gamma_hi: f64, alpha: f64, kappa: f64) -> Result<Self> {
        if !(0.0 < gamma_lo && gamma_lo < 1.0 && 1.0 < gamma_hi) {
            return Err(Error::InvalidArgument(format!(
                "ratio bounds must satisfy 0 < γ < 1 < Γ, got γ = {gamma_lo}, Γ = {gamma_hi}"
            )));
        }
        if !(1.0..=10.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("α must lie in [1, 10], got {alpha}")));
        }
        Ok(StabilityParams {
            gamma_lo,
            gamma_hi,
            alpha,
            kappa,
        })
    }
}

/// Terms of the energy identity at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger {
    pub g_prev: f64,
    pub g_next: f64,
    pub remainder: f64,
    pub c: (f64, f64, f64),
}

/// `(c₁, c₂, c₃)` for the ratios `ω_{n−1}`, `ω_n`.
pub fn cin_coefficients(omega_prev: f64, omega: f64) -> (f64, f64, f64) {
    let c1 = omega_prev / (2.0 * (1.0 + omega_prev)) - 0.25 + 1.0 - omega * (1.0 + omega) / 2.0;
    let c2 = 1.0 - omega * omega;
    let c3 = 0.25 - omega * omega * omega / (2.0 * (1.0 + omega));
    (c1, c2, c3)
}

/// `G_n = ω_{n−1}/(2(1+ω_{n−1}))‖e^n‖² + ¼‖2e^n − e^{n−1}‖²`
pub fn g_functional(e: &[f64], e_prev: &[f64], omega_prev: f64, ip: &impl InnerProduct) -> f64 {
    let w: Vec<f64> = e.iter().zip(e_prev).map(|(a, b)| 2.0 * a - b).collect();
    omega_prev / (2.0 * (1.0 + omega_prev)) * ip.norm_sq(e) + 0.25 * ip.norm_sq(&w)
}

/// Residual of
/// `(𝒟e^{n+1}, e^{n+1}) = G_{n+1} − G_n + ℛ_n + ω_n/(2(1+ω_n))‖e^{n+1} − ê^n‖²`.
pub fn energy_identity_residual(
    e_prev: &[f64],
    e: &[f64],
    e_next: &[f64],
    omega_prev: f64,
    omega: f64,
    ip: &impl InnerProduct,
) -> Result<(f64, EnergyLedger)> {
    for len in [e.len(), e_next.len()] {
        if len != e_prev.len() {
            return Err(Error::DimensionMismatch {
                expected: e_prev.len(),
                got: len,
            });
        }
    }
    let (ap, a0, am) = crate::timestepping::bdf2_weights(omega)?;
    let d: Vec<f64> = (0..e.len())
        .map(|i| ap * e_next[i] + a0 * e[i] + am * e_prev[i])
        .collect();
    let lhs = ip.inner(&d, e_next);
    let hat = crate::timestepping::extrapolate(e, e_prev, omega)?;
    let jump: Vec<f64> = e_next.iter().zip(&hat).map(|(a, b)| a - b).collect();
    let g_next = g_functional(e_next, e, omega, ip);
    let g_prev = g_functional(e, e_prev, omega_prev, ip);
    let c = cin_coefficients(omega_prev, omega);
    let remainder = c.0 * ip.norm_sq(e) - c.1 * ip.inner(e, e_prev) + c.2 * ip.norm_sq(e_prev);
    let rhs = g_next - g_prev + remainder + omega / (2.0 * (1.0 + omega)) * ip.norm_sq(&jump);
    Ok((
        lhs - rhs,
        EnergyLedger {
            g_prev,
            g_next,
            remainder,
            c,
        },
    ))
}

/// `p(x) = [x³(1+2x) + x(1+2x)(1+x)]/α − 17`
pub fn ratio_polynomial(x: f64, alpha: f64) -> f64 {
    (x * x * x * (1.0 + 2.0 * x) + x * (1.0 + 2.0 * x) * (1.0 + x)) / alpha - 17.0
}

/// Positive root of [`ratio_polynomial`], by bisection on `[0, 10]`.
pub fn gamma_star(alpha: f64) -> Result<f64> {
    if !(1.0..=10.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("α must lie in [1, 10], got {alpha}")));
    }
    let (mut lo, mut hi) = (0.0, 10.0);
    if ratio_polynomial(lo, alpha) >= 0.0 || ratio_polynomial(hi, alpha) <= 0.0 {
        return Err(Error::InvalidArgument(format!("no sign change of p on [0, 10] for α = {alpha}")));
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if ratio_polynomial(mid, alpha) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smaller eigenvalue of `[[1+x, −½], [−½, ¼]]`.
pub fn min_eigenvalue_curve(x: f64) -> f64 {
    let b = 5.0 + 4.0 * x;
    (b - (b * b - 16.0 * x).sqrt()) / 8.0
}

/// `Δt / h²`
pub fn cfl_diagnostic(dt: f64, h: f64) -> f64 {
    dt / (h * h)
}

/// Outcome of one check in [`run_checks`].
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Runs the algebraic checks with seeded random data.
pub fn run_checks(seed: u64) -> Vec<CheckResult> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..20);
        let mut v = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (a, b, c) = (v(), v(), v());
        let (w0, w1) = (rng.gen_range(0.2..5.0), rng.gen_range(0.2..5.0));
        let (r, led) = energy_identity_residual(&a, &b, &c, w0, w1, &Euclidean).expect("equal lengths");
        let scale = 1.0 + led.g_prev.abs() + led.g_next.abs() + led.remainder.abs();
        worst = worst.max(r.abs() / scale);
    }
    out.push(check(
        "energy identity",
        worst <= 1e-12,
        format!("max scaled residual {worst:.3e} over 1000 trials"),
    ));

    let c = cin_coefficients(1.0, 1.0);
    out.push(check(
        "unit-ratio coefficients",
        c == (0.0, 0.0, 0.0),
        format!("c(1,1) = ({}, {}, {})", c.0, c.1, c.2),
    ));

    for (alpha, bound) in [(1.0, 1.25), (5.0, 2.12), (10.0, 2.61)] {
        let (passed, detail) = match gamma_star(alpha) {
            Ok(g) => {
                let p = ratio_polynomial(g, alpha);
                (g > bound && p.abs() <= 1e-10, format!("Γ*({alpha}) = {g:.12}, p = {p:.2e}"))
            }
            Err(e) => (false, e.to_string()),
        };
        out.push(check("ratio root", passed, detail));
    }

    let mut min_ratio = f64::INFINITY;
    let mut ok = true;
    for i in 0..1000 {
        let x = 0.5 * i as f64 / 999.0;
        let l = min_eigenvalue_curve(x);
        ok &= l >= 0.14 * x;
        if x > 0.0 {
            min_ratio = min_ratio.min(l / x);
        }
    }
    out.push(check(
        "eigenvalue bound",
        ok,
        format!("min λ(x)/x = {min_ratio:.6} on 1000 points"),
    ));
    out
}

fn cholesky_succeeds(a: &SparseMatrix) -> bool {
    let mut l = a.to_dense();
    for j in 0..l.len() {
        let d = l[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..l.len() {
            l[i][j] = (l[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / d;
        }
    }
    true
}

/// Finite element property checks on small structured meshes.
pub fn run_fem_checks(seed: u64) -> Result<Vec<CheckResult>> {
    use crate::benchmarks::ManufacturedCase;
    use crate::fem::{FeSpace, Operators};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let space = FeSpace::unit_square(5)?;
    let ops = Operators::new(&space);
    let mask = space.dofs().dirichlet_mask();
    let field = |rng: &mut rand_chacha::ChaCha8Rng, constrained: bool| -> Vec<f64> {
        (0..ops.n_vel())
            .map(|i| if constrained && mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect()
    };
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (u, w) = (field(&mut rng, false), field(&mut rng, true));
        let n = ops.convection_matrix(&space, &u);
        let scale: f64 = n.values().iter().map(|x| x.abs()).sum();
        worst = worst.max(n.bilinear(&w, &w).abs() / scale);
    }
    out.push(check(
        "convection skew-symmetry",
        worst <= 1e-12,
        format!("max |b(u,w,w)|/scale {worst:.3e} over 100 fields"),
    ));

    let small = FeSpace::unit_square(2)?;
    let spd = cholesky_succeeds(&Operators::new(&small).mass_matrix());
    out.push(check(
        "mass SPD",
        spd,
        format!("dense Cholesky {}", if spd { "succeeded" } else { "failed" }),
    ));

    let g = ops.graddiv_matrix();
    let mut min_q = f64::INFINITY;
    for _ in 0..100 {
        let x = field(&mut rng, false);
        let xx: f64 = x.iter().map(|v| v * v).sum();
        min_q = min_q.min(g.bilinear(&x, &x) / xx);
    }
    out.push(check(
        "grad-div PSD",
        min_q >= -1e-12,
        format!("min Rayleigh quotient {min_q:.3e} over 100 fields"),
    ));

    let case = ManufacturedCase::new(1e-6);
    let mut div: f64 = 0.0;
    for _ in 0..100 {
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        let (_, grad, _) = case.velocity_derivatives(x, rng.gen_range(0.0..case.t_final));
        div = div.max((grad[0][0] + grad[1][1]).abs());
    }
    out.push(check(
        "manufactured divergence",
        div <= 1e-12,
        format!("max |div u| {div:.3e} at 100 points"),
    ));
    Ok(out)
}
