//! Sparse LU with reuse of stale factorizations through iterative refinement.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};

use crate::error::{Error, Result};
use crate::fem::SparseMatrix;

/// LU factors of a square sparse matrix.
///
/// The CSR arrays of `A` are handed to faer as the CSC arrays of `Aᵀ`, so the
/// stored factors are those of `Aᵀ` and solves go through the transposed
/// solve. The symbolic analysis (fill-reducing ordering) is shareable between
/// matrices with the same pattern.
#[derive(Debug, Clone)]
pub struct Factorization {
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
    n: usize,
    nnz: usize,
    level: usize,
    symmetric: bool,
}

fn view(a: &SparseMatrix) -> Result<SparseColMatRef<'_, usize, f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument("factorization needs a square matrix".into()));
    }
    if a.nrows() == 0 {
        return Err(Error::Singular("empty system".into()));
    }
    let sym = SymbolicSparseColMatRef::new_checked(a.nrows(), a.ncols(), a.row_ptr(), None, a.col_idx());
    Ok(SparseColMatRef::new(sym, a.values()))
}

fn lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular { index } => {
            Error::Singular(format!("structurally singular at pivot {index}"))
        }
        LuError::Generic(e) => Error::Solver(format!("{e:?}")),
    }
}

impl Factorization {
    /// Factors `a`, tagging the result with the time level it belongs to.
    pub fn new(a: &SparseMatrix, level: usize) -> Result<Self> {
        let m = view(a)?;
        let symbolic = SymbolicLu::try_new(m.symbolic()).map_err(|e| Error::Solver(format!("{e:?}")))?;
        Self::numeric(symbolic, a, level)
    }

    /// Factors `a` reusing the ordering of `self`; `a` must share its pattern.
    pub fn refactor(&self, a: &SparseMatrix, level: usize) -> Result<Self> {
        if a.nrows() != self.n || a.nnz() != self.nnz {
            return Factorization::new(a, level);
        }
        Self::numeric(self.symbolic.clone(), a, level)
    }

    fn numeric(symbolic: SymbolicLu<usize>, a: &SparseMatrix, level: usize) -> Result<Self> {
        let m = view(a)?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), m).map_err(lu_error)?;
        let f = Factorization {
            symbolic,
            lu,
            n: a.nrows(),
            nnz: a.nnz(),
            level,
            symmetric: a.is_symmetric(),
        };
        // partial pivoting does not report exact zero pivots; catch them here
        let probe: Vec<f64> = (0..f.n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
        let x = f.solve(&a.mul_vec(&probe));
        let err = x
            .iter()
            .zip(&probe)
            .map(|(v, p)| (v - p).abs())
            .fold(0.0_f64, |m, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
        if !err.is_finite() || err > 1e-2 {
            return Err(Error::Singular(format!(
                "numerically singular matrix of order {} (probe error {err:.3e})",
                f.n
            )));
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let n = self.n;
        let rhs = MatMut::from_column_major_slice_mut(x, n, 1);
        self.lu.solve_transpose_in_place_with_conj(Conj::No, rhs);
    }
}

/// Stopping rule of the refinement loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinePolicy {
    pub tol_r: f64,
    pub tol_abs: f64,
    pub max_iters: usize,
}

impl RefinePolicy {
    pub fn new(tol_r: f64) -> Self {
        RefinePolicy {
            tol_r,
            tol_abs: (tol_r / 100.0).min(1e-8),
            max_iters: 5,
        }
    }

    /// Increment threshold `tol_abs (‖u‖₀ + 0.001)`.
    pub fn threshold(&self, velocity_norm: f64) -> f64 {
        self.tol_abs * (velocity_norm + 0.001)
    }

    /// [`threshold`](Self::threshold) capped at `2 Δt TOL_r (‖u‖₀ + 0.001)`.
    /// A velocity error `δ` moves the order-`k` error estimate by about
    /// `δ/((k+1)²Δt)`, so the cap keeps solver noise below half the
    /// tolerance on short steps.
    pub fn threshold_for_step(&self, velocity_norm: f64, dt: f64) -> f64 {
        self.threshold(velocity_norm)
            .min(2.0 * dt * self.tol_r * (velocity_norm + 0.001))
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub y: Vec<f64>,
    /// Corrections needed to reach an iterate that passed the stop test.
    pub iterations: usize,
    /// Fresh factorization of `A_n`, present when the stale one was abandoned.
    pub refactored: Option<Factorization>,
}

fn residual(a: &SparseMatrix, b: &[f64], y: &[f64], r: &mut Vec<f64>) {
    r.resize(b.len(), 0.0);
    a.mul_vec_into(y, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

fn relative_residual(a: &SparseMatrix, b: &[f64], y: &[f64]) -> f64 {
    let mut r = Vec::new();
    residual(a, b, y, &mut r);
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nr = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb == 0.0 {
        nr
    } else {
        nr / nb
    }
}

/// Solves `A_n y = b` by iterative refinement with the stale factors `f_m`.
///
/// Each sweep applies `y ← y + F_m⁻¹(b − A_n y)`. Corrections only shrink by
/// the contraction factor `ρ` of `I − F_m⁻¹A_n`, so a small correction alone
/// does not mean a small error when `ρ` is close to one. From the second
/// sweep on, `ρ` is estimated from consecutive corrections and the loop
/// stops once the remaining error `‖e_j‖ ρ/(1 − ρ)` is at most `threshold`.
/// Stopping on sweep `j` means the previous iterate was already accurate up
/// to the last correction, so `j − 1` iterations are reported. If
/// `max_iters + 1` sweeps do not converge, `A_n` is factored afresh and
/// solved directly.
pub fn solve_refined(
    a_n: &SparseMatrix,
    b: &[f64],
    f_m: &Factorization,
    y0: Vec<f64>,
    policy: &RefinePolicy,
    threshold: f64,
    increment_norm: impl Fn(&[f64]) -> f64,
) -> Result<RefineOutcome> {
    let n = a_n.nrows();
    for len in [b.len(), y0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if f_m.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f_m.dim(),
        });
    }
    let mut y = y0;
    let mut r = Vec::with_capacity(n);
    let mut last = f64::NAN;
    for j in 1..=policy.max_iters + 1 {
        residual(a_n, b, &y, &mut r);
        f_m.solve_in_place(&mut r);
        let inc = increment_norm(&r);
        if !inc.is_finite() {
            break;
        }
        for (yi, ei) in y.iter_mut().zip(&r) {
            *yi += ei;
        }
        let converged = if inc == 0.0 {
            true
        } else if j == 1 {
            false
        } else {
            let rho = inc / last;
            rho < 1.0 && inc * rho / (1.0 - rho) <= threshold && inc <= threshold
        };
        if converged {
            return Ok(RefineOutcome {
                y,
                iterations: j - 1,
                refactored: None,
            });
        }
        last = inc;
    }

    let fresh = f_m.refactor(a_n, f_m.level())?;
    let mut y = fresh.solve(b);
    for _ in 0..3 {
        if relative_residual(a_n, b, &y) <= 1e-10 {
            break;
        }
        residual(a_n, b, &y, &mut r);
        fresh.solve_in_place(&mut r);
        for (yi, ei) in y.iter_mut().zip(&r) {
            *yi += ei;
        }
    }
    let rel = relative_residual(a_n, b, &y);
    if !(rel <= 1e-10) {
        return Err(Error::Solver(format!(
            "refinement diverged after refactorization (relative residual {rel:.3e})"
        )));
    }
    Ok(RefineOutcome {
        y,
        iterations: policy.max_iters,
        refactored: Some(fresh),
    })
}

/// Holds the current factorization of a run and counts how often it is
/// rebuilt.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    current: Option<Factorization>,
    policy: RefinePolicy,
    factorizations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStats {
    pub iterations: usize,
    pub refactored: bool,
}

impl LinearSolver {
    pub fn new(policy: RefinePolicy) -> Self {
        LinearSolver {
            current: None,
            policy,
            factorizations: 0,
        }
    }

    pub fn policy(&self) -> &RefinePolicy {
        &self.policy
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn current(&self) -> Option<&Factorization> {
        self.current.as_ref()
    }

    /// Solves with the stored factors, creating or replacing them as needed.
    pub fn solve(
        &mut self,
        a: &SparseMatrix,
        b: &[f64],
        y0: Vec<f64>,
        threshold: f64,
        level: usize,
        increment_norm: impl Fn(&[f64]) -> f64,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let f = match self.current.take() {
            Some(f) if f.dim() == a.nrows() => f,
            _ => {
                self.factorizations += 1;
                Factorization::new(a, level)?
            }
        };
        let out = solve_refined(a, b, &f, y0, &self.policy, threshold, increment_norm);
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                self.current = Some(f);
                return Err(e);
            }
        };
        let refactored = out.refactored.is_some();
        self.current = Some(match out.refactored {
            Some(mut fresh) => {
                self.factorizations += 1;
                fresh.level = level;
                fresh
            }
            None => f,
        });
        Ok((
            out.y,
            SolveStats {
                iterations: out.iterations,
                refactored,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euclid(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Diagonally dominant random sparse matrix.
    fn random_system(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 8.0 + rng.gen::<f64>()));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_and_small_spd() {
        let f = Factorization::new(&SparseMatrix::identity(4), 0).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let x = Factorization::new(&a, 0).unwrap().solve(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonsymmetric_solve_uses_the_right_transpose() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        let x = Factorization::new(&a, 0).unwrap().solve(&[5.0, 2.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_sparse_residual() {
        let a = random_system(300, 11);
        let b: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
        let x = Factorization::new(&a, 0).unwrap().solve(&b);
        assert!(relative_residual(&a, &b, &x) <= 1e-12);
    }

    #[test]
    fn singular_matrices_are_rejected() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(Factorization::new(&a, 0), Err(Error::Singular(_))));
        let empty = SparseMatrix::from_triplets(0, 0, &[]).unwrap();
        assert!(Factorization::new(&empty, 0).is_err());
    }

    #[test]
    fn policy_constants() {
        assert_eq!(RefinePolicy::new(1e-4).tol_abs, 1e-8);
        assert!((RefinePolicy::new(1e-7).tol_abs - 1e-9).abs() < 1e-24);
        assert_eq!(RefinePolicy::new(1e-4).max_iters, 5);
    }

    #[test]
    fn exact_factor_converges_in_one_iteration() {
        let a = random_system(200, 3);
        let f = Factorization::new(&a, 0).unwrap();
        let b = vec![1.0; 200];
        let out = solve_refined(&a, &b, &f, vec![0.0; 200], &RefinePolicy::new(1e-4), 1e-9, euclid).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.refactored.is_none());
    }

    #[test]
    fn small_perturbation_needs_no_refactor() {
        let a_m = random_system(200, 5);
        let f = Factorization::new(&a_m, 0).unwrap();
        let mut a_n = a_m.clone();
        for (k, v) in a_n.values_mut().iter_mut().enumerate() {
            *v *= 1.0 + 1e-3 * ((k % 7) as f64 - 3.0) / 3.0;
        }
        let b = vec![1.0; 200];
        let out = solve_refined(&a_n, &b, &f, vec![0.0; 200], &RefinePolicy::new(1e-4), 1e-10, euclid).unwrap();
        assert!(out.refactored.is_none());
        assert!(out.iterations <= 5);
        assert!(relative_residual(&a_n, &b, &out.y) < 1e-9);
    }

    #[test]
    fn distant_matrix_forces_refactor() {
        let a_m = random_system(100, 8);
        let f = Factorization::new(&a_m, 0).unwrap();
        let mut a_n = a_m.clone();
        for v in a_n.values_mut() {
            *v = -*v * 3.0 + 0.5;
        }
        // keep it safely nonsingular
        for i in 0..100 {
            let k = a_n.row_ptr()[i]
                + a_n.col_idx()[a_n.row_ptr()[i]..a_n.row_ptr()[i + 1]]
                    .binary_search(&i)
                    .unwrap();
            a_n.values_mut()[k] = 50.0;
        }
        let b = vec![1.0; 100];
        let out = solve_refined(&a_n, &b, &f, vec![0.0; 100], &RefinePolicy::new(1e-4), 1e-12, euclid).unwrap();
        assert!(out.refactored.is_some());
        assert!(relative_residual(&a_n, &b, &out.y) <= 1e-10);
    }

    #[test]
    fn weak_contraction_is_not_mistaken_for_convergence() {
        // stale factors of 1000 A: every correction is a thousandth of the error
        let a = random_system(80, 12);
        let mut big = a.clone();
        big.values_mut().iter_mut().for_each(|v| *v *= 1000.0);
        let f = Factorization::new(&big, 0).unwrap();
        let b = vec![1.0; 80];
        let exact = Factorization::new(&a, 0).unwrap().solve(&b);
        let guess: Vec<f64> = exact.iter().map(|v| v + 1e-6).collect();
        let out = solve_refined(&a, &b, &f, guess, &RefinePolicy::new(1e-4), 1e-8, euclid).unwrap();
        let err = euclid(&out.y.iter().zip(&exact).map(|(x, y)| x - y).collect::<Vec<_>>());
        assert!(err <= 1e-8, "error {err:.3e}");
        assert!(out.refactored.is_some());
    }

    #[test]
    fn solver_counts_factorizations() {
        let a = random_system(50, 1);
        let mut s = LinearSolver::new(RefinePolicy::new(1e-4));
        let b = vec![1.0; 50];
        let (_, st) = s.solve(&a, &b, vec![0.0; 50], 1e-8, 0, euclid).unwrap();
        assert!(!st.refactored);
        assert_eq!(s.factorizations(), 1);
        let (_, st) = s.solve(&a, &b, vec![0.0; 50], 1e-8, 1, euclid).unwrap();
        assert!(!st.refactored);
        assert_eq!(s.factorizations(), 1);
    }
}
