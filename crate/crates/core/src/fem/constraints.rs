//! Dirichlet data and elimination of constrained unknowns.

use super::assembly::Operators;
use super::space::FeSpace;
use super::sparse::{Pattern, SparseMatrix};
use crate::error::{Error, Result};
use crate::mesh::BoundaryTag;

/// Full velocity vector holding `g` at Dirichlet nodes and zero elsewhere.
pub fn dirichlet_values(space: &FeSpace, g: impl Fn(BoundaryTag, [f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let dofs = space.dofs();
    let n = dofs.n_p2_nodes();
    let mut u = vec![0.0; 2 * n];
    for (i, &p) in dofs.coords().iter().enumerate() {
        if let Some(tag) = dofs.node_tag(i) {
            let v = g(tag, p);
            u[i] = v[0];
            u[n + i] = v[1];
        }
    }
    u
}

/// A square system with the constrained rows and columns removed.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub free: Vec<usize>,
}

impl ConstrainedSystem {
    /// Full vector from a solution on the free unknowns.
    pub fn expand(&self, y: &[f64], values: &[f64]) -> Vec<f64> {
        let mut x = values.to_vec();
        for (&i, &v) in self.free.iter().zip(y) {
            x[i] = v;
        }
        x
    }
}

/// Eliminates unknowns with `mask[i]` set, fixing them to `values[i]` and
/// moving `K u_D` to the right-hand side. Symmetric input stays symmetric.
pub fn apply_dirichlet(k: &SparseMatrix, rhs: &[f64], mask: &[bool], values: &[f64]) -> Result<ConstrainedSystem> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::InvalidArgument("constrained system must be square".into()));
    }
    for len in [rhs.len(), mask.len(), values.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let lifted: Vec<f64> = values
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    let ku = k.mul_vec(&lifted);
    let free: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    let mut map = vec![usize::MAX; n];
    for (r, &i) in free.iter().enumerate() {
        map[i] = r;
    }
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    for &i in &free {
        for p in k.row_ptr()[i]..k.row_ptr()[i + 1] {
            let j = k.col_idx()[p];
            if map[j] != usize::MAX {
                col_idx.push(map[j]);
                vals.push(k.values()[p]);
            }
        }
        row_ptr.push(col_idx.len());
    }
    let mut matrix = SparseMatrix::from_csr(free.len(), free.len(), row_ptr, col_idx, vals)?;
    matrix.set_symmetric(k.is_symmetric());
    let rhs = free.iter().map(|&i| rhs[i] - ku[i]).collect();
    Ok(ConstrainedSystem { matrix, rhs, free })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    /// Velocity block `(c, d)`.
    Vel(u8, u8),
    /// `−Bᵀ` entry in a momentum row of component `d`.
    Grad(u8),
    /// `−B` entry in a continuity row, velocity column of component `d`.
    Div(u8),
}

/// Scalar weights of the velocity block `m M + ν A + μ G (+ N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeights {
    pub mass: f64,
    pub nu: f64,
    pub mu: f64,
}

/// Unknown layout of the Dirichlet-reduced Stokes-type saddle system
///
/// ```text
/// [ K_ff  −B_fᵀ ] [u_f]
/// [ −B_f    0   ] [p  ]
/// ```
///
/// over free velocity dofs and all pressure dofs but one, which is pinned to
/// zero. The continuity row is negated so the system is symmetric whenever
/// `K` is.
#[derive(Debug, Clone)]
pub struct SaddleLayout {
    n_vel: usize,
    n_pr: usize,
    free_vel: Vec<usize>,
    free_pr: Vec<usize>,
    vel_mask: Vec<bool>,
    pinned: usize,
    pattern: Pattern,
    sources: Vec<(Source, u32)>,
}

impl SaddleLayout {
    pub fn new(space: &FeSpace, ops: &Operators) -> Self {
        let dofs = space.dofs();
        let n = dofs.n_p2_nodes();
        let np = dofs.n_pr_dofs();
        let vel_mask = dofs.dirichlet_mask();
        let pinned = 0;

        let free_vel: Vec<usize> = (0..2 * n).filter(|&i| !vel_mask[i]).collect();
        let free_pr: Vec<usize> = (0..np).filter(|&a| a != pinned).collect();
        let mut vel_red = vec![usize::MAX; 2 * n];
        for (r, &i) in free_vel.iter().enumerate() {
            vel_red[i] = r;
        }
        let nfv = free_vel.len();
        let mut pr_red = vec![usize::MAX; np];
        for (r, &a) in free_pr.iter().enumerate() {
            pr_red[a] = nfv + r;
        }

        let s = ops.scalar_pattern();
        let d = ops.divergence_pattern();
        // pressure neighbours of each P2 node, with the position in `d`
        let mut dt: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for a in 0..np {
            for k in d.row(a) {
                dt[d.col_idx()[k]].push((a, k));
            }
        }

        let total = nfv + free_pr.len();
        let mut rows: Vec<Vec<(usize, Source, u32)>> = Vec::with_capacity(total);
        for &dof in &free_vel {
            let (c, i) = (dof / n, dof % n);
            let mut row = Vec::new();
            for dd in 0..2 {
                for k in s.row(i) {
                    let col = vel_red[dd * n + s.col_idx()[k]];
                    if col != usize::MAX {
                        row.push((col, Source::Vel(c as u8, dd as u8), k as u32));
                    }
                }
            }
            for &(a, k) in &dt[i] {
                if pr_red[a] != usize::MAX {
                    row.push((pr_red[a], Source::Grad(c as u8), k as u32));
                }
            }
            rows.push(row);
        }
        for &a in &free_pr {
            let mut row = Vec::new();
            for dd in 0..2 {
                for k in d.row(a) {
                    let col = vel_red[dd * n + d.col_idx()[k]];
                    if col != usize::MAX {
                        row.push((col, Source::Div(dd as u8), k as u32));
                    }
                }
            }
            rows.push(row);
        }

        let mut col_rows = Vec::with_capacity(total);
        let mut sources = Vec::new();
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            col_rows.push(row.iter().map(|e| e.0).collect());
            sources.extend(row.iter().map(|e| (e.1, e.2)));
        }
        let pattern = Pattern::from_rows(total, col_rows);
        debug_assert_eq!(pattern.nnz(), sources.len());

        SaddleLayout {
            n_vel: 2 * n,
            n_pr: np,
            free_vel,
            free_pr,
            vel_mask,
            pinned,
            pattern,
            sources,
        }
    }

    /// Size of the reduced system.
    pub fn dim(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn n_free_vel(&self) -> usize {
        self.free_vel.len()
    }

    pub fn free_velocity_dofs(&self) -> &[usize] {
        &self.free_vel
    }

    pub fn velocity_mask(&self) -> &[bool] {
        &self.vel_mask
    }

    pub fn pinned_pressure(&self) -> usize {
        self.pinned
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    /// Assembles the reduced matrix. `conv` holds scalar convection values
    /// added to both diagonal velocity blocks.
    pub fn matrix(&self, ops: &Operators, w: BlockWeights, conv: Option<&[f64]>) -> SparseMatrix {
        let mut values = vec![0.0; self.pattern.nnz()];
        self.fill(ops, w, conv, &mut values);
        SparseMatrix::from_pattern(&self.pattern, values, conv.is_none())
    }

    pub fn fill(&self, ops: &Operators, w: BlockWeights, conv: Option<&[f64]>, values: &mut [f64]) {
        let (m, a) = (ops.mass_values(), ops.stiffness_values());
        let g = [
            ops.graddiv_values(0, 0),
            ops.graddiv_values(0, 1),
            ops.graddiv_values(1, 0),
            ops.graddiv_values(1, 1),
        ];
        let b = [ops.divergence_values(0), ops.divergence_values(1)];
        for (v, &(src, k)) in values.iter_mut().zip(&self.sources) {
            let k = k as usize;
            *v = match src {
                Source::Vel(c, d) if c == d => {
                    let base = w.mass * m[k] + w.nu * a[k] + w.mu * g[3 * c as usize][k];
                    base + conv.map_or(0.0, |n| n[k])
                }
                Source::Vel(c, d) => w.mu * g[2 * c as usize + d as usize][k],
                Source::Grad(d) | Source::Div(d) => -b[d as usize][k],
            };
        }
    }

    /// Reduced right-hand side from full momentum and continuity vectors.
    pub fn restrict(&self, momentum: &[f64], continuity: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.free_vel.iter().map(|&i| momentum[i]).collect();
        r.extend(self.free_pr.iter().map(|&a| continuity[a]));
        r
    }

    /// Reduced vector of a full state.
    pub fn reduce(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let p0 = p[self.pinned];
        let mut y: Vec<f64> = self.free_vel.iter().map(|&i| u[i]).collect();
        y.extend(self.free_pr.iter().map(|&a| p[a] - p0));
        y
    }

    /// Full velocity (boundary values from `u_dirichlet`) and pressure, the
    /// pinned pressure set to zero.
    pub fn expand(&self, y: &[f64], u_dirichlet: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = u_dirichlet.to_vec();
        for (&i, &v) in self.free_vel.iter().zip(y) {
            u[i] = v;
        }
        let mut p = vec![0.0; self.n_pr];
        for (&a, &v) in self.free_pr.iter().zip(&y[self.free_vel.len()..]) {
            p[a] = v;
        }
        debug_assert_eq!(u.len(), self.n_vel);
        (u, p)
    }

    /// Full velocity vector from the velocity part of `y`, zero on the boundary.
    pub fn velocity_increment(&self, y: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_vel];
        for (&i, &v) in self.free_vel.iter().zip(y) {
            u[i] = v;
        }
        u
    }
}
