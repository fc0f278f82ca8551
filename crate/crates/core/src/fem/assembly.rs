//! Assembly of the Taylor–Hood operators.
//!
//! Mass, stiffness and convection act componentwise, so they are stored once
//! on the scalar P2 pattern and applied to both velocity components. The
//! grad-div operator couples components and is kept as four scalar blocks.

use super::space::FeSpace;
use super::sparse::{Pattern, SparseMatrix};

/// Velocity-independent operators of a space plus the element scatter maps
/// needed to assemble the convection matrix quickly.
#[derive(Debug, Clone)]
pub struct Operators {
    n: usize,
    np: usize,
    s: Pattern,
    d: Pattern,
    elem_s: Vec<[usize; 36]>,
    mass: Vec<f64>,
    stiff: Vec<f64>,
    graddiv: [Vec<f64>; 4],
    div: [Vec<f64>; 2],
    pressure_weights: Vec<f64>,
}

fn spmv_add(p: &Pattern, vals: &[f64], x: &[f64], y: &mut [f64]) {
    let (rp, ci) = (p.row_ptr(), p.col_idx());
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in rp[i]..rp[i + 1] {
            s += vals[k] * x[ci[k]];
        }
        *yi += s;
    }
}

impl Operators {
    pub fn new(space: &FeSpace) -> Self {
        let dofs = space.dofs();
        let n = dofs.n_p2_nodes();
        let np = dofs.n_pr_dofs();
        let elements = dofs.elements();

        let mut rows = vec![Vec::with_capacity(24); n];
        let mut prow = vec![Vec::with_capacity(24); np];
        for el in elements {
            for &i in el {
                rows[i].extend_from_slice(el);
            }
            for &a in &el[..3] {
                prow[a].extend_from_slice(el);
            }
        }
        let s = Pattern::from_rows(n, rows);
        let d = Pattern::from_rows(n, prow);

        let mut elem_s = Vec::with_capacity(elements.len());
        let mut elem_d = Vec::with_capacity(elements.len());
        for el in elements {
            let mut ms = [0usize; 36];
            for i in 0..6 {
                for j in 0..6 {
                    ms[6 * i + j] = s.find(el[i], el[j]).unwrap();
                }
            }
            let mut md = [0usize; 18];
            for a in 0..3 {
                for j in 0..6 {
                    md[6 * a + j] = d.find(el[a], el[j]).unwrap();
                }
            }
            elem_s.push(ms);
            elem_d.push(md);
        }

        let nnz = s.nnz();
        let mut mass = vec![0.0; nnz];
        let mut stiff = vec![0.0; nnz];
        let mut graddiv = [vec![0.0; nnz], vec![0.0; nnz], vec![0.0; nnz], vec![0.0; nnz]];
        let mut div = [vec![0.0; d.nnz()], vec![0.0; d.nnz()]];
        let mut pressure_weights = vec![0.0; np];
        let phi = space.phi();
        let psi = space.psi();
        for (e, el) in elements.iter().enumerate() {
            let (jxw, grads) = (space.jxw(e), space.grads(e));
            for q in 0..space.n_quad() {
                let (w, g, f) = (jxw[q], &grads[q], &phi[q]);
                for i in 0..6 {
                    for j in 0..6 {
                        let k = elem_s[e][6 * i + j];
                        mass[k] += w * f[i] * f[j];
                        stiff[k] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                        for c in 0..2 {
                            for dd in 0..2 {
                                graddiv[2 * c + dd][k] += w * g[i][c] * g[j][dd];
                            }
                        }
                    }
                }
                for a in 0..3 {
                    pressure_weights[el[a]] += w * psi[q][a];
                    for j in 0..6 {
                        let k = elem_d[e][6 * a + j];
                        div[0][k] += w * psi[q][a] * g[j][0];
                        div[1][k] += w * psi[q][a] * g[j][1];
                    }
                }
            }
        }

        Operators {
            n,
            np,
            s,
            d,
            elem_s,
            mass,
            stiff,
            graddiv,
            div,
            pressure_weights,
        }
    }

    /// Number of P2 nodes (velocity dofs per component).
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_vel(&self) -> usize {
        2 * self.n
    }

    pub fn n_pr(&self) -> usize {
        self.np
    }

    pub fn scalar_pattern(&self) -> &Pattern {
        &self.s
    }

    pub fn divergence_pattern(&self) -> &Pattern {
        &self.d
    }

    pub fn mass_values(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness_values(&self) -> &[f64] {
        &self.stiff
    }

    /// Grad-div block `(c, d)` on the scalar pattern, index `2c + d`.
    pub fn graddiv_values(&self, c: usize, d: usize) -> &[f64] {
        &self.graddiv[2 * c + d]
    }

    /// Divergence block for component `d`: entries `(ψ_a, ∂_d φ_j)`.
    pub fn divergence_values(&self, d: usize) -> &[f64] {
        &self.div[d]
    }

    /// `∫ ψ_a` for every pressure basis function.
    pub fn pressure_weights(&self) -> &[f64] {
        &self.pressure_weights
    }

    /// Applies a componentwise scalar operator to a velocity vector.
    pub fn apply_scalar(&self, vals: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; 2 * n];
        for c in 0..2 {
            spmv_add(&self.s, vals, &x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
        }
        y
    }

    pub fn apply_mass(&self, x: &[f64]) -> Vec<f64> {
        self.apply_scalar(&self.mass, x)
    }

    pub fn apply_stiffness(&self, x: &[f64]) -> Vec<f64> {
        self.apply_scalar(&self.stiff, x)
    }

    pub fn apply_graddiv(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; 2 * n];
        for c in 0..2 {
            for d in 0..2 {
                spmv_add(
                    &self.s,
                    &self.graddiv[2 * c + d],
                    &x[d * n..(d + 1) * n],
                    &mut y[c * n..(c + 1) * n],
                );
            }
        }
        y
    }

    /// `B u`: one entry `(ψ_a, ∇·u)` per pressure dof.
    pub fn apply_divergence(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; self.np];
        for d in 0..2 {
            spmv_add(&self.d, &self.div[d], &u[d * n..(d + 1) * n], &mut y);
        }
        y
    }

    /// `Bᵀ p`: entries `(p, ∇·φ)` per velocity dof.
    pub fn apply_divergence_transpose(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; 2 * n];
        let (rp, ci) = (self.d.row_ptr(), self.d.col_idx());
        for (a, &pa) in p.iter().enumerate() {
            for k in rp[a]..rp[a + 1] {
                y[ci[k]] += self.div[0][k] * pa;
                y[n + ci[k]] += self.div[1][k] * pa;
            }
        }
        y
    }

    /// `‖u‖₀` through the mass matrix.
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        let mu = self.apply_mass(u);
        let s = super::sparse::dot(u, &mu);
        if s.is_nan() { s } else { s.max(0.0).sqrt() }
    }

    /// Scalar convection values `∫ (w·∇φ_j + ½(∇·w)φ_j) φ_i` on the scalar
    /// pattern.
    pub fn convection_values(&self, space: &FeSpace, w: &[f64]) -> Vec<f64> {
        let mut vals = vec![0.0; self.s.nnz()];
        self.convection_values_into(space, w, &mut vals);
        vals
    }

    pub fn convection_values_into(&self, space: &FeSpace, w: &[f64], vals: &mut [f64]) {
        let n = self.n;
        vals.iter_mut().for_each(|v| *v = 0.0);
        let phi = space.phi();
        for (e, el) in space.dofs().elements().iter().enumerate() {
            let wl: [[f64; 6]; 2] = [el.map(|k| w[k]), el.map(|k| w[n + k])];
            let (jxw, grads) = (space.jxw(e), space.grads(e));
            let mut local = [0.0; 36];
            for q in 0..space.n_quad() {
                let (f, g) = (&phi[q], &grads[q]);
                let (mut wq, mut dv) = ([0.0; 2], 0.0);
                for k in 0..6 {
                    wq[0] += wl[0][k] * f[k];
                    wq[1] += wl[1][k] * f[k];
                    dv += wl[0][k] * g[k][0] + wl[1][k] * g[k][1];
                }
                let mut col = [0.0; 6];
                for j in 0..6 {
                    col[j] = wq[0] * g[j][0] + wq[1] * g[j][1] + 0.5 * dv * f[j];
                }
                for i in 0..6 {
                    let wi = jxw[q] * f[i];
                    for j in 0..6 {
                        local[6 * i + j] += wi * col[j];
                    }
                }
            }
            for (k, &v) in self.elem_s[e].iter().zip(&local) {
                vals[*k] += v;
            }
        }
    }

    /// Entries `b(w, w, φ)` for every velocity basis function `φ`.
    pub fn convection_vector(&self, space: &FeSpace, w: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; 2 * n];
        let phi = space.phi();
        for (e, el) in space.dofs().elements().iter().enumerate() {
            let wl: [[f64; 6]; 2] = [el.map(|k| w[k]), el.map(|k| w[n + k])];
            let (jxw, grads) = (space.jxw(e), space.grads(e));
            let mut local = [[0.0; 6]; 2];
            for q in 0..space.n_quad() {
                let (f, g) = (&phi[q], &grads[q]);
                let mut wq = [0.0; 2];
                let mut gw = [[0.0; 2]; 2];
                for k in 0..6 {
                    for c in 0..2 {
                        wq[c] += wl[c][k] * f[k];
                        gw[c][0] += wl[c][k] * g[k][0];
                        gw[c][1] += wl[c][k] * g[k][1];
                    }
                }
                let dv = gw[0][0] + gw[1][1];
                for c in 0..2 {
                    let val = jxw[q] * (wq[0] * gw[c][0] + wq[1] * gw[c][1] + 0.5 * dv * wq[c]);
                    for i in 0..6 {
                        local[c][i] += val * f[i];
                    }
                }
            }
            for c in 0..2 {
                for i in 0..6 {
                    r[c * n + el[i]] += local[c][i];
                }
            }
        }
        r
    }

    /// `(f, φ)` for every velocity basis function.
    pub fn load_vector(&self, space: &FeSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; 2 * n];
        let phi = space.phi();
        for (e, el) in space.dofs().elements().iter().enumerate() {
            let (jxw, pts) = (space.jxw(e), space.points(e));
            for q in 0..space.n_quad() {
                let fv = f(pts[q]);
                for i in 0..6 {
                    let wi = jxw[q] * phi[q][i];
                    r[el[i]] += wi * fv[0];
                    r[n + el[i]] += wi * fv[1];
                }
            }
        }
        r
    }

    /// Full velocity matrix from scalar blocks; `None` blocks are omitted.
    pub fn velocity_matrix(&self, blocks: [[Option<&[f64]>; 2]; 2], symmetric: bool) -> SparseMatrix {
        let n = self.n;
        let mut row_ptr = Vec::with_capacity(2 * n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let ci = self.s.col_idx();
        for row_blocks in &blocks {
            for i in 0..n {
                for (d, blk) in row_blocks.iter().enumerate() {
                    if let Some(v) = blk {
                        for k in self.s.row(i) {
                            col_idx.push(d * n + ci[k]);
                            values.push(v[k]);
                        }
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        let mut m = SparseMatrix::from_csr(2 * n, 2 * n, row_ptr, col_idx, values)
            .expect("block expansion preserves CSR invariants");
        m.set_symmetric(symmetric);
        m
    }

    pub fn mass_matrix(&self) -> SparseMatrix {
        let m = Some(self.mass.as_slice());
        self.velocity_matrix([[m, None], [None, m]], true)
    }

    pub fn stiffness_matrix(&self) -> SparseMatrix {
        let a = Some(self.stiff.as_slice());
        self.velocity_matrix([[a, None], [None, a]], true)
    }

    pub fn graddiv_matrix(&self) -> SparseMatrix {
        let g = |c: usize, d: usize| Some(self.graddiv[2 * c + d].as_slice());
        self.velocity_matrix([[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]], true)
    }

    pub fn divergence_matrix(&self) -> SparseMatrix {
        let n = self.n;
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let ci = self.d.col_idx();
        for a in 0..self.np {
            for d in 0..2 {
                for k in self.d.row(a) {
                    col_idx.push(d * n + ci[k]);
                    values.push(self.div[d][k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix::from_csr(self.np, 2 * n, row_ptr, col_idx, values)
            .expect("block expansion preserves CSR invariants")
    }

    pub fn convection_matrix(&self, space: &FeSpace, w: &[f64]) -> SparseMatrix {
        let v = self.convection_values(space, w);
        let b = Some(v.as_slice());
        self.velocity_matrix([[b, None], [None, b]], false)
    }
}

pub fn assemble_mass(space: &FeSpace) -> SparseMatrix {
    Operators::new(space).mass_matrix()
}

/// Velocity gradient-gradient form, not scaled by the viscosity.
pub fn assemble_stiffness(space: &FeSpace) -> SparseMatrix {
    Operators::new(space).stiffness_matrix()
}

pub fn assemble_graddiv(space: &FeSpace) -> SparseMatrix {
    Operators::new(space).graddiv_matrix()
}

/// Pressure-by-velocity block with entries `(ψ_a, ∇·φ_j)`.
pub fn assemble_divergence(space: &FeSpace) -> SparseMatrix {
    Operators::new(space).divergence_matrix()
}

/// Matrix of `v ↦ b(w, v, ·)`.
pub fn assemble_convection_matrix(space: &FeSpace, w: &[f64]) -> SparseMatrix {
    Operators::new(space).convection_matrix(space, w)
}

pub fn assemble_convection_vector(space: &FeSpace, w: &[f64]) -> Vec<f64> {
    Operators::new(space).convection_vector(space, w)
}
