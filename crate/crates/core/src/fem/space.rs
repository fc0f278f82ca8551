use super::dofmap::DofMap;
use super::quadrature::{p1_values, p2_gradients, p2_values, QuadratureRule};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Mesh, dof numbering and per-element quadrature data.
///
/// The geometry map of each element is the P2 interpolant of its node
/// positions, which is affine except on elements touching the cylinder.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Mesh,
    dofs: DofMap,
    quad: QuadratureRule,
    phi: Vec<[f64; 6]>,
    psi: Vec<[f64; 3]>,
    jxw: Vec<f64>,
    grads: Vec<[[f64; 2]; 6]>,
    points: Vec<[f64; 2]>,
}

impl FeSpace {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let dofs = DofMap::new(&mesh);
        let quad = QuadratureRule::degree5();
        let nq = quad.len();
        let phi: Vec<[f64; 6]> = (0..nq).map(|q| p2_values(quad.reference_point(q))).collect();
        let psi: Vec<[f64; 3]> = (0..nq).map(|q| p1_values(quad.reference_point(q))).collect();
        let dphi: Vec<[[f64; 2]; 6]> =
            (0..nq).map(|q| p2_gradients(quad.reference_point(q))).collect();

        let ne = dofs.n_elements();
        let mut jxw = Vec::with_capacity(ne * nq);
        let mut grads = Vec::with_capacity(ne * nq);
        let mut points = Vec::with_capacity(ne * nq);
        for (e, el) in dofs.elements().iter().enumerate() {
            let x: [[f64; 2]; 6] = el.map(|n| dofs.coords()[n]);
            for q in 0..nq {
                let mut jac = [[0.0; 2]; 2];
                let mut p = [0.0; 2];
                for k in 0..6 {
                    for a in 0..2 {
                        p[a] += x[k][a] * phi[q][k];
                        for b in 0..2 {
                            jac[a][b] += x[k][a] * dphi[q][k][b];
                        }
                    }
                }
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                if det <= 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} has a non-positive Jacobian at a quadrature point"
                    )));
                }
                let mut g = [[0.0; 2]; 6];
                for k in 0..6 {
                    let [r0, r1] = dphi[q][k];
                    g[k] = [
                        (jac[1][1] * r0 - jac[1][0] * r1) / det,
                        (-jac[0][1] * r0 + jac[0][0] * r1) / det,
                    ];
                }
                jxw.push(quad.weights[q] * det);
                grads.push(g);
                points.push(p);
            }
        }
        Ok(FeSpace {
            mesh,
            dofs,
            quad,
            phi,
            psi,
            jxw,
            grads,
            points,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        FeSpace::new(Mesh::unit_square(n)?)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn n_quad(&self) -> usize {
        self.quad.len()
    }

    /// P2 basis values at each quadrature point (same on every element).
    pub fn phi(&self) -> &[[f64; 6]] {
        &self.phi
    }

    /// P1 basis values at each quadrature point.
    pub fn psi(&self) -> &[[f64; 3]] {
        &self.psi
    }

    /// Quadrature weights times Jacobian determinant on element `e`.
    pub fn jxw(&self, e: usize) -> &[f64] {
        let nq = self.quad.len();
        &self.jxw[e * nq..(e + 1) * nq]
    }

    /// Physical P2 gradients on element `e`, per quadrature point.
    pub fn grads(&self, e: usize) -> &[[[f64; 2]; 6]] {
        let nq = self.quad.len();
        &self.grads[e * nq..(e + 1) * nq]
    }

    /// Physical quadrature points on element `e`.
    pub fn points(&self, e: usize) -> &[[f64; 2]] {
        let nq = self.quad.len();
        &self.points[e * nq..(e + 1) * nq]
    }

    /// Measure of the discrete domain, curved edges included.
    pub fn area(&self) -> f64 {
        self.jxw.iter().sum()
    }

    /// Element diameter used in step-size diagnostics.
    pub fn h_max(&self) -> f64 {
        self.mesh.stats().h_max
    }
}
