use super::quadrature::p2_values;
use super::space::FeSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

/// Coefficients of a finite element field in the nodal Lagrange basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FEFunction {
    kind: FieldKind,
    coeffs: Vec<f64>,
}

fn expected_len(space: &FeSpace, kind: FieldKind) -> usize {
    match kind {
        FieldKind::Velocity => space.dofs().n_vel_dofs(),
        FieldKind::Pressure => space.dofs().n_pr_dofs(),
    }
}

impl FEFunction {
    pub fn zeros(space: &FeSpace, kind: FieldKind) -> Self {
        FEFunction {
            kind,
            coeffs: vec![0.0; expected_len(space, kind)],
        }
    }

    pub fn from_coeffs(space: &FeSpace, kind: FieldKind, coeffs: Vec<f64>) -> Result<Self> {
        let expected = expected_len(space, kind);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(FEFunction { kind, coeffs })
    }

    pub fn interpolate_velocity(space: &FeSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let coords = space.dofs().coords();
        let n = coords.len();
        let mut coeffs = vec![0.0; 2 * n];
        for (i, &p) in coords.iter().enumerate() {
            let v = f(p);
            coeffs[i] = v[0];
            coeffs[n + i] = v[1];
        }
        FEFunction {
            kind: FieldKind::Velocity,
            coeffs,
        }
    }

    pub fn interpolate_pressure(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Self {
        let coeffs = space.mesh().nodes().iter().map(|&p| f(p)).collect();
        FEFunction {
            kind: FieldKind::Pressure,
            coeffs,
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `‖f‖₀` by quadrature.
    pub fn l2_norm(&self, space: &FeSpace) -> f64 {
        match self.kind {
            FieldKind::Velocity => velocity_l2_error(space, &self.coeffs, |_| [0.0, 0.0]),
            FieldKind::Pressure => pressure_l2_error(space, &self.coeffs, |_| 0.0),
        }
    }

    /// `‖f − g‖₀` for an analytic velocity field `g`.
    pub fn l2_error_velocity(&self, space: &FeSpace, g: impl Fn([f64; 2]) -> [f64; 2]) -> Result<f64> {
        self.require(FieldKind::Velocity)?;
        Ok(velocity_l2_error(space, &self.coeffs, g))
    }

    /// `‖f − g‖₀` for an analytic pressure field `g`.
    pub fn l2_error_pressure(&self, space: &FeSpace, g: impl Fn([f64; 2]) -> f64) -> Result<f64> {
        self.require(FieldKind::Pressure)?;
        Ok(pressure_l2_error(space, &self.coeffs, g))
    }

    /// Point value; for velocity the straight-sided element is used to locate
    /// the point.
    pub fn eval(&self, space: &FeSpace, p: [f64; 2]) -> Result<[f64; 2]> {
        let (t, l) = space.mesh().locate(p)?;
        match self.kind {
            FieldKind::Pressure => {
                let tri = space.mesh().triangles()[t];
                let v = (0..3).map(|k| l[k] * self.coeffs[tri[k]]).sum();
                Ok([v, 0.0])
            }
            FieldKind::Velocity => {
                let el = space.dofs().elements()[t];
                let n = space.dofs().n_p2_nodes();
                let phi = p2_values([l[1], l[2]]);
                let mut v = [0.0; 2];
                for k in 0..6 {
                    v[0] += phi[k] * self.coeffs[el[k]];
                    v[1] += phi[k] * self.coeffs[n + el[k]];
                }
                Ok(v)
            }
        }
    }

    fn require(&self, kind: FieldKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected a {kind:?} field, got {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

fn velocity_l2_error(space: &FeSpace, u: &[f64], g: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let n = space.dofs().n_p2_nodes();
    let phi = space.phi();
    let mut sum = 0.0;
    for (e, el) in space.dofs().elements().iter().enumerate() {
        let (jxw, pts) = (space.jxw(e), space.points(e));
        for q in 0..space.n_quad() {
            let ex = g(pts[q]);
            let mut v = [-ex[0], -ex[1]];
            for k in 0..6 {
                v[0] += phi[q][k] * u[el[k]];
                v[1] += phi[q][k] * u[n + el[k]];
            }
            sum += jxw[q] * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    sum.sqrt()
}

fn pressure_l2_error(space: &FeSpace, p: &[f64], g: impl Fn([f64; 2]) -> f64) -> f64 {
    let psi = space.psi();
    let mut sum = 0.0;
    for (e, tri) in space.mesh().triangles().iter().enumerate() {
        let (jxw, pts) = (space.jxw(e), space.points(e));
        for q in 0..space.n_quad() {
            let v: f64 = (0..3).map(|k| psi[q][k] * p[tri[k]]).sum::<f64>() - g(pts[q]);
            sum += jxw[q] * v * v;
        }
    }
    sum.sqrt()
}

/// Shifts `p` by a constant so that `∫ p = 0`.
pub fn recenter_pressure(p: &mut [f64], weights: &[f64]) {
    let area: f64 = weights.iter().sum();
    let mean = p.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / area;
    p.iter_mut().for_each(|v| *v -= mean);
}
