//! P2/P1 Taylor–Hood finite elements.

pub mod assembly;
pub mod constraints;
pub mod dofmap;
pub mod function;
pub mod quadrature;
pub mod space;
pub mod sparse;

pub use assembly::{
    assemble_convection_matrix, assemble_convection_vector, assemble_divergence, assemble_graddiv,
    assemble_mass, assemble_stiffness, Operators,
};
pub use constraints::{apply_dirichlet, dirichlet_values, BlockWeights, ConstrainedSystem, SaddleLayout};
pub use dofmap::DofMap;
pub use function::{recenter_pressure, FEFunction, FieldKind};
pub use quadrature::QuadratureRule;
pub use space::FeSpace;
pub use sparse::{Pattern, SparseMatrix};

#[cfg(test)]
mod tests {
    use super::sparse::dot;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> (FeSpace, Operators) {
        let s = FeSpace::unit_square(n).unwrap();
        let ops = Operators::new(&s);
        (s, ops)
    }

    fn constrained_random(s: &FeSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mask = s.dofs().dirichlet_mask();
        mask.iter().map(|&m| if m { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect()
    }

    #[test]
    fn mass_integrates_constants() {
        let (s, ops) = square(4);
        let m = ops.mass_matrix();
        let one = vec![1.0; s.dofs().n_vel_dofs()];
        assert!((m.bilinear(&one, &one) - 2.0).abs() < 1e-12);
        assert!(m.asymmetry() < 1e-14);
        assert!(m.is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let v: Vec<f64> = (0..one.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(m.bilinear(&v, &v) > 0.0);
        }
    }

    #[test]
    fn stiffness_examples() {
        let (s, ops) = square(3);
        let a = ops.stiffness_matrix();
        let c = FEFunction::interpolate_velocity(&s, |_| [2.0, -1.0]);
        assert!(a.mul_vec(c.coeffs()).iter().all(|v| v.abs() < 1e-12));
        let x = FEFunction::interpolate_velocity(&s, |p| [p[0], 0.0]);
        assert!((a.bilinear(x.coeffs(), x.coeffs()) - 1.0).abs() < 1e-10);
        assert!(a.asymmetry() < 1e-14);
    }

    #[test]
    fn graddiv_examples() {
        let (s, ops) = square(3);
        let g = ops.graddiv_matrix();
        let c = FEFunction::interpolate_velocity(&s, |_| [0.3, 0.7]);
        assert!(g.mul_vec(c.coeffs()).iter().all(|v| v.abs() < 1e-12));
        let sol = FEFunction::interpolate_velocity(&s, |p| [p[0], -p[1]]);
        assert!(g.bilinear(sol.coeffs(), sol.coeffs()).abs() < 1e-12);
        let sw = FEFunction::interpolate_velocity(&s, |p| [p[1], p[0]]);
        assert!(g.bilinear(sw.coeffs(), sw.coeffs()).abs() < 1e-12);
        let v = FEFunction::interpolate_velocity(&s, |p| [p[0], p[1]]);
        assert!((g.bilinear(v.coeffs(), v.coeffs()) - 4.0).abs() < 1e-10);
        assert!(g.asymmetry() < 1e-14);
        // operator form agrees with the expanded matrix
        let ag = ops.apply_graddiv(v.coeffs());
        let mg = g.mul_vec(v.coeffs());
        assert!(ag.iter().zip(&mg).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn divergence_examples() {
        let (s, ops) = square(3);
        let b = ops.divergence_matrix();
        assert_eq!((b.nrows(), b.ncols()), (16, s.dofs().n_vel_dofs()));
        let v = FEFunction::interpolate_velocity(&s, |p| [p[0], p[1]]);
        let one = vec![1.0; 16];
        assert!((dot(&one, &b.mul_vec(v.coeffs())) - 2.0).abs() < 1e-10);

        let c = FEFunction::interpolate_velocity(&s, |_| [1.0, -2.0]);
        assert!(b.mul_vec(c.coeffs()).iter().all(|x| x.abs() < 1e-12));

        // stream function x²y
        let df = FEFunction::interpolate_velocity(&s, |p| [p[0] * p[0], -2.0 * p[0] * p[1]]);
        assert!(b.mul_vec(df.coeffs()).iter().all(|x| x.abs() < 1e-10));
        let bv = ops.apply_divergence(v.coeffs());
        assert!(b.mul_vec(v.coeffs()).iter().zip(&bv).all(|(a, c)| (a - c).abs() < 1e-15));
        let p: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let bt = b.mul_transpose_vec(&p);
        let bt2 = ops.apply_divergence_transpose(&p);
        assert!(bt.iter().zip(&bt2).all(|(a, c)| (a - c).abs() < 1e-13));
    }

    #[test]
    fn convection_is_skew_on_constrained_fields() {
        let (s, ops) = square(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let zero = vec![0.0; s.dofs().n_vel_dofs()];
        assert!(ops.convection_values(&s, &zero).iter().all(|&v| v == 0.0));
        assert!(ops.convection_vector(&s, &zero).iter().all(|&v| v == 0.0));
        for _ in 0..5 {
            let w: Vec<f64> = (0..zero.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = constrained_random(&s, &mut rng);
            let v = constrained_random(&s, &mut rng);
            let n = ops.convection_matrix(&s, &w);
            let scale = dot(&w, &w).sqrt() * dot(&v, &v);
            assert!(n.bilinear(&v, &v).abs() <= 1e-12 * scale);
            assert!((n.bilinear(&v, &u) + n.bilinear(&u, &v)).abs() <= 1e-12 * scale);
            let nw = n.mul_vec(&w);
            let cv = ops.convection_vector(&s, &w);
            let norm = dot(&nw, &nw).sqrt();
            assert!(nw.iter().zip(&cv).all(|(a, b)| (a - b).abs() <= 1e-12 * norm));
            let wc = constrained_random(&s, &mut rng);
            let cw = ops.convection_vector(&s, &wc);
            assert!(dot(&cw, &wc).abs() < 1e-12 * dot(&wc, &wc).powf(1.5));
        }
    }

    #[test]
    fn interpolation_and_norms() {
        let (s, _) = square(4);
        let c = FEFunction::interpolate_velocity(&s, |_| [1.5, 1.5]);
        assert!(c.coeffs().iter().all(|&v| v == 1.5));
        let q = |p: [f64; 2]| [p[0] * p[1] + p[1] * p[1], 1.0 - p[0] * p[0]];
        assert!(FEFunction::interpolate_velocity(&s, q).l2_error_velocity(&s, q).unwrap() < 1e-12);
        let lin = |p: [f64; 2]| 2.0 * p[0] - p[1];
        assert!(FEFunction::interpolate_pressure(&s, lin).l2_error_pressure(&s, lin).unwrap() < 1e-12);
        assert_eq!(FEFunction::zeros(&s, FieldKind::Velocity).l2_norm(&s), 0.0);
        let one = FEFunction::interpolate_pressure(&s, |_| 1.0);
        assert!((one.l2_norm(&s) - 1.0).abs() < 1e-12);
        let x = FEFunction::interpolate_velocity(&s, |p| [p[0], 0.0]);
        assert!((x.l2_norm(&s) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_lift_reproduces_boundary_data() {
        let (s, ops) = square(3);
        let m = ops.mass_matrix();
        let mask = s.dofs().dirichlet_mask();
        let g = dirichlet_values(&s, |_, _| [0.4, -0.9]);
        let full_g = FEFunction::interpolate_velocity(&s, |_| [0.4, -0.9]);
        let rhs = m.mul_vec(full_g.coeffs());
        let sys = apply_dirichlet(&m, &rhs, &mask, &g).unwrap();
        assert!(sys.matrix.asymmetry() < 1e-14);
        let a = sys.matrix.to_dense();
        let y = dense_solve(a, sys.rhs.clone());
        let u = sys.expand(&y, &g);
        assert!(u.iter().zip(full_g.coeffs()).all(|(a, b)| (a - b).abs() < 1e-12));

        let zero = vec![0.0; mask.len()];
        let h = apply_dirichlet(&m, &rhs, &mask, &zero).unwrap();
        assert_eq!(h.rhs, h.free.iter().map(|&i| rhs[i]).collect::<Vec<_>>());
    }

    #[test]
    fn saddle_layout_is_symmetric_without_convection() {
        let (s, ops) = square(3);
        let layout = SaddleLayout::new(&s, &ops);
        let nfree = s.dofs().dirichlet_mask().iter().filter(|&&m| !m).count();
        assert_eq!(layout.dim(), nfree + 15);
        let w = BlockWeights { mass: 20.0, nu: 0.1, mu: 0.05 };
        let a = layout.matrix(&ops, w, None);
        assert!(a.is_symmetric() && a.asymmetry() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wv: Vec<f64> = (0..s.dofs().n_vel_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let conv = ops.convection_values(&s, &wv);
        let an = layout.matrix(&ops, w, Some(&conv));
        assert!(!an.is_symmetric());
        // reduced system equals the expanded blocks restricted to free dofs
        let k = ops.mass_matrix();
        let u = constrained_random(&s, &mut rng);
        let p: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut p0 = p.clone();
        p0[0] = 0.0;
        let y = layout.reduce(&u, &p0);
        let ay = a.mul_vec(&y);
        let mom: Vec<f64> = {
            let mk = k.mul_vec(&u);
            let au = ops.apply_stiffness(&u);
            let gu = ops.apply_graddiv(&u);
            let bp = ops.apply_divergence_transpose(&p0);
            (0..u.len()).map(|i| 20.0 * mk[i] + 0.1 * au[i] + 0.05 * gu[i] - bp[i]).collect()
        };
        let cont: Vec<f64> = ops.apply_divergence(&u).iter().map(|v| -v).collect();
        let expect = layout.restrict(&mom, &cont);
        assert!(ay.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-12));
        let (u2, p2) = layout.expand(&y, &vec![0.0; u.len()]);
        assert_eq!(u2, u);
        assert_eq!(p2, p0);
    }

    /// Gaussian elimination with partial pivoting for small test systems.
    pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }
}
