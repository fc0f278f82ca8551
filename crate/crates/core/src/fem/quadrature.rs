//! Symmetric quadrature on the reference triangle `{(ξ, η): ξ, η ≥ 0, ξ + η ≤ 1}`.

/// Quadrature rule in barycentric coordinates; weights sum to the reference
/// area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: u32,
}

impl QuadratureRule {
    /// Seven-point rule exact for polynomials of degree 5.
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let a1 = (6.0 - s15) / 21.0;
        let a2 = (6.0 + s15) / 21.0;
        let w0 = 9.0 / 40.0;
        let w1 = (155.0 - s15) / 1200.0;
        let w2 = (155.0 + s15) / 1200.0;
        let third = 1.0 / 3.0;
        let mut points = vec![[third, third, third]];
        let mut weights = vec![w0];
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            points.extend([[b, a, a], [a, b, a], [a, a, b]]);
            weights.extend([w, w, w]);
        }
        QuadratureRule {
            points,
            weights: weights.into_iter().map(|w| 0.5 * w).collect(),
            degree: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates `(ξ, η)` of point `q`.
    pub fn reference_point(&self, q: usize) -> [f64; 2] {
        [self.points[q][1], self.points[q][2]]
    }
}

/// P2 Lagrange basis on the reference triangle: vertices 0..3, then the
/// midpoints of edges (0,1), (1,2), (2,0).
pub fn p2_values(xi: [f64; 2]) -> [f64; 6] {
    let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Reference gradients `[∂/∂ξ, ∂/∂η]` of the P2 basis.
pub fn p2_gradients(xi: [f64; 2]) -> [[f64; 2]; 6] {
    let l0 = 1.0 - xi[0] - xi[1];
    let (l1, l2) = (xi[0], xi[1]);
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut g = [[0.0; 2]; 6];
    let l = [l0, l1, l2];
    for i in 0..3 {
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * dl[i][d];
        }
    }
    let pairs = [(0, 1), (1, 2), (2, 0)];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        for d in 0..2 {
            g[3 + k][d] = 4.0 * (dl[a][d] * l[b] + l[a] * dl[b][d]);
        }
    }
    g
}

pub fn p1_values(xi: [f64; 2]) -> [f64; 3] {
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}
