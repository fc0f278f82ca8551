use crate::mesh::{cylinder, BoundaryTag, Mesh};

/// Numbering of P2 velocity and P1 pressure unknowns.
///
/// P2 nodes are the mesh vertices followed by one node per edge, edges in
/// lexicographic order of their sorted vertex pair. Velocity dofs are blocked
/// by component: dof `c * n_p2 + node`.
#[derive(Debug, Clone)]
pub struct DofMap {
    n_vertices: usize,
    edges: Vec<[usize; 2]>,
    elements: Vec<[usize; 6]>,
    coords: Vec<[f64; 2]>,
    node_tags: Vec<Option<BoundaryTag>>,
    curved: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.num_nodes();
        let edges = mesh.edges();
        let edge_index = |a: usize, b: usize| {
            let key = if a < b { [a, b] } else { [b, a] };
            edges.binary_search(&key).expect("edge table covers all triangle edges")
        };

        let elements: Vec<[usize; 6]> = mesh
            .triangles()
            .iter()
            .map(|&[a, b, c]| {
                [
                    a,
                    b,
                    c,
                    nv + edge_index(a, b),
                    nv + edge_index(b, c),
                    nv + edge_index(c, a),
                ]
            })
            .collect();

        let mut coords: Vec<[f64; 2]> = mesh.nodes().to_vec();
        coords.extend(edges.iter().map(|&[a, b]| {
            let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
            [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
        }));

        let mut node_tags = vec![None; nv + edges.len()];
        let mut on_circle = vec![false; edges.len()];
        for be in mesh.boundary_edges() {
            let [a, b] = be.nodes;
            let e = edge_index(a, b);
            node_tags[nv + e] = Some(be.tag);
            for v in [a, b] {
                node_tags[v] = match node_tags[v] {
                    Some(old) if old.precedence() >= be.tag.precedence() => Some(old),
                    _ => Some(be.tag),
                };
            }
            if mesh.is_cylinder_edge(be) {
                on_circle[e] = true;
                let m = coords[nv + e];
                let (dx, dy) = (m[0] - cylinder::CENTER[0], m[1] - cylinder::CENTER[1]);
                let s = cylinder::RADIUS / dx.hypot(dy);
                coords[nv + e] = [cylinder::CENTER[0] + s * dx, cylinder::CENTER[1] + s * dy];
            }
        }
        let curved = elements
            .iter()
            .map(|el| el[3..].iter().any(|&n| on_circle[n - nv]))
            .collect();

        DofMap {
            n_vertices: nv,
            edges,
            elements,
            coords,
            node_tags,
            curved,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_p2_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_vel_dofs(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn n_pr_dofs(&self) -> usize {
        self.n_vertices
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vel_dof(&self, component: usize, node: usize) -> usize {
        component * self.coords.len() + node
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// P2 nodes of each element: three vertices, then the midpoints of edges
    /// (0,1), (1,2), (2,0).
    pub fn elements(&self) -> &[[usize; 6]] {
        &self.elements
    }

    /// Node positions; midpoints of cylinder edges sit on the circle.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn node_tag(&self, node: usize) -> Option<BoundaryTag> {
        self.node_tags[node]
    }

    pub fn is_dirichlet_node(&self, node: usize) -> bool {
        self.node_tags[node].is_some()
    }

    /// Whether element `e` has an edge whose midpoint was moved onto the circle.
    pub fn is_curved(&self, e: usize) -> bool {
        self.curved[e]
    }

    /// Per velocity dof: `true` if prescribed by Dirichlet data.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let one: Vec<bool> = self.node_tags.iter().map(Option::is_some).collect();
        [one.clone(), one].concat()
    }
}
