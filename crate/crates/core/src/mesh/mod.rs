//! Conforming triangular meshes with tagged boundary edges.
//!
//! Two domains are supported out of the box: the unit square with a regular
//! SW-NE diagonal triangulation, and the channel-with-cylinder geometry of the
//! flow benchmark. Anything else can be loaded from the plain-text format in
//! [`io`].

pub mod cylinder;
pub mod io;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Boundary condition class carried by a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Homogeneous Dirichlet data on walls and obstacles.
    NoSlip,
    /// Time-dependent parabolic profile on the channel ends.
    Inflow,
    /// Homogeneous Dirichlet data on the unit square.
    Square,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::NoSlip => "noslip",
            BoundaryTag::Inflow => "inflow",
            BoundaryTag::Square => "square",
        }
    }

    /// Precedence used when a node touches edges with different tags.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BoundaryTag::NoSlip => 2,
            BoundaryTag::Square => 1,
            BoundaryTag::Inflow => 0,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noslip" => Ok(BoundaryTag::NoSlip),
            "inflow" => Ok(BoundaryTag::Inflow),
            "square" => Ok(BoundaryTag::Square),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    UnitSquare,
    CylinderChannel,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Size statistics of a mesh. Triangle diameter is the longest edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub h_min: f64,
    pub h_max: f64,
    pub total_area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    kind: DomainKind,
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Validates and builds a mesh.
    ///
    /// Checks orientation, conformity (interior edges shared by exactly two
    /// triangles), that tagged edges are exactly the boundary edges, and that
    /// no two nodes coincide.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        kind: DomainKind,
    ) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        let nv = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a node out of range"
                )));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }

        let mut sorted: Vec<usize> = (0..nv).collect();
        sorted.sort_by(|&a, &b| {
            nodes[a][0]
                .total_cmp(&nodes[b][0])
                .then(nodes[a][1].total_cmp(&nodes[b][1]))
        });
        for w in sorted.windows(2) {
            if nodes[w[0]] == nodes[w[1]] {
                return Err(Error::InvalidMesh(format!(
                    "duplicate nodes {} and {}",
                    w[0], w[1]
                )));
            }
        }

        let mut multiplicity: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                *multiplicity
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default() += 1;
            }
        }
        if let Some((e, m)) = multiplicity.iter().find(|(_, &m)| m > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {e:?} shared by {m} triangles"
            )));
        }

        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for be in &boundary_edges {
            let key = edge_key(be.nodes[0], be.nodes[1]);
            match multiplicity.get(&key) {
                Some(1) => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "tagged edge {key:?} is not a boundary edge"
                    )))
                }
            }
            if tagged.insert(key, be.tag).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {key:?} tagged twice"
                )));
            }
        }
        let n_boundary = multiplicity.values().filter(|&&m| m == 1).count();
        if n_boundary != tagged.len() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary edges but {} tagged",
                n_boundary,
                tagged.len()
            )));
        }

        let mesh = Mesh {
            nodes,
            triangles,
            boundary_edges,
            kind,
        };
        if kind == DomainKind::CylinderChannel {
            mesh.check_cylinder_nodes()?;
        }
        Ok(mesh)
    }

    fn check_cylinder_nodes(&self) -> Result<()> {
        for v in self.cylinder_nodes() {
            let r = dist(self.nodes[v], cylinder::CENTER);
            if (r - cylinder::RADIUS).abs() > 1e-12 {
                return Err(Error::InvalidMesh(format!(
                    "cylinder node {v} at distance {r} from the center"
                )));
            }
        }
        Ok(())
    }

    /// Regular triangulation of `[0,1]^2` with `n` cells per side, every cell
    /// split along its SW-NE diagonal.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "unit square needs at least one subdivision".into(),
            ));
        }
        let np = n + 1;
        let id = |i: usize, j: usize| j * np + i;
        let mut nodes = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let sw = id(i, j);
                let se = id(i + 1, j);
                let ne = id(i + 1, j + 1);
                let nw = id(i, j + 1);
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            }
        }
        let tag = BoundaryTag::Square;
        let mut boundary_edges = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary_edges.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], tag });
        }
        for j in 0..n {
            boundary_edges.push(BoundaryEdge { nodes: [id(n, j), id(n, j + 1)], tag });
        }
        for i in (0..n).rev() {
            boundary_edges.push(BoundaryEdge { nodes: [id(i + 1, n), id(i, n)], tag });
        }
        for j in (0..n).rev() {
            boundary_edges.push(BoundaryEdge { nodes: [id(0, j + 1), id(0, j)], tag });
        }
        Mesh::new(nodes, triangles, boundary_edges, DomainKind::UnitSquare)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// All distinct edges as sorted vertex pairs, in lexicographic order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |k| {
                    let (a, b) = edge_key(t[k], t[(k + 1) % 3]);
                    [a, b]
                })
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Vertices lying on the cylinder boundary (empty unless the domain is
    /// the cylinder channel).
    pub fn cylinder_nodes(&self) -> Vec<usize> {
        if self.kind != DomainKind::CylinderChannel {
            return Vec::new();
        }
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|be| self.is_cylinder_edge(be))
            .flat_map(|be| be.nodes)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Whether a boundary edge belongs to the obstacle rather than the channel walls.
    pub fn is_cylinder_edge(&self, be: &BoundaryEdge) -> bool {
        self.kind == DomainKind::CylinderChannel
            && be.tag == BoundaryTag::NoSlip
            && be.nodes.iter().all(|&v| {
                dist(self.nodes[v], cylinder::CENTER) < cylinder::RADIUS + 1e-6
            })
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.nodes[v]);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn stats(&self) -> MeshStats {
        let mut h_min = f64::INFINITY;
        let mut h_max = 0.0_f64;
        let mut total_area = 0.0;
        for t in 0..self.triangles.len() {
            let h = self.triangle_diameter(t);
            h_min = h_min.min(h);
            h_max = h_max.max(h);
            total_area += self.triangle_area(t);
        }
        MeshStats {
            h_min,
            h_max,
            total_area,
        }
    }

    /// Locates the triangle containing `p` and returns it with the barycentric
    /// coordinates of `p`. Points on shared edges resolve to the first match.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        let tol = 1e-12;
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|v| self.nodes[v]);
            let area = signed_area(a, b, c);
            let l0 = signed_area(p, b, c) / area;
            let l1 = signed_area(a, p, c) / area;
            let l2 = signed_area(a, b, p) / area;
            if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                return Ok((t, [l0, l1, l2]));
            }
        }
        Err(Error::PointOutsideMesh { x: p[0], y: p[1] })
    }
}
