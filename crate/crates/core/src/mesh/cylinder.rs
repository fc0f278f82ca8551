//! Channel-with-cylinder geometry and an unstructured mesh generator for it.
//!
//! The generator places a fixed number of nodes on the cylinder, on the
//! channel walls and in the interior, then relaxes the interior nodes with a
//! spring-force smoother over repeated constrained Delaunay triangulations.
//! Node counts are preserved by every stage, so the triangle count of the
//! result is fixed in advance by `T = 2V - B` (an annulus has Euler
//! characteristic zero).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{BoundaryEdge, BoundaryTag, DomainKind, Mesh};
use crate::error::{Error, Result};

pub const LENGTH: f64 = 2.2;
pub const HEIGHT: f64 = 0.41;
pub const CENTER: [f64; 2] = [0.2, 0.2];
pub const RADIUS: f64 = 0.05;

/// Target element size as a function of position.
#[derive(Debug, Clone, Copy)]
pub struct SizeField {
    /// Size on the cylinder surface.
    pub h_cylinder: f64,
    /// Growth rate away from the cylinder.
    pub grading: f64,
    /// Size on the channel walls.
    pub h_wall: f64,
    pub wall_grading: f64,
    /// Size along the wake centreline just behind the cylinder.
    pub h_wake: f64,
    pub wake_grading: f64,
    pub h_far: f64,
}

impl Default for SizeField {
    fn default() -> Self {
        SizeField {
            h_cylinder: 0.0081,
            grading: 0.22,
            h_wall: 0.017,
            wall_grading: 0.3,
            h_wake: 0.014,
            wake_grading: 0.012,
            h_far: 0.031,
        }
    }
}

impl SizeField {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let dc = ((p[0] - CENTER[0]).hypot(p[1] - CENTER[1]) - RADIUS).max(0.0);
        let near = self.h_cylinder + self.grading * dc;
        let dw = p[1].min(HEIGHT - p[1]).max(0.0);
        let wall = self.h_wall + self.wall_grading * dw;
        let wake = if p[0] > CENTER[0] {
            self.h_wake
                + self.wake_grading * (p[0] - CENTER[0])
                + 0.5 * (p[1] - CENTER[1]).abs()
        } else {
            f64::INFINITY
        };
        near.min(wall).min(wake).min(self.h_far)
    }
}

#[derive(Debug, Clone)]
pub struct CylinderMeshParams {
    pub cylinder_nodes: usize,
    pub wall_nodes: usize,
    pub interior_nodes: usize,
    pub size: SizeField,
    pub smoothing_iterations: usize,
    pub seed: u64,
}

impl Default for CylinderMeshParams {
    /// 3480 vertices with 336 on the boundary, giving 6624 triangles.
    fn default() -> Self {
        CylinderMeshParams {
            cylinder_nodes: 64,
            wall_nodes: 272,
            interior_nodes: 3144,
            size: SizeField::default(),
            smoothing_iterations: 60,
            seed: 20,
        }
    }
}

fn inside_domain(p: [f64; 2]) -> bool {
    p[0] > 0.0
        && p[0] < LENGTH
        && p[1] > 0.0
        && p[1] < HEIGHT
        && (p[0] - CENTER[0]).hypot(p[1] - CENTER[1]) > RADIUS
}

/// Nodes on the rectangle, counterclockwise from the origin, with spacing
/// following the size field. Corners are always nodes.
fn wall_nodes(count: usize, size: &SizeField) -> Vec<[f64; 2]> {
    let corners = [[0.0, 0.0], [LENGTH, 0.0], [LENGTH, HEIGHT], [0.0, HEIGHT]];
    let samples = 4000;
    // ∫ ds / h along each side
    let mut density = Vec::new();
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let mut cum = vec![0.0];
        for k in 0..samples {
            let t = (k as f64 + 0.5) / samples as f64;
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let last = *cum.last().unwrap();
            cum.push(last + len / samples as f64 / size.eval(p));
        }
        density.push(cum);
    }
    let total: f64 = density.iter().map(|c| *c.last().unwrap()).sum();
    let mut segs: Vec<usize> = density
        .iter()
        .map(|c| ((c.last().unwrap() / total) * count as f64).round().max(1.0) as usize)
        .collect();
    // fix rounding so the loop has exactly `count` segments
    while segs.iter().sum::<usize>() > count {
        let i = (0..4).max_by_key(|&i| segs[i]).unwrap();
        segs[i] -= 1;
    }
    while segs.iter().sum::<usize>() < count {
        let i = (0..4).max_by_key(|&i| segs[i]).unwrap();
        segs[i] += 1;
    }

    let mut out = Vec::with_capacity(count);
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        let cum = &density[s];
        let m = segs[s];
        out.push(a);
        let mut k = 0;
        for j in 1..m {
            let target = cum[samples] * j as f64 / m as f64;
            while cum[k + 1] < target {
                k += 1;
            }
            let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
            let t = (k as f64 + frac) / samples as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

struct Grid {
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl Grid {
    fn new(cell: f64) -> Self {
        let nx = (LENGTH / cell).ceil() as usize + 1;
        let ny = (HEIGHT / cell).ceil() as usize + 1;
        Grid {
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        }
    }

    fn index(&self, p: [f64; 2]) -> (usize, usize) {
        let i = ((p[0] / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((p[1] / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn insert(&mut self, p: [f64; 2], id: usize) {
        let (i, j) = self.index(p);
        self.cells[j * self.nx + i].push(id);
    }

    fn any_within(&self, p: [f64; 2], r: f64, pts: &[[f64; 2]]) -> bool {
        let reach = (r / self.cell).ceil() as isize;
        let (i0, j0) = self.index(p);
        for dj in -reach..=reach {
            let j = j0 as isize + dj;
            if j < 0 || j >= self.ny as isize {
                continue;
            }
            for di in -reach..=reach {
                let i = i0 as isize + di;
                if i < 0 || i >= self.nx as isize {
                    continue;
                }
                for &q in &self.cells[j as usize * self.nx + i as usize] {
                    let d = (pts[q][0] - p[0]).hypot(pts[q][1] - p[1]);
                    if d < r {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Greedy Poisson-disk sampling with radius `scale * h(p)`; returns accepted
/// interior points in acceptance order.
fn sample_interior(
    boundary: &[[f64; 2]],
    candidates: &[[f64; 2]],
    size: &SizeField,
    scale: f64,
) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = boundary.to_vec();
    let mut grid = Grid::new(size.h_cylinder * scale);
    for (i, &p) in boundary.iter().enumerate() {
        grid.insert(p, i);
    }
    for &c in candidates {
        let r = scale * size.eval(c);
        let dc = (c[0] - CENTER[0]).hypot(c[1] - CENTER[1]) - RADIUS;
        let dw = c[0].min(LENGTH - c[0]).min(c[1]).min(HEIGHT - c[1]);
        if dc < 0.5 * r || dw < 0.5 * r {
            continue;
        }
        if !grid.any_within(c, r, &pts) {
            grid.insert(c, pts.len());
            pts.push(c);
        }
    }
    pts.split_off(boundary.len())
}

fn project_inside(p: [f64; 2], size: &SizeField) -> [f64; 2] {
    let margin = 0.45 * size.eval(p);
    let mut q = [
        p[0].clamp(margin, LENGTH - margin),
        p[1].clamp(margin, HEIGHT - margin),
    ];
    let d = (q[0] - CENTER[0]).hypot(q[1] - CENTER[1]);
    let rmin = RADIUS + margin;
    if d < rmin {
        let s = rmin / d.max(1e-14);
        q = [
            CENTER[0] + (q[0] - CENTER[0]) * s,
            CENTER[1] + (q[1] - CENTER[1]) * s,
        ];
    }
    q
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn triangulate(pts: &[[f64; 2]], constraints: &[[usize; 2]], n_cyl: usize) -> Result<Vec<[usize; 3]>> {
    let vertices: Vec<Point2<f64>> = pts.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt = Cdt::bulk_load_cdt(vertices, constraints.to_vec())
        .map_err(|e| Error::InvalidMesh(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != pts.len() {
        return Err(Error::InvalidMesh("coincident points in triangulation".into()));
    }
    Ok(cdt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        // the disk is triangulated from cylinder nodes alone
        .filter(|t| !t.iter().all(|&v| v < n_cyl))
        .collect())
}

fn unique_edges(tris: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut edges: Vec<[usize; 2]> = tris
        .iter()
        .flat_map(|t| {
            (0..3).map(move |k| {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                [a.min(b), a.max(b)]
            })
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Generates the channel-with-cylinder mesh.
///
/// Node order: cylinder nodes (counterclockwise from angle 0), wall nodes
/// (counterclockwise from the origin), then interior nodes.
pub fn generate(params: &CylinderMeshParams) -> Result<Mesh> {
    let n_cyl = params.cylinder_nodes;
    if n_cyl < 8 || params.wall_nodes < 8 {
        return Err(Error::InvalidArgument("too few boundary nodes".into()));
    }
    let size = &params.size;
    let mut boundary: Vec<[f64; 2]> = (0..n_cyl)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n_cyl as f64;
            [CENTER[0] + RADIUS * th.cos(), CENTER[1] + RADIUS * th.sin()]
        })
        .collect();
    // exact axis points so the pressure probes sit on vertices
    boundary[0] = [CENTER[0] + RADIUS, CENTER[1]];
    if n_cyl % 2 == 0 {
        boundary[n_cyl / 2] = [CENTER[0] - RADIUS, CENTER[1]];
    }
    boundary.extend(wall_nodes(params.wall_nodes, size));
    let n_bnd = boundary.len();

    let mut constraints = Vec::with_capacity(n_bnd);
    for k in 0..n_cyl {
        constraints.push([k, (k + 1) % n_cyl]);
    }
    for k in 0..params.wall_nodes {
        constraints.push([n_cyl + k, n_cyl + (k + 1) % params.wall_nodes]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_cand = 60 * params.interior_nodes;
    let candidates: Vec<[f64; 2]> = (0..n_cand)
        .map(|_| [rng.gen::<f64>() * LENGTH, rng.gen::<f64>() * HEIGHT])
        .filter(|&p| inside_domain(p))
        .collect();

    // largest radius scale that still yields enough interior points
    let count = |s: f64| sample_interior(&boundary, &candidates, size, s).len();
    let (mut lo, mut hi) = (0.2, 3.0);
    if count(lo) < params.interior_nodes {
        return Err(Error::InvalidArgument(
            "size field too coarse for the requested interior node count".into(),
        ));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= params.interior_nodes {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut interior = sample_interior(&boundary, &candidates, size, lo);
    interior.truncate(params.interior_nodes);
    log::debug!("cylinder mesh: sampling scale {lo:.4}");

    let mut pts = boundary.clone();
    pts.extend(interior);

    // spring smoothing with repulsive-only forces
    let fscale = 1.2;
    let dt = 0.2;
    for _ in 0..params.smoothing_iterations {
        let tris = triangulate(&pts, &constraints, n_cyl)?;
        let edges = unique_edges(&tris);
        let mut sum_l2 = 0.0;
        let mut sum_h2 = 0.0;
        let lens: Vec<(f64, f64)> = edges
            .iter()
            .map(|&[a, b]| {
                let l = (pts[a][0] - pts[b][0]).hypot(pts[a][1] - pts[b][1]);
                let mid = [0.5 * (pts[a][0] + pts[b][0]), 0.5 * (pts[a][1] + pts[b][1])];
                let h = size.eval(mid);
                sum_l2 += l * l;
                sum_h2 += h * h;
                (l, h)
            })
            .collect();
        let q = fscale * (sum_l2 / sum_h2).sqrt();
        let mut force = vec![[0.0; 2]; pts.len()];
        for (&[a, b], &(l, h)) in edges.iter().zip(&lens) {
            let f = (q * h - l).max(0.0) / l;
            let dx = [(pts[a][0] - pts[b][0]) * f, (pts[a][1] - pts[b][1]) * f];
            force[a][0] += dx[0];
            force[a][1] += dx[1];
            force[b][0] -= dx[0];
            force[b][1] -= dx[1];
        }
        for i in n_bnd..pts.len() {
            let p = [pts[i][0] + dt * force[i][0], pts[i][1] + dt * force[i][1]];
            pts[i] = project_inside(p, size);
        }
    }

    let triangles = triangulate(&pts, &constraints, n_cyl)?;
    let mut bedges = Vec::with_capacity(n_bnd);
    for &[a, b] in &constraints {
        let tag = if a >= n_cyl {
            let (pa, pb) = (pts[a], pts[b]);
            let vertical = (pa[0] - pb[0]).abs() < 1e-14;
            if vertical && (pa[0].abs() < 1e-14 || (pa[0] - LENGTH).abs() < 1e-14) {
                BoundaryTag::Inflow
            } else {
                BoundaryTag::NoSlip
            }
        } else {
            BoundaryTag::NoSlip
        };
        bedges.push(BoundaryEdge { nodes: [a, b], tag });
    }
    Mesh::new(pts, triangles, bedges, DomainKind::CylinderChannel)
}
