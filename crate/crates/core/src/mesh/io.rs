//! Line-oriented text format for meshes.
//!
//! ```text
//! nodes <V> triangles <T> bedges <B>
//! x y            (V lines)
//! i j k          (T lines, 0-based, counterclockwise)
//! i j tag        (B lines, tag in {noslip, inflow, square})
//! ```
//!
//! Tokens are whitespace separated; everything after `#` on a line is ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{cylinder, BoundaryEdge, BoundaryTag, DomainKind, Mesh};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_mesh(mesh)).map_err(|e| Error::io(path, e))
}

pub fn format_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "nodes {} triangles {} bedges {}",
        mesh.num_nodes(),
        mesh.num_triangles(),
        mesh.boundary_edges().len()
    );
    // `{}` on f64 prints the shortest representation that round-trips
    for p in mesh.nodes() {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    for be in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {} {}", be.nodes[0], be.nodes[1], be.tag);
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, tokenized.
    fn next_tokens(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.split('#').next().unwrap_or("");
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                self.last = i + 1;
                return Ok((i + 1, toks));
            }
        }
        Err(Error::MeshParse {
            line: self.last + 1,
            msg: format!("unexpected end of file while reading {what}"),
        })
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::MeshParse {
        line,
        msg: format!("cannot parse `{tok}`"),
    })
}

fn expect_len(toks: &[&str], n: usize, line: usize) -> Result<()> {
    if toks.len() != n {
        return Err(Error::MeshParse {
            line,
            msg: format!("expected {n} fields, found {}", toks.len()),
        });
    }
    Ok(())
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next_tokens("header")?;
    expect_len(&header, 6, ln)?;
    if header[0] != "nodes" || header[2] != "triangles" || header[4] != "bedges" {
        return Err(Error::MeshParse {
            line: ln,
            msg: "header must read `nodes <V> triangles <T> bedges <B>`".into(),
        });
    }
    let nv: usize = parse_num(header[1], ln)?;
    let nt: usize = parse_num(header[3], ln)?;
    let nb: usize = parse_num(header[5], ln)?;

    let mut nodes = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, t) = lines.next_tokens("nodes")?;
        expect_len(&t, 2, ln)?;
        nodes.push([parse_num(t[0], ln)?, parse_num(t[1], ln)?]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, t) = lines.next_tokens("triangles")?;
        expect_len(&t, 3, ln)?;
        let tri = [
            parse_num(t[0], ln)?,
            parse_num(t[1], ln)?,
            parse_num(t[2], ln)?,
        ];
        if tri.iter().any(|&v: &usize| v >= nv) {
            return Err(Error::MeshParse {
                line: ln,
                msg: "node index out of range".into(),
            });
        }
        triangles.push(tri);
    }
    let mut bedges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, t) = lines.next_tokens("boundary edges")?;
        expect_len(&t, 3, ln)?;
        let a: usize = parse_num(t[0], ln)?;
        let b: usize = parse_num(t[1], ln)?;
        if a >= nv || b >= nv {
            return Err(Error::MeshParse {
                line: ln,
                msg: "node index out of range".into(),
            });
        }
        let tag: BoundaryTag = t[2].parse()?;
        bedges.push(BoundaryEdge { nodes: [a, b], tag });
    }
    if let Ok((ln, _)) = lines.next_tokens("") {
        return Err(Error::MeshParse {
            line: ln,
            msg: "trailing data after the declared entities".into(),
        });
    }
    let kind = infer_kind(&nodes, &bedges);
    Mesh::new(nodes, triangles, bedges, kind)
}

fn infer_kind(nodes: &[[f64; 2]], bedges: &[BoundaryEdge]) -> DomainKind {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let all = |tag| bedges.iter().all(|be| be.tag == tag);
    if all(BoundaryTag::Square) && lo == [0.0, 0.0] && hi == [1.0, 1.0] {
        DomainKind::UnitSquare
    } else if bedges.iter().any(|be| be.tag == BoundaryTag::Inflow)
        && close(lo[0], 0.0)
        && close(lo[1], 0.0)
        && close(hi[0], cylinder::LENGTH)
        && close(hi[1], cylinder::HEIGHT)
    {
        DomainKind::CylinderChannel
    } else {
        DomainKind::Generic
    }
}
