//! Triangulation of the thermal fin and its plain-text tables.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const POST_HALF_WIDTH: f64 = 0.5;
pub const POST_HEIGHT: f64 = 3.0;
pub const FIN_HALF_SPAN: f64 = 2.5;
pub const SUBFIN_BOTTOM: f64 = 2.0;
pub const SUBFIN_TOP: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Post,
    Subfin,
}

impl Region {
    pub fn id(self) -> u8 {
        match self {
            Region::Post => 1,
            Region::Subfin => 2,
        }
    }

    fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Region::Post),
            2 => Some(Region::Subfin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryLabel {
    /// Heated root, bottom of the post.
    Root,
    BiotLeft,
    BiotRight,
    /// Insulated remainder.
    Neumann,
}

impl BoundaryLabel {
    pub fn is_biot(self) -> bool {
        matches!(self, BoundaryLabel::BiotLeft | BoundaryLabel::BiotRight)
    }
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryLabel::Root => "root",
            BoundaryLabel::BiotLeft => "biot_left",
            BoundaryLabel::BiotRight => "biot_right",
            BoundaryLabel::Neumann => "neumann",
        })
    }
}

impl FromStr for BoundaryLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "root" => Ok(BoundaryLabel::Root),
            "biot_left" => Ok(BoundaryLabel::BiotLeft),
            "biot_right" => Ok(BoundaryLabel::BiotRight),
            "neumann" => Ok(BoundaryLabel::Neumann),
            _ => Err(format!("unknown boundary label `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub label: BoundaryLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub boundary: Vec<BoundaryEdge>,
}

fn triangle_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn label_for(a: [f64; 2], b: [f64; 2], h: f64) -> BoundaryLabel {
    let eps = 1e-9 * h.max(1e-300);
    let (mx, my) = (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]));
    let near = |u: f64, v: f64| (u - v).abs() < eps;
    if near(my, 0.0) {
        BoundaryLabel::Root
    } else if mx.abs() > POST_HALF_WIDTH + eps
        && (near(my, SUBFIN_BOTTOM) || near(my, SUBFIN_TOP) || near(mx.abs(), FIN_HALF_SPAN))
    {
        if mx < 0.0 {
            BoundaryLabel::BiotLeft
        } else {
            BoundaryLabel::BiotRight
        }
    } else {
        BoundaryLabel::Neumann
    }
}

/// Structured triangulation of the fin with mesh size `0.5 / refinement`.
///
/// Cells are lattice squares split along a diagonal that is mirrored across
/// `x = 0`, so the mesh is symmetric. Nodes are numbered row by row.
pub fn generate_fin_mesh(refinement: usize) -> Result<Mesh> {
    if refinement == 0 {
        return Err(Error::InvalidParameter("mesh refinement must be at least 1".into()));
    }
    let r = refinement;
    let h = POST_HALF_WIDTH / r as f64;
    let nx = 10 * r; // cells across [-2.5, 2.5]
    let ny = 6 * r; // cells across [0, 3]
    let x = |i: usize| -FIN_HALF_SPAN + i as f64 * h;
    let y = |j: usize| j as f64 * h;
    let inside = |i: usize, j: usize| {
        let cx = x(i) + 0.5 * h;
        let cy = y(j) + 0.5 * h;
        cx.abs() < POST_HALF_WIDTH || (cy > SUBFIN_BOTTOM && cy < SUBFIN_TOP)
    };
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let lattice = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..ny {
        for i in 0..nx {
            if inside(i, j) {
                for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                    used[lattice(i + di, j + dj)] = true;
                }
            }
        }
    }
    let mut id = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if used[lattice(i, j)] {
                id[lattice(i, j)] = nodes.len();
                nodes.push([x(i), y(j)]);
            }
        }
    }
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !inside(i, j) {
                continue;
            }
            let a = id[lattice(i, j)];
            let b = id[lattice(i + 1, j)];
            let c = id[lattice(i + 1, j + 1)];
            let d = id[lattice(i, j + 1)];
            let cx = x(i) + 0.5 * h;
            let region = if cx.abs() < POST_HALF_WIDTH { Region::Post } else { Region::Subfin };
            if cx > 0.0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
            regions.push(region);
            regions.push(region);
        }
    }
    let mut mesh = Mesh { nodes, triangles, regions, boundary: Vec::new() };
    mesh.boundary = mesh
        .boundary_edges_unlabeled()
        .into_iter()
        .map(|[p, q]| BoundaryEdge { nodes: [p, q], label: label_for(mesh.nodes[p], mesh.nodes[q], h) })
        .collect();
    Ok(mesh)
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|n| self.nodes[n])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        triangle_area(self.triangle_points(t))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let [a, b] = e.nodes.map(|n| self.nodes[n]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    pub fn boundary_measure(&self, pred: impl Fn(BoundaryLabel) -> bool) -> f64 {
        self.boundary.iter().filter(|e| pred(e.label)).map(|e| self.edge_length(e)).sum()
    }

    /// Edges used by exactly one triangle, in triangle order, oriented as in
    /// the counter-clockwise triangle.
    fn boundary_edges_unlabeled(&self) -> Vec<[usize; 2]> {
        let counts = self.edge_counts();
        let mut out = Vec::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                if counts[&(p.min(q), p.max(q))] == 1 {
                    out.push([p, q]);
                }
            }
        }
        out
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                *counts.entry((p.min(q), p.max(q))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Checks conformity, orientation, and that the labeled boundary is
    /// exactly the set of edges owned by one triangle.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfiguration(m));
        if self.regions.len() != self.triangles.len() {
            return bad("region count differs from triangle count".into());
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&n| n >= self.nodes.len()) {
                return bad(format!("triangle {t} references a missing node"));
            }
            if !(self.triangle_area(t) > 0.0) {
                return bad(format!("triangle {t} is not positively oriented"));
            }
        }
        let counts = self.edge_counts();
        if let Some((e, c)) = counts.iter().find(|(_, &c)| c > 2) {
            return bad(format!("edge {e:?} shared by {c} triangles"));
        }
        let mut labeled = HashMap::new();
        for e in &self.boundary {
            let [p, q] = e.nodes;
            if labeled.insert((p.min(q), p.max(q)), e.label).is_some() {
                return bad(format!("boundary edge ({p}, {q}) labeled twice"));
            }
            if counts.get(&(p.min(q), p.max(q))) != Some(&1) {
                return bad(format!("labeled edge ({p}, {q}) is not a boundary edge"));
            }
        }
        let n_boundary = counts.values().filter(|&&c| c == 1).count();
        if n_boundary != labeled.len() {
            return bad(format!("{n_boundary} boundary edges but {} labeled", labeled.len()));
        }
        Ok(())
    }

    /// Nodes touched by edges with the given label, sorted by index.
    pub fn nodes_with_label(&self, label: BoundaryLabel) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().filter(|e| e.label == label).flat_map(|e| e.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Index of the node at the mirror image `(-x, y)` of each node.
    pub fn mirror_map(&self) -> Result<Vec<usize>> {
        let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let lookup: HashMap<_, _> = self.nodes.iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
        self.nodes
            .iter()
            .map(|&[x, y]| {
                lookup
                    .get(&key([-x, y]))
                    .copied()
                    .ok_or_else(|| Error::InvalidConfiguration(format!("no mirror node for ({x}, {y})")))
            })
            .collect()
    }

    pub fn write_nodes<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "id,x,y")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(out, "{i},{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    pub fn write_triangles<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "id,n1,n2,n3,region")?;
        for (i, (t, r)) in self.triangles.iter().zip(&self.regions).enumerate() {
            writeln!(out, "{i},{},{},{},{}", t[0], t[1], t[2], r.id())?;
        }
        Ok(())
    }

    pub fn write_boundary<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "n1,n2,label")?;
        for e in &self.boundary {
            writeln!(out, "{},{},{}", e.nodes[0], e.nodes[1], e.label)?;
        }
        Ok(())
    }

    /// Reads the three tables written by `write_nodes`, `write_triangles`
    /// and `write_boundary`, then validates the result.
    pub fn read_tables<A: BufRead, B: BufRead, C: BufRead>(nodes: A, triangles: B, boundary: C) -> Result<Self> {
        let node_rows = read_table(nodes, 3)?;
        let mut pts = Vec::with_capacity(node_rows.len());
        for (line, f) in node_rows {
            let id: usize = parse(&f[0], line)?;
            if id != pts.len() {
                return Err(Error::Parse { line, message: format!("expected node id {}, found {id}", pts.len()) });
            }
            pts.push([parse(&f[1], line)?, parse(&f[2], line)?]);
        }
        let mut tris = Vec::new();
        let mut regions = Vec::new();
        for (line, f) in read_table(triangles, 5)? {
            let id: usize = parse(&f[0], line)?;
            if id != tris.len() {
                return Err(Error::Parse { line, message: format!("expected triangle id {}, found {id}", tris.len()) });
            }
            tris.push([parse(&f[1], line)?, parse(&f[2], line)?, parse(&f[3], line)?]);
            let r: u8 = parse(&f[4], line)?;
            regions.push(Region::from_id(r).ok_or(Error::Parse { line, message: format!("unknown region {r}") })?);
        }
        let mut edges = Vec::new();
        for (line, f) in read_table(boundary, 3)? {
            let label = f[2].parse().map_err(|message| Error::Parse { line, message })?;
            edges.push(BoundaryEdge { nodes: [parse(&f[0], line)?, parse(&f[1], line)?], label });
        }
        let mesh = Mesh { nodes: pts, triangles: tris, regions, boundary: edges };
        mesh.validate()?;
        Ok(mesh)
    }
}

fn parse<F: FromStr>(s: &str, line: usize) -> Result<F>
where
    F::Err: fmt::Display,
{
    s.trim().parse().map_err(|e: F::Err| Error::Parse { line, message: format!("`{s}`: {e}") })
}

/// Comma-separated rows after a header line; `#` lines are skipped.
pub(crate) fn read_table<R: BufRead>(input: R, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let fields: Vec<String> = t.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != width {
            return Err(Error::Parse { line: k + 1, message: format!("expected {width} fields, found {}", fields.len()) });
        }
        rows.push((k + 1, fields));
    }
    Ok(rows)
}
