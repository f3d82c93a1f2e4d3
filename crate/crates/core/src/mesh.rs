//! Conforming triangulations of planar domains.
//!
//! A [`Mesh`] owns node coordinates and counterclockwise triangles, plus the
//! derived edge adjacency needed by the angle-condition audit and by the
//! assembly routines. Meshes are immutable once built.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Absolute slack on `cot α₁ + cot α₂` below which an edge still counts as
/// satisfying the angle condition.
pub const ANGLE_TOLERANCE: f64 = 1e-12;

/// An edge shared by exactly two triangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorEdge {
    /// Endpoints, smaller index first.
    pub nodes: [usize; 2],
    pub triangles: [usize; 2],
    /// For each of the two triangles, the vertex not on the edge.
    pub opposite: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    interior_edges: Vec<InteriorEdge>,
    boundary_edges: Vec<[usize; 2]>,
}

impl Mesh {
    /// Validates connectivity and builds the edge map. Clockwise triangles are
    /// reoriented; degenerate, duplicated, folded or non-conforming
    /// configurations are rejected.
    pub fn new(nodes: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no nodes or no triangles".into()));
        }
        for (i, p) in nodes.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::NonFinite { node: i });
            }
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            check_indices(tri, nodes.len())
                .map_err(|msg| Error::InvalidMesh(format!("triangle {t}: {msg}")))?;
            let area = signed_area(&nodes, tri);
            if area.abs() <= 1e-14 * scale2(&nodes, tri) {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(first) = seen.insert(key, t) {
                return Err(Error::InvalidMesh(format!(
                    "triangles {first} and {t} have the same vertices"
                )));
            }
        }

        // directed edge (a -> b) as it appears in a CCW triangle, with (triangle, opposite)
        type EdgeUses = Vec<(usize, usize, bool)>;
        let mut edges: HashMap<(usize, usize), EdgeUses> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let opp = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push((t, opp, a < b));
            }
        }

        let mut interior_edges = Vec::new();
        let mut boundary_edges = Vec::new();
        let mut keys: Vec<_> = edges.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let users = &edges[&key];
            match users.as_slice() {
                [_] => boundary_edges.push([key.0, key.1]),
                [(t1, o1, d1), (t2, o2, d2)] => {
                    if d1 == d2 {
                        return Err(Error::InvalidMesh(format!(
                            "triangles {t1} and {t2} overlap across edge {}-{}",
                            key.0, key.1
                        )));
                    }
                    interior_edges.push(InteriorEdge {
                        nodes: [key.0, key.1],
                        triangles: [*t1, *t2],
                        opposite: [*o1, *o2],
                    });
                }
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {}-{} is shared by {} triangles",
                        key.0,
                        key.1,
                        users.len()
                    )))
                }
            }
        }

        let mesh = Self {
            nodes,
            triangles,
            interior_edges,
            boundary_edges,
        };
        mesh.check_hanging_nodes()?;
        Ok(mesh)
    }

    // A node lying in the interior of a boundary edge means a neighbour
    // touches that edge only partially.
    fn check_hanging_nodes(&self) -> Result<()> {
        let mut used = vec![false; self.nodes.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        for &[a, b] in &self.boundary_edges {
            let pa = self.nodes[a];
            let pb = self.nodes[b];
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            for (z, p) in self.nodes.iter().enumerate() {
                if z == a || z == b || !used[z] {
                    continue;
                }
                let q = [p[0] - pa[0], p[1] - pa[1]];
                let s = (q[0] * d[0] + q[1] * d[1]) / len2;
                let cross = q[0] * d[1] - q[1] * d[0];
                if s > 1e-12 && s < 1.0 - 1e-12 && cross.abs() <= 1e-12 * len2 {
                    return Err(Error::InvalidMesh(format!(
                        "node {z} lies on edge {a}-{b} (hanging node)"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Area of triangle `t` (positive, triangles are stored counterclockwise).
    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// `∫ φ_z dx` for every node `z`, i.e. one third of the area of the patch.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.area(t) / 3.0;
            for &v in tri {
                w[v] += a;
            }
        }
        w
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                h = h.max(dist(self.nodes[tri[k]], self.nodes[tri[(k + 1) % 3]]));
            }
        }
        h
    }

    /// Nodes that belong to at least one boundary edge, sorted.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.boundary_edges.iter().flatten().copied().collect();
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Node adjacency lists (sorted, without self).
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Cotangent of the interior angle of triangle `t` at vertex `node`.
    pub fn cot_at(&self, t: usize, node: usize) -> f64 {
        let tri = self.triangles[t];
        let k = tri.iter().position(|&v| v == node).expect("node not in triangle");
        let p = self.nodes[node];
        let q = self.nodes[tri[(k + 1) % 3]];
        let r = self.nodes[tri[(k + 2) % 3]];
        let a = [q[0] - p[0], q[1] - p[1]];
        let b = [r[0] - p[0], r[1] - p[1]];
        (a[0] * b[0] + a[1] * b[1]) / (a[0] * b[1] - a[1] * b[0]).abs()
    }

    pub fn check_angle_condition(&self) -> AngleReport {
        let edges: Vec<EdgeAngle> = self
            .interior_edges
            .iter()
            .enumerate()
            .map(|(id, e)| EdgeAngle {
                edge: id,
                nodes: e.nodes,
                cot_sum: self.cot_at(e.triangles[0], e.opposite[0])
                    + self.cot_at(e.triangles[1], e.opposite[1]),
            })
            .collect();
        AngleReport::from_edges(edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "nodes {}", self.nodes.len()).unwrap();
        for p in &self.nodes {
            writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    /// Parses the line-oriented mesh format:
    ///
    /// ```text
    /// nodes <N>
    /// x y          (N lines)
    /// triangles <M>
    /// i j k        (M lines, 0-based)
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let n = read_header(&mut lines, "nodes")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, l) = next_line(&mut lines, "node coordinates")?;
            let v: Vec<f64> = parse_fields(line, l)?;
            if v.len() != 2 {
                return Err(parse_err(line, format!("expected 2 coordinates, found {}", v.len())));
            }
            nodes.push([v[0], v[1]]);
        }

        let m = read_header(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, l) = next_line(&mut lines, "triangle")?;
            let v: Vec<usize> = parse_fields(line, l)?;
            if v.len() != 3 {
                return Err(parse_err(line, format!("expected 3 node indices, found {}", v.len())));
            }
            let tri = [v[0], v[1], v[2]];
            check_indices(&tri, n).map_err(|msg| parse_err(line, msg))?;
            triangles.push(tri);
        }
        if let Some((line, _)) = lines.next() {
            return Err(parse_err(line, "trailing content after triangles".into()));
        }
        Self::new(nodes, triangles)
    }
}

fn check_indices(tri: &[usize; 3], n: usize) -> std::result::Result<(), String> {
    if let Some(&bad) = tri.iter().find(|&&v| v >= n) {
        return Err(format!("node index {bad} out of range (mesh has {n} nodes)"));
    }
    if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
        return Err(format!("repeated node index in triangle {tri:?}"));
    }
    Ok(())
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn next_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> Result<(usize, &'a str)> {
    lines.next().ok_or_else(|| Error::Parse {
        line: 0,
        message: format!("unexpected end of file while reading {what}"),
    })
}

fn read_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<usize> {
    let (line, l) = next_line(lines, key)?;
    let mut parts = l.split_whitespace();
    if parts.next() != Some(key) {
        return Err(parse_err(line, format!("expected `{key} <count>`")));
    }
    let count = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(line, format!("expected `{key} <count>`")))?;
    if parts.next().is_some() {
        return Err(parse_err(line, format!("expected `{key} <count>`")));
    }
    Ok(count)
}

fn parse_fields<T: std::str::FromStr>(line: usize, l: &str) -> Result<Vec<T>> {
    l.split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| parse_err(line, format!("cannot parse `{s}`")))
        })
        .collect()
}

pub(crate) fn signed_area(nodes: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn scale2(nodes: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    let l = dist(a, b).max(dist(b, c)).max(dist(a, c));
    l * l
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeAngle {
    /// Index into [`Mesh::interior_edges`].
    pub edge: usize,
    pub nodes: [usize; 2],
    pub cot_sum: f64,
}

/// Outcome of the angle-condition audit `cot α₁ + cot α₂ ≥ 0` over all
/// interior edges.
#[derive(Debug, Clone)]
pub struct AngleReport {
    pub edges: Vec<EdgeAngle>,
    /// Minimum cotangent sum; `+∞` for meshes without interior edges.
    pub worst_value: f64,
    pub satisfied: bool,
}

impl AngleReport {
    fn from_edges(edges: Vec<EdgeAngle>) -> Self {
        let worst_value = edges.iter().map(|e| e.cot_sum).fold(f64::INFINITY, f64::min);
        Self {
            satisfied: worst_value >= -ANGLE_TOLERANCE,
            worst_value,
            edges,
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = &EdgeAngle> {
        self.edges.iter().filter(|e| e.cot_sum < -ANGLE_TOLERANCE)
    }

    pub fn num_violations(&self) -> usize {
        self.violations().count()
    }

    /// Number of edges whose cotangent sum equals the worst value (to 1e-12).
    pub fn num_worst(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| (e.cot_sum - self.worst_value).abs() <= 1e-12)
            .count()
    }
}

impl std::fmt::Display for AngleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "interior edges: {}", self.edges.len())?;
        writeln!(f, "worst cot sum:  {:.6e}", self.worst_value)?;
        writeln!(f, "violations:     {}", self.num_violations())?;
        for e in self.violations().take(20) {
            writeln!(f, "  edge {} ({}-{}): {:.6e}", e.edge, e.nodes[0], e.nodes[1], e.cot_sum)?;
        }
        write!(
            f,
            "angle condition: {}",
            if self.satisfied { "satisfied" } else { "VIOLATED" }
        )
    }
}

/// Unit square `[0,1]²` cut into `n × n` cells, each split along the
/// `(0,0)–(1,1)` diagonal.
pub fn generate_structured_square(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("subdivision count must be at least 1".into()));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::new(nodes, triangles)
}

/// Polar ring mesh of the disk of the given radius centred at the origin.
///
/// Ring `k = 0, …, K−1` sits at radius `R(k + ½)/(K − ½)` and carries
/// `6k + 3` equally spaced nodes, so node spacing along and across rings is
/// nearly uniform. The innermost ring is a single triangle around the
/// origin; there is deliberately no node at the centre, which would be a
/// symmetry-pinned point for radially symmetric states. Consecutive rings
/// are stitched by always adding the shorter diagonal. The ring count is the smallest one whose longest
/// edge is at most `h_target`. Boundary nodes lie on the circle up to
/// rounding.
pub fn generate_disk(radius: f64, h_target: f64) -> Result<Mesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Meshing(format!("radius must be positive, got {radius}")));
    }
    if !(h_target > 0.0) || h_target >= radius {
        return Err(Error::Meshing(format!(
            "mesh width must satisfy 0 < h < radius, got h = {h_target}, radius = {radius}"
        )));
    }
    let mut rings = ((radius / h_target).ceil() as usize).max(2);
    loop {
        let mesh = polar_mesh(radius, rings)?;
        if mesh.max_edge_length() <= h_target {
            return Ok(mesh);
        }
        rings += 1;
        if rings > 10_000 {
            return Err(Error::Meshing("ring count exceeded 10000".into()));
        }
    }
}

fn polar_mesh(radius: f64, rings: usize) -> Result<Mesh> {
    let mut nodes = Vec::new();
    let mut ring_start = Vec::with_capacity(rings);
    let mut ring_len = Vec::with_capacity(rings);
    let dr = radius / (rings as f64 - 0.5);
    for k in 0..rings {
        let r = if k + 1 == rings { radius } else { dr * (k as f64 + 0.5) };
        let count = 6 * k + 3;
        ring_start.push(nodes.len());
        ring_len.push(count);
        for j in 0..count {
            let theta = 2.0 * PI * j as f64 / count as f64 + PI / 2.0;
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut triangles = vec![[0, 1, 2]];
    for k in 1..rings {
        let (inner_start, inner_len) = (ring_start[k - 1], ring_len[k - 1]);
        let (outer_start, outer_len) = (ring_start[k], ring_len[k]);
        let inner = |j: usize| inner_start + j % inner_len;
        let outer = |j: usize| outer_start + j % outer_len;
        let dist = |a: usize, b: usize| {
            let (p, q) = (nodes[a], nodes[b]);
            (p[0] - q[0]).hypot(p[1] - q[1])
        };
        let (mut i, mut o) = (0usize, 0usize);
        while i < inner_len || o < outer_len {
            let advance_outer = if i == inner_len {
                true
            } else if o == outer_len {
                false
            } else {
                // close the gap with the shorter diagonal
                dist(inner(i), outer(o + 1)) <= dist(outer(o), inner(i + 1))
            };
            if advance_outer {
                triangles.push([inner(i), outer(o), outer(o + 1)]);
                o += 1;
            } else {
                triangles.push([inner(i), outer(o), inner(i + 1)]);
                i += 1;
            }
        }
    }
    Mesh::new(nodes, triangles)
}
