//! Conforming triangle meshes with region and edge tags.
//!
//! Quadratic (P2) node numbering: vertex `i` is node `i`, unique edge `e` is
//! node `n_vertices + e`, placed at the edge midpoint.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionTag {
    Fluid,
    HoleInterior(usize),
    BallAnnulus(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeTag {
    Outer,
    Hole(usize),
    Ball(usize),
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionTag::Fluid => write!(f, "fluid"),
            RegionTag::HoleInterior(k) => write!(f, "hole:{k}"),
            RegionTag::BallAnnulus(k) => write!(f, "ball:{k}"),
        }
    }
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeTag::Outer => write!(f, "outer"),
            EdgeTag::Hole(k) => write!(f, "hole:{k}"),
            EdgeTag::Ball(k) => write!(f, "ball:{k}"),
        }
    }
}

fn parse_indexed(s: &str) -> Option<(&str, usize)> {
    let (name, idx) = s.split_once(':')?;
    Some((name, idx.parse().ok()?))
}

impl FromStr for RegionTag {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "fluid" {
            return Ok(RegionTag::Fluid);
        }
        match parse_indexed(s) {
            Some(("hole", k)) => Ok(RegionTag::HoleInterior(k)),
            Some(("ball", k)) => Ok(RegionTag::BallAnnulus(k)),
            _ => Err(LabError::Config(format!("unknown region tag `{s}`"))),
        }
    }
}

impl FromStr for EdgeTag {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "outer" {
            return Ok(EdgeTag::Outer);
        }
        match parse_indexed(s) {
            Some(("hole", k)) => Ok(EdgeTag::Hole(k)),
            Some(("ball", k)) => Ok(EdgeTag::Ball(k)),
            _ => Err(LabError::UnknownBoundaryTag(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedEdge {
    pub v: [usize; 2],
    pub tag: EdgeTag,
}

/// Local edge `j` of a triangle joins local vertices `LOCAL_EDGES[j]`.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<RegionTag>,
    tagged_edges: Vec<TaggedEdge>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    edge_multiplicity: Vec<u8>,
    edge_tag: Vec<Option<EdgeTag>>,
    edge_index: HashMap<(usize, usize), usize>,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.regions == other.regions
            && self.tagged_edges == other.tagged_edges
    }
}

impl TriMesh {
    /// Builds the derived edge topology and checks orientation and tag consistency.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<RegionTag>,
        tagged_edges: Vec<TaggedEdge>,
    ) -> Result<TriMesh> {
        if regions.len() != triangles.len() {
            return Err(LabError::Internal(format!(
                "{} region tags for {} triangles",
                regions.len(),
                triangles.len()
            )));
        }
        let nv = vertices.len();
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::with_capacity(triangles.len() * 3 / 2 + 8);
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut mult: Vec<u8> = Vec::with_capacity(edges.capacity());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(LabError::Internal(format!("triangle {t} references a missing vertex")));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a <= 0.0 {
                return Err(LabError::Internal(format!(
                    "triangle {t} is not positively oriented (area {a:e})"
                )));
            }
            let mut te = [0; 3];
            for (j, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                let (i0, i1) = (tri[*p], tri[*q]);
                let key = (i0.min(i1), i0.max(i1));
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    mult.push(0);
                    edges.len() - 1
                });
                mult[e] += 1;
                if mult[e] > 2 {
                    return Err(LabError::Internal(format!("edge {key:?} shared by >2 triangles")));
                }
                te[j] = e;
            }
            tri_edges.push(te);
        }
        let mut edge_tag = vec![None; edges.len()];
        for te in &tagged_edges {
            let key = (te.v[0].min(te.v[1]), te.v[0].max(te.v[1]));
            let e = index.get(&key).ok_or_else(|| {
                LabError::Internal(format!("tagged edge {:?} is not a mesh edge", te.v))
            })?;
            edge_tag[*e] = Some(te.tag);
        }
        Ok(TriMesh {
            vertices,
            triangles,
            regions,
            tagged_edges,
            edges,
            tri_edges,
            edge_multiplicity: mult,
            edge_tag,
            edge_index: index,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[RegionTag] {
        &self.regions
    }

    pub fn tagged_edges(&self) -> &[TaggedEdge] {
        &self.tagged_edges
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of quadratic nodes (vertices plus edge midpoints).
    pub fn n_p2_nodes(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_multiplicity[e] == 1
    }

    pub fn edge_tag(&self, e: usize) -> Option<EdgeTag> {
        self.edge_tag[e]
    }

    /// Global P2 node indices of triangle `t`: three vertices, then the midpoints
    /// of local edges (0,1), (1,2), (2,0).
    pub fn p2_nodes(&self, t: usize) -> [usize; 6] {
        let tri = self.triangles[t];
        let te = self.tri_edges[t];
        let nv = self.vertices.len();
        [tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]]
    }

    pub fn node_coord(&self, node: usize) -> Point {
        let nv = self.vertices.len();
        if node < nv {
            self.vertices[node]
        } else {
            let [a, b] = self.edges[node - nv];
            midpoint(self.vertices[a], self.vertices[b])
        }
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| min_angle(self.triangle_points(t)))
            .fold(f64::INFINITY, f64::min)
            .to_degrees()
    }

    /// Edges lying on the topological boundary, with their tags.
    pub fn boundary_edges(&self) -> Vec<(usize, Option<EdgeTag>)> {
        (0..self.edges.len())
            .filter(|&e| self.is_boundary_edge(e))
            .map(|e| (e, self.edge_tag[e]))
            .collect()
    }

    /// Closed vertex loops formed by the tagged edges carrying `tag`.
    pub fn tag_loops(&self, tag: EdgeTag) -> Result<Vec<Vec<usize>>> {
        let edges: Vec<[usize; 2]> = self
            .tagged_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| e.v)
            .collect();
        chain_loops(&edges)
    }

    /// Distinct edge tags present in the mesh, sorted.
    pub fn edge_tags(&self) -> Vec<EdgeTag> {
        let mut tags: Vec<EdgeTag> = self.tagged_edges.iter().map(|e| e.tag).collect();
        tags.sort();
        tags.dedup();
        tags
    }

    pub fn triangles_with_region(&self, pred: impl Fn(RegionTag) -> bool) -> Vec<usize> {
        (0..self.n_triangles()).filter(|&t| pred(self.regions[t])).collect()
    }

    /// Locates the triangle containing `p`; returns the triangle and barycentric
    /// coordinates. Points on shared edges resolve to the first triangle found.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.n_triangles() {
            let l = barycentric(self.triangle_points(t), p);
            let worst = l[0].min(l[1]).min(l[2]);
            if worst >= -1e-12 {
                return Some((t, l));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, l, worst));
            }
        }
        // tolerate points a hair outside due to rounding of boundary coordinates
        match best {
            Some((t, l, worst)) if worst > -1e-9 => Some((t, l)),
            _ => None,
        }
    }

    /// Multiplies every coordinate by `factor`; topology and tags are untouched.
    pub fn rescaled(&self, factor: f64) -> TriMesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            v[0] *= factor;
            v[1] *= factor;
        }
        m
    }

    /// Applies `x -> (x - center) * factor`, exact up to one rounding per step.
    pub fn mapped(&self, center: Point, factor: f64) -> TriMesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            v[0] = (v[0] - center[0]) * factor;
            v[1] = (v[1] - center[1]) * factor;
        }
        m
    }

    /// Extracts the triangles selected by `keep`, renumbering vertices in parent order.
    /// Every topological boundary edge of the result must carry a tag from the parent.
    pub fn submesh(&self, keep: impl Fn(usize, RegionTag) -> bool) -> Result<Submesh> {
        let parent_triangle: Vec<usize> = (0..self.n_triangles())
            .filter(|&t| keep(t, self.regions[t]))
            .collect();
        let mut used = vec![false; self.n_vertices()];
        for &t in &parent_triangle {
            for &v in &self.triangles[t] {
                used[v] = true;
            }
        }
        let mut new_index = vec![usize::MAX; self.n_vertices()];
        let mut parent_vertex = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                new_index[v] = parent_vertex.len();
                parent_vertex.push(v);
            }
        }
        let vertices = parent_vertex.iter().map(|&v| self.vertices[v]).collect();
        let triangles = parent_triangle
            .iter()
            .map(|&t| self.triangles[t].map(|v| new_index[v]))
            .collect();
        let regions = parent_triangle.iter().map(|&t| self.regions[t]).collect();
        let mut in_sub = vec![0u8; self.n_edges()];
        for &t in &parent_triangle {
            for &e in &self.tri_edges[t] {
                in_sub[e] += 1;
            }
        }
        let mut tagged = Vec::new();
        for te in &self.tagged_edges {
            let (a, b) = (te.v[0], te.v[1]);
            let key = self.edge_index(a, b);
            if let Some(e) = key {
                if in_sub[e] > 0 {
                    tagged.push(TaggedEdge {
                        v: [new_index[a], new_index[b]],
                        tag: te.tag,
                    });
                }
            }
        }
        let mesh = TriMesh::new(vertices, triangles, regions, tagged)?;
        for (e, tag) in mesh.boundary_edges() {
            if tag.is_none() {
                let [a, b] = mesh.edges[e];
                return Err(LabError::Internal(format!(
                    "submesh boundary edge ({}, {}) has no tag",
                    parent_vertex[a], parent_vertex[b]
                )));
            }
        }
        let parent_edge = mesh
            .edges
            .iter()
            .map(|&[a, b]| {
                self.edge_index(parent_vertex[a], parent_vertex[b])
                    .expect("submesh edge exists in parent")
            })
            .collect();
        Ok(Submesh {
            mesh,
            parent_vertex,
            parent_edge,
            parent_triangle,
        })
    }

    /// Index of the edge joining vertices `a` and `b`, if any.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Text serialization (`trimesh v1`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "trimesh v1 {} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            self.tagged_edges.len()
        )
        .unwrap();
        for v in &self.vertices {
            writeln!(s, "{:e} {:e}", v[0], v[1]).unwrap();
        }
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r).unwrap();
        }
        for e in &self.tagged_edges {
            writeln!(s, "{} {} {}", e.v[0], e.v[1], e.tag).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<TriMesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, message: &str| LabError::Parse {
            line: line + 1,
            message: message.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty mesh file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != "trimesh" || h[1] != "v1" {
            return Err(perr(hl, "expected `trimesh v1 <nv> <nt> <nb>`"));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| perr(hl, "bad count"));
        let (nv, nt, nb) = (count(h[2])?, count(h[3])?, count(h[4])?);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l, line) = lines.next().ok_or_else(|| perr(usize::MAX - 1, "truncated vertex list"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(perr(l, "expected `x y`"));
            }
            let x = f[0].parse::<f64>().map_err(|_| perr(l, "bad coordinate"))?;
            let y = f[1].parse::<f64>().map_err(|_| perr(l, "bad coordinate"))?;
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        let mut regions = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (l, line) = lines.next().ok_or_else(|| perr(usize::MAX - 1, "truncated triangle list"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(perr(l, "expected `i j k region_tag`"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| perr(l, "bad vertex index"));
            triangles.push([idx(f[0])?, idx(f[1])?, idx(f[2])?]);
            regions.push(f[3].parse::<RegionTag>().map_err(|e| perr(l, &e.to_string()))?);
        }
        let mut tagged = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (l, line) = lines.next().ok_or_else(|| perr(usize::MAX - 1, "truncated edge list"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(l, "expected `i j tag`"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| perr(l, "bad vertex index"));
            tagged.push(TaggedEdge {
                v: [idx(f[0])?, idx(f[1])?],
                tag: f[2].parse::<EdgeTag>().map_err(|e| perr(l, &e.to_string()))?,
            });
        }
        if let Some((l, _)) = lines.next() {
            return Err(perr(l, "trailing content after mesh"));
        }
        TriMesh::new(vertices, triangles, regions, tagged)
    }

    /// SHA-256 of the text serialization, hex encoded.
    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A mesh extracted from a parent mesh, with index maps back to the parent.
#[derive(Debug, Clone)]
pub struct Submesh {
    pub mesh: TriMesh,
    pub parent_vertex: Vec<usize>,
    pub parent_edge: Vec<usize>,
    pub parent_triangle: Vec<usize>,
}

impl Submesh {
    /// Maps a P2 node of the submesh to the corresponding P2 node of the parent.
    pub fn parent_node(&self, node: usize, parent: &TriMesh) -> usize {
        let nv = self.mesh.n_vertices();
        if node < nv {
            self.parent_vertex[node]
        } else {
            parent.n_vertices() + self.parent_edge[node - nv]
        }
    }

    pub fn parent_nodes(&self, parent: &TriMesh) -> Vec<usize> {
        (0..self.mesh.n_p2_nodes())
            .map(|n| self.parent_node(n, parent))
            .collect()
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

pub fn barycentric(tri: [Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = tri;
    let area = signed_area(a, b, c);
    let l0 = signed_area(p, b, c) / area;
    let l1 = signed_area(a, p, c) / area;
    [l0, l1, 1.0 - l0 - l1]
}

pub fn min_angle(tri: [Point; 3]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let c = tri[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        m = m.min(cross.abs().atan2(dot));
    }
    m
}

pub fn chain_loops(edges: &[[usize; 2]]) -> Result<Vec<Vec<usize>>> {
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    for &[a, b] in edges {
        next.entry(a).or_default().push(b);
        next.entry(b).or_default().push(a);
    }
    if next.values().any(|n| n.len() != 2) {
        return Err(LabError::Internal("tagged edges do not form closed loops".into()));
    }
    let mut seen: HashMap<usize, bool> = HashMap::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut loops = Vec::new();
    for s in starts {
        if seen.contains_key(&s) {
            continue;
        }
        let mut lp = vec![s];
        seen.insert(s, true);
        let mut prev = s;
        let mut cur = next[&s][0];
        while cur != s {
            lp.push(cur);
            seen.insert(cur, true);
            let n = &next[&cur];
            let nxt = if n[0] == prev { n[1] } else { n[0] };
            prev = cur;
            cur = nxt;
        }
        loops.push(lp);
    }
    Ok(loops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![RegionTag::Fluid, RegionTag::HoleInterior(0)],
            vec![
                TaggedEdge { v: [0, 1], tag: EdgeTag::Outer },
                TaggedEdge { v: [1, 2], tag: EdgeTag::Outer },
                TaggedEdge { v: [2, 3], tag: EdgeTag::Outer },
                TaggedEdge { v: [3, 0], tag: EdgeTag::Outer },
                TaggedEdge { v: [0, 2], tag: EdgeTag::Hole(0) },
            ],
        )
        .unwrap()
    }

    #[test]
    fn topology() {
        let m = two_triangles();
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.n_p2_nodes(), 9);
        assert_eq!(m.boundary_edges().len(), 4);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert!((m.min_angle_deg() - 45.0).abs() < 1e-12);
        let loops = m.tag_loops(EdgeTag::Outer).unwrap();
        assert_eq!(loops, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn rejects_clockwise_triangles() {
        let err = TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 2, 1]],
            vec![RegionTag::Fluid],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut m = two_triangles();
        m = m.rescaled(1.0 / 3.0);
        let back = TriMesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.checksum(), m.checksum());
    }

    #[test]
    fn malformed_text_reports_line() {
        let bad = "trimesh v1 1 0 0\n0.0 abc\n";
        match TriMesh::from_text(bad) {
            Err(LabError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(TriMesh::from_text("trimesh v2 0 0 0").is_err());
    }

    #[test]
    fn submesh_keeps_tags_and_maps_nodes() {
        let m = two_triangles();
        let sub = m.submesh(|_, r| r == RegionTag::Fluid).unwrap();
        assert_eq!(sub.mesh.n_triangles(), 1);
        assert_eq!(sub.parent_vertex, vec![0, 1, 2]);
        for n in 0..sub.mesh.n_p2_nodes() {
            assert_eq!(sub.mesh.node_coord(n), m.node_coord(sub.parent_node(n, &m)));
        }
        assert_eq!(sub.mesh.boundary_edges().len(), 3);
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = two_triangles();
        let (t, l) = m.locate([0.75, 0.25]).unwrap();
        assert_eq!(t, 0);
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(m.locate([2.0, 0.5]).is_none());
    }
}
