//! Taylor-Hood (P2 velocity, P1 pressure) discretisation of the Stokes system
//!
//! ```text
//!   ∫ ∇v:∇φ − ∫ π div φ = −∫ G:∇φ + ∫ f·φ + ∫ ∇u:∇φ
//!   ∫ q div v           = ℓ(q)
//!   ∫ π                 = 0
//! ```
//!
//! with Dirichlet data eliminated. `(∇v)_ij = ∂_j v_i` and `(div G)_i = ∂_j G_ij`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::field::{contract, At, ScalarField, Tensor, TensorField, Vec2, VectorField};
use crate::norms::{lp_norm, LebesgueExponent, NormField};
use crate::mesh::{EdgeTag, Point, TriMesh, LOCAL_EDGES};
use crate::quadrature::{rule, TriangleRule, ASSEMBLY_DEGREE, POWER_DEGREE};
use crate::sparse::{amd_order, Ldlt, SymMatrix, SymTriplets};

/// Quadrature degree for source integrals (same rule as the `L^p` norms, so the
/// discrete energy inequality is an exact Cauchy-Schwarz inequality).
pub const SOURCE_DEGREE: usize = POWER_DEGREE;
/// Relative tolerance of the compatibility check.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-8;

const CHUNK: usize = 4096;

/// Gradients of the barycentric coordinates and the area of a triangle.
pub fn barycentric_gradients(p: &[Point; 3]) -> ([Vec2; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let g = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    (g, 0.5 * det)
}

/// P2 shape functions in the node order of `TriMesh::p2_nodes`.
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    let e = |j: usize| {
        let [a, b] = LOCAL_EDGES[j];
        4.0 * l[a] * l[b]
    };
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        e(0),
        e(1),
        e(2),
    ]
}

pub fn p2_gradients(l: [f64; 3], gl: &[Vec2; 3]) -> [Vec2; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let f = 4.0 * l[i] - 1.0;
        out[i] = [f * gl[i][0], f * gl[i][1]];
    }
    for j in 0..3 {
        let [a, b] = LOCAL_EDGES[j];
        out[3 + j] = [
            4.0 * (l[a] * gl[b][0] + l[b] * gl[a][0]),
            4.0 * (l[a] * gl[b][1] + l[b] * gl[a][1]),
        ];
    }
    out
}

pub fn map_point(p: &[Point; 3], l: [f64; 3]) -> Point {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

/// Velocity gradient of P2 coefficients (two per node) on triangle `t`.
pub fn p2_gradient_at(mesh: &TriMesh, coeffs: &[f64], t: usize, l: [f64; 3], gl: &[Vec2; 3]) -> Tensor {
    let nodes = mesh.p2_nodes(t);
    let g = p2_gradients(l, gl);
    let mut m = [[0.0; 2]; 2];
    for i in 0..6 {
        let u = [coeffs[2 * nodes[i]], coeffs[2 * nodes[i] + 1]];
        for c in 0..2 {
            for d in 0..2 {
                m[c][d] += u[c] * g[i][d];
            }
        }
    }
    m
}

pub fn p2_value_at(mesh: &TriMesh, coeffs: &[f64], t: usize, l: [f64; 3]) -> Vec2 {
    let nodes = mesh.p2_nodes(t);
    let phi = p2_values(l);
    let mut v = [0.0; 2];
    for i in 0..6 {
        v[0] += phi[i] * coeffs[2 * nodes[i]];
        v[1] += phi[i] * coeffs[2 * nodes[i] + 1];
    }
    v
}

pub fn p1_value_at(mesh: &TriMesh, values: &[f64], t: usize, l: [f64; 3]) -> f64 {
    let tri = mesh.triangles()[t];
    l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]
}

/// Dirichlet data on the topological boundary of the mesh.
#[derive(Debug, Clone, Default)]
pub enum Dirichlet {
    #[default]
    Zero,
    /// Data per boundary tag; boundary edges with unlisted tags get zero data.
    Tags(Vec<(EdgeTag, VectorField)>),
    /// Values at every P2 node (two per node); only boundary nodes are read.
    Nodal(Arc<Vec<f64>>),
}

/// Right-hand side of the momentum equation; terms are summed.
#[derive(Debug, Clone, Default)]
pub struct Source {
    /// `G` in `div G`, tested as `−∫ G:∇φ`.
    pub div_form: Option<TensorField>,
    /// Body force `f`, tested as `∫ f·φ`.
    pub body: Option<VectorField>,
    /// P2 coefficients of `u` (on this mesh) for `−Δu`, tested as `∫ ∇u:∇φ`.
    pub weak_laplacian: Option<Arc<Vec<f64>>>,
}

impl Source {
    pub fn div_form(g: TensorField) -> Source {
        Source {
            div_form: Some(g),
            ..Source::default()
        }
    }

    pub fn body(f: VectorField) -> Source {
        Source {
            body: Some(f),
            ..Source::default()
        }
    }

    pub fn weak_laplacian(u: Arc<Vec<f64>>) -> Source {
        Source {
            weak_laplacian: Some(u),
            ..Source::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.div_form.as_ref().is_none_or(|g| g.is_zero())
            && self.body.as_ref().is_none_or(|f| f.is_zero())
            && self.weak_laplacian.as_ref().is_none_or(|u| u.iter().all(|v| *v == 0.0))
    }
}

/// Prescribed divergence.
#[derive(Debug, Clone, Default)]
pub enum DivData {
    #[default]
    Zero,
    /// `div v = f`, tested as `ℓ(q) = ∫ f q`.
    Field(ScalarField),
    /// The functional `ℓ` given by its values on the P1 pressure basis.
    Functional(Arc<Vec<f64>>),
}

/// Unknown numbering and elimination order of the saddle-point system.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_nodes: usize,
    pub n_vertices: usize,
    /// System index of the x-component of each node (y follows), or `usize::MAX`
    /// for Dirichlet nodes.
    pub velocity_index: Vec<usize>,
    pub n_velocity: usize,
    pub pressure_offset: usize,
    pub multiplier: usize,
    pub n_total: usize,
    pub boundary_nodes: Vec<usize>,
    pub order: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &TriMesh) -> Result<DofMap> {
        let nv = mesh.n_vertices();
        let n_nodes = mesh.n_p2_nodes();
        let mut on_boundary = vec![false; n_nodes];
        for (e, tag) in mesh.boundary_edges() {
            if tag.is_none() {
                let [a, b] = mesh.edges()[e];
                return Err(LabError::Internal(format!("boundary edge ({a}, {b}) carries no tag")));
            }
            let [a, b] = mesh.edges()[e];
            on_boundary[a] = true;
            on_boundary[b] = true;
            on_boundary[nv + e] = true;
        }
        let mut velocity_index = vec![usize::MAX; n_nodes];
        let mut n_velocity = 0;
        let mut boundary_nodes = Vec::new();
        for node in 0..n_nodes {
            if on_boundary[node] {
                boundary_nodes.push(node);
            } else {
                velocity_index[node] = n_velocity;
                n_velocity += 2;
            }
        }
        let pressure_offset = n_velocity;
        let multiplier = pressure_offset + nv;
        let n_total = multiplier + 1;
        let mut dofs = DofMap {
            n_nodes,
            n_vertices: nv,
            velocity_index,
            n_velocity,
            pressure_offset,
            multiplier,
            n_total,
            boundary_nodes,
            order: Vec::new(),
        };
        dofs.order = dofs.elimination_order(mesh)?;
        Ok(dofs)
    }

    /// Velocity nodes in minimum-degree order; each pressure right after the last
    /// velocity node of its patch; then the multiplier; then one held-out
    /// pressure. Under this order every pivot of the LDL^T factorization is
    /// nonzero for an inf-sup stable pair.
    fn elimination_order(&self, mesh: &TriMesh) -> Result<Vec<usize>> {
        let free_nodes: Vec<usize> = (0..self.n_nodes)
            .filter(|&n| self.velocity_index[n] != usize::MAX)
            .collect();
        let mut compact = vec![usize::MAX; self.n_nodes];
        for (k, &n) in free_nodes.iter().enumerate() {
            compact[n] = k;
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); free_nodes.len()];
        for t in 0..mesh.n_triangles() {
            let nodes = mesh.p2_nodes(t).map(|n| compact[n]);
            for &a in &nodes {
                if a == usize::MAX {
                    continue;
                }
                for &b in &nodes {
                    if b != usize::MAX && b != a {
                        adjacency[a].push(b);
                    }
                }
            }
        }
        let node_order = amd_order(&adjacency)?;
        drop(adjacency);
        let mut position = vec![usize::MAX; self.n_nodes];
        for (k, &c) in node_order.iter().enumerate() {
            position[free_nodes[c]] = k;
        }
        // last free velocity node touching each pressure vertex
        let mut key: Vec<Option<usize>> = vec![None; self.n_vertices];
        for t in 0..mesh.n_triangles() {
            let nodes = mesh.p2_nodes(t);
            let last = nodes
                .iter()
                .filter(|&&n| position[n] != usize::MAX)
                .map(|&n| position[n])
                .max();
            for &v in &mesh.triangles()[t] {
                key[v] = match (key[v], last) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
            }
        }
        let held_out = (0..self.n_vertices)
            .max_by_key(|&v| (key[v].map_or(0, |k| k + 1), v))
            .ok_or_else(|| LabError::Internal("mesh has no vertices".into()))?;
        let mut by_key: Vec<Vec<usize>> = vec![Vec::new(); node_order.len() + 1];
        let mut orphans = Vec::new();
        for v in 0..self.n_vertices {
            if v == held_out {
                continue;
            }
            match key[v] {
                Some(k) => by_key[k].push(v),
                None => orphans.push(v),
            }
        }
        let mut order = Vec::with_capacity(self.n_total);
        // pressures without free velocity neighbours give zero pivots; put them
        // first so the factorization reports them
        order.extend(orphans.iter().map(|&v| self.pressure_offset + v));
        for (k, &c) in node_order.iter().enumerate() {
            let node = free_nodes[c];
            let i = self.velocity_index[node];
            order.push(i);
            order.push(i + 1);
            order.extend(by_key[k].iter().map(|&v| self.pressure_offset + v));
        }
        order.push(self.multiplier);
        order.push(self.pressure_offset + held_out);
        debug_assert_eq!(order.len(), self.n_total);
        Ok(order)
    }

    pub fn label(&self, mesh: &TriMesh, i: usize) -> String {
        if i == self.multiplier {
            return "mean-pressure multiplier".into();
        }
        if i >= self.pressure_offset {
            let v = i - self.pressure_offset;
            let p = mesh.vertices()[v];
            return format!("pressure at vertex {v} ({:.4e}, {:.4e})", p[0], p[1]);
        }
        let node = self
            .velocity_index
            .iter()
            .position(|&k| k == i - i % 2)
            .unwrap_or(0);
        let p = mesh.node_coord(node);
        format!(
            "velocity {} at node {node} ({:.4e}, {:.4e})",
            ["x", "y"][i % 2],
            p[0],
            p[1]
        )
    }
}

/// Per-triangle matrices.
struct Element {
    stiffness: [[f64; 6]; 6],
    /// `b[q][2 i + c] = ∫ ψ_q ∂_c φ_i`
    div: [[f64; 12]; 3],
    mass: f64,
}

fn element(mesh: &TriMesh, t: usize, r: &TriangleRule) -> Element {
    let p = mesh.triangle_points(t);
    let (gl, area) = barycentric_gradients(&p);
    let mut stiffness = [[0.0; 6]; 6];
    let mut div = [[0.0; 12]; 3];
    for (l, w) in r.bary.iter().zip(&r.weights) {
        let g = p2_gradients(*l, &gl);
        let wa = w * area;
        for i in 0..6 {
            for j in i..6 {
                stiffness[i][j] += wa * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
            for q in 0..3 {
                div[q][2 * i] += wa * l[q] * g[i][0];
                div[q][2 * i + 1] += wa * l[q] * g[i][1];
            }
        }
    }
    for i in 0..6 {
        for j in 0..i {
            stiffness[i][j] = stiffness[j][i];
        }
    }
    Element {
        stiffness,
        div,
        mass: area / 3.0,
    }
}

/// The assembled operator: system matrix plus the columns of eliminated
/// Dirichlet unknowns.
#[derive(Debug, Clone)]
pub struct Operator {
    pub matrix: SymMatrix,
    /// `(row, dirichlet unknown 2 node + c, value)`
    pub coupling: Vec<(usize, usize, f64)>,
    /// `∫ ψ_v` for every vertex.
    pub pressure_mass: Vec<f64>,
}

fn assemble_operator(mesh: &TriMesh, dofs: &DofMap) -> Operator {
    let r = rule(ASSEMBLY_DEGREE);
    let nt = mesh.n_triangles();
    let mut trip = SymTriplets::with_capacity(dofs.n_total, nt * 120);
    let mut coupling = Vec::new();
    let mut pressure_mass = vec![0.0; dofs.n_vertices];
    let po = dofs.pressure_offset;
    for start in (0..nt).step_by(CHUNK) {
        let end = (start + CHUNK).min(nt);
        let elems: Vec<Element> = (start..end).into_par_iter().map(|t| element(mesh, t, r)).collect();
        for (t, el) in (start..end).zip(elems) {
            let nodes = mesh.p2_nodes(t);
            let tri = mesh.triangles()[t];
            for i in 0..6 {
                let gi = dofs.velocity_index[nodes[i]];
                for j in 0..6 {
                    let gj = dofs.velocity_index[nodes[j]];
                    let k = el.stiffness[i][j];
                    match (gi != usize::MAX, gj != usize::MAX) {
                        (true, true) if i <= j => {
                            trip.add(gi, gj, k);
                            trip.add(gi + 1, gj + 1, k);
                        }
                        (true, false) => {
                            coupling.push((gi, 2 * nodes[j], k));
                            coupling.push((gi + 1, 2 * nodes[j] + 1, k));
                        }
                        _ => {}
                    }
                }
            }
            for q in 0..3 {
                let row = po + tri[q];
                for i in 0..6 {
                    for c in 0..2 {
                        let b = -el.div[q][2 * i + c];
                        let gi = dofs.velocity_index[nodes[i]];
                        if gi != usize::MAX {
                            trip.add(row, gi + c, b);
                        } else {
                            coupling.push((row, 2 * nodes[i] + c, b));
                        }
                    }
                }
                trip.add(row, dofs.multiplier, el.mass);
                pressure_mass[tri[q]] += el.mass;
            }
        }
    }
    // keep the multiplier diagonal in the pattern
    trip.add(dofs.multiplier, dofs.multiplier, 0.0);
    Operator {
        matrix: SymMatrix::from_triplets(&trip),
        coupling,
        pressure_mass,
    }
}

/// Nodal Dirichlet values (two per P2 node, zero away from the boundary).
pub fn dirichlet_values(mesh: &TriMesh, dofs: &DofMap, data: &Dirichlet) -> Result<Vec<f64>> {
    let mut values = vec![0.0; 2 * dofs.n_nodes];
    match data {
        Dirichlet::Zero => {}
        Dirichlet::Nodal(v) => {
            if v.len() != 2 * dofs.n_nodes {
                return Err(LabError::Internal(format!(
                    "nodal Dirichlet data has {} entries for {} nodes",
                    v.len(),
                    dofs.n_nodes
                )));
            }
            for &n in &dofs.boundary_nodes {
                values[2 * n] = v[2 * n];
                values[2 * n + 1] = v[2 * n + 1];
            }
        }
        Dirichlet::Tags(list) => {
            let present = mesh.edge_tags();
            let mut map: BTreeMap<EdgeTag, &VectorField> = BTreeMap::new();
            for (tag, f) in list {
                if !present.contains(tag) {
                    return Err(LabError::UnknownBoundaryTag(tag.to_string()));
                }
                map.insert(*tag, f);
            }
            let nv = mesh.n_vertices();
            for (e, tag) in mesh.boundary_edges() {
                let Some(f) = tag.and_then(|t| map.get(&t)) else { continue };
                let [a, b] = mesh.edges()[e];
                for n in [a, b, nv + e] {
                    let x = mesh.node_coord(n);
                    let u = f.eval(At::point(x))?;
                    values[2 * n] = u[0];
                    values[2 * n + 1] = u[1];
                }
            }
        }
    }
    Ok(values)
}

/// Outward flux `∮ u·n` of P2 nodal data over the topological boundary (exact
/// Simpson rule on straight edges).
pub fn boundary_flux(mesh: &TriMesh, values: &[f64]) -> (f64, f64) {
    let nv = mesh.n_vertices();
    let mut flux = 0.0;
    let mut abs = 0.0;
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let te = mesh.triangle_edges(t);
        for j in 0..3 {
            let e = te[j];
            if !mesh.is_boundary_edge(e) {
                continue;
            }
            let [la, lb] = LOCAL_EDGES[j];
            let (a, b) = (tri[la], tri[lb]);
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let normal = [pb[1] - pa[1], pa[0] - pb[0]];
            let un = |n: usize| values[2 * n] * normal[0] + values[2 * n + 1] * normal[1];
            let (ua, um, ub) = (un(a), un(nv + e), un(b));
            flux += (ua + 4.0 * um + ub) / 6.0;
            abs += (ua.abs() + 4.0 * um.abs() + ub.abs()) / 6.0;
        }
    }
    (flux, abs)
}

/// `ℓ(ψ_v)` for every vertex, and `∫ |f|` as a scale.
fn div_functional(mesh: &TriMesh, data: &DivData) -> Result<(Vec<f64>, f64)> {
    let nv = mesh.n_vertices();
    match data {
        DivData::Zero => Ok((vec![0.0; nv], 0.0)),
        DivData::Functional(l) => {
            if l.len() != nv {
                return Err(LabError::Internal(format!("divergence functional has {} entries for {nv} vertices", l.len())));
            }
            let scale = l.iter().map(|v| v.abs()).sum();
            Ok(((**l).clone(), scale))
        }
        DivData::Field(f) => {
            let r = rule(SOURCE_DEGREE);
            let per: Vec<Result<([f64; 3], f64)>> = (0..mesh.n_triangles())
                .into_par_iter()
                .map(|t| {
                    let p = mesh.triangle_points(t);
                    let area = mesh.triangle_area(t);
                    let mut out = [0.0; 3];
                    let mut abs = 0.0;
                    for (qi, (l, w)) in r.bary.iter().zip(&r.weights).enumerate() {
                        let x = map_point(&p, *l);
                        let v = f.eval(At::quad(x, mesh, SOURCE_DEGREE, t, qi), *l)?;
                        for q in 0..3 {
                            out[q] += w * area * v * l[q];
                        }
                        abs += w * area * v.abs();
                    }
                    Ok((out, abs))
                })
                .collect();
            let mut l = vec![0.0; nv];
            let mut scale = 0.0;
            for (t, res) in per.into_iter().enumerate() {
                let (out, abs) = res?;
                let tri = mesh.triangles()[t];
                for q in 0..3 {
                    l[tri[q]] += out[q];
                }
                scale += abs;
            }
            Ok((l, scale))
        }
    }
}

/// Momentum load per velocity unknown (two per P2 node, Dirichlet ones included).
fn momentum_load(mesh: &TriMesh, source: &Source) -> Result<Vec<f64>> {
    let n_nodes = mesh.n_p2_nodes();
    let mut load = vec![0.0; 2 * n_nodes];
    if source.is_zero() {
        return Ok(load);
    }
    if let Some(u) = &source.weak_laplacian {
        if u.len() != 2 * n_nodes {
            return Err(LabError::Internal(format!(
                "weak Laplacian coefficients have {} entries for {n_nodes} nodes",
                u.len()
            )));
        }
    }
    let degree = [
        source.div_form.as_ref().and_then(|g| g.table_degree()),
        source.body.as_ref().and_then(|f| f.table_degree()),
    ]
    .into_iter()
    .flatten()
    .next()
    .unwrap_or(SOURCE_DEGREE);
    let r = rule(degree);
    let r_stiff = rule(ASSEMBLY_DEGREE);
    // a constant G is divergence free: its load on interior test functions is exactly zero
    let div_form = source.div_form.as_ref().filter(|g| !matches!(g, TensorField::Const(_)));
    let nt = mesh.n_triangles();
    for start in (0..nt).step_by(CHUNK) {
        let end = (start + CHUNK).min(nt);
        let parts: Vec<Result<[f64; 12]>> = (start..end)
            .into_par_iter()
            .map(|t| {
                let p = mesh.triangle_points(t);
                let (gl, area) = barycentric_gradients(&p);
                let mut f = [0.0; 12];
                if div_form.is_some() || source.body.is_some() {
                    for (qi, (l, w)) in r.bary.iter().zip(&r.weights).enumerate() {
                        let x = map_point(&p, *l);
                        let at = At::quad(x, mesh, degree, t, qi);
                        let wa = w * area;
                        if let Some(g) = div_form {
                            let m = g.eval(at)?;
                            let grads = p2_gradients(*l, &gl);
                            for i in 0..6 {
                                for c in 0..2 {
                                    f[2 * i + c] -= wa * (m[c][0] * grads[i][0] + m[c][1] * grads[i][1]);
                                }
                            }
                        }
                        if let Some(body) = &source.body {
                            let v = body.eval(at)?;
                            let phi = p2_values(*l);
                            for i in 0..6 {
                                f[2 * i] += wa * v[0] * phi[i];
                                f[2 * i + 1] += wa * v[1] * phi[i];
                            }
                        }
                    }
                }
                if let Some(u) = &source.weak_laplacian {
                    let el = element(mesh, t, r_stiff);
                    let nodes = mesh.p2_nodes(t);
                    for i in 0..6 {
                        for j in 0..6 {
                            f[2 * i] += el.stiffness[i][j] * u[2 * nodes[j]];
                            f[2 * i + 1] += el.stiffness[i][j] * u[2 * nodes[j] + 1];
                        }
                    }
                }
                Ok(f)
            })
            .collect();
        for (t, part) in (start..end).zip(parts) {
            let f = part?;
            let nodes = mesh.p2_nodes(t);
            for i in 0..6 {
                load[2 * nodes[i]] += f[2 * i];
                load[2 * nodes[i] + 1] += f[2 * i + 1];
            }
        }
    }
    Ok(load)
}

/// Assembled saddle-point system for one set of data.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub mesh: Arc<TriMesh>,
    pub dofs: Arc<DofMap>,
    pub operator: Arc<Operator>,
    pub rhs: Vec<f64>,
    /// Nodal Dirichlet values, two per P2 node.
    pub dirichlet: Vec<f64>,
    /// `ℓ(ψ_v)` per vertex.
    pub div_functional: Vec<f64>,
}

/// The mesh-dependent part of the problem, assembled once.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<TriMesh>,
    pub dofs: Arc<DofMap>,
    pub operator: Arc<Operator>,
}

impl Discretization {
    pub fn new(mesh: Arc<TriMesh>) -> Result<Discretization> {
        let dofs = DofMap::new(&mesh)?;
        let operator = assemble_operator(&mesh, &dofs);
        Ok(Discretization {
            mesh,
            dofs: Arc::new(dofs),
            operator: Arc::new(operator),
        })
    }

    /// Builds the right-hand side after checking compatibility of the data.
    pub fn system(&self, source: &Source, div_data: &DivData, dirichlet: &Dirichlet) -> Result<SaddleSystem> {
        let mesh = &*self.mesh;
        let dofs = &*self.dofs;
        let dir = dirichlet_values(mesh, dofs, dirichlet)?;
        let (ell, ell_scale) = div_functional(mesh, div_data)?;
        let (flux, flux_scale) = boundary_flux(mesh, &dir);
        let div_integral: f64 = ell.iter().sum();
        let mismatch = (div_integral - flux).abs();
        let scale = ell_scale.max(flux_scale);
        if scale > 0.0 && mismatch > COMPATIBILITY_TOLERANCE * scale {
            return Err(LabError::Compatibility {
                div_integral,
                flux,
                mismatch,
                relative: mismatch / scale,
            });
        }
        let load = momentum_load(mesh, source)?;
        let mut rhs = vec![0.0; dofs.n_total];
        for node in 0..dofs.n_nodes {
            let i = dofs.velocity_index[node];
            if i != usize::MAX {
                rhs[i] = load[2 * node];
                rhs[i + 1] = load[2 * node + 1];
            }
        }
        for v in 0..dofs.n_vertices {
            rhs[dofs.pressure_offset + v] = -ell[v];
        }
        for &(row, d, val) in &self.operator.coupling {
            rhs[row] -= val * dir[d];
        }
        Ok(SaddleSystem {
            mesh: self.mesh.clone(),
            dofs: self.dofs.clone(),
            operator: self.operator.clone(),
            rhs,
            dirichlet: dir,
            div_functional: ell,
        })
    }

    pub fn factor(&self) -> Result<StokesSolver> {
        let mesh = self.mesh.clone();
        let dofs = self.dofs.clone();
        let ldlt = Ldlt::factor(self.operator.matrix.clone(), &dofs.order, &|i| dofs.label(&mesh, i))?;
        Ok(StokesSolver {
            disc: self.clone(),
            ldlt: Arc::new(ldlt),
        })
    }
}

/// Assembles the saddle-point system of one problem.
pub fn assemble(mesh: Arc<TriMesh>, source: &Source, div_data: &DivData, dirichlet: &Dirichlet) -> Result<SaddleSystem> {
    Discretization::new(mesh)?.system(source, div_data, dirichlet)
}

/// Factors and solves an assembled system.
pub fn solve(system: &SaddleSystem) -> Result<StokesSolution> {
    let disc = Discretization {
        mesh: system.mesh.clone(),
        dofs: system.dofs.clone(),
        operator: system.operator.clone(),
    };
    disc.factor()?.solve_system(system)
}

/// A factored discretization; solves any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct StokesSolver {
    pub disc: Discretization,
    ldlt: Arc<Ldlt>,
}

impl StokesSolver {
    pub fn new(mesh: Arc<TriMesh>) -> Result<StokesSolver> {
        Discretization::new(mesh)?.factor()
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.disc.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.disc.dofs
    }

    pub fn n_unknowns(&self) -> usize {
        self.disc.dofs.n_total
    }

    pub fn solve(&self, source: &Source, div_data: &DivData, dirichlet: &Dirichlet) -> Result<StokesSolution> {
        let system = self.disc.system(source, div_data, dirichlet)?;
        let solution = self.solve_system(&system)?;
        if cfg!(debug_assertions) {
            check_energy(&solution, &system, source)?;
        }
        Ok(solution)
    }

    pub fn solve_system(&self, system: &SaddleSystem) -> Result<StokesSolution> {
        let x = self.ldlt.solve(&system.rhs)?;
        Ok(self.unpack(&x, &system.dirichlet))
    }

    fn unpack(&self, x: &[f64], dirichlet: &[f64]) -> StokesSolution {
        let dofs = &*self.disc.dofs;
        let mut velocity = dirichlet.to_vec();
        for node in 0..dofs.n_nodes {
            let i = dofs.velocity_index[node];
            if i != usize::MAX {
                velocity[2 * node] = x[i];
                velocity[2 * node + 1] = x[i + 1];
            }
        }
        let pressure = x[dofs.pressure_offset..dofs.multiplier].to_vec();
        let mass = &self.disc.operator.pressure_mass;
        let integral: f64 = pressure.iter().zip(mass).map(|(p, m)| p * m).sum();
        let area: f64 = mass.iter().sum();
        StokesSolution {
            mesh: self.disc.mesh.clone(),
            velocity,
            pressure,
            pressure_mean: integral / area,
            multiplier: x[dofs.multiplier],
        }
    }
}

/// `‖∇v‖_2 ≤ ‖G‖_2` for zero-trace, divergence-free, div-form problems.
fn check_energy(solution: &StokesSolution, system: &SaddleSystem, source: &Source) -> Result<()> {
    let Some(g) = &source.div_form else { return Ok(()) };
    if source.body.is_some()
        || source.weak_laplacian.is_some()
        || system.dirichlet.iter().any(|v| *v != 0.0)
        || system.div_functional.iter().any(|v| *v != 0.0)
    {
        return Ok(());
    }
    let two = LebesgueExponent::new(2.0)?;
    let mesh = &*solution.mesh;
    let grad = lp_norm(NormField::VelocityGradient(&solution.velocity), mesh, two, SOURCE_DEGREE)?.value;
    let bound = lp_norm(NormField::Tensor(g), mesh, two, SOURCE_DEGREE)?.value;
    if grad > bound * (1.0 + 1e-9) + 1e-300 {
        return Err(LabError::Internal(format!(
            "energy inequality violated: ‖∇v‖ = {grad:e} > ‖G‖ = {bound:e}"
        )));
    }
    Ok(())
}

/// Solves `div w = f` with the given boundary data (a Stokes problem with no
/// momentum source and prescribed divergence).
pub fn solve_prescribed_divergence(mesh: Arc<TriMesh>, f: &ScalarField, dirichlet: &Dirichlet) -> Result<StokesSolution> {
    StokesSolver::new(mesh)?.solve(&Source::default(), &DivData::Field(f.clone()), dirichlet)
}

/// Velocity (two coefficients per P2 node) and pressure (one per vertex).
#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub mesh: Arc<TriMesh>,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    /// `∫ π / |Ω|`, zero up to rounding.
    pub pressure_mean: f64,
    /// Lagrange multiplier of the mean constraint; zero for compatible data.
    pub multiplier: f64,
}

impl StokesSolution {
    pub fn zero(mesh: Arc<TriMesh>) -> StokesSolution {
        let n = mesh.n_p2_nodes();
        let nv = mesh.n_vertices();
        StokesSolution {
            mesh,
            velocity: vec![0.0; 2 * n],
            pressure: vec![0.0; nv],
            pressure_mean: 0.0,
            multiplier: 0.0,
        }
    }

    pub fn velocity_at_node(&self, node: usize) -> Vec2 {
        [self.velocity[2 * node], self.velocity[2 * node + 1]]
    }

    /// Text dump: header, velocity pairs, pressures, mesh checksum.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "stokes v1 {} {}", self.velocity.len() / 2, self.pressure.len()).unwrap();
        for c in self.velocity.chunks(2) {
            writeln!(s, "{:e} {:e}", c[0], c[1]).unwrap();
        }
        for p in &self.pressure {
            writeln!(s, "{p:e}").unwrap();
        }
        writeln!(s, "mesh {}", self.mesh.checksum()).unwrap();
        s
    }

    /// Reads a dump written for `mesh`; the checksum must match.
    pub fn from_text(text: &str, mesh: Arc<TriMesh>) -> Result<StokesSolution> {
        let perr = |line: usize, message: &str| LabError::Parse {
            line: line + 1,
            message: message.into(),
        };
        let lines: Vec<&str> = text.lines().collect();
        let header: Vec<&str> = lines.first().ok_or_else(|| perr(0, "empty file"))?.split_whitespace().collect();
        if header.len() != 4 || header[0] != "stokes" || header[1] != "v1" {
            return Err(perr(0, "expected `stokes v1 <nodes> <vertices>`"));
        }
        let nn: usize = header[2].parse().map_err(|_| perr(0, "bad node count"))?;
        let np: usize = header[3].parse().map_err(|_| perr(0, "bad vertex count"))?;
        if nn != mesh.n_p2_nodes() || np != mesh.n_vertices() {
            return Err(perr(0, "counts do not match the mesh"));
        }
        if lines.len() != 2 + nn + np {
            return Err(perr(lines.len().saturating_sub(1), "wrong number of lines"));
        }
        let num = |l: usize, s: &str| s.parse::<f64>().map_err(|_| perr(l, "bad number"));
        let mut velocity = Vec::with_capacity(2 * nn);
        for l in 1..=nn {
            let f: Vec<&str> = lines[l].split_whitespace().collect();
            if f.len() != 2 {
                return Err(perr(l, "expected two velocity components"));
            }
            velocity.push(num(l, f[0])?);
            velocity.push(num(l, f[1])?);
        }
        let mut pressure = Vec::with_capacity(np);
        for l in nn + 1..=nn + np {
            pressure.push(num(l, lines[l].trim())?);
        }
        let last = lines.len() - 1;
        let sum = lines[last].strip_prefix("mesh ").ok_or_else(|| perr(last, "expected `mesh <checksum>`"))?;
        if sum.trim() != mesh.checksum() {
            return Err(perr(last, "mesh checksum mismatch"));
        }
        let mut sol = StokesSolution::zero(mesh);
        sol.velocity = velocity;
        sol.pressure = pressure;
        sol.pressure_mean = mean_of_p1(&sol.mesh, &sol.pressure);
        Ok(sol)
    }
}

pub fn mean_of_p1(mesh: &TriMesh, values: &[f64]) -> f64 {
    let mut integral = 0.0;
    let mut area = 0.0;
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let a = mesh.triangle_area(t);
        integral += a * (values[tri[0]] + values[tri[1]] + values[tri[2]]) / 3.0;
        area += a;
    }
    integral / area
}

/// Velocity and pressure interpolated at a point of the mesh.
pub fn evaluate_at(solution: &StokesSolution, x: Point) -> Result<(Vec2, f64)> {
    let mesh = &*solution.mesh;
    let (t, l) = mesh.locate(x).ok_or(LabError::OutsideMesh(x[0], x[1]))?;
    Ok((
        p2_value_at(mesh, &solution.velocity, t, l),
        p1_value_at(mesh, &solution.pressure, t, l),
    ))
}

/// `max_q |∫ q div v − ℓ(q)| / max_q ‖ψ_q‖_{L²}` over the pressure basis, divided by
/// `‖∇v‖_{L²} + ‖ℓ‖` as a scale: the discrete divergence residual.
pub fn divergence_residual(mesh: &TriMesh, velocity: &[f64], ell: &[f64]) -> f64 {
    let r = rule(ASSEMBLY_DEGREE);
    let nv = mesh.n_vertices();
    let mut b = vec![0.0; nv];
    let mut grad2 = 0.0;
    for t in 0..mesh.n_triangles() {
        let p = mesh.triangle_points(t);
        let (gl, area) = barycentric_gradients(&p);
        let tri = mesh.triangles()[t];
        for (l, w) in r.bary.iter().zip(&r.weights) {
            let g = p2_gradient_at(mesh, velocity, t, *l, &gl);
            let div = g[0][0] + g[1][1];
            for q in 0..3 {
                b[tri[q]] += w * area * l[q] * div;
            }
            grad2 += w * area * contract(&g, &g);
        }
    }
    let worst = b.iter().zip(ell).map(|(b, l)| (b - l).abs()).fold(0.0, f64::max);
    let scale = grad2.sqrt() + ell.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// `∫ ψ_v div v` for every vertex.
pub fn discrete_divergence(mesh: &TriMesh, velocity: &[f64]) -> Vec<f64> {
    divergence_against(mesh, velocity, |_| true)
}

/// `∫ ψ_v div v` restricted to the triangles selected by `keep`.
pub fn divergence_against(mesh: &TriMesh, velocity: &[f64], keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let r = rule(ASSEMBLY_DEGREE);
    let mut b = vec![0.0; mesh.n_vertices()];
    for t in (0..mesh.n_triangles()).filter(|&t| keep(t)) {
        let p = mesh.triangle_points(t);
        let (gl, area) = barycentric_gradients(&p);
        let tri = mesh.triangles()[t];
        for (l, w) in r.bary.iter().zip(&r.weights) {
            let g = p2_gradient_at(mesh, velocity, t, *l, &gl);
            for q in 0..3 {
                b[tri[q]] += w * area * l[q] * (g[0][0] + g[1][1]);
            }
        }
    }
    b
}

/// Interpolates a vector field at the P2 nodes.
pub fn interpolate_p2(mesh: &TriMesh, f: &VectorField) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 2 * mesh.n_p2_nodes()];
    for n in 0..mesh.n_p2_nodes() {
        let v = f.eval(At::point(mesh.node_coord(n)))?;
        out[2 * n] = v[0];
        out[2 * n + 1] = v[1];
    }
    Ok(out)
}
