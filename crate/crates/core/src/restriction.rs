//! The restriction operator `R_ε` from zero-trace fields on `D` to zero-trace
//! fields on the perforated `D_ε`, built from one Stokes solve per ball annulus.
//! Also the cutoff lifting and the local Bogovskii operator on the unit annulus.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::fem::{
    barycentric_gradients, boundary_flux, divergence_against, divergence_residual, interpolate_p2, p2_gradient_at,
    Dirichlet, DivData, Source, StokesSolution, StokesSolver, COMPATIBILITY_TOLERANCE,
};
use crate::field::{ScalarField, VectorField};
use crate::geometry::HoleShape;
use crate::mesh::{EdgeTag, RegionTag, TriMesh};
use crate::meshgen::mesh_annulus;
use crate::norms::{lp_norm, LebesgueExponent, NormField};
use crate::perforated::{mesh_perforated, PerforatedDomain};
use crate::quadrature::{rule, ASSEMBLY_DEGREE, POWER_DEGREE};

/// Band accepted for measured constants across a sweep.
pub const CONSTANT_BAND: f64 = 1.5;

/// `((d − p) α − d) / p`, the power of `ε` in front of `‖u‖_p`.
pub fn restriction_exponent(p: f64, d: usize, alpha: f64) -> Result<f64> {
    let d = d as f64;
    if !(p > 1.0) || p > d {
        return Err(LabError::Domain(format!("restriction exponent needs 1 < p <= d, got p = {p}, d = {d}")));
    }
    Ok(((d - p) * alpha - d) / p)
}

/// One ball annulus `B(x_k, b₁ε) \ T_{ε,k}` cut out of the mesh of `D`, factored.
#[derive(Debug, Clone)]
pub struct CellMesh {
    pub k: usize,
    pub solver: StokesSolver,
    /// Annulus node to node of the mesh of `D`.
    pub parent_nodes: Vec<usize>,
    /// Annulus vertex to vertex of the mesh of `D`.
    pub parent_vertices: Vec<usize>,
    /// Annulus nodes on the hole boundary.
    pub hole_nodes: Vec<usize>,
    /// Annulus vertices on the hole boundary.
    pub hole_vertices: Vec<usize>,
    /// Triangles of `D` inside the hole.
    pub hole_triangles: Vec<usize>,
}

impl CellMesh {
    pub fn mesh(&self) -> &Arc<TriMesh> {
        self.solver.mesh()
    }
}

/// The two-level mesh of a perforated square with its fluid submesh and
/// factored cell problems.
#[derive(Debug, Clone)]
pub struct PerforatedMesh {
    pub domain: PerforatedDomain,
    /// Mesh of `D`, holes included.
    pub full: Arc<TriMesh>,
    /// Mesh of `D_ε`.
    pub fluid: Arc<TriMesh>,
    /// Node of `D_ε` to node of `D`.
    pub fluid_parent_nodes: Vec<usize>,
    pub fluid_parent_triangles: Vec<usize>,
    /// Node of `D` to node of `D_ε`, `usize::MAX` inside holes.
    pub full_to_fluid: Vec<usize>,
    pub cells: Vec<CellMesh>,
}

fn tagged_nodes(mesh: &TriMesh, tag: EdgeTag) -> (Vec<usize>, Vec<usize>) {
    let nv = mesh.n_vertices();
    let mut node = vec![false; mesh.n_p2_nodes()];
    for te in mesh.tagged_edges() {
        if te.tag != tag {
            continue;
        }
        let [a, b] = te.v;
        let e = mesh.edge_index(a, b).expect("tagged edge exists");
        node[a] = true;
        node[b] = true;
        node[nv + e] = true;
    }
    let nodes: Vec<usize> = (0..node.len()).filter(|&n| node[n]).collect();
    let vertices = nodes.iter().copied().filter(|&n| n < nv).collect();
    (nodes, vertices)
}

impl PerforatedMesh {
    pub fn new(domain: PerforatedDomain, n_hole: usize, h_far: f64) -> Result<PerforatedMesh> {
        let full = Arc::new(mesh_perforated(&domain, n_hole, h_far)?);
        let fluid_sub = full.submesh(|_, r| !matches!(r, RegionTag::HoleInterior(_)))?;
        let fluid_parent_nodes = fluid_sub.parent_nodes(&full);
        let mut full_to_fluid = vec![usize::MAX; full.n_p2_nodes()];
        for (i, &n) in fluid_parent_nodes.iter().enumerate() {
            full_to_fluid[n] = i;
        }
        let cells = domain
            .interior
            .par_iter()
            .map(|&k| -> Result<CellMesh> {
                let sub = full.submesh(|_, r| r == RegionTag::BallAnnulus(k)).map_err(|e| e.in_cell(k))?;
                let (hole_nodes, hole_vertices) = tagged_nodes(&sub.mesh, EdgeTag::Hole(k));
                let parent_nodes = sub.parent_nodes(&full);
                let parent_vertices = sub.parent_vertex.clone();
                let solver = StokesSolver::new(Arc::new(sub.mesh)).map_err(|e| e.in_cell(k))?;
                Ok(CellMesh {
                    k,
                    solver,
                    parent_nodes,
                    parent_vertices,
                    hole_nodes,
                    hole_vertices,
                    hole_triangles: full.triangles_with_region(|r| r == RegionTag::HoleInterior(k)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PerforatedMesh {
            domain,
            fluid: Arc::new(fluid_sub.mesh),
            fluid_parent_nodes,
            fluid_parent_triangles: fluid_sub.parent_triangle,
            full_to_fluid,
            full,
            cells,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.domain.epsilon()
    }

    /// P2 coefficients on `D` restricted to the nodes of `D_ε`.
    pub fn to_fluid(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.fluid_parent_nodes.len());
        for &n in &self.fluid_parent_nodes {
            out.push(u[2 * n]);
            out.push(u[2 * n + 1]);
        }
        out
    }

    /// P2 coefficients on `D_ε` extended by zero to `D`.
    pub fn extend_by_zero(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.full.n_p2_nodes()];
        for (i, &n) in self.fluid_parent_nodes.iter().enumerate() {
            out[2 * n] = u[2 * i];
            out[2 * n + 1] = u[2 * i + 1];
        }
        out
    }
}

/// Data of the local problem of cell `k`.
#[derive(Debug, Clone)]
pub struct CellLocalProblem {
    pub k: usize,
    /// `u` on the annulus nodes (two per node); the weak `−Δu` source.
    pub u_local: Arc<Vec<f64>>,
    /// `u` on the ball circle, zero on the hole.
    pub dirichlet: Arc<Vec<f64>>,
    /// Divergence datum as a functional on the annulus pressure basis.
    pub functional: Arc<Vec<f64>>,
    /// `|ℓ(1) − ∮ u·n| / scale`.
    pub compatibility: f64,
}

/// Builds the local problem: `−Δu_k + ∇p_k = −Δu`, `u_k = u` on the ball circle,
/// `u_k = 0` on the hole, and `div u_k` given by
/// `ℓ(q) = ∫_A q div u + ∫_T E(q) div u`, where `E(q)` is `q` on the hole boundary
/// and the mean of those values inside the hole.
pub fn cell_problem(pm: &PerforatedMesh, cell: &CellMesh, u: &[f64]) -> Result<CellLocalProblem> {
    let mesh = &**cell.mesh();
    let full = &*pm.full;
    let mut u_local = Vec::with_capacity(2 * cell.parent_nodes.len());
    for &n in &cell.parent_nodes {
        u_local.push(u[2 * n]);
        u_local.push(u[2 * n + 1]);
    }
    let mut dirichlet = u_local.clone();
    for &n in &cell.hole_nodes {
        dirichlet[2 * n] = 0.0;
        dirichlet[2 * n + 1] = 0.0;
    }
    let mut functional = divergence_against(mesh, &u_local, |_| true);
    if !cell.hole_triangles.is_empty() {
        let b = hole_divergence(full, u, &cell.hole_triangles);
        let boundary: Vec<usize> = cell.hole_vertices.iter().map(|&v| cell.parent_vertices[v]).collect();
        let mut on_boundary = std::collections::HashSet::with_capacity(boundary.len());
        on_boundary.extend(boundary.iter().copied());
        let interior: f64 = b.iter().filter(|(w, _)| !on_boundary.contains(w)).map(|(_, v)| v).sum();
        let share = interior / boundary.len() as f64;
        for (&local, &parent) in cell.hole_vertices.iter().zip(&boundary) {
            let own = b.iter().find(|(w, _)| *w == parent).map_or(0.0, |(_, v)| *v);
            functional[local] += own + share;
        }
    }
    let (flux, flux_abs) = boundary_flux(mesh, &dirichlet);
    let total: f64 = functional.iter().sum();
    let scale = functional.iter().map(|v| v.abs()).sum::<f64>().max(flux_abs);
    let compatibility = if scale > 0.0 { (total - flux).abs() / scale } else { 0.0 };
    if compatibility > COMPATIBILITY_TOLERANCE {
        return Err(LabError::Compatibility {
            div_integral: total,
            flux,
            mismatch: (total - flux).abs(),
            relative: compatibility,
        }
        .in_cell(cell.k));
    }
    Ok(CellLocalProblem {
        k: cell.k,
        u_local: Arc::new(u_local),
        dirichlet: Arc::new(dirichlet),
        functional: Arc::new(functional),
        compatibility,
    })
}

/// `∫_T ψ_w div u` for the vertices `w` of the hole triangles, sorted by vertex.
fn hole_divergence(full: &TriMesh, u: &[f64], triangles: &[usize]) -> Vec<(usize, f64)> {
    let r = rule(ASSEMBLY_DEGREE);
    let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for &t in triangles {
        let pts = full.triangle_points(t);
        let (gl, area) = barycentric_gradients(&pts);
        let tri = full.triangles()[t];
        for (l, w) in r.bary.iter().zip(&r.weights) {
            let g = p2_gradient_at(full, u, t, *l, &gl);
            let div = g[0][0] + g[1][1];
            for q in 0..3 {
                *acc.entry(tri[q]).or_insert(0.0) += w * area * l[q] * div;
            }
        }
    }
    acc.into_iter().collect()
}

pub fn solve_cell(cell: &CellMesh, problem: &CellLocalProblem) -> Result<StokesSolution> {
    cell.solver
        .solve(
            &Source::weak_laplacian(problem.u_local.clone()),
            &DivData::Functional(problem.functional.clone()),
            &Dirichlet::Nodal(problem.dirichlet.clone()),
        )
        .map_err(|e| e.in_cell(problem.k))
}

/// `R_ε(u)` on `D_ε`, and the worst per-cell compatibility residual.
#[derive(Debug, Clone)]
pub struct Restricted {
    pub velocity: Vec<f64>,
    pub compatibility: f64,
}

/// Applies `R_ε` to P2 coefficients `u` on the mesh of `D` (zero on `∂D`).
pub fn restrict(pm: &PerforatedMesh, u: &[f64]) -> Result<Restricted> {
    if u.len() != 2 * pm.full.n_p2_nodes() {
        return Err(LabError::Precondition(format!(
            "field has {} coefficients, mesh of D needs {}",
            u.len(),
            2 * pm.full.n_p2_nodes()
        )));
    }
    check_zero_trace(&pm.full, u)?;
    let locals = pm
        .cells
        .par_iter()
        .map(|cell| {
            let problem = cell_problem(pm, cell, u)?;
            let sol = solve_cell(cell, &problem)?;
            Ok((problem.compatibility, sol.velocity))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut velocity = pm.to_fluid(u);
    let mut compatibility = 0.0f64;
    for (cell, (c, v)) in pm.cells.iter().zip(locals) {
        compatibility = compatibility.max(c);
        for (local, &parent) in cell.parent_nodes.iter().enumerate() {
            let i = pm.full_to_fluid[parent];
            velocity[2 * i] = v[2 * local];
            velocity[2 * i + 1] = v[2 * local + 1];
        }
    }
    Ok(Restricted {
        velocity,
        compatibility,
    })
}

fn check_zero_trace(mesh: &TriMesh, u: &[f64]) -> Result<()> {
    let nv = mesh.n_vertices();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (e, _) in mesh.boundary_edges() {
        let [a, b] = mesh.edges()[e];
        for n in [a, b, nv + e] {
            if u[2 * n].abs().max(u[2 * n + 1].abs()) > 1e-12 * scale {
                return Err(LabError::Precondition(format!("field does not vanish on ∂D at node {n}")));
            }
        }
    }
    Ok(())
}

/// `(‖w‖²_2 + ‖∇w‖²_2)^{1/2}` for P2 coefficients.
pub fn h1_norm(mesh: &TriMesh, w: &[f64]) -> Result<f64> {
    let two = LebesgueExponent::new(2.0)?;
    let a = lp_norm(NormField::Velocity(w), mesh, two, ASSEMBLY_DEGREE)?.value;
    let b = lp_norm(NormField::VelocityGradient(w), mesh, two, ASSEMBLY_DEGREE)?.value;
    Ok(a.hypot(b))
}

/// `‖R_ε(ũ) − u‖_{H¹(D_ε)} / ‖u‖_{H¹(D_ε)}` for `u` given on `D_ε` with zero trace.
pub fn extension_identity(pm: &PerforatedMesh, u_fluid: &[f64]) -> Result<f64> {
    let r = restrict(pm, &pm.extend_by_zero(u_fluid))?;
    let diff: Vec<f64> = r.velocity.iter().zip(u_fluid).map(|(a, b)| a - b).collect();
    let base = h1_norm(&pm.fluid, u_fluid)?;
    let d = h1_norm(&pm.fluid, &diff)?;
    Ok(if base > 0.0 { d / base } else { d })
}

/// A smooth field on `D_ε` with zero trace on `∂D_ε`: the interpolant of `f`
/// with the hole-boundary and outer-boundary nodes set to zero.
pub fn zero_trace_sample(pm: &PerforatedMesh, f: &VectorField) -> Result<Vec<f64>> {
    let mesh = &*pm.fluid;
    let mut u = interpolate_p2(mesh, f)?;
    let nv = mesh.n_vertices();
    for (e, _) in mesh.boundary_edges() {
        let [a, b] = mesh.edges()[e];
        for n in [a, b, nv + e] {
            u[2 * n] = 0.0;
            u[2 * n + 1] = 0.0;
        }
    }
    Ok(u)
}

/// A discretely divergence-free field on `D` with zero trace: the Stokes
/// velocity driven by `g` on the mesh of `D`.
pub fn divergence_free_sample(solver_d: &StokesSolver, g: &VectorField) -> Result<Vec<f64>> {
    Ok(solver_d.solve(&Source::body(g.clone()), &DivData::Zero, &Dirichlet::Zero)?.velocity)
}

/// Discrete divergence residual of `R_ε(u)` on `D_ε` (against zero data).
pub fn divergence_preservation(pm: &PerforatedMesh, u: &[f64]) -> Result<f64> {
    let r = restrict(pm, u)?;
    Ok(divergence_residual(&pm.fluid, &r.velocity, &vec![0.0; pm.fluid.n_vertices()]))
}

/// `‖∇R_ε(u)‖_p / (‖∇u‖_p + ε^e ‖u‖_p)` with `e` the restriction exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictionConstant {
    pub epsilon: f64,
    pub alpha: f64,
    pub p: f64,
    pub exponent: f64,
    pub grad_restricted: f64,
    pub grad_u: f64,
    pub u_norm: f64,
    pub constant: f64,
}

pub fn measure_restriction_constant(pm: &PerforatedMesh, u: &[f64], p: LebesgueExponent) -> Result<Option<RestrictionConstant>> {
    let eps = pm.epsilon();
    let alpha = pm.domain.alpha;
    let exponent = restriction_exponent(p.value(), 2, alpha)?;
    let grad_u = lp_norm(NormField::VelocityGradient(u), &pm.full, p, POWER_DEGREE)?.value;
    let u_norm = lp_norm(NormField::Velocity(u), &pm.full, p, POWER_DEGREE)?.value;
    if grad_u == 0.0 && u_norm == 0.0 {
        return Ok(None);
    }
    let r = restrict(pm, u)?;
    let grad_restricted = lp_norm(NormField::VelocityGradient(&r.velocity), &pm.fluid, p, POWER_DEGREE)?.value;
    let constant = grad_restricted / (grad_u + eps.powf(exponent) * u_norm);
    Ok(Some(RestrictionConstant {
        epsilon: eps,
        alpha,
        p: p.value(),
        exponent,
        grad_restricted,
        grad_u,
        u_norm,
        constant,
    }))
}

/// max/min of positive values.
pub fn band(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Compares the local solve of cell `k` with the same problem posed on the unit
/// annulus `(A_k − x_k) / (b₁ε)`; returns the larger relative discrepancy of
/// velocity and scaled pressure.
pub fn unit_annulus_consistency(pm: &PerforatedMesh, k: usize, u: &[f64]) -> Result<f64> {
    let cell = pm
        .cells
        .iter()
        .find(|c| c.k == k)
        .ok_or_else(|| LabError::Precondition(format!("cell {k} is not an interior cell")))?;
    let problem = cell_problem(pm, cell, u)?;
    let physical = solve_cell(cell, &problem)?;
    let scale = pm.domain.ball_radius();
    let unit = Arc::new(cell.mesh().mapped(pm.domain.centers[k], 1.0 / scale));
    let functional: Vec<f64> = problem.functional.iter().map(|v| v / scale).collect();
    let mapped = StokesSolver::new(unit)?.solve(
        &Source::weak_laplacian(problem.u_local.clone()),
        &DivData::Functional(Arc::new(functional)),
        &Dirichlet::Nodal(problem.dirichlet.clone()),
    )?;
    let rel = |a: &[f64], b: &[f64]| {
        let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let s = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s > 0.0 {
            d / s
        } else {
            d
        }
    };
    let p_scaled: Vec<f64> = physical.pressure.iter().map(|p| p * scale).collect();
    Ok(rel(&mapped.velocity, &physical.velocity).max(rel(&mapped.pressure, &p_scaled)))
}

/// The cutoff lifting `L(u) = (1 − θ_η) u` on the unit annulus `B₁ \ ηT`.
#[derive(Debug, Clone)]
pub struct Lifting {
    pub mesh: Arc<TriMesh>,
    pub velocity: Vec<f64>,
    pub grad_norm: f64,
    pub grad_u: f64,
    pub u_norm: f64,
    /// `‖∇L(u)‖_p / (‖∇u‖_p + η^{d/p−1} ‖u‖_p)`.
    pub constant: f64,
}

/// Radial cutoff: one on `B(0, ρη)`, zero outside `B(0, 2η)`, linear in between.
pub fn cutoff(eta: f64, rho: f64) -> impl Fn([f64; 2]) -> f64 + Send + Sync + Copy {
    move |x| {
        let r = x[0].hypot(x[1]);
        ((2.0 * eta - r) / ((2.0 - rho) * eta)).clamp(0.0, 1.0)
    }
}

pub fn lift_zero_on_hole(
    u: &VectorField,
    eta: f64,
    hole: &HoleShape,
    p: LebesgueExponent,
    n_hole: usize,
) -> Result<Lifting> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(LabError::Domain(format!("eta = {eta} must lie in (0, 1/2)")));
    }
    let rho = hole.circumradius();
    if !(rho < 1.75) {
        return Err(LabError::Domain(format!("hole circumradius {rho} leaves no room for the cutoff")));
    }
    let mesh = Arc::new(mesh_annulus([0.0, 0.0], 1.0, &hole.scaled(eta), n_hole)?);
    let theta = cutoff(eta, rho);
    let mut velocity = interpolate_p2(&mesh, u)?;
    let u_coeffs = velocity.clone();
    for n in 0..mesh.n_p2_nodes() {
        let f = 1.0 - theta(mesh.node_coord(n));
        velocity[2 * n] *= f;
        velocity[2 * n + 1] *= f;
    }
    // exact zero on the hole, exact u on the circle
    let (hole_nodes, _) = tagged_nodes(&mesh, EdgeTag::Hole(0));
    for n in hole_nodes {
        velocity[2 * n] = 0.0;
        velocity[2 * n + 1] = 0.0;
    }
    let grad_norm = lp_norm(NormField::VelocityGradient(&velocity), &mesh, p, POWER_DEGREE)?.value;
    let grad_u = lp_norm(NormField::VelocityGradient(&u_coeffs), &mesh, p, POWER_DEGREE)?.value;
    let u_norm = lp_norm(NormField::Velocity(&u_coeffs), &mesh, p, POWER_DEGREE)?.value;
    let denom = grad_u + eta.powf(2.0 / p.value() - 1.0) * u_norm;
    Ok(Lifting {
        mesh,
        velocity,
        grad_norm,
        grad_u,
        u_norm,
        constant: if denom > 0.0 { grad_norm / denom } else { 0.0 },
    })
}

/// A zero-trace field `w` on `B₁ \ ηT` with `div w = f`, and `‖∇w‖_p / ‖f‖_p`.
#[derive(Debug, Clone)]
pub struct LocalBogovskii {
    pub solution: StokesSolution,
    pub norm_ratio: f64,
}

pub fn local_uniform_bogovskii(
    f: &ScalarField,
    eta: f64,
    hole: &HoleShape,
    p: LebesgueExponent,
    n_hole: usize,
) -> Result<LocalBogovskii> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(LabError::Domain(format!("eta = {eta} must lie in (0, 1/2)")));
    }
    let mesh = Arc::new(mesh_annulus([0.0, 0.0], 1.0, &hole.scaled(eta), n_hole)?);
    let solution = crate::fem::solve_prescribed_divergence(mesh.clone(), f, &Dirichlet::Zero)?;
    let grad = lp_norm(NormField::VelocityGradient(&solution.velocity), &mesh, p, POWER_DEGREE)?.value;
    let fp = lp_norm(NormField::Scalar(f), &mesh, p, POWER_DEGREE)?.value;
    Ok(LocalBogovskii {
        solution,
        norm_ratio: if fp > 0.0 { grad / fp } else { 0.0 },
    })
}

/// `f(x − a) − f(x + a)` for the bump `(1 − |x|²/r²)²₊`.
pub fn bump_pair(a: [f64; 2], r: f64) -> ScalarField {
    ScalarField::closure(move |x| {
        let b = |c: [f64; 2]| {
            let s = 1.0 - ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (r * r);
            if s > 0.0 {
                s * s
            } else {
                0.0
            }
        };
        b(a) - b([-a[0], -a[1]])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perforated::{build_perforated, DEFAULT_B1};

    fn setup(n: usize, alpha: f64) -> PerforatedMesh {
        let pd = build_perforated(1.0, n, alpha, HoleShape::disk(0.25), DEFAULT_B1, None).unwrap();
        PerforatedMesh::new(pd, 16, 1.0).unwrap()
    }

    fn bump() -> VectorField {
        VectorField::parse(["sin(pi*x)*sin(pi*y)", "x*(1-x)*y*(1-y)"]).unwrap()
    }

    #[test]
    fn exponents() {
        assert_eq!(restriction_exponent(2.0, 3, 3.0).unwrap(), 0.0);
        assert_eq!(restriction_exponent(2.0, 3, 1.0).unwrap(), -1.0);
        assert_eq!(restriction_exponent(2.0, 2, 1.0).unwrap(), -1.0);
        assert_eq!(restriction_exponent(2.0, 2, 5.0).unwrap(), -1.0);
        assert!(matches!(restriction_exponent(3.5, 3, 1.0), Err(LabError::Domain(_))));
    }

    #[test]
    fn zero_field_restricts_to_zero() {
        let pm = setup(2, 1.0);
        let r = restrict(&pm, &vec![0.0; 2 * pm.full.n_p2_nodes()]).unwrap();
        assert!(r.velocity.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_on_fields_vanishing_on_holes() {
        let pm = setup(2, 1.0);
        let u = zero_trace_sample(&pm, &bump()).unwrap();
        assert!(extension_identity(&pm, &u).unwrap() < 1e-8);
    }

    #[test]
    fn local_outside_balls() {
        let pm = setup(2, 2.0);
        let u = interpolate_p2(&pm.full, &bump()).unwrap();
        let mut u = u;
        for (e, _) in pm.full.boundary_edges() {
            let [a, b] = pm.full.edges()[e];
            for n in [a, b, pm.full.n_vertices() + e] {
                u[2 * n] = 0.0;
                u[2 * n + 1] = 0.0;
            }
        }
        let r = restrict(&pm, &u).unwrap();
        let mut in_annulus = vec![false; pm.full.n_p2_nodes()];
        for c in &pm.cells {
            for &n in &c.parent_nodes {
                in_annulus[n] = true;
            }
        }
        for (i, &n) in pm.fluid_parent_nodes.iter().enumerate() {
            if !in_annulus[n] {
                assert_eq!(r.velocity[2 * i], u[2 * n]);
                assert_eq!(r.velocity[2 * i + 1], u[2 * n + 1]);
            }
        }
    }

    #[test]
    fn lifting_vanishes_on_hole() {
        let p = LebesgueExponent::new(2.0).unwrap();
        let one = VectorField::Const([1.0, 0.0]);
        let l = lift_zero_on_hole(&one, 0.125, &HoleShape::disk(0.25), p, 32).unwrap();
        let (hole, _) = tagged_nodes(&l.mesh, EdgeTag::Hole(0));
        assert!(hole.iter().all(|&n| l.velocity[2 * n] == 0.0));
        let (outer, _) = tagged_nodes(&l.mesh, EdgeTag::Outer);
        assert!(outer.iter().all(|&n| l.velocity[2 * n] == 1.0));
        assert!(lift_zero_on_hole(&one, 0.5, &HoleShape::disk(0.25), p, 32).is_err());
    }

    #[test]
    fn local_bogovskii_rejects_mass() {
        let p = LebesgueExponent::new(2.0).unwrap();
        let r = local_uniform_bogovskii(&ScalarField::Const(1.0), 0.25, &HoleShape::disk(0.25), p, 16);
        assert!(matches!(r, Err(LabError::Compatibility { .. })));
        let z = local_uniform_bogovskii(&ScalarField::Zero, 0.25, &HoleShape::disk(0.25), p, 16).unwrap();
        assert!(z.solution.velocity.iter().all(|v| *v == 0.0));
    }
}
