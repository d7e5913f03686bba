//! Epsilon sweeps: uniform bound at p = 2, blow-up for p > d and by duality for
//! p < d', exact rescaling, and the enlarging-domain problem.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::fem::{evaluate_at, map_point, p2_gradient_at, barycentric_gradients, Dirichlet, DivData, Source, StokesSolution, StokesSolver, SOURCE_DEGREE};
use crate::field::{contract, frobenius, QuadTable, Tensor, TensorField, VectorField, At};
use crate::geometry::{DomainSpec, OuterShape};
use crate::meshgen::{mesh_no_hole, mesh_single_hole, rescale_mesh};
use crate::norms::{conjugate, lp_norm, norm_report, LebesgueExponent, NormField, NormReport};
use crate::quadrature::rule;

/// Spatial dimension of every executed experiment.
pub const DIMENSION: usize = 2;
/// Bounded band: max/min over the last points.
pub const BOUNDED_BAND: f64 = 1.2;
/// Smallest fitted slope accepted as growth.
pub const GROWTH_SLOPE: f64 = 0.05;
/// Number of trailing sweep points used by the verdicts.
pub const TAIL: usize = 4;

/// The default experiment source `G = (x₂ − x₂³/3) e₁⊗e₂`, with `div G = (1 − x₂², 0)`.
pub fn default_source() -> TensorField {
    TensorField::parse(["0", "y - y^3/3", "0", "0"]).expect("default source parses")
}

/// The divergence-free bump force `∇^⊥ψ`, `ψ = (1 − |x|²/R²)³` inside `B_R`.
/// It exerts no net force, so the far field decays in the plane.
pub fn bump_force(radius: f64) -> VectorField {
    VectorField::closure(move |x| {
        let s = 1.0 - (x[0] * x[0] + x[1] * x[1]) / (radius * radius);
        if s <= 0.0 {
            return [0.0, 0.0];
        }
        // ∇ψ = -6 s² x / R²
        let c = -6.0 * s * s / (radius * radius);
        [-c * x[1], c * x[0]]
    })
}

/// Discretisation parameters of single-hole meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParams {
    /// Segments on the hole boundary, identical for every epsilon.
    pub n_hole: usize,
    /// Node spacing on the outer boundary.
    pub h_far: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams { n_hole: 32, h_far: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub p: f64,
    pub report: NormReport,
    /// `(‖∇v‖_p + ‖π‖_p) / ‖G‖_p`, with `0/0 = 0`.
    pub ratio: f64,
    pub dofs: usize,
    pub seconds: f64,
    pub dual: Option<DualDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrowthVerdict {
    Bounded,
    Growing,
    Inconclusive,
}

impl GrowthVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            GrowthVerdict::Bounded => "bounded",
            GrowthVerdict::Growing => "growing",
            GrowthVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Least-squares fit of `log value` against `log 1/ε` over the last points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub slope: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// max/min of the values over the last points.
    pub band: f64,
    pub strictly_increasing: bool,
    pub verdict: GrowthVerdict,
}

pub fn fit_growth(epsilons: &[f64], values: &[f64]) -> Result<GrowthFit> {
    if epsilons.len() != values.len() || epsilons.is_empty() {
        return Err(LabError::Precondition("growth fit needs matching, nonempty data".into()));
    }
    let start = values.len().saturating_sub(TAIL);
    let (e, v) = (&epsilons[start..], &values[start..]);
    let strictly_increasing = v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    let band = if max == 0.0 && min == 0.0 {
        1.0
    } else if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    };
    let (slope, residual) = if v.len() >= 2 && min > 0.0 {
        let xs: Vec<f64> = e.iter().map(|x| (1.0 / x).ln()).collect();
        let ys: Vec<f64> = v.iter().map(|y| y.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (slope, (rss / n).sqrt())
    } else {
        (0.0, 0.0)
    };
    let growing = strictly_increasing && slope > GROWTH_SLOPE;
    let verdict = if growing {
        GrowthVerdict::Growing
    } else if band <= BOUNDED_BAND {
        GrowthVerdict::Bounded
    } else {
        GrowthVerdict::Inconclusive
    };
    Ok(GrowthFit {
        slope,
        residual,
        band,
        strictly_increasing,
        verdict,
    })
}

/// Result of a sweep; failed points are listed, not fatal.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<(f64, LabError)>,
    pub fit: Option<GrowthFit>,
    pub center: Option<CenterCheck>,
}

impl Sweep {
    fn finish(points: Vec<(f64, Result<SweepRecord>)>, value: impl Fn(&SweepRecord) -> f64) -> Result<Sweep> {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (eps, r) in points {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => failures.push((eps, e)),
            }
        }
        let fit = if records.is_empty() {
            None
        } else {
            let e: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
            let v: Vec<f64> = records.iter().map(value).collect();
            Some(fit_growth(&e, &v)?)
        };
        Ok(Sweep {
            records,
            failures,
            fit,
            center: None,
        })
    }
}

pub fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(LabError::Config("epsilon list is empty".into()));
    }
    if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0 && **e <= 1.0)) {
        return Err(LabError::Config(format!("epsilon {e} outside (0, 1]")));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::Config("epsilon list must be strictly decreasing".into()));
    }
    Ok(())
}

fn ratio_of(report: &NormReport) -> Result<f64> {
    let num = report.grad_velocity_lp + report.pressure_lp;
    if report.source_lp > 0.0 {
        Ok(num / report.source_lp)
    } else if num == 0.0 {
        Ok(0.0)
    } else {
        Err(LabError::UndefinedRatio("source norm is zero but the solution is not".into()))
    }
}

fn single_hole_solver(spec: &DomainSpec, eps: f64, mesh: &MeshParams) -> Result<StokesSolver> {
    let m = mesh_single_hole(&spec.with_epsilon(eps), mesh.h_far, mesh.n_hole)?;
    StokesSolver::new(Arc::new(m))
}

fn solve_point(spec: &DomainSpec, g: &TensorField, p: LebesgueExponent, eps: f64, mesh: &MeshParams) -> Result<SweepRecord> {
    let start = Instant::now();
    let solver = single_hole_solver(spec, eps, mesh)?;
    let sol = solver.solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let report = norm_report(&sol, g, p)?;
    Ok(SweepRecord {
        epsilon: eps,
        p: p.value(),
        ratio: ratio_of(&report)?,
        report,
        dofs: solver.n_unknowns(),
        seconds: start.elapsed().as_secs_f64(),
        dual: None,
    })
}

fn sweep_points<F>(eps_list: &[f64], f: F) -> Vec<(f64, Result<SweepRecord>)>
where
    F: Fn(f64) -> Result<SweepRecord> + Sync,
{
    eps_list.par_iter().map(|&e| (e, f(e))).collect()
}

/// Solves on `Ω \ εT` for every ε and records the estimate ratio.
pub fn run_uniform_sweep(
    spec: &DomainSpec,
    g: &TensorField,
    p: LebesgueExponent,
    eps_list: &[f64],
    mesh: &MeshParams,
) -> Result<Sweep> {
    check_eps_list(eps_list)?;
    let points = sweep_points(eps_list, |e| solve_point(spec, g, p, e, mesh));
    Sweep::finish(points, |r| r.ratio)
}

/// `|v_Ω(0)|` on the domain without hole, with the change under one refinement as
/// error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterCheck {
    pub value: f64,
    pub error_bar: f64,
    pub velocity: [f64; 2],
}

/// Parameters of the hole-free reference mesh (refined once for the error bar).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterParams {
    pub h_far: f64,
    pub n_core: usize,
    pub r_core: f64,
}

impl Default for CenterParams {
    fn default() -> Self {
        CenterParams {
            h_far: 0.125,
            n_core: 64,
            r_core: 0.5,
        }
    }
}

fn center_velocity(outer: &OuterShape, g: &TensorField, h_far: f64, n_core: usize, r_core: f64) -> Result<([f64; 2], f64)> {
    let mesh = Arc::new(mesh_no_hole(outer, h_far, n_core, r_core)?);
    let sol = StokesSolver::new(mesh)?.solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let peak = sol.velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((evaluate_at(&sol, [0.0, 0.0])?.0, peak))
}

pub fn verify_nondegenerate_center(outer: &OuterShape, g: &TensorField, params: &CenterParams) -> Result<CenterCheck> {
    let (coarse, _) = center_velocity(outer, g, params.h_far, params.n_core, params.r_core)?;
    let (fine, peak) = center_velocity(outer, g, params.h_far / 2.0, 2 * params.n_core, params.r_core)?;
    let value = fine[0].hypot(fine[1]);
    let diff = (fine[0] - coarse[0]).hypot(fine[1] - coarse[1]);
    // rounding floor: values at this level are indistinguishable from zero
    let error_bar = diff.max(1e-10 * peak);
    if value <= 10.0 * error_bar {
        return Err(LabError::DegenerateSource { value, error_bar });
    }
    Ok(CenterCheck {
        value,
        error_bar,
        velocity: fine,
    })
}

/// Blow-up of `‖∇v_ε‖_p` for `p > d`.
pub fn run_blowup_sweep(
    spec: &DomainSpec,
    g: &TensorField,
    p: LebesgueExponent,
    eps_list: &[f64],
    mesh: &MeshParams,
    center: &CenterParams,
) -> Result<Sweep> {
    if p.value() <= DIMENSION as f64 {
        return Err(LabError::Precondition(format!("blow-up sweep needs p > d = {DIMENSION}, got {}", p.value())));
    }
    check_eps_list(eps_list)?;
    let check = verify_nondegenerate_center(&spec.outer, g, center)?;
    let points = sweep_points(eps_list, |e| solve_point(spec, g, p, e, mesh));
    let mut sweep = Sweep::finish(points, |r| r.ratio)?;
    sweep.center = Some(check);
    Ok(sweep)
}

/// The normalised dual source and the identities it satisfies in the
/// quadrature rule that defines it.
#[derive(Debug, Clone)]
pub struct DualSource {
    pub field: TensorField,
    /// `‖H‖_{L^p}`, one up to rounding.
    pub norm: f64,
    /// `⟨H, ∇v⟩`.
    pub pairing: f64,
    /// `‖∇v‖_{L^{p'}}`.
    pub grad_norm: f64,
}

/// `H = |∇v|^{p'-2} ∇v / ‖∇v‖_{p'}^{p'/p}` tabulated at the source quadrature points.
pub fn construct_dual_source(solution: &StokesSolution, p: LebesgueExponent) -> Result<DualSource> {
    let mesh = &*solution.mesh;
    let q = conjugate(p).value();
    let pv = p.value();
    let r = rule(SOURCE_DEGREE);
    let npt = r.len();
    let grads: Vec<Tensor> = (0..mesh.n_triangles())
        .into_par_iter()
        .flat_map_iter(|t| {
            let pts = mesh.triangle_points(t);
            let (gl, _) = barycentric_gradients(&pts);
            r.bary.iter().map(move |l| p2_gradient_at(mesh, &solution.velocity, t, *l, &gl)).collect::<Vec<_>>()
        })
        .collect();
    let mut sum = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.triangle_area(t);
        let s: f64 = (0..npt).map(|k| r.weights[k] * frobenius(&grads[t * npt + k]).powf(q)).sum();
        sum += s * area;
    }
    let grad_norm = sum.powf(1.0 / q);
    if !(grad_norm > 0.0) {
        return Err(LabError::UndefinedRatio("velocity gradient vanishes; dual source undefined".into()));
    }
    let scale = grad_norm.powf(q / pv);
    let values: Vec<Tensor> = grads
        .iter()
        .map(|g| {
            let m = frobenius(g);
            let f = if m > 0.0 { m.powf(q - 2.0) / scale } else { 0.0 };
            g.map(|row| row.map(|v| v * f))
        })
        .collect();
    let mut pairing = 0.0;
    let mut hp = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.triangle_area(t);
        let (mut a, mut b) = (0.0, 0.0);
        for k in 0..npt {
            let i = t * npt + k;
            a += r.weights[k] * contract(&values[i], &grads[i]);
            b += r.weights[k] * frobenius(&values[i]).powf(pv);
        }
        pairing += a * area;
        hp += b * area;
    }
    let field = TensorField::Table(Arc::new(QuadTable {
        degree: SOURCE_DEGREE,
        n_triangles: mesh.n_triangles(),
        n_vertices: mesh.n_vertices(),
        points_per_triangle: npt,
        values,
    }));
    Ok(DualSource {
        field,
        norm: hp.powf(1.0 / pv),
        pairing,
        grad_norm,
    })
}

/// Per-point quantities of the dual sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualDiagnostics {
    pub h_norm: f64,
    pub pairing: f64,
    /// `‖∇v_ε‖_{p'}` of the base solve.
    pub base_grad: f64,
    /// `‖G‖_{p'}`.
    pub base_source: f64,
    /// `‖∇v_ε‖_{p'} / ‖G‖_{p'}`, a lower bound for `‖∇w_ε‖_p`.
    pub lower_bound: f64,
}

fn dual_point(spec: &DomainSpec, g: &TensorField, p: LebesgueExponent, eps: f64, mesh: &MeshParams) -> Result<SweepRecord> {
    let start = Instant::now();
    let q = conjugate(p);
    let solver = single_hole_solver(spec, eps, mesh)?;
    let base = solver.solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let dual = construct_dual_source(&base, p)?;
    let w = solver.solve(&Source::div_form(dual.field.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let report = norm_report(&w, &dual.field, p)?;
    let base_source = lp_norm(NormField::Tensor(g), &base.mesh, q, SOURCE_DEGREE)?.value;
    Ok(SweepRecord {
        epsilon: eps,
        p: p.value(),
        ratio: ratio_of(&report)?,
        report,
        dofs: solver.n_unknowns(),
        seconds: start.elapsed().as_secs_f64(),
        dual: Some(DualDiagnostics {
            h_norm: dual.norm,
            pairing: dual.pairing,
            base_grad: dual.grad_norm,
            base_source,
            lower_bound: dual.grad_norm / base_source,
        }),
    })
}

/// Blow-up of `‖∇w_ε‖_p` for `p < d'` with the dual sources `H_ε`.
pub fn run_dual_blowup_sweep(
    spec: &DomainSpec,
    g: &TensorField,
    p: LebesgueExponent,
    eps_list: &[f64],
    mesh: &MeshParams,
    center: &CenterParams,
) -> Result<Sweep> {
    let d_conj = DIMENSION as f64 / (DIMENSION as f64 - 1.0);
    if p.value() >= d_conj {
        return Err(LabError::Precondition(format!("dual sweep needs p < d' = {d_conj}, got {}", p.value())));
    }
    check_eps_list(eps_list)?;
    let check = verify_nondegenerate_center(&spec.outer, g, center)?;
    let points = sweep_points(eps_list, |e| dual_point(spec, g, p, e, mesh));
    let mut sweep = Sweep::finish(points, |r| r.report.grad_velocity_lp)?;
    sweep.center = Some(check);
    Ok(sweep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescalingCheck {
    pub epsilon: f64,
    pub p: f64,
    pub ratio: f64,
    pub ratio_rescaled: f64,
    /// `|R − R₁| / R`.
    pub discrepancy: f64,
    /// `|‖∇v₁‖ − ε^{1−d/p}‖∇v‖| / ‖∇v₁‖`.
    pub norm_discrepancy: f64,
}

/// Solves on `Ω_ε` with `G` and on `Ω_ε/ε` with `εG(ε·)` and compares.
pub fn rescaling_consistency(
    spec: &DomainSpec,
    g: &TensorField,
    p: LebesgueExponent,
    eps: f64,
    mesh: &MeshParams,
) -> Result<RescalingCheck> {
    let m = Arc::new(mesh_single_hole(&spec.with_epsilon(eps), mesh.h_far, mesh.n_hole)?);
    let m1 = Arc::new(rescale_mesh(&m, 1.0 / eps)?);
    if m1.triangles() != m.triangles() || m1.n_vertices() != m.n_vertices() {
        return Err(LabError::Internal("rescaled mesh changed its combinatorics".into()));
    }
    let g1 = g.rescaled_source(eps)?;
    let sol = StokesSolver::new(m)?.solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let sol1 = StokesSolver::new(m1)?.solve(&Source::div_form(g1.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let a = norm_report(&sol, g, p)?;
    let b = norm_report(&sol1, &g1, p)?;
    let ratio = ratio_of(&a)?;
    let ratio_rescaled = ratio_of(&b)?;
    let discrepancy = if ratio > 0.0 {
        (ratio - ratio_rescaled).abs() / ratio
    } else {
        (ratio - ratio_rescaled).abs()
    };
    let predicted = eps.powf(1.0 - DIMENSION as f64 / p.value()) * a.grad_velocity_lp;
    let norm_discrepancy = if b.grad_velocity_lp > 0.0 {
        (b.grad_velocity_lp - predicted).abs() / b.grad_velocity_lp
    } else {
        predicted.abs()
    };
    Ok(RescalingCheck {
        epsilon: eps,
        p: p.value(),
        ratio,
        ratio_rescaled,
        discrepancy,
        norm_discrepancy,
    })
}

/// Mesh parameters of the enlarging domains `Ω/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnlargingParams {
    /// Segments on the circle `|x| = 1` that carries the force.
    pub n_core: usize,
    /// Outer node spacing, relative to the (scaled) half-side.
    pub h_far_relative: f64,
}

impl Default for EnlargingParams {
    fn default() -> Self {
        EnlargingParams {
            n_core: 64,
            h_far_relative: 0.125,
        }
    }
}

/// Solves on `Ω/ε` (no hole) with a fixed force supported in `B_R`, `R ≤ 1`.
/// The recorded ratio is `(‖∇w‖_p + ‖ξ‖_p) / ‖g‖_p`.
pub fn run_enlarging_domain_sweep(
    outer: &OuterShape,
    g: &VectorField,
    support_radius: f64,
    p: LebesgueExponent,
    eps_list: &[f64],
    params: &EnlargingParams,
) -> Result<Sweep> {
    if !(support_radius > 0.0 && support_radius <= 1.0) {
        return Err(LabError::Config(format!("force support radius {support_radius} must lie in (0, 1]")));
    }
    check_eps_list(eps_list)?;
    // spot-check the declared support
    for k in 0..64 {
        let a = k as f64 * std::f64::consts::TAU / 64.0;
        for r in [1.0001 * support_radius, 1.05, 1.5] {
            let v = g.eval(At::point([r * a.cos(), r * a.sin()]))?;
            if v != [0.0, 0.0] {
                return Err(LabError::Config(format!("force does not vanish at radius {r}")));
            }
        }
    }
    let points = sweep_points(eps_list, |eps| {
        let start = Instant::now();
        let big = outer.scaled(1.0 / eps);
        let h_far = params.h_far_relative * big.size();
        let mesh = Arc::new(mesh_no_hole(&big, h_far, params.n_core, 1.0)?);
        let solver = StokesSolver::new(mesh)?;
        let sol = solver.solve(&Source::body(g.clone()), &DivData::Zero, &Dirichlet::Zero)?;
        let m = &*sol.mesh;
        let d = SOURCE_DEGREE;
        let grad = lp_norm(NormField::VelocityGradient(&sol.velocity), m, p, d)?;
        let pressure = lp_norm(NormField::P1(&sol.pressure), m, p, d)?;
        let velocity = lp_norm(NormField::Velocity(&sol.velocity), m, p, d)?;
        let source = lp_norm(NormField::Vector(g), m, p, d)?;
        let rel = |n: crate::norms::NormValue| if n.value > 0.0 { n.error_estimate / n.value } else { 0.0 };
        let quadrature_error = [grad, pressure, velocity, source].into_iter().map(rel).fold(0.0, f64::max);
        let report = NormReport {
            exponent: p.value(),
            grad_velocity_lp: grad.value,
            pressure_lp: pressure.value,
            velocity_lp: velocity.value,
            source_lp: source.value,
            quadrature_error,
            flagged: quadrature_error > crate::norms::QUADRATURE_FLAG,
        };
        Ok(SweepRecord {
            epsilon: eps,
            p: p.value(),
            ratio: ratio_of(&report)?,
            report,
            dofs: solver.n_unknowns(),
            seconds: start.elapsed().as_secs_f64(),
            dual: None,
        })
    });
    Sweep::finish(points, |r| r.ratio)
}

/// The sweep's smallest epsilon solved again with `n_hole` doubled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementCheck {
    pub epsilon: f64,
    pub ratio: f64,
    pub ratio_refined: f64,
    pub relative_change: f64,
}

pub fn refinement_check(
    spec: &DomainSpec,
    g: &TensorField,
    p: LebesgueExponent,
    eps: f64,
    mesh: &MeshParams,
) -> Result<RefinementCheck> {
    let a = solve_point(spec, g, p, eps, mesh)?;
    let finer = MeshParams {
        n_hole: 2 * mesh.n_hole,
        h_far: mesh.h_far / 2.0,
    };
    let b = solve_point(spec, g, p, eps, &finer)?;
    Ok(RefinementCheck {
        epsilon: eps,
        ratio: a.ratio,
        ratio_refined: b.ratio,
        relative_change: if b.ratio > 0.0 { (a.ratio - b.ratio).abs() / b.ratio } else { 0.0 },
    })
}

/// Quadrature points of the source rule on every triangle, in table order.
pub fn source_points(mesh: &crate::mesh::TriMesh) -> Vec<[f64; 2]> {
    let r = rule(SOURCE_DEGREE);
    let mut out = Vec::with_capacity(mesh.n_triangles() * r.len());
    for t in 0..mesh.n_triangles() {
        let pts = mesh.triangle_points(t);
        out.extend(r.bary.iter().map(|l| map_point(&pts, *l)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_detects_growth_and_bounds() {
        let eps = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let grow: Vec<f64> = eps.iter().map(|e: &f64| e.powf(-0.3)).collect();
        let fit = fit_growth(&eps, &grow).unwrap();
        assert!((fit.slope - 0.3).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.verdict, GrowthVerdict::Growing);
        let flat = [1.0, 1.1, 1.05, 1.12, 1.08];
        assert_eq!(fit_growth(&eps, &flat).unwrap().verdict, GrowthVerdict::Bounded);
        let zero = [0.0; 5];
        assert_eq!(fit_growth(&eps, &zero).unwrap().verdict, GrowthVerdict::Bounded);
        let wild = [1.0, 3.0, 1.0, 3.0, 1.0];
        assert_eq!(fit_growth(&eps, &wild).unwrap().verdict, GrowthVerdict::Inconclusive);
    }

    #[test]
    fn eps_lists_are_validated() {
        assert!(matches!(check_eps_list(&[]), Err(LabError::Config(_))));
        assert!(check_eps_list(&[0.25, 0.5]).is_err());
        assert!(check_eps_list(&[0.5, 0.5]).is_err());
        assert!(check_eps_list(&[0.5, 0.25]).is_ok());
    }

    #[test]
    fn bump_force_is_supported_and_divergence_free() {
        let g = bump_force(0.8);
        assert_eq!(g.eval(At::point([0.9, 0.0])).unwrap(), [0.0, 0.0]);
        let h = 1e-6;
        let x = [0.3, -0.2];
        let f = |p: [f64; 2]| g.eval(At::point(p)).unwrap();
        let div = (f([x[0] + h, x[1]])[0] - f([x[0] - h, x[1]])[0] + f([x[0], x[1] + h])[1] - f([x[0], x[1] - h])[1]) / (2.0 * h);
        assert!(div.abs() < 1e-8);
    }

    #[test]
    fn preconditions_of_blowup_sweeps() {
        let spec = DomainSpec::default_with_epsilon(0.5);
        let g = default_source();
        let m = MeshParams::default();
        let c = CenterParams::default();
        let two = LebesgueExponent::new(2.0).unwrap();
        assert!(matches!(run_blowup_sweep(&spec, &g, two, &[0.5], &m, &c), Err(LabError::Precondition(_))));
        assert!(matches!(run_dual_blowup_sweep(&spec, &g, two, &[0.5], &m, &c), Err(LabError::Precondition(_))));
        let four = LebesgueExponent::new(4.0).unwrap();
        let constant = TensorField::Const([[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            run_blowup_sweep(&spec, &constant, four, &[0.5], &m, &c),
            Err(LabError::DegenerateSource { .. })
        ));
    }
}
