//! Lebesgue norms by quadrature and exponent arithmetic.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::fem::{barycentric_gradients, map_point, p1_value_at, p2_gradient_at, p2_value_at, StokesSolution};
use crate::field::{frobenius, At, ScalarField, TensorField, VectorField};
use crate::mesh::TriMesh;
use crate::quadrature::{rule, POWER_DEGREE};

/// Largest quadrature error, relative to the value, before a report is flagged.
pub const QUADRATURE_FLAG: f64 = 0.01;

/// An exponent `p` in `(1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LebesgueExponent(f64);

impl LebesgueExponent {
    pub fn new(p: f64) -> Result<LebesgueExponent> {
        if p.is_finite() && p > 1.0 {
            Ok(LebesgueExponent(p))
        } else {
            Err(LabError::Domain(format!("exponent must satisfy 1 < p < ∞, got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn conjugate(self) -> LebesgueExponent {
        conjugate(self)
    }
}

/// `p' = p / (p - 1)`.
pub fn conjugate(p: LebesgueExponent) -> LebesgueExponent {
    LebesgueExponent(p.0 / (p.0 - 1.0))
}

/// `p* = d p / (d - p)` for `p < d`.
pub fn sobolev_star(p: LebesgueExponent, d: usize) -> Result<LebesgueExponent> {
    let d = d as f64;
    if p.0 >= d {
        return Err(LabError::Domain(format!("Sobolev exponent needs p < d, got p = {}, d = {d}", p.0)));
    }
    Ok(LebesgueExponent(d * p.0 / (d - p.0)))
}

/// Something whose pointwise magnitude can be integrated over a mesh.
#[derive(Debug, Clone, Copy)]
pub enum NormField<'a> {
    Scalar(&'a ScalarField),
    Vector(&'a VectorField),
    Tensor(&'a TensorField),
    /// P2 velocity coefficients (two per node).
    Velocity(&'a [f64]),
    /// Gradient of P2 velocity coefficients.
    VelocityGradient(&'a [f64]),
    /// P1 values (one per vertex).
    P1(&'a [f64]),
}

impl NormField<'_> {
    fn table_degree(&self) -> Option<usize> {
        match self {
            NormField::Vector(v) => v.table_degree(),
            NormField::Tensor(t) => t.table_degree(),
            _ => None,
        }
    }
}

/// A norm and the change observed when the quadrature degree is raised by two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormValue {
    pub value: f64,
    pub error_estimate: f64,
}

fn power_sum(field: NormField<'_>, mesh: &TriMesh, p: f64, degree: usize, keep: &(dyn Fn(usize) -> bool + Sync)) -> Result<f64> {
    let r = rule(degree);
    let parts: Vec<Result<f64>> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            if !keep(t) {
                return Ok(0.0);
            }
            let pts = mesh.triangle_points(t);
            let (gl, area) = barycentric_gradients(&pts);
            let mut s = 0.0;
            for (q, (l, w)) in r.bary.iter().zip(&r.weights).enumerate() {
                let x = map_point(&pts, *l);
                let at = At::quad(x, mesh, degree, t, q);
                let m = match field {
                    NormField::Scalar(f) => f.eval(at, *l)?.abs(),
                    NormField::Vector(f) => {
                        let v = f.eval(at)?;
                        v[0].hypot(v[1])
                    }
                    NormField::Tensor(f) => frobenius(&f.eval(at)?),
                    NormField::Velocity(c) => {
                        let v = p2_value_at(mesh, c, t, *l);
                        v[0].hypot(v[1])
                    }
                    NormField::VelocityGradient(c) => frobenius(&p2_gradient_at(mesh, c, t, *l, &gl)),
                    NormField::P1(c) => p1_value_at(mesh, c, t, *l).abs(),
                };
                if !m.is_finite() {
                    return Err(LabError::NotEvaluable(format!("non-finite value in triangle {t}")));
                }
                s += w * m.powf(p);
            }
            Ok(s * area)
        })
        .collect();
    let mut total = 0.0;
    for part in parts {
        total += part?;
    }
    Ok(total)
}

/// `‖f‖_{L^p}` over the triangles selected by `keep`.
pub fn lp_norm_where(
    field: NormField<'_>,
    mesh: &TriMesh,
    p: LebesgueExponent,
    degree: usize,
    keep: &(dyn Fn(usize) -> bool + Sync),
) -> Result<NormValue> {
    if degree < 4 {
        return Err(LabError::Precondition(format!("quadrature degree {degree} below 4")));
    }
    let p = p.value();
    // tables only live on their own rule: the norm is defined by that rule
    if let Some(d) = field.table_degree() {
        let value = power_sum(field, mesh, p, d, keep)?.powf(1.0 / p);
        return Ok(NormValue {
            value,
            error_estimate: 0.0,
        });
    }
    let value = power_sum(field, mesh, p, degree, keep)?.powf(1.0 / p);
    let finer = power_sum(field, mesh, p, degree + 2, keep)?.powf(1.0 / p);
    Ok(NormValue {
        value,
        error_estimate: (finer - value).abs(),
    })
}

pub fn lp_norm(field: NormField<'_>, mesh: &TriMesh, p: LebesgueExponent, degree: usize) -> Result<NormValue> {
    lp_norm_where(field, mesh, p, degree, &|_| true)
}

/// Measured quantities of one solve at one exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub exponent: f64,
    pub grad_velocity_lp: f64,
    pub pressure_lp: f64,
    pub velocity_lp: f64,
    pub source_lp: f64,
    /// Largest degree-escalation change relative to its norm.
    pub quadrature_error: f64,
    pub flagged: bool,
}

impl NormReport {
    pub fn ratio(&self) -> Result<f64> {
        if self.source_lp == 0.0 {
            return Err(LabError::UndefinedRatio("source norm is zero".into()));
        }
        Ok((self.grad_velocity_lp + self.pressure_lp) / self.source_lp)
    }
}

fn relative(n: NormValue) -> f64 {
    if n.value > 0.0 {
        n.error_estimate / n.value
    } else {
        n.error_estimate
    }
}

pub fn norm_report(solution: &StokesSolution, source: &TensorField, p: LebesgueExponent) -> Result<NormReport> {
    let mesh = &*solution.mesh;
    let d = POWER_DEGREE;
    let grad = lp_norm(NormField::VelocityGradient(&solution.velocity), mesh, p, d)?;
    let pressure = lp_norm(NormField::P1(&solution.pressure), mesh, p, d)?;
    let velocity = lp_norm(NormField::Velocity(&solution.velocity), mesh, p, d)?;
    let g = lp_norm(NormField::Tensor(source), mesh, p, d)?;
    let quadrature_error = [grad, pressure, velocity, g].into_iter().map(relative).fold(0.0, f64::max);
    Ok(NormReport {
        exponent: p.value(),
        grad_velocity_lp: grad.value,
        pressure_lp: pressure.value,
        velocity_lp: velocity.value,
        source_lp: g.value,
        quadrature_error,
        flagged: quadrature_error > QUADRATURE_FLAG,
    })
}

/// `(‖∇v‖_p + ‖π‖_p) / ‖G‖_p`.
pub fn estimate_ratio(solution: &StokesSolution, source: &TensorField, p: LebesgueExponent) -> Result<f64> {
    norm_report(solution, source, p)?.ratio()
}
