//! Bogovskii operator of the perforated square: `B_ε = R_ε ∘ B_D ∘ E`, with `E`
//! the zero extension and `B_D` a prescribed-divergence solve on `D`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::fem::{divergence_residual, Dirichlet, DivData, Source, StokesSolution, StokesSolver};
use crate::field::{At, ScalarField};
use crate::mesh::TriMesh;
use crate::norms::{lp_norm, LebesgueExponent, NormField};
use crate::quadrature::{rule, ASSEMBLY_DEGREE, POWER_DEGREE};
use crate::restriction::{restrict, restriction_exponent, PerforatedMesh};

/// Relative size of the mean allowed in a mean-zero field.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// A discontinuous piecewise linear field with zero mean over its mesh.
#[derive(Debug, Clone)]
pub struct MeanZeroField {
    pub mesh: Arc<TriMesh>,
    /// Values at the three vertices of every triangle.
    pub values: Arc<Vec<[f64; 3]>>,
}

fn integral_and_rms(mesh: &TriMesh, values: &[[f64; 3]]) -> (f64, f64, f64) {
    let mut integral = 0.0;
    let mut square = 0.0;
    let mut area = 0.0;
    for (t, v) in values.iter().enumerate() {
        let a = mesh.triangle_area(t);
        integral += a * (v[0] + v[1] + v[2]) / 3.0;
        // exact mass matrix of P1
        square += a / 6.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[0] * v[1] + v[1] * v[2] + v[2] * v[0]);
        area += a;
    }
    (integral, (square / area).sqrt(), area)
}

impl MeanZeroField {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<[f64; 3]>) -> Result<MeanZeroField> {
        if values.len() != mesh.n_triangles() {
            return Err(LabError::Precondition(format!(
                "{} triangle values for {} triangles",
                values.len(),
                mesh.n_triangles()
            )));
        }
        let (integral, rms, area) = integral_and_rms(&mesh, &values);
        let mean = integral / area;
        if mean.abs() > MEAN_TOLERANCE * rms {
            return Err(LabError::Precondition(format!("field has mean {mean:.3e} (rms {rms:.3e})")));
        }
        Ok(MeanZeroField {
            mesh,
            values: Arc::new(values),
        })
    }

    /// Subtracts the mean.
    pub fn projected(mesh: Arc<TriMesh>, mut values: Vec<[f64; 3]>) -> Result<MeanZeroField> {
        let (integral, _, area) = integral_and_rms(&mesh, &values);
        let mean = integral / area;
        for v in &mut values {
            for x in v.iter_mut() {
                *x -= mean;
            }
        }
        MeanZeroField::new(mesh, values)
    }

    /// Interpolates `f` at the vertices of every triangle and removes the mean.
    pub fn from_field(mesh: Arc<TriMesh>, f: &ScalarField) -> Result<MeanZeroField> {
        let mut values = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let pts = mesh.triangle_points(t);
            let mut v = [0.0; 3];
            for i in 0..3 {
                let mut l = [0.0; 3];
                l[i] = 1.0;
                v[i] = f.eval(At::point(pts[i]), l)?;
            }
            values.push(v);
        }
        MeanZeroField::projected(mesh, values)
    }

    /// Independent uniform values in `[-1, 1]` at every triangle corner, mean removed.
    pub fn random(mesh: Arc<TriMesh>, seed: u64) -> Result<MeanZeroField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..mesh.n_triangles())
            .map(|_| [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)])
            .collect();
        MeanZeroField::projected(mesh, values)
    }

    pub fn mean(&self) -> f64 {
        let (integral, _, area) = integral_and_rms(&self.mesh, &self.values);
        integral / area
    }

    pub fn field(&self) -> ScalarField {
        ScalarField::DiscontinuousP1(self.values.clone())
    }

    pub fn lp_norm(&self, p: LebesgueExponent) -> Result<f64> {
        Ok(lp_norm(NormField::Scalar(&self.field()), &self.mesh, p, POWER_DEGREE)?.value)
    }

    /// `∫ f ψ_v` for every vertex.
    pub fn pressure_moments(&self) -> Vec<f64> {
        let mesh = &*self.mesh;
        let r = rule(ASSEMBLY_DEGREE);
        let mut out = vec![0.0; mesh.n_vertices()];
        for (t, v) in self.values.iter().enumerate() {
            let a = mesh.triangle_area(t);
            let tri = mesh.triangles()[t];
            for (l, w) in r.bary.iter().zip(&r.weights) {
                let f = l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
                for q in 0..3 {
                    out[tri[q]] += w * a * f * l[q];
                }
            }
        }
        out
    }
}

/// `E f`: `f` on fluid triangles, zero inside the holes.
pub fn zero_extend(pm: &PerforatedMesh, f: &MeanZeroField) -> Result<MeanZeroField> {
    if !Arc::ptr_eq(&f.mesh, &pm.fluid) && f.mesh.checksum() != pm.fluid.checksum() {
        return Err(LabError::Precondition("field does not live on the perforated mesh".into()));
    }
    let mut values = vec![[0.0; 3]; pm.full.n_triangles()];
    for (t, &parent) in pm.fluid_parent_triangles.iter().enumerate() {
        values[parent] = f.values[t];
    }
    MeanZeroField::new(pm.full.clone(), values)
}

/// The perforated mesh together with the factored problem on `D`.
#[derive(Debug, Clone)]
pub struct BogovskiiSetup {
    pub mesh: PerforatedMesh,
    pub solver_d: StokesSolver,
}

impl BogovskiiSetup {
    pub fn new(mesh: PerforatedMesh) -> Result<BogovskiiSetup> {
        let solver_d = StokesSolver::new(mesh.full.clone())?;
        Ok(BogovskiiSetup { mesh, solver_d })
    }
}

/// `B_D f`: zero-trace velocity on `D` with `div w = f` discretely.
pub fn bogovskii_reference(setup: &BogovskiiSetup, f: &MeanZeroField) -> Result<StokesSolution> {
    if !Arc::ptr_eq(&f.mesh, &setup.mesh.full) && f.mesh.checksum() != setup.mesh.full.checksum() {
        return Err(LabError::Precondition("field does not live on the mesh of D".into()));
    }
    setup
        .solver_d
        .solve(&Source::default(), &DivData::Field(f.field()), &Dirichlet::Zero)
}

/// `B_ε f = R_ε(B_D(E f))` on `D_ε`.
#[derive(Debug, Clone)]
pub struct PerforatedBogovskii {
    /// P2 coefficients on `D_ε`.
    pub velocity: Vec<f64>,
    /// `B_D(E f)` on `D`.
    pub reference: Vec<f64>,
}

pub fn bogovskii_perforated(setup: &BogovskiiSetup, f: &MeanZeroField) -> Result<PerforatedBogovskii> {
    let extended = zero_extend(&setup.mesh, f)?;
    let reference = bogovskii_reference(setup, &extended)?.velocity;
    let restricted = restrict(&setup.mesh, &reference)?;
    Ok(PerforatedBogovskii {
        velocity: restricted.velocity,
        reference,
    })
}

/// Residual of `div w = f` tested against the pressure space of `D_ε`.
pub fn bogovskii_residual(pm: &PerforatedMesh, w: &[f64], f: &MeanZeroField) -> f64 {
    divergence_residual(&pm.fluid, w, &f.pressure_moments())
}

/// `‖B_ε f‖_{W^{1,p}} / ((1 + ε^e) ‖f‖_p)`.
pub fn bogovskii_constant(pm: &PerforatedMesh, w: &[f64], f: &MeanZeroField, p: LebesgueExponent) -> Result<f64> {
    let e = restriction_exponent(p.value(), 2, pm.domain.alpha)?;
    let pv = p.value();
    let grad = lp_norm(NormField::VelocityGradient(w), &pm.fluid, p, POWER_DEGREE)?.value;
    let val = lp_norm(NormField::Velocity(w), &pm.fluid, p, POWER_DEGREE)?.value;
    let w1p = (grad.powf(pv) + val.powf(pv)).powf(1.0 / pv);
    let fp = f.lp_norm(p)?;
    if fp == 0.0 {
        return Err(LabError::UndefinedRatio("f vanishes".into()));
    }
    Ok(w1p / ((1.0 + pm.epsilon().powf(e)) * fp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HoleShape;
    use crate::perforated::{build_perforated, DEFAULT_B1};

    fn setup(alpha: f64) -> BogovskiiSetup {
        let pd = build_perforated(1.0, 2, alpha, HoleShape::disk(0.25), DEFAULT_B1, None).unwrap();
        BogovskiiSetup::new(PerforatedMesh::new(pd, 16, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn mean_is_enforced() {
        let s = setup(1.0);
        let mesh = s.mesh.fluid.clone();
        let ones = vec![[1.0; 3]; mesh.n_triangles()];
        assert!(matches!(MeanZeroField::new(mesh.clone(), ones.clone()), Err(LabError::Precondition(_))));
        let z = MeanZeroField::projected(mesh, ones).unwrap();
        assert!(z.values.iter().all(|v| v.iter().all(|x| x.abs() < 1e-14)));
    }

    #[test]
    fn zero_extension_keeps_norm() {
        let s = setup(1.0);
        let f = MeanZeroField::random(s.mesh.fluid.clone(), 3).unwrap();
        let e = zero_extend(&s.mesh, &f).unwrap();
        for p in [1.5, 2.0, 4.0] {
            let p = LebesgueExponent::new(p).unwrap();
            assert_eq!(e.lp_norm(p).unwrap(), f.lp_norm(p).unwrap());
        }
        assert!(e.mean().abs() < 1e-14);
    }

    #[test]
    fn divergence_is_reproduced() {
        let s = setup(2.0);
        let f = MeanZeroField::random(s.mesh.fluid.clone(), 11).unwrap();
        let b = bogovskii_perforated(&s, &f).unwrap();
        assert!(bogovskii_residual(&s.mesh, &b.velocity, &f) < 1e-8);
        let zero = MeanZeroField::new(s.mesh.fluid.clone(), vec![[0.0; 3]; s.mesh.fluid.n_triangles()]).unwrap();
        let b0 = bogovskii_perforated(&s, &zero).unwrap();
        assert!(b0.velocity.iter().all(|v| *v == 0.0));
    }
}
