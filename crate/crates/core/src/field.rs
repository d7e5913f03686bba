//! Scalar, vector and tensor fields: closed forms, closures and
//! quadrature-point tables bound to a mesh.

use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::expr::Expr;
use crate::mesh::{Point, TriMesh};

pub type Vec2 = [f64; 2];
/// Row-major 2x2 matrix, `t[i][j]`.
pub type Tensor = [[f64; 2]; 2];

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> Vec2 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(Point) -> Tensor + Send + Sync>;

/// Values at the quadrature points of one rule on every triangle of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTable<T> {
    pub degree: usize,
    pub n_triangles: usize,
    pub n_vertices: usize,
    pub points_per_triangle: usize,
    pub values: Vec<T>,
}

impl<T: Copy> QuadTable<T> {
    pub fn bound_to(&self, mesh: &TriMesh, degree: usize) -> bool {
        self.degree == degree
            && self.n_triangles == mesh.n_triangles()
            && self.n_vertices == mesh.n_vertices()
    }

    pub fn at(&self, t: usize, q: usize) -> T {
        self.values[t * self.points_per_triangle + q]
    }
}

/// Where a field is being evaluated: a physical point, plus the triangle and
/// quadrature slot when the evaluation happens inside a quadrature loop.
#[derive(Debug, Clone, Copy)]
pub struct At<'a> {
    pub x: Point,
    pub slot: Option<(&'a TriMesh, usize, usize, usize)>,
}

impl<'a> At<'a> {
    pub fn point(x: Point) -> At<'static> {
        At { x, slot: None }
    }

    pub fn quad(x: Point, mesh: &'a TriMesh, degree: usize, t: usize, q: usize) -> At<'a> {
        At {
            x,
            slot: Some((mesh, degree, t, q)),
        }
    }
}

fn table_lookup<T: Copy>(table: &QuadTable<T>, at: At<'_>) -> Result<T> {
    match at.slot {
        Some((mesh, degree, t, q)) if table.bound_to(mesh, degree) => Ok(table.at(t, q)),
        Some((_, degree, _, _)) => Err(LabError::NotEvaluable(format!(
            "quadrature table of degree {} on {} triangles used with degree {degree} or another mesh",
            table.degree, table.n_triangles
        ))),
        None => Err(LabError::NotEvaluable(format!(
            "quadrature table evaluated at the arbitrary point ({}, {})",
            at.x[0], at.x[1]
        ))),
    }
}

#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Const(f64),
    Expr(Expr),
    Closure(ScalarFn),
    /// Piecewise linear, discontinuous: three vertex values per triangle.
    DiscontinuousP1(Arc<Vec<[f64; 3]>>),
}

impl ScalarField {
    pub fn closure(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> ScalarField {
        ScalarField::Closure(Arc::new(f))
    }

    /// Value at a point; discontinuous fields need the triangle.
    pub fn eval(&self, at: At<'_>, bary: [f64; 3]) -> Result<f64> {
        Ok(match self {
            ScalarField::Zero => 0.0,
            ScalarField::Const(c) => *c,
            ScalarField::Expr(e) => e.eval(at.x),
            ScalarField::Closure(f) => f(at.x),
            ScalarField::DiscontinuousP1(v) => match at.slot {
                Some((_, _, t, _)) => {
                    let w = v[t];
                    w[0] * bary[0] + w[1] * bary[1] + w[2] * bary[2]
                }
                None => return Err(LabError::NotEvaluable("discontinuous field needs a triangle".into())),
            },
        })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Zero => true,
            ScalarField::Const(c) => *c == 0.0,
            ScalarField::Expr(e) => e.is_zero(),
            ScalarField::DiscontinuousP1(v) => v.iter().all(|w| w.iter().all(|x| *x == 0.0)),
            ScalarField::Closure(_) => false,
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Const(c) => write!(f, "Const({c})"),
            ScalarField::Expr(e) => write!(f, "Expr({e})"),
            ScalarField::Closure(_) => write!(f, "Closure"),
            ScalarField::DiscontinuousP1(v) => write!(f, "DiscontinuousP1({} triangles)", v.len()),
        }
    }
}

#[derive(Clone)]
pub enum VectorField {
    Zero,
    Const(Vec2),
    Expr(Box<[Expr; 2]>),
    Closure(VectorFn),
    Table(Arc<QuadTable<Vec2>>),
}

impl VectorField {
    pub fn closure(f: impl Fn(Point) -> Vec2 + Send + Sync + 'static) -> VectorField {
        VectorField::Closure(Arc::new(f))
    }

    pub fn parse(components: [&str; 2]) -> Result<VectorField> {
        Ok(VectorField::Expr(Box::new([Expr::parse(components[0])?, Expr::parse(components[1])?])))
    }

    pub fn eval(&self, at: At<'_>) -> Result<Vec2> {
        Ok(match self {
            VectorField::Zero => [0.0; 2],
            VectorField::Const(c) => *c,
            VectorField::Expr(e) => [e[0].eval(at.x), e[1].eval(at.x)],
            VectorField::Closure(f) => f(at.x),
            VectorField::Table(t) => table_lookup(t, at)?,
        })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VectorField::Zero => true,
            VectorField::Const(c) => c[0] == 0.0 && c[1] == 0.0,
            VectorField::Expr(e) => e[0].is_zero() && e[1].is_zero(),
            VectorField::Table(t) => t.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0),
            VectorField::Closure(_) => false,
        }
    }

    pub fn table_degree(&self) -> Option<usize> {
        match self {
            VectorField::Table(t) => Some(t.degree),
            _ => None,
        }
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Zero => write!(f, "Zero"),
            VectorField::Const(c) => write!(f, "Const({c:?})"),
            VectorField::Expr(e) => write!(f, "Expr({}, {})", e[0], e[1]),
            VectorField::Closure(_) => write!(f, "Closure"),
            VectorField::Table(t) => write!(f, "Table(degree {}, {} triangles)", t.degree, t.n_triangles),
        }
    }
}

#[derive(Clone)]
pub enum TensorField {
    Zero,
    Const(Tensor),
    Expr(Box<[[Expr; 2]; 2]>),
    Closure(TensorFn),
    Table(Arc<QuadTable<Tensor>>),
}

impl TensorField {
    pub fn closure(f: impl Fn(Point) -> Tensor + Send + Sync + 'static) -> TensorField {
        TensorField::Closure(Arc::new(f))
    }

    /// Parses four component expressions `G11, G12, G21, G22`.
    pub fn parse(components: [&str; 4]) -> Result<TensorField> {
        let e = |i: usize| Expr::parse(components[i]);
        Ok(TensorField::Expr(Box::new([[e(0)?, e(1)?], [e(2)?, e(3)?]])))
    }

    pub fn eval(&self, at: At<'_>) -> Result<Tensor> {
        Ok(match self {
            TensorField::Zero => [[0.0; 2]; 2],
            TensorField::Const(c) => *c,
            TensorField::Expr(e) => [
                [e[0][0].eval(at.x), e[0][1].eval(at.x)],
                [e[1][0].eval(at.x), e[1][1].eval(at.x)],
            ],
            TensorField::Closure(f) => f(at.x),
            TensorField::Table(t) => table_lookup(t, at)?,
        })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TensorField::Zero => true,
            TensorField::Const(c) => c.iter().flatten().all(|v| *v == 0.0),
            TensorField::Expr(e) => e.iter().flatten().all(|x| x.is_zero()),
            TensorField::Table(t) => t.values.iter().all(|m| m.iter().flatten().all(|v| *v == 0.0)),
            TensorField::Closure(_) => false,
        }
    }

    pub fn table_degree(&self) -> Option<usize> {
        match self {
            TensorField::Table(t) => Some(t.degree),
            _ => None,
        }
    }

    /// The field `x -> factor * G(factor * x)`, which is the source of the
    /// problem posed on the domain scaled by `1 / factor`.
    pub fn rescaled_source(&self, factor: f64) -> Result<TensorField> {
        let scale = move |m: Tensor| m.map(|r| r.map(|v| v * factor));
        Ok(match self {
            TensorField::Zero => TensorField::Zero,
            TensorField::Const(c) => TensorField::Const(scale(*c)),
            TensorField::Table(t) => TensorField::Table(Arc::new(QuadTable {
                values: t.values.iter().map(|m| scale(*m)).collect(),
                ..(**t).clone()
            })),
            other => {
                let g = other.clone();
                TensorField::closure(move |x| {
                    let m = g.eval(At::point([factor * x[0], factor * x[1]])).unwrap_or([[f64::NAN; 2]; 2]);
                    scale(m)
                })
            }
        })
    }
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorField::Zero => write!(f, "Zero"),
            TensorField::Const(c) => write!(f, "Const({c:?})"),
            TensorField::Expr(e) => write!(f, "Expr([[{}, {}], [{}, {}]])", e[0][0], e[0][1], e[1][0], e[1][1]),
            TensorField::Closure(_) => write!(f, "Closure"),
            TensorField::Table(t) => write!(f, "Table(degree {}, {} triangles)", t.degree, t.n_triangles),
        }
    }
}

pub fn frobenius(m: &Tensor) -> f64 {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

pub fn contract(a: &Tensor, b: &Tensor) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_fields() {
        let g = TensorField::parse(["x", "0", "0", "x"]).unwrap();
        assert_eq!(g.eval(At::point([2.0, 1.0])).unwrap(), [[2.0, 0.0], [0.0, 2.0]]);
        let v = VectorField::parse(["y", "-x"]).unwrap();
        assert_eq!(v.eval(At::point([2.0, 1.0])).unwrap(), [1.0, -2.0]);
        assert!(TensorField::parse(["0", "0", "0", "0"]).unwrap().is_zero());
    }

    #[test]
    fn rescaled_source_scales_argument_and_value() {
        let g = TensorField::parse(["x*y", "1", "0", "y"]).unwrap();
        let g1 = g.rescaled_source(0.5).unwrap();
        let m = g1.eval(At::point([2.0, 4.0])).unwrap();
        // 0.5 * G(1, 2)
        assert_eq!(m, [[1.0, 0.5], [0.0, 1.0]]);
    }

    #[test]
    fn tables_refuse_foreign_points() {
        let t = TensorField::Table(Arc::new(QuadTable {
            degree: 6,
            n_triangles: 1,
            n_vertices: 3,
            points_per_triangle: 1,
            values: vec![[[1.0, 0.0], [0.0, 1.0]]],
        }));
        assert!(matches!(t.eval(At::point([0.0, 0.0])), Err(LabError::NotEvaluable(_))));
    }
}
