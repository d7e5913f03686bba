//! Hole shapes and single-hole domain descriptions.

use std::f64::consts::{PI, TAU};

use crate::error::{LabError, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum HoleKind {
    Disk,
    Square,
    /// Star-shaped polygon around the origin, counter-clockwise, unit scale.
    Polygon(Vec<Point>),
}

/// Model hole centred at the origin.
///
/// `size` is the disk radius, the square half-side, or the polygon scale factor;
/// `angle` rotates the shape counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleShape {
    pub kind: HoleKind,
    pub size: f64,
    pub angle: f64,
}

impl HoleShape {
    pub fn disk(radius: f64) -> HoleShape {
        HoleShape {
            kind: HoleKind::Disk,
            size: radius,
            angle: 0.0,
        }
    }

    pub fn square(half_side: f64) -> HoleShape {
        HoleShape {
            kind: HoleKind::Square,
            size: half_side,
            angle: 0.0,
        }
    }

    pub fn polygon(vertices: Vec<Point>, scale: f64) -> Result<HoleShape> {
        let shape = HoleShape {
            kind: HoleKind::Polygon(vertices),
            size: scale,
            angle: 0.0,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn rotated(&self, angle: f64) -> HoleShape {
        HoleShape {
            angle: self.angle + angle,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> HoleShape {
        HoleShape {
            size: self.size * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.size > 0.0 && self.size.is_finite()) {
            return Err(LabError::InvalidSpec(format!("hole size {} must be positive", self.size)));
        }
        if let HoleKind::Polygon(v) = &self.kind {
            if v.len() < 3 {
                return Err(LabError::InvalidSpec("polygon hole needs at least 3 vertices".into()));
            }
            // star-shaped about the origin, counter-clockwise, winding once
            let mut total = 0.0;
            for i in 0..v.len() {
                let a = v[i];
                let b = v[(i + 1) % v.len()];
                let cross = a[0] * b[1] - a[1] * b[0];
                if cross <= 0.0 {
                    return Err(LabError::InvalidSpec(format!(
                        "polygon hole must be counter-clockwise and star-shaped about its centre (edge {i})"
                    )));
                }
                total += cross.atan2(a[0] * b[0] + a[1] * b[1]);
            }
            if (total - TAU).abs() > 1e-9 {
                return Err(LabError::InvalidSpec("polygon hole winds more than once".into()));
            }
        }
        Ok(())
    }

    /// Radius of the smallest origin-centred disk containing the shape.
    pub fn circumradius(&self) -> f64 {
        match &self.kind {
            HoleKind::Disk => self.size,
            HoleKind::Square => self.size * 2f64.sqrt(),
            HoleKind::Polygon(v) => {
                self.size * v.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match &self.kind {
            HoleKind::Disk => PI * self.size * self.size,
            HoleKind::Square => 4.0 * self.size * self.size,
            HoleKind::Polygon(v) => {
                let mut a = 0.0;
                for i in 0..v.len() {
                    let p = v[i];
                    let q = v[(i + 1) % v.len()];
                    a += p[0] * q[1] - p[1] * q[0];
                }
                0.5 * a * self.size * self.size
            }
        }
    }

    /// Area of the polygon with `n` boundary nodes that the mesher uses.
    pub fn discrete_area(&self, n: usize) -> f64 {
        let pts: Vec<Point> = (0..n).map(|i| self.boundary_point(i as f64 / n as f64)).collect();
        let mut a = 0.0;
        for i in 0..n {
            let p = pts[i];
            let q = pts[(i + 1) % n];
            a += p[0] * q[1] - p[1] * q[0];
        }
        0.5 * a
    }

    /// Point on the boundary at parameter `t` in `[0, 1)`, uniform in arclength
    /// (in angle for the disk). For the square, `t = 0` is the midpoint of the
    /// right side and corners sit at `t = 1/8 + k/4`.
    pub fn boundary_point(&self, t: f64) -> Point {
        let p = match &self.kind {
            HoleKind::Disk => {
                let a = TAU * t;
                [self.size * a.cos(), self.size * a.sin()]
            }
            HoleKind::Square => square_point(self.size, t),
            HoleKind::Polygon(v) => {
                let q = polygon_point(v, t);
                [self.size * q[0], self.size * q[1]]
            }
        };
        rotate(p, self.angle)
    }

    /// Polar angle of `boundary_point(0)`.
    pub fn start_angle(&self) -> f64 {
        let p = self.boundary_point(0.0);
        p[1].atan2(p[0])
    }

    /// True when the closed shape lies inside the open disk of radius `r`.
    pub fn inside_disk(&self, r: f64) -> bool {
        self.circumradius() < r
    }
}

pub fn rotate(p: Point, angle: f64) -> Point {
    if angle == 0.0 {
        return p;
    }
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Boundary of the square `[-h, h]^2` parametrised by arclength from `(h, 0)`.
pub fn square_point(h: f64, t: f64) -> Point {
    let u = 8.0 * t.rem_euclid(1.0);
    if u < 1.0 {
        [h, h * u]
    } else if u < 3.0 {
        [h * (2.0 - u), h]
    } else if u < 5.0 {
        [-h, h * (4.0 - u)]
    } else if u < 7.0 {
        [h * (u - 6.0), -h]
    } else {
        [h, h * (u - 8.0)]
    }
}

fn polygon_point(v: &[Point], t: f64) -> Point {
    let n = v.len();
    let lens: Vec<f64> = (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .collect();
    let total: f64 = lens.iter().sum();
    let mut s = t.rem_euclid(1.0) * total;
    for i in 0..n {
        if s <= lens[i] || i == n - 1 {
            let a = v[i];
            let b = v[(i + 1) % n];
            let f = (s / lens[i]).clamp(0.0, 1.0);
            return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
        }
        s -= lens[i];
    }
    unreachable!()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterShape {
    /// Square `[-L, L]^2`.
    Square { half_side: f64 },
    /// Disk of radius `L`.
    Disk { radius: f64 },
}

impl OuterShape {
    pub fn size(&self) -> f64 {
        match *self {
            OuterShape::Square { half_side } => half_side,
            OuterShape::Disk { radius } => radius,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            OuterShape::Square { half_side } => 4.0 * half_side * half_side,
            OuterShape::Disk { radius } => PI * radius * radius,
        }
    }

    /// Radius of the largest origin-centred disk inside the shape.
    pub fn inradius(&self) -> f64 {
        self.size()
    }

    pub fn scaled(&self, f: f64) -> OuterShape {
        match *self {
            OuterShape::Square { half_side } => OuterShape::Square {
                half_side: half_side * f,
            },
            OuterShape::Disk { radius } => OuterShape::Disk { radius: radius * f },
        }
    }
}

/// Outer domain, model hole and hole scale of a single-hole experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub outer: OuterShape,
    pub hole: HoleShape,
    pub epsilon: f64,
    pub dimension: usize,
}

impl DomainSpec {
    pub fn new(outer: OuterShape, hole: HoleShape, epsilon: f64) -> DomainSpec {
        DomainSpec {
            outer,
            hole,
            epsilon,
            dimension: 2,
        }
    }

    /// Square of half-side 2 with a disk hole of radius 1/4.
    pub fn default_with_epsilon(epsilon: f64) -> DomainSpec {
        DomainSpec::new(
            OuterShape::Square { half_side: 2.0 },
            HoleShape::disk(0.25),
            epsilon,
        )
    }

    pub fn with_epsilon(&self, epsilon: f64) -> DomainSpec {
        DomainSpec {
            epsilon,
            ..self.clone()
        }
    }

    /// The actual hole `eps * T`.
    pub fn scaled_hole(&self) -> HoleShape {
        self.hole.scaled(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 2 {
            return Err(LabError::InvalidSpec(format!(
                "only d = 2 is executable (got d = {})",
                self.dimension
            )));
        }
        self.hole.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(LabError::InvalidSpec(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.outer.inradius() < 1.0 {
            return Err(LabError::InvalidSpec(format!(
                "outer domain must contain the unit ball (inradius {})",
                self.outer.inradius()
            )));
        }
        let r = self.epsilon * self.hole.circumradius();
        if !(r < 0.5) {
            return Err(LabError::InvalidSpec(format!(
                "scaled hole (circumradius {r}) is not inside B(0, 1/2)"
            )));
        }
        Ok(())
    }

    /// Area of the fluid region with the hole boundary resolved by `n` segments.
    pub fn fluid_area(&self, n_hole: usize) -> f64 {
        self.outer.area() - self.scaled_hole().discrete_area(n_hole)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_parametrisation_hits_corners() {
        let h = 2.0;
        assert_eq!(square_point(h, 0.0), [2.0, 0.0]);
        assert_eq!(square_point(h, 0.125), [2.0, 2.0]);
        assert_eq!(square_point(h, 0.375), [-2.0, 2.0]);
        assert_eq!(square_point(h, 0.625), [-2.0, -2.0]);
        assert_eq!(square_point(h, 0.875), [2.0, -2.0]);
    }

    #[test]
    fn hole_in_half_ball() {
        assert!(DomainSpec::default_with_epsilon(1.0).validate().is_ok());
        assert!(DomainSpec::default_with_epsilon(1.0 / 64.0).validate().is_ok());
        let bad = DomainSpec::default_with_epsilon(3.0);
        assert!(matches!(bad.validate(), Err(LabError::InvalidSpec(_))));
        let small_outer = DomainSpec::new(
            OuterShape::Square { half_side: 0.9 },
            HoleShape::disk(0.25),
            0.5,
        );
        assert!(small_outer.validate().is_err());
    }

    #[test]
    fn polygon_validation() {
        let tri = vec![[0.3, 0.0], [-0.15, 0.25], [-0.15, -0.25]];
        assert!(HoleShape::polygon(tri.clone(), 1.0).is_ok());
        let mut cw = tri;
        cw.reverse();
        assert!(HoleShape::polygon(cw, 1.0).is_err());
    }

    #[test]
    fn rotation_preserves_boundary_radius() {
        let s = HoleShape::square(0.2).rotated(0.3);
        for i in 0..16 {
            let p = s.boundary_point(i as f64 / 16.0);
            assert!(p[0].hypot(p[1]) <= s.circumradius() + 1e-15);
        }
    }
}
