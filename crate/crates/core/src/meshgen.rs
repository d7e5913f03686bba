//! Ring-stack mesh generators.
//!
//! Every mesh is a stack of closed node rings around a hole (or a filled core),
//! stitched ring to ring. Outward ring radii grow geometrically so the element
//! size is proportional to the distance from the hole; ring node counts double
//! when the tangential spacing gets too coarse. Shapes are blended into circles
//! over the first few rings and circles are morphed into squares at the end.

use std::f64::consts::TAU;

use crate::error::{LabError, Result};
use crate::geometry::{square_point, DomainSpec, HoleKind, HoleShape, OuterShape};
use crate::mesh::{min_angle, signed_area, EdgeTag, Point, RegionTag, TaggedEdge, TriMesh};

/// Radial ring step relative to the tangential node spacing.
pub(crate) const KAPPA: f64 = 0.87;
/// Coarser radial step used inside perforation cells.
pub(crate) const KAPPA_CELL: f64 = 1.2;
/// Radial step of a count-doubling layer relative to the inner spacing.
pub(crate) const KAPPA_DOUBLE: f64 = 0.6;
/// Rings over which a non-circular hole is blended into a circle.
pub(crate) const BLEND_RINGS: usize = 3;
/// Largest allowed ratio between consecutive ring radii.
pub const MAX_GRADING_RATIO: f64 = 1.5;

#[derive(Debug, Default)]
pub(crate) struct Builder {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<RegionTag>,
    pub tagged: Vec<TaggedEdge>,
}

impl Builder {
    pub fn add_points(&mut self, pts: &[Point]) -> Vec<usize> {
        let start = self.vertices.len();
        self.vertices.extend_from_slice(pts);
        (start..self.vertices.len()).collect()
    }

    pub fn add_point(&mut self, p: Point) -> usize {
        self.vertices.push(p);
        self.vertices.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize, region: RegionTag) -> Result<()> {
        let area = signed_area(self.vertices[a], self.vertices[b], self.vertices[c]);
        if !(area > 0.0) {
            return Err(LabError::GradingFailure(format!(
                "inverted element near ({:.4}, {:.4}); rings overlap",
                self.vertices[a][0], self.vertices[a][1]
            )));
        }
        self.triangles.push([a, b, c]);
        self.regions.push(region);
        Ok(())
    }

    /// Connects two concentric counter-clockwise rings. Counts must be equal or
    /// differ by a factor of two; node `i` of the coarser ring sits radially
    /// against node `2i` of the finer one.
    pub fn stitch(&mut self, inner: &[usize], outer: &[usize], region: RegionTag) -> Result<()> {
        let (ni, no) = (inner.len(), outer.len());
        if ni == no {
            for i in 0..ni {
                let (a, b) = (inner[i], inner[(i + 1) % ni]);
                let (d, c) = (outer[i], outer[(i + 1) % no]);
                let v = &self.vertices;
                let split_ac = min_angle([v[a], v[d], v[c]]).min(min_angle([v[a], v[c], v[b]]));
                let split_bd = min_angle([v[a], v[d], v[b]]).min(min_angle([v[d], v[c], v[b]]));
                if split_ac >= split_bd {
                    self.tri(a, d, c, region)?;
                    self.tri(a, c, b, region)?;
                } else {
                    self.tri(a, d, b, region)?;
                    self.tri(d, c, b, region)?;
                }
            }
        } else if no == 2 * ni {
            for i in 0..ni {
                let (a, b) = (inner[i], inner[(i + 1) % ni]);
                let (o0, o1, o2) = (outer[2 * i], outer[2 * i + 1], outer[(2 * i + 2) % no]);
                self.tri(a, o0, o1, region)?;
                self.tri(a, o1, b, region)?;
                self.tri(b, o1, o2, region)?;
            }
        } else if ni == 2 * no {
            for i in 0..no {
                let (a, b) = (outer[i], outer[(i + 1) % no]);
                let (f0, f1, f2) = (inner[2 * i], inner[2 * i + 1], inner[(2 * i + 2) % ni]);
                self.tri(f0, a, f1, region)?;
                self.tri(f1, a, b, region)?;
                self.tri(f1, b, f2, region)?;
            }
        } else {
            return Err(LabError::Internal(format!("cannot stitch rings of {ni} and {no} nodes")));
        }
        Ok(())
    }

    pub fn fan(&mut self, center: usize, ring: &[usize], region: RegionTag) -> Result<()> {
        for i in 0..ring.len() {
            self.tri(center, ring[i], ring[(i + 1) % ring.len()], region)?;
        }
        Ok(())
    }

    pub fn tag_ring(&mut self, ring: &[usize], tag: EdgeTag) {
        for i in 0..ring.len() {
            self.tagged.push(TaggedEdge {
                v: [ring[i], ring[(i + 1) % ring.len()]],
                tag,
            });
        }
    }

    pub fn finish(self) -> Result<TriMesh> {
        TriMesh::new(self.vertices, self.triangles, self.regions, self.tagged)
    }
}

/// One ring of the radial plan: radius and node count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RingSpec {
    pub radius: f64,
    pub count: usize,
}

/// Radii and counts of the rings strictly after `r0` up to and including `r1`.
/// Counts start at `c0` and double until `c1` is reached.
pub(crate) fn radial_plan(r0: f64, r1: f64, c0: usize, c1: usize, kappa: f64) -> Result<Vec<RingSpec>> {
    if !(r1 > r0 && r0 > 0.0) {
        return Err(LabError::GradingFailure(format!(
            "no room for rings between radius {r0:.4e} and {r1:.4e}"
        )));
    }
    let final_spacing = TAU * r1 / c1 as f64;
    let mut steps: Vec<(f64, bool)> = Vec::new();
    let (mut r, mut c) = (r0, c0);
    while r < r1 * (1.0 - 1e-12) {
        let double = c < c1 && TAU * r / c as f64 > std::f64::consts::SQRT_2 * final_spacing;
        let k = if double { KAPPA_DOUBLE } else { kappa };
        let q = (1.0 + k * TAU / c as f64).min(MAX_GRADING_RATIO);
        steps.push((q.ln(), double));
        r *= q;
        if double {
            c *= 2;
        }
        if steps.len() > 100_000 {
            return Err(LabError::Internal("ring plan does not terminate".into()));
        }
    }
    if c != c1 {
        return Err(LabError::GradingFailure(format!(
            "ring count reached {c} instead of {c1} before radius {r1:.4e}; h_far too small for the available rings"
        )));
    }
    let total: f64 = steps.iter().map(|s| s.0).sum();
    let scale = (r1 / r0).ln() / total;
    if scale < 0.4 {
        return Err(LabError::GradingFailure(format!(
            "gap between radius {r0:.4e} and {r1:.4e} is too thin for a ring layer (scale {scale:.3})"
        )));
    }
    let mut out = Vec::with_capacity(steps.len());
    let mut log_r = r0.ln();
    let mut c = c0;
    for (i, (d, double)) in steps.iter().enumerate() {
        log_r += d * scale;
        if *double {
            c *= 2;
        }
        let radius = if i + 1 == steps.len() { r1 } else { log_r.exp() };
        out.push(RingSpec { radius, count: c });
    }
    Ok(out)
}

/// Boundary nodes of a hole placed at `center`.
pub(crate) fn hole_points(center: Point, hole: &HoleShape, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let p = hole.boundary_point(i as f64 / n as f64);
            [center[0] + p[0], center[1] + p[1]]
        })
        .collect()
}

fn circle_points(center: Point, radius: f64, phase: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let a = phase + TAU * i as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Polar radii and unwrapped angles of a star-shaped ring about the origin.
fn polar_unwrapped(rel: &[Point]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rel.len());
    let mut prev = f64::NAN;
    for p in rel {
        let mut a = p[1].atan2(p[0]);
        if prev.is_nan() {
            prev = a;
        } else {
            while a < prev {
                a += TAU;
            }
            prev = a;
        }
        out.push((p[0].hypot(p[1]), a));
    }
    out
}

/// Builds the rings from a hole boundary out to the circle of radius `radius`.
/// Returns the hole ring and the final circle ring.
pub(crate) fn hole_to_circle(
    b: &mut Builder,
    center: Point,
    hole: &HoleShape,
    n: usize,
    radius: f64,
    n_final: usize,
    kappa: f64,
    region: RegionTag,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let rho = hole.circumradius();
    if !(rho < radius) {
        return Err(LabError::InvalidSpec(format!(
            "hole (circumradius {rho:.4e}) touches the circle of radius {radius:.4e}"
        )));
    }
    let plan = radial_plan(rho, radius, n, n_final, kappa)?;
    let hole_pts = hole_points(center, hole, n);
    let hole_ring = b.add_points(&hole_pts);
    let circular = matches!(hole.kind, HoleKind::Disk);
    let rel: Vec<Point> = hole_pts.iter().map(|p| [p[0] - center[0], p[1] - center[1]]).collect();
    let polar = polar_unwrapped(&rel);
    let phase = polar[0].1;
    let blend_len = if circular { 0 } else { BLEND_RINGS.min(plan.len()) };
    let mut prev = hole_ring.clone();
    for (j, ring) in plan.iter().enumerate() {
        let pts = if j < blend_len && ring.count == n {
            let beta = (j + 1) as f64 / blend_len as f64;
            polar
                .iter()
                .enumerate()
                .map(|(i, &(r_s, a_s))| {
                    let a_c = phase + TAU * i as f64 / n as f64;
                    let a = (1.0 - beta) * a_s + beta * a_c;
                    let r = ring.radius * ((1.0 - beta) * r_s / rho + beta);
                    [center[0] + r * a.cos(), center[1] + r * a.sin()]
                })
                .collect()
        } else {
            circle_points(center, ring.radius, phase, ring.count)
        };
        let ids = b.add_points(&pts);
        b.stitch(&prev, &ids, region)?;
        prev = ids;
    }
    Ok((hole_ring, prev))
}

/// Fills the inside of a hole ring with shrinking scaled copies and a centre fan.
pub(crate) fn fill_interior(
    b: &mut Builder,
    center: Point,
    hole: &HoleShape,
    ring: &[usize],
    region: RegionTag,
) -> Result<()> {
    let mut c = ring.len();
    let mut s = 1.0;
    let mut prev = ring.to_vec();
    while c > 8 && c % 2 == 0 {
        let coarse = c / 2;
        s /= 1.0 + KAPPA_DOUBLE * TAU / coarse as f64;
        let pts: Vec<Point> = (0..coarse)
            .map(|i| {
                let p = hole.boundary_point(i as f64 / coarse as f64);
                [center[0] + s * p[0], center[1] + s * p[1]]
            })
            .collect();
        let ids = b.add_points(&pts);
        b.stitch(&ids, &prev, region)?;
        prev = ids;
        c = coarse;
    }
    let mid = b.add_point(center);
    b.fan(mid, &prev, region)
}

/// Number of morph rings and their blend parameters from a circle of node
/// spacing `s_in` to a square of node spacing `s_out` across radial gap `gap`.
fn morph_params(gap: f64, s_in: f64, s_out: f64) -> Vec<f64> {
    let m = ((gap / (KAPPA * 0.5 * (s_in + s_out))).round() as usize).max(1);
    let g = if m > 1 { (s_out / s_in).powf(1.0 / (m - 1) as f64) } else { 1.0 };
    let steps: Vec<f64> = (0..m).map(|k| g.powi(k as i32)).collect();
    let total: f64 = steps.iter().sum();
    let mut acc = 0.0;
    steps
        .iter()
        .map(|s| {
            acc += s;
            acc / total
        })
        .collect()
}

/// Index offset aligning circle node 0 (at polar angle `phase`) with the
/// square parametrisation that starts at polar angle 0.
pub(crate) fn square_shift(phase: f64, n: usize) -> usize {
    let k = (phase / TAU * n as f64).round() as i64;
    k.rem_euclid(n as i64) as usize
}

/// Morphs a circle ring (radius `radius`, node 0 at `phase`) into a square ring.
/// `square_nodes[l]` is the square node at parameter `l / n` from the right-side
/// midpoint; if `None`, square points are created from `half_side`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn circle_to_square(
    b: &mut Builder,
    center: Point,
    circle: &[usize],
    radius: f64,
    phase: f64,
    half_side: f64,
    square_nodes: Option<&[usize]>,
    region: RegionTag,
) -> Result<Vec<usize>> {
    let n = circle.len();
    let shift = square_shift(phase, n);
    let sq = |i: usize| -> Point {
        let p = square_point(half_side, ((i + shift) % n) as f64 / n as f64);
        [center[0] + p[0], center[1] + p[1]]
    };
    let circ = |i: usize| -> Point {
        let a = phase + TAU * i as f64 / n as f64;
        [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
    };
    let s_in = TAU * radius / n as f64;
    let s_out = 8.0 * half_side / n as f64;
    let gammas = morph_params(half_side - radius, s_in, s_out);
    let mut prev = circle.to_vec();
    for (m, &gamma) in gammas.iter().enumerate() {
        let last = m + 1 == gammas.len();
        let ids = if last {
            match square_nodes {
                Some(nodes) => (0..n).map(|i| nodes[(i + shift) % n]).collect(),
                None => {
                    let pts: Vec<Point> = (0..n).map(sq).collect();
                    b.add_points(&pts)
                }
            }
        } else {
            let pts: Vec<Point> = (0..n)
                .map(|i| {
                    let (c, s) = (circ(i), sq(i));
                    [(1.0 - gamma) * c[0] + gamma * s[0], (1.0 - gamma) * c[1] + gamma * s[1]]
                })
                .collect();
            b.add_points(&pts)
        };
        b.stitch(&prev, &ids, region)?;
        prev = ids;
    }
    Ok(prev)
}

fn check_counts(n_hole: usize, outer: &OuterShape) -> Result<()> {
    if n_hole < 16 {
        return Err(LabError::InvalidSpec(format!("n_hole = {n_hole} must be at least 16")));
    }
    if matches!(outer, OuterShape::Square { .. }) && n_hole % 8 != 0 {
        return Err(LabError::InvalidSpec(format!(
            "n_hole = {n_hole} must be a multiple of 8 for a square outer boundary"
        )));
    }
    Ok(())
}

/// Final ring count: the hole count doubled until the outer spacing is at most `h_far`.
fn far_count(n: usize, outer: &OuterShape, h_far: f64) -> usize {
    let perimeter = match *outer {
        OuterShape::Square { half_side } => 8.0 * half_side,
        OuterShape::Disk { radius } => TAU * radius,
    };
    let mut c = n;
    while perimeter / c as f64 > h_far * (1.0 + 1e-12) {
        c *= 2;
    }
    c
}

/// Rings from a circle of radius `r` (already built) to the outer boundary.
fn circle_to_outer(
    b: &mut Builder,
    ring: Vec<usize>,
    r: f64,
    phase: f64,
    outer: &OuterShape,
) -> Result<Vec<usize>> {
    match *outer {
        OuterShape::Square { half_side } => {
            circle_to_square(b, [0.0, 0.0], &ring, r, phase, half_side, None, RegionTag::Fluid)
        }
        OuterShape::Disk { .. } => Ok(ring),
    }
}

fn core_radius(outer: &OuterShape) -> f64 {
    match *outer {
        OuterShape::Square { half_side } => 0.5 * half_side,
        OuterShape::Disk { radius } => radius,
    }
}

/// Mesh of `outer` minus the closed hole `eps * T`, graded towards the hole.
///
/// The hole boundary gets exactly `n_hole` edges for every `eps`; ring radii grow
/// by at most a factor 1.5 per ring; the outer boundary node spacing is at most `h_far`.
pub fn mesh_single_hole(spec: &DomainSpec, h_far: f64, n_hole: usize) -> Result<TriMesh> {
    spec.validate()?;
    check_counts(n_hole, &spec.outer)?;
    let l = spec.outer.size();
    if !(h_far > 0.0 && h_far <= l / 4.0 * (1.0 + 1e-12)) {
        return Err(LabError::InvalidSpec(format!("h_far = {h_far} must lie in (0, L/4]")));
    }
    let hole = spec.scaled_hole();
    let n_final = far_count(n_hole, &spec.outer, h_far);
    let r_c = core_radius(&spec.outer);
    let mut b = Builder::default();
    let (hole_ring, circle) =
        hole_to_circle(&mut b, [0.0, 0.0], &hole, n_hole, r_c, n_final, KAPPA, RegionTag::Fluid)?;
    let phase = hole.start_angle();
    let outer_ring = circle_to_outer(&mut b, circle, r_c, phase, &spec.outer)?;
    b.tag_ring(&hole_ring, EdgeTag::Hole(0));
    b.tag_ring(&outer_ring, EdgeTag::Outer);
    b.finish()
}

/// Mesh of `outer` with no hole, graded towards the origin from a filled core
/// disk of radius `r_core` resolved by `n_core` boundary segments.
pub fn mesh_no_hole(outer: &OuterShape, h_far: f64, n_core: usize, r_core: f64) -> Result<TriMesh> {
    check_counts(n_core, outer)?;
    let l = outer.size();
    if !(h_far > 0.0 && h_far <= l / 4.0 * (1.0 + 1e-12)) {
        return Err(LabError::InvalidSpec(format!("h_far = {h_far} must lie in (0, L/4]")));
    }
    let r_c = core_radius(outer);
    if !(r_core > 0.0 && r_core < r_c) {
        return Err(LabError::InvalidSpec(format!("core radius {r_core} must lie in (0, {r_c})")));
    }
    let core = HoleShape::disk(r_core);
    let n_final = far_count(n_core, outer, h_far);
    let mut b = Builder::default();
    let (core_ring, circle) =
        hole_to_circle(&mut b, [0.0, 0.0], &core, n_core, r_c, n_final, KAPPA, RegionTag::Fluid)?;
    fill_interior(&mut b, [0.0, 0.0], &core, &core_ring, RegionTag::Fluid)?;
    let outer_ring = circle_to_outer(&mut b, circle, r_c, 0.0, outer)?;
    b.tag_ring(&outer_ring, EdgeTag::Outer);
    b.finish()
}

/// Mesh of `B(center, radius)` minus the closed hole `hole + center`.
/// The hole carries tag `hole:0` and the circle `outer`.
pub fn mesh_annulus(center: Point, radius: f64, hole: &HoleShape, n_hole: usize) -> Result<TriMesh> {
    hole.validate()?;
    if n_hole < 8 {
        return Err(LabError::InvalidSpec(format!("n_hole = {n_hole} must be at least 8")));
    }
    if !hole.inside_disk(radius) {
        return Err(LabError::InvalidSpec(format!(
            "hole (circumradius {}) is not strictly inside the ball of radius {radius}",
            hole.circumradius()
        )));
    }
    let mut b = Builder::default();
    let (hole_ring, circle) =
        hole_to_circle(&mut b, center, hole, n_hole, radius, n_hole, KAPPA, RegionTag::Fluid)?;
    b.tag_ring(&hole_ring, EdgeTag::Hole(0));
    b.tag_ring(&circle, EdgeTag::Outer);
    b.finish()
}

/// Uniform mesh of the rectangle `[x0, x0 + w] x [y0, y0 + h]` with `nx * ny`
/// cells, each split along its rising diagonal. All boundary edges are `outer`.
pub fn mesh_rectangle(origin: Point, size: [f64; 2], nx: usize, ny: usize) -> Result<TriMesh> {
    if nx == 0 || ny == 0 || !(size[0] > 0.0 && size[1] > 0.0) {
        return Err(LabError::InvalidSpec("rectangle needs positive size and cell counts".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                origin[0] + size[0] * i as f64 / nx as f64,
                origin[1] + size[1] * j as f64 / ny as f64,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut tagged = Vec::new();
    let mut push = |a, b| {
        tagged.push(TaggedEdge {
            v: [a, b],
            tag: EdgeTag::Outer,
        })
    };
    for i in 0..nx {
        push(id(i, 0), id(i + 1, 0));
        push(id(i + 1, ny), id(i, ny));
    }
    for j in 0..ny {
        push(id(nx, j), id(nx, j + 1));
        push(id(0, j + 1), id(0, j));
    }
    let regions = vec![RegionTag::Fluid; triangles.len()];
    TriMesh::new(vertices, triangles, regions, tagged)
}

/// Multiplies every coordinate by `factor`.
pub fn rescale_mesh(mesh: &TriMesh, factor: f64) -> Result<TriMesh> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(LabError::Precondition(format!("rescale factor {factor} must be positive")));
    }
    Ok(mesh.rescaled(factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loops_of(m: &TriMesh, tag: EdgeTag) -> Vec<Vec<usize>> {
        m.tag_loops(tag).unwrap()
    }

    #[test]
    fn default_single_hole_mesh() {
        let spec = DomainSpec::default_with_epsilon(0.5);
        let m = mesh_single_hole(&spec, 0.5, 32).unwrap();
        assert!(m.min_angle_deg() >= 20.0, "min angle {}", m.min_angle_deg());
        let holes = loops_of(&m, EdgeTag::Hole(0));
        assert_eq!(holes.len(), 1);
        assert_eq!(holes[0].len(), 32);
        let expected = spec.fluid_area(32);
        assert!((m.total_area() - expected).abs() < 1e-12 * expected);
        // every topological boundary edge is tagged
        assert!(m.boundary_edges().iter().all(|(_, t)| t.is_some()));
    }

    #[test]
    fn vertex_count_grows_logarithmically() {
        let counts: Vec<usize> = [0.5, 1.0 / 16.0, 1.0 / 128.0]
            .iter()
            .map(|&e| {
                let m = mesh_single_hole(&DomainSpec::default_with_epsilon(e), 0.5, 32).unwrap();
                assert_eq!(loops_of(&m, EdgeTag::Hole(0))[0].len(), 32);
                assert!(m.min_angle_deg() >= 20.0);
                m.n_vertices()
            })
            .collect();
        // each factor 8 in 1/eps adds about ln 8 / ln 1.17 rings of 32 nodes
        let (d1, d2) = (counts[1] - counts[0], counts[2] - counts[1]);
        assert!(d2 < 32 * 15, "{counts:?}");
        assert!(d1.abs_diff(d2) <= 64, "{counts:?}");
    }

    #[test]
    fn outer_boundary_exact() {
        let spec = DomainSpec::default_with_epsilon(0.25);
        let m = mesh_single_hole(&spec, 0.25, 32).unwrap();
        for te in m.tagged_edges() {
            let p = m.vertices()[te.v[0]];
            match te.tag {
                EdgeTag::Outer => {
                    let d = (p[0].abs().max(p[1].abs()) - 2.0).abs();
                    assert!(d <= 2e-12, "{p:?}");
                }
                EdgeTag::Hole(_) => assert!((p[0].hypot(p[1]) - 1.0 / 16.0).abs() < 1e-12),
                _ => unreachable!(),
            }
        }
        assert!(m.min_angle_deg() >= 20.0);
    }

    #[test]
    fn square_and_rotated_holes() {
        for hole in [HoleShape::square(0.2), HoleShape::square(0.2).rotated(0.4), HoleShape::disk(0.25).rotated(1.0)] {
            let spec = DomainSpec::new(OuterShape::Square { half_side: 2.0 }, hole, 0.5);
            let m = mesh_single_hole(&spec, 0.5, 32).unwrap();
            assert!(m.min_angle_deg() >= 20.0, "{:?}: {}", spec.hole, m.min_angle_deg());
            let expected = spec.fluid_area(32);
            assert!((m.total_area() - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn disk_outer() {
        let spec = DomainSpec::new(OuterShape::Disk { radius: 2.0 }, HoleShape::disk(0.25), 0.5);
        let m = mesh_single_hole(&spec, 0.5, 32).unwrap();
        assert!(m.min_angle_deg() >= 20.0);
        let analytic = std::f64::consts::PI * (4.0 - 1.0 / 64.0);
        // polygonal outer circle with at least 32 segments
        assert!((m.total_area() - analytic).abs() / analytic < 0.01);
    }

    #[test]
    fn fine_far_field_doubles_counts() {
        let spec = DomainSpec::default_with_epsilon(0.125);
        let m = mesh_single_hole(&spec, 0.125, 32).unwrap();
        assert!(m.min_angle_deg() >= 20.0, "{}", m.min_angle_deg());
        assert_eq!(loops_of(&m, EdgeTag::Outer)[0].len(), 128);
    }

    #[test]
    fn grading_failure_and_invalid_spec() {
        let tight = DomainSpec::new(OuterShape::Square { half_side: 1.0 }, HoleShape::disk(0.499), 1.0);
        assert!(matches!(mesh_single_hole(&tight, 0.25, 32), Err(LabError::GradingFailure(_))));
        let big = DomainSpec::default_with_epsilon(3.0);
        assert!(matches!(mesh_single_hole(&big, 0.5, 32), Err(LabError::InvalidSpec(_))));
        let spec = DomainSpec::default_with_epsilon(0.5);
        assert!(mesh_single_hole(&spec, 0.5, 12).is_err());
        assert!(mesh_single_hole(&spec, 0.75, 32).is_err());
    }

    #[test]
    fn annulus_mesh() {
        let m = mesh_annulus([0.0, 0.0], 1.0, &HoleShape::disk(0.25), 32).unwrap();
        assert_eq!(loops_of(&m, EdgeTag::Hole(0)).len(), 1);
        assert_eq!(loops_of(&m, EdgeTag::Outer).len(), 1);
        assert!(m.min_angle_deg() >= 20.0);
        assert!(matches!(
            mesh_annulus([0.0, 0.0], 1.0, &HoleShape::disk(1.0), 32),
            Err(LabError::InvalidSpec(_))
        ));
        let small = mesh_annulus([0.3, -0.2], 1.0, &HoleShape::disk(1.0 / 64.0), 16).unwrap();
        assert!(small.min_angle_deg() >= 20.0);
    }

    #[test]
    fn no_hole_mesh_covers_domain() {
        let outer = OuterShape::Square { half_side: 2.0 };
        let m = mesh_no_hole(&outer, 0.5, 32, 0.02).unwrap();
        assert!((m.total_area() - 16.0).abs() < 1e-12);
        assert!(m.min_angle_deg() >= 20.0, "{}", m.min_angle_deg());
        assert!(m.locate([0.0, 0.0]).is_some());
        let big = mesh_no_hole(&OuterShape::Square { half_side: 64.0 }, 16.0, 32, 0.05).unwrap();
        assert!((big.total_area() - 128.0 * 128.0).abs() < 1e-9);
    }

    #[test]
    fn rectangle_mesh() {
        let m = mesh_rectangle([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        assert_eq!(m.n_triangles(), 32);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(loops_of(&m, EdgeTag::Outer)[0].len(), 16);
    }

    #[test]
    fn rescale_round_trip() {
        let m = mesh_single_hole(&DomainSpec::default_with_epsilon(0.3), 0.5, 32).unwrap();
        assert_eq!(rescale_mesh(&m, 1.0).unwrap(), m);
        let back = rescale_mesh(&rescale_mesh(&m, 2.0).unwrap(), 0.5).unwrap();
        assert_eq!(back, m);
        let r = rescale_mesh(&m, 1.0 / 0.3).unwrap();
        for t in 0..m.n_triangles() {
            let a = m.triangle_area(t) / (0.09);
            assert!((r.triangle_area(t) - a).abs() <= 1e-12 * a);
        }
        assert!(rescale_mesh(&m, 0.0).is_err());
    }
}
