//! Periodically perforated squares and their two-level meshes.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::geometry::HoleShape;
use crate::mesh::{EdgeTag, Point, RegionTag, TaggedEdge, TriMesh};
use crate::meshgen::{circle_to_square, fill_interior, hole_to_circle, Builder, KAPPA_CELL};

/// The square `D = origin + (0, side)^2` cut into `n x n` cells of width
/// `eps = side / n`, with a rotated copy of the model hole scaled by `eps^alpha`
/// at every cell centre, each inside a ball of radius `b1 * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerforatedDomain {
    pub origin: Point,
    pub side: f64,
    pub n: usize,
    pub alpha: f64,
    pub hole: HoleShape,
    pub b1: f64,
    pub delta: f64,
    pub rotations: Vec<f64>,
    pub centers: Vec<Point>,
    /// Cells whose closure lies in the closure of `D`.
    pub interior: Vec<usize>,
}

/// Default ball factor.
pub const DEFAULT_B1: f64 = 0.375;
/// Default cell inset.
pub const DEFAULT_DELTA: f64 = 0.125;

impl PerforatedDomain {
    /// Cell width.
    pub fn epsilon(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn n_cells(&self) -> usize {
        self.n * self.n
    }

    /// Hole scale `eps^alpha`.
    pub fn hole_scale(&self) -> f64 {
        self.epsilon().powf(self.alpha)
    }

    /// The hole of cell `k`, centred at the origin.
    pub fn cell_hole(&self, k: usize) -> HoleShape {
        self.hole.scaled(self.hole_scale()).rotated(self.rotations[k])
    }

    pub fn ball_radius(&self) -> f64 {
        self.b1 * self.epsilon()
    }

    /// Ratio of hole scale to ball radius in the unit-ball picture, `eps^(alpha-1)`.
    pub fn eta(&self) -> f64 {
        self.epsilon().powf(self.alpha - 1.0)
    }

    pub fn cell_of(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !(self.side > 0.0) {
            return Err(LabError::InvalidSpec("perforated domain needs n >= 1 and side > 0".into()));
        }
        if !(self.alpha >= 1.0) {
            return Err(LabError::InvalidSpec(format!("alpha = {} must be at least 1", self.alpha)));
        }
        self.hole.validate()?;
        if !(self.hole.circumradius() < 0.5) {
            return Err(LabError::InvalidSpec("model hole must lie inside B(0, 1/2)".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(LabError::InvalidSpec(format!("delta = {} must lie in (0, 1/2)", self.delta)));
        }
        if !(self.b1 > 0.0 && self.b1 + self.delta <= 0.5) {
            return Err(LabError::InvalidSpec(format!(
                "ball B(x_k, b1 eps) with b1 = {} is not inside the inset cell (delta = {}); cell 0 fails",
                self.b1, self.delta
            )));
        }
        let eps = self.epsilon();
        for k in 0..self.n_cells() {
            let rho = self.cell_hole(k).circumradius();
            if !(rho < self.b1 * eps) {
                return Err(LabError::InvalidSpec(format!(
                    "hole of cell {k} (circumradius {rho:.4e}) is not compactly inside its ball (radius {:.4e})",
                    self.b1 * eps
                )));
            }
        }
        Ok(())
    }
}

/// Builds the perforated square. Rotations are drawn uniformly from `[0, 2 pi)`
/// with `rotation_seed`, or are all zero when it is `None`.
pub fn build_perforated(
    side: f64,
    n: usize,
    alpha: f64,
    hole: HoleShape,
    b1: f64,
    rotation_seed: Option<u64>,
) -> Result<PerforatedDomain> {
    build_perforated_with(PerforatedParams {
        origin: [0.0, 0.0],
        side,
        n,
        alpha,
        hole,
        b1,
        delta: DEFAULT_DELTA,
        rotation_seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerforatedParams {
    pub origin: Point,
    pub side: f64,
    pub n: usize,
    pub alpha: f64,
    pub hole: HoleShape,
    pub b1: f64,
    pub delta: f64,
    pub rotation_seed: Option<u64>,
}

pub fn build_perforated_with(p: PerforatedParams) -> Result<PerforatedDomain> {
    let cells = p.n * p.n;
    let rotations = match p.rotation_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..cells).map(|_| rng.gen_range(0.0..TAU)).collect()
        }
        None => vec![0.0; cells],
    };
    let eps = p.side / p.n.max(1) as f64;
    let centers = (0..cells)
        .map(|k| {
            let (i, j) = (k % p.n, k / p.n);
            [
                p.origin[0] + (i as f64 + 0.5) * eps,
                p.origin[1] + (j as f64 + 0.5) * eps,
            ]
        })
        .collect();
    let pd = PerforatedDomain {
        origin: p.origin,
        side: p.side,
        n: p.n,
        alpha: p.alpha,
        hole: p.hole,
        b1: p.b1,
        delta: p.delta,
        rotations,
        centers,
        interior: (0..cells).collect(),
    };
    pd.validate()?;
    Ok(pd)
}

/// Lattice position of node `l` on the boundary of a cell with `m` lattice
/// steps per side, walking counter-clockwise from the right-side midpoint.
fn cell_walk(l: usize, m: usize) -> (usize, usize) {
    let h = m / 2;
    if l < h {
        (m, h + l)
    } else if l < h + m {
        (m - (l - h), m)
    } else if l < h + 2 * m {
        (0, m - (l - h - m))
    } else if l < h + 3 * m {
        (l - h - 2 * m, 0)
    } else {
        (m, l - h - 3 * m)
    }
}

/// Two-level mesh of the whole square `D`: hole interiors, ball annuli and the
/// fluid region between balls and cell boundaries are all meshed, with hole
/// boundaries tagged `hole:k`, ball circles `ball:k` and `∂D` tagged `outer`.
///
/// Each hole boundary has `n_hole` segments; the cell boundary node spacing is
/// at most `h_far` (node counts double inside the annuli when needed).
pub fn mesh_perforated(pd: &PerforatedDomain, n_hole: usize, h_far: f64) -> Result<TriMesh> {
    pd.validate()?;
    if n_hole < 16 || n_hole % 8 != 0 {
        return Err(LabError::InvalidSpec(format!(
            "n_hole = {n_hole} must be a multiple of 8 and at least 16"
        )));
    }
    if !(h_far > 0.0) {
        return Err(LabError::InvalidSpec(format!("h_far = {h_far} must be positive")));
    }
    let eps = pd.epsilon();
    let mut n_cell = n_hole;
    while 4.0 * eps / n_cell as f64 > h_far * (1.0 + 1e-12) {
        n_cell *= 2;
    }
    let m = n_cell / 4;
    let total = pd.n * m;
    let lattice_point = |gi: usize, gj: usize| -> Point {
        [
            pd.origin[0] + pd.side * gi as f64 / total as f64,
            pd.origin[1] + pd.side * gj as f64 / total as f64,
        ]
    };
    let mut b = Builder::default();
    let mut lattice: HashMap<(usize, usize), usize> = HashMap::new();
    let mut outer_edges = Vec::new();
    let r_ball = pd.ball_radius();
    for k in 0..pd.n_cells() {
        let (ci, cj) = pd.cell_of(k);
        let center = pd.centers[k];
        let hole = pd.cell_hole(k);
        let (hole_ring, ball_ring) = hole_to_circle(
            &mut b,
            center,
            &hole,
            n_hole,
            r_ball,
            n_cell,
            KAPPA_CELL,
            RegionTag::BallAnnulus(k),
        )
        .map_err(|e| e.in_cell(k))?;
        fill_interior(&mut b, center, &hole, &hole_ring, RegionTag::HoleInterior(k))
            .map_err(|e| e.in_cell(k))?;
        let square: Vec<usize> = (0..n_cell)
            .map(|l| {
                let (a, c) = cell_walk(l, m);
                let key = (ci * m + a, cj * m + c);
                *lattice
                    .entry(key)
                    .or_insert_with(|| b.add_point(lattice_point(key.0, key.1)))
            })
            .collect();
        let phase = hole.start_angle();
        circle_to_square(
            &mut b,
            center,
            &ball_ring,
            r_ball,
            phase,
            0.5 * eps,
            Some(&square),
            RegionTag::Fluid,
        )
        .map_err(|e| e.in_cell(k))?;
        b.tag_ring(&hole_ring, EdgeTag::Hole(k));
        b.tag_ring(&ball_ring, EdgeTag::Ball(k));
        for l in 0..n_cell {
            let p = cell_walk(l, m);
            let q = cell_walk((l + 1) % n_cell, m);
            let (p, q) = ((ci * m + p.0, cj * m + p.1), (ci * m + q.0, cj * m + q.1));
            let on_side = (p.0 == 0 && q.0 == 0)
                || (p.0 == total && q.0 == total)
                || (p.1 == 0 && q.1 == 0)
                || (p.1 == total && q.1 == total);
            if on_side {
                outer_edges.push(TaggedEdge {
                    v: [lattice[&p], lattice[&q]],
                    tag: EdgeTag::Outer,
                });
            }
        }
    }
    b.tagged.extend(outer_edges);
    b.finish()
}
