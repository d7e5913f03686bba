//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use holestokes::experiments::default_source;
use holestokes::meshgen::mesh_single_hole;
use holestokes::{DomainSpec, HoleShape, OuterShape, TensorField, TriMesh};

/// Single-hole mesh of `[-2, 2]^2` minus a disk of radius `eps / 4`.
pub fn hole_mesh(eps: f64, n_hole: usize) -> Arc<TriMesh> {
    let spec = DomainSpec::new(OuterShape::Square { half_side: 2.0 }, HoleShape::disk(0.25), eps);
    Arc::new(mesh_single_hole(&spec, 0.25, n_hole).expect("mesh"))
}

pub fn source() -> TensorField {
    default_source()
}
