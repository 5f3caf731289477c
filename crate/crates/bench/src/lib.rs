//! Fixtures shared by the benchmarks in `benches/`.

use std::sync::Arc;

use corshape::correlation::{Axis, ClosedFormKernel, DiscreteCorrelation, Profile};
use corshape::{
    assemble_correlation_matrix, generate_structured_mesh, BoundaryTag, CorrelationKernel,
    CorrelationRegion, LevelSet, Mesh, Rect, Region,
};

/// Unit square with its whole boundary tagged Dirichlet.
pub fn clamped_square(n: usize) -> Arc<Mesh> {
    let unit = Rect::new(0.0, 0.0, 1.0, 1.0);
    let mesh = generate_structured_mesh(n, n, unit)
        .and_then(|m| {
            m.tag_boundary(
                &Region::Rect {
                    rect: unit,
                    tol: 1e-9,
                },
                BoundaryTag::Dirichlet,
            )
        })
        .expect("valid mesh");
    Arc::new(mesh)
}

/// Circle of radius `r` centred in the unit square, material inside.
pub fn disc(mesh: &Arc<Mesh>, r: f64) -> LevelSet {
    LevelSet::from_fn(mesh.clone(), |p| (p[0] - 0.5).hypot(p[1] - 0.5) - r).expect("finite")
}

/// `exp(−|x₁ − y₁| / 0.1)` on the `nodes` nodes of a top edge.
pub fn exponential_kernel(nodes: usize) -> DiscreteCorrelation {
    let top = Rect::new(0.0, 0.05, 1.0, 0.05);
    let mesh = generate_structured_mesh(nodes - 1, 2, Rect::new(0.0, 0.0, 1.0, 0.05))
        .and_then(|m| {
            m.tag_boundary(
                &Region::Rect {
                    rect: top,
                    tol: 1e-9,
                },
                BoundaryTag::Neumann,
            )
        })
        .expect("valid mesh");
    let kernel = CorrelationKernel::ClosedForm(ClosedFormKernel {
        component: None,
        amplitude: 1.0,
        profile: Profile::Unit,
        correlation_length: 0.1,
        profile_axis: Axis::X,
        profile_range: [0.0, 1.0],
        decay_axis: Axis::X,
    });
    assemble_correlation_matrix(
        &kernel,
        &mesh,
        CorrelationRegion::Boundary(BoundaryTag::Neumann),
    )
    .expect("valid kernel")
}
