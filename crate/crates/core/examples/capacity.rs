//! Equilibrium density and logarithmic capacity; for a boundary whose Robin
//! constant is too small, the rescaling that fixes it.

use layerpot::boundary_ops::{assemble_v, CAPACITY_MARGIN};
use layerpot::geometry::{graded_mesh, BoundaryMesh, PolygonalBoundary, Vec2};
use layerpot::special_densities::{equilibrium_density, recommend_rescale};

fn main() -> layerpot::Result<()> {
    let meshes = [
        ("circle r=0.5", BoundaryMesh::circle(Vec2::zeros(), 0.5, 128)?),
        ("unit square", graded_mesh(&PolygonalBoundary::unit_square(), 32, 2.0)?),
        ("L-shape", graded_mesh(&PolygonalBoundary::l_shape(), 32, 2.0)?),
    ];
    for (name, mesh) in &meshes {
        let eq = equilibrium_density(&assemble_v(mesh), mesh)?;
        print!("{name:13} c = {:+.6}  capacity = {:.8}", eq.c_gamma, eq.capacity);
        if eq.c_gamma <= CAPACITY_MARGIN {
            let t = recommend_rescale(&eq, 2.0 * CAPACITY_MARGIN)?;
            print!("  -> rescale by {:.4}", t.scale);
        }
        println!();
    }
    Ok(())
}
