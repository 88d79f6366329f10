//! An L² harmonic function with zero Dirichlet trace on the L-shape, built
//! from the reentrant-corner singularity, and its representation by
//! single-layer fields with and without corner elements.

use layerpot::geometry::{graded_mesh, PolygonalBoundary, Vec2};
use layerpot::l2_harmonic::domain::triangulate;
use layerpot::l2_harmonic::{build_basis, represent, BasisOptions};
use layerpot::singular_solutions::{build_zero_dirichlet_function, ZeroTraceOptions};

fn main() -> layerpot::Result<()> {
    let poly = PolygonalBoundary::l_shape();
    let prog = build_zero_dirichlet_function(&poly, &ZeroTraceOptions::default())?;
    let c = &prog.certificate;
    for l in &c.levels {
        println!("{:3} per edge: trace ratio {:.3e}, L2 norm {:.6}", l.panels_per_edge, l.trace_ratio, l.l2_norm);
    }
    println!("energy exponent {:.4} (expected {:.4}), passed {}", c.energy_exponent, c.expected_exponent, c.passed);

    let mesh = graded_mesh(&poly, 16, 2.0)?;
    let quad = triangulate(&poly, 0.04 * poly.diameter(), 12)?;
    let u = |x: &Vec2| prog.field.value(x);
    for corner_singular in [true, false] {
        let basis = build_basis(&mesh, &quad, BasisOptions { corner_singular, constant: true })?;
        let r = represent(&u, &mesh, &basis, &quad)?;
        println!("corner elements {corner_singular}: residual {:.3e} (rank {})", r.residual, r.rank);
    }
    Ok(())
}
