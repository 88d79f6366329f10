//! Interior Dirichlet and exterior Neumann problems on the unit square with
//! known harmonic solutions.

use std::sync::Arc;

use layerpot::geometry::{graded_mesh, PolygonalBoundary, Vec2};
use layerpot::solvers::{BieSystem, DirichletData, NeumannData};

fn main() -> layerpot::Result<()> {
    let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 32, 2.0)?;
    let sys = BieSystem::assemble(mesh.clone());

    // u = Re z² inside
    let u = |x: &Vec2| x.x * x.x - x.y * x.y;
    let sol = sys.interior_dirichlet(&DirichletData::Function(Arc::new(u)))?;
    for x in [Vec2::new(0.5, 0.5), Vec2::new(0.2, 0.7), Vec2::new(0.9, 0.1)] {
        println!("inside  ({:.1}, {:.1}): {:+.9} exact {:+.9}", x.x, x.y, sol.value(&mesh, &x)?, u(&x));
    }

    // a dipole at c solves the exterior problem; γ_n⁺u = −∇u·n⁻
    let c = Vec2::new(0.4, 0.55);
    let dip = move |x: &Vec2| (x - c).x / (x - c).norm_squared();
    let grad = move |x: &Vec2| {
        let d = x - c;
        let r2 = d.norm_squared();
        Vec2::new(1.0 / r2 - 2.0 * d.x * d.x / (r2 * r2), -2.0 * d.x * d.y / (r2 * r2))
    };
    let sol = sys.exterior_neumann(&NeumannData::Function(Arc::new(move |x: &Vec2, n: &Vec2| -grad(x).dot(n))))?;
    for x in [Vec2::new(2.0, 0.5), Vec2::new(-1.0, -1.0)] {
        println!("outside ({:.1}, {:.1}): {:+.9} exact {:+.9}", x.x, x.y, sol.value(&mesh, &x)?, dip(&x));
    }
    println!("far field: log coefficient {:.2e}, dipole {:?}", sol.far_field.log_coefficient, sol.far_field.dipole);
    Ok(())
}
