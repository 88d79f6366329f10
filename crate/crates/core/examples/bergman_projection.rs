//! Discrete harmonic Bergman projection on the unit disk: Π|z|² is the
//! constant 1/2, harmonic data is reproduced, Laplacians of bumps vanish.

use layerpot::cli::commands::bump_laplacian;
use layerpot::geometry::{BoundaryMesh, Vec2};
use layerpot::l2_harmonic::{build_basis, BasisOptions, BergmanProjector, DomainQuadrature};

fn main() -> layerpot::Result<()> {
    let mesh = BoundaryMesh::circle(Vec2::zeros(), 1.0, 64)?;
    let quad = DomainQuadrature::disk(Vec2::zeros(), 1.0, 128, 128)?;
    let basis = build_basis(&mesh, &quad, BasisOptions { corner_singular: false, constant: true })?;
    let proj = BergmanProjector::new(&basis, &quad)?;
    println!("basis {} elements, rank {}", basis.len(), proj.rank());

    let c = Vec2::new(0.1, -0.2);
    let data: [(&str, Box<dyn Fn(&Vec2) -> f64>); 3] = [
        ("|z|^2", Box::new(|x: &Vec2| x.norm_squared())),
        ("Re z^3", Box::new(|x: &Vec2| x.x.powi(3) - 3.0 * x.x * x.y * x.y)),
        ("lap bump", Box::new(move |x: &Vec2| bump_laplacian(x, &c, 0.3))),
    ];
    for (name, f) in &data {
        let vals: Vec<f64> = quad.nodes.iter().map(|x| f(x)).collect();
        let r = proj.project(&vals)?;
        let norm = |v: &[f64]| proj.inner(v, v).sqrt();
        println!("{name:9} |f| {:.4e}  |Pf| {:.4e}  residual {:.3e}", norm(&vals), norm(&r.projected), r.residual);
    }
    Ok(())
}
