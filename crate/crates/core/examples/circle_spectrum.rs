//! Rayleigh quotients of the assembled V and W on Fourier modes of a circle.

use layerpot::boundary_ops::{assemble_v, assemble_w, p0_mass, p1_mass_vector};
use layerpot::geometry::{BoundaryMesh, Vec2};
use nalgebra::DVector;

fn main() -> layerpot::Result<()> {
    let r = 0.5;
    let mesh = BoundaryMesh::circle(Vec2::zeros(), r, 128)?;
    let v = assemble_v(&mesh);
    let w = assemble_w(&mesh);
    let m0 = p0_mass(&mesh);
    let m1 = p1_mass_vector(&mesh);
    println!(" k   V quotient     R/(2k)      W quotient");
    for k in 1..=6 {
        let kf = k as f64;
        let c0 = DVector::from_iterator(mesh.num_panels(), mesh.panels().iter().map(|p| {
            let m = p.midpoint();
            (kf * m.y.atan2(m.x)).cos()
        }));
        let c1 = DVector::from_iterator(mesh.num_nodes(), mesh.nodes().iter().map(|x| (kf * x.y.atan2(x.x)).cos()));
        let lv = c0.dot(&(&v.matrix * &c0)) / c0.component_mul(&m0).dot(&c0);
        let lw = c1.dot(&(&w.matrix * &c1)) / c1.component_mul(&m1).dot(&c1);
        println!("{k:2}   {lv:.8}   {:.8}   {lw:.6}", r / (2.0 * kf));
    }
    let ones = DVector::from_element(mesh.num_nodes(), 1.0);
    println!("|W 1| = {:.2e}", (&w.matrix * ones).amax());
    Ok(())
}
