//! Graded panels on the L-shape: lengths shrink like (k/n)^β towards each corner.

use layerpot::geometry::{graded_mesh, PolygonalBoundary};

fn main() -> layerpot::Result<()> {
    let poly = PolygonalBoundary::l_shape();
    println!("vertices {}, reentrant {:?}, perimeter {}", poly.len(), poly.reentrant_corners(), poly.perimeter());
    for beta in [1.0, 2.0, 3.0] {
        let mesh = graded_mesh(&poly, 8, beta)?;
        let lens: Vec<f64> = mesh.panels().iter().map(|p| p.length).collect();
        let min = lens.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = lens.iter().cloned().fold(0.0, f64::max);
        println!("beta {beta}: {} panels, shortest {min:.3e}, longest {max:.3e}", mesh.num_panels());
    }
    let mesh = graded_mesh(&poly, 4, 2.0)?;
    mesh.write_csv(std::io::stdout().lock())
}
