//! The four jump identities for random P0 densities and P1 traces, and the
//! far-field fit of the same potentials.

use layerpot::boundary_ops::{DensityVector, TraceVector};
use layerpot::geometry::{graded_mesh, PolygonalBoundary};
use layerpot::potentials::{far_field, jump_report, JumpTrial, LayerSource};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> layerpot::Result<()> {
    let mesh = graded_mesh(&PolygonalBoundary::l_shape(), 16, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = DensityVector::new(DVector::from_fn(mesh.num_panels(), |_, _| rng.random_range(-1.0..1.0)));
    let p = TraceVector::new(DVector::from_fn(mesh.num_nodes(), |_, _| rng.random_range(-1.0..1.0)));

    let rep = jump_report(&mesh, &[JumpTrial { q: q.clone(), p: p.clone(), q_exact: None, p_exact: None }])?;
    let t = &rep.trials[0];
    println!("single layer: Dirichlet jump {:.2e}, Neumann jump {:.2e}", t.single_dirichlet, t.single_neumann);
    println!("double layer: Dirichlet jump {:.2e}, Neumann jump {:.2e}", t.double_dirichlet, t.double_neumann);

    let ring = 5.0 * mesh.shape().diameter() + mesh.shape().radius_about_origin();
    for (name, src) in [("single", LayerSource::single(q)), ("double", LayerSource::double(p))] {
        let f = far_field(&mesh, &src, ring)?;
        let show = |c: [f64; 4]| c.map(|v| format!("{v:+.6e}")).join(" ");
        println!("{name}: fitted    {}\n{name}: moments   {}", show(f.fitted), show(f.predicted));
    }
    Ok(())
}
