//! Smallest normalized singular value of the trace map on single-layer
//! fields: it decays under refinement on the L-shape and stays put on the square.

use layerpot::geometry::PolygonalBoundary;
use layerpot::l2_harmonic::kernel_svd::KernelSvdOptions;
use layerpot::l2_harmonic::trace_kernel_svd;

fn main() -> layerpot::Result<()> {
    let opts = KernelSvdOptions::default();
    for (name, poly) in [("square", PolygonalBoundary::unit_square()), ("L-shape", PolygonalBoundary::l_shape())] {
        let rep = trace_kernel_svd(&poly, &opts)?;
        let smallest: Vec<String> = rep.spectra.iter().map(|s| format!("{}/edge {:.4e}", s.panels_per_edge, s.smallest)).collect();
        println!("{name:8} {}  ratio {:.3}", smallest.join(", "), rep.smallest_ratio);
    }
    Ok(())
}
