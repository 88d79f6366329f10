//! Spectrum of the Dirichlet trace restricted to single-layer fields.
//!
//! For a field `u = 𝒮q` the ratio `‖γ_d u‖_{H^{-1/2}} / ‖u‖_{L²(Ω⁻)}` is the
//! Rayleigh quotient of the pencil `(A, G)` with
//!
//! * `A = V M₀⁻¹ V M₀⁻¹ V`, the energy of the L²-projected trace `M₀⁻¹Vq`
//!   measured through `V` (positive definite when `c_Γ > 0`),
//! * `G`, the interior L² Gram matrix of the panel fields.
//!
//! Small values mean L² harmonic fields with almost no trace. Values are
//! normalized by the quotient of the equilibrium density so that meshes of
//! different size are comparable.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::boundary_ops::{assemble_v, p0_mass, VSolver, CAPACITY_MARGIN};
use crate::error::{Error, Result};
use crate::geometry::{apply_similarity, graded_mesh, PolygonalBoundary, SimilarityTransform, Vec2};
use crate::l2_harmonic::basis::{build_basis, gram, BasisOptions};
use crate::l2_harmonic::domain::triangulate;
use crate::linalg::symmetrize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSpectrum {
    pub panels: usize,
    pub panels_per_edge: usize,
    pub quadrature_nodes: usize,
    /// Normalized singular values, descending.
    pub singular_values: Vec<f64>,
    pub smallest: f64,
    /// Quotient of the equilibrium density used for normalization.
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSvdReport {
    pub spectra: Vec<KernelSpectrum>,
    /// Smallest value at the finest level over the coarsest.
    pub smallest_ratio: f64,
    /// Mean `log₂` decrease of the smallest value per refinement.
    pub decay_rate: f64,
    pub reentrant: bool,
    /// Scale applied to the polygon before meshing.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSvdOptions {
    pub panels_per_edge: [usize; 3],
    pub beta: f64,
    /// Quadrature size relative to the polygon diameter.
    pub relative_h: f64,
    pub corner_levels: usize,
    /// Polygon scale; below 1 pushes `c_Γ` above the margin.
    pub scale: f64,
}

impl Default for KernelSvdOptions {
    fn default() -> Self {
        Self {
            panels_per_edge: [4, 16, 64],
            beta: 3.0,
            relative_h: 0.04,
            corner_levels: 12,
            scale: 0.25,
        }
    }
}

/// Normalized spectrum for one mesh of `polygon`.
pub fn kernel_spectrum(polygon: &PolygonalBoundary, n: usize, opts: &KernelSvdOptions) -> Result<KernelSpectrum> {
    let mesh = graded_mesh(polygon, n, opts.beta)?;
    let v = assemble_v(&mesh);
    let vs = VSolver::new(&v, &mesh, CAPACITY_MARGIN)?;
    let quad = triangulate(polygon, opts.relative_h * polygon.diameter(), opts.corner_levels)?;
    let basis = build_basis(&mesh, &quad, BasisOptions::default())?;
    let g = gram(&basis, &quad)?;
    let vm = &v.matrix;
    let minv = p0_mass(&mesh).map(|l| 1.0 / l);
    let scaled = DMatrix::from_fn(vm.nrows(), vm.ncols(), |i, j| minv[i] * vm[(i, j)]);
    let mut a = vm * &scaled * &scaled;
    symmetrize(&mut a);
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolveFailure("trace energy matrix not positive definite".into()))?;
    let l = chol.l();
    // L⁻¹ G L⁻ᵀ by two triangular solves
    let x = l
        .solve_lower_triangular(&g)
        .ok_or_else(|| Error::SolveFailure("triangular solve failed".into()))?;
    let mut s = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::SolveFailure("triangular solve failed".into()))?;
    symmetrize(&mut s);
    let mu = s.symmetric_eigen().eigenvalues;
    let e = vs.e_raw();
    let norm = ((e.transpose() * &a * e)[0] / (e.transpose() * &g * e)[0]).sqrt();
    let mut sv: Vec<f64> = mu.iter().map(|m| if *m > 0.0 { 1.0 / (m.sqrt() * norm) } else { f64::INFINITY }).collect();
    // descending, with non-finite values (null directions of G) first
    sv.sort_by(|a, b| b.total_cmp(a));
    let smallest = *sv.last().unwrap_or(&0.0);
    Ok(KernelSpectrum {
        panels: mesh.num_panels(),
        panels_per_edge: n,
        quadrature_nodes: quad.len(),
        singular_values: sv,
        smallest,
        normalization: norm,
    })
}

/// Spectra at three refinements and the trend of the smallest value.
pub fn trace_kernel_svd(polygon: &PolygonalBoundary, opts: &KernelSvdOptions) -> Result<KernelSvdReport> {
    let t = SimilarityTransform::new(opts.scale, Vec2::zeros())?;
    let poly = apply_similarity(polygon, &t);
    let spectra: Vec<KernelSpectrum> = opts
        .panels_per_edge
        .iter()
        .map(|&n| kernel_spectrum(&poly, n, opts))
        .collect::<Result<_>>()?;
    let first = spectra[0].smallest;
    let last = spectra[spectra.len() - 1].smallest;
    let ratio = last / first;
    let steps: f64 = opts
        .panels_per_edge
        .windows(2)
        .map(|w| (w[1] as f64 / w[0] as f64).log2())
        .sum();
    Ok(KernelSvdReport {
        smallest_ratio: ratio,
        decay_rate: -ratio.log2() / steps.max(1.0),
        reentrant: !poly.reentrant_corners().is_empty(),
        scale: opts.scale,
        spectra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_sorted_and_nonnegative() {
        let poly = apply_similarity(&PolygonalBoundary::unit_square(), &SimilarityTransform::new(0.25, Vec2::zeros()).unwrap());
        let opts = KernelSvdOptions { relative_h: 0.1, corner_levels: 0, ..Default::default() };
        let s = kernel_spectrum(&poly, 3, &opts).unwrap();
        assert_eq!(s.singular_values.len(), 12);
        assert!(s.singular_values.iter().all(|v| *v >= 0.0));
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn unit_l_shape_violates_capacity() {
        let opts = KernelSvdOptions { relative_h: 0.2, corner_levels: 0, ..Default::default() };
        let r = kernel_spectrum(&PolygonalBoundary::l_shape(), 2, &opts);
        assert!(matches!(r, Err(Error::CapacityViolation { .. })));
    }
}
