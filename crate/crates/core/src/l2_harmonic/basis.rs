//! Harmonic basis fields sampled at domain quadrature nodes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_ops::panel_single_layer;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Vec2};
use crate::l2_harmonic::domain::DomainQuadrature;
use crate::linalg::symmetrize;
use crate::potentials::mean_value_defect;
use crate::singular_solutions::{CornerSingularFunction, CornerVariant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BasisElement {
    /// `𝒮` of the indicator density of one panel.
    SingleLayerPanel(usize),
    CornerSingular(CornerSingularFunction),
    /// The constant 1 (`−𝒟1` inside).
    Constant,
}

impl BasisElement {
    pub fn eval(&self, mesh: &BoundaryMesh, x: &Vec2) -> Result<f64> {
        match self {
            BasisElement::SingleLayerPanel(k) => Ok(panel_single_layer(mesh.panel(*k), x)?.constant),
            BasisElement::CornerSingular(u) => u.value(x),
            BasisElement::Constant => Ok(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BasisOptions {
    /// Add one sine-variant corner function per reentrant corner.
    pub corner_singular: bool,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicBasis {
    pub elements: Vec<BasisElement>,
    /// Values at the quadrature nodes, one column per element.
    pub values: DMatrix<f64>,
    pub panels: usize,
    pub grading: f64,
}

pub fn build_basis(mesh: &BoundaryMesh, quad: &DomainQuadrature, opts: BasisOptions) -> Result<HarmonicBasis> {
    let mut elements: Vec<BasisElement> = (0..mesh.num_panels()).map(BasisElement::SingleLayerPanel).collect();
    if opts.corner_singular {
        if let Some(poly) = mesh.polygon() {
            for j in poly.reentrant_corners() {
                elements.push(BasisElement::CornerSingular(CornerSingularFunction::at_vertex(
                    poly,
                    j,
                    CornerVariant::Sine,
                )?));
            }
        }
    }
    if opts.constant {
        elements.push(BasisElement::Constant);
    }
    let cols: Vec<Vec<f64>> = elements
        .par_iter()
        .map(|e| quad.nodes.iter().map(|x| e.eval(mesh, x)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let values = DMatrix::from_fn(quad.len(), elements.len(), |i, j| cols[j][i]);
    Ok(HarmonicBasis {
        elements,
        values,
        panels: mesh.num_panels(),
        grading: mesh.grading(),
    })
}

impl HarmonicBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Values at the nodes of `Σ c_j φ_j`.
    pub fn field(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.values * coeffs
    }

    /// Largest mean-value defect of each element over the probe discs,
    /// relative to the element's size on the disc.
    pub fn mean_value_defects(&self, mesh: &BoundaryMesh) -> Result<Vec<f64>> {
        let discs = probe_discs(mesh, 5);
        self.elements
            .par_iter()
            .map(|e| {
                let mut worst = 0.0f64;
                for (c, r) in &discs {
                    let f = |x: &Vec2| e.eval(mesh, x);
                    let scale = f(c)?.abs().max(1e-300);
                    worst = worst.max(mean_value_defect(&f, c, *r, 64)? / scale.max(1e-3));
                }
                Ok(worst)
            })
            .collect()
    }
}

/// Discs inside the domain, away from the boundary and from each other.
pub fn probe_discs(mesh: &BoundaryMesh, count: usize) -> Vec<(Vec2, f64)> {
    let shape = mesh.shape();
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for x in mesh.nodes() {
        lo = lo.inf(x);
        hi = hi.sup(x);
    }
    let mut cand: Vec<(Vec2, f64)> = Vec::new();
    let m = 9;
    for i in 0..m {
        for j in 0..m {
            let x = Vec2::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / m as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / m as f64,
            );
            if shape.contains(&x) {
                cand.push((x, shape.distance_to_boundary(&x)));
            }
        }
    }
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.x.total_cmp(&b.0.x)).then(a.0.y.total_cmp(&b.0.y)));
    let mut out: Vec<(Vec2, f64)> = Vec::new();
    for (x, d) in cand {
        let r = 0.5 * d;
        if out.iter().all(|(y, s)| (x - y).norm() > r + s) {
            out.push((x, r));
        }
        if out.len() == count {
            break;
        }
    }
    out
}

/// `M_ij = Σ_k w_k φ_i(x_k) φ_j(x_k)`.
pub fn gram(basis: &HarmonicBasis, quad: &DomainQuadrature) -> Result<DMatrix<f64>> {
    if basis.values.nrows() != quad.len() {
        return Err(Error::InvalidInput("basis was sampled on a different quadrature".into()));
    }
    let sw = DVector::from_iterator(quad.len(), quad.weights.iter().map(|w| w.sqrt()));
    let mut a = basis.values.clone();
    for mut col in a.column_iter_mut() {
        col.component_mul_assign(&sw);
    }
    let mut m = a.transpose() * &a;
    symmetrize(&mut m);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{graded_mesh, PolygonalBoundary};
    use crate::l2_harmonic::domain::triangulate;
    use crate::linalg::symmetric_eigenvalues;

    #[test]
    fn square_basis_counts_and_harmonicity() {
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 4, 2.0).unwrap();
        let quad = triangulate(&PolygonalBoundary::unit_square(), 0.2, 0).unwrap();
        let b = build_basis(&mesh, &quad, BasisOptions::default()).unwrap();
        assert_eq!(b.len(), 16);
        for d in b.mean_value_defects(&mesh).unwrap() {
            assert!(d < 1e-8, "{d}");
        }
    }

    #[test]
    fn l_shape_counts_corner_element() {
        let poly = PolygonalBoundary::l_shape();
        let n = 3;
        let mesh = graded_mesh(&poly, n, 2.0).unwrap();
        let quad = triangulate(&poly, 0.5, 2).unwrap();
        let opts = BasisOptions { corner_singular: true, constant: false };
        let b = build_basis(&mesh, &quad, opts).unwrap();
        assert_eq!(b.len(), 6 * n + 1);
        assert!(b.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn linearity_and_gram() {
        let poly = PolygonalBoundary::unit_square();
        let mesh = graded_mesh(&poly, 4, 2.0).unwrap();
        let quad = triangulate(&poly, 0.25, 0).unwrap();
        let b = build_basis(&mesh, &quad, BasisOptions::default()).unwrap();
        let mut c1 = DVector::zeros(b.len());
        let mut c2 = DVector::zeros(b.len());
        c1[2] = 1.0;
        c2[5] = 1.0;
        let sum = b.field(&(&c1 + &c2));
        let parts = b.field(&c1) + b.field(&c2);
        assert!((sum - parts).amax() < 1e-13);
        let m = gram(&b, &quad).unwrap();
        assert!((&m - m.transpose()).amax() <= 1e-14 * m.amax());
        let ev = symmetric_eigenvalues(&m);
        assert!(ev[0] >= -1e-12 * m.norm());
    }

    #[test]
    fn constant_gram_is_area() {
        let poly = PolygonalBoundary::l_shape();
        let mesh = graded_mesh(&poly, 2, 2.0).unwrap();
        let quad = triangulate(&poly, 0.5, 3).unwrap();
        let b = HarmonicBasis {
            elements: vec![BasisElement::Constant],
            values: DMatrix::from_element(quad.len(), 1, 1.0),
            panels: mesh.num_panels(),
            grading: 2.0,
        };
        let m = gram(&b, &quad).unwrap();
        assert!((m[(0, 0)] - 3.0).abs() < 1e-10);
    }
}
