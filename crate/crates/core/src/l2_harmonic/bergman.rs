//! Discrete harmonic Bergman projection onto the span of a sampled basis.
//!
//! With `D = diag(√w)` and `A = DΦ`, the Gram matrix is `M = AᵀA`. We work with
//! a thin SVD of `A` instead of factoring `M`: singular values `s` of `A` are
//! `√λ(M)`, so dropping `s < √τ·s_max` is the same truncation as dropping
//! Gram eigenvalues below `τ·λ_max`, and `U_r U_rᵀ` is an exactly orthogonal
//! projector in the weighted node space.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Vec2};
use crate::l2_harmonic::basis::{probe_discs, HarmonicBasis};
use crate::l2_harmonic::domain::DomainQuadrature;
use crate::linalg::thin_svd;
use crate::potentials::mean_value_defect;

/// Relative truncation on Gram eigenvalues.
pub const GRAM_TRUNCATION: f64 = 1e-10;
/// Minimum number of retained directions.
pub const MIN_RANK: usize = 3;
/// Relative mean-value defect above which a target is rejected as not harmonic.
pub const HARMONIC_PROBE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BergmanResult {
    pub coefficients: Vec<f64>,
    /// `‖f − Πf‖ / ‖f‖` in the discrete L² norm (0 for `f = 0`).
    pub residual: f64,
    pub rank: usize,
    /// Gram eigenvalues, descending.
    pub gram_eigenvalues: Vec<f64>,
    /// `λ_max / λ_min` over all eigenvalues (infinite if singular).
    pub gram_condition: f64,
    /// `λ_max / λ_min` over the retained ones.
    pub truncated_condition: f64,
    /// `Πf` at the quadrature nodes.
    #[serde(skip)]
    pub projected: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BergmanProjector {
    sqrt_w: DVector<f64>,
    /// Retained left singular vectors of `A` (nodes × rank).
    u: DMatrix<f64>,
    /// `V_r S_r⁻¹` (elements × rank).
    vs: DMatrix<f64>,
    phi: DMatrix<f64>,
    gram_eigenvalues: Vec<f64>,
}

impl BergmanProjector {
    pub fn new(basis: &HarmonicBasis, quad: &DomainQuadrature) -> Result<Self> {
        Self::with_truncation(basis, quad, GRAM_TRUNCATION)
    }

    pub fn with_truncation(basis: &HarmonicBasis, quad: &DomainQuadrature, tau: f64) -> Result<Self> {
        let n = quad.len();
        if basis.values.nrows() != n {
            return Err(Error::InvalidInput("basis was sampled on a different quadrature".into()));
        }
        let sqrt_w = DVector::from_iterator(n, quad.weights.iter().map(|w| w.sqrt()));
        let mut a = basis.values.clone();
        for mut col in a.column_iter_mut() {
            col.component_mul_assign(&sqrt_w);
        }
        let svd = thin_svd(&a)?;
        let s = &svd.s;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let smax = order.first().map(|&i| s[i]).unwrap_or(0.0);
        let cut = tau.sqrt() * smax;
        let keep: Vec<usize> = order.iter().copied().filter(|&i| smax > 0.0 && s[i] >= cut).collect();
        if keep.len() < MIN_RANK {
            return Err(Error::RankCollapse(keep.len()));
        }
        let u = DMatrix::from_fn(n, keep.len(), |i, k| svd.u[(i, keep[k])]);
        let vs = DMatrix::from_fn(basis.len(), keep.len(), |i, k| svd.v_t[(keep[k], i)] / s[keep[k]]);
        Ok(Self {
            sqrt_w,
            u,
            vs,
            phi: basis.values.clone(),
            gram_eigenvalues: order.iter().map(|&i| s[i] * s[i]).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Projects node values `f`.
    pub fn project(&self, f: &[f64]) -> Result<BergmanResult> {
        if f.len() != self.sqrt_w.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} node values, got {}",
                self.sqrt_w.len(),
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite data".into()));
        }
        let df = DVector::from_iterator(f.len(), f.iter().zip(self.sqrt_w.iter()).map(|(v, s)| v * s));
        let ut = self.u.tr_mul(&df);
        let coeffs = &self.vs * &ut;
        let projected = &self.phi * &coeffs;
        let fnorm = df.norm();
        let rnorm = (&df - &self.u * &ut).norm();
        let residual = if fnorm > 0.0 { rnorm / fnorm } else { 0.0 };
        let ev = &self.gram_eigenvalues;
        let lmax = ev.first().copied().unwrap_or(0.0);
        let lmin = ev.last().copied().unwrap_or(0.0);
        let lmin_r = ev[self.rank() - 1];
        Ok(BergmanResult {
            coefficients: coeffs.iter().copied().collect(),
            residual,
            rank: self.rank(),
            gram_eigenvalues: ev.clone(),
            gram_condition: if lmin > 0.0 { lmax / lmin } else { f64::INFINITY },
            truncated_condition: lmax / lmin_r,
            projected: projected.iter().copied().collect(),
        })
    }

    /// Discrete inner product `Σ w f g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(self.sqrt_w.iter())
            .map(|((a, b), s)| a * b * s * s)
            .sum()
    }
}

/// One-shot projection of node values onto the basis span.
pub fn bergman_project(f: &[f64], basis: &HarmonicBasis, quad: &DomainQuadrature) -> Result<BergmanResult> {
    BergmanProjector::new(basis, quad)?.project(f)
}

/// Projects a harmonic target after checking it on the probe discs.
pub fn represent(
    u: &dyn Fn(&Vec2) -> Result<f64>,
    mesh: &BoundaryMesh,
    basis: &HarmonicBasis,
    quad: &DomainQuadrature,
) -> Result<BergmanResult> {
    for (c, r) in probe_discs(mesh, 5) {
        let d = mean_value_defect(u, &c, r, 64)?;
        let scale = u(&c)?.abs().max(1e-3);
        if d > HARMONIC_PROBE_TOL * scale {
            return Err(Error::InvalidInput(format!("target fails the mean-value probe at ({}, {})", c.x, c.y)));
        }
    }
    let f: Vec<f64> = quad.nodes.iter().map(u).collect::<Result<_>>()?;
    bergman_project(&f, basis, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{graded_mesh, PolygonalBoundary};
    use crate::l2_harmonic::basis::{build_basis, BasisOptions};
    use crate::l2_harmonic::domain::triangulate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize, h: f64) -> (BoundaryMesh, DomainQuadrature, HarmonicBasis) {
        let poly = PolygonalBoundary::unit_square();
        let mesh = graded_mesh(&poly, n, 2.0).unwrap();
        let quad = triangulate(&poly, h, 0).unwrap();
        let b = build_basis(&mesh, &quad, BasisOptions { corner_singular: false, constant: true }).unwrap();
        (mesh, quad, b)
    }

    #[test]
    fn zero_and_in_span() {
        let (_, quad, b) = square(4, 0.2);
        let p = BergmanProjector::new(&b, &quad).unwrap();
        let r = p.project(&vec![0.0; quad.len()]).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(r.coefficients.iter().all(|c| *c == 0.0));
        let col: Vec<f64> = b.values.column(3).iter().copied().collect();
        assert!(p.project(&col).unwrap().residual < 1e-10);
    }

    #[test]
    fn idempotent_and_self_adjoint() {
        let (_, quad, b) = square(4, 0.2);
        let p = BergmanProjector::new(&b, &quad).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..quad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..quad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pf = p.project(&f).unwrap();
        let ppf = p.project(&pf.projected).unwrap();
        let dc = pf
            .coefficients
            .iter()
            .zip(&ppf.coefficients)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cmax = pf.coefficients.iter().map(|c| c.abs()).fold(0.0, f64::max);
        assert!(dc < 1e-8 * cmax.max(1.0), "{dc}");
        let pg = p.project(&g).unwrap();
        let lhs = p.inner(&pf.projected, &g);
        let rhs = p.inner(&f, &pg.projected);
        assert!((lhs - rhs).abs() < 1e-8 * p.inner(&f, &f).sqrt() * p.inner(&g, &g).sqrt());
    }

    #[test]
    fn harmonic_target_residual_decreases() {
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16] {
            let (mesh, quad, b) = square(n, 0.1);
            let u = |x: &Vec2| Ok(x.x * x.x - x.y * x.y);
            let r = represent(&u, &mesh, &b, &quad).unwrap();
            assert!(r.residual < prev || r.residual < 1e-6, "{} {}", r.residual, prev);
            prev = r.residual;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn non_harmonic_target_rejected() {
        let (mesh, quad, b) = square(4, 0.25);
        let u = |x: &Vec2| Ok(x.x * x.x + x.y * x.y);
        assert!(matches!(represent(&u, &mesh, &b, &quad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rank_collapse() {
        let (_, quad, _) = square(2, 0.5);
        let b = HarmonicBasis {
            elements: vec![crate::l2_harmonic::basis::BasisElement::Constant],
            values: DMatrix::from_element(quad.len(), 1, 1.0),
            panels: 8,
            grading: 2.0,
        };
        assert_eq!(BergmanProjector::new(&b, &quad).unwrap_err(), Error::RankCollapse(1));
    }

    #[test]
    fn nested_bases_do_not_increase_residual() {
        let (_, quad, b) = square(8, 0.125);
        let f: Vec<f64> = quad.nodes.iter().map(|x| (3.0 * x.x).exp() * (3.0 * x.y).cos()).collect();
        let mut prev = f64::INFINITY;
        for m in [8, 16, 24, 33] {
            let sub = HarmonicBasis {
                elements: b.elements[..m].to_vec(),
                values: b.values.columns(0, m).into_owned(),
                panels: b.panels,
                grading: b.grading,
            };
            let r = bergman_project(&f, &sub, &quad).unwrap();
            assert!(r.residual <= prev + 1e-10, "{m}: {} > {prev}", r.residual);
            prev = r.residual;
        }
    }
}
