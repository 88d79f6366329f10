//! Equilibrium density, Robin constant and the affine bases `{q_j}`, `{p_j}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::Serialize;

use crate::boundary_ops::{
    p0_mass, p0_moments, p1_moments, BoundaryOperatorMatrix, DensityVector, TraceVector, VSolver, WSolver,
    CAPACITY_MARGIN,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, SimilarityTransform, Vec2};
use crate::linalg::least_squares;
use crate::potentials::LayerSource;

/// Unnormalized equilibrium masses at or above this size mean capacity ≈ 1.
const RAW_MASS_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumData {
    pub e_gamma: DensityVector,
    /// Constant value of `𝒮 e_Γ` on the boundary.
    pub c_gamma: f64,
    /// `exp(−2π c_Γ)`.
    pub capacity: f64,
}

pub fn equilibrium_density(v: &BoundaryOperatorMatrix, mesh: &BoundaryMesh) -> Result<EquilibriumData> {
    let solver = match VSolver::unchecked(v, mesh) {
        Ok(s) => s,
        // V is singular exactly when the Robin constant vanishes
        Err(Error::SolveFailure(_)) => {
            return Err(Error::CapacityViolation { c_gamma: 0.0, margin: 0.0 });
        }
        Err(e) => return Err(e),
    };
    let raw = solver.raw_mass();
    if !raw.is_finite() || raw.abs() >= RAW_MASS_LIMIT {
        return Err(Error::CapacityViolation {
            c_gamma: if raw.is_finite() { 1.0 / raw } else { 0.0 },
            margin: 0.0,
        });
    }
    let c_gamma = 1.0 / raw;
    Ok(EquilibriumData {
        e_gamma: DensityVector::new(solver.e_raw() / raw),
        c_gamma,
        capacity: (-2.0 * PI * c_gamma).exp(),
    })
}

/// Scaling `x ↦ s x` after which the Robin constant equals `target_c`.
pub fn recommend_rescale(eq: &EquilibriumData, target_c: f64) -> Result<SimilarityTransform> {
    if !(target_c > 0.0) || !target_c.is_finite() {
        return Err(Error::InvalidInput(format!("target Robin constant {target_c} must be positive")));
    }
    let s = (-2.0 * PI * (target_c - eq.c_gamma)).exp();
    SimilarityTransform::new(s, Vec2::zeros())
}

/// `a + b·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineFunction {
    pub a: f64,
    pub b: [f64; 2],
}

impl AffineFunction {
    pub fn eval(&self, x: &Vec2) -> f64 {
        self.a + self.b[0] * x.x + self.b[1] * x.y
    }

    fn combine(coeffs: &[f64], basis: &[AffineFunction]) -> Self {
        let mut out = AffineFunction { a: 0.0, b: [0.0; 2] };
        for (c, f) in coeffs.iter().zip(basis) {
            out.a += c * f.a;
            out.b[0] += c * f.b[0];
            out.b[1] += c * f.b[1];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSingleBasis {
    pub q: [DensityVector; 3],
    /// `𝒮 q_j = P_j` on the interior.
    pub p_fn: [AffineFunction; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineDoubleBasis {
    pub p: [TraceVector; 2],
    /// `𝒟 p_j = Q_j` on the interior, recovered by a least-squares fit.
    pub q_fn: [AffineFunction; 2],
    /// Largest residual of the affine fit over the sample grid.
    pub fit_residual: f64,
}

/// Lower-triangular `L⁻¹` with `G = L Lᵀ`; rows give Gram–Schmidt coefficients
/// in the original order.
fn gram_schmidt_coefficients(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = g.diagonal().amax();
    let chol = g.clone().cholesky().ok_or(Error::RankDeficiency)?;
    let l = chol.l();
    let min = l.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if !(min * min > 1e-12 * scale) {
        return Err(Error::RankDeficiency);
    }
    l.try_inverse().ok_or(Error::RankDeficiency)
}

const AFFINE_UNITS: [AffineFunction; 3] = [
    AffineFunction { a: 1.0, b: [0.0, 0.0] },
    AffineFunction { a: 0.0, b: [1.0, 0.0] },
    AffineFunction { a: 0.0, b: [0.0, 1.0] },
];

pub fn affine_single_basis(v: &BoundaryOperatorMatrix, mesh: &BoundaryMesh) -> Result<AffineSingleBasis> {
    let solver = VSolver::new(v, mesh, CAPACITY_MARGIN)?;
    let mut r = DMatrix::zeros(mesh.num_panels(), 3);
    let loads = [
        p0_mass(mesh),
        p0_moments(mesh, &|x, _| x.x),
        p0_moments(mesh, &|x, _| x.y),
    ];
    for (j, b) in loads.iter().enumerate() {
        r.set_column(j, &solver.solve_moments(b)?.coeffs);
    }
    let g = r.transpose() * solver.matrix() * &r;
    let c = gram_schmidt_coefficients(&g)?;
    let q = &r * c.transpose();
    let mk = |j: usize| DensityVector::new(q.column(j).into_owned());
    let pf = |j: usize| {
        let row: Vec<f64> = c.row(j).iter().copied().collect();
        AffineFunction::combine(&row, &AFFINE_UNITS)
    };
    Ok(AffineSingleBasis {
        q: [mk(0), mk(1), mk(2)],
        p_fn: [pf(0), pf(1), pf(2)],
    })
}

/// Interior sample points of the fixed 5×5 grid over the bounding box, kept
/// away from the boundary.
pub fn interior_sample_grid(mesh: &BoundaryMesh) -> Vec<Vec2> {
    let (lo, hi) = bounding_box(mesh);
    let shape = mesh.shape();
    let keep = 0.02 * shape.diameter();
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let x = Vec2::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 1.0) / 6.0,
                lo.y + (hi.y - lo.y) * (j as f64 + 1.0) / 6.0,
            );
            if shape.contains(&x) && shape.distance_to_boundary(&x) > keep {
                pts.push(x);
            }
        }
    }
    pts
}

fn bounding_box(mesh: &BoundaryMesh) -> (Vec2, Vec2) {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in mesh.panels() {
        for t in [0.0, 0.25, 0.5, 0.75] {
            let y = p.point(t);
            lo = lo.inf(&y);
            hi = hi.sup(&y);
        }
    }
    (lo, hi)
}

/// Least-squares affine fit of `values` at `points`; returns the fit and its
/// largest pointwise residual.
pub fn fit_affine(points: &[Vec2], values: &[f64]) -> Result<(AffineFunction, f64)> {
    if points.len() < 3 {
        return Err(Error::RankDeficiency);
    }
    let a = DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => points[i].x,
        _ => points[i].y,
    });
    let b = DVector::from_column_slice(values);
    let (x, cond) = least_squares(&a, &b)?;
    if cond > 1e12 {
        return Err(Error::RankDeficiency);
    }
    let f = AffineFunction { a: x[0], b: [x[1], x[2]] };
    let res = points
        .iter()
        .zip(values)
        .map(|(p, v)| (f.eval(p) - v).abs())
        .fold(0.0, f64::max);
    Ok((f, res))
}

pub fn affine_double_basis(w: &BoundaryOperatorMatrix, mesh: &BoundaryMesh) -> Result<AffineDoubleBasis> {
    let solver = WSolver::new(w, mesh)?;
    let n = mesh.num_nodes();
    let mut r = DMatrix::zeros(n, 2);
    let loads = [p1_moments(mesh, &|_, nr| nr.x), p1_moments(mesh, &|_, nr| nr.y)];
    for (j, b) in loads.iter().enumerate() {
        r.set_column(j, &solver.solve_moments(b)?.coeffs);
    }
    let g = r.transpose() * &w.matrix * &r;
    let c = gram_schmidt_coefficients(&g)?;
    let p = &r * c.transpose();
    let pv = |j: usize| TraceVector::new(p.column(j).into_owned());
    let basis = [pv(0), pv(1)];
    let pts = interior_sample_grid(mesh);
    let mut q_fn = [AffineFunction { a: 0.0, b: [0.0; 2] }; 2];
    let mut fit_residual = 0.0f64;
    for j in 0..2 {
        let vals = LayerSource::double(basis[j].clone()).values(mesh, &pts)?;
        let (f, res) = fit_affine(&pts, &vals)?;
        q_fn[j] = f;
        fit_residual = fit_residual.max(res);
    }
    Ok(AffineDoubleBasis { p: basis, q_fn, fit_residual })
}

impl AffineSingleBasis {
    /// Gram matrix `⟨q_j, V q_k⟩`.
    pub fn gram(&self, v: &BoundaryOperatorMatrix) -> Matrix3<f64> {
        Matrix3::from_fn(|j, k| self.q[j].coeffs.dot(&(&v.matrix * &self.q[k].coeffs)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_ops::{assemble_v, assemble_w, mean_value};
    use crate::geometry::{graded_mesh, PolygonalBoundary};

    fn circle(r: f64, n: usize) -> BoundaryMesh {
        BoundaryMesh::circle(Vec2::zeros(), r, n).unwrap()
    }

    #[test]
    fn disk_capacity_is_radius() {
        let mesh = circle(0.5, 128);
        let eq = equilibrium_density(&assemble_v(&mesh), &mesh).unwrap();
        assert!((eq.c_gamma - 2f64.ln() / (2.0 * PI)).abs() < 1e-6, "{}", eq.c_gamma);
        assert!((eq.capacity - 0.5).abs() < 1e-6);
        let uniform = 1.0 / (2.0 * PI * 0.5);
        for e in eq.e_gamma.coeffs.iter() {
            assert!((e - uniform).abs() < 1e-6 * uniform);
        }
        assert!((eq.e_gamma.total_mass(&mesh) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unit_disk_is_boundary_case() {
        let mesh = circle(1.0, 64);
        match equilibrium_density(&assemble_v(&mesh), &mesh) {
            Err(Error::CapacityViolation { .. }) => {}
            Ok(eq) => assert!(eq.c_gamma.abs() < 1e-6),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn rescale_law() {
        let eq = EquilibriumData {
            e_gamma: DensityVector::zeros(1),
            c_gamma: 0.0,
            capacity: 1.0,
        };
        let t = recommend_rescale(&eq, 0.1).unwrap();
        assert!((t.scale - (-0.2 * PI).exp()).abs() < 1e-15);
        let eq = EquilibriumData { c_gamma: 0.1, ..eq };
        assert!((recommend_rescale(&eq, 0.1).unwrap().scale - 1.0).abs() < 1e-15);
        assert!(recommend_rescale(&eq, -1.0).is_err());
    }

    #[test]
    fn unit_circle_rescaled_to_half() {
        // c_Γ of the unit circle is 0 in closed form
        let eq = EquilibriumData {
            e_gamma: DensityVector::zeros(1),
            c_gamma: 0.0,
            capacity: 1.0,
        };
        let t = recommend_rescale(&eq, 2f64.ln() / (2.0 * PI)).unwrap();
        assert!((t.scale - 0.5).abs() < 1e-10);
    }

    #[test]
    fn capacity_scales_with_curve() {
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 8, 2.0).unwrap();
        let base = equilibrium_density(&assemble_v(&mesh), &mesh).unwrap().capacity;
        for s in [0.5, 2.0] {
            let m = mesh.transformed(&SimilarityTransform::new(s, Vec2::zeros()).unwrap());
            let v = assemble_v(&m);
            match equilibrium_density(&v, &m) {
                Ok(eq) => assert!((eq.capacity - s * base).abs() < 1e-8, "{s}"),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn square_capacity_self_convergence() {
        let caps: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let mesh = graded_mesh(&PolygonalBoundary::unit_square(), n, 2.0).unwrap();
                equilibrium_density(&assemble_v(&mesh), &mesh).unwrap().capacity
            })
            .collect();
        let (d1, d2) = (caps[1] - caps[0], caps[2] - caps[1]);
        assert!(d1 * d2 > 0.0 && d2.abs() < d1.abs(), "{caps:?}");
        // Aitken extrapolation with the observed ratio
        let extrapolated = caps[2] + d2 * d2 / (d1 - d2);
        assert!((extrapolated - caps[2]).abs() < 1e-4, "{caps:?}");
        // closed form for the unit square: Γ(1/4)² / (4 π^{3/2})
        let gamma_quarter = 3.625_609_908_221_908_f64;
        let exact = gamma_quarter * gamma_quarter / (4.0 * PI.powf(1.5));
        assert!((extrapolated - exact).abs() < 1e-4, "{extrapolated} vs {exact}");
    }

    #[test]
    fn equilibrium_positive_on_square() {
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 16, 2.0).unwrap();
        let eq = equilibrium_density(&assemble_v(&mesh), &mesh).unwrap();
        assert!(eq.e_gamma.coeffs.iter().all(|e| *e > 0.0));
    }

    #[test]
    fn single_basis_on_circle() {
        let mesh = circle(0.5, 128);
        let v = assemble_v(&mesh);
        let b = affine_single_basis(&v, &mesh).unwrap();
        let g = b.gram(&v);
        assert!((g - Matrix3::identity()).amax() < 1e-8);
        // q_0 uniform, q_1 ∝ cos, q_2 ∝ sin
        let mids: Vec<Vec2> = mesh.panels().iter().map(|p| p.point(0.5)).collect();
        let profile = |j: usize, f: &dyn Fn(&Vec2) -> f64| {
            let q = &b.q[j].coeffs;
            let target = DVector::from_iterator(mids.len(), mids.iter().map(f));
            let a = q.dot(&target) / target.norm_squared();
            (q - target * a).amax() / q.amax()
        };
        assert!(profile(0, &|_| 1.0) < 1e-3);
        assert!(profile(1, &|x| x.x) < 1e-3);
        assert!(profile(2, &|x| x.y) < 1e-3);
    }

    #[test]
    fn single_basis_interior_affine() {
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 64, 2.0).unwrap();
        let v = assemble_v(&mesh);
        let b = affine_single_basis(&v, &mesh).unwrap();
        let x = Vec2::new(0.3, 0.6);
        for j in 0..3 {
            let s = LayerSource::single(b.q[j].clone()).value(&mesh, &x).unwrap();
            assert!((s - b.p_fn[j].eval(&x)).abs() < 1e-6, "{j}");
        }
    }

    #[test]
    fn double_basis_on_circle() {
        let mesh = circle(0.5, 128);
        let w = assemble_w(&mesh);
        let b = affine_double_basis(&w, &mesh).unwrap();
        for j in 0..2 {
            assert!(mean_value(&mesh, &b.p[j]).abs() < 1e-10);
            for k in 0..2 {
                let g = b.p[j].coeffs.dot(&(&w.matrix * &b.p[k].coeffs));
                let d = if j == k { 1.0 } else { 0.0 };
                assert!((g - d).abs() < 1e-8);
            }
            let p = &b.p[j].coeffs;
            let nodes = mesh.nodes();
            let c = DVector::from_iterator(nodes.len(), nodes.iter().map(|x| x.x));
            let s = DVector::from_iterator(nodes.len(), nodes.iter().map(|x| x.y));
            let ac = p.dot(&c) / c.norm_squared();
            let as_ = p.dot(&s) / s.norm_squared();
            assert!((p - c * ac - s * as_).amax() < 1e-3 * p.amax());
        }
        assert!(b.fit_residual < 1e-5, "{}", b.fit_residual);
    }

    #[test]
    fn gram_schmidt_rejects_rank_deficiency() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(gram_schmidt_coefficients(&g), Err(Error::RankDeficiency)));
    }
}
