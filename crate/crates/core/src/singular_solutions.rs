//! Corner-singular harmonic functions `r^{−α} sin(αθ)`, `r^{−α} cos(αθ)`
//! (`α = π/ω`) at a reentrant vertex and the zero-trace fields built from them.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{apply_similarity, cross, graded_mesh, BoundaryMesh, PolygonalBoundary, SimilarityTransform, Vec2};
use crate::l2_harmonic::basis::probe_discs;
use crate::l2_harmonic::domain::{triangulate, DomainQuadrature};
use crate::potentials::{mean_value_defect, Side};
use crate::quadrature::gauss_fixed;
use crate::solvers::{BiesSolution, BieSystem, DirichletData, NeumannData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CornerVariant {
    /// Vanishes on both corner edges.
    Sine,
    /// Zero normal derivative on both corner edges.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CornerSingularFunction {
    pub vertex: Vec2,
    /// Index of the vertex in its polygon.
    pub vertex_index: usize,
    /// Interior opening angle `ω`.
    pub opening: f64,
    /// Direction of the edge at `θ = 0` (toward the next vertex).
    pub frame: Vec2,
    pub alpha: f64,
    pub variant: CornerVariant,
}

impl CornerSingularFunction {
    /// The function at vertex `j` of a counterclockwise polygon; `θ` runs from
    /// the edge `v_j → v_{j+1}` through the interior to the previous edge.
    pub fn at_vertex(polygon: &PolygonalBoundary, j: usize, variant: CornerVariant) -> Result<Self> {
        let v = polygon.vertices();
        if j >= v.len() {
            return Err(Error::InvalidInput(format!("vertex {j} out of range")));
        }
        let next = v[(j + 1) % v.len()];
        let frame = (next - v[j]).normalize();
        let opening = polygon.corner_angles()[j];
        Ok(Self {
            vertex: v[j],
            vertex_index: j,
            opening,
            frame,
            alpha: PI / opening,
            variant,
        })
    }

    /// The first reentrant corner of the polygon.
    pub fn reentrant(polygon: &PolygonalBoundary, variant: CornerVariant) -> Result<Self> {
        let j = *polygon.reentrant_corners().first().ok_or(Error::NoReentrantCorner)?;
        Self::at_vertex(polygon, j, variant)
    }

    /// Local polar coordinates; `θ` lies in `[ω/2 − π, ω/2 + π)` so the branch
    /// cut points away from the sector.
    pub fn polar(&self, x: &Vec2) -> Result<(f64, f64)> {
        let d = x - self.vertex;
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::PointAtCorner);
        }
        let mut th = cross(&self.frame, &d).atan2(self.frame.dot(&d));
        let lo = 0.5 * self.opening - PI;
        while th < lo {
            th += 2.0 * PI;
        }
        while th >= lo + 2.0 * PI {
            th -= 2.0 * PI;
        }
        Ok((r, th))
    }

    pub fn value(&self, x: &Vec2) -> Result<f64> {
        let (r, th) = self.polar(x)?;
        let a = self.alpha;
        Ok(r.powf(-a)
            * match self.variant {
                CornerVariant::Sine => (a * th).sin(),
                CornerVariant::Cosine => (a * th).cos(),
            })
    }

    pub fn gradient(&self, x: &Vec2) -> Result<Vec2> {
        let (r, th) = self.polar(x)?;
        let a = self.alpha;
        let e_r = (x - self.vertex) / r;
        let e_t = Vec2::new(-e_r.y, e_r.x);
        let (gr, gt) = match self.variant {
            CornerVariant::Sine => (-(a * th).sin(), (a * th).cos()),
            CornerVariant::Cosine => (-(a * th).cos(), -(a * th).sin()),
        };
        Ok((e_r * gr + e_t * gt) * (a * r.powf(-a - 1.0)))
    }

    pub fn values(&self, points: &[Vec2]) -> Result<Vec<f64>> {
        points.iter().map(|x| self.value(x)).collect()
    }

    /// The same function for the polygon scaled by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self { vertex: self.vertex * s, ..*self }
    }
}

pub fn eval_corner_singular(csf: &CornerSingularFunction, points: &[Vec2]) -> Result<Vec<f64>> {
    csf.values(points)
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroTraceOptions {
    /// Refinement levels; the field is built on the last one.
    pub panels_per_edge: [usize; 3],
    pub beta: f64,
    /// The correction is solved on the polygon scaled by this factor, where
    /// `V` is safely positive definite.
    pub solve_scale: f64,
    /// Area quadrature size relative to the diameter.
    pub relative_h: f64,
    pub corner_levels: usize,
    /// Gauss points per panel for boundary norms.
    pub boundary_points: usize,
    /// Inner radii of the energy annuli `{ε < r < 2ε}`, relative to the diameter.
    pub annulus_radii: [f64; 5],
}

impl Default for ZeroTraceOptions {
    fn default() -> Self {
        Self {
            panels_per_edge: [16, 32, 64],
            beta: 3.0,
            solve_scale: 0.25,
            relative_h: 0.04,
            corner_levels: 12,
            boundary_points: 8,
            annulus_radii: [0.04, 0.02, 0.01, 0.005, 0.0025],
        }
    }
}

/// `v = U − h − m`: the corner function minus its boundary-element correction
/// (and, for the cosine variant, minus its mean `m`).
#[derive(Debug, Clone)]
pub struct ZeroTraceField {
    pub corner: CornerSingularFunction,
    pub polygon: PolygonalBoundary,
    /// Mesh of the scaled polygon carrying the correction.
    pub mesh: BoundaryMesh,
    pub scale: f64,
    pub correction: BiesSolution,
    pub mean: f64,
}

impl ZeroTraceField {
    /// The field on one mesh with `n` panels per edge; the mean is not removed.
    pub fn new(polygon: &PolygonalBoundary, n: usize, variant: CornerVariant, opts: &ZeroTraceOptions) -> Result<Self> {
        let corner = CornerSingularFunction::reentrant(polygon, variant)?;
        let s = opts.solve_scale;
        let scaled = apply_similarity(polygon, &SimilarityTransform::new(s, Vec2::zeros())?);
        let mesh = graded_mesh(&scaled, n, opts.beta)?;
        let sys = BieSystem::assemble(mesh.clone());
        let u = corner;
        let correction = match variant {
            CornerVariant::Sine => sys.interior_dirichlet(&DirichletData::Function(Arc::new(move |y: &Vec2| {
                u.value(&(y / s)).unwrap_or(0.0)
            })))?,
            CornerVariant::Cosine => sys.interior_neumann(&NeumannData::Function(Arc::new(move |y: &Vec2, nu: &Vec2| {
                u.gradient(&(y / s)).map(|g| g.dot(nu) / s).unwrap_or(0.0)
            })))?,
        };
        Ok(Self { corner, polygon: polygon.clone(), mesh, scale: s, correction, mean: 0.0 })
    }

    /// The correction `h` at a point of the unscaled domain.
    pub fn correction_value(&self, x: &Vec2) -> Result<f64> {
        self.correction.value(&self.mesh, &(x * self.scale))
    }

    pub fn value(&self, x: &Vec2) -> Result<f64> {
        Ok(self.corner.value(x)? - self.correction_value(x)? - self.mean)
    }

    pub fn gradient(&self, x: &Vec2) -> Result<Vec2> {
        let gh = self.correction.source.gradient(&self.mesh, &(x * self.scale))? * self.scale;
        Ok(self.corner.gradient(x)? - gh)
    }

    pub fn values(&self, points: &[Vec2]) -> Result<Vec<f64>> {
        points.par_iter().map(|x| self.value(x)).collect()
    }

    /// `‖·‖_{L²(Γ)}` of the Dirichlet and Neumann traces of `v` (unscaled),
    /// from exact one-sided traces of the correction at Gauss points.
    pub fn boundary_trace_norms(&self, points: usize) -> Result<(f64, f64)> {
        let g = gauss_fixed(points);
        let s = self.scale;
        let parts: Vec<(f64, f64)> = (0..self.mesh.num_panels())
            .into_par_iter()
            .map(|k| {
                let pn = self.mesh.panel(k);
                let len = pn.length / s;
                let mut acc = (0.0, 0.0);
                for (t, w) in g.unit_interval() {
                    let y = pn.point(t);
                    let x = y / s;
                    let nu = pn.normal(t);
                    let (hd, hn) = self.correction.source.boundary_traces(&self.mesh, k, t, Side::Interior)?;
                    let d = self.corner.value(&x)? - hd - self.mean;
                    let nd = self.corner.gradient(&x)?.dot(&nu) - s * hn;
                    acc.0 += w * len * d * d;
                    acc.1 += w * len * nd * nd;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let (a, b) = parts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        Ok((a.sqrt(), b.sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCertificate {
    pub panels_per_edge: usize,
    pub panels: usize,
    /// Dirichlet (sine) or Neumann (cosine) trace over the interior L² norm.
    pub trace_ratio: f64,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnulusEnergy {
    pub inner_radius: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroTraceCertificate {
    pub variant: CornerVariant,
    pub vertex: [f64; 2],
    pub opening: f64,
    pub alpha: f64,
    pub levels: Vec<LevelCertificate>,
    pub corner_l2_norm: f64,
    /// Smallest over largest interior L² norm across levels.
    pub mass_stability: f64,
    pub probe_max_defect: f64,
    pub annuli: Vec<AnnulusEnergy>,
    pub energy_exponent: f64,
    pub expected_exponent: f64,
    /// `|⟨γ_n U, 1⟩| / ‖γ_n U‖` for the cosine variant.
    pub compatibility: Option<f64>,
    pub passed: bool,
    pub failures: Vec<String>,
}

pub const DIRICHLET_TRACE_RATIO: f64 = 1e-2;
pub const NEUMANN_TRACE_RATIO: f64 = 5e-2;
pub const PROBE_TOL: f64 = 1e-8;
pub const EXPONENT_TOL: f64 = 0.15;
pub const COMPATIBILITY_TOL: f64 = 1e-6;

/// The certified zero-trace field on the finest level.
#[derive(Debug, Clone)]
pub struct CornerProgram {
    pub field: ZeroTraceField,
    pub certificate: ZeroTraceCertificate,
}

pub fn build_zero_dirichlet_function(polygon: &PolygonalBoundary, opts: &ZeroTraceOptions) -> Result<CornerProgram> {
    build_zero_trace(polygon, CornerVariant::Sine, opts)
}

pub fn build_zero_neumann_function(polygon: &PolygonalBoundary, opts: &ZeroTraceOptions) -> Result<CornerProgram> {
    build_zero_trace(polygon, CornerVariant::Cosine, opts)
}

fn l2_norm(f: &ZeroTraceField, quad: &DomainQuadrature) -> Result<f64> {
    Ok(f.values(&quad.nodes)?.iter().zip(&quad.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn build_zero_trace(polygon: &PolygonalBoundary, variant: CornerVariant, opts: &ZeroTraceOptions) -> Result<CornerProgram> {
    let corner = CornerSingularFunction::reentrant(polygon, variant)?;
    let diam = polygon.diameter();
    let quad = triangulate(polygon, opts.relative_h * diam, opts.corner_levels)?;
    let u_norm = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .map(|(x, w)| Ok(w * corner.value(x)?.powi(2)))
        .sum::<Result<f64>>()?
        .sqrt();
    let mut levels = Vec::new();
    let mut field = None;
    for &n in &opts.panels_per_edge {
        let mut f = ZeroTraceField::new(polygon, n, variant, opts)?;
        if variant == CornerVariant::Cosine {
            let vals = f.values(&quad.nodes)?;
            f.mean = vals.iter().zip(&quad.weights).map(|(v, w)| v * w).sum::<f64>() / quad.weight_sum();
        }
        let norm = l2_norm(&f, &quad)?;
        let (dn, nn) = f.boundary_trace_norms(opts.boundary_points)?;
        let trace = match variant {
            CornerVariant::Sine => dn,
            CornerVariant::Cosine => nn,
        };
        levels.push(LevelCertificate {
            panels_per_edge: n,
            panels: f.mesh.num_panels(),
            trace_ratio: trace / norm,
            l2_norm: norm,
        });
        field = Some(f);
    }
    let field = field.ok_or_else(|| Error::InvalidInput("no refinement levels".into()))?;

    let mut probe = 0.0f64;
    let mesh = graded_mesh(polygon, 4, 1.0)?;
    for (c, r) in probe_discs(&mesh, 5) {
        let d = mean_value_defect(&|x| field.value(x), &c, r, 64)?;
        probe = probe.max(d / field.value(&c)?.abs().max(1.0));
    }

    let th0 = corner.frame.y.atan2(corner.frame.x);
    let annuli: Vec<AnnulusEnergy> = opts
        .annulus_radii
        .iter()
        .map(|&rel| {
            let eps = rel * diam;
            let q = DomainQuadrature::annular_sector(corner.vertex, th0, corner.opening, eps, 2.0 * eps, 24)?;
            let e = q
                .nodes
                .iter()
                .zip(&q.weights)
                .map(|(x, w)| Ok(w * field.gradient(x)?.norm_squared()))
                .sum::<Result<f64>>()?;
            Ok(AnnulusEnergy { inner_radius: eps, energy: e })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = annuli.iter().map(|a| a.inner_radius).collect();
    let ys: Vec<f64> = annuli.iter().map(|a| a.energy).collect();
    let slope = log_log_slope(&xs, &ys);
    let expected = -2.0 * corner.alpha;

    let compatibility = match variant {
        CornerVariant::Cosine => Some(neumann_compatibility(polygon, &corner, opts)?),
        CornerVariant::Sine => None,
    };

    let mut failures = Vec::new();
    let last = levels.last().unwrap();
    let first = levels.first().unwrap();
    let tol = match variant {
        CornerVariant::Sine => DIRICHLET_TRACE_RATIO,
        CornerVariant::Cosine => NEUMANN_TRACE_RATIO,
    };
    if !(last.trace_ratio < tol) {
        failures.push(format!("trace ratio {:.3e} not below {tol:.0e}", last.trace_ratio));
    }
    if !(last.trace_ratio < first.trace_ratio) {
        failures.push("trace ratio does not decay under refinement".into());
    }
    let mn = levels.iter().map(|l| l.l2_norm).fold(f64::INFINITY, f64::min);
    let mx = levels.iter().map(|l| l.l2_norm).fold(0.0, f64::max);
    if !(mn > 0.1 * u_norm) {
        failures.push(format!("L² norm {mn:.3e} below 0.1·‖U‖ = {:.3e}", 0.1 * u_norm));
    }
    if !(mn / mx > 0.5) {
        failures.push("L² norm not stable across refinements".into());
    }
    if !(probe < PROBE_TOL) {
        failures.push(format!("mean-value defect {probe:.3e}"));
    }
    if !(((slope - expected) / expected).abs() < EXPONENT_TOL) {
        failures.push(format!("energy exponent {slope:.4} vs {expected:.4}"));
    }
    if let Some(c) = compatibility {
        if !(c < COMPATIBILITY_TOL) {
            failures.push(format!("Neumann compatibility defect {c:.3e}"));
        }
    }
    let certificate = ZeroTraceCertificate {
        variant,
        vertex: [corner.vertex.x, corner.vertex.y],
        opening: corner.opening,
        alpha: corner.alpha,
        levels,
        corner_l2_norm: u_norm,
        mass_stability: mn / mx,
        probe_max_defect: probe,
        annuli,
        energy_exponent: slope,
        expected_exponent: expected,
        compatibility,
        passed: failures.is_empty(),
        failures,
    };
    Ok(CornerProgram { field, certificate })
}

/// `|∮ γ_n U ds| / ‖γ_n U‖_{L²(Γ)}` by Gauss quadrature on a graded mesh.
fn neumann_compatibility(polygon: &PolygonalBoundary, u: &CornerSingularFunction, opts: &ZeroTraceOptions) -> Result<f64> {
    let n = *opts.panels_per_edge.last().unwrap();
    let mesh = graded_mesh(polygon, n, opts.beta)?;
    let g = gauss_fixed(opts.boundary_points);
    let mut flux = 0.0;
    let mut sq = 0.0;
    for pn in mesh.panels() {
        for (t, w) in g.unit_interval() {
            let x = pn.point(t);
            let d = u.gradient(&x)?.dot(&pn.normal(t));
            flux += w * pn.length * d;
            sq += w * pn.length * d * d;
        }
    }
    Ok(flux.abs() / sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l2_harmonic::domain::DomainQuadrature;
    use crate::potentials::mean_value_defect;

    fn l_corner(variant: CornerVariant) -> CornerSingularFunction {
        CornerSingularFunction::reentrant(&PolygonalBoundary::l_shape(), variant).unwrap()
    }

    #[test]
    fn frame_and_exponent_on_l_shape() {
        let u = l_corner(CornerVariant::Sine);
        assert_eq!(u.vertex, Vec2::new(1.0, 1.0));
        assert!((u.opening - 1.5 * PI).abs() < 1e-14);
        assert!((u.alpha - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn formula_and_edge_zeros() {
        let u = l_corner(CornerVariant::Sine);
        // (r, θ) = (1, 3π/4) in the local frame
        let th = 0.75 * PI;
        let e = u.frame;
        let d = e * th.cos() + Vec2::new(-e.y, e.x) * th.sin();
        assert!((u.value(&(u.vertex + d)).unwrap() - 1.0).abs() < 1e-14);
        let poly = PolygonalBoundary::l_shape();
        let v = poly.vertices();
        let (j, n) = (u.vertex_index, v.len());
        for t in [0.1, 0.5, 0.9] {
            let on_next = u.vertex + (v[(j + 1) % n] - u.vertex) * t;
            let on_prev = u.vertex + (v[(j + n - 1) % n] - u.vertex) * t;
            assert!(u.value(&on_next).unwrap().abs() < 1e-14);
            assert!(u.value(&on_prev).unwrap().abs() < 1e-14);
        }
        assert_eq!(u.value(&u.vertex), Err(Error::PointAtCorner));
        assert_eq!(
            CornerSingularFunction::reentrant(&PolygonalBoundary::unit_square(), CornerVariant::Sine),
            Err(Error::NoReentrantCorner)
        );
    }

    #[test]
    fn sector_norm() {
        let u = l_corner(CornerVariant::Sine);
        let th0 = u.frame.y.atan2(u.frame.x);
        let q = DomainQuadrature::sector(u.vertex, th0, u.opening, 1.0, 12, 24).unwrap();
        let n2 = q.integrate(|x| u.value(x).unwrap().powi(2));
        assert!((n2 - 9.0 * PI / 8.0).abs() < 1e-6, "{n2}");
    }

    #[test]
    fn harmonic_and_gradient_consistent() {
        for variant in [CornerVariant::Sine, CornerVariant::Cosine] {
            let u = l_corner(variant);
            let c = Vec2::new(0.4, 0.5);
            let d = mean_value_defect(&|x| u.value(x), &c, 0.2, 64).unwrap();
            assert!(d < 1e-10, "{d}");
            let h = 1e-6;
            let g = u.gradient(&c).unwrap();
            let fd = Vec2::new(
                (u.value(&(c + Vec2::new(h, 0.0))).unwrap() - u.value(&(c - Vec2::new(h, 0.0))).unwrap()) / (2.0 * h),
                (u.value(&(c + Vec2::new(0.0, h))).unwrap() - u.value(&(c - Vec2::new(0.0, h))).unwrap()) / (2.0 * h),
            );
            assert!((g - fd).norm() < 1e-6 * g.norm());
        }
    }

    #[test]
    fn convex_polygon_rejected() {
        let o = ZeroTraceOptions::default();
        assert_eq!(
            build_zero_dirichlet_function(&PolygonalBoundary::unit_square(), &o).unwrap_err(),
            Error::NoReentrantCorner
        );
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 0.5, 0.25];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-4.0 / 3.0)).collect();
        assert!((log_log_slope(&x, &y) + 4.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn scaling_covariance() {
        let u = l_corner(CornerVariant::Sine);
        let s = 0.25;
        let us = u.scaled(s);
        for x in [Vec2::new(0.3, 0.2), Vec2::new(1.7, 0.4), Vec2::new(0.5, 1.8)] {
            let a = us.value(&(x * s)).unwrap();
            let b = s.powf(-u.alpha) * u.value(&x).unwrap();
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }
}
