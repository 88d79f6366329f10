//! Off-boundary evaluation of single and double layer potentials, one-sided
//! traces, jump-relation reports and far-field coefficient fits.
//!
//! Trace conventions: `γ_n⁻u = ∇u·n⁻` from inside and `γ_n⁺u = ∇u·n⁺ = −∇u·n⁻`
//! from outside, `n⁻` the outward normal. With these, the four jump relations
//! read `[γ_d 𝒮q] = 0`, `γ_n⁺𝒮q + γ_n⁻𝒮q = q`, `γ_d⁺𝒟p − γ_d⁻𝒟p = p` and
//! `γ_n⁺𝒟p + γ_n⁻𝒟p = 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_ops::{
    panel_double_layer, panel_double_layer_gradient, panel_single_layer, panel_single_layer_gradient,
    DensityVector, TraceVector,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, PanelShape, Vec2};
use crate::linalg::least_squares;
use crate::quadrature::gauss_fixed;

const INV_2PI: f64 = 0.5 / PI;

/// A layer-potential representation `u = 𝒮q + 𝒟p` (either part optional).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerSource {
    pub single: Option<DensityVector>,
    pub double: Option<TraceVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SourceKind {
    Single,
    Double,
    Sum,
    Zero,
}

impl LayerSource {
    pub fn single(q: DensityVector) -> Self {
        Self {
            single: Some(q),
            double: None,
        }
    }

    pub fn double(p: TraceVector) -> Self {
        Self {
            single: None,
            double: Some(p),
        }
    }

    pub fn sum(q: DensityVector, p: TraceVector) -> Self {
        Self {
            single: Some(q),
            double: Some(p),
        }
    }

    pub fn kind(&self) -> SourceKind {
        match (&self.single, &self.double) {
            (Some(_), None) => SourceKind::Single,
            (None, Some(_)) => SourceKind::Double,
            (Some(_), Some(_)) => SourceKind::Sum,
            (None, None) => SourceKind::Zero,
        }
    }

    /// `‖q‖∞ + ‖p‖∞`.
    pub fn data_scale(&self) -> f64 {
        self.single.as_ref().map_or(0.0, |q| q.coeffs.amax()) + self.double.as_ref().map_or(0.0, |p| p.coeffs.amax())
    }

    /// Field value at any point; on-boundary points get the principal-value
    /// (direct) value.
    pub fn value_unchecked(&self, mesh: &BoundaryMesh, x: &Vec2) -> Result<f64> {
        let mut u = 0.0;
        for (k, pn) in mesh.panels().iter().enumerate() {
            if let Some(q) = &self.single {
                if q.coeffs[k] != 0.0 {
                    u += q.coeffs[k] * panel_single_layer(pn, x)?.constant;
                }
            }
            if let Some(p) = &self.double {
                let (a, b) = (p.coeffs[pn.start_node], p.coeffs[pn.end_node]);
                if a != 0.0 || b != 0.0 {
                    let t = panel_double_layer(pn, x)?;
                    u += a * t.left + b * t.right;
                }
            }
        }
        Ok(u)
    }

    /// Field gradient at a point off the boundary.
    pub fn gradient_unchecked(&self, mesh: &BoundaryMesh, x: &Vec2) -> Result<Vec2> {
        let mut g = Vec2::zeros();
        for (k, pn) in mesh.panels().iter().enumerate() {
            if let Some(q) = &self.single {
                if q.coeffs[k] != 0.0 {
                    g += panel_single_layer_gradient(pn, x)?.constant * q.coeffs[k];
                }
            }
            if let Some(p) = &self.double {
                let (a, b) = (p.coeffs[pn.start_node], p.coeffs[pn.end_node]);
                if a != 0.0 || b != 0.0 {
                    let t = panel_double_layer_gradient(pn, x)?;
                    g += t.left * a + t.right * b;
                }
            }
        }
        Ok(g)
    }

    pub fn value(&self, mesh: &BoundaryMesh, x: &Vec2) -> Result<f64> {
        check_off_boundary(mesh, x)?;
        self.value_unchecked(mesh, x)
    }

    pub fn gradient(&self, mesh: &BoundaryMesh, x: &Vec2) -> Result<Vec2> {
        check_off_boundary(mesh, x)?;
        self.gradient_unchecked(mesh, x)
    }

    /// Values at many points, parallel over points.
    pub fn values(&self, mesh: &BoundaryMesh, points: &[Vec2]) -> Result<Vec<f64>> {
        points.par_iter().map(|x| self.value(mesh, x)).collect()
    }

    /// Exact one-sided traces `(γ_d^±u, γ_n^±u)` at parameter `t ∈ (0,1)` of a
    /// straight panel, from the principal-value integrals plus the local jump.
    pub fn boundary_traces(&self, mesh: &BoundaryMesh, panel: usize, t: f64, side: Side) -> Result<(f64, f64)> {
        let pi = mesh.panel(panel);
        if pi.shape != PanelShape::Segment {
            return Err(Error::InvalidInput("exact boundary traces need straight panels".into()));
        }
        let x = pi.point(t);
        let n = pi.normal(t);
        let sgn = match side {
            Side::Interior => 1.0,
            Side::Exterior => -1.0,
        };
        let mut dir = self.value_unchecked(mesh, &x)?;
        let mut grad_n = 0.0;
        for (k, pn) in mesh.panels().iter().enumerate() {
            if let Some(q) = &self.single {
                if q.coeffs[k] != 0.0 && k != panel {
                    grad_n += q.coeffs[k] * panel_single_layer_gradient(pn, &x)?.constant.dot(&n);
                }
            }
            if let Some(p) = &self.double {
                let (a, b) = (p.coeffs[pn.start_node], p.coeffs[pn.end_node]);
                if a != 0.0 || b != 0.0 {
                    let g = panel_double_layer_gradient(pn, &x)?;
                    grad_n += (g.left * a + g.right * b).dot(&n);
                }
            }
        }
        if let Some(q) = &self.single {
            // ∂_{n⁻}𝒮q jumps by −q across the panel (inside → outside)
            grad_n += sgn * 0.5 * q.coeffs[panel];
        }
        if let Some(p) = &self.double {
            let pv = p.eval_on_panel(pi, t);
            dir -= sgn * 0.5 * pv;
        }
        Ok((dir, sgn * grad_n))
    }
}

fn check_off_boundary(mesh: &BoundaryMesh, x: &Vec2) -> Result<()> {
    let d = mesh.shape().distance_to_boundary(x);
    if !(d > 1e-14 * mesh.shape().diameter()) {
        return Err(Error::PointOnBoundary(x.x, x.y));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NearStrategy {
    ClosedForm,
    Gauss,
    Adaptive,
}

/// Field values at a point set, with the kind of integration that was used.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub kind: SourceKind,
    pub source: LayerSource,
    pub points: Vec<Vec2>,
    pub values: Vec<f64>,
    pub strategy: Vec<NearStrategy>,
}

fn strategy_for(mesh: &BoundaryMesh, x: &Vec2) -> NearStrategy {
    let curved = mesh.panels().iter().filter(|p| p.shape != PanelShape::Segment);
    let mut s = NearStrategy::ClosedForm;
    for p in curved {
        s = NearStrategy::Gauss;
        if p.distance_lower_bound(x) <= 2.0 * p.length {
            return NearStrategy::Adaptive;
        }
    }
    s
}

pub fn evaluate(mesh: &BoundaryMesh, source: &LayerSource, points: &[Vec2]) -> Result<PotentialField> {
    let values = source.values(mesh, points)?;
    Ok(PotentialField {
        kind: source.kind(),
        source: source.clone(),
        points: points.to_vec(),
        values,
        strategy: points.iter().map(|x| strategy_for(mesh, x)).collect(),
    })
}

pub fn eval_single(mesh: &BoundaryMesh, q: &DensityVector, points: &[Vec2]) -> Result<PotentialField> {
    evaluate(mesh, &LayerSource::single(q.clone()), points)
}

pub fn eval_double(mesh: &BoundaryMesh, p: &TraceVector, points: &[Vec2]) -> Result<PotentialField> {
    evaluate(mesh, &LayerSource::double(p.clone()), points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    /// `Ω⁻`, the bounded domain (the `−` traces).
    Interior,
    /// `Ω⁺` (the `+` traces).
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceKind {
    Dirichlet,
    Neumann,
}

/// Base offset of the extrapolation sequence relative to the panel length.
pub const DEFAULT_EPS0: f64 = 1e-2;
const N_OFFSETS: usize = 5;

/// Value at 0 of the interpolating polynomial through `(xs, ys)` (Neville).
pub fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..(n - m) {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

fn extrapolate(xs: &[f64], ys: &[f64], floor: f64) -> Result<f64> {
    let full = neville_at_zero(xs, ys);
    let partial = neville_at_zero(&xs[..xs.len() - 1], &ys[..ys.len() - 1]);
    let scale = ys.iter().fold(full.abs(), |a, b| a.max(b.abs())).max(floor).max(1e-300);
    let spread = (full - partial).abs();
    if spread > 1e-3 * scale {
        return Err(Error::ExtrapolationDivergence(spread / scale));
    }
    Ok(full)
}

/// One-sided Dirichlet and Neumann traces at every panel midpoint by
/// polynomial extrapolation of `u(m ∓ εn⁻)` and `∇u(m ∓ εn⁻)·n^∓` over the
/// offsets `ε_k = eps0·L·2^{−k}`, `k = 0..4`.
pub fn one_sided_traces(mesh: &BoundaryMesh, source: &LayerSource, side: Side, eps0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eps0 * 2f64.powi(-(N_OFFSETS as i32 - 1)) >= 1e-7) || eps0 > 0.5 {
        return Err(Error::InvalidInput(format!("offset factor {eps0} out of range")));
    }
    let sgn = match side {
        Side::Interior => -1.0,
        Side::Exterior => 1.0,
    };
    // values that cancel to rounding level are judged against the data size
    let floor = 1e-9 * source.data_scale();
    let res: Vec<(f64, f64)> = mesh
        .panels()
        .par_iter()
        .map(|pn| {
            let m = pn.midpoint();
            let n = pn.normal(0.5);
            let n_side = n * (-sgn);
            let mut xs = [0.0; N_OFFSETS];
            let mut us = [0.0; N_OFFSETS];
            let mut gs = [0.0; N_OFFSETS];
            for k in 0..N_OFFSETS {
                let eps = eps0 * pn.length * 2f64.powi(-(k as i32));
                let x = m + n * (sgn * eps);
                xs[k] = eps;
                us[k] = source.value_unchecked(mesh, &x)?;
                gs[k] = source.gradient_unchecked(mesh, &x)?.dot(&n_side);
            }
            // gradient noise grows like data/ε at the closest offset
            let gfloor = floor.max(1e-11 * source.data_scale() / xs[N_OFFSETS - 1]);
            Ok((extrapolate(&xs, &us, floor)?, extrapolate(&xs, &gs, gfloor)?))
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().unzip())
}

/// One trace kind on one side at all panel midpoints.
pub fn one_sided_trace(mesh: &BoundaryMesh, source: &LayerSource, side: Side, kind: TraceKind, eps0: f64) -> Result<Vec<f64>> {
    let (d, n) = one_sided_traces(mesh, source, side, eps0)?;
    Ok(match kind {
        TraceKind::Dirichlet => d,
        TraceKind::Neumann => n,
    })
}

/// A jump-test trial: discrete data plus, optionally, the smooth function it discretizes.
pub struct JumpTrial<'a> {
    pub q: DensityVector,
    pub p: TraceVector,
    pub q_exact: Option<&'a (dyn Fn(&Vec2) -> f64 + Sync)>,
    pub p_exact: Option<&'a (dyn Fn(&Vec2) -> f64 + Sync)>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CornerBin {
    /// Upper bound of the bin, as a fraction of the curve diameter.
    pub max_distance: f64,
    pub panels: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrialJumps {
    /// `max |γ_d⁺𝒮q − γ_d⁻𝒮q|`.
    pub single_dirichlet: f64,
    /// `max |γ_n⁺𝒮q + γ_n⁻𝒮q − q|`.
    pub single_neumann: f64,
    /// `max |γ_d⁺𝒟p − γ_d⁻𝒟p − p|`.
    pub double_dirichlet: f64,
    /// `max |γ_n⁺𝒟p + γ_n⁻𝒟p|`.
    pub double_neumann: f64,
    /// Same identities measured against the smooth trial functions.
    pub single_neumann_consistency: Option<f64>,
    pub double_dirichlet_consistency: Option<f64>,
    pub corner_bins: Vec<CornerBin>,
}

impl TrialJumps {
    pub fn max_residual(&self) -> f64 {
        self.single_dirichlet
            .max(self.single_neumann)
            .max(self.double_dirichlet)
            .max(self.double_neumann)
    }

    pub fn max_consistency(&self) -> Option<f64> {
        match (self.single_neumann_consistency, self.double_dirichlet_consistency) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct JumpReport {
    pub panels: usize,
    pub max_panel_length: f64,
    pub trials: Vec<TrialJumps>,
    pub max_residual: f64,
    pub max_consistency: Option<f64>,
}

const BIN_EDGES: [f64; 3] = [0.01, 0.1, f64::INFINITY];

/// Residuals of the four jump identities at every panel midpoint.
pub fn jump_report(mesh: &BoundaryMesh, trials: &[JumpTrial<'_>]) -> Result<JumpReport> {
    let diam = mesh.shape().diameter();
    let mut out = Vec::new();
    for trial in trials {
        let s = LayerSource::single(trial.q.clone());
        let d = LayerSource::double(trial.p.clone());
        let (sd_in, sn_in) = one_sided_traces(mesh, &s, Side::Interior, DEFAULT_EPS0)?;
        let (sd_out, sn_out) = one_sided_traces(mesh, &s, Side::Exterior, DEFAULT_EPS0)?;
        let (dd_in, dn_in) = one_sided_traces(mesh, &d, Side::Interior, DEFAULT_EPS0)?;
        let (dd_out, dn_out) = one_sided_traces(mesh, &d, Side::Exterior, DEFAULT_EPS0)?;
        let mut r = [0.0f64; 4];
        let mut c = [0.0f64; 2];
        let mut bins: Vec<CornerBin> = BIN_EDGES
            .iter()
            .map(|&e| CornerBin {
                max_distance: e,
                panels: 0,
                max_residual: 0.0,
            })
            .collect();
        for (i, pn) in mesh.panels().iter().enumerate() {
            let m = pn.midpoint();
            let pm = trial.p.eval_on_panel(pn, 0.5);
            let ri = [
                (sd_out[i] - sd_in[i]).abs(),
                (sn_out[i] + sn_in[i] - trial.q.coeffs[i]).abs(),
                (dd_out[i] - dd_in[i] - pm).abs(),
                (dn_out[i] + dn_in[i]).abs(),
            ];
            for k in 0..4 {
                r[k] = r[k].max(ri[k]);
            }
            if let Some(f) = trial.q_exact {
                c[0] = c[0].max((sn_out[i] + sn_in[i] - f(&m)).abs());
            }
            if let Some(f) = trial.p_exact {
                c[1] = c[1].max((dd_out[i] - dd_in[i] - f(&m)).abs());
            }
            let dist = mesh.corner_distance(i) / diam;
            let worst = ri.iter().fold(0.0f64, |a, b| a.max(*b));
            if let Some(bin) = bins.iter_mut().find(|b| dist < b.max_distance) {
                bin.panels += 1;
                bin.max_residual = bin.max_residual.max(worst);
            }
        }
        out.push(TrialJumps {
            single_dirichlet: r[0],
            single_neumann: r[1],
            double_dirichlet: r[2],
            double_neumann: r[3],
            single_neumann_consistency: trial.q_exact.map(|_| c[0]),
            double_dirichlet_consistency: trial.p_exact.map(|_| c[1]),
            corner_bins: bins,
        });
    }
    let max_residual = out.iter().map(|t| t.max_residual()).fold(0.0, f64::max);
    let cons: Vec<f64> = out.iter().filter_map(|t| t.max_consistency()).collect();
    Ok(JumpReport {
        panels: mesh.num_panels(),
        max_panel_length: mesh.panels().iter().map(|p| p.length).fold(0.0, f64::max),
        trials: out,
        max_residual,
        max_consistency: if cons.is_empty() {
            None
        } else {
            Some(cons.iter().copied().fold(0.0, f64::max))
        },
    })
}

/// Least-squares slopes `log(e_{k+1}/e_k) / log(h_{k+1}/h_k)` between successive refinements.
pub fn empirical_orders(h: &[f64], err: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(err.windows(2))
        .map(|(hw, ew)| (ew[1] / ew[0]).ln() / (hw[1] / hw[0]).ln())
        .collect()
}

/// Moments entering the first-order far-field expansions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FarFieldMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl FarFieldMoments {
    pub fn of(mesh: &BoundaryMesh, source: &LayerSource) -> Self {
        let rule = gauss_fixed(16);
        let mut m = Self::default();
        for (k, pn) in mesh.panels().iter().enumerate() {
            for (t, w) in rule.unit_interval() {
                let y = pn.point(t);
                let n = pn.normal(t);
                let ds = w * pn.length;
                if let Some(q) = &source.single {
                    m.m0 += ds * q.coeffs[k];
                    m.m1 += ds * q.coeffs[k] * y.x;
                    m.m2 += ds * q.coeffs[k] * y.y;
                }
                if let Some(p) = &source.double {
                    let pv = p.eval_on_panel(pn, t);
                    m.d1 += ds * n.x * pv;
                    m.d2 += ds * n.y * pv;
                }
            }
        }
        m
    }

    /// Expected `(a, b1, b2, c)` of `a ln|x| + b·x/|x|² + c`.
    pub fn predicted(&self) -> [f64; 4] {
        [
            -INV_2PI * self.m0,
            INV_2PI * (self.m1 + self.d1),
            INV_2PI * (self.m2 + self.d2),
            0.0,
        ]
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FarFieldReport {
    pub ring_radius: f64,
    /// Fitted `(a, b1, b2, c)`.
    pub fitted: [f64; 4],
    pub predicted: [f64; 4],
    pub moments: FarFieldMoments,
    pub discrepancy: f64,
    pub condition: f64,
}

pub const RING_POINTS: usize = 64;

/// Fits `a ln|x| + b·x/|x|² + c` to the field on two concentric rings of radii
/// `ρ` and `2ρ` about the origin (a single ring cannot separate `a ln ρ` from `c`).
pub fn far_field(mesh: &BoundaryMesh, source: &LayerSource, ring_radius: f64) -> Result<FarFieldReport> {
    let reach = mesh.shape().radius_about_origin();
    let diam = mesh.shape().diameter();
    if !(ring_radius >= 5.0 * diam) || ring_radius <= reach {
        return Err(Error::InvalidInput(format!(
            "ring radius {ring_radius} must be at least 5 × diameter {diam:.3}"
        )));
    }
    let mut pts = Vec::with_capacity(2 * RING_POINTS);
    for rho in [ring_radius, 2.0 * ring_radius] {
        for k in 0..RING_POINTS {
            let th = 2.0 * PI * k as f64 / RING_POINTS as f64;
            pts.push(Vec2::new(rho * th.cos(), rho * th.sin()));
        }
    }
    let vals = source.values(mesh, &pts)?;
    let a = DMatrix::from_fn(pts.len(), 4, |i, j| {
        let x = pts[i];
        let r2 = x.norm_squared();
        match j {
            0 => 0.5 * r2.ln(),
            1 => x.x / r2,
            2 => x.y / r2,
            _ => 1.0,
        }
    });
    // column scaling keeps the condition number meaningful
    let scales: Vec<f64> = (0..4).map(|j| a.column(j).norm()).collect();
    let mut a_s = a.clone();
    for j in 0..4 {
        a_s.column_mut(j).scale_mut(1.0 / scales[j]);
    }
    let (x, cond) = least_squares(&a_s, &DVector::from_vec(vals))?;
    if cond > 1e12 {
        return Err(Error::IllConditionedFit(cond));
    }
    let fitted = [x[0] / scales[0], x[1] / scales[1], x[2] / scales[2], x[3] / scales[3]];
    let moments = FarFieldMoments::of(mesh, source);
    let predicted = moments.predicted();
    let discrepancy = fitted
        .iter()
        .zip(&predicted)
        .map(|(f, p)| (f - p).abs())
        .fold(0.0, f64::max);
    Ok(FarFieldReport {
        ring_radius,
        fitted,
        predicted,
        moments,
        discrepancy,
        condition: cond,
    })
}

/// Boundary data of a harmonic function on `Ω⁻`: Dirichlet value and interior
/// normal derivative `∇u·n⁻` at a boundary point with normal `n⁻`.
pub trait HarmonicData: Sync {
    fn dirichlet(&self, mesh: &BoundaryMesh, panel: usize, t: f64) -> Result<f64>;
    fn neumann(&self, mesh: &BoundaryMesh, panel: usize, t: f64) -> Result<f64>;
}

/// A harmonic function known in closed form through its value and gradient.
pub struct AnalyticHarmonic<F, G>
where
    F: Fn(&Vec2) -> f64 + Sync,
    G: Fn(&Vec2) -> Vec2 + Sync,
{
    pub value: F,
    pub gradient: G,
}

impl<F, G> HarmonicData for AnalyticHarmonic<F, G>
where
    F: Fn(&Vec2) -> f64 + Sync,
    G: Fn(&Vec2) -> Vec2 + Sync,
{
    fn dirichlet(&self, mesh: &BoundaryMesh, panel: usize, t: f64) -> Result<f64> {
        Ok((self.value)(&mesh.panel(panel).point(t)))
    }

    fn neumann(&self, mesh: &BoundaryMesh, panel: usize, t: f64) -> Result<f64> {
        let p = mesh.panel(panel);
        Ok((self.gradient)(&p.point(t)).dot(&p.normal(t)))
    }
}

impl HarmonicData for LayerSource {
    fn dirichlet(&self, mesh: &BoundaryMesh, panel: usize, t: f64) -> Result<f64> {
        Ok(self.boundary_traces(mesh, panel, t, Side::Interior)?.0)
    }

    fn neumann(&self, mesh: &BoundaryMesh, panel: usize, t: f64) -> Result<f64> {
        Ok(self.boundary_traces(mesh, panel, t, Side::Interior)?.1)
    }
}

/// `∫_Γ (γ_n u · γ_d v − γ_n v · γ_d u) ds` by panelwise Gauss quadrature.
pub fn greens_identity_check(mesh: &BoundaryMesh, u: &dyn HarmonicData, v: &dyn HarmonicData) -> Result<f64> {
    let rule = gauss_fixed(16);
    let parts: Vec<f64> = (0..mesh.num_panels())
        .into_par_iter()
        .map(|k| {
            let l = mesh.panel(k).length;
            let mut s = 0.0;
            for (t, w) in rule.unit_interval() {
                let du = u.dirichlet(mesh, k, t)?;
                let dv = v.dirichlet(mesh, k, t)?;
                let nu = u.neumann(mesh, k, t)?;
                let nv = v.neumann(mesh, k, t)?;
                s += w * l * (nu * dv - nv * du);
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// `|u(c) − mean of u on the circle |x−c| = r|` with `n` equispaced samples.
pub fn mean_value_defect(f: &dyn Fn(&Vec2) -> Result<f64>, c: &Vec2, r: f64, n: usize) -> Result<f64> {
    let mut s = 0.0;
    for k in 0..n {
        let th = 2.0 * PI * k as f64 / n as f64;
        s += f(&(c + Vec2::new(th.cos(), th.sin()) * r))?;
    }
    Ok((s / n as f64 - f(c)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{graded_mesh, PolygonalBoundary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize, beta: f64) -> BoundaryMesh {
        graded_mesh(&PolygonalBoundary::unit_square(), n, beta).unwrap()
    }

    #[test]
    fn circle_single_layer_of_one() {
        let r = 0.5;
        let mesh = BoundaryMesh::circle(Vec2::zeros(), r, 64).unwrap();
        let q = DensityVector::constant(&mesh, 1.0);
        let pts = [Vec2::new(0.1, 0.2), Vec2::new(-0.3, 0.05), Vec2::new(0.9, 0.4), Vec2::new(3.0, -2.0)];
        let f = eval_single(&mesh, &q, &pts).unwrap();
        for (x, v) in f.points.iter().zip(&f.values) {
            let exact = if x.norm() < r { -r * r.ln() } else { -r * x.norm().ln() };
            assert!((v - exact).abs() < 1e-10, "x={x:?} v={v} exact={exact}");
        }
        assert!(f.strategy.iter().all(|s| *s != NearStrategy::ClosedForm));
    }

    #[test]
    fn square_double_layer_of_one() {
        let mesh = square(4, 2.0);
        let p = TraceVector::constant(&mesh, 1.0);
        let f = eval_double(&mesh, &p, &[Vec2::new(0.5, 0.5), Vec2::new(0.01, 0.99), Vec2::new(1.2, 0.3)]).unwrap();
        assert!((f.values[0] + 1.0).abs() < 1e-10);
        assert!((f.values[1] + 1.0).abs() < 1e-10);
        assert!(f.values[2].abs() < 1e-10);
    }

    #[test]
    fn superposition_and_on_boundary_rejection() {
        let mesh = square(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q1 = DensityVector::new(DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0)));
        let q2 = DensityVector::new(DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0)));
        let q12 = DensityVector::new(&q1.coeffs + &q2.coeffs);
        let pts = [Vec2::new(0.3, 0.4), Vec2::new(1.5, 0.2)];
        let a = eval_single(&mesh, &q1, &pts).unwrap().values;
        let b = eval_single(&mesh, &q2, &pts).unwrap().values;
        let c = eval_single(&mesh, &q12, &pts).unwrap().values;
        for i in 0..2 {
            assert!((a[i] + b[i] - c[i]).abs() < 1e-13);
        }
        let e = eval_single(&mesh, &q1, &[Vec2::new(0.5, 0.0)]);
        assert!(matches!(e, Err(Error::PointOnBoundary(_, _))));
    }

    #[test]
    fn circle_neumann_traces_of_uniform_density() {
        let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 64).unwrap();
        let s = LayerSource::single(DensityVector::constant(&mesh, 1.0));
        let n_in = one_sided_trace(&mesh, &s, Side::Interior, TraceKind::Neumann, DEFAULT_EPS0).unwrap();
        let n_out = one_sided_trace(&mesh, &s, Side::Exterior, TraceKind::Neumann, DEFAULT_EPS0).unwrap();
        for (a, b) in n_in.iter().zip(&n_out) {
            assert!(a.abs() < 1e-6, "in {a}");
            assert!((b - 1.0).abs() < 1e-6, "out {b}");
        }
    }

    #[test]
    fn exact_boundary_traces_match_extrapolation() {
        let mesh = square(6, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = DensityVector::new(DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0)));
        let p = TraceVector::new(DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0)));
        let src = LayerSource::sum(q, p);
        for side in [Side::Interior, Side::Exterior] {
            let (d, n) = one_sided_traces(&mesh, &src, side, DEFAULT_EPS0).unwrap();
            for i in 0..mesh.num_panels() {
                let (de, ne) = src.boundary_traces(&mesh, i, 0.5, side).unwrap();
                assert!((d[i] - de).abs() < 1e-7, "dirichlet {i}: {} vs {de}", d[i]);
                assert!((n[i] - ne).abs() < 1e-6, "neumann {i}: {} vs {ne}", n[i]);
            }
        }
    }

    #[test]
    fn neville_is_exact_for_polynomials() {
        let xs = [1.0, 0.5, 0.25, 0.125, 0.0625];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x + x * x * x * x).collect();
        assert!((neville_at_zero(&xs, &ys) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn far_field_circle_uniform_density() {
        let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 64).unwrap();
        let s = LayerSource::single(DensityVector::constant(&mesh, 1.0));
        let rep = far_field(&mesh, &s, 5.0).unwrap();
        assert!((rep.fitted[0] + 0.5).abs() < 1e-8);
        assert!(rep.discrepancy < 1e-8);
    }

    #[test]
    fn far_field_of_double_layer_of_one_vanishes() {
        let mesh = square(8, 2.0);
        let d = LayerSource::double(TraceVector::constant(&mesh, 1.0));
        let rep = far_field(&mesh, &d, 10.0).unwrap();
        assert!(rep.fitted.iter().all(|v| v.abs() < 1e-8));
        assert!(rep.moments.d1.abs() < 1e-12 && rep.moments.d2.abs() < 1e-12);
    }

    #[test]
    fn zero_mass_density_has_no_log_term() {
        let mesh = square(8, 1.0);
        let mut q = DensityVector::new(DVector::from_fn(32, |i, _| (i as f64 * 0.7).sin()));
        let m = q.total_mass(&mesh) / 4.0;
        q.coeffs.add_scalar_mut(-m);
        let rep = far_field(&mesh, &LayerSource::single(q), 10.0).unwrap();
        assert!(rep.fitted[0].abs() < 1e-8);
        assert!(far_field(&mesh, &LayerSource::default(), 1.0).is_err());
    }

    #[test]
    fn greens_identity_for_harmonic_polynomials() {
        let mesh = square(8, 2.0);
        let u = AnalyticHarmonic {
            value: |x: &Vec2| x.x * x.x - x.y * x.y,
            gradient: |x: &Vec2| Vec2::new(2.0 * x.x, -2.0 * x.y),
        };
        let v = AnalyticHarmonic {
            value: |x: &Vec2| 2.0 * x.x * x.y,
            gradient: |x: &Vec2| Vec2::new(2.0 * x.y, 2.0 * x.x),
        };
        assert!(greens_identity_check(&mesh, &u, &v).unwrap().abs() < 1e-8);
        assert_eq!(greens_identity_check(&mesh, &u, &u).unwrap(), 0.0);
    }

    #[test]
    fn layer_potential_mean_value_property() {
        let mesh = square(6, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = DensityVector::new(DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0)));
        let src = LayerSource::single(q);
        let f = |x: &Vec2| src.value(&mesh, x);
        assert!(mean_value_defect(&f, &Vec2::new(0.5, 0.5), 0.2, 64).unwrap() < 1e-8);
        assert!(mean_value_defect(&f, &Vec2::new(2.0, 1.0), 0.5, 64).unwrap() < 1e-8);
    }
}
