//! Galerkin matrices of the single-layer operator `V`, the double-layer trace
//! `K`, its adjoint `K′` and the hypersingular operator `W`, with the dense
//! solves built on them.
//!
//! Densities live in P0 (one coefficient per panel), traces in continuous P1
//! (one coefficient per node). `K` is stored with P0 rows and P1 columns, so
//! `K′ = Kᵀ` exactly. With the double-layer kernel `(1/2π)(x−y)·n(y)/|x−y|²`
//! the principal-value trace of `𝒟1` equals `−1/2` at smooth points, the
//! Dirichlet traces satisfy `γ_d⁺𝒟p − γ_d⁻𝒟p = p`, and the Neumann trace of
//! `𝒟p` is `−W p` with `W = Cᵀ V C` positive semidefinite (`C` = arclength
//! derivative P1 → P0).

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{segment_segment_distance, BoundaryMesh, Panel, PanelShape, Vec2};
use crate::linalg::SymmetricFactor;
use crate::quadrature::{
    adaptive_integrate_vec, gauss_fixed, log_double_integral, log_moments_1d, BasisTriple, GradTriple,
    Segment,
};

const INV_2PI: f64 = 0.5 / PI;

/// Default lower bound on the Robin constant accepted by [`VSolver::new`].
pub const CAPACITY_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Space {
    P0Density,
    P1Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum OperatorKind {
    V,
    K,
    Kadj,
    W,
}

/// Piecewise-constant density, one coefficient per panel.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    pub coeffs: DVector<f64>,
}

/// Continuous piecewise-linear trace, one coefficient per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    pub coeffs: DVector<f64>,
}

impl DensityVector {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n))
    }

    pub fn constant(mesh: &BoundaryMesh, c: f64) -> Self {
        Self::new(DVector::from_element(mesh.num_panels(), c))
    }

    /// L² projection of `f(x, n(x))` onto P0 (panel averages).
    pub fn project(mesh: &BoundaryMesh, f: &(dyn Fn(&Vec2, &Vec2) -> f64 + Sync)) -> Self {
        let m = p0_moments(mesh, f);
        let coeffs = DVector::from_iterator(
            mesh.num_panels(),
            mesh.panels().iter().zip(m.iter()).map(|(p, v)| v / p.length),
        );
        Self::new(coeffs)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `⟨q, 1⟩ = ∫_Γ q ds`.
    pub fn total_mass(&self, mesh: &BoundaryMesh) -> f64 {
        self.coeffs
            .iter()
            .zip(mesh.panels())
            .map(|(q, p)| q * p.length)
            .sum()
    }
}

impl TraceVector {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n))
    }

    pub fn constant(mesh: &BoundaryMesh, c: f64) -> Self {
        Self::new(DVector::from_element(mesh.num_nodes(), c))
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &BoundaryMesh, f: &dyn Fn(&Vec2) -> f64) -> Self {
        Self::new(DVector::from_iterator(mesh.num_nodes(), mesh.nodes().iter().map(f)))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Value at parameter `t` of panel `i`.
    pub fn eval_on_panel(&self, panel: &Panel, t: f64) -> f64 {
        (1.0 - t) * self.coeffs[panel.start_node] + t * self.coeffs[panel.end_node]
    }
}

/// Dense Galerkin matrix with its space tags.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub kind: OperatorKind,
    pub row_space: Space,
    pub col_space: Space,
}

impl BoundaryOperatorMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols())
                .map(|j| format!("{:e}", self.matrix[(i, j)]))
                .collect();
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn arc_params(panel: &Panel) -> Option<(Vec2, f64, f64, f64)> {
    match panel.shape {
        PanelShape::Segment => None,
        PanelShape::Arc {
            center,
            radius,
            theta_start,
            theta_end,
        } => Some((center, radius, theta_start, theta_end)),
    }
}

fn on_circle(x: &Vec2, center: &Vec2, radius: f64) -> bool {
    ((x - center).norm() - radius).abs() <= 1e-12 * radius
}

/// Angle of `x` about `center`, shifted by a multiple of 2π so that it lies
/// within π of the arc midpoint.
fn unwrapped_angle(x: &Vec2, center: &Vec2, th0: f64, th1: f64) -> f64 {
    let d = x - center;
    let th = d.y.atan2(d.x);
    let mid = 0.5 * (th0 + th1);
    th - 2.0 * PI * ((th - mid) / (2.0 * PI)).round()
}

fn ln_sinc_half(delta: f64) -> f64 {
    let u = 0.5 * delta;
    if u.abs() < 1e-6 {
        -u * u / 6.0
    } else {
        (u.sin() / u).ln()
    }
}

const ADAPTIVE_TOL: f64 = 1e-14;

/// Integral over an arc panel of `k(d, n)`, `d = x − y`, `n = n(y)`, against
/// the constant and the right linear basis.
///
/// Everything is computed in the frame rotated so that `x` lies on the
/// positive first axis, with `d = (ρ−R + 2R sin²(δ/2), −R sin δ)` for
/// `δ = θ_y − θ_x`; the distance to the arc then carries no cancellation
/// noise and the adaptive rule sees a smooth integrand. Vector results are
/// returned in that rotated frame together with the rotation angle.
fn arc_integral<const N: usize>(
    panel: &Panel,
    x: &Vec2,
    k: &dyn Fn(&Vec2, &Vec2) -> [f64; N],
) -> Result<([[f64; N]; 2], f64)> {
    let (center, radius, th0, th1) = arc_params(panel).expect("arc panel");
    let l = panel.length;
    let thx = unwrapped_angle(x, &center, th0, th1);
    let dr = (x - center).norm() - radius;
    let dth = th1 - th0;
    let eval = |t: f64, delta: f64| {
        let sh = (0.5 * delta).sin();
        let d = Vec2::new(dr + 2.0 * radius * sh * sh, -radius * delta.sin());
        let n = Vec2::new(delta.cos(), delta.sin());
        let v = k(&d, &n);
        let mut out = [0.0; 2 * 8];
        for c in 0..N {
            out[c] = v[c] * l;
            out[N + c] = v[c] * l * t;
        }
        out
    };
    let mut res = [[0.0; N]; 2];
    if panel.distance_lower_bound(x) > 2.0 * l {
        let rule = gauss_fixed(16);
        for (t, w) in rule.unit_interval() {
            let v = eval(t, th0 + t * dth - thx);
            for c in 0..N {
                res[0][c] += w * v[c];
                res[1][c] += w * v[N + c];
            }
        }
        return Ok((res, thx));
    }
    // each side of the nearest point is integrated in the distance `u` from
    // it, so that `δ` keeps full relative precision where the kernel peaks
    let split = ((thx - th0) / dth).clamp(0.0, 1.0);
    let dc = th0 + split * dth - thx;
    let right = |u: f64| eval(split + u, dc + u * dth);
    let left = |u: f64| eval(split - u, dc - u * dth);
    for (f, len) in [(&right as &dyn Fn(f64) -> [f64; 16], 1.0 - split), (&left, split)] {
        if len <= 0.0 {
            continue;
        }
        let v = adaptive_integrate_vec::<16>(f, 0.0, len, None, ADAPTIVE_TOL)?;
        for c in 0..N {
            res[0][c] += v[c];
            res[1][c] += v[N + c];
        }
    }
    Ok((res, thx))
}

fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

fn triple(constant: f64, right: f64) -> BasisTriple {
    BasisTriple {
        constant,
        left: constant - right,
        right,
    }
}

/// `∫_panel G(x−y) φ(y) ds(y)` for the three panel bases; valid for any `x`
/// including points on the panel.
pub fn panel_single_layer(panel: &Panel, x: &Vec2) -> Result<BasisTriple> {
    let Some((center, radius, th0, th1)) = arc_params(panel) else {
        return Ok(Segment::new(panel.start, panel.end)?.single_layer(x));
    };
    if on_circle(x, &center, radius) {
        // ln|x−y| = ln(R|Δθ|) + ln sinc(Δθ/2)
        let thx = unwrapped_angle(x, &center, th0, th1);
        let l = panel.length;
        let (j0, j1) = log_moments_1d(radius * (thx - th0), l);
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        for (t, w) in gauss_fixed(16).unit_interval() {
            let th = th0 + t * (th1 - th0);
            let g = ln_sinc_half(thx - th);
            g0 += w * g * l;
            g1 += w * g * l * t;
        }
        return Ok(triple(-INV_2PI * (j0 + g0), -INV_2PI * (j1 / l + g1)));
    }
    let k = |d: &Vec2, _n: &Vec2| [-INV_2PI * 0.5 * d.norm_squared().ln()];
    let (r, _) = arc_integral::<1>(panel, x, &k)?;
    Ok(triple(r[0][0], r[1][0]))
}

/// Double-layer panel integral `(1/2π)∫ (x−y)·n/|x−y|² φ ds`, principal value
/// (zero self-contribution) for `x` on a straight panel.
pub fn panel_double_layer(panel: &Panel, x: &Vec2) -> Result<BasisTriple> {
    let Some((center, radius, _, _)) = arc_params(panel) else {
        return Ok(Segment::new(panel.start, panel.end)?.double_layer(x));
    };
    if on_circle(x, &center, radius) {
        let c = -panel.length / (4.0 * PI * radius);
        return Ok(triple(c, 0.5 * c));
    }
    let k = |d: &Vec2, n: &Vec2| [INV_2PI * d.dot(n) / d.norm_squared()];
    let (r, _) = arc_integral::<1>(panel, x, &k)?;
    Ok(triple(r[0][0], r[1][0]))
}

fn grad_triple(c: Vec2, r: Vec2) -> GradTriple {
    GradTriple {
        constant: c,
        left: c - r,
        right: r,
    }
}

/// Gradient in `x` of [`panel_single_layer`]; `x` must be off the panel.
pub fn panel_single_layer_gradient(panel: &Panel, x: &Vec2) -> Result<GradTriple> {
    if arc_params(panel).is_none() {
        return Ok(Segment::new(panel.start, panel.end)?.single_layer_gradient(x));
    }
    let k = |d: &Vec2, _n: &Vec2| {
        let r2 = d.norm_squared();
        [-INV_2PI * d.x / r2, -INV_2PI * d.y / r2]
    };
    let (r, th) = arc_integral::<2>(panel, x, &k)?;
    Ok(grad_triple(
        rotate(Vec2::new(r[0][0], r[0][1]), th),
        rotate(Vec2::new(r[1][0], r[1][1]), th),
    ))
}

/// Gradient in `x` of [`panel_double_layer`]; `x` must be off the panel.
pub fn panel_double_layer_gradient(panel: &Panel, x: &Vec2) -> Result<GradTriple> {
    if arc_params(panel).is_none() {
        return Ok(Segment::new(panel.start, panel.end)?.double_layer_gradient(x));
    }
    let k = |d: &Vec2, n: &Vec2| {
        let r2 = d.norm_squared();
        let dn = d.dot(n);
        let g = (n - d * (2.0 * dn / r2)) * (INV_2PI / r2);
        [g.x, g.y]
    };
    let (r, th) = arc_integral::<2>(panel, x, &k)?;
    Ok(grad_triple(
        rotate(Vec2::new(r[0][0], r[0][1]), th),
        rotate(Vec2::new(r[1][0], r[1][1]), th),
    ))
}

fn piece_distance(pi: &Panel, t0: f64, t1: f64, pj: &Panel) -> f64 {
    let a = pi.point(t0);
    let b = pi.point(t1);
    let sag = pi.sagitta() + pj.sagitta();
    (segment_segment_distance(&a, &b, &pj.start, &pj.end) - sag).max(0.0)
}

/// `∫_{panel i} f(x) ds(x)` for an integrand that is smooth except near
/// panel `j`: the outer panel is bisected until every piece is separated from
/// panel `j` by 1.5 times its length, which grades the pieces geometrically
/// toward a shared endpoint.
fn outer_integral<const N: usize>(
    pi: &Panel,
    pj: &Panel,
    f: &dyn Fn(&Vec2) -> Result<[f64; N]>,
) -> Result<[f64; N]> {
    let rule = gauss_fixed(8);
    let mut acc = [0.0; N];
    let mut stack = vec![(0.0f64, 1.0f64)];
    while let Some((t0, t1)) = stack.pop() {
        let len = pi.length * (t1 - t0);
        let far = piece_distance(pi, t0, t1, pj) >= 1.5 * len;
        if far || (t1 - t0) < 1e-13 {
            let c = 0.5 * (t0 + t1);
            let r = 0.5 * (t1 - t0);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let v = f(&pi.point(c + r * x))?;
                for k in 0..N {
                    acc[k] += w * r * pi.length * v[k];
                }
            }
        } else {
            let m = 0.5 * (t0 + t1);
            // right half first so the left half is integrated first
            stack.push((m, t1));
            stack.push((t0, m));
        }
    }
    Ok(acc)
}

fn v_entry(mesh: &BoundaryMesh, i: usize, j: usize) -> Result<f64> {
    let pi = mesh.panel(i);
    let pj = mesh.panel(j);
    if let (Some((c, r, a0, a1)), Some((_, _, b0, b1))) = (arc_params(pi), arc_params(pj)) {
        // both on one circle: exact logarithmic part plus a smooth tensor rule
        let mid_i = 0.5 * (a0 + a1);
        let mid_j = 0.5 * (b0 + b1);
        let shift = 2.0 * PI * ((mid_j - mid_i) / (2.0 * PI)).round();
        let (b0, b1) = (b0 - shift, b1 - shift);
        let exact = log_double_integral(r * a0, r * a1, r * b0, r * b1);
        let rule = gauss_fixed(16);
        let mut smooth = 0.0;
        for (s, ws) in rule.unit_interval() {
            let thx = a0 + s * (a1 - a0);
            for (t, wt) in rule.unit_interval() {
                let thy = b0 + t * (b1 - b0);
                smooth += ws * wt * ln_sinc_half(thx - thy);
            }
        }
        let _ = c;
        return Ok(-INV_2PI * (exact + smooth * pi.length * pj.length));
    }
    if i == j && pi.shape == PanelShape::Segment {
        let l = pi.length;
        return Ok(-INV_2PI * l * l * (l.ln() - 1.5));
    }
    let f = |x: &Vec2| Ok([panel_single_layer(pj, x)?.constant]);
    Ok(outer_integral::<1>(pi, pj, &f)?[0])
}

/// Galerkin matrix `V_ij = ∫∫ G(x−y) φ_i(x) φ_j(y)` on P0 × P0.
pub fn assemble_v(mesh: &BoundaryMesh) -> BoundaryOperatorMatrix {
    let n = mesh.num_panels();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| v_entry(mesh, i, j).expect("single-layer entry"))
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (o, v) in row.iter().enumerate() {
            m[(i, i + o)] = *v;
            m[(i + o, i)] = *v;
        }
    }
    BoundaryOperatorMatrix {
        matrix: m,
        kind: OperatorKind::V,
        row_space: Space::P0Density,
        col_space: Space::P0Density,
    }
}

fn coplanar(pi: &Panel, pk: &Panel) -> bool {
    if pi.shape != PanelShape::Segment || pk.shape != PanelShape::Segment {
        return false;
    }
    let t = (pi.end - pi.start) / pi.length;
    let n = Vec2::new(t.y, -t.x);
    let tol = 1e-14 * pi.length.max(pk.length);
    (pk.start - pi.start).dot(&n).abs() <= tol && (pk.end - pi.start).dot(&n).abs() <= tol
}

fn k_row(mesh: &BoundaryMesh, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; mesh.num_nodes()];
    let pi = mesh.panel(i);
    if let Some((_, r, _, _)) = arc_params(pi) {
        if mesh.panels().iter().all(|p| arc_params(p).is_some()) {
            let c = -pi.length / (4.0 * PI * r);
            for pk in mesh.panels() {
                row[pk.start_node] += 0.5 * c * pk.length;
                row[pk.end_node] += 0.5 * c * pk.length;
            }
            return row;
        }
    }
    for (k, pk) in mesh.panels().iter().enumerate() {
        if k == i || coplanar(pi, pk) {
            continue;
        }
        let f = |x: &Vec2| {
            let t = panel_double_layer(pk, x)?;
            Ok([t.left, t.right])
        };
        let v = outer_integral::<2>(pi, pk, &f).expect("double-layer entry");
        row[pk.start_node] += v[0];
        row[pk.end_node] += v[1];
    }
    row
}

/// Galerkin matrix of the principal-value double-layer trace, P0 test × P1 trial.
pub fn assemble_k(mesh: &BoundaryMesh) -> BoundaryOperatorMatrix {
    let n = mesh.num_panels();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| k_row(mesh, i)).collect();
    let mut m = DMatrix::zeros(n, mesh.num_nodes());
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    BoundaryOperatorMatrix {
        matrix: m,
        kind: OperatorKind::K,
        row_space: Space::P0Density,
        col_space: Space::P1Trace,
    }
}

/// Galerkin matrix of `K′`, P1 test × P0 trial; the transpose of [`assemble_k`].
pub fn assemble_kadj(mesh: &BoundaryMesh) -> BoundaryOperatorMatrix {
    kadj_from_k(&assemble_k(mesh))
}

pub fn kadj_from_k(k: &BoundaryOperatorMatrix) -> BoundaryOperatorMatrix {
    BoundaryOperatorMatrix {
        matrix: k.matrix.transpose(),
        kind: OperatorKind::Kadj,
        row_space: Space::P1Trace,
        col_space: Space::P0Density,
    }
}

/// Arclength derivative P1 → P0 as `(start, end, −1/L, +1/L)` per panel.
fn derivative_stencil(mesh: &BoundaryMesh) -> Vec<(usize, usize, f64)> {
    mesh.panels()
        .iter()
        .map(|p| (p.start_node, p.end_node, 1.0 / p.length))
        .collect()
}

/// Dense arclength-derivative matrix `C` (P0 rows, P1 columns).
pub fn derivative_matrix(mesh: &BoundaryMesh) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(mesh.num_panels(), mesh.num_nodes());
    for (k, (a, b, inv)) in derivative_stencil(mesh).into_iter().enumerate() {
        c[(k, a)] -= inv;
        c[(k, b)] += inv;
    }
    c
}

/// Hypersingular Galerkin matrix `W = Cᵀ V C` from an assembled `V`.
pub fn w_from_v(mesh: &BoundaryMesh, v: &BoundaryOperatorMatrix) -> BoundaryOperatorMatrix {
    let nn = mesh.num_nodes();
    let st = derivative_stencil(mesh);
    // node → [(panel, coefficient)]
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn];
    for (k, (a, b, inv)) in st.iter().enumerate() {
        adj[*a].push((k, -inv));
        adj[*b].push((k, *inv));
    }
    let vm = &v.matrix;
    let rows: Vec<Vec<f64>> = (0..nn)
        .into_par_iter()
        .map(|a| {
            (a..nn)
                .map(|b| {
                    let mut s = 0.0;
                    for (k, ca) in &adj[a] {
                        for (l, cb) in &adj[b] {
                            s += ca * cb * vm[(*k, *l)];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(nn, nn);
    for (a, row) in rows.iter().enumerate() {
        for (o, w) in row.iter().enumerate() {
            m[(a, a + o)] = *w;
            m[(a + o, a)] = *w;
        }
    }
    BoundaryOperatorMatrix {
        matrix: m,
        kind: OperatorKind::W,
        row_space: Space::P1Trace,
        col_space: Space::P1Trace,
    }
}

pub fn assemble_w(mesh: &BoundaryMesh) -> BoundaryOperatorMatrix {
    w_from_v(mesh, &assemble_v(mesh))
}

/// The four operators on one mesh.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub v: BoundaryOperatorMatrix,
    pub k: BoundaryOperatorMatrix,
    pub kadj: BoundaryOperatorMatrix,
    pub w: BoundaryOperatorMatrix,
}

impl OperatorSet {
    pub fn assemble(mesh: &BoundaryMesh) -> Self {
        let v = assemble_v(mesh);
        let k = assemble_k(mesh);
        let kadj = kadj_from_k(&k);
        let w = w_from_v(mesh, &v);
        Self { v, k, kadj, w }
    }
}

/// Diagonal of the P0 mass matrix (panel lengths).
pub fn p0_mass(mesh: &BoundaryMesh) -> DVector<f64> {
    DVector::from_iterator(mesh.num_panels(), mesh.panels().iter().map(|p| p.length))
}

/// `∫ φ_j ds` for each P1 hat function.
pub fn p1_mass_vector(mesh: &BoundaryMesh) -> DVector<f64> {
    let mut m = DVector::zeros(mesh.num_nodes());
    for p in mesh.panels() {
        m[p.start_node] += 0.5 * p.length;
        m[p.end_node] += 0.5 * p.length;
    }
    m
}

/// P1 × P1 mass matrix.
pub fn p1_mass_matrix(mesh: &BoundaryMesh) -> DMatrix<f64> {
    let n = mesh.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    for p in mesh.panels() {
        let (a, b, l) = (p.start_node, p.end_node, p.length);
        m[(a, a)] += l / 3.0;
        m[(b, b)] += l / 3.0;
        m[(a, b)] += l / 6.0;
        m[(b, a)] += l / 6.0;
    }
    m
}

/// Mixed mass matrix `∫ ψ_i φ_j`, P0 rows × P1 columns.
pub fn mixed_mass_matrix(mesh: &BoundaryMesh) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(mesh.num_panels(), mesh.num_nodes());
    for (k, p) in mesh.panels().iter().enumerate() {
        m[(k, p.start_node)] += 0.5 * p.length;
        m[(k, p.end_node)] += 0.5 * p.length;
    }
    m
}

/// `M01 p`: P0 moments of a P1 trace.
pub fn trace_moments(mesh: &BoundaryMesh, p: &TraceVector) -> DVector<f64> {
    DVector::from_iterator(
        mesh.num_panels(),
        mesh.panels()
            .iter()
            .map(|pn| 0.5 * pn.length * (p.coeffs[pn.start_node] + p.coeffs[pn.end_node])),
    )
}

/// `M01ᵀ q`: P1 moments of a P0 density.
pub fn density_moments(mesh: &BoundaryMesh, q: &DensityVector) -> DVector<f64> {
    let mut b = DVector::zeros(mesh.num_nodes());
    for (k, p) in mesh.panels().iter().enumerate() {
        b[p.start_node] += 0.5 * p.length * q.coeffs[k];
        b[p.end_node] += 0.5 * p.length * q.coeffs[k];
    }
    b
}

const LOAD_ORDER: usize = 16;

/// `∫_{panel k} f(x, n(x)) ds` for every panel.
pub fn p0_moments(mesh: &BoundaryMesh, f: &(dyn Fn(&Vec2, &Vec2) -> f64 + Sync)) -> DVector<f64> {
    let rule = gauss_fixed(LOAD_ORDER);
    let vals: Vec<f64> = mesh
        .panels()
        .par_iter()
        .map(|p| {
            rule.unit_interval()
                .map(|(t, w)| w * p.length * f(&p.point(t), &p.normal(t)))
                .sum()
        })
        .collect();
    DVector::from_vec(vals)
}

/// `∫ f(x, n(x)) φ_j ds` for every P1 hat function.
pub fn p1_moments(mesh: &BoundaryMesh, f: &(dyn Fn(&Vec2, &Vec2) -> f64 + Sync)) -> DVector<f64> {
    let rule = gauss_fixed(LOAD_ORDER);
    let per_panel: Vec<(f64, f64)> = mesh
        .panels()
        .par_iter()
        .map(|p| {
            let mut a = 0.0;
            let mut b = 0.0;
            for (t, w) in rule.unit_interval() {
                let v = w * p.length * f(&p.point(t), &p.normal(t));
                a += v * (1.0 - t);
                b += v * t;
            }
            (a, b)
        })
        .collect();
    let mut m = DVector::zeros(mesh.num_nodes());
    for (p, (a, b)) in mesh.panels().iter().zip(per_panel) {
        m[p.start_node] += a;
        m[p.end_node] += b;
    }
    m
}

/// `μ(p) = |Γ|⁻¹ ∫_Γ p ds`.
pub fn mean_value(mesh: &BoundaryMesh, p: &TraceVector) -> f64 {
    let m = p1_mass_vector(mesh);
    m.dot(&p.coeffs) / m.sum()
}

/// Factorized single-layer system with its Robin constant.
#[derive(Debug, Clone)]
pub struct VSolver {
    factor: SymmetricFactor,
    matrix: DMatrix<f64>,
    e_raw: DVector<f64>,
    raw_mass: f64,
}

impl VSolver {
    /// Factorizes `V` without enforcing the capacity margin.
    pub fn unchecked(v: &BoundaryOperatorMatrix, mesh: &BoundaryMesh) -> Result<Self> {
        let factor = SymmetricFactor::new(&v.matrix)?;
        let ones = p0_mass(mesh);
        let e_raw = factor.solve(&ones)?;
        let raw_mass = e_raw.dot(&ones);
        Ok(Self {
            factor,
            matrix: v.matrix.clone(),
            e_raw,
            raw_mass,
        })
    }

    /// Factorizes `V` and rejects curves whose Robin constant is below `margin`.
    pub fn new(v: &BoundaryOperatorMatrix, mesh: &BoundaryMesh, margin: f64) -> Result<Self> {
        let s = Self::unchecked(v, mesh)?;
        let c = s.c_gamma();
        if !(c >= margin) {
            return Err(Error::CapacityViolation { c_gamma: c, margin });
        }
        Ok(s)
    }

    /// `⟨e_raw, 1⟩` where `V e_raw = 1`.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn c_gamma(&self) -> f64 {
        1.0 / self.raw_mass
    }

    pub fn e_raw(&self) -> &DVector<f64> {
        &self.e_raw
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Solves `V q = b` for a P0 load vector `b`.
    pub fn solve_moments(&self, b: &DVector<f64>) -> Result<DensityVector> {
        let q = self.factor.solve(b)?;
        let bn = b.norm();
        if bn > 0.0 {
            let res = (&self.matrix * &q - b).norm() / bn;
            if res > 1e-8 {
                return Err(Error::SolveFailure(format!("residual {res:.3e}")));
            }
        }
        Ok(DensityVector::new(q))
    }

    /// Solves the Galerkin system with data given as a P1 trace.
    pub fn solve(&self, mesh: &BoundaryMesh, p: &TraceVector) -> Result<DensityVector> {
        self.solve_moments(&trace_moments(mesh, p))
    }
}

/// Galerkin solve of `V q = p` for a P1 trace `p`.
pub fn solve_v(v: &BoundaryOperatorMatrix, mesh: &BoundaryMesh, rhs: &TraceVector) -> Result<DensityVector> {
    if rhs.coeffs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite right-hand side".into()));
    }
    VSolver::new(v, mesh, CAPACITY_MARGIN)?.solve(mesh, rhs)
}

/// Lagrange-augmented hypersingular system `[W m; mᵀ 0]`.
#[derive(Debug, Clone)]
pub struct WSolver {
    factor: SymmetricFactor,
    matrix: DMatrix<f64>,
}

impl WSolver {
    pub fn new(w: &BoundaryOperatorMatrix, mesh: &BoundaryMesh) -> Result<Self> {
        let n = w.nrows();
        let m = p1_mass_vector(mesh);
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&w.matrix);
        for j in 0..n {
            a[(j, n)] = m[j];
            a[(n, j)] = m[j];
        }
        Ok(Self {
            factor: SymmetricFactor::new(&a)?,
            matrix: w.matrix.clone(),
        })
    }

    /// Solves `W p = b` on mean-zero traces for a P1 load vector `b`.
    pub fn solve_moments(&self, b: &DVector<f64>) -> Result<TraceVector> {
        let n = b.len();
        let scale: f64 = b.iter().map(|v| v.abs()).sum();
        if scale == 0.0 {
            return Ok(TraceVector::zeros(n));
        }
        let defect = b.sum().abs() / scale;
        if defect > 1e-8 {
            return Err(Error::IncompatibleData(defect));
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(b);
        let x = self.factor.solve(&rhs)?;
        let p = x.rows(0, n).into_owned();
        let res = (&self.matrix * &p - b).norm() / b.norm();
        if res > 1e-8 {
            return Err(Error::SolveFailure(format!("residual {res:.3e}")));
        }
        Ok(TraceVector::new(p))
    }

    /// Solves with data given as a P0 density.
    pub fn solve(&self, mesh: &BoundaryMesh, q: &DensityVector) -> Result<TraceVector> {
        self.solve_moments(&density_moments(mesh, q))
    }
}

/// Galerkin solve of `W p = q` with `μ(p) = 0`.
pub fn solve_w(w: &BoundaryOperatorMatrix, mesh: &BoundaryMesh, rhs: &DensityVector) -> Result<TraceVector> {
    WSolver::new(w, mesh)?.solve(mesh, rhs)
}

/// Startup check of the sign conventions on a small circle: `W·1 = 0` and the
/// principal-value trace of `𝒟1` equal to `−1/2`.
pub fn convention_self_test() -> Result<()> {
    let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 32)?;
    let ops = OperatorSet::assemble(&mesh);
    let ones = DVector::from_element(mesh.num_nodes(), 1.0);
    let w1 = (&ops.w.matrix * &ones).amax();
    let k1 = &ops.k.matrix * &ones + p0_mass(&mesh) * 0.5;
    if w1 > 1e-10 || k1.amax() > 1e-12 {
        return Err(Error::SolveFailure(format!(
            "sign convention self-test failed (W·1 {w1:.2e}, K·1 defect {:.2e})",
            k1.amax()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{graded_mesh, PolygonalBoundary};
    use crate::linalg::{asymmetry, symmetric_eigenvalues};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize, beta: f64) -> BoundaryMesh {
        graded_mesh(&PolygonalBoundary::unit_square(), n, beta).unwrap()
    }

    #[test]
    fn self_test_passes() {
        convention_self_test().unwrap();
    }

    #[test]
    fn v_symmetric_and_w_kills_constants() {
        let mesh = square(6, 2.0);
        let ops = OperatorSet::assemble(&mesh);
        assert!(asymmetry(&ops.v.matrix) < 1e-12);
        assert!(asymmetry(&ops.w.matrix) < 1e-12);
        let ones = DVector::from_element(mesh.num_nodes(), 1.0);
        assert!((&ops.w.matrix * &ones).amax() < 1e-10);
        assert_eq!(ops.kadj.matrix, ops.k.matrix.transpose());
    }

    #[test]
    fn square_k_rows_are_minus_half_mass() {
        let mesh = square(4, 1.0);
        let k = assemble_k(&mesh);
        let ones = DVector::from_element(mesh.num_nodes(), 1.0);
        let lhs = &k.matrix * &ones;
        let rhs = -0.5 * p0_mass(&mesh);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn segment_v_self_entry_matches_brute_force() {
        // off-diagonal entries of a straight edge are pure 1-D log integrals
        let mesh = square(4, 1.0);
        let v = assemble_v(&mesh);
        let h = 0.25;
        for j in 0..4 {
            let exact = -INV_2PI * log_double_integral(0.0, h, j as f64 * h, (j + 1) as f64 * h);
            assert!((v.matrix[(0, j)] - exact).abs() < 1e-14, "j={j}");
        }
    }

    #[test]
    fn circle_single_layer_eigenvalues() {
        let r = 0.5;
        let n = 256;
        let mesh = BoundaryMesh::circle(Vec2::zeros(), r, n).unwrap();
        let v = assemble_v(&mesh);
        let mass = p0_mass(&mesh);
        for k in 1..=4 {
            let c = DVector::from_iterator(
                n,
                mesh.panels().iter().map(|p| {
                    let m = p.midpoint();
                    (k as f64 * m.y.atan2(m.x)).cos()
                }),
            );
            let num = c.dot(&(&v.matrix * &c));
            let den = c.component_mul(&mass).dot(&c);
            let lam = num / den;
            let exact = r / (2.0 * k as f64);
            assert!(((lam - exact) / exact).abs() < 1e-3, "k={k} lam={lam}");
        }
    }

    #[test]
    fn circle_w_quadratic_form() {
        let r = 0.5;
        let mesh = BoundaryMesh::circle(Vec2::zeros(), r, 256).unwrap();
        let w = assemble_w(&mesh);
        for k in 1..=3 {
            let p = TraceVector::interpolate(&mesh, &|x| (k as f64 * x.y.atan2(x.x)).cos());
            let form = p.coeffs.dot(&(&w.matrix * &p.coeffs));
            // ⟨Wp,p⟩ = (k/2R)·∫cos² = πk/2
            let exact = PI * k as f64 / 2.0;
            assert!(((form - exact) / exact).abs() < 1e-2, "k={k} form={form}");
        }
    }

    #[test]
    fn circle_k_annihilates_cosines() {
        let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 64).unwrap();
        let k = assemble_k(&mesh);
        for f in 1..=3 {
            let p = TraceVector::interpolate(&mesh, &|x| (f as f64 * x.y.atan2(x.x)).cos());
            assert!((&k.matrix * &p.coeffs).amax() < 1e-3);
        }
    }

    #[test]
    fn unit_circle_v_nearly_singular() {
        for n in [16, 32, 64] {
            let mesh = BoundaryMesh::circle(Vec2::zeros(), 1.0, n).unwrap();
            let v = assemble_v(&mesh);
            let ev = symmetric_eigenvalues(&v.matrix);
            let min = ev.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
            assert!(min < 1e-12 * ev[ev.len() - 1], "n={n} min={min}");
            if let Ok(s) = VSolver::unchecked(&v, &mesh) {
                assert!(s.c_gamma().abs() < 1e-6);
            }
        }
    }

    #[test]
    fn w_is_positive_semidefinite() {
        let mesh = square(5, 2.0);
        let w = assemble_w(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = DVector::from_fn(mesh.num_nodes(), |_, _| rng.random_range(-1.0..1.0));
            assert!(p.dot(&(&w.matrix * &p)) >= 0.0);
        }
    }

    #[test]
    fn v_round_trip_and_circle_constant() {
        let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 64).unwrap();
        let v = assemble_v(&mesh);
        let solver = VSolver::new(&v, &mesh, CAPACITY_MARGIN).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q0 = DVector::from_fn(64, |_, _| rng.random_range(-1.0..1.0));
        let q = solver.solve_moments(&(&v.matrix * &q0)).unwrap();
        assert!((q.coeffs - &q0).norm() / q0.norm() < 1e-9);
        // V q = 1 gives q = 1/(c·2πR)
        let q = solve_v(&v, &mesh, &TraceVector::constant(&mesh, 1.0)).unwrap();
        let c = (2.0f64).ln() / (2.0 * PI);
        for qi in q.coeffs.iter() {
            assert!((qi * c * PI - 1.0).abs() < 1e-4);
        }
        let q = solve_v(&v, &mesh, &TraceVector::interpolate(&mesh, &|x: &Vec2| x.x)).unwrap();
        assert!(q.total_mass(&mesh).abs() < 1e-12);
    }

    #[test]
    fn capacity_violation_for_large_curve() {
        let mesh = square(4, 1.0).transformed(&crate::geometry::SimilarityTransform::new(4.0, Vec2::zeros()).unwrap());
        let v = assemble_v(&mesh);
        let e = solve_v(&v, &mesh, &TraceVector::constant(&mesh, 1.0));
        assert!(matches!(e, Err(Error::CapacityViolation { .. })));
    }

    #[test]
    fn w_round_trip_and_compatibility() {
        let mesh = square(6, 2.0);
        let w = assemble_w(&mesh);
        let solver = WSolver::new(&w, &mesh).unwrap();
        let m = p1_mass_vector(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p0 = DVector::from_fn(mesh.num_nodes(), |_, _| rng.random_range(-1.0..1.0));
        let mu = m.dot(&p0) / m.sum();
        p0.add_scalar_mut(-mu);
        let p = solver.solve_moments(&(&w.matrix * &p0)).unwrap();
        assert!((&p.coeffs - &p0).norm() / p0.norm() < 1e-9);
        assert!(mean_value(&mesh, &p).abs() < 1e-10);
        let bad = solve_w(&w, &mesh, &DensityVector::constant(&mesh, 1.0));
        assert!(matches!(bad, Err(Error::IncompatibleData(_))));
    }

    #[test]
    fn circle_w_solve_with_normal_data() {
        let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 128).unwrap();
        let w = assemble_w(&mesh);
        let b = p1_moments(&mesh, &|_x, n| n.x);
        let p = WSolver::new(&w, &mesh).unwrap().solve_moments(&b).unwrap();
        let cos = TraceVector::interpolate(&mesh, &|x| x.x / 0.5);
        let scale = p.coeffs.dot(&cos.coeffs) / cos.coeffs.norm_squared();
        assert!((&p.coeffs - &cos.coeffs * scale).amax() < 1e-3 * scale.abs());
    }

    #[test]
    fn mean_values() {
        let sq = square(8, 2.0);
        assert!((mean_value(&sq, &TraceVector::constant(&sq, 3.5)) - 3.5).abs() < 1e-14);
        assert!((mean_value(&sq, &TraceVector::interpolate(&sq, &|x: &Vec2| x.x)) - 0.5).abs() < 1e-14);
        let centered = sq.transformed(&crate::geometry::SimilarityTransform::new(1.0, Vec2::new(-0.5, -0.5)).unwrap());
        assert!(mean_value(&centered, &TraceVector::interpolate(&centered, &|x: &Vec2| x.x)).abs() < 1e-14);
    }

    #[test]
    fn assembly_is_thread_independent() {
        let mesh = square(5, 2.0);
        let a = OperatorSet::assemble(&mesh);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| OperatorSet::assemble(&mesh));
        assert_eq!(a.v.matrix, b.v.matrix);
        assert_eq!(a.k.matrix, b.k.matrix);
        assert_eq!(a.w.matrix, b.w.matrix);
    }

    #[test]
    fn arc_single_layer_on_and_off_circle_agree() {
        let mesh = BoundaryMesh::circle(Vec2::zeros(), 0.5, 16).unwrap();
        let p = mesh.panel(3);
        let x = mesh.panel(5).point(0.3);
        let on = panel_single_layer(p, &x).unwrap();
        let off = panel_single_layer(p, &(x * (1.0 + 1e-9))).unwrap();
        assert!((on.constant - off.constant).abs() < 1e-8);
        assert!((on.right - off.right).abs() < 1e-8);
        // self panel, on-circle target
        let x = p.point(0.4);
        let on = panel_single_layer(p, &x).unwrap();
        let off = panel_single_layer(p, &(x * (1.0 - 1e-10))).unwrap();
        assert!((on.constant - off.constant).abs() < 1e-8);
    }
}
