//! Gauss–Legendre rules, closed-form segment integrals of the logarithmic
//! kernel and its normal derivative, and adaptive near-singular integration.
//!
//! On a segment `a → b` of length `L` with unit tangent `t` and normal
//! `n = −t⊥`, a target `x` has local coordinates `s = (x−a)·t`, `h = (x−a)·n`.
//! The single-layer kernel is `G(x−y) = −(1/2π) ln|x−y|` and the double-layer
//! kernel is `(1/2π) (x−y)·n(y) / |x−y|²`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::geometry::{perp, Vec2};

pub const MAX_ORDER: usize = 64;
pub const MAX_DEPTH: usize = 40;

const INV_2PI: f64 = 0.5 / PI;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + r * x);
        }
        acc * r
    }

    /// Nodes and weights mapped to `[0, 1]`.
    pub fn unit_interval(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (0.5 * (1.0 + x), 0.5 * w))
    }
}

fn compute_rule(n: usize) -> QuadratureRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rules() -> &'static [QuadratureRule] {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    RULES.get_or_init(|| (1..=MAX_ORDER).map(compute_rule).collect())
}

pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    Ok(gauss(n)?.clone())
}

/// Borrowed cached rule.
pub fn gauss(n: usize) -> Result<&'static QuadratureRule> {
    if n == 0 || n > MAX_ORDER {
        return Err(Error::UnsupportedOrder(n));
    }
    Ok(&rules()[n - 1])
}

pub(crate) fn gauss_fixed(n: usize) -> &'static QuadratureRule {
    &rules()[n - 1]
}

/// Restriction of a P0 or P1 basis function to a single panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Constant,
    /// `1 − σ/L`, equal to 1 at the segment start.
    LinearLeft,
    /// `σ/L`, equal to 1 at the segment end.
    LinearRight,
}

impl Basis {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Basis::Constant => 1.0,
            Basis::LinearLeft => 1.0 - t,
            Basis::LinearRight => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `G(x−y)`.
    Single,
    /// `(1/2π) (x−y)·n(y)/|x−y|²`, the double-layer kernel.
    Double,
}

/// Straight segment with its local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    pub length: f64,
    pub tangent: Vec2,
    pub normal: Vec2,
}

/// Values of `∫ k φ` for the three panel bases at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisTriple {
    pub constant: f64,
    pub left: f64,
    pub right: f64,
}

impl BasisTriple {
    pub fn get(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Constant => self.constant,
            Basis::LinearLeft => self.left,
            Basis::LinearRight => self.right,
        }
    }
}

/// Gradient analogue of [`BasisTriple`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradTriple {
    pub constant: Vec2,
    pub left: Vec2,
    pub right: Vec2,
}

fn f0(u: f64, h: f64) -> f64 {
    let w = u * u + h * h;
    if w == 0.0 {
        return 0.0;
    }
    let atan_term = if h == 0.0 { 0.0 } else { h * (u / h).atan() };
    0.5 * u * w.ln() - u + atan_term
}

fn f1(u: f64, h: f64) -> f64 {
    let w = u * u + h * h;
    if w == 0.0 {
        return 0.0;
    }
    0.25 * (w * w.ln() - u * u)
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self> {
        let d = b - a;
        let length = d.norm();
        if !(length > 0.0) {
            return Err(Error::DegenerateSegment);
        }
        let tangent = d / length;
        Ok(Self {
            a,
            b,
            length,
            tangent,
            normal: -perp(&tangent),
        })
    }

    pub fn local(&self, x: &Vec2) -> (f64, f64) {
        let d = x - self.a;
        (d.dot(&self.tangent), d.dot(&self.normal))
    }

    pub fn point(&self, t: f64) -> Vec2 {
        self.a + (self.b - self.a) * t
    }

    /// `(∫₀ᴸ ln|x−y(σ)| dσ, ∫₀ᴸ σ ln|x−y(σ)| dσ)`.
    pub fn log_moments(&self, x: &Vec2) -> (f64, f64) {
        let (s, h) = self.local(x);
        let l = self.length;
        let j0 = f0(l - s, h) - f0(-s, h);
        let j1 = s * j0 + f1(l - s, h) - f1(-s, h);
        (j0, j1)
    }

    /// Closed-form single-layer integrals `∫ G(x−y) φ(y) ds(y)`.
    pub fn single_layer(&self, x: &Vec2) -> BasisTriple {
        let (j0, j1) = self.log_moments(x);
        let l = self.length;
        BasisTriple {
            constant: -INV_2PI * j0,
            left: -INV_2PI * (j0 - j1 / l),
            right: -INV_2PI * j1 / l,
        }
    }

    /// Subtended angle of the segment seen from `x`, signed by the side; zero
    /// on the carrier line.
    pub fn subtended_angle(&self, x: &Vec2) -> f64 {
        let (s, h) = self.local(x);
        if h == 0.0 {
            return 0.0;
        }
        let l = self.length;
        (h * l).atan2(h * h + s * s - s * l)
    }

    /// Closed-form double-layer integrals `(1/2π) ∫ (x−y)·n/|x−y|² φ ds`.
    pub fn double_layer(&self, x: &Vec2) -> BasisTriple {
        let (s, h) = self.local(x);
        let l = self.length;
        if h == 0.0 {
            return BasisTriple {
                constant: 0.0,
                left: 0.0,
                right: 0.0,
            };
        }
        let a = (h * l).atan2(h * h + s * s - s * l);
        let ra2 = s * s + h * h;
        let rb2 = (l - s) * (l - s) + h * h;
        let b1 = s * a + 0.5 * h * (rb2.ln() - ra2.ln());
        BasisTriple {
            constant: INV_2PI * a,
            left: INV_2PI * (a - b1 / l),
            right: INV_2PI * b1 / l,
        }
    }

    /// Gradient in `x` of [`Segment::single_layer`]. Singular at the endpoints.
    pub fn single_layer_gradient(&self, x: &Vec2) -> GradTriple {
        let (s, h) = self.local(x);
        let l = self.length;
        let a = if h == 0.0 {
            0.0
        } else {
            (h * l).atan2(h * h + s * s - s * l)
        };
        let ra2 = s * s + h * h;
        let rb2 = (l - s) * (l - s) + h * h;
        let dln = 0.5 * (rb2.ln() - ra2.ln());
        let c_t = -dln;
        let c_n = a;
        let s_t = -(l - h * a) - s * dln;
        let s_n = s * a + h * dln;
        let t = self.tangent;
        let n = self.normal;
        let vec = |ct: f64, cn: f64| -(t * ct + n * cn) * INV_2PI;
        let constant = vec(c_t, c_n);
        let right = vec(s_t / l, s_n / l);
        GradTriple {
            constant,
            left: constant - right,
            right,
        }
    }

    /// Gradient in `x` of [`Segment::double_layer`]; requires `x` off the segment.
    pub fn double_layer_gradient(&self, x: &Vec2) -> GradTriple {
        let (s, h) = self.local(x);
        let l = self.length;
        let wa = Complex::new(s, h);
        let wb = Complex::new(s - l, h);
        let i0 = wb.inv() - wa.inv();
        let a = if h == 0.0 {
            0.0
        } else {
            (h * l).atan2(h * h + s * s - s * l)
        };
        let ra2 = s * s + h * h;
        let rb2 = (l - s) * (l - s) + h * h;
        let int_inv = Complex::new(0.5 * (ra2.ln() - rb2.ln()), -a);
        let i1 = Complex::new(l, 0.0) / wb - int_inv;
        let t = self.tangent;
        let n = self.normal;
        let vec = |z: Complex<f64>| (t * z.im + n * z.re) * INV_2PI;
        let constant = vec(i0);
        let right = vec(i1 / l);
        GradTriple {
            constant,
            left: constant - right,
            right,
        }
    }
}

/// Closed-form `∫_segment G(x−y) φ(y) ds(y)`.
pub fn segment_log_integral(a: &Vec2, b: &Vec2, x: &Vec2, basis: Basis) -> Result<f64> {
    Ok(Segment::new(*a, *b)?.single_layer(x).get(basis))
}

/// Closed-form double-layer segment integral.
pub fn segment_double_layer_integral(a: &Vec2, b: &Vec2, x: &Vec2, basis: Basis) -> Result<f64> {
    Ok(Segment::new(*a, *b)?.double_layer(x).get(basis))
}

/// `(∫₀ᴸ ln|s−σ| dσ, ∫₀ᴸ σ ln|s−σ| dσ)` for a target on the carrier line.
pub fn log_moments_1d(s: f64, l: f64) -> (f64, f64) {
    let j0 = f0(l - s, 0.0) - f0(-s, 0.0);
    let j1 = s * j0 + f1(l - s, 0.0) - f1(-s, 0.0);
    (j0, j1)
}

/// `∫_a^b ∫_c^d ln|σ−τ| dτ dσ` in closed form.
pub fn log_double_integral(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let h = |u: f64| {
        if u == 0.0 {
            0.0
        } else {
            0.5 * u * u * u.abs().ln() - 0.75 * u * u
        }
    };
    h(b - c) - h(a - c) - h(b - d) + h(a - d)
}

/// Adaptive Gauss integration of `f` over `[lo, hi]`.
///
/// The interval is first split at `split` (the parameter of the point nearest
/// to the target), then bisected until the 8-point estimate on a piece agrees
/// with the sum over its halves.
pub fn adaptive_integrate(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    split: Option<f64>,
    tol: f64,
) -> Result<f64> {
    let g = |t: f64| [f(t)];
    Ok(adaptive_integrate_vec::<1>(&g, lo, hi, split, tol)?[0])
}

/// Vector-valued form of [`adaptive_integrate`]; convergence is judged on the
/// largest component change.
pub fn adaptive_integrate_vec<const N: usize>(
    f: &dyn Fn(f64) -> [f64; N],
    lo: f64,
    hi: f64,
    split: Option<f64>,
    tol: f64,
) -> Result<[f64; N]> {
    let rule = gauss_fixed(8);
    let total = hi - lo;
    let mut pieces = vec![(lo, hi)];
    if let Some(c) = split {
        if c > lo && c < hi {
            pieces = vec![(lo, c), (c, hi)];
        }
    }
    let mut acc = [0.0; N];
    for (a, b) in pieces {
        let whole = integrate_vec(f, rule, a, b);
        let part = refine(f, rule, a, b, whole, tol, total, 0)?;
        for k in 0..N {
            acc[k] += part[k];
        }
    }
    Ok(acc)
}

fn integrate_vec<const N: usize>(f: &dyn Fn(f64) -> [f64; N], rule: &QuadratureRule, a: f64, b: f64) -> [f64; N] {
    integrate_vec_abs(f, rule, a, b).0
}

/// Gauss estimate together with `∫|f|` (the rounding scale of the estimate).
fn integrate_vec_abs<const N: usize>(
    f: &dyn Fn(f64) -> [f64; N],
    rule: &QuadratureRule,
    a: f64,
    b: f64,
) -> ([f64; N], [f64; N]) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut acc = [0.0; N];
    let mut mag = [0.0; N];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(c + r * x);
        for k in 0..N {
            acc[k] += w * v[k];
            mag[k] += w * v[k].abs();
        }
    }
    (acc.map(|v| v * r), mag.map(|v| v * r.abs()))
}

#[allow(clippy::too_many_arguments)]
fn refine<const N: usize>(
    f: &dyn Fn(f64) -> [f64; N],
    rule: &QuadratureRule,
    a: f64,
    b: f64,
    whole: [f64; N],
    tol: f64,
    total: f64,
    depth: usize,
) -> Result<[f64; N]> {
    let m = 0.5 * (a + b);
    let (left, lmag) = integrate_vec_abs(f, rule, a, m);
    let (right, rmag) = integrate_vec_abs(f, rule, m, b);
    let local_tol = tol * ((b - a) / total).max(1e-3);
    let mut ok = true;
    for k in 0..N {
        let diff = (left[k] + right[k] - whole[k]).abs();
        // kernel evaluations near the target carry relative noise well above
        // machine precision, so the estimate is only trusted to ~1e−13 of ∫|f|
        let floor = 1e-13 * (lmag[k] + rmag[k]);
        if diff > local_tol.max(floor) {
            ok = false;
        }
    }
    let mut sum = [0.0; N];
    if ok {
        for k in 0..N {
            sum[k] = left[k] + right[k];
        }
        return Ok(sum);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::NoConvergence(depth));
    }
    let l = refine(f, rule, a, m, left, tol, total, depth + 1)?;
    let r = refine(f, rule, m, b, right, tol, total, depth + 1)?;
    for k in 0..N {
        sum[k] = l[k] + r[k];
    }
    Ok(sum)
}

/// Adaptive evaluation of a segment integral for targets off the segment.
pub fn near_singular_quadrature(a: &Vec2, b: &Vec2, x: &Vec2, kernel: Kernel, tol: f64) -> Result<f64> {
    if !(1e-14..=1e-4).contains(&tol) {
        return Err(Error::InvalidInput(format!("tolerance {tol} outside [1e-14, 1e-4]")));
    }
    let seg = Segment::new(*a, *b)?;
    let (s, _) = seg.local(x);
    let foot = (s / seg.length).clamp(0.0, 1.0);
    let f = |t: f64| {
        let y = seg.point(t);
        let d = x - y;
        let r2 = d.norm_squared();
        let k = match kernel {
            Kernel::Single => -INV_2PI * 0.5 * r2.ln(),
            Kernel::Double => INV_2PI * d.dot(&seg.normal) / r2,
        };
        k * seg.length
    };
    adaptive_integrate(&f, 0.0, 1.0, Some(foot), tol)
}
