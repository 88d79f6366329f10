//! Area quadrature on polygons (ear clipping, uniform and corner refinement)
//! and on a few curved model domains.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{cross, PolygonalBoundary, Vec2};
use crate::quadrature::gauss_fixed;

/// Radon's 7-point rule, exact for degree 5: barycentric points and weights
/// (weights sum to 1).
fn radon7() -> [([f64; 3], f64); 7] {
    let s = 15f64.sqrt();
    let a1 = (6.0 - s) / 21.0;
    let b1 = (9.0 + 2.0 * s) / 21.0;
    let w1 = (155.0 - s) / 1200.0;
    let a2 = (6.0 + s) / 21.0;
    let b2 = (9.0 - 2.0 * s) / 21.0;
    let w2 = (155.0 + s) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([a1, a1, b1], w1),
        ([a1, b1, a1], w1),
        ([b1, a1, a1], w1),
        ([a2, a2, b2], w2),
        ([a2, b2, a2], w2),
        ([b2, a2, a2], w2),
    ]
}

/// Gauss points per direction of the graded rule on corner triangles.
const CORNER_ORDER: usize = 12;
const MAX_TRIANGLES: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triangle {
    pub a: Vec2,
    pub b: Vec2,
    pub c: Vec2,
    /// Number of corner refinements that produced this triangle.
    pub level: usize,
    /// `a` is a reentrant corner and the graded rule is used.
    pub at_corner: bool,
}

impl Triangle {
    pub fn area(&self) -> f64 {
        0.5 * cross(&(self.b - self.a), &(self.c - self.a))
    }

    fn longest_edge(&self) -> f64 {
        (self.b - self.a)
            .norm()
            .max((self.c - self.b).norm())
            .max((self.a - self.c).norm())
    }

    /// The four midpoint children; the first keeps vertex `a`.
    fn split(&self) -> [Triangle; 4] {
        let ab = 0.5 * (self.a + self.b);
        let bc = 0.5 * (self.b + self.c);
        let ca = 0.5 * (self.c + self.a);
        let t = |a, b, c| Triangle { a, b, c, level: self.level, at_corner: false };
        [t(self.a, ab, ca), t(ab, self.b, bc), t(ca, bc, self.c), t(ab, bc, ca)]
    }

    fn push_rule(&self, nodes: &mut Vec<Vec2>, weights: &mut Vec<f64>) {
        let area = self.area();
        if self.at_corner {
            // Duffy map collapsed at `a` with u = s³: an r^{−4/3} integrand
            // becomes smooth in (s, v)
            let g = gauss_fixed(CORNER_ORDER);
            for (s, ws) in g.unit_interval() {
                let u = s * s * s;
                for (v, wv) in g.unit_interval() {
                    let x = self.a + ((self.b - self.a) + (self.c - self.b) * v) * u;
                    nodes.push(x);
                    weights.push(ws * wv * 2.0 * area * u * 3.0 * s * s);
                }
            }
        } else {
            for (l, w) in radon7() {
                nodes.push(self.a * l[0] + self.b * l[1] + self.c * l[2]);
                weights.push(w * area);
            }
        }
    }
}

/// Nodes and weights of an area rule, with the triangles they came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainQuadrature {
    pub nodes: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub triangles: Vec<Triangle>,
    pub corner_levels: usize,
    /// Exact area of the domain.
    pub area: f64,
}

impl DomainQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Vec2) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn from_triangles(triangles: Vec<Triangle>, corner_levels: usize, area: f64) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for t in &triangles {
            t.push_rule(&mut nodes, &mut weights);
        }
        Self { nodes, weights, triangles, corner_levels, area }
    }

    /// Polar tensor rule on the disk: Gauss in `r` (composite over equal rings
    /// beyond 32 points), trapezoid in `θ`.
    pub fn disk(center: Vec2, radius: f64, nr: usize, ntheta: usize) -> Result<Self> {
        if !(radius > 0.0) || ntheta < 3 {
            return Err(Error::InvalidInput("disk rule needs radius > 0 and at least 3 angles".into()));
        }
        // more than 32 radial points are spread over equal rings
        let nr = nr.max(1);
        let rings = nr.div_ceil(32);
        let g = gauss_fixed(nr.div_ceil(rings));
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for ring in 0..rings {
            for (t, w) in g.unit_interval() {
                let r = radius * (ring as f64 + t) / rings as f64;
                let w = w / rings as f64;
                for k in 0..ntheta {
                    let th = 2.0 * PI * (k as f64 + 0.5) / ntheta as f64;
                    nodes.push(center + Vec2::new(th.cos(), th.sin()) * r);
                    weights.push(w * radius * r * 2.0 * PI / ntheta as f64);
                }
            }
        }
        Ok(Self {
            nodes,
            weights,
            triangles: Vec::new(),
            corner_levels: 0,
            area: PI * radius * radius,
        })
    }

    /// Circular sector `{r < radius, θ0 < θ < θ0 + opening}` about `vertex`,
    /// split into dyadic rings toward the vertex; the innermost disk uses
    /// `r = s³` grading.
    pub fn sector(vertex: Vec2, theta0: f64, opening: f64, radius: f64, levels: usize, n: usize) -> Result<Self> {
        if !(radius > 0.0) || !(opening > 0.0 && opening < 2.0 * PI) {
            return Err(Error::InvalidInput("sector needs radius > 0 and opening in (0, 2π)".into()));
        }
        let g = gauss_fixed(n.clamp(1, 64));
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut push = |r: f64, wr: f64| {
            for (t, wt) in g.unit_interval() {
                let th = theta0 + opening * t;
                nodes.push(vertex + Vec2::new(th.cos(), th.sin()) * r);
                weights.push(wr * wt * opening);
            }
        };
        let r_in = radius * 0.5f64.powi(levels as i32);
        for k in 0..levels {
            let hi = radius * 0.5f64.powi(k as i32);
            let lo = 0.5 * hi;
            for (t, w) in g.unit_interval() {
                let r = lo + (hi - lo) * t;
                push(r, w * (hi - lo) * r);
            }
        }
        for (s, w) in g.unit_interval() {
            let r = r_in * s * s * s;
            push(r, w * r_in * 3.0 * s * s * r);
        }
        Ok(Self {
            nodes,
            weights,
            triangles: Vec::new(),
            corner_levels: levels,
            area: 0.5 * opening * radius * radius,
        })
    }

    /// Annular sector `{r_in < r < r_out, θ0 < θ < θ0 + opening}`, tensor Gauss.
    pub fn annular_sector(vertex: Vec2, theta0: f64, opening: f64, r_in: f64, r_out: f64, n: usize) -> Result<Self> {
        if !(r_in >= 0.0 && r_out > r_in) {
            return Err(Error::InvalidInput("annular sector needs 0 <= r_in < r_out".into()));
        }
        let g = gauss_fixed(n.clamp(1, 64));
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (t, wr) in g.unit_interval() {
            let r = r_in + (r_out - r_in) * t;
            for (u, wt) in g.unit_interval() {
                let th = theta0 + opening * u;
                nodes.push(vertex + Vec2::new(th.cos(), th.sin()) * r);
                weights.push(wr * (r_out - r_in) * r * wt * opening);
            }
        }
        Ok(Self {
            nodes,
            weights,
            triangles: Vec::new(),
            corner_levels: 0,
            area: 0.5 * opening * (r_out * r_out - r_in * r_in),
        })
    }
}

/// Ear-clipping triangulation of a counterclockwise simple polygon.
pub fn ear_clip(vertices: &[Vec2]) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..vertices.len()).collect();
    let mut out = Vec::with_capacity(vertices.len().saturating_sub(2));
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ip, i, inx) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (vertices[ip], vertices[i], vertices[inx]);
            if cross(&(b - a), &(c - b)) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ip || j == i || j == inx {
                    return false;
                }
                let p = vertices[j];
                let d1 = cross(&(b - a), &(p - a));
                let d2 = cross(&(c - b), &(p - b));
                let d3 = cross(&(a - c), &(p - c));
                d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
            });
            if blocked {
                continue;
            }
            out.push([ip, i, inx]);
            idx.remove(k);
            clipped = true;
            break;
        }
        if !clipped {
            return Err(Error::MeshFailure("no ear found".into()));
        }
    }
    out.push([idx[0], idx[1], idx[2]]);
    Ok(out)
}

/// Triangulates a polygon, refines uniformly until every edge is at most
/// `h`, then refines `corner_levels` times toward each reentrant vertex.
pub fn triangulate(polygon: &PolygonalBoundary, h: f64, corner_levels: usize) -> Result<DomainQuadrature> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("target size {h} must be positive")));
    }
    let v = polygon.vertices();
    let estimate = polygon.signed_area() / (0.2 * h * h);
    if estimate > MAX_TRIANGLES as f64 {
        return Err(Error::MeshFailure(format!("target size {h} needs too many triangles")));
    }
    let reentrant: Vec<Vec2> = polygon.reentrant_corners().iter().map(|&i| v[i]).collect();
    let mut stack: Vec<Triangle> = ear_clip(v)?
        .into_iter()
        .map(|[a, b, c]| Triangle { a: v[a], b: v[b], c: v[c], level: 0, at_corner: false })
        .collect();
    let mut fine = Vec::new();
    while let Some(t) = stack.pop() {
        if t.longest_edge() > h {
            stack.extend(t.split());
        } else {
            fine.push(t);
        }
    }
    let mut out = Vec::with_capacity(fine.len());
    for t in fine {
        match reentrant.iter().find(|c| [t.a, t.b, t.c].contains(c)) {
            Some(c) => refine_toward(rotate_to(t, c), corner_levels, &mut out),
            None => out.push(t),
        }
    }
    // deterministic order independent of the refinement stack
    out.sort_by(|p, q| {
        let kp = (p.a + p.b + p.c) / 3.0;
        let kq = (q.a + q.b + q.c) / 3.0;
        kp.x.total_cmp(&kq.x).then(kp.y.total_cmp(&kq.y)).then(p.level.cmp(&q.level))
    });
    Ok(DomainQuadrature::from_triangles(out, corner_levels, polygon.signed_area()))
}

/// Same triangle with vertex `c` first, orientation kept.
fn rotate_to(t: Triangle, c: &Vec2) -> Triangle {
    if t.b == *c {
        Triangle { a: t.b, b: t.c, c: t.a, ..t }
    } else if t.c == *c {
        Triangle { a: t.c, b: t.a, c: t.b, ..t }
    } else {
        t
    }
}

fn refine_toward(t: Triangle, levels: usize, out: &mut Vec<Triangle>) {
    let mut cur = t;
    for l in 0..levels {
        let [keep, r1, r2, r3] = cur.split();
        for mut r in [r1, r2, r3] {
            r.level = l + 1;
            out.push(r);
        }
        cur = Triangle { level: l + 1, ..keep };
    }
    cur.at_corner = true;
    out.push(cur);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radon_rule_is_degree_five() {
        // ∫_T x^a y^b over the reference triangle = a! b! / (a+b+2)!
        let t = Triangle {
            a: Vec2::new(0.0, 0.0),
            b: Vec2::new(1.0, 0.0),
            c: Vec2::new(0.0, 1.0),
            level: 0,
            at_corner: false,
        };
        let mut nodes = Vec::new();
        let mut w = Vec::new();
        t.push_rule(&mut nodes, &mut w);
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let q: f64 = nodes.iter().zip(&w).map(|(x, w)| w * x.x.powi(a as i32) * x.y.powi(b as i32)).sum();
                assert_relative_eq!(q, fact(a) * fact(b) / fact(a + b + 2), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn square_area_and_moment() {
        for h in [0.5, 0.13, 0.05] {
            let q = triangulate(&PolygonalBoundary::unit_square(), h, 0).unwrap();
            assert!((q.weight_sum() - 1.0).abs() < 1e-10);
            let m = q.integrate(|x| x.x * x.x * x.y * x.y);
            assert!((m - 1.0 / 9.0).abs() < 1e-8);
        }
    }

    #[test]
    fn l_shape_area_with_corner_levels() {
        let q = triangulate(&PolygonalBoundary::l_shape(), 0.25, 6).unwrap();
        assert!((q.weight_sum() - 3.0).abs() < 1e-10);
        assert!((q.area - 3.0).abs() < 1e-14);
        let poly = PolygonalBoundary::l_shape();
        assert!(q.nodes.iter().all(|x| poly.contains(x) && poly.distance_to_boundary(x) > 0.0));
        assert!(q.triangles.iter().any(|t| t.at_corner && t.level == 6));
    }

    #[test]
    fn graded_corner_rule_integrates_singular_power() {
        // ∫ r^{−4/3} over the L-shape near (1,1): compare two corner depths
        let f = |x: &Vec2| (x - Vec2::new(1.0, 1.0)).norm().powf(-4.0 / 3.0);
        let a = triangulate(&PolygonalBoundary::l_shape(), 0.25, 8).unwrap().integrate(f);
        let b = triangulate(&PolygonalBoundary::l_shape(), 0.25, 12).unwrap().integrate(f);
        assert!((a - b).abs() < 1e-6 * b, "{a} {b}");
    }

    #[test]
    fn disk_and_sector_rules() {
        let d = DomainQuadrature::disk(Vec2::zeros(), 1.0, 8, 32).unwrap();
        assert!((d.weight_sum() - PI).abs() < 1e-12);
        assert!((d.integrate(|x| x.norm_squared()) - PI / 2.0).abs() < 1e-12);
        let s = DomainQuadrature::sector(Vec2::zeros(), 0.0, 1.5 * PI, 1.0, 8, 16).unwrap();
        assert!((s.weight_sum() - 0.75 * PI).abs() < 1e-12);
        let a = DomainQuadrature::annular_sector(Vec2::zeros(), 0.0, PI, 1.0, 2.0, 8).unwrap();
        assert!((a.weight_sum() - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn ear_clip_fails_gracefully_on_bad_orientation() {
        let cw = [Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0)];
        assert!(matches!(ear_clip(&cw), Err(Error::MeshFailure(_))));
        assert!(triangulate(&PolygonalBoundary::unit_square(), 0.0, 0).is_err());
    }
}
