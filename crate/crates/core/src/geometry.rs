//! Polygonal Jordan curves, similarity maps and corner-graded boundary meshes.
//!
//! Orientation is counterclockwise throughout. The unit tangent `τ` follows the
//! orientation, the outward normal of the interior domain is `n⁻ = −τ⊥` and the
//! inward one is `n⁺ = τ⊥`, where `⊥` is the counterclockwise rotation by π/2.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Counterclockwise rotation by π/2.
#[inline]
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// A simple, counterclockwise polygon without collinear consecutive vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalBoundary {
    vertices: Vec<Vec2>,
    corner_angles: Vec<f64>,
    perimeter: f64,
}

impl PolygonalBoundary {
    /// Builds a polygon from an ordered vertex list.
    ///
    /// Repeated consecutive vertices and collinear vertices are merged, and a
    /// clockwise input is reversed.
    pub fn new(vertices: &[Vec2]) -> Result<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(Error::InvalidInput("non-finite vertex".into()));
            }
            if pts.last().is_none_or(|last| (last - v).norm() > 0.0) {
                pts.push(*v);
            }
        }
        while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() == 0.0 {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(Error::Degenerate);
        }
        let scale = pts.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);

        // merge collinear vertices until stable
        loop {
            let n = pts.len();
            if n < 3 {
                return Err(Error::Degenerate);
            }
            let mut removed = None;
            for i in 0..n {
                let a = pts[(i + n - 1) % n];
                let v = pts[i];
                let b = pts[(i + 1) % n];
                let e_in = v - a;
                let e_out = b - v;
                let c = cross(&e_in, &e_out);
                if c.abs() <= 1e-12 * e_in.norm() * e_out.norm() {
                    if e_in.dot(&e_out) > 0.0 {
                        removed = Some(i);
                        break;
                    }
                    // a spike folds the curve back onto itself
                    return Err(Error::SelfIntersecting((i + n - 1) % n, i));
                }
            }
            match removed {
                Some(i) => {
                    pts.remove(i);
                }
                None => break,
            }
        }

        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        check_simple(&pts, scale)?;

        let n = pts.len();
        let corner_angles = (0..n)
            .map(|i| {
                let a = pts[(i + n - 1) % n];
                let v = pts[i];
                let b = pts[(i + 1) % n];
                let e_in = v - a;
                let e_out = b - v;
                let turn = cross(&e_in, &e_out).atan2(e_in.dot(&e_out));
                PI - turn
            })
            .collect();
        let perimeter = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).sum();
        Ok(Self {
            vertices: pts,
            corner_angles,
            perimeter,
        })
    }

    /// Parses a JSON list of `[x, y]` pairs.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<[f64; 2]> =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let pts: Vec<Vec2> = raw.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        Self::new(&pts)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<[f64; 2]> = self.vertices.iter().map(|v| [v.x, v.y]).collect();
        serde_json::to_string(&raw).expect("vertex list serializes")
    }

    pub fn unit_square() -> Self {
        Self::new(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .expect("unit square is valid")
    }

    /// The six-vertex L-shape on `[0,2]²` with its reentrant corner at `(1,1)`.
    pub fn l_shape() -> Self {
        Self::new(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 2.0),
            Vec2::new(0.0, 2.0),
        ])
        .expect("L-shape is valid")
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Interior opening angle at each vertex, in `(0, 2π)`.
    pub fn corner_angles(&self) -> &[f64] {
        &self.corner_angles
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Indices of vertices with opening angle larger than π.
    pub fn reentrant_corners(&self) -> Vec<usize> {
        self.corner_angles
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > PI + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Largest distance of a vertex from the coordinate origin.
    pub fn radius_about_origin(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Crossing-number test; points on the boundary may go either way.
    pub fn contains(&self, x: &Vec2) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a.y > x.y) != (b.y > x.y) {
                let t = (x.y - a.y) / (b.y - a.y);
                if x.x < a.x + t * (b.x - a.x) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn distance_to_boundary(&self, x: &Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(x, &a, &b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn signed_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|i| cross(&pts[i], &pts[(i + 1) % n])).sum::<f64>()
}

pub fn point_segment_distance(x: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 {
        ((x - a).dot(&d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - (a + d * t)).norm()
}

pub fn segment_segment_distance(a0: &Vec2, a1: &Vec2, b0: &Vec2, b1: &Vec2) -> f64 {
    if segments_intersect(a0, a1, b0, b1, 0.0) {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

fn orient(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    cross(&(b - a), &(c - a))
}

fn segments_intersect(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2, tol: f64) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol))
        && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
    {
        return true;
    }
    let on = |a: &Vec2, b: &Vec2, p: &Vec2, d: f64| {
        d.abs() <= tol
            && p.x >= a.x.min(b.x) - tol
            && p.x <= a.x.max(b.x) + tol
            && p.y >= a.y.min(b.y) - tol
            && p.y <= a.y.max(b.y) + tol
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn check_simple(pts: &[Vec2], scale: f64) -> Result<()> {
    let n = pts.len();
    let tol = 1e-14 * scale * scale;
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(&pts[i], &pts[(i + 1) % n], &pts[j], &pts[(j + 1) % n], tol) {
                return Err(Error::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}

/// `x ↦ scale·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub translation: [f64; 2],
}

impl SimilarityTransform {
    pub fn new(scale: f64, translation: Vec2) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            scale,
            translation: [translation.x, translation.y],
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: [0.0, 0.0],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.translation == [0.0, 0.0]
    }

    pub fn apply(&self, x: &Vec2) -> Vec2 {
        x * self.scale + Vec2::new(self.translation[0], self.translation[1])
    }

    pub fn inverse(&self) -> Self {
        let s = 1.0 / self.scale;
        Self {
            scale: s,
            translation: [-self.translation[0] * s, -self.translation[1] * s],
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply(&Vec2::new(other.translation[0], other.translation[1]));
        Self {
            scale: self.scale * other.scale,
            translation: [t.x, t.y],
        }
    }
}

pub fn apply_similarity(boundary: &PolygonalBoundary, t: &SimilarityTransform) -> PolygonalBoundary {
    if t.is_identity() {
        return boundary.clone();
    }
    let corner_angles = boundary.corner_angles.clone();
    PolygonalBoundary {
        vertices: boundary.vertices.iter().map(|v| t.apply(v)).collect(),
        corner_angles,
        perimeter: boundary.perimeter * t.scale,
    }
}

/// Geometry of a single boundary panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PanelShape {
    Segment,
    /// Counterclockwise circular arc from `theta_start` to `theta_end`.
    Arc {
        center: Vec2,
        radius: f64,
        theta_start: f64,
        theta_end: f64,
    },
}

/// A boundary panel parametrized by arclength; `t ∈ [0,1]` runs from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub start: Vec2,
    pub end: Vec2,
    pub length: f64,
    pub shape: PanelShape,
    pub start_node: usize,
    pub end_node: usize,
}

impl Panel {
    pub fn segment(start: Vec2, end: Vec2, start_node: usize, end_node: usize) -> Self {
        Self {
            start,
            end,
            length: (end - start).norm(),
            shape: PanelShape::Segment,
            start_node,
            end_node,
        }
    }

    pub fn point(&self, t: f64) -> Vec2 {
        match self.shape {
            PanelShape::Segment => self.start + (self.end - self.start) * t,
            PanelShape::Arc {
                center,
                radius,
                theta_start,
                theta_end,
            } => {
                let th = theta_start + t * (theta_end - theta_start);
                center + Vec2::new(th.cos(), th.sin()) * radius
            }
        }
    }

    pub fn tangent(&self, t: f64) -> Vec2 {
        match self.shape {
            PanelShape::Segment => (self.end - self.start) / self.length,
            PanelShape::Arc {
                theta_start,
                theta_end,
                ..
            } => {
                let th = theta_start + t * (theta_end - theta_start);
                Vec2::new(-th.sin(), th.cos())
            }
        }
    }

    /// Outward normal `n⁻ = −τ⊥`.
    pub fn normal(&self, t: f64) -> Vec2 {
        -perp(&self.tangent(t))
    }

    pub fn midpoint(&self) -> Vec2 {
        self.point(0.5)
    }

    /// Upper bound on the distance between the panel and its chord.
    pub fn sagitta(&self) -> f64 {
        match self.shape {
            PanelShape::Segment => 0.0,
            PanelShape::Arc {
                radius,
                theta_start,
                theta_end,
                ..
            } => radius * (1.0 - (0.5 * (theta_end - theta_start)).cos()),
        }
    }

    /// Lower bound on the distance from `x` to the panel.
    pub fn distance_lower_bound(&self, x: &Vec2) -> f64 {
        (point_segment_distance(x, &self.start, &self.end) - self.sagitta()).max(0.0)
    }
}

/// The curve a mesh discretizes.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryShape {
    Polygon(PolygonalBoundary),
    Circle { center: Vec2, radius: f64 },
}

impl BoundaryShape {
    pub fn contains(&self, x: &Vec2) -> bool {
        match self {
            BoundaryShape::Polygon(p) => p.contains(x),
            BoundaryShape::Circle { center, radius } => (x - center).norm() < *radius,
        }
    }

    pub fn distance_to_boundary(&self, x: &Vec2) -> f64 {
        match self {
            BoundaryShape::Polygon(p) => p.distance_to_boundary(x),
            BoundaryShape::Circle { center, radius } => ((x - center).norm() - radius).abs(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            BoundaryShape::Polygon(p) => p.diameter(),
            BoundaryShape::Circle { radius, .. } => 2.0 * radius,
        }
    }

    pub fn radius_about_origin(&self) -> f64 {
        match self {
            BoundaryShape::Polygon(p) => p.radius_about_origin(),
            BoundaryShape::Circle { center, radius } => center.norm() + radius,
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            BoundaryShape::Polygon(p) => p.signed_area(),
            BoundaryShape::Circle { radius, .. } => PI * radius * radius,
        }
    }
}

/// Corner bookkeeping of a polygonal mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub node: usize,
    pub vertex: usize,
    pub opening: f64,
}

/// Ordered panel discretization of a closed curve.
///
/// Node `i` is the start of panel `i`; panel `i` ends at node `(i+1) mod N`, so
/// the number of nodes equals the number of panels.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    panels: Vec<Panel>,
    nodes: Vec<Vec2>,
    corners: Vec<Corner>,
    node_is_corner: Vec<bool>,
    grading: f64,
    perimeter: f64,
    shape: BoundaryShape,
}

/// Breakpoint `k` of an edge of length `len` split into `n` panels with the
/// symmetric power law `s_k = (len/2)(2k/n)^β`.
pub fn graded_breakpoint(len: f64, n: usize, beta: f64, k: usize) -> f64 {
    let nf = n as f64;
    if 2 * k <= n {
        0.5 * len * (2.0 * k as f64 / nf).powf(beta)
    } else {
        len - 0.5 * len * (2.0 * (n - k) as f64 / nf).powf(beta)
    }
}

pub fn graded_mesh(boundary: &PolygonalBoundary, panels_per_edge: usize, beta: f64) -> Result<BoundaryMesh> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::InvalidGrading(beta));
    }
    if panels_per_edge == 0 || (beta > 1.0 && panels_per_edge < 2) {
        return Err(Error::TooCoarse(panels_per_edge));
    }
    let n = panels_per_edge;
    let nv = boundary.len();
    let total = nv * n;
    let mut nodes = Vec::with_capacity(total);
    let mut node_is_corner = vec![false; total];
    let mut corners = Vec::with_capacity(nv);
    for (e, (a, b)) in boundary.edges().enumerate() {
        let len = (b - a).norm();
        let t = (b - a) / len;
        for k in 0..n {
            if k == 0 {
                node_is_corner[nodes.len()] = true;
                corners.push(Corner {
                    node: nodes.len(),
                    vertex: e,
                    opening: boundary.corner_angles()[e],
                });
                nodes.push(a);
            } else {
                nodes.push(a + t * graded_breakpoint(len, n, beta, k));
            }
        }
    }
    let panels = (0..total)
        .map(|i| {
            let j = (i + 1) % total;
            Panel::segment(nodes[i], nodes[j], i, j)
        })
        .collect::<Vec<_>>();
    let perimeter = boundary.perimeter();
    Ok(BoundaryMesh {
        panels,
        nodes,
        corners,
        node_is_corner,
        grading: beta,
        perimeter,
        shape: BoundaryShape::Polygon(boundary.clone()),
    })
}

impl BoundaryMesh {
    /// Uniform arc mesh of the circle, node 0 at angle 0.
    pub fn circle(center: Vec2, radius: f64, panels: usize) -> Result<Self> {
        if panels < 3 {
            return Err(Error::TooCoarse(panels));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("circle radius must be positive".into()));
        }
        let h = 2.0 * PI / panels as f64;
        let nodes: Vec<Vec2> = (0..panels)
            .map(|k| {
                let th = h * k as f64;
                center + Vec2::new(th.cos(), th.sin()) * radius
            })
            .collect();
        let panels_vec = (0..panels)
            .map(|k| Panel {
                start: nodes[k],
                end: nodes[(k + 1) % panels],
                length: radius * h,
                shape: PanelShape::Arc {
                    center,
                    radius,
                    theta_start: h * k as f64,
                    theta_end: h * (k + 1) as f64,
                },
                start_node: k,
                end_node: (k + 1) % panels,
            })
            .collect();
        Ok(Self {
            panels: panels_vec,
            nodes,
            corners: Vec::new(),
            node_is_corner: vec![false; panels],
            grading: 1.0,
            perimeter: 2.0 * PI * radius,
            shape: BoundaryShape::Circle { center, radius },
        })
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn panel(&self, i: usize) -> &Panel {
        &self.panels[i]
    }

    pub fn num_panels(&self) -> usize {
        self.panels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    pub fn node_is_corner(&self, i: usize) -> bool {
        self.node_is_corner[i]
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Exact arclength of the curve.
    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn shape(&self) -> &BoundaryShape {
        &self.shape
    }

    pub fn polygon(&self) -> Option<&PolygonalBoundary> {
        match &self.shape {
            BoundaryShape::Polygon(p) => Some(p),
            BoundaryShape::Circle { .. } => None,
        }
    }

    pub fn is_polygonal(&self) -> bool {
        matches!(self.shape, BoundaryShape::Polygon(_))
    }

    /// Midpoints with their arclength weights (panel lengths).
    pub fn collocation_points(&self) -> Vec<(Vec2, f64)> {
        self.panels.iter().map(|p| (p.midpoint(), p.length)).collect()
    }

    pub fn midpoint_normals(&self) -> Vec<Vec2> {
        self.panels.iter().map(|p| p.normal(0.5)).collect()
    }

    pub fn midpoint_tangents(&self) -> Vec<Vec2> {
        self.panels.iter().map(|p| p.tangent(0.5)).collect()
    }

    /// Distance from the midpoint of panel `i` to the nearest polygon corner.
    pub fn corner_distance(&self, i: usize) -> f64 {
        let m = self.panels[i].midpoint();
        self.corners
            .iter()
            .map(|c| (self.nodes[c.node] - m).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> Self {
        let map_panel = |p: &Panel| {
            let shape = match p.shape {
                PanelShape::Segment => PanelShape::Segment,
                PanelShape::Arc {
                    center,
                    radius,
                    theta_start,
                    theta_end,
                } => PanelShape::Arc {
                    center: t.apply(&center),
                    radius: radius * t.scale,
                    theta_start,
                    theta_end,
                },
            };
            Panel {
                start: t.apply(&p.start),
                end: t.apply(&p.end),
                length: p.length * t.scale,
                shape,
                start_node: p.start_node,
                end_node: p.end_node,
            }
        };
        let shape = match &self.shape {
            BoundaryShape::Polygon(p) => BoundaryShape::Polygon(apply_similarity(p, t)),
            BoundaryShape::Circle { center, radius } => BoundaryShape::Circle {
                center: t.apply(center),
                radius: radius * t.scale,
            },
        };
        Self {
            panels: self.panels.iter().map(map_panel).collect(),
            nodes: self.nodes.iter().map(|x| t.apply(x)).collect(),
            corners: self.corners.clone(),
            node_is_corner: self.node_is_corner.clone(),
            grading: self.grading,
            perimeter: self.perimeter * t.scale,
            shape,
        }
    }

    /// Writes `panel_id,x0,y0,x1,y1,nx,ny` with the midpoint normal.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["panel_id", "x0", "y0", "x1", "y1", "nx", "ny"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (i, p) in self.panels.iter().enumerate() {
            let n = p.normal(0.5);
            w.write_record(&[
                i.to_string(),
                p.start.x.to_string(),
                p.start.y.to_string(),
                p.end.x.to_string(),
                p.end.y.to_string(),
                n.x.to_string(),
                n.y.to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_square_angles_and_perimeter() {
        let sq = PolygonalBoundary::unit_square();
        assert_relative_eq!(sq.perimeter(), 4.0);
        for w in sq.corner_angles() {
            assert_relative_eq!(*w, PI / 2.0, epsilon = 1e-15);
        }
        let exterior: f64 = sq.corner_angles().iter().map(|w| PI - w).sum();
        assert_relative_eq!(exterior, 2.0 * PI, epsilon = 1e-14);
    }

    #[test]
    fn l_shape_has_one_reentrant_corner() {
        let l = PolygonalBoundary::l_shape();
        assert_eq!(l.reentrant_corners(), vec![3]);
        assert_eq!(l.vertices()[3], Vec2::new(1.0, 1.0));
        assert_relative_eq!(l.corner_angles()[3], 1.5 * PI, epsilon = 1e-14);
        assert_relative_eq!(l.signed_area(), 3.0);
    }

    #[test]
    fn clockwise_input_is_reversed() {
        let sq = PolygonalBoundary::new(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ])
        .unwrap();
        assert_relative_eq!(sq.signed_area(), 1.0);
    }

    #[test]
    fn collinear_and_repeated_vertices_merge() {
        let sq = PolygonalBoundary::new(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(0.5, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(sq.len(), 4);
    }

    #[test]
    fn rejects_bowtie_and_degenerate() {
        let bowtie = PolygonalBoundary::new(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]);
        assert!(matches!(bowtie, Err(Error::SelfIntersecting(_, _))));
        let line = PolygonalBoundary::new(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]);
        assert!(line.is_err());
        let two = PolygonalBoundary::new(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)]);
        assert_eq!(two, Err(Error::Degenerate));
    }

    #[test]
    fn uniform_square_mesh() {
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 4, 1.0).unwrap();
        assert_eq!(mesh.num_panels(), 16);
        for p in mesh.panels() {
            assert_relative_eq!(p.length, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn graded_first_breakpoint() {
        assert_relative_eq!(graded_breakpoint(1.0, 8, 2.0, 1), 1.0 / 32.0, epsilon = 1e-16);
        assert_relative_eq!(graded_breakpoint(1.0, 8, 2.0, 7), 1.0 - 1.0 / 32.0, epsilon = 1e-16);
        assert_relative_eq!(graded_breakpoint(1.0, 8, 2.0, 4), 0.5, epsilon = 1e-16);
    }

    #[test]
    fn grading_errors() {
        let sq = PolygonalBoundary::unit_square();
        assert_eq!(graded_mesh(&sq, 4, 0.5), Err(Error::InvalidGrading(0.5)));
        assert_eq!(graded_mesh(&sq, 1, 2.0), Err(Error::TooCoarse(1)));
        assert!(graded_mesh(&sq, 1, 1.0).is_ok());
    }

    #[test]
    fn normals_are_outward_and_rotated_tangents() {
        let mesh = graded_mesh(&PolygonalBoundary::l_shape(), 5, 3.0).unwrap();
        for p in mesh.panels() {
            let t = p.tangent(0.5);
            let n = p.normal(0.5);
            assert_eq!(n, -perp(&t));
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-15);
            assert!(n.dot(&t).abs() < 1e-15);
            let probe = p.midpoint() + n * 1e-6;
            assert!(!mesh.shape().contains(&probe));
        }
        let circle = BoundaryMesh::circle(Vec2::new(0.3, -0.2), 0.5, 16).unwrap();
        for p in circle.panels() {
            let probe = p.point(0.3) - p.normal(0.3) * 1e-6;
            assert!(circle.shape().contains(&probe));
        }
    }

    #[test]
    fn corner_panel_ratio_follows_grading_law() {
        let beta = 3.0;
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 16, beta).unwrap();
        let l0 = mesh.panel(0).length;
        let l1 = mesh.panel(1).length;
        assert_relative_eq!(l1 / l0, 2f64.powf(beta) - 1.0, epsilon = 1e-10);
    }

    #[test]
    fn similarity_maps_vertices_and_perimeter() {
        let l = PolygonalBoundary::l_shape();
        let t = SimilarityTransform::new(0.25, Vec2::new(1.0, 1.0)).unwrap();
        let mapped = apply_similarity(&l, &t);
        assert_relative_eq!(mapped.vertices()[3], Vec2::new(1.25, 1.25), epsilon = 1e-15);
        assert_relative_eq!(mapped.perimeter(), 0.25 * l.perimeter(), epsilon = 1e-15);
        assert_eq!(mapped.corner_angles(), l.corner_angles());
        let back = apply_similarity(&mapped, &t.inverse());
        for (a, b) in back.vertices().iter().zip(l.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
        let sq = PolygonalBoundary::unit_square();
        assert_eq!(apply_similarity(&sq, &SimilarityTransform::identity()), sq);
        let half = apply_similarity(&sq, &SimilarityTransform::new(0.5, Vec2::zeros()).unwrap());
        assert_relative_eq!(half.perimeter(), 2.0);
    }

    #[test]
    fn polygon_json_round_trip() {
        let l = PolygonalBoundary::l_shape();
        let back = PolygonalBoundary::from_json(&l.to_json()).unwrap();
        assert_eq!(back, l);
        assert!(PolygonalBoundary::from_json("[[0,0],[1]]").is_err());
    }

    #[test]
    fn mesh_csv_has_header_and_rows() {
        let mesh = graded_mesh(&PolygonalBoundary::unit_square(), 2, 1.0).unwrap();
        let mut buf = Vec::new();
        mesh.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "panel_id,x0,y0,x1,y1,nx,ny");
        assert_eq!(lines.len(), 9);
    }
}
