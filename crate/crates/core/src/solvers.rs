//! Indirect boundary-integral solvers: interior/exterior Dirichlet and
//! Neumann problems and the three transmission problems.
//!
//! Dirichlet problems use `u = 𝒮q` with `V q = p`; Neumann problems use
//! `u = 𝒟p` with `W p = ±q` on mean-zero traces (`γ_n⁻𝒟p = −Wp`,
//! `γ_n⁺𝒟p = Wp`).

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DVector;
use serde::Serialize;

use crate::boundary_ops::{
    assemble_v, density_moments, p0_moments, p1_moments, trace_moments, w_from_v, BoundaryOperatorMatrix,
    DensityVector, TraceVector, VSolver, WSolver, CAPACITY_MARGIN,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Vec2};
use crate::potentials::{one_sided_traces, FarFieldMoments, LayerSource, Side, DEFAULT_EPS0};
use crate::special_densities::{affine_double_basis, affine_single_basis, AffineDoubleBasis, AffineSingleBasis};

pub type ScalarFn = Arc<dyn Fn(&Vec2) -> f64 + Send + Sync>;
/// Boundary function of the point and the outward normal there.
pub type NormalFn = Arc<dyn Fn(&Vec2, &Vec2) -> f64 + Send + Sync>;

/// Dirichlet-type data (an `H^{1/2}`-side function).
#[derive(Clone)]
pub enum DirichletData {
    Trace(TraceVector),
    Function(ScalarFn),
    /// Precomputed P0 load vector `∫ p φ_k ds`.
    Moments(DVector<f64>),
}

/// Neumann-type data (an `H^{−1/2}`-side function).
#[derive(Clone)]
pub enum NeumannData {
    Density(DensityVector),
    Function(NormalFn),
    /// Precomputed P1 load vector `∫ q ψ_j ds`.
    Moments(DVector<f64>),
}

impl DirichletData {
    fn load(&self, mesh: &BoundaryMesh) -> DVector<f64> {
        match self {
            DirichletData::Trace(p) => trace_moments(mesh, p),
            DirichletData::Function(f) => p0_moments(mesh, &|x, _| f(x)),
            DirichletData::Moments(b) => b.clone(),
        }
    }

    fn at_midpoints(&self, mesh: &BoundaryMesh) -> Option<Vec<f64>> {
        match self {
            DirichletData::Trace(p) => Some(mesh.panels().iter().map(|pn| p.eval_on_panel(pn, 0.5)).collect()),
            DirichletData::Function(f) => Some(mesh.panels().iter().map(|pn| f(&pn.point(0.5))).collect()),
            DirichletData::Moments(_) => None,
        }
    }
}

impl NeumannData {
    fn load(&self, mesh: &BoundaryMesh) -> DVector<f64> {
        match self {
            NeumannData::Density(q) => density_moments(mesh, q),
            NeumannData::Function(f) => p1_moments(mesh, &|x, n| f(x, n)),
            NeumannData::Moments(b) => b.clone(),
        }
    }

    fn at_midpoints(&self, mesh: &BoundaryMesh) -> Option<Vec<f64>> {
        match self {
            NeumannData::Density(q) => Some(q.coeffs.iter().copied().collect()),
            NeumannData::Function(f) => Some(
                mesh.panels()
                    .iter()
                    .map(|pn| f(&pn.point(0.5), &pn.normal(0.5)))
                    .collect(),
            ),
            NeumannData::Moments(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Problem {
    InteriorDirichlet,
    ExteriorDirichlet,
    InteriorNeumann,
    ExteriorNeumann,
    Transmission1,
    Transmission2,
    Transmission3,
}

impl Problem {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "int-dir" => Problem::InteriorDirichlet,
            "ext-dir" => Problem::ExteriorDirichlet,
            "int-neu" => Problem::InteriorNeumann,
            "ext-neu" => Problem::ExteriorNeumann,
            "trans1" => Problem::Transmission1,
            "trans2" => Problem::Transmission2,
            "trans3" => Problem::Transmission3,
            _ => return Err(Error::InvalidInput(format!("unknown problem '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    Single,
    Double,
    SingleAffine,
    DoubleAffine,
    Sum,
}

/// Boundary condition a solution claims to satisfy, checked at panel midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    Dirichlet(Side),
    Neumann(Side),
    /// `γ_d⁺u − γ_d⁻u`.
    DirichletJump,
    /// `γ_n⁺u + γ_n⁻u`.
    NeumannJump,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExteriorFarField {
    /// Coefficient of `ln|x|`.
    pub log_coefficient: f64,
    /// Coefficients of `x/|x|²`.
    pub dipole: [f64; 2],
    /// Coordinates of the affine correction in the computed `{q_j}` (single
    /// layer) or `{p_j}` (double layer) basis.
    pub affine_coordinates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResidual {
    pub condition: Condition,
    pub max_abs: f64,
    pub max_data: f64,
}

#[derive(Debug, Clone)]
pub struct BiesSolution {
    pub problem: Problem,
    pub representation: Representation,
    pub source: LayerSource,
    pub far_field: ExteriorFarField,
    /// Relative residual of the Galerkin system.
    pub algebraic_residual: f64,
    targets: Vec<(Condition, Vec<f64>)>,
}

impl BiesSolution {
    pub fn value(&self, mesh: &BoundaryMesh, x: &Vec2) -> Result<f64> {
        self.source.value(mesh, x)
    }

    pub fn values(&self, mesh: &BoundaryMesh, pts: &[Vec2]) -> Result<Vec<f64>> {
        self.source.values(mesh, pts)
    }

    pub fn density(&self) -> Option<&DensityVector> {
        self.source.single.as_ref()
    }

    pub fn trace(&self) -> Option<&TraceVector> {
        self.source.double.as_ref()
    }

    pub fn conditions(&self) -> impl Iterator<Item = Condition> + '_ {
        self.targets.iter().map(|(c, _)| *c)
    }

    /// Re-extracts the traces of the representation and measures every
    /// prescribed condition at the panel midpoints. Conditions whose data were
    /// given only as load vectors are skipped.
    pub fn boundary_residuals(&self, mesh: &BoundaryMesh) -> Result<Vec<ConditionResidual>> {
        if self.targets.is_empty() {
            return Ok(Vec::new());
        }
        let need_in = self.targets.iter().any(|(c, _)| !matches!(c, Condition::Dirichlet(Side::Exterior) | Condition::Neumann(Side::Exterior)));
        let need_out = self.targets.iter().any(|(c, _)| !matches!(c, Condition::Dirichlet(Side::Interior) | Condition::Neumann(Side::Interior)));
        let inside = if need_in {
            Some(one_sided_traces(mesh, &self.source, Side::Interior, DEFAULT_EPS0)?)
        } else {
            None
        };
        let outside = if need_out {
            Some(one_sided_traces(mesh, &self.source, Side::Exterior, DEFAULT_EPS0)?)
        } else {
            None
        };
        let n = mesh.num_panels();
        let mut out = Vec::new();
        for (cond, target) in &self.targets {
            let got: Vec<f64> = match cond {
                Condition::Dirichlet(Side::Interior) => inside.as_ref().unwrap().0.clone(),
                Condition::Dirichlet(Side::Exterior) => outside.as_ref().unwrap().0.clone(),
                Condition::Neumann(Side::Interior) => inside.as_ref().unwrap().1.clone(),
                Condition::Neumann(Side::Exterior) => outside.as_ref().unwrap().1.clone(),
                Condition::DirichletJump => {
                    let (i, o) = (inside.as_ref().unwrap(), outside.as_ref().unwrap());
                    (0..n).map(|k| o.0[k] - i.0[k]).collect()
                }
                Condition::NeumannJump => {
                    let (i, o) = (inside.as_ref().unwrap(), outside.as_ref().unwrap());
                    (0..n).map(|k| o.1[k] + i.1[k]).collect()
                }
            };
            let max_abs = got.iter().zip(target).map(|(g, t)| (g - t).abs()).fold(0.0, f64::max);
            let max_data = target.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            out.push(ConditionResidual { condition: *cond, max_abs, max_data });
        }
        Ok(out)
    }
}

/// Mesh with its assembled `V`, `W` and lazily built factorizations and bases.
pub struct BieSystem {
    pub mesh: BoundaryMesh,
    pub v: BoundaryOperatorMatrix,
    pub w: BoundaryOperatorMatrix,
    pub margin: f64,
    vsolver: OnceLock<VSolver>,
    wsolver: OnceLock<WSolver>,
    single_basis: OnceLock<AffineSingleBasis>,
    double_basis: OnceLock<AffineDoubleBasis>,
}

fn lazily<T>(cell: &OnceLock<T>, make: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = make()?;
    let _ = cell.set(v);
    Ok(cell.get().expect("cell set above"))
}

fn p0_residual(v: &BoundaryOperatorMatrix, q: &DensityVector, b: &DVector<f64>) -> f64 {
    let bn = b.norm();
    if bn == 0.0 {
        return 0.0;
    }
    (&v.matrix * &q.coeffs - b).norm() / bn
}

fn p1_residual(w: &BoundaryOperatorMatrix, p: &TraceVector, b: &DVector<f64>) -> f64 {
    let bn = b.norm();
    if bn == 0.0 {
        return 0.0;
    }
    (&w.matrix * &p.coeffs - b).norm() / bn
}

impl BieSystem {
    pub fn assemble(mesh: BoundaryMesh) -> Self {
        let v = assemble_v(&mesh);
        let w = w_from_v(&mesh, &v);
        Self::from_operators(mesh, v, w)
    }

    pub fn from_operators(mesh: BoundaryMesh, v: BoundaryOperatorMatrix, w: BoundaryOperatorMatrix) -> Self {
        Self {
            mesh,
            v,
            w,
            margin: CAPACITY_MARGIN,
            vsolver: OnceLock::new(),
            wsolver: OnceLock::new(),
            single_basis: OnceLock::new(),
            double_basis: OnceLock::new(),
        }
    }

    pub fn vsolver(&self) -> Result<&VSolver> {
        lazily(&self.vsolver, || VSolver::new(&self.v, &self.mesh, self.margin))
    }

    pub fn wsolver(&self) -> Result<&WSolver> {
        lazily(&self.wsolver, || WSolver::new(&self.w, &self.mesh))
    }

    pub fn single_basis(&self) -> Result<&AffineSingleBasis> {
        lazily(&self.single_basis, || affine_single_basis(&self.v, &self.mesh))
    }

    pub fn double_basis(&self) -> Result<&AffineDoubleBasis> {
        lazily(&self.double_basis, || affine_double_basis(&self.w, &self.mesh))
    }

    fn solve_single(&self, data: &DirichletData) -> Result<(DensityVector, f64)> {
        let b = data.load(&self.mesh);
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite boundary data".into()));
        }
        let q = self.vsolver()?.solve_moments(&b)?;
        let r = p0_residual(&self.v, &q, &b);
        Ok((q, r))
    }

    fn solve_double(&self, b: DVector<f64>) -> Result<(TraceVector, f64)> {
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite boundary data".into()));
        }
        let p = self.wsolver()?.solve_moments(&b)?;
        let r = p1_residual(&self.w, &p, &b);
        Ok((p, r))
    }

    fn far_field_of(&self, source: &LayerSource, affine_coordinates: Vec<f64>) -> ExteriorFarField {
        let pred = FarFieldMoments::of(&self.mesh, source).predicted();
        ExteriorFarField {
            log_coefficient: pred[0],
            dipole: [pred[1], pred[2]],
            affine_coordinates,
        }
    }

    fn finish(
        &self,
        problem: Problem,
        representation: Representation,
        source: LayerSource,
        affine: Vec<f64>,
        algebraic_residual: f64,
        targets: Vec<(Condition, Option<Vec<f64>>)>,
    ) -> BiesSolution {
        let far_field = self.far_field_of(&source, affine);
        BiesSolution {
            problem,
            representation,
            source,
            far_field,
            algebraic_residual,
            targets: targets.into_iter().filter_map(|(c, t)| t.map(|t| (c, t))).collect(),
        }
    }

    pub fn interior_dirichlet(&self, p: &DirichletData) -> Result<BiesSolution> {
        let (q, r) = self.solve_single(p)?;
        Ok(self.finish(
            Problem::InteriorDirichlet,
            Representation::Single,
            LayerSource::single(q),
            Vec::new(),
            r,
            vec![(Condition::Dirichlet(Side::Interior), p.at_midpoints(&self.mesh))],
        ))
    }

    /// Single-layer solution outside, with its `ln|x|` coefficient and the
    /// `⟨·, V·⟩`-orthogonal component of the density along `{q_j}`.
    pub fn exterior_dirichlet(&self, p: &DirichletData) -> Result<BiesSolution> {
        let (q, r) = self.solve_single(p)?;
        let basis = self.single_basis()?;
        let vq = &self.v.matrix * &q.coeffs;
        let coords = basis.q.iter().map(|qj| qj.coeffs.dot(&vq)).collect();
        Ok(self.finish(
            Problem::ExteriorDirichlet,
            Representation::SingleAffine,
            LayerSource::single(q),
            coords,
            r,
            vec![(Condition::Dirichlet(Side::Exterior), p.at_midpoints(&self.mesh))],
        ))
    }

    pub fn interior_neumann(&self, q: &NeumannData) -> Result<BiesSolution> {
        let (p, r) = self.solve_double(-q.load(&self.mesh))?;
        Ok(self.finish(
            Problem::InteriorNeumann,
            Representation::Double,
            LayerSource::double(p),
            Vec::new(),
            r,
            vec![(Condition::Neumann(Side::Interior), q.at_midpoints(&self.mesh))],
        ))
    }

    /// Double-layer solution outside (decaying, no `ln|x|` term) with the
    /// `W`-orthogonal component of the trace along `{p_j}`.
    pub fn exterior_neumann(&self, q: &NeumannData) -> Result<BiesSolution> {
        let (p, r) = self.solve_double(q.load(&self.mesh))?;
        let basis = self.double_basis()?;
        let wp = &self.w.matrix * &p.coeffs;
        let coords = basis.p.iter().map(|pj| pj.coeffs.dot(&wp)).collect();
        Ok(self.finish(
            Problem::ExteriorNeumann,
            Representation::DoubleAffine,
            LayerSource::double(p),
            coords,
            r,
            vec![(Condition::Neumann(Side::Exterior), q.at_midpoints(&self.mesh))],
        ))
    }

    /// `u = 𝒮q`, directly from the Neumann jump.
    pub fn transmission_p1_jump(&self, q: &DensityVector) -> BiesSolution {
        self.finish(
            Problem::Transmission1,
            Representation::Single,
            LayerSource::single(q.clone()),
            Vec::new(),
            0.0,
            vec![
                (Condition::DirichletJump, Some(vec![0.0; self.mesh.num_panels()])),
                (Condition::NeumannJump, Some(q.coeffs.iter().copied().collect())),
            ],
        )
    }

    /// `u = 𝒮q̄` with `V q̄ = p`, the common Dirichlet trace.
    pub fn transmission_p1_trace(&self, p: &DirichletData) -> Result<BiesSolution> {
        let (q, r) = self.solve_single(p)?;
        let mut s = self.transmission_p1_jump(&q);
        s.algebraic_residual = r;
        if let Some(t) = p.at_midpoints(&self.mesh) {
            s.targets.push((Condition::Dirichlet(Side::Interior), t.clone()));
            s.targets.push((Condition::Dirichlet(Side::Exterior), t));
        }
        Ok(s)
    }

    /// `u = 𝒟p`, directly from the Dirichlet jump.
    pub fn transmission_p2_jump(&self, p: &TraceVector) -> BiesSolution {
        let mid: Vec<f64> = self.mesh.panels().iter().map(|pn| p.eval_on_panel(pn, 0.5)).collect();
        self.finish(
            Problem::Transmission2,
            Representation::Double,
            LayerSource::double(p.clone()),
            Vec::new(),
            0.0,
            vec![
                (Condition::DirichletJump, Some(mid)),
                (Condition::NeumannJump, Some(vec![0.0; self.mesh.num_panels()])),
            ],
        )
    }

    /// `u = 𝒟p̄` with `W p̄ = q` on mean-zero traces, `q = γ_n⁺u = −γ_n⁻u`.
    pub fn transmission_p2_trace(&self, q: &NeumannData) -> Result<BiesSolution> {
        let (p, r) = self.solve_double(q.load(&self.mesh))?;
        let mut s = self.transmission_p2_jump(&p);
        s.algebraic_residual = r;
        if let Some(t) = q.at_midpoints(&self.mesh) {
            s.targets.push((Condition::Neumann(Side::Interior), t.iter().map(|v| -v).collect()));
            s.targets.push((Condition::Neumann(Side::Exterior), t));
        }
        Ok(s)
    }

    /// `u = 𝒮q + 𝒟p` with jumps `[γ_d u] = p`, `[γ_n u] = q`.
    pub fn transmission_p3(&self, p: &TraceVector, q: &DensityVector) -> BiesSolution {
        let mid: Vec<f64> = self.mesh.panels().iter().map(|pn| p.eval_on_panel(pn, 0.5)).collect();
        self.finish(
            Problem::Transmission3,
            Representation::Sum,
            LayerSource::sum(q.clone(), p.clone()),
            Vec::new(),
            0.0,
            vec![
                (Condition::DirichletJump, Some(mid)),
                (Condition::NeumannJump, Some(q.coeffs.iter().copied().collect())),
            ],
        )
    }
}

/// `−(1/2π)⟨q, 1⟩`, the `ln|x|` coefficient of `𝒮q`.
pub fn log_coefficient(mesh: &BoundaryMesh, q: &DensityVector) -> f64 {
    -q.total_mass(mesh) / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_ops::mean_value;
    use crate::geometry::{graded_mesh, PolygonalBoundary};
    use crate::potentials::far_field;
    use crate::special_densities::equilibrium_density;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> BieSystem {
        BieSystem::assemble(graded_mesh(&PolygonalBoundary::unit_square(), n, 2.0).unwrap())
    }

    fn re_z2() -> ScalarFn {
        Arc::new(|x: &Vec2| x.x * x.x - x.y * x.y)
    }

    fn interior_points() -> Vec<Vec2> {
        vec![
            Vec2::new(0.5, 0.5),
            Vec2::new(0.25, 0.7),
            Vec2::new(0.8, 0.3),
            Vec2::new(0.1, 0.15),
            Vec2::new(0.6, 0.9),
        ]
    }

    #[test]
    fn interior_dirichlet_constant_and_zero() {
        let s = square(8);
        let one = s.interior_dirichlet(&DirichletData::Function(Arc::new(|_| 1.0))).unwrap();
        // the field carries the O(h³) Galerkin error; the density identity is exact
        for x in interior_points() {
            assert!((one.value(&s.mesh, &x).unwrap() - 1.0).abs() < 1e-3);
        }
        let eq = equilibrium_density(&s.v, &s.mesh).unwrap();
        let q = one.density().unwrap();
        assert!((&q.coeffs - &eq.e_gamma.coeffs / eq.c_gamma).amax() < 1e-8 * q.coeffs.amax());
        let zero = s.interior_dirichlet(&DirichletData::Trace(TraceVector::zeros(s.mesh.num_nodes()))).unwrap();
        assert!(zero.density().unwrap().coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn interior_dirichlet_harmonic_polynomial() {
        let s = square(16);
        let f = re_z2();
        let sol = s.interior_dirichlet(&DirichletData::Function(f.clone())).unwrap();
        for x in interior_points() {
            assert!((sol.value(&s.mesh, &x).unwrap() - f(&x)).abs() < 1e-4);
        }
    }

    #[test]
    fn exterior_dirichlet_constant() {
        let s = square(8);
        let sol = s.exterior_dirichlet(&DirichletData::Function(Arc::new(|_| 1.0))).unwrap();
        let eq = equilibrium_density(&s.v, &s.mesh).unwrap();
        let a = -1.0 / (2.0 * PI * eq.c_gamma);
        assert!((sol.far_field.log_coefficient - a).abs() < 1e-8 * a.abs());
        assert!((log_coefficient(&s.mesh, sol.density().unwrap()) - a).abs() < 1e-8 * a.abs());
        assert_eq!(sol.far_field.affine_coordinates.len(), 3);
    }

    #[test]
    fn exterior_dirichlet_point_source() {
        let s = square(32);
        let x0 = Vec2::new(0.4, 0.55);
        let f: ScalarFn = Arc::new(move |x: &Vec2| (x - x0).x / (x - x0).norm_squared());
        let sol = s.exterior_dirichlet(&DirichletData::Function(f.clone())).unwrap();
        for x in [Vec2::new(1.5, 0.5), Vec2::new(-0.7, 2.0), Vec2::new(3.0, -1.0)] {
            assert!((sol.value(&s.mesh, &x).unwrap() - f(&x)).abs() < 1e-5, "{x:?}");
        }
    }

    fn re_z2_normal() -> NormalFn {
        Arc::new(|x: &Vec2, n: &Vec2| 2.0 * x.x * n.x - 2.0 * x.y * n.y)
    }

    #[test]
    fn interior_neumann_harmonic_polynomial() {
        let s = square(16);
        let sol = s.interior_neumann(&NeumannData::Function(re_z2_normal())).unwrap();
        let f = re_z2();
        let pts = interior_points();
        let vals = sol.values(&s.mesh, &pts).unwrap();
        let shift = vals[0] - f(&pts[0]);
        for (x, v) in pts.iter().zip(&vals) {
            assert!((v - shift - f(x)).abs() < 1e-4);
        }
        assert!(mean_value(&s.mesh, sol.trace().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn neumann_rejects_incompatible_data() {
        let s = square(4);
        let r = s.interior_neumann(&NeumannData::Density(DensityVector::constant(&s.mesh, 1.0)));
        assert!(matches!(r, Err(Error::IncompatibleData(_))));
        let z = s.interior_neumann(&NeumannData::Density(DensityVector::zeros(s.mesh.num_panels()))).unwrap();
        assert!(z.trace().unwrap().coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exterior_neumann_dipole() {
        let s = square(16);
        let c = Vec2::new(0.5, 0.5);
        let u = move |x: &Vec2| (x - c).x / (x - c).norm_squared();
        // γ_n⁺u = −∇u·n⁻
        let q: NormalFn = Arc::new(move |x: &Vec2, n: &Vec2| {
            let d = x - c;
            let r2 = d.norm_squared();
            let g = Vec2::new(1.0 / r2 - 2.0 * d.x * d.x / (r2 * r2), -2.0 * d.x * d.y / (r2 * r2));
            -g.dot(n)
        });
        let sol = s.exterior_neumann(&NeumannData::Function(q)).unwrap();
        // exterior solutions decaying at infinity are unique
        for x in [Vec2::new(1.6, 0.5), Vec2::new(-1.0, 2.0), Vec2::new(4.0, 3.0)] {
            assert!((sol.value(&s.mesh, &x).unwrap() - u(&x)).abs() < 1e-4, "{x:?}");
        }
        assert_eq!(sol.far_field.log_coefficient, 0.0);
    }

    #[test]
    fn exterior_neumann_random_data_decays() {
        let s = square(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut q = DensityVector::new(DVector::from_fn(s.mesh.num_panels(), |_, _| rng.random_range(-1.0..1.0)));
        let mean = q.total_mass(&s.mesh) / s.mesh.perimeter();
        q.coeffs.add_scalar_mut(-mean);
        let sol = s.exterior_neumann(&NeumannData::Density(q)).unwrap();
        let fit = far_field(&s.mesh, &sol.source, 10.0).unwrap();
        assert!(fit.fitted[0].abs() < 1e-8, "{}", fit.fitted[0]);
    }

    #[test]
    fn transmission_round_trips() {
        let s = square(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q0 = DensityVector::new(DVector::from_fn(s.mesh.num_panels(), |_, _| rng.random_range(-1.0..1.0)));
        let p = s.v.matrix.clone() * &q0.coeffs;
        let sol = s.transmission_p1_trace(&DirichletData::Moments(p)).unwrap();
        assert!((&sol.density().unwrap().coeffs - &q0.coeffs).amax() < 1e-9);

        let mut p0 = TraceVector::new(DVector::from_fn(s.mesh.num_nodes(), |_, _| rng.random_range(-1.0..1.0)));
        let mu = mean_value(&s.mesh, &p0);
        p0.coeffs.add_scalar_mut(-mu);
        let b = &s.w.matrix * &p0.coeffs;
        let sol = s.transmission_p2_trace(&NeumannData::Moments(b)).unwrap();
        assert!((&sol.trace().unwrap().coeffs - &p0.coeffs).amax() < 1e-9);
    }

    #[test]
    fn transmission_p2_of_one() {
        let s = square(8);
        let sol = s.transmission_p2_jump(&TraceVector::constant(&s.mesh, 1.0));
        assert!((sol.value(&s.mesh, &Vec2::new(0.3, 0.4)).unwrap() + 1.0).abs() < 1e-10);
        assert!(sol.value(&s.mesh, &Vec2::new(1.3, 0.4)).unwrap().abs() < 1e-10);
    }

    #[test]
    fn transmission_p3_reduces_and_jumps() {
        let s = square(8);
        let q = DensityVector::project(&s.mesh, &|x, _| (3.0 * x.x).sin());
        let p = TraceVector::interpolate(&s.mesh, &|x| x.y * x.y);
        let z = TraceVector::zeros(s.mesh.num_nodes());
        let a = s.transmission_p3(&z, &q);
        let b = s.transmission_p1_jump(&q);
        let x = Vec2::new(0.3, 0.8);
        let va = a.value(&s.mesh, &x).unwrap();
        assert!((va - b.value(&s.mesh, &x).unwrap()).abs() < 1e-14 * (1.0 + va.abs()));
        let sol = s.transmission_p3(&p, &q);
        for r in sol.boundary_residuals(&s.mesh).unwrap() {
            assert!(r.max_abs < 1e-3, "{r:?}");
        }
    }

    #[test]
    fn boundary_residuals_of_interior_dirichlet() {
        let s = square(8);
        let sol = s.interior_dirichlet(&DirichletData::Function(re_z2())).unwrap();
        let r = sol.boundary_residuals(&s.mesh).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].max_abs < 1e-2, "{r:?}");
    }
}
