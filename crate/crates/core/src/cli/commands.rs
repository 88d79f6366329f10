//! One function per subcommand. Each returns the numbers, the checks and the
//! tables of a run; writing is left to the caller.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::{Geometry, RunConfig};
use super::report::{Check, Outcome, Table};
use crate::boundary_ops::{assemble_v, mean_value, DensityVector, TraceVector, CAPACITY_MARGIN};
use crate::error::Error;
use crate::geometry::{apply_similarity, BoundaryMesh, SimilarityTransform, Vec2};
use crate::l2_harmonic::basis::{probe_discs, BasisElement};
use crate::l2_harmonic::bergman::GRAM_TRUNCATION;
use crate::l2_harmonic::kernel_svd::KernelSvdOptions;
use crate::l2_harmonic::{build_basis, represent as represent_target, trace_kernel_svd, BasisOptions, BergmanProjector, DomainQuadrature};
use crate::l2_harmonic::domain::triangulate;
use crate::potentials::{far_field, jump_report, LayerSource, JumpTrial};
use crate::singular_solutions::{
    build_zero_dirichlet_function, build_zero_neumann_function, CornerVariant, ZeroTraceCertificate, ZeroTraceField,
    ZeroTraceOptions, COMPATIBILITY_TOL, DIRICHLET_TRACE_RATIO, EXPONENT_TOL, NEUMANN_TRACE_RATIO, PROBE_TOL,
};
use crate::solvers::{BieSystem, BiesSolution, DirichletData, NeumannData, NormalFn, Problem, ScalarFn};
use crate::special_densities::{equilibrium_density, recommend_rescale};

pub enum CommandError {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Numerical(e)
    }
}

type CmdResult = std::result::Result<Outcome, CommandError>;

fn usage<T>(msg: impl Into<String>) -> std::result::Result<T, CommandError> {
    Err(CommandError::Usage(msg.into()))
}

fn data(cfg: &RunConfig, accepted: &[&str]) -> std::result::Result<String, CommandError> {
    cfg.data_choice(accepted).map_err(CommandError::Usage)
}

fn polygon_only<'a>(cfg: &'a RunConfig, cmd: &str) -> std::result::Result<&'a crate::geometry::PolygonalBoundary, CommandError> {
    match cfg.shape().polygon() {
        Some(p) => Ok(p),
        None => usage(format!("{cmd} needs a polygon (--geometry square|lshape or --vertices)")),
    }
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityVector {
    DensityVector::new(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize) -> TraceVector {
    TraceVector::new(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
}

fn mean_free_trace(rng: &mut ChaCha8Rng, mesh: &BoundaryMesh) -> TraceVector {
    let mut p = random_trace(rng, mesh.num_nodes());
    let mu = mean_value(mesh, &p);
    p.coeffs.add_scalar_mut(-mu);
    p
}

fn bounding_box(mesh: &BoundaryMesh) -> (Vec2, Vec2) {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for x in mesh.nodes() {
        lo = lo.inf(x);
        hi = hi.sup(x);
    }
    (lo, hi)
}

/// Points of an `m × m` grid over the (enlarged) bounding box, on one side of
/// the boundary and at least `gap·diam` away from it.
fn grid(mesh: &BoundaryMesh, m: usize, inside: bool, gap: f64) -> Vec<Vec2> {
    let (mut lo, mut hi) = bounding_box(mesh);
    if !inside {
        let pad = 0.5 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    let shape = mesh.shape();
    let d = gap * shape.diameter();
    let mut pts = Vec::new();
    for j in 0..m {
        for i in 0..m {
            let x = Vec2::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / m as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / m as f64,
            );
            if shape.contains(&x) == inside && shape.distance_to_boundary(&x) > d {
                pts.push(x);
            }
        }
    }
    pts
}

fn interior_probes(mesh: &BoundaryMesh) -> Vec<Vec2> {
    grid(mesh, 7, true, 0.1)
}

fn exterior_probes(mesh: &BoundaryMesh) -> Vec<Vec2> {
    let (lo, hi) = bounding_box(mesh);
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo).norm();
    (0..8)
        .flat_map(|k| {
            let th = 2.0 * PI * (k as f64 + 0.25) / 8.0;
            let e = Vec2::new(th.cos(), th.sin());
            [c + e * 1.5 * r, c + e * 4.0 * r]
        })
        .collect()
}

/// Centre of the largest probe disc: a point well inside.
fn inner_point(mesh: &BoundaryMesh) -> Vec2 {
    probe_discs(mesh, 1).first().map(|d| d.0).unwrap_or_else(|| {
        let (lo, hi) = bounding_box(mesh);
        0.5 * (lo + hi)
    })
}

fn field_table(file: &str, pts: &[Vec2], vals: &[f64]) -> Table {
    let mut t = Table::new(file, &["x", "y", "value"]);
    for (x, v) in pts.iter().zip(vals) {
        t.push(vec![x.x, x.y, *v]);
    }
    t
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Mesh of the configured geometry, scaled about the origin by `--scale`.
fn boundary_mesh(cfg: &RunConfig, n: usize, beta: f64) -> crate::Result<BoundaryMesh> {
    let mesh = cfg.shape().mesh(n, beta)?;
    match cfg.scale {
        Some(s) => Ok(mesh.transformed(&SimilarityTransform::new(s, Vec2::zeros())?)),
        None => Ok(mesh),
    }
}

/// Quadrature of the interior, scaled by `--scale` when `scaled` is set.
fn domain_quadrature(cfg: &RunConfig, n: usize, scaled: bool) -> crate::Result<DomainQuadrature> {
    let s = if scaled { cfg.scale.unwrap_or(1.0) } else { 1.0 };
    match cfg.shape() {
        Geometry::Circle { radius } => DomainQuadrature::disk(Vec2::zeros(), radius * s, 128, (2 * n).max(64)),
        Geometry::Polygon { polygon, .. } => {
            let poly = apply_similarity(polygon, &SimilarityTransform::new(s, Vec2::zeros())?);
            triangulate(&poly, 0.04 * poly.diameter(), 12)
        }
    }
}

pub fn capacity(cfg: &RunConfig) -> CmdResult {
    let n = cfg.panels_or(256, 32);
    let mesh = boundary_mesh(cfg, n, cfg.beta_or(2.0))?;
    let v = assemble_v(&mesh);
    let eq = equilibrium_density(&v, &mesh)?;
    let mass = eq.e_gamma.total_mass(&mesh);
    let rescale = if eq.c_gamma <= CAPACITY_MARGIN {
        Some(recommend_rescale(&eq, 2.0 * CAPACITY_MARGIN)?.scale)
    } else {
        None
    };
    let mut checks = vec![Check::below("equilibrium_mass_defect", (mass - 1.0).abs(), 1e-12)];
    let mut exact = None;
    if let Geometry::Circle { radius } = cfg.shape() {
        let r = radius * cfg.scale.unwrap_or(1.0);
        let err = (eq.capacity - r).abs();
        checks.push(Check::below("capacity_error", err, cfg.tol_or(1e-6)));
        exact = Some(r);
    }
    let mut t = Table::new("equilibrium.csv", &["panel", "x", "y", "density"]);
    for (k, pn) in mesh.panels().iter().enumerate() {
        let m = pn.midpoint();
        t.push(vec![k as f64, m.x, m.y, eq.e_gamma.coeffs[k]]);
    }
    let (emin, emax) = eq.e_gamma.coeffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(Outcome {
        results: json!({
            "panels": mesh.num_panels(),
            "c_gamma": eq.c_gamma,
            "capacity": eq.capacity,
            "exact_capacity": exact,
            "equilibrium_mass": mass,
            "density_min": emin,
            "density_max": emax,
            "v_positive_definite_margin": CAPACITY_MARGIN,
            "above_margin": eq.c_gamma > CAPACITY_MARGIN,
            "recommended_scale": rescale,
        }),
        checks,
        tables: vec![t],
        mesh: Some(mesh),
    })
}

fn smooth_q(x: &Vec2) -> f64 {
    1.0 + 0.5 * x.x - 0.3 * x.y * x.y
}

fn smooth_p(x: &Vec2) -> f64 {
    x.x.cos() + 0.5 * (2.0 * x.y).sin()
}

/// Jump report of one smooth trial (with exact functions) and `random` seeded trials.
fn jumps(mesh: &BoundaryMesh, random: usize, seed: u64) -> crate::Result<crate::potentials::JumpReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fq = |x: &Vec2| smooth_q(x);
    let fp = |x: &Vec2| smooth_p(x);
    let mut trials = vec![JumpTrial {
        q: DensityVector::project(mesh, &|x, _| smooth_q(x)),
        p: TraceVector::interpolate(mesh, &smooth_p),
        q_exact: Some(&fq),
        p_exact: Some(&fp),
    }];
    for _ in 0..random {
        trials.push(JumpTrial {
            q: random_density(&mut rng, mesh.num_panels()),
            p: random_trace(&mut rng, mesh.num_nodes()),
            q_exact: None,
            p_exact: None,
        });
    }
    jump_report(mesh, &trials)
}

pub fn jump_test(cfg: &RunConfig) -> CmdResult {
    let n = cfg.panels_or(256, 32);
    let mesh = boundary_mesh(cfg, n, cfg.beta_or(2.0))?;
    let rep = jumps(&mesh, cfg.trials.unwrap_or(3), cfg.seed)?;
    let tol = cfg.tol_or(if cfg.is_circle() { 1e-6 } else { 1e-4 });
    let mut t = Table::new(
        "jumps.csv",
        &["trial", "single_dirichlet", "single_neumann", "double_dirichlet", "double_neumann"],
    );
    for (i, tr) in rep.trials.iter().enumerate() {
        t.push(vec![i as f64, tr.single_dirichlet, tr.single_neumann, tr.double_dirichlet, tr.double_neumann]);
    }
    Ok(Outcome {
        checks: vec![Check::below("max_jump_residual", rep.max_residual, tol)],
        results: serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?,
        tables: vec![t],
        mesh: Some(mesh),
    })
}

pub fn farfield_test(cfg: &RunConfig) -> CmdResult {
    let n = cfg.panels_or(64, 16);
    let mesh = boundary_mesh(cfg, n, cfg.beta_or(2.0))?;
    let trials = cfg.trials.unwrap_or(20);
    let ring = 5.0 * mesh.shape().diameter() + mesh.shape().radius_about_origin();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Table::new(
        "farfield.csv",
        &["trial", "kind", "a_fit", "b1_fit", "b2_fit", "c_fit", "a_pred", "b1_pred", "b2_pred", "c_pred", "discrepancy"],
    );
    let (mut single_max, mut double_max, mut double_log) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..trials {
        let s = LayerSource::single(random_density(&mut rng, mesh.num_panels()));
        let d = LayerSource::double(random_trace(&mut rng, mesh.num_nodes()));
        for (kind, src) in [(0.0, &s), (1.0, &d)] {
            let r = far_field(&mesh, src, ring)?;
            if kind == 0.0 {
                single_max = single_max.max(r.discrepancy);
            } else {
                double_max = double_max.max(r.discrepancy);
                double_log = double_log.max(r.fitted[0].abs());
            }
            let mut row = vec![i as f64, kind];
            row.extend(r.fitted);
            row.extend(r.predicted);
            row.push(r.discrepancy);
            t.push(row);
        }
    }
    let one = LayerSource::double(TraceVector::constant(&mesh, 1.0));
    let outside = exterior_probes(&mesh);
    let dl_one = one.values(&mesh, &outside)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = cfg.tol_or(1e-6);
    Ok(Outcome {
        results: json!({
            "panels": mesh.num_panels(),
            "trials": trials,
            "ring_radius": ring,
            "single_max_discrepancy": single_max,
            "double_max_discrepancy": double_max,
            "double_max_log_coefficient": double_log,
            "double_layer_of_one_outside": dl_one,
        }),
        checks: vec![
            Check::below("single_layer_discrepancy", single_max, tol),
            Check::below("double_layer_discrepancy", double_max, tol),
            Check::below("double_layer_log_coefficient", double_log, 1e-8),
            Check::below("double_layer_of_one_outside", dl_one, 1e-10),
        ],
        tables: vec![t],
        mesh: Some(mesh),
    })
}

fn re_z2(x: &Vec2) -> f64 {
    x.x * x.x - x.y * x.y
}

fn re_z2_grad(x: &Vec2) -> Vec2 {
    Vec2::new(2.0 * x.x, -2.0 * x.y)
}

fn dipole(c: Vec2) -> (impl Fn(&Vec2) -> f64 + Copy, impl Fn(&Vec2) -> Vec2 + Copy) {
    let u = move |x: &Vec2| (x - c).x / (x - c).norm_squared();
    let g = move |x: &Vec2| {
        let d = x - c;
        let r2 = d.norm_squared();
        Vec2::new(1.0 / r2 - 2.0 * d.x * d.x / (r2 * r2), -2.0 * d.x * d.y / (r2 * r2))
    };
    (u, g)
}

pub fn solve(cfg: &RunConfig) -> CmdResult {
    let problem = Problem::parse(cfg.problem.as_deref().unwrap_or("int-dir")).map_err(|e| CommandError::Usage(e.to_string()))?;
    let accepted: &[&str] = match problem {
        Problem::InteriorNeumann | Problem::ExteriorNeumann => &["harmonic", "roundtrip"],
        _ => &["harmonic", "one", "roundtrip"],
    };
    let n = cfg.panels_or(128, 32);
    let mesh = boundary_mesh(cfg, n, cfg.beta_or(2.0))?;
    let file = match cfg.data.as_deref() {
        Some(d) if !accepted.contains(&d) => Some(read_boundary_data(Path::new(d), &mesh, problem, accepted)?),
        _ => None,
    };
    let which = if file.is_some() { "file".to_string() } else { data(cfg, accepted)? };
    let sys = BieSystem::assemble(mesh.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (du, dg) = dipole(inner_point(&mesh));
    let interior = interior_probes(&mesh);
    let exterior = exterior_probes(&mesh);
    let mut checks = Vec::new();
    let mut extra = serde_json::Map::new();
    let field_tol = cfg.tol_or(1e-3);

    let field_error = |sol: &BiesSolution, pts: &[Vec2], exact: &dyn Fn(&Vec2) -> f64, shift: bool| -> crate::Result<f64> {
        let got = sol.values(&sys.mesh, pts)?;
        let want: Vec<f64> = pts.iter().map(exact).collect();
        let s = if shift {
            got.iter().zip(&want).map(|(g, w)| g - w).sum::<f64>() / pts.len() as f64
        } else {
            0.0
        };
        Ok(got.iter().zip(&want).map(|(g, w)| (g - s - w).abs()).fold(0.0, f64::max))
    };
    let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).amax() / b.amax().max(1e-300);

    let (sol, side_inside) = match (problem, which.as_str()) {
        (Problem::InteriorDirichlet | Problem::Transmission1, "harmonic") => {
            let f: ScalarFn = Arc::new(re_z2);
            let s = if problem == Problem::InteriorDirichlet {
                sys.interior_dirichlet(&DirichletData::Function(f))?
            } else {
                sys.transmission_p1_trace(&DirichletData::Function(f))?
            };
            let e = field_error(&s, &interior, &re_z2, false)?;
            checks.push(Check::below("interior_max_error", e, field_tol));
            (s, true)
        }
        (Problem::InteriorDirichlet, "one") => {
            let s = sys.interior_dirichlet(&DirichletData::Function(Arc::new(|_| 1.0)))?;
            let e = field_error(&s, &interior, &|_| 1.0, false)?;
            checks.push(Check::below("interior_max_error", e, field_tol));
            (s, true)
        }
        (Problem::ExteriorDirichlet, "harmonic") => {
            let s = sys.exterior_dirichlet(&DirichletData::Function(Arc::new(du)))?;
            let e = field_error(&s, &exterior, &du, false)?;
            checks.push(Check::below("exterior_max_error", e, field_tol));
            (s, false)
        }
        (Problem::ExteriorDirichlet, "one") => {
            let s = sys.exterior_dirichlet(&DirichletData::Function(Arc::new(|_| 1.0)))?;
            let c = sys.vsolver()?.c_gamma();
            let a = -1.0 / (2.0 * PI * c);
            let e = (s.far_field.log_coefficient - a).abs() / a.abs();
            extra.insert("expected_log_coefficient".into(), json!(a));
            checks.push(Check::below("log_coefficient_error", e, cfg.tol_or(1e-6)));
            (s, false)
        }
        (Problem::InteriorNeumann, "harmonic") => {
            let q: NormalFn = Arc::new(|x: &Vec2, nu: &Vec2| re_z2_grad(x).dot(nu));
            let s = sys.interior_neumann(&NeumannData::Function(q))?;
            let e = field_error(&s, &interior, &re_z2, true)?;
            checks.push(Check::below("interior_max_error_up_to_constant", e, field_tol));
            (s, true)
        }
        (Problem::ExteriorNeumann | Problem::Transmission2, "harmonic") => {
            // γ_n⁺u = −∇u·n⁻
            let q: NormalFn = Arc::new(move |x: &Vec2, nu: &Vec2| -dg(x).dot(nu));
            let s = if problem == Problem::ExteriorNeumann {
                sys.exterior_neumann(&NeumannData::Function(q))?
            } else {
                sys.transmission_p2_trace(&NeumannData::Function(q))?
            };
            let e = field_error(&s, &exterior, &du, false)?;
            checks.push(Check::below("exterior_max_error", e, field_tol));
            (s, false)
        }
        (Problem::Transmission1, "one") => {
            let s = sys.transmission_p1_jump(&DensityVector::constant(&mesh, 1.0));
            (s, true)
        }
        (Problem::Transmission2, "one") => {
            let s = sys.transmission_p2_jump(&TraceVector::constant(&mesh, 1.0));
            let e = field_error(&s, &interior, &|_| -1.0, false)?.max(field_error(&s, &exterior, &|_| 0.0, false)?);
            checks.push(Check::below("double_layer_of_one_error", e, 1e-10));
            (s, true)
        }
        (Problem::Transmission3, "harmonic" | "one") => {
            let (p, q) = if which == "one" {
                (TraceVector::constant(&mesh, 1.0), DensityVector::zeros(mesh.num_panels()))
            } else {
                (TraceVector::interpolate(&mesh, &smooth_p), DensityVector::project(&mesh, &|x, _| smooth_q(x)))
            };
            (sys.transmission_p3(&p, &q), true)
        }
        (_, "roundtrip") => {
            let (s, err) = match problem {
                Problem::InteriorDirichlet | Problem::ExteriorDirichlet | Problem::Transmission1 => {
                    let q0 = random_density(&mut rng, mesh.num_panels());
                    let b = DirichletData::Moments(&sys.v.matrix * &q0.coeffs);
                    let s = match problem {
                        Problem::InteriorDirichlet => sys.interior_dirichlet(&b)?,
                        Problem::ExteriorDirichlet => sys.exterior_dirichlet(&b)?,
                        _ => sys.transmission_p1_trace(&b)?,
                    };
                    let e = rel(&s.density().expect("single layer").coeffs, &q0.coeffs);
                    (s, e)
                }
                Problem::InteriorNeumann | Problem::ExteriorNeumann | Problem::Transmission2 => {
                    let p0 = mean_free_trace(&mut rng, &mesh);
                    let wp = &sys.w.matrix * &p0.coeffs;
                    let s = match problem {
                        Problem::InteriorNeumann => sys.interior_neumann(&NeumannData::Moments(-wp))?,
                        Problem::ExteriorNeumann => sys.exterior_neumann(&NeumannData::Moments(wp))?,
                        _ => sys.transmission_p2_trace(&NeumannData::Moments(wp))?,
                    };
                    let e = rel(&s.trace().expect("double layer").coeffs, &p0.coeffs);
                    (s, e)
                }
                Problem::Transmission3 => {
                    let p0 = random_trace(&mut rng, mesh.num_nodes());
                    let q0 = random_density(&mut rng, mesh.num_panels());
                    let s = sys.transmission_p3(&p0, &q0);
                    let e = rel(&s.trace().expect("trace").coeffs, &p0.coeffs)
                        .max(rel(&s.density().expect("density").coeffs, &q0.coeffs));
                    (s, e)
                }
            };
            checks.push(Check::below("round_trip_error", err, cfg.tol_or(1e-9)));
            let inside = matches!(problem, Problem::InteriorDirichlet | Problem::InteriorNeumann);
            (s, inside)
        }
        (_, "file") => {
            let (p, q) = file.expect("file data was read");
            let s = match problem {
                Problem::InteriorDirichlet => sys.interior_dirichlet(&DirichletData::Trace(p.expect("checked")))?,
                Problem::ExteriorDirichlet => sys.exterior_dirichlet(&DirichletData::Trace(p.expect("checked")))?,
                Problem::Transmission1 => sys.transmission_p1_trace(&DirichletData::Trace(p.expect("checked")))?,
                Problem::InteriorNeumann => sys.interior_neumann(&NeumannData::Density(q.expect("checked")))?,
                Problem::ExteriorNeumann => sys.exterior_neumann(&NeumannData::Density(q.expect("checked")))?,
                Problem::Transmission2 => sys.transmission_p2_trace(&NeumannData::Density(q.expect("checked")))?,
                Problem::Transmission3 => sys.transmission_p3(&p.expect("checked"), &q.expect("checked")),
            };
            checks.push(Check::below("algebraic_residual", s.algebraic_residual, cfg.tol_or(1e-9)));
            let inside = matches!(problem, Problem::InteriorDirichlet | Problem::InteriorNeumann);
            (s, inside)
        }
        (p, d) => return usage(format!("--data {d} is not available for {p:?}")),
    };

    let residuals = sol.boundary_residuals(&mesh)?;
    if matches!(problem, Problem::Transmission1 | Problem::Transmission2 | Problem::Transmission3) {
        for r in residuals.iter().filter(|r| matches!(r.condition, crate::solvers::Condition::DirichletJump | crate::solvers::Condition::NeumannJump)) {
            checks.push(Check::below(
                &format!("{:?}_residual", r.condition).to_lowercase(),
                r.max_abs / r.max_data.max(1.0),
                1e-3,
            ));
        }
    }
    let pts = grid(&mesh, 41, side_inside, 0.02);
    let vals = sol.values(&mesh, &pts)?;
    extra.insert("problem".into(), json!(format!("{problem:?}")));
    extra.insert("data".into(), json!(which));
    extra.insert("panels".into(), json!(mesh.num_panels()));
    extra.insert("representation".into(), json!(format!("{:?}", sol.representation)));
    extra.insert("algebraic_residual".into(), json!(sol.algebraic_residual));
    extra.insert("far_field".into(), serde_json::to_value(&sol.far_field).map_err(|e| Error::Io(e.to_string()))?);
    extra.insert("boundary_residuals".into(), serde_json::to_value(&residuals).map_err(|e| Error::Io(e.to_string()))?);
    Ok(Outcome {
        results: serde_json::Value::Object(extra),
        checks,
        tables: vec![field_table("field.csv", &pts, &vals)],
        mesh: Some(mesh),
    })
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDataFile {
    /// Trace values at the mesh nodes.
    p: Option<Vec<f64>>,
    /// Density values, one per panel.
    q: Option<Vec<f64>>,
}

/// Reads `{"p": [...], "q": [...]}` for `solve`; what is missing or of the
/// wrong length for the problem is a usage error.
fn read_boundary_data(
    path: &Path,
    mesh: &BoundaryMesh,
    problem: Problem,
    accepted: &[&str],
) -> std::result::Result<(Option<TraceVector>, Option<DensityVector>), CommandError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandError::Usage(format!("--data {} is neither one of {accepted:?} nor a readable file: {e}", path.display())))?;
    let f: BoundaryDataFile =
        serde_json::from_str(&text).map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))?;
    let need_p = matches!(
        problem,
        Problem::InteriorDirichlet | Problem::ExteriorDirichlet | Problem::Transmission1 | Problem::Transmission3
    );
    let need_q = !need_p || problem == Problem::Transmission3;
    let take = |v: Option<Vec<f64>>, key: &str, needed: bool, len: usize| match (v, needed) {
        (Some(v), true) if v.len() == len => Ok(Some(DVector::from_vec(v))),
        (Some(v), true) => usage(format!("{}: \"{key}\" has {} values, the mesh needs {len}", path.display(), v.len())),
        (None, true) => usage(format!("{}: {problem:?} needs \"{key}\"", path.display())),
        (_, false) => Ok(None),
    };
    let p = take(f.p, "p", need_p, mesh.num_nodes())?.map(TraceVector::new);
    let q = take(f.q, "q", need_q, mesh.num_panels())?.map(DensityVector::new);
    Ok((p, q))
}

/// `Δθ` for `θ = exp(−1/(1−ρ²))`, `ρ = |x−c|/r0`.
pub fn bump_laplacian(x: &Vec2, c: &Vec2, r0: f64) -> f64 {
    let rho = (x - c).norm() / r0;
    if rho >= 1.0 {
        return 0.0;
    }
    let d = 1.0 - rho * rho;
    let g = (-1.0 / d).exp();
    let a = -2.0 * rho / (d * d);
    let ap = -2.0 / (d * d) - 8.0 * rho * rho / (d * d * d);
    // θ'' + θ'/r with θ' = g a; at the centre θ'/r → θ''
    let lap = if rho > 1e-12 { g * (a * a + ap + a / rho) } else { 2.0 * g * ap };
    lap / (r0 * r0)
}

pub fn bergman(cfg: &RunConfig) -> CmdResult {
    let accepted: &[&str] = if cfg.is_circle() {
        &["abs2", "bump", "re-z2", "random"]
    } else {
        &["bump", "abs2", "re-z2", "random"]
    };
    let which = data(cfg, accepted)?;
    let n = cfg.panels_or(64, 16);
    let mesh = boundary_mesh(cfg, n, cfg.beta_or(2.0))?;
    let quad = domain_quadrature(cfg, n, true)?;
    let basis = build_basis(&mesh, &quad, BasisOptions { corner_singular: false, constant: true })?;
    let proj = BergmanProjector::new(&basis, &quad)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centre = inner_point(&mesh);
    let r0 = 0.8 * mesh.shape().distance_to_boundary(&centre);
    let f: Vec<f64> = match which.as_str() {
        "abs2" => quad.nodes.iter().map(|x| x.norm_squared()).collect(),
        "bump" => quad.nodes.iter().map(|x| bump_laplacian(x, &centre, r0)).collect(),
        "re-z2" => quad.nodes.iter().map(re_z2).collect(),
        _ => (0..quad.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let r = proj.project(&f)?;
    let again = proj.project(&r.projected)?;
    let cmax = r.coefficients.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let idem = max_abs_diff(&r.coefficients, &again.coefficients) / cmax.max(1.0);
    let g1: Vec<f64> = (0..quad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g2: Vec<f64> = (0..quad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p1 = proj.project(&g1)?.projected;
    let p2 = proj.project(&g2)?.projected;
    let adj = (proj.inner(&p1, &g2) - proj.inner(&g1, &p2)).abs() / (proj.inner(&g1, &g1) * proj.inner(&g2, &g2)).sqrt();
    let pf_norm = proj.inner(&r.projected, &r.projected).sqrt();
    let f_norm = proj.inner(&f, &f).sqrt();
    let mut checks = vec![Check::below("idempotence", idem, 1e-8), Check::below("self_adjointness", adj, 1e-8)];
    let mut results = json!({
        "data": which,
        "panels": mesh.num_panels(),
        "basis_size": basis.len(),
        "quadrature_nodes": quad.len(),
        "residual": r.residual,
        "rank": r.rank,
        "gram_condition": r.gram_condition,
        "truncated_condition": r.truncated_condition,
        "projection_norm_ratio": pf_norm / f_norm.max(1e-300),
        "idempotence": idem,
        "self_adjointness": adj,
    });
    match (which.as_str(), cfg.shape()) {
        ("abs2", Geometry::Circle { radius }) => {
            let rs = radius * cfg.scale.unwrap_or(1.0);
            let c = 0.5 * rs * rs;
            let d: Vec<f64> = r.projected.iter().map(|p| p - c).collect();
            let err = proj.inner(&d, &d).sqrt();
            results["l2_error_vs_constant"] = json!(err);
            results["expected_constant"] = json!(c);
            checks.push(Check::below("l2_error_vs_constant", err, cfg.tol_or(2e-3)));
        }
        ("bump", _) => {
            results["bump_centre"] = json!([centre.x, centre.y]);
            results["bump_radius"] = json!(r0);
            checks.push(Check::below("projection_norm_ratio", pf_norm / f_norm, cfg.tol_or(1e-3)));
        }
        ("re-z2", _) => checks.push(Check::below("residual", r.residual, cfg.tol_or(1e-3))),
        _ => {}
    }
    let mut t = Table::new("projected.csv", &["x", "y", "weight", "f", "projected"]);
    for (k, x) in quad.nodes.iter().enumerate() {
        t.push(vec![x.x, x.y, quad.weights[k], f[k], r.projected[k]]);
    }
    Ok(Outcome { results, checks, tables: vec![t], mesh: Some(mesh) })
}

pub fn represent(cfg: &RunConfig) -> CmdResult {
    let reentrant = cfg.shape().polygon().is_some_and(|p| !p.reentrant_corners().is_empty());
    let accepted: &[&str] = if reentrant { &["corner", "re-z3", "element"] } else { &["re-z3", "element"] };
    let which = data(cfg, accepted)?;
    // the corner target lives on a finer mesh, so its basis starts coarse
    let n = if which == "re-z3" { cfg.panels_or(128, 16) } else { cfg.panels_or(64, 8) };
    let mesh = cfg.shape().mesh(n, cfg.beta_or(2.0))?;
    let quad = domain_quadrature(cfg, n, false)?;
    let with = BasisOptions { corner_singular: reentrant, constant: true };
    let basis = build_basis(&mesh, &quad, with)?;
    let mut checks = Vec::new();
    let mut results = json!({ "data": which, "panels": mesh.num_panels(), "basis_size": basis.len() });
    let (vals, proj) = match which.as_str() {
        "corner" => {
            let poly = cfg.shape().polygon().expect("reentrant polygon");
            let d = ZeroTraceOptions::default();
            let opts = ZeroTraceOptions { solve_scale: cfg.scale.unwrap_or(d.solve_scale), ..d };
            let v = ZeroTraceField::new(poly, 4 * n, CornerVariant::Sine, &opts)?;
            let u = |x: &Vec2| v.value(x);
            let r_with = represent_target(&u, &mesh, &basis, &quad)?;
            let plain = build_basis(&mesh, &quad, BasisOptions { corner_singular: false, constant: true })?;
            let r_without = represent_target(&u, &mesh, &plain, &quad)?;
            let ratio = r_without.residual / r_with.residual;
            results["target_panels_per_edge"] = json!(4 * n);
            results["residual_with_corner_elements"] = json!(r_with.residual);
            results["residual_without_corner_elements"] = json!(r_without.residual);
            results["rank_with"] = json!(r_with.rank);
            results["rank_without"] = json!(r_without.rank);
            results["ratio"] = json!(ratio);
            checks.push(Check::below("residual_with_corner_elements", r_with.residual, cfg.tol_or(5e-2)));
            checks.push(Check::above("without_over_with", ratio, 2.0));
            (v.values(&quad.nodes)?, r_with)
        }
        "re-z3" => {
            let u = |x: &Vec2| Ok(x.x.powi(3) - 3.0 * x.x * x.y * x.y);
            let r = represent_target(&u, &mesh, &basis, &quad)?;
            results["residual"] = json!(r.residual);
            checks.push(Check::below("residual", r.residual, cfg.tol_or(1e-3)));
            (quad.nodes.iter().map(u).collect::<crate::Result<_>>()?, r)
        }
        _ => {
            // the longest panel: tiny corner panels sit partly in truncated directions
            let k = (0..mesh.num_panels())
                .max_by(|&a, &b| mesh.panel(a).length.total_cmp(&mesh.panel(b).length))
                .unwrap_or(0);
            results["panel"] = json!(k);
            let e = BasisElement::SingleLayerPanel(k);
            let u = |x: &Vec2| e.eval(&mesh, x);
            let r = represent_target(&u, &mesh, &basis, &quad)?;
            // dropped directions may carry up to √τ·s_max of an element's field
            let vals: Vec<f64> = quad.nodes.iter().map(&u).collect::<crate::Result<_>>()?;
            let fnorm = vals.iter().zip(&quad.weights).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
            let bound = (GRAM_TRUNCATION * r.gram_eigenvalues[0]).sqrt() / fnorm;
            let tol = if r.rank == basis.len() { 1e-10 } else { bound.max(1e-10) };
            results["residual"] = json!(r.residual);
            results["truncation_bound"] = json!(bound);
            checks.push(Check::below("residual", r.residual, cfg.tol_or(tol)));
            (quad.nodes.iter().map(u).collect::<crate::Result<_>>()?, r)
        }
    };
    results["rank"] = json!(proj.rank);
    results["gram_condition"] = json!(proj.gram_condition);
    let mut t = Table::new("represent.csv", &["x", "y", "target", "projected"]);
    for (k, x) in quad.nodes.iter().enumerate() {
        t.push(vec![x.x, x.y, vals[k], proj.projected[k]]);
    }
    Ok(Outcome { results, checks, tables: vec![t], mesh: Some(mesh) })
}

pub fn kernel_svd(cfg: &RunConfig) -> CmdResult {
    let poly = polygon_only(cfg, "kernel-svd")?;
    let n = cfg.panels.unwrap_or(4);
    let d = KernelSvdOptions::default();
    let opts = KernelSvdOptions {
        panels_per_edge: [n, 4 * n, 16 * n],
        beta: cfg.beta_or(d.beta),
        scale: cfg.scale.unwrap_or(d.scale),
        ..d
    };
    let rep = trace_kernel_svd(poly, &opts)?;
    let sorted = rep
        .spectra
        .iter()
        .all(|s| s.singular_values.iter().all(|v| *v >= 0.0) && s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    let mut checks = vec![Check::holds("sorted_nonnegative", sorted)];
    if rep.reentrant {
        checks.push(Check::below("smallest_ratio", rep.smallest_ratio, cfg.tol_or(0.2)));
    } else {
        checks.push(Check::above("smallest_ratio", rep.smallest_ratio, cfg.tol_or(0.5)));
    }
    let mut t = Table::new("spectra.csv", &["level", "panels_per_edge", "index", "sigma"]);
    for (l, s) in rep.spectra.iter().enumerate() {
        for (i, v) in s.singular_values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            t.push(vec![l as f64, s.panels_per_edge as f64, i as f64, *v]);
        }
    }
    // the spectra themselves live in the CSV
    let mut results = json!({
        "options": opts,
        "smallest_ratio": rep.smallest_ratio,
        "decay_rate": rep.decay_rate,
        "reentrant": rep.reentrant,
        "scale": rep.scale,
    });
    results["levels"] = json!(rep
        .spectra
        .iter()
        .map(|s| json!({
            "panels_per_edge": s.panels_per_edge,
            "panels": s.panels,
            "quadrature_nodes": s.quadrature_nodes,
            "smallest": s.smallest,
            "largest": s.singular_values.iter().copied().find(|v| v.is_finite()),
            "normalization": s.normalization,
        }))
        .collect::<Vec<_>>());
    let mesh = cfg.shape().mesh(n, opts.beta)?;
    Ok(Outcome { results, checks, tables: vec![t], mesh: Some(mesh) })
}

fn certificate_checks(c: &ZeroTraceCertificate, prefix: &str) -> Vec<Check> {
    let tol = match c.variant {
        CornerVariant::Sine => DIRICHLET_TRACE_RATIO,
        CornerVariant::Cosine => NEUMANN_TRACE_RATIO,
    };
    let first = c.levels.first().map(|l| l.trace_ratio).unwrap_or(f64::NAN);
    let last = c.levels.last().map(|l| l.trace_ratio).unwrap_or(f64::NAN);
    let min_norm = c.levels.iter().map(|l| l.l2_norm).fold(f64::INFINITY, f64::min);
    let mut out = vec![
        Check::below(&format!("{prefix}_trace_ratio"), last, tol),
        Check::holds(&format!("{prefix}_trace_ratio_decays"), last < first),
        Check::above(&format!("{prefix}_l2_norm_over_corner_norm"), min_norm / c.corner_l2_norm, 0.1),
        Check::above(&format!("{prefix}_mass_stability"), c.mass_stability, 0.5),
        Check::below(&format!("{prefix}_probe_defect"), c.probe_max_defect, PROBE_TOL),
        Check::below(
            &format!("{prefix}_energy_exponent_relative_error"),
            ((c.energy_exponent - c.expected_exponent) / c.expected_exponent).abs(),
            EXPONENT_TOL,
        ),
    ];
    if let Some(v) = c.compatibility {
        out.push(Check::below(&format!("{prefix}_compatibility"), v, COMPATIBILITY_TOL));
    }
    out
}

pub fn corner_demo(cfg: &RunConfig) -> CmdResult {
    let poly = polygon_only(cfg, "corner-demo")?;
    let which = data(cfg, &["both", "dirichlet", "neumann"])?;
    let n = cfg.panels.unwrap_or(16);
    let d = ZeroTraceOptions::default();
    let opts = ZeroTraceOptions {
        panels_per_edge: [n, 2 * n, 4 * n],
        beta: cfg.beta_or(d.beta),
        solve_scale: cfg.scale.unwrap_or(d.solve_scale),
        ..d
    };
    let mut programs = Vec::new();
    if which != "neumann" {
        programs.push(("dirichlet", build_zero_dirichlet_function(poly, &opts)?));
    }
    if which != "dirichlet" {
        programs.push(("neumann", build_zero_neumann_function(poly, &opts)?));
    }
    let mesh = crate::geometry::graded_mesh(poly, n, opts.beta)?;
    let pts = grid(&mesh, 61, true, 0.005);
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut results = serde_json::Map::new();
    results.insert("options".into(), json!(opts));
    let mut annuli = Table::new("annuli.csv", &["variant", "inner_radius", "energy"]);
    for (k, (name, prog)) in programs.iter().enumerate() {
        checks.extend(certificate_checks(&prog.certificate, name));
        results.insert(name.to_string(), serde_json::to_value(&prog.certificate).map_err(|e| Error::Io(e.to_string()))?);
        for a in &prog.certificate.annuli {
            annuli.push(vec![k as f64, a.inner_radius, a.energy]);
        }
        let vals = prog.field.values(&pts)?;
        tables.push(field_table(&format!("field_{name}.csv"), &pts, &vals));
    }
    tables.push(annuli);
    Ok(Outcome { results: serde_json::Value::Object(results), checks, tables, mesh: Some(mesh) })
}

/// Strictly decreasing, or already at rounding level.
fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-12)
}

pub fn convergence(cfg: &RunConfig) -> CmdResult {
    let n = cfg.panels_or(32, 8);
    let beta = cfg.beta_or(2.0);
    let levels = [n, 2 * n, 4 * n];
    // represent never rescales the geometry, here as in its own command
    let rep_quad = domain_quadrature(cfg, 4 * n, false)?;
    let mut series: Vec<(&str, Vec<f64>)> = vec![
        ("jump_consistency", Vec::new()),
        ("interior_dirichlet_error", Vec::new()),
        ("interior_neumann_error", Vec::new()),
        ("represent_residual", Vec::new()),
    ];
    if cfg.is_circle() {
        series.push(("capacity_error", Vec::new()));
    }
    let mut panels = Vec::new();
    for &m in &levels {
        let mesh = boundary_mesh(cfg, m, beta)?;
        panels.push(mesh.num_panels());
        let rep = jumps(&mesh, 0, cfg.seed)?;
        series[0].1.push(rep.max_consistency.unwrap_or(f64::NAN));
        let sys = BieSystem::assemble(mesh.clone());
        let probes = interior_probes(&mesh);
        let d = sys.interior_dirichlet(&DirichletData::Function(Arc::new(re_z2)))?;
        let got = d.values(&mesh, &probes)?;
        let want: Vec<f64> = probes.iter().map(re_z2).collect();
        series[1].1.push(max_abs_diff(&got, &want));
        let q: NormalFn = Arc::new(|x: &Vec2, nu: &Vec2| re_z2_grad(x).dot(nu));
        let nsol = sys.interior_neumann(&NeumannData::Function(q))?;
        let got = nsol.values(&mesh, &probes)?;
        let shift = got.iter().zip(&want).map(|(g, w)| g - w).sum::<f64>() / probes.len() as f64;
        series[2].1.push(got.iter().zip(&want).map(|(g, w)| (g - shift - w).abs()).fold(0.0, f64::max));
        let rep_mesh = cfg.shape().mesh(m, beta)?;
        let basis = build_basis(&rep_mesh, &rep_quad, BasisOptions { corner_singular: false, constant: true })?;
        let u = |x: &Vec2| Ok(x.x.powi(3) - 3.0 * x.x * x.y * x.y);
        series[3].1.push(represent_target(&u, &rep_mesh, &basis, &rep_quad)?.residual);
        if let Geometry::Circle { radius } = cfg.shape() {
            let eq = equilibrium_density(&sys.v, &mesh)?;
            series[4].1.push((eq.capacity - radius * cfg.scale.unwrap_or(1.0)).abs());
        }
    }
    let mut t = Table::new("convergence.csv", &["experiment", "level", "panels", "value"]);
    let mut checks = Vec::new();
    let mut results = serde_json::Map::new();
    results.insert("panels".into(), json!(panels));
    results.insert("panels_per_edge".into(), json!(levels));
    results.insert("beta".into(), json!(beta));
    for (k, (name, v)) in series.iter().enumerate() {
        for (l, x) in v.iter().enumerate() {
            t.push(vec![k as f64, l as f64, panels[l] as f64, *x]);
        }
        checks.push(Check::holds(&format!("{name}_decreasing"), decreasing(v)));
        results.insert(name.to_string(), json!(v));
    }
    let mesh = boundary_mesh(cfg, n, beta)?;
    Ok(Outcome { results: serde_json::Value::Object(results), checks, tables: vec![t], mesh: Some(mesh) })
}
