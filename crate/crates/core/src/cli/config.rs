//! Run configuration: defaults, then an optional TOML file, then flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::geometry::{graded_mesh, BoundaryMesh, PolygonalBoundary, Vec2};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Built-in geometry.
    #[arg(long, global = true, value_parser = ["circle", "square", "lshape"])]
    pub geometry: Option<String>,
    /// JSON file with a counterclockwise list of `[x, y]` vertices.
    #[arg(long, global = true)]
    pub vertices: Option<PathBuf>,
    /// Circle radius.
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    /// Panels per polygon edge, or total panels on the circle.
    #[arg(long, global = true)]
    pub panels: Option<usize>,
    /// Corner grading exponent.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for random trial densities.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with any of the long flag names as keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Problem for `solve`: int-dir, ext-dir, int-neu, ext-neu, trans1, trans2, trans3.
    #[arg(long, global = true)]
    pub problem: Option<String>,
    /// Data set; the accepted names depend on the subcommand. `solve` also
    /// takes a JSON file `{"p": [node values], "q": [panel values]}`.
    #[arg(long, global = true)]
    pub data: Option<String>,
    /// Number of random trials.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Override of the main certification threshold.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Geometry scale about the origin; for represent, kernel-svd and
    /// corner-demo, the scale of the auxiliary solves instead.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// Write the assembled V and W as CSV.
    #[arg(long, global = true)]
    pub dump_operator: bool,
    /// Write the panel table as CSV.
    #[arg(long, global = true)]
    pub dump_mesh: bool,
}

/// Keys accepted in the TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    geometry: Option<String>,
    vertices: Option<PathBuf>,
    radius: Option<f64>,
    panels: Option<usize>,
    beta: Option<f64>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    problem: Option<String>,
    data: Option<String>,
    trials: Option<usize>,
    tol: Option<f64>,
    scale: Option<f64>,
    dump_operator: Option<bool>,
    dump_mesh: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Circle { radius: f64 },
    Polygon { name: String, polygon: PolygonalBoundary },
}

impl Geometry {
    pub fn name(&self) -> &str {
        match self {
            Geometry::Circle { .. } => "circle",
            Geometry::Polygon { name, .. } => name,
        }
    }

    pub fn polygon(&self) -> Option<&PolygonalBoundary> {
        match self {
            Geometry::Polygon { polygon, .. } => Some(polygon),
            Geometry::Circle { .. } => None,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Geometry::Circle { radius } => 2.0 * radius,
            Geometry::Polygon { polygon, .. } => polygon.diameter(),
        }
    }

    pub fn mesh(&self, panels: usize, beta: f64) -> crate::Result<BoundaryMesh> {
        match self {
            Geometry::Circle { radius } => BoundaryMesh::circle(Vec2::zeros(), *radius, panels),
            Geometry::Polygon { polygon, .. } => graded_mesh(polygon, panels, beta),
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub geometry: String,
    pub vertices: Option<Vec<[f64; 2]>>,
    pub radius: f64,
    pub panels: Option<usize>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub problem: Option<String>,
    pub data: Option<String>,
    pub trials: Option<usize>,
    pub tol: Option<f64>,
    pub scale: Option<f64>,
    pub dump_operator: bool,
    pub dump_mesh: bool,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub shape: Option<Geometry>,
}

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_RADIUS: f64 = 0.5;

impl RunConfig {
    /// Merges the layers and validates ranges; every error is a usage error.
    pub fn resolve(args: &CommonArgs) -> Result<Self, String> {
        let file = match &args.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let pick = |a: &Option<String>, b: &Option<String>| a.clone().or_else(|| b.clone());
        let geometry = pick(&args.geometry, &file.geometry);
        let vertices_path = args.vertices.clone().or(file.vertices.clone());
        let radius = args.radius.or(file.radius).unwrap_or(DEFAULT_RADIUS);
        let panels = args.panels.or(file.panels);
        let beta = args.beta.or(file.beta);
        let trials = args.trials.or(file.trials);
        let tol = args.tol.or(file.tol);
        let scale = args.scale.or(file.scale);

        if !(radius > 0.0) || !radius.is_finite() {
            return Err(format!("--radius must be positive, got {radius}"));
        }
        if let Some(b) = beta {
            if !(1.0..=8.0).contains(&b) {
                return Err(format!("--beta must lie in [1, 8], got {b}"));
            }
        }
        if let Some(n) = panels {
            if n == 0 || n > 4096 {
                return Err(format!("--panels must lie in [1, 4096], got {n}"));
            }
        }
        if let Some(t) = trials {
            if t == 0 || t > 1000 {
                return Err(format!("--trials must lie in [1, 1000], got {t}"));
            }
        }
        if let Some(t) = tol {
            if !(t > 0.0) || !t.is_finite() {
                return Err(format!("--tol must be positive, got {t}"));
            }
        }
        if let Some(s) = scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(format!("--scale must be positive, got {s}"));
            }
        }

        let (name, shape, vertices) = match (geometry, vertices_path) {
            (Some(_), Some(_)) => return Err("--geometry and --vertices are exclusive".into()),
            (None, Some(p)) => {
                let text = std::fs::read_to_string(&p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                let poly = PolygonalBoundary::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))?;
                let raw = poly.vertices().iter().map(|v| [v.x, v.y]).collect();
                ("vertices".to_string(), Geometry::Polygon { name: "vertices".into(), polygon: poly }, Some(raw))
            }
            (g, None) => {
                let g = g.unwrap_or_else(|| "square".into());
                let shape = match g.as_str() {
                    "circle" => Geometry::Circle { radius },
                    "square" => Geometry::Polygon { name: g.clone(), polygon: PolygonalBoundary::unit_square() },
                    "lshape" => Geometry::Polygon { name: g.clone(), polygon: PolygonalBoundary::l_shape() },
                    other => return Err(format!("unknown geometry {other:?}")),
                };
                (g, shape, None)
            }
        };
        Ok(Self {
            geometry: name,
            vertices,
            radius,
            panels,
            beta,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            problem: pick(&args.problem, &file.problem),
            data: pick(&args.data, &file.data),
            trials,
            tol,
            scale,
            dump_operator: args.dump_operator || file.dump_operator.unwrap_or(false),
            dump_mesh: args.dump_mesh || file.dump_mesh.unwrap_or(false),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            shape: Some(shape),
        })
    }

    pub fn shape(&self) -> &Geometry {
        self.shape.as_ref().expect("resolved configuration has a geometry")
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.shape(), Geometry::Circle { .. })
    }

    /// `--panels`, or the per-command default for circles and polygons.
    pub fn panels_or(&self, circle: usize, polygon: usize) -> usize {
        self.panels.unwrap_or(if self.is_circle() { circle } else { polygon })
    }

    pub fn beta_or(&self, default: f64) -> f64 {
        self.beta.unwrap_or(default)
    }

    pub fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    /// `--data` checked against the accepted names; the first is the default.
    pub fn data_choice(&self, accepted: &[&str]) -> Result<String, String> {
        match &self.data {
            None => Ok(accepted[0].to_string()),
            Some(d) if accepted.contains(&d.as_str()) => Ok(d.clone()),
            Some(d) => Err(format!("--data {d:?} is not one of {accepted:?}")),
        }
    }
}

fn read_config(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
