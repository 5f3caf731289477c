use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::correlation::{
    finite_rank_correlated_pair, Axis, ClosedFormKernel, CorrelationKernel, CorrelationRegion,
    KernelTerm, Profile,
};
use crate::error::{Error, Result};
use crate::fem::{Field, HookeLaw, LoadKind, SolverOptions};
use crate::levelset::Hole;
use crate::mesh::{generate_structured_mesh, BoundaryTag, Mesh, Rect, Region};
use crate::objectives::{FunctionalKind, TrackingData};
use crate::optimizer::{LoadPiece, OptimizationConfig, Physics, Scenario};
use crate::oracle::OracleConfig;

/// Correlation degrees of the correlated-bridge study.
pub const BRIDGE_ALPHAS: [f64; 6] = [-1.0, -0.7, 0.0, 0.5, 0.8, 1.0];
pub const BRIDGE_LOAD_A: [f64; 2] = [1.0, -1.0];
pub const BRIDGE_LOAD_B: [f64; 2] = [-1.0, 1.0];
pub const BRIDGE_CORRELATED_VOLUME: f64 = 0.35;
pub const BRIDGE_KERNEL_VOLUME: f64 = 0.75;
pub const KERNEL_LENGTH: f64 = 0.1;
pub const HORIZONTAL_AMPLITUDE: f64 = 1e5;
pub const VERTICAL_AMPLITUDE: f64 = 1e6;
pub const KERNEL_RANK_CAP: usize = 5;
pub const DEFAULT_ITERATIONS: usize = 250;
pub const DEFAULT_PENALTY: f64 = 50.0;

fn range(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigRange {
        key: key.into(),
        message: message.into(),
    }
}

/// Target of the tracking functional: constant `u₀` on a rectangle `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSpec {
    pub rect: Rect,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadSite {
    Surface,
    Body,
}

/// Fully user-specified problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSpec {
    pub functional: FunctionalKind,
    pub dirichlet: Vec<Region>,
    #[serde(default)]
    pub neumann: Vec<Region>,
    pub load: LoadSite,
    #[serde(default = "one")]
    pub young: f64,
    #[serde(default = "poisson_ratio")]
    pub poisson_ratio: f64,
    #[serde(default = "penalty")]
    pub penalty: f64,
    /// Constant mean load, one value per component.
    pub mean: Option<Vec<f64>>,
    #[serde(default)]
    pub kernels: Vec<ClosedFormKernel>,
    pub tracking: Option<TrackingSpec>,
}

fn one() -> f64 {
    1.0
}

fn poisson_ratio() -> f64 {
    0.3
}

fn penalty() -> f64 {
    DEFAULT_PENALTY
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// Two surface loads `g_a`, `g_b` with correlation degree `α`.
    BridgeCorrelated {
        alpha: f64,
    },
    /// Closed-form exponential kernels with profiles `h_i`, `k_i`.
    BridgeKernel {
        index: usize,
    },
    PoissonDirichlet,
    PoissonTracking,
    Custom(Box<CustomSpec>),
}

/// A named scenario with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub preset: Preset,
    pub nx: usize,
    pub ny: usize,
    pub bbox: Rect,
    pub holes: Vec<Hole>,
}

fn hole_grid(bbox: Rect, cols: usize, rows: usize, radius: f64) -> Vec<Hole> {
    let mut out = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            out.push(Hole::Circle {
                center: [
                    bbox.x0 + bbox.width() * (i as f64 + 0.5) / cols as f64,
                    bbox.y0 + bbox.height() * (j as f64 + 1.0) / (rows + 1) as f64,
                ],
                radius,
            });
        }
    }
    out
}

fn edge_rect(x0: f64, x1: f64, y: f64, tol: f64) -> Region {
    Region::Rect {
        rect: Rect::new(x0, y, x1, y),
        tol,
    }
}

impl ScenarioSpec {
    /// Preset with its default desk-scale geometry and initial holes.
    pub fn new(preset: Preset) -> Result<Self> {
        let (nx, ny, bbox) = match &preset {
            Preset::BridgeCorrelated { alpha } => {
                if !(alpha.abs() <= 1.0) {
                    return Err(range("scenario.alpha", format!("{alpha} not in [-1, 1]")));
                }
                (30, 15, Rect::new(0.0, 0.0, 1.7, 0.7))
            }
            Preset::BridgeKernel { index } => {
                if !(1..=3).contains(index) {
                    return Err(range("scenario.kernel", format!("{index} not in 1..=3")));
                }
                (30, 15, Rect::new(0.0, 0.0, 2.0, 1.0))
            }
            Preset::PoissonDirichlet | Preset::PoissonTracking => {
                (30, 30, Rect::new(0.0, 0.0, 1.0, 1.0))
            }
            Preset::Custom(_) => {
                return Err(range(
                    "scenario.preset",
                    "custom scenarios need explicit geometry",
                ));
            }
        };
        let holes = match &preset {
            Preset::BridgeCorrelated { .. } => hole_grid(bbox, 6, 2, 0.07),
            Preset::BridgeKernel { .. } => hole_grid(bbox, 5, 2, 0.1),
            _ => hole_grid(bbox, 3, 3, 0.08),
        };
        Ok(Self {
            preset,
            nx,
            ny,
            bbox,
            holes,
        })
    }

    pub fn default_volume_target(&self) -> Option<f64> {
        match self.preset {
            Preset::BridgeCorrelated { .. } => Some(BRIDGE_CORRELATED_VOLUME),
            Preset::BridgeKernel { .. } => Some(BRIDGE_KERNEL_VOLUME),
            Preset::PoissonDirichlet | Preset::PoissonTracking => Some(0.6),
            Preset::Custom(_) => None,
        }
    }

    pub fn default_max_rank(&self) -> usize {
        match self.preset {
            Preset::BridgeKernel { .. } => KERNEL_RANK_CAP,
            _ => 200,
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        if self.nx == 0 || self.ny == 0 {
            return Err(range(
                "scenario.nx",
                "mesh needs at least one cell per direction",
            ));
        }
        if !(self.bbox.width() > 0.0 && self.bbox.height() > 0.0) {
            return Err(range(
                "scenario.box",
                "box must have positive width and height",
            ));
        }
        generate_structured_mesh(self.nx, self.ny, self.bbox)
    }

    /// Builds the mesh, tags its boundary and sets up physics and data.
    pub fn resolve(&self) -> Result<Scenario> {
        let mut mesh = self.mesh()?;
        let b = self.bbox;
        let (w, h) = (b.width(), b.height());
        let tol = 1e-9 * w.max(h);
        let corners = [
            edge_rect(b.x0, b.x0 + 0.1 * w, b.y0, tol),
            edge_rect(b.x1 - 0.1 * w, b.x1, b.y0, tol),
        ];
        let whole = Region::Rect { rect: b, tol };
        let elastic = HookeLaw::from_young_poisson(1.0, 0.3)?;
        let poisson = Physics::Poisson {
            penalty: DEFAULT_PENALTY,
        };
        let n = mesh.node_count();
        let scenario = match &self.preset {
            Preset::BridgeCorrelated { alpha } => {
                for r in &corners {
                    mesh = mesh.tag_boundary(r, BoundaryTag::Dirichlet)?;
                }
                let mid = b.x0 + 0.5 * w;
                for (lo, hi) in [(0.2, 0.35), (0.65, 0.8)] {
                    mesh = mesh.tag_boundary(
                        &edge_rect(b.x0 + lo * w, b.x0 + hi * w, b.y1, tol),
                        BoundaryTag::Neumann,
                    )?;
                }
                let side = |left: bool, g: [f64; 2]| {
                    let mut v = vec![0.0; 2 * n];
                    for (i, p) in mesh.vertices().iter().enumerate() {
                        if (p[0] <= mid) == left {
                            v[2 * i] = g[0];
                            v[2 * i + 1] = g[1];
                        }
                    }
                    Field::vector2(v)
                };
                let kernel = finite_rank_correlated_pair(
                    &side(true, BRIDGE_LOAD_A),
                    &side(false, BRIDGE_LOAD_B),
                    *alpha,
                )?;
                Scenario {
                    mesh: Arc::new(mesh),
                    holes: self.holes.clone(),
                    functional: FunctionalKind::Compliance,
                    physics: Physics::Elasticity { law: elastic },
                    clamp: BoundaryTag::Dirichlet,
                    load_kind: LoadKind::Surface(BoundaryTag::Neumann),
                    mean_load: None,
                    pieces: vec![LoadPiece {
                        kernel,
                        region: CorrelationRegion::Boundary(BoundaryTag::Neumann),
                    }],
                    tracking: None,
                }
            }
            Preset::BridgeKernel { index } => {
                for r in &corners {
                    mesh = mesh.tag_boundary(r, BoundaryTag::Dirichlet)?;
                }
                mesh =
                    mesh.tag_boundary(&edge_rect(b.x0, b.x1, b.y1, tol), BoundaryTag::Neumann)?;
                let kernel = |component, amplitude, profile| LoadPiece {
                    kernel: CorrelationKernel::ClosedForm(ClosedFormKernel {
                        component: Some(component),
                        amplitude,
                        profile,
                        correlation_length: KERNEL_LENGTH,
                        profile_axis: Axis::X,
                        profile_range: [b.x0, b.x1],
                        decay_axis: Axis::X,
                    }),
                    region: CorrelationRegion::Boundary(BoundaryTag::Neumann),
                };
                Scenario {
                    mesh: Arc::new(mesh),
                    holes: self.holes.clone(),
                    functional: FunctionalKind::Compliance,
                    physics: Physics::Elasticity { law: elastic },
                    clamp: BoundaryTag::Dirichlet,
                    load_kind: LoadKind::Surface(BoundaryTag::Neumann),
                    mean_load: None,
                    pieces: vec![
                        kernel(0, HORIZONTAL_AMPLITUDE, Profile::h(*index)?),
                        kernel(1, VERTICAL_AMPLITUDE, Profile::k(*index)?),
                    ],
                    tracking: None,
                }
            }
            Preset::PoissonDirichlet | Preset::PoissonTracking => {
                mesh = mesh.tag_boundary(&whole, BoundaryTag::Dirichlet)?;
                let wave = |f: &dyn Fn(f64, f64) -> f64| {
                    Field::scalar(
                        mesh.vertices()
                            .iter()
                            .map(|p| f((p[0] - b.x0) / w, (p[1] - b.y0) / h))
                            .collect(),
                    )
                };
                let pi2 = 2.0 * std::f64::consts::PI;
                let terms = vec![
                    KernelTerm::pure(wave(&|x, _| 0.5 * (pi2 * x).sin()), 1.0),
                    KernelTerm::pure(wave(&|_, y| 0.5 * (pi2 * y).sin()), 1.0),
                ];
                let tracking = matches!(self.preset, Preset::PoissonTracking).then(|| {
                    let rect = Rect::new(
                        b.x0 + 0.3 * w,
                        b.y0 + 0.3 * h,
                        b.x0 + 0.7 * w,
                        b.y0 + 0.7 * h,
                    );
                    TrackingData::in_rect(&mesh, Field::scalar(vec![0.05; n]), rect)
                });
                let functional = if tracking.is_some() {
                    FunctionalKind::Tracking
                } else {
                    FunctionalKind::DirichletEnergy
                };
                Scenario {
                    holes: self.holes.clone(),
                    functional,
                    physics: poisson,
                    clamp: BoundaryTag::Dirichlet,
                    load_kind: LoadKind::Body,
                    mean_load: Some(Field::scalar(vec![1.0; n])),
                    pieces: vec![LoadPiece {
                        kernel: CorrelationKernel::FiniteRank { terms },
                        region: CorrelationRegion::Domain,
                    }],
                    tracking: tracking.transpose()?,
                    mesh: Arc::new(mesh),
                }
            }
            Preset::Custom(c) => resolve_custom(c, mesh, self.holes.clone())?,
        };
        Ok(scenario)
    }
}

fn resolve_custom(c: &CustomSpec, mut mesh: Mesh, holes: Vec<Hole>) -> Result<Scenario> {
    let key = |k: &str| format!("scenario.custom.{k}");
    if c.dirichlet.is_empty() {
        return Err(range(
            &key("dirichlet"),
            "at least one clamped region is required",
        ));
    }
    for r in &c.dirichlet {
        mesh = mesh.tag_boundary(r, BoundaryTag::Dirichlet)?;
    }
    for r in &c.neumann {
        mesh = mesh.tag_boundary(r, BoundaryTag::Neumann)?;
    }
    let elastic = c.functional == FunctionalKind::Compliance;
    let physics = if elastic {
        Physics::Elasticity {
            law: HookeLaw::from_young_poisson(c.young, c.poisson_ratio)
                .map_err(|e| range(&key("young"), e.to_string()))?,
        }
    } else {
        if !(c.penalty > 0.0) {
            return Err(range(&key("penalty"), "must be > 0"));
        }
        Physics::Poisson { penalty: c.penalty }
    };
    let (load_kind, region) = match c.load {
        LoadSite::Surface => {
            if c.neumann.is_empty() {
                return Err(range(&key("neumann"), "surface loads need a loaded region"));
            }
            (
                LoadKind::Surface(BoundaryTag::Neumann),
                CorrelationRegion::Boundary(BoundaryTag::Neumann),
            )
        }
        LoadSite::Body => (LoadKind::Body, CorrelationRegion::Domain),
    };
    let comps = if elastic { 2 } else { 1 };
    let n = mesh.node_count();
    let mean_load = match &c.mean {
        None => None,
        Some(m) if m.len() != comps => {
            return Err(range(
                &key("mean"),
                format!("expected {comps} component(s)"),
            ));
        }
        Some(m) => Some(if elastic {
            Field::uniform_vector(n, [m[0], m[1]])
        } else {
            Field::scalar(vec![m[0]; n])
        }),
    };
    let mut pieces = Vec::with_capacity(c.kernels.len());
    for k in &c.kernels {
        k.validate()
            .map_err(|e| range(&key("kernels"), e.to_string()))?;
        if k.component.is_some() != elastic {
            return Err(range(
                &key("kernels"),
                "kernel component must be set for elasticity and absent for Poisson",
            ));
        }
        pieces.push(LoadPiece {
            kernel: CorrelationKernel::ClosedForm(*k),
            region,
        });
    }
    let tracking = match (c.functional, c.tracking) {
        (FunctionalKind::Tracking, Some(t)) => Some(TrackingData::in_rect(
            &mesh,
            Field::scalar(vec![t.target; n]),
            t.rect,
        )?),
        (FunctionalKind::Tracking, None) => {
            return Err(range(
                &key("tracking"),
                "tracking functional needs a target",
            ))
        }
        (_, Some(_)) => {
            return Err(range(
                &key("tracking"),
                "only used by the tracking functional",
            ))
        }
        (_, None) => None,
    };
    Ok(Scenario {
        mesh: Arc::new(mesh),
        holes,
        functional: c.functional,
        physics,
        clamp: BoundaryTag::Dirichlet,
        load_kind,
        mean_load,
        pieces,
        tracking,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PresetName {
    #[serde(alias = "BRIDGE_CORRELATED")]
    BridgeCorrelated,
    #[serde(alias = "BRIDGE_KERNEL")]
    BridgeKernel,
    #[serde(alias = "POISSON_DIRICHLET")]
    PoissonDirichlet,
    #[serde(alias = "POISSON_TRACKING")]
    PoissonTracking,
    #[serde(alias = "CUSTOM")]
    Custom,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: PresetName,
    alpha: Option<f64>,
    kernel: Option<usize>,
    nx: Option<usize>,
    ny: Option<usize>,
    #[serde(rename = "box")]
    bbox: Option<[f64; 4]>,
    holes: Option<Vec<Hole>>,
    custom: Option<CustomSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimization {
    iterations: Option<usize>,
    volume_target: Option<f64>,
    lambda0: Option<f64>,
    penalty0: Option<f64>,
    penalty_growth: Option<f64>,
    penalty_every: Option<usize>,
    penalty_max_factor: Option<f64>,
    cfl: Option<f64>,
    redistance_every: Option<usize>,
    cholesky_epsilon: Option<f64>,
    max_rank: Option<usize>,
    ersatz: Option<f64>,
    smoothing: Option<f64>,
    solver_tol: Option<f64>,
    solver_max_iter: Option<usize>,
    snapshot_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    #[serde(default)]
    optimization: RawOptimization,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    oracle: OracleConfig,
}

/// Everything one configuration file describes.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub optimization: OptimizationConfig,
    pub oracle: OracleConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn scenario_spec(raw: RawScenario) -> Result<ScenarioSpec> {
    let reject = |present: bool, k: &str, preset: &str| {
        if present {
            Err(range(
                &format!("scenario.{k}"),
                format!("only used by the {preset} preset"),
            ))
        } else {
            Ok(())
        }
    };
    if raw.preset != PresetName::BridgeCorrelated {
        reject(raw.alpha.is_some(), "alpha", "bridge_correlated")?;
    }
    if raw.preset != PresetName::BridgeKernel {
        reject(raw.kernel.is_some(), "kernel", "bridge_kernel")?;
    }
    if raw.preset != PresetName::Custom {
        reject(raw.custom.is_some(), "custom", "custom")?;
    }
    let mut spec = match raw.preset {
        PresetName::BridgeCorrelated => ScenarioSpec::new(Preset::BridgeCorrelated {
            alpha: raw.alpha.unwrap_or(0.0),
        })?,
        PresetName::BridgeKernel => ScenarioSpec::new(Preset::BridgeKernel {
            index: raw.kernel.unwrap_or(1),
        })?,
        PresetName::PoissonDirichlet => ScenarioSpec::new(Preset::PoissonDirichlet)?,
        PresetName::PoissonTracking => ScenarioSpec::new(Preset::PoissonTracking)?,
        PresetName::Custom => {
            let custom = raw.custom.ok_or_else(|| {
                range(
                    "scenario.custom",
                    "custom preset requires a [scenario.custom] table",
                )
            })?;
            let (Some(nx), Some(ny), Some(bx)) = (raw.nx, raw.ny, raw.bbox) else {
                return Err(range(
                    "scenario.box",
                    "custom preset requires nx, ny and box",
                ));
            };
            ScenarioSpec {
                preset: Preset::Custom(Box::new(custom)),
                nx,
                ny,
                bbox: Rect::new(bx[0], bx[1], bx[2], bx[3]),
                holes: raw.holes.clone().unwrap_or_default(),
            }
        }
    };
    if let Some(nx) = raw.nx {
        spec.nx = nx;
    }
    if let Some(ny) = raw.ny {
        spec.ny = ny;
    }
    if let Some(bx) = raw.bbox {
        let new = Rect::new(bx[0], bx[1], bx[2], bx[3]);
        if new != spec.bbox && raw.holes.is_none() && !matches!(spec.preset, Preset::Custom(_)) {
            spec.holes = match spec.preset {
                Preset::BridgeCorrelated { .. } => hole_grid(new, 6, 2, 0.07),
                Preset::BridgeKernel { .. } => hole_grid(new, 5, 2, 0.1),
                _ => hole_grid(new, 3, 3, 0.08),
            };
        }
        spec.bbox = new;
    }
    if let Some(holes) = raw.holes {
        spec.holes = holes;
    }
    Ok(spec)
}

/// Parses a TOML run configuration. Unknown keys are rejected, syntax
/// errors report their line and out-of-range values name their key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let spec = scenario_spec(raw.scenario)?;
    let scenario = spec.resolve()?;
    let o = raw.optimization;
    let volume_target = o
        .volume_target
        .or(spec.default_volume_target())
        .ok_or_else(|| {
            range(
                "optimization.volume_target",
                "required for custom scenarios",
            )
        })?;
    let mut cfg = OptimizationConfig::new(
        scenario,
        volume_target,
        o.iterations.unwrap_or(DEFAULT_ITERATIONS),
    );
    cfg.max_rank = spec.default_max_rank();
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = o.$field { cfg.$field = v; })*};
    }
    set!(
        lambda0,
        penalty_growth,
        penalty_every,
        penalty_max_factor,
        cfl,
        redistance_every,
        cholesky_epsilon,
        max_rank,
        ersatz,
        smoothing,
        snapshot_every
    );
    cfg.penalty0 = o.penalty0;
    cfg.solver = SolverOptions {
        tol: o.solver_tol.unwrap_or(cfg.solver.tol),
        max_iter: o.solver_max_iter.unwrap_or(cfg.solver.max_iter),
    };
    if !(cfg.solver.tol > 0.0 && cfg.solver.tol < 1.0) || cfg.solver.max_iter == 0 {
        return Err(range(
            "optimization.solver_tol",
            "tolerance must lie in (0, 1) and max_iter ≥ 1",
        ));
    }
    cfg.output_dir = raw.output.directory;
    cfg.validate()?;
    raw.oracle.validate()?;
    Ok(RunConfig {
        scenario: spec,
        optimization: cfg,
        oracle: raw.oracle,
    })
}

pub fn read_config(path: impl AsRef<std::path::Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
