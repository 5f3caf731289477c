//! Mean values of the quadratic shape functionals and their shape-gradient
//! densities, evaluated from a state ensemble.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{strain, Field, FieldKind, Operator, StateEnsemble};
use crate::levelset::{InterfaceSegment, LevelSet};
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    DirichletEnergy,
    Tracking,
    Compliance,
}

/// One interface sample of a shape-gradient density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample {
    pub triangle: usize,
    pub value: f64,
    /// Length of the interface piece inside the triangle.
    pub length: f64,
    pub midpoint: Point,
    pub normal: Point,
}

/// `𝒟_D` sampled on the interface: `ℳ′(D)(θ) ≈ Σ value · (θ·n)(mid) · length`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDensity {
    pub kind: FunctionalKind,
    samples: Vec<DensitySample>,
}

impl GradientDensity {
    pub fn new(kind: FunctionalKind, samples: Vec<DensitySample>) -> Self {
        Self { kind, samples }
    }

    pub fn samples(&self) -> &[DensitySample] {
        &self.samples
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| factor * v)
    }

    /// Same samples with `f` applied to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            kind: self.kind,
            samples: self
                .samples
                .iter()
                .map(|s| DensitySample {
                    value: f(s.value),
                    ..*s
                })
                .collect(),
        }
    }

    /// Directional derivative for a normal velocity `V = θ·n`.
    pub fn pair_normal(&self, vn: impl Fn(Point) -> f64) -> f64 {
        self.samples
            .iter()
            .map(|s| s.value * vn(s.midpoint) * s.length)
            .sum()
    }

    /// Directional derivative for a vector field `θ`.
    pub fn pair(&self, theta: impl Fn(Point) -> Point) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let t = theta(s.midpoint);
                s.value * (t[0] * s.normal[0] + t[1] * s.normal[1]) * s.length
            })
            .sum()
    }

    /// Per-triangle values for cell output (zero off the interface).
    pub fn cell_values(&self, triangles: usize) -> Vec<f64> {
        let mut out = vec![0.0; triangles];
        for s in &self.samples {
            out[s.triangle] += s.value;
        }
        out
    }
}

/// Target state on an element subset `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingData {
    pub u0: Field,
    /// `χ_B` per triangle.
    pub region: Vec<bool>,
}

impl TrackingData {
    pub fn new(u0: Field, region: Vec<bool>) -> Result<Self> {
        if !region.iter().any(|&b| b) {
            return Err(Error::InvalidArgument("tracking region B is empty".into()));
        }
        Ok(Self { u0, region })
    }

    /// Triangles whose centroid lies in `rect`.
    pub fn in_rect(mesh: &Mesh, u0: Field, rect: crate::mesh::Rect) -> Result<Self> {
        let region = (0..mesh.triangle_count())
            .map(|t| rect.contains(mesh.centroid(t), 0.0))
            .collect();
        Self::new(u0, region)
    }

    /// Mass matrix of `B ∩ D`: `χ_B` times the material fraction when the
    /// operator resolves the interface.
    pub fn mass(&self, mesh: &Mesh, operator: &Operator) -> Result<CsrMatrix> {
        if self.region.len() != mesh.triangle_count() || self.u0.node_count() != mesh.node_count() {
            return Err(Error::DimensionMismatch {
                what: "tracking data",
                expected: mesh.triangle_count(),
                actual: self.region.len(),
            });
        }
        let w: Vec<f64> = match operator.material_fraction() {
            Some(f) => self
                .region
                .iter()
                .zip(f)
                .map(|(&b, &f)| if b { f } else { 0.0 })
                .collect(),
            None => self
                .region
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        };
        Ok(mesh.mass_matrix(Some(&w)))
    }
}

fn require_scalar(ens: &StateEnsemble, what: &'static str) -> Result<()> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if ens.operator.field_kind() != FieldKind::Scalar {
        return Err(Error::InvalidArgument(format!(
            "{what} needs a Poisson ensemble"
        )));
    }
    Ok(())
}

/// `−½ Σ_k u_kᵀ K u_k`
pub fn dirichlet_energy_mean(ens: &StateEnsemble) -> Result<f64> {
    require_scalar(ens, "Dirichlet energy")?;
    let k = ens.energy_matrix();
    Ok(-0.5
        * ens
            .states
            .iter()
            .map(|u| k.quad_form(u.values()))
            .sum::<f64>())
}

/// Normal flux of a state across one interface piece. For the immersed
/// operator the Nitsche flux `∂u/∂n − (γ_k/h) u` is used.
fn interface_flux(mesh: &Mesh, operator: &Operator, seg: &InterfaceSegment, u: &[f64]) -> f64 {
    let g = mesh.gradient(seg.triangle, u);
    let dn = g[0] * seg.normal[0] + g[1] * seg.normal[1];
    let beta = operator.interface_weight(mesh, seg);
    if beta == 0.0 {
        return dn;
    }
    dn - beta * seg.interpolate_midpoint(mesh, u)
}

fn sample(seg: &InterfaceSegment, value: f64) -> DensitySample {
    DensitySample {
        triangle: seg.triangle,
        value,
        length: seg.length,
        midpoint: seg.midpoint(),
        normal: seg.normal,
    }
}

/// `−½ Σ_k (∂u_k/∂n)²` on the interface.
pub fn dirichlet_energy_gradient(ens: &StateEnsemble, ls: &LevelSet) -> Result<GradientDensity> {
    require_scalar(ens, "Dirichlet energy")?;
    let mesh = ls.mesh();
    let cut = ls.interface()?;
    let samples = cut
        .segments()
        .iter()
        .map(|seg| {
            let v: f64 = ens
                .states
                .iter()
                .map(|u| interface_flux(mesh, &ens.operator, seg, u.values()).powi(2))
                .sum();
            sample(seg, -0.5 * v)
        })
        .collect();
    Ok(GradientDensity::new(
        FunctionalKind::DirichletEnergy,
        samples,
    ))
}

/// `½ ∫_B (Σ_k u_k² − 2 u₀ 𝔼(u) + u₀²)`
pub fn tracking_mean(ens: &StateEnsemble, data: &TrackingData, mesh: &Mesh) -> Result<f64> {
    require_scalar(ens, "tracking")?;
    let mean = ens
        .mean_state
        .as_ref()
        .ok_or(Error::Missing("mean state"))?;
    let mb = data.mass(mesh, &ens.operator)?;
    let u0 = data.u0.values();
    let second: f64 = ens.states.iter().map(|u| mb.quad_form(u.values())).sum();
    Ok(0.5 * (second - 2.0 * mb.bilinear(u0, mean.values()) + mb.quad_form(u0)))
}

/// Adjoint states `K p_k = −M_B (u_k − c_k u₀)`, stored in the ensemble.
pub fn tracking_adjoints(ens: &mut StateEnsemble, data: &TrackingData, mesh: &Mesh) -> Result<()> {
    require_scalar(ens, "tracking")?;
    let coeffs = ens
        .mean_coefficients
        .clone()
        .ok_or(Error::Missing("mean coefficients"))?;
    let mb = data.mass(mesh, &ens.operator)?;
    let u0 = data.u0.values();
    let adjoints = ens
        .states
        .iter()
        .zip(&coeffs)
        .enumerate()
        .map(|(k, (u, &c))| {
            let diff: Vec<f64> = u.values().iter().zip(u0).map(|(a, b)| a - c * b).collect();
            let rhs: Vec<f64> = mb.mul_vec(&diff).into_iter().map(|v| -v).collect();
            ens.solve_operator(&rhs).map_err(|e| Error::LoadSolve {
                index: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ens.adjoints = Some(adjoints);
    Ok(())
}

/// `−Σ_k (∂u_k/∂n)(∂p_k/∂n) + ½ χ_B u₀²` on the interface.
pub fn tracking_gradient(
    ens: &StateEnsemble,
    data: &TrackingData,
    ls: &LevelSet,
) -> Result<GradientDensity> {
    require_scalar(ens, "tracking")?;
    let adj = ens
        .adjoints
        .as_ref()
        .ok_or(Error::Missing("adjoint states"))?;
    let mesh = ls.mesh();
    let cut = ls.interface()?;
    let samples = cut
        .segments()
        .iter()
        .map(|seg| {
            let mut v = 0.0;
            for (u, p) in ens.states.iter().zip(adj) {
                v -= interface_flux(mesh, &ens.operator, seg, u.values())
                    * interface_flux(mesh, &ens.operator, seg, p.values());
            }
            if data.region[seg.triangle] {
                v += 0.5 * seg.interpolate_midpoint(mesh, data.u0.values()).powi(2);
            }
            sample(seg, v)
        })
        .collect();
    Ok(GradientDensity::new(FunctionalKind::Tracking, samples))
}

fn require_elasticity(ens: &StateEnsemble) -> Result<crate::fem::HookeLaw> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    match ens.operator.as_ref() {
        Operator::Elasticity { law, .. } => Ok(*law),
        _ => Err(Error::InvalidArgument(
            "compliance needs an elasticity ensemble".into(),
        )),
    }
}

/// `Σ_k u_kᵀ K u_k`
pub fn compliance_mean(ens: &StateEnsemble) -> Result<f64> {
    require_elasticity(ens)?;
    let k = ens.energy_matrix();
    Ok(ens.states.iter().map(|u| k.quad_form(u.values())).sum())
}

/// Boundary work `Σ_k ∫_{Γ_N} g_k · u_k`.
pub fn compliance_work(ens: &StateEnsemble) -> f64 {
    ens.rhs
        .iter()
        .zip(&ens.states)
        .map(|(b, u)| b.iter().zip(u.values()).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

/// `−Σ_k Ae(u_k):e(u_k)` on the interface, with the solid Hooke's law.
pub fn compliance_gradient(ens: &StateEnsemble, ls: &LevelSet) -> Result<GradientDensity> {
    let law = require_elasticity(ens)?;
    let mesh = ls.mesh();
    let cut = ls.interface()?;
    let samples = cut
        .segments()
        .iter()
        .map(|seg| {
            let v: f64 = ens
                .states
                .iter()
                .map(|u| law.energy_density(strain(mesh, seg.triangle, u.values())))
                .sum();
            sample(seg, -v)
        })
        .collect();
    Ok(GradientDensity::new(FunctionalKind::Compliance, samples))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{solve_state_ensemble, HookeLaw, LoadKind, SolverOptions};
    use crate::mesh::{generate_structured_mesh, BoundaryTag, Rect, Region};

    fn boxed(nx: usize, ny: usize, w: f64, h: f64) -> Arc<Mesh> {
        let m = generate_structured_mesh(nx, ny, Rect::new(0.0, 0.0, w, h)).unwrap();
        let all = Region::Rect {
            rect: Rect::new(0.0, 0.0, w, h),
            tol: 1e-9,
        };
        Arc::new(m.tag_boundary(&all, BoundaryTag::Dirichlet).unwrap())
    }

    fn poisson(m: &Mesh, loads: &[Field]) -> StateEnsemble {
        let op = Operator::Poisson {
            density: vec![1.0; m.triangle_count()],
        };
        solve_state_ensemble(
            m,
            op,
            BoundaryTag::Dirichlet,
            loads,
            LoadKind::Body,
            SolverOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn dirichlet_mean_properties() {
        let m = boxed(10, 10, 1.0, 1.0);
        let f = Field::scalar(m.vertices().iter().map(|p| 1.0 + p[0]).collect());
        let zero = Field::zeros(FieldKind::Scalar, m.node_count());
        assert_eq!(dirichlet_energy_mean(&poisson(&m, &[zero])).unwrap(), 0.0);
        let one = dirichlet_energy_mean(&poisson(&m, std::slice::from_ref(&f))).unwrap();
        let two = dirichlet_energy_mean(&poisson(&m, &[f.clone(), f.clone()])).unwrap();
        assert!(one < 0.0);
        assert!((two - 2.0 * one).abs() <= 1e-12 * one.abs());
    }

    #[test]
    fn thin_strip_density_matches_one_dimensional_profile() {
        // D = (a, b) × (0, 0.1); −u″ = 1 with u(a) = u(b) = 0 gives |u′| = (b − a)/2 at the ends
        let m = generate_structured_mesh(80, 8, Rect::new(0.0, 0.0, 1.0, 0.1)).unwrap();
        let walls = Region::Rect {
            rect: Rect::new(0.0, -1.0, 0.0, 1.0),
            tol: 1e-9,
        };
        let right = Region::Rect {
            rect: Rect::new(1.0, -1.0, 1.0, 1.0),
            tol: 1e-9,
        };
        let m = m
            .tag_boundary(&walls, BoundaryTag::Dirichlet)
            .unwrap()
            .tag_boundary(&right, BoundaryTag::Dirichlet)
            .unwrap();
        let m = Arc::new(m);
        let half = 0.397;
        let ls = LevelSet::from_fn(m.clone(), |p| (p[0] - 0.5).abs() - half).unwrap();
        let op = Operator::immersed_poisson(&ls, 1e-3, 50.0).unwrap();
        let f = Field::scalar(vec![1.0; m.node_count()]);
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 50_000,
        };
        let ens = solve_state_ensemble(&m, op, BoundaryTag::Dirichlet, &[f], LoadKind::Body, opts)
            .unwrap();
        let gd = dirichlet_energy_gradient(&ens, &ls).unwrap();
        let expected = -0.5 * half * half;
        assert!(!gd.samples().is_empty());
        for v in gd.values() {
            assert!(
                (v - expected).abs() <= 0.05 * expected.abs(),
                "{v} vs {expected}"
            );
        }
    }

    #[test]
    fn compliance_identities() {
        let m = generate_structured_mesh(12, 6, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        let m = m
            .tag_boundary(
                &Region::Rect {
                    rect: Rect::new(0.0, 0.0, 0.0, 1.0),
                    tol: 1e-9,
                },
                BoundaryTag::Dirichlet,
            )
            .unwrap()
            .tag_boundary(
                &Region::Rect {
                    rect: Rect::new(2.0, 0.0, 2.0, 1.0),
                    tol: 1e-9,
                },
                BoundaryTag::Neumann,
            )
            .unwrap();
        let m = Arc::new(m);
        let law = HookeLaw::new(0.5, 1.0).unwrap();
        let ls = LevelSet::from_fn(m.clone(), |p| {
            0.3 - ((p[0] - 1.0).powi(2) + (p[1] - 0.5).powi(2)).sqrt()
        })
        .unwrap();
        let op = Operator::ersatz_elasticity(&ls, law, 1e-3).unwrap();
        let g = Field::uniform_vector(m.node_count(), [0.0, -1.0]);
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 50_000,
        };
        let ens = solve_state_ensemble(
            &m,
            op.clone(),
            BoundaryTag::Dirichlet,
            std::slice::from_ref(&g),
            LoadKind::Surface(BoundaryTag::Neumann),
            opts,
        )
        .unwrap();
        let c = compliance_mean(&ens).unwrap();
        assert!(c > 0.0);
        assert!((c - compliance_work(&ens)).abs() <= 1e-9 * c);
        let gd = compliance_gradient(&ens, &ls).unwrap();
        assert!(!gd.samples().is_empty());
        assert!(gd.values().all(|v| v <= 0.0));
        let ens3 = solve_state_ensemble(
            &m,
            op,
            BoundaryTag::Dirichlet,
            &[g.scaled(3.0)],
            LoadKind::Surface(BoundaryTag::Neumann),
            opts,
        )
        .unwrap();
        let gd3 = compliance_gradient(&ens3, &ls).unwrap();
        for (a, b) in gd.values().zip(gd3.values()) {
            assert!((b - 9.0 * a).abs() <= 1e-8 * a.abs().max(1e-30));
        }
    }

    #[test]
    fn tracking_trivial_cases() {
        let m = boxed(10, 10, 1.0, 1.0);
        let f = Field::scalar(vec![1.0; m.node_count()]);
        let mut ens = poisson(&m, &[f]);
        ens.set_mean_from_states(vec![1.0]).unwrap();
        let b = Rect::new(0.2, 0.2, 0.8, 0.8);
        let data = TrackingData::in_rect(&m, ens.states[0].clone(), b).unwrap();
        assert!(tracking_mean(&ens, &data, &m).unwrap().abs() < 1e-15);
        tracking_adjoints(&mut ens, &data, &m).unwrap();
        assert!(ens.adjoints.as_ref().unwrap()[0].max_abs() < 1e-14);

        let zero = Field::zeros(FieldKind::Scalar, m.node_count());
        let mut ens0 = poisson(&m, std::slice::from_ref(&zero));
        ens0.set_mean_from_states(vec![1.0]).unwrap();
        let u0 = Field::scalar(m.vertices().iter().map(|p| p[0] + 2.0 * p[1]).collect());
        let data0 = TrackingData::in_rect(&m, u0.clone(), b).unwrap();
        let expected = 0.5
            * data0
                .mass(&m, &ens0.operator)
                .unwrap()
                .quad_form(u0.values());
        assert!((tracking_mean(&ens0, &data0, &m).unwrap() - expected).abs() < 1e-15);
        let data00 = TrackingData::in_rect(&m, zero, b).unwrap();
        assert_eq!(tracking_mean(&ens0, &data00, &m).unwrap(), 0.0);
    }

    #[test]
    fn missing_pieces_are_reported() {
        let m = boxed(4, 4, 1.0, 1.0);
        let ens = poisson(&m, &[Field::scalar(vec![1.0; m.node_count()])]);
        let data = TrackingData::in_rect(
            &m,
            Field::scalar(vec![0.0; m.node_count()]),
            Rect::new(0.0, 0.0, 1.0, 1.0),
        )
        .unwrap();
        assert!(matches!(
            tracking_mean(&ens, &data, &m),
            Err(Error::Missing(_))
        ));
        let ls = LevelSet::from_fn(m.clone(), |p| p[0] - 0.51).unwrap();
        assert!(matches!(
            tracking_gradient(&ens, &data, &ls),
            Err(Error::Missing(_))
        ));
        assert!(compliance_mean(&ens).is_err());
        assert!(TrackingData::in_rect(
            &m,
            Field::scalar(vec![0.0; m.node_count()]),
            Rect::new(5.0, 5.0, 6.0, 6.0)
        )
        .is_err());
    }
}
