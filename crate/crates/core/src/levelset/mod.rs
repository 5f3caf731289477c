//! Implicit shapes `D = {φ < 0}` on the fixed mesh: initialization,
//! Hamilton-Jacobi transport, redistancing, Ersatz densities and velocity
//! extension.

mod advect;
mod cut;
mod extend;
mod redistance;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, Rect};

pub use advect::CFL_DEFAULT;
pub use cut::{triangle_fraction, InterfaceCut, InterfaceSegment};
pub use extend::extend_velocity;
pub use redistance::Band;

/// Void inclusion of the initial shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hole {
    Circle { center: Point, radius: f64 },
    Rect { rect: Rect },
}

impl Hole {
    /// Signed distance to the hole, negative inside it.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match *self {
            Hole::Circle { center, radius } => {
                ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() - radius
            }
            Hole::Rect { rect } => {
                let cx = 0.5 * (rect.x0 + rect.x1);
                let cy = 0.5 * (rect.y0 + rect.y1);
                let dx = (p[0] - cx).abs() - 0.5 * rect.width();
                let dy = (p[1] - cy).abs() - 0.5 * rect.height();
                let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
                outside + dx.max(dy).min(0.0)
            }
        }
    }

    fn validate(&self, bbox: &Rect) -> Result<()> {
        let (ok, anchor) = match *self {
            Hole::Circle { center, radius } => (radius > 0.0 && radius.is_finite(), center),
            Hole::Rect { rect } => (
                rect.width() > 0.0 && rect.height() > 0.0,
                [0.5 * (rect.x0 + rect.x1), 0.5 * (rect.y0 + rect.y1)],
            ),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("degenerate hole {self:?}")));
        }
        if !bbox.contains(anchor, 0.0) {
            return Err(Error::InvalidArgument(format!(
                "hole {self:?} is not inside the box"
            )));
        }
        Ok(())
    }
}

/// Nodal level-set function on a fixed mesh; `φ < 0` is material.
#[derive(Debug, Clone)]
pub struct LevelSet {
    mesh: Arc<Mesh>,
    phi: Vec<f64>,
    /// Accumulated transport time.
    pub time: f64,
}

impl LevelSet {
    pub fn new(mesh: Arc<Mesh>, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != mesh.node_count() {
            return Err(Error::DimensionMismatch {
                what: "level set",
                expected: mesh.node_count(),
                actual: phi.len(),
            });
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite level-set value at node {i}"
            )));
        }
        Ok(Self {
            mesh,
            phi,
            time: 0.0,
        })
    }

    /// Level set sampled from a function of the node coordinates.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let phi = mesh.vertices().iter().map(|&p| f(p)).collect();
        Self::new(mesh, phi)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn into_phi(self) -> Vec<f64> {
        self.phi
    }

    pub fn interface(&self) -> Result<InterfaceCut> {
        InterfaceCut::from_phi(&self.mesh, &self.phi)
    }

    /// Area fraction of material per triangle.
    pub fn material_fraction(&self) -> Vec<f64> {
        self.mesh
            .triangles()
            .iter()
            .map(|t| triangle_fraction([self.phi[t[0]], self.phi[t[1]], self.phi[t[2]]]))
            .collect()
    }

    /// Ersatz density `fraction + (1 − fraction) · eps_ersatz`.
    pub fn density(&self, eps_ersatz: f64) -> Vec<f64> {
        density_from_levelset(self, eps_ersatz)
    }

    /// `Vol(D) = Σ_T fraction(T) · area(T)`.
    pub fn volume(&self) -> f64 {
        self.material_fraction()
            .iter()
            .zip(self.mesh.areas())
            .map(|(f, a)| f * a)
            .sum()
    }

    /// Share of triangles with `|∇φ|` in `[lo, hi]`.
    pub fn gradient_norm_share(&self, lo: f64, hi: f64) -> f64 {
        let n = self.mesh.triangle_count();
        let ok = (0..n)
            .filter(|&k| {
                let g = self.mesh.gradient(k, &self.phi);
                let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                gn >= lo && gn <= hi
            })
            .count();
        ok as f64 / n as f64
    }
}

/// Signed distance to the union of the holes, positive inside them. Without
/// holes the whole box is material and `φ` is minus the box diagonal.
pub fn initialize_levelset(mesh: Arc<Mesh>, holes: &[Hole]) -> Result<LevelSet> {
    let bbox = mesh.bbox();
    for (i, h) in holes.iter().enumerate() {
        h.validate(&bbox)?;
        if holes[..i].contains(h) {
            return Err(Error::InvalidArgument(format!("hole {h:?} is given twice")));
        }
    }
    let diag = (bbox.width().powi(2) + bbox.height().powi(2)).sqrt();
    LevelSet::from_fn(mesh, |p| {
        holes
            .iter()
            .map(|h| -h.signed_distance(p))
            .fold(-diag, f64::max)
    })
}

/// Ersatz density per triangle: 1 in material, `eps_ersatz` in void and the
/// volume-fraction blend on cut triangles.
pub fn density_from_levelset(ls: &LevelSet, eps_ersatz: f64) -> Vec<f64> {
    ls.material_fraction()
        .into_iter()
        .map(|f| f + (1.0 - f) * eps_ersatz)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_mesh;

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(generate_structured_mesh(n, n, Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap())
    }

    #[test]
    fn no_holes_is_all_material() {
        let m = unit(8);
        let ls = initialize_levelset(m.clone(), &[]).unwrap();
        assert!(ls.phi().iter().all(|&v| v < 0.0));
        assert!(density_from_levelset(&ls, 1e-3).iter().all(|&d| d == 1.0));
        assert!((ls.volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_circle_is_exact() {
        let m = unit(20);
        let c = [0.5, 0.4];
        let ls = initialize_levelset(
            m.clone(),
            &[Hole::Circle {
                center: c,
                radius: 0.2,
            }],
        )
        .unwrap();
        for (p, v) in m.vertices().iter().zip(ls.phi()) {
            let r = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            assert!((v - (0.2 - r)).abs() < 1e-15);
        }
    }

    #[test]
    fn two_holes_give_distance_to_union() {
        let m = unit(16);
        let a = Hole::Circle {
            center: [0.25, 0.5],
            radius: 0.1,
        };
        let b = Hole::Rect {
            rect: Rect::new(0.6, 0.3, 0.8, 0.7),
        };
        let both = initialize_levelset(m.clone(), &[a, b]).unwrap();
        let la = initialize_levelset(m.clone(), &[a]).unwrap();
        let lb = initialize_levelset(m.clone(), &[b]).unwrap();
        for i in 0..m.node_count() {
            assert_eq!(both.phi()[i], la.phi()[i].max(lb.phi()[i]));
        }
    }

    #[test]
    fn rejects_bad_holes() {
        let m = unit(4);
        let c = Hole::Circle {
            center: [0.5, 0.5],
            radius: 0.1,
        };
        assert!(initialize_levelset(
            m.clone(),
            &[Hole::Circle {
                center: [0.5, 0.5],
                radius: 0.0
            }]
        )
        .is_err());
        assert!(initialize_levelset(
            m.clone(),
            &[Hole::Circle {
                center: [1.5, 0.5],
                radius: 0.1
            }]
        )
        .is_err());
        assert!(initialize_levelset(m.clone(), &[c, c]).is_err());
        assert!(initialize_levelset(
            m,
            &[Hole::Rect {
                rect: Rect::new(0.5, 0.5, 0.5, 0.7)
            }]
        )
        .is_err());
    }

    #[test]
    fn density_limits_and_half_cut() {
        let m = unit(4);
        let eps = 1e-3;
        let full = LevelSet::new(m.clone(), vec![1.0; m.node_count()]).unwrap();
        assert!(density_from_levelset(&full, eps).iter().all(|&d| d == eps));
        let half = LevelSet::new(m.clone(), {
            let mut phi = vec![1.0; m.node_count()];
            let t = m.triangles()[0];
            phi[t[0]] = 0.0;
            phi[t[1]] = -1.0;
            phi[t[2]] = 1.0;
            phi
        })
        .unwrap();
        assert!((density_from_levelset(&half, eps)[0] - (1.0 + eps) / 2.0).abs() < 1e-15);
    }
}
